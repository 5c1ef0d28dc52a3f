//! Effective Hamiltonians for nonlinear quantum-optical models.
//!
//! The crate builds exact finite matrix representations of two model
//! families and derives approximately diagonal (or resonant-block diagonal)
//! effective Hamiltonians for them by small unitary rotations:
//!
//! * polynomially deformed su(2) models `H = Δ X₃ + g (X₊ + X₋)`
//!   ([`deformed`]), with closed-form effective series and eigenstate
//!   corrections;
//! * cascade `N`-level atoms coupled to a single field mode ([`multilevel`]),
//!   with the coupling-constant ladder and the closed-form two- and
//!   three-photon effective Hamiltonians.
//!
//! Everything is validated against exact diagonalization inside finite
//! sectors of the conserved excitation number ([`basis`]), using a numerical
//! small-rotation engine ([`lie_transform`]) and time evolution
//! ([`dynamics`]). [`cli`] holds the configuration-driven front end.

// Pair loops follow the (i, j) indices of the formulas, and `!(x > 0.0)`
// is used on purpose so that NaN is rejected.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod deformed;
pub mod dynamics;
pub mod error;
pub mod lie_transform;
pub mod multilevel;
pub mod operator;

pub use basis::{BasisState, Excitation, FullBasis, SectorBasis, Space};
pub use error::{Error, Result};
pub use operator::{BasisTag, EigenDecomposition, Operator};
