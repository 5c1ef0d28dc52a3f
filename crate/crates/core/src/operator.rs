//! Dense complex operators over a labelled basis.
//!
//! Every [`Operator`] carries the [`BasisTag`] of the space it acts on;
//! arithmetic between operators on different spaces is a bug and panics,
//! while the checked entry points (`commutator`, `conjugate`, ...) return
//! [`Error::BasisMismatch`].

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::basis::{BasisState, Excitation, Space};
use crate::error::{Error, Result};

pub type Matrix = DMatrix<Complex64>;
pub type StateVector = DVector<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative tolerance for Hermiticity, unitarity and anti-Hermiticity checks.
pub const STRUCTURE_TOL: f64 = 1e-10;
/// Absolute floor for the same checks on near-zero matrices.
pub const STRUCTURE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BasisTag {
    Sector {
        levels: usize,
        atoms: usize,
        excitation: Excitation,
    },
    Full {
        levels: usize,
        atoms: usize,
        max_excitation: Excitation,
    },
    Atomic {
        levels: usize,
        atoms: usize,
        photons: usize,
    },
    /// Lowest-weight module of a deformed su(2); `m0` stored as raw bits.
    Module { m0_bits: u64, dim: usize },
    /// Anonymous space of the given dimension.
    Plain { dim: usize },
}

impl BasisTag {
    pub fn module(m0: f64, dim: usize) -> Self {
        BasisTag::Module {
            m0_bits: m0.to_bits(),
            dim,
        }
    }
}

#[derive(Clone, PartialEq)]
pub struct Operator {
    matrix: Matrix,
    tag: BasisTag,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator({:?}){}", self.tag, self.matrix)
    }
}

impl Operator {
    pub fn new(matrix: Matrix, tag: BasisTag) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Operator(format!(
                "matrix is {}x{}, expected square",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Operator { matrix, tag })
    }

    /// Wraps a square matrix in an anonymous basis.
    pub fn plain(matrix: Matrix) -> Result<Self> {
        let dim = matrix.nrows();
        Operator::new(matrix, BasisTag::Plain { dim })
    }

    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Operator(
                "entry count does not match dimension".into(),
            ));
        }
        Operator::plain(DMatrix::from_fn(dim, dim, |r, c| {
            Complex64::new(entries[r * dim + c], 0.0)
        }))
    }

    pub fn zeros(dim: usize, tag: BasisTag) -> Self {
        Operator {
            matrix: Matrix::zeros(dim, dim),
            tag,
        }
    }

    pub fn identity(dim: usize, tag: BasisTag) -> Self {
        Operator {
            matrix: Matrix::identity(dim, dim),
            tag,
        }
    }

    pub fn from_diagonal(values: &[f64], tag: BasisTag) -> Self {
        let n = values.len();
        let mut matrix = Matrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            matrix[(i, i)] = Complex64::new(v, 0.0);
        }
        Operator { matrix, tag }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn tag(&self) -> &BasisTag {
        &self.tag
    }

    pub fn retag(mut self, tag: BasisTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[(row, col)]
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            matrix: self.matrix.adjoint(),
            tag: self.tag.clone(),
        }
    }

    pub fn scale(&self, factor: f64) -> Operator {
        Operator {
            matrix: &self.matrix * Complex64::new(factor, 0.0),
            tag: self.tag.clone(),
        }
    }

    pub fn scale_complex(&self, factor: Complex64) -> Operator {
        Operator {
            matrix: &self.matrix * factor,
            tag: self.tag.clone(),
        }
    }

    /// Real parts of the diagonal.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// `(X + X†)/2`.
    pub fn hermitian_part(&self) -> Operator {
        Operator {
            matrix: (&self.matrix + self.matrix.adjoint()).scale(0.5),
            tag: self.tag.clone(),
        }
    }

    pub fn diagonal_part(&self) -> Operator {
        let mut out = Operator::zeros(self.dim(), self.tag.clone());
        for i in 0..self.dim() {
            out.matrix[(i, i)] = self.matrix[(i, i)];
        }
        out
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        offdiag_norm(self, &[], 0.0) <= tol
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Keeps rows and columns in `keep`, zeroing the rest.
    pub fn project(&self, keep: &[bool]) -> Operator {
        let mut out = self.clone();
        for r in 0..self.dim() {
            for c in 0..self.dim() {
                if !(keep[r] && keep[c]) {
                    out.matrix[(r, c)] = ZERO;
                }
            }
        }
        out
    }

    /// Principal submatrix on `indices`, in an anonymous basis.
    pub fn submatrix(&self, indices: &[usize]) -> Operator {
        let n = indices.len();
        let matrix = DMatrix::from_fn(n, n, |r, c| self.matrix[(indices[r], indices[c])]);
        Operator {
            matrix,
            tag: BasisTag::Plain { dim: n },
        }
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        &self.matrix * v
    }

    /// Relative Hermiticity residual `‖H − H†‖ / ‖H‖` (absolute when `‖H‖` is tiny).
    pub fn hermiticity_residual(&self) -> f64 {
        relative(&(&self.matrix - self.matrix.adjoint()), &self.matrix)
    }

    pub fn anti_hermiticity_residual(&self) -> f64 {
        relative(&(&self.matrix + self.matrix.adjoint()), &self.matrix)
    }

    pub fn unitarity_residual(&self) -> f64 {
        let n = self.dim();
        (self.matrix.adjoint() * &self.matrix - Matrix::identity(n, n)).norm()
    }

    fn check_same(&self, other: &Operator) -> Result<()> {
        if self.tag != other.tag || self.dim() != other.dim() {
            return Err(Error::BasisMismatch {
                left: self.tag.clone(),
                right: other.tag.clone(),
            });
        }
        Ok(())
    }

    fn assert_same(&self, other: &Operator) {
        if let Err(e) = self.check_same(other) {
            panic!("{e}");
        }
    }

    pub fn try_add(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        Ok(self + other)
    }

    pub fn try_mul(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        Ok(self * other)
    }
}

fn relative(diff: &Matrix, reference: &Matrix) -> f64 {
    let d = diff.norm();
    let r = reference.norm();
    if r < STRUCTURE_FLOOR {
        d
    } else {
        d / r
    }
}

fn passes(diff: &Matrix, reference: &Matrix) -> bool {
    diff.norm() <= (STRUCTURE_TOL * reference.norm()).max(STRUCTURE_FLOOR)
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        self.assert_same(rhs);
        Operator {
            matrix: &self.matrix + &rhs.matrix,
            tag: self.tag.clone(),
        }
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        self.assert_same(rhs);
        Operator {
            matrix: &self.matrix - &rhs.matrix,
            tag: self.tag.clone(),
        }
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        self.assert_same(rhs);
        Operator {
            matrix: &self.matrix * &rhs.matrix,
            tag: self.tag.clone(),
        }
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        &self + &rhs
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        &self - &rhs
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        &self * &rhs
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(-1.0)
    }
}

// ---------------------------------------------------------------------------
// Ladder actions on product states
// ---------------------------------------------------------------------------

/// Elementary action on a product state; levels are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    /// Field annihilation `a`.
    Annihilate,
    /// Field creation `a†`.
    Create,
    /// `S^{to,from}`: moves one atom from level `from` into level `to`.
    Transition { to: usize, from: usize },
}

impl Ladder {
    fn act(self, state: &mut BasisState) -> Option<f64> {
        match self {
            Ladder::Annihilate => {
                if state.photons == 0 {
                    return None;
                }
                let amp = (state.photons as f64).sqrt();
                state.photons -= 1;
                Some(amp)
            }
            Ladder::Create => {
                state.photons += 1;
                Some((state.photons as f64).sqrt())
            }
            Ladder::Transition { to, from } => {
                let (i, j) = (to - 1, from - 1);
                if i == j {
                    return (state.occupations[i] > 0).then_some(state.occupations[i] as f64);
                }
                let mj = state.occupations[j];
                if mj == 0 {
                    return None;
                }
                let mi = state.occupations[i];
                state.occupations[j] -= 1;
                state.occupations[i] += 1;
                Some(((mi + 1) as f64 * mj as f64).sqrt())
            }
        }
    }
}

/// Applies a product of ladder actions written left to right (the rightmost
/// factor acts first). Returns `None` when the result vanishes.
pub fn apply_word(word: &[Ladder], state: &BasisState) -> Option<(BasisState, f64)> {
    let mut out = state.clone();
    let mut amp = 1.0;
    for step in word.iter().rev() {
        amp *= step.act(&mut out)?;
    }
    Some((out, amp))
}

/// Matrix of a ladder word on `space`; images outside the space are dropped.
pub fn word_operator<S: Space + ?Sized>(space: &S, word: &[Ladder]) -> Result<Operator> {
    for step in word {
        if let Ladder::Transition { to, from } = *step {
            check_level(space.levels(), to)?;
            check_level(space.levels(), from)?;
        }
    }
    let n = space.dim();
    let mut matrix = Matrix::zeros(n, n);
    for (col, state) in space.states().iter().enumerate() {
        if let Some((image, amp)) = apply_word(word, state) {
            if let Some(row) = space.index_of(&image) {
                matrix[(row, col)] += Complex64::new(amp, 0.0);
            }
        }
    }
    Ok(Operator {
        matrix,
        tag: space.tag(),
    })
}

/// Diagonal operator with entries `f(state)`.
pub fn diagonal_operator<S: Space + ?Sized>(space: &S, f: impl Fn(&BasisState) -> f64) -> Operator {
    let values: Vec<f64> = space.states().iter().map(f).collect();
    Operator::from_diagonal(&values, space.tag())
}

fn check_level(levels: usize, level: usize) -> Result<()> {
    if level == 0 || level > levels {
        return Err(Error::Operator(format!(
            "level index {level} outside 1..={levels}"
        )));
    }
    Ok(())
}

pub fn annihilation_op<S: Space + ?Sized>(space: &S) -> Operator {
    word_operator(space, &[Ladder::Annihilate]).expect("no level indices")
}

pub fn creation_op<S: Space + ?Sized>(space: &S) -> Operator {
    word_operator(space, &[Ladder::Create]).expect("no level indices")
}

/// `a†a`, diagonal with the photon number of each state.
pub fn number_op<S: Space + ?Sized>(space: &S) -> Operator {
    diagonal_operator(space, |s| s.photons as f64)
}

/// Collective `S^{ij}` in the symmetric representation: moves one atom from
/// level `j` to level `i` with amplitude `√((m_i+1) m_j)`; `S^{ii}` is the
/// population of level `i`.
pub fn transition_op<S: Space + ?Sized>(space: &S, i: usize, j: usize) -> Result<Operator> {
    word_operator(space, &[Ladder::Transition { to: i, from: j }])
}

/// `S₊^{ij}` for `i < j`: promotes one atom from level `i` to level `j`.
pub fn raising_op<S: Space + ?Sized>(space: &S, i: usize, j: usize) -> Result<Operator> {
    if i >= j {
        return Err(Error::Operator(format!("raising S+^({i},{j}) needs i < j")));
    }
    transition_op(space, j, i)
}

/// `S_z^{j,j+1} = (S^{j+1,j+1} − S^{jj}) / 2`.
pub fn inversion_op<S: Space + ?Sized>(space: &S, j: usize) -> Result<Operator> {
    check_level(space.levels(), j)?;
    check_level(space.levels(), j + 1)?;
    Ok(diagonal_operator(space, |s| {
        (s.occupation(j + 1) as f64 - s.occupation(j) as f64) / 2.0
    }))
}

/// `N̂ = a†a + Σ_j μ_j S_z^{j,j+1}` as a diagonal operator.
pub fn excitation_op<S: Space + ?Sized>(space: &S) -> Operator {
    let levels = space.levels();
    diagonal_operator(space, |s| {
        crate::basis::excitation_number(s, levels)
            .expect("state matches space")
            .value()
    })
}

// ---------------------------------------------------------------------------
// Algebra
// ---------------------------------------------------------------------------

pub fn commutator(x: &Operator, y: &Operator) -> Result<Operator> {
    x.check_same(y)?;
    Ok(Operator {
        matrix: &x.matrix * &y.matrix - &y.matrix * &x.matrix,
        tag: x.tag.clone(),
    })
}

pub fn anticommutator(x: &Operator, y: &Operator) -> Result<Operator> {
    x.check_same(y)?;
    Ok(Operator {
        matrix: &x.matrix * &y.matrix + &y.matrix * &x.matrix,
        tag: x.tag.clone(),
    })
}

pub fn frobenius_norm(x: &Operator) -> f64 {
    x.matrix.norm()
}

/// Frobenius norm of `x` after removing the entries that count as diagonal:
/// `(m, n)` is kept out of the norm when `|E_m − E_n| ≤ resonance_tol`, i.e.
/// when both indices belong to one degenerate block of the reference energies.
/// With an empty reference only the literal diagonal is removed.
pub fn offdiag_norm(x: &Operator, reference: &[f64], resonance_tol: f64) -> f64 {
    let n = x.dim();
    let mut sum = 0.0;
    for r in 0..n {
        for c in 0..n {
            let diagonal = if reference.is_empty() {
                r == c
            } else {
                (reference[r] - reference[c]).abs() <= resonance_tol
            };
            if !diagonal {
                sum += x.matrix[(r, c)].norm_sqr();
            }
        }
    }
    sum.sqrt()
}

// ---------------------------------------------------------------------------
// Hermitian eigensolver (cyclic complex Jacobi)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors.
    pub eigenvectors: Matrix,
    pub tag: BasisTag,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, k: usize) -> StateVector {
        self.eigenvectors.column(k).into_owned()
    }

    /// `Q f(Λ) Q†`.
    pub fn map(&self, f: impl Fn(f64) -> Complex64) -> Operator {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for k in 0..n {
            let fk = f(self.eigenvalues[k]);
            scaled.column_mut(k).scale_mut_complex(fk);
        }
        Operator {
            matrix: scaled * self.eigenvectors.adjoint(),
            tag: self.tag.clone(),
        }
    }

    pub fn reconstruct(&self) -> Operator {
        self.map(|x| Complex64::new(x, 0.0))
    }

    /// `exp(−i H t) v`.
    pub fn propagate(&self, v: &StateVector, t: f64) -> StateVector {
        let mut coeffs = self.eigenvectors.adjoint() * v;
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= Complex64::from_polar(1.0, -self.eigenvalues[k] * t);
        }
        &self.eigenvectors * coeffs
    }
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, factor: Complex64);
}

impl<S> ScaleComplex for nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<Complex64, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_complex(&mut self, factor: Complex64) {
        for z in self.iter_mut() {
            *z *= factor;
        }
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
///
/// Each rotation first removes the phase of `a_pq` with a diagonal unitary and
/// then applies the real symmetric Jacobi rotation. Sweeps stop once the
/// off-diagonal Frobenius norm drops below `1e-12` relative to the norm of the
/// input (or hits exact zero).
pub fn jacobi_eigh(input: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = input.nrows();
    let mut a = input.clone();
    let mut v = Matrix::identity(n, n);
    let scale = input.norm();
    let threshold = 1e-12 * scale.max(f64::MIN_POSITIVE);

    let off = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    s += a[(r, c)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    // sweeps run after the threshold is met; convergence is quadratic, so
    // two more push the residual to rounding level
    let mut polish = 0;
    loop {
        let current = off(&a);
        if current == 0.0 {
            break;
        }
        if current <= threshold {
            if polish == 2 {
                break;
            }
            polish += 1;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            if current <= threshold {
                break;
            }
            return Err(Error::NoConvergence {
                sweeps,
                offdiag: current,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r == 0.0 || r < 1e-300 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // skip rotations that cannot change the diagonal in floating point
                if sweeps > 4 && r * 1e17 < app.abs().min(aqq.abs()) {
                    a[(p, q)] = ZERO;
                    a[(q, p)] = ZERO;
                    continue;
                }
                let phase = apq / r; // e^{iφ}
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // G = diag(1, e^{-iφ}) · [[c, s], [-s, c]]
                let g_pp = Complex64::new(c, 0.0);
                let g_pq = Complex64::new(s, 0.0);
                let g_qp = -phase.conj() * s;
                let g_qq = phase.conj() * c;
                // A ← A G
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * g_pp + akq * g_qp;
                    a[(k, q)] = akp * g_pq + akq * g_qq;
                }
                // A ← G† A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
                // V ← V G
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * g_pp + vkq * g_qp;
                    v[(k, q)] = vkp * g_pq + vkq * g_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let eigenvalues = order.iter().map(|&k| a[(k, k)].re).collect();
    let eigenvectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((eigenvalues, eigenvectors))
}

pub fn hermitian_eig(h: &Operator) -> Result<EigenDecomposition> {
    let diff = &h.matrix - h.matrix.adjoint();
    if !passes(&diff, &h.matrix) {
        return Err(Error::NotHermitian {
            what: "Hermiticity",
            residual: h.hermiticity_residual(),
        });
    }
    // symmetrize away rounding-level asymmetry before rotating
    let sym = (&h.matrix + h.matrix.adjoint()) * Complex64::new(0.5, 0.0);
    let (eigenvalues, eigenvectors) = jacobi_eigh(&sym)?;
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
        tag: h.tag.clone(),
    })
}

/// `exp(T)` for anti-Hermitian `T`, through the eigendecomposition of the
/// Hermitian `iT`: `exp(T) = Q exp(−iΛ) Q†`.
pub fn expm_antihermitian(t: &Operator) -> Result<Operator> {
    let sum = &t.matrix + t.matrix.adjoint();
    if !passes(&sum, &t.matrix) {
        return Err(Error::NotHermitian {
            what: "anti-Hermiticity",
            residual: t.anti_hermiticity_residual(),
        });
    }
    let h = Operator {
        matrix: &t.matrix * Complex64::new(0.0, 1.0),
        tag: t.tag.clone(),
    };
    let eig = hermitian_eig(&h)?;
    Ok(eig.map(|lambda| Complex64::from_polar(1.0, -lambda)))
}

/// `U H U†`; `U` must be unitary.
pub fn conjugate(u: &Operator, h: &Operator) -> Result<Operator> {
    u.check_same(h)?;
    let n = u.dim();
    let residual = u.unitarity_residual();
    if residual > (STRUCTURE_TOL * (n as f64).sqrt()).max(STRUCTURE_FLOOR) {
        return Err(Error::Operator(format!(
            "conjugation by a non-unitary matrix (‖U†U − I‖ = {residual:.3e})"
        )));
    }
    Ok(Operator {
        matrix: &u.matrix * &h.matrix * u.matrix.adjoint(),
        tag: h.tag.clone(),
    })
}

/// Basis vector `|k⟩` of dimension `dim`.
pub fn unit_vector(dim: usize, k: usize) -> StateVector {
    let mut v = StateVector::zeros(dim);
    v[k] = ONE;
    v
}
