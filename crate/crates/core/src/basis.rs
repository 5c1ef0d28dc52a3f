//! Product basis `|n⟩ ⊗ |m₁ … m_N⟩` and its decomposition into sectors of the
//! conserved excitation number
//!
//! ```text
//! N̂ = a†a + Σ_{j=1}^{N-1} μ_j S_z^{j,j+1},   μ_j = j (N - j)
//! ```
//!
//! Atoms are identical, so the atomic part is the symmetric irrep labelled by
//! level occupations summing to the atom number `A`. Eigenvalues of `N̂` are
//! half-integers and are stored exactly as doubled integers.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::operator::BasisTag;

/// Exact eigenvalue of the excitation-number operator, stored doubled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Excitation(i64);

impl Excitation {
    pub fn from_twice(twice: i64) -> Self {
        Excitation(twice)
    }

    /// Converts a decimal value; only integers and half-integers are accepted.
    pub fn from_f64(value: f64) -> Result<Self> {
        let twice = 2.0 * value;
        if !twice.is_finite() || (twice - twice.round()).abs() > 1e-9 {
            return Err(Error::Basis(format!(
                "excitation {value} is not a multiple of 1/2"
            )));
        }
        Ok(Excitation(twice.round() as i64))
    }

    pub fn twice(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// Excitation of the ground configuration: no photons, every atom in level 1.
    pub fn minimum(levels: usize, atoms: usize) -> Self {
        Excitation(-((atoms * (levels - 1)) as i64))
    }

    pub fn succ(self) -> Self {
        Excitation(self.0 + 2)
    }
}

impl fmt::Display for Excitation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState {
    pub photons: usize,
    pub occupations: Vec<usize>,
}

impl BasisState {
    pub fn new(photons: usize, occupations: Vec<usize>) -> Self {
        BasisState {
            photons,
            occupations,
        }
    }

    /// `n` photons with all `atoms` in `level` (1-based).
    pub fn uniform(photons: usize, levels: usize, atoms: usize, level: usize) -> Self {
        let mut occupations = vec![0; levels];
        occupations[level - 1] = atoms;
        BasisState {
            photons,
            occupations,
        }
    }

    pub fn levels(&self) -> usize {
        self.occupations.len()
    }

    pub fn atoms(&self) -> usize {
        self.occupations.iter().sum()
    }

    /// Occupation of 1-based `level`.
    pub fn occupation(&self, level: usize) -> usize {
        self.occupations[level - 1]
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}; ", self.photons)?;
        for (k, m) in self.occupations.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "⟩")
    }
}

/// `N̂` eigenvalue of `state` for an `levels`-level atom:
/// `n + Σ_j μ_j (m_{j+1} − m_j)/2`, which equals `n + Σ_k (k−1) m_k − A(N−1)/2`.
pub fn excitation_number(state: &BasisState, levels: usize) -> Result<Excitation> {
    if state.occupations.len() != levels {
        return Err(Error::Basis(format!(
            "state has {} occupation slots, expected {levels}",
            state.occupations.len()
        )));
    }
    let n = levels as i64;
    let atomic: i64 = state
        .occupations
        .iter()
        .enumerate()
        .map(|(k, &m)| m as i64 * (2 * k as i64 - (n - 1)))
        .sum();
    Ok(Excitation(2 * state.photons as i64 + atomic))
}

/// A finite collection of labelled product states with a position index.
///
/// Operators are built over any `Space`; the ladder actions in
/// [`crate::operator`] drop images that fall outside the space.
pub trait Space {
    fn levels(&self) -> usize;
    fn atoms(&self) -> usize;
    fn states(&self) -> &[BasisState];
    fn index_of(&self, state: &BasisState) -> Option<usize>;
    fn tag(&self) -> BasisTag;

    fn dim(&self) -> usize {
        self.states().len()
    }
}

fn index_states(states: &[BasisState]) -> HashMap<BasisState, usize> {
    states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect()
}

/// All compositions of `atoms` into `levels` parts, lexicographically descending.
fn compositions(atoms: usize, levels: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=left).rev() {
            prefix.push(first);
            rec(left - first, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(atoms, levels, &mut Vec::with_capacity(levels), &mut out);
    out
}

/// Number of atomic configurations, `C(A + N − 1, N − 1)`.
pub fn atomic_dimension(levels: usize, atoms: usize) -> usize {
    let (mut num, mut den) = (1usize, 1usize);
    for k in 1..levels {
        num *= atoms + k;
        den *= k;
    }
    num / den
}

/// States sharing one eigenvalue of `N̂`.
///
/// Ordering is by descending photon number (the ground atomic configuration
/// first), ties broken by descending occupation vectors.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    levels: usize,
    atoms: usize,
    excitation: Excitation,
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
}

impl SectorBasis {
    pub fn excitation(&self) -> Excitation {
        self.excitation
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

impl Space for SectorBasis {
    fn levels(&self) -> usize {
        self.levels
    }
    fn atoms(&self) -> usize {
        self.atoms
    }
    fn states(&self) -> &[BasisState] {
        &self.states
    }
    fn index_of(&self, state: &BasisState) -> Option<usize> {
        self.index.get(state).copied()
    }
    fn tag(&self) -> BasisTag {
        BasisTag::Sector {
            levels: self.levels,
            atoms: self.atoms,
            excitation: self.excitation,
        }
    }
}

fn check_model_size(levels: usize, atoms: usize) -> Result<()> {
    if levels < 2 {
        return Err(Error::Basis(format!(
            "need at least 2 levels, got {levels}"
        )));
    }
    if atoms < 1 {
        return Err(Error::Basis("need at least one atom".into()));
    }
    Ok(())
}

pub fn build_sector(levels: usize, atoms: usize, excitation: Excitation) -> Result<SectorBasis> {
    check_model_size(levels, atoms)?;
    // 2n = 2N̂ − Σ_k m_k (2k − (N−1)), k 0-based
    let mut states: Vec<BasisState> = compositions(atoms, levels)
        .into_iter()
        .filter_map(|occ| {
            let atomic: i64 = occ
                .iter()
                .enumerate()
                .map(|(k, &m)| m as i64 * (2 * k as i64 - (levels as i64 - 1)))
                .sum();
            let twice_n = excitation.twice() - atomic;
            (twice_n >= 0 && twice_n % 2 == 0).then(|| BasisState::new((twice_n / 2) as usize, occ))
        })
        .collect();
    states.sort_by(|a, b| {
        b.photons
            .cmp(&a.photons)
            .then_with(|| b.occupations.cmp(&a.occupations))
    });
    let index = index_states(&states);
    Ok(SectorBasis {
        levels,
        atoms,
        excitation,
        states,
        index,
    })
}

/// Sector containing `state`.
pub fn sector_of(state: &BasisState) -> Result<SectorBasis> {
    let levels = state.levels();
    build_sector(levels, state.atoms(), excitation_number(state, levels)?)
}

/// Every sector from the ground sector up to `max_excitation`, concatenated.
#[derive(Debug, Clone)]
pub struct FullBasis {
    levels: usize,
    atoms: usize,
    max_excitation: Excitation,
    sectors: Vec<SectorBasis>,
    offsets: Vec<usize>,
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
}

impl FullBasis {
    pub fn sectors(&self) -> &[SectorBasis] {
        &self.sectors
    }

    pub fn max_excitation(&self) -> Excitation {
        self.max_excitation
    }

    pub fn total_states(&self) -> usize {
        self.states.len()
    }

    /// Position of the first state of sector `k` in the concatenated basis.
    pub fn offset(&self, sector: usize) -> usize {
        self.offsets[sector]
    }

    pub fn sector_range(&self, sector: usize) -> std::ops::Range<usize> {
        let start = self.offsets[sector];
        start..start + self.sectors[sector].len()
    }
}

impl Space for FullBasis {
    fn levels(&self) -> usize {
        self.levels
    }
    fn atoms(&self) -> usize {
        self.atoms
    }
    fn states(&self) -> &[BasisState] {
        &self.states
    }
    fn index_of(&self, state: &BasisState) -> Option<usize> {
        self.index.get(state).copied()
    }
    fn tag(&self) -> BasisTag {
        BasisTag::Full {
            levels: self.levels,
            atoms: self.atoms,
            max_excitation: self.max_excitation,
        }
    }
}

pub fn build_full_basis(
    levels: usize,
    atoms: usize,
    max_excitation: Excitation,
) -> Result<FullBasis> {
    check_model_size(levels, atoms)?;
    let minimum = Excitation::minimum(levels, atoms);
    if max_excitation < minimum {
        return Err(Error::EmptyBasis {
            cutoff: max_excitation.to_string(),
            minimum: minimum.to_string(),
        });
    }
    let mut sectors = Vec::new();
    let mut offsets = Vec::new();
    let mut states = Vec::new();
    let mut current = minimum;
    while current <= max_excitation {
        let sector = build_sector(levels, atoms, current)?;
        offsets.push(states.len());
        states.extend(sector.states().iter().cloned());
        sectors.push(sector);
        current = current.succ();
    }
    let index = index_states(&states);
    Ok(FullBasis {
        levels,
        atoms,
        max_excitation,
        sectors,
        offsets,
        states,
        index,
    })
}

/// All atomic configurations at a fixed photon number.
///
/// This space is closed under every `S^{ij}`, which makes it the natural
/// place to check the u(N) commutation rules (an excitation sector is not
/// closed under a bare atomic transition).
#[derive(Debug, Clone)]
pub struct AtomicBasis {
    levels: usize,
    atoms: usize,
    photons: usize,
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
}

impl AtomicBasis {
    pub fn new(levels: usize, atoms: usize, photons: usize) -> Result<Self> {
        check_model_size(levels, atoms)?;
        let states: Vec<BasisState> = compositions(atoms, levels)
            .into_iter()
            .map(|occ| BasisState::new(photons, occ))
            .collect();
        let index = index_states(&states);
        Ok(AtomicBasis {
            levels,
            atoms,
            photons,
            states,
            index,
        })
    }

    pub fn photons(&self) -> usize {
        self.photons
    }
}

impl Space for AtomicBasis {
    fn levels(&self) -> usize {
        self.levels
    }
    fn atoms(&self) -> usize {
        self.atoms
    }
    fn states(&self) -> &[BasisState] {
        &self.states
    }
    fn index_of(&self, state: &BasisState) -> Option<usize> {
        self.index.get(state).copied()
    }
    fn tag(&self) -> BasisTag {
        BasisTag::Atomic {
            levels: self.levels,
            atoms: self.atoms,
            photons: self.photons,
        }
    }
}
