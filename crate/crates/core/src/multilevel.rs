//! Cascade `N`-level atoms coupled to one field mode.
//!
//! ```text
//! H = ω_f a†a + Σ_j ω_j S^{jj} + Σ_j g_j (a S₊^{j,j+1} + a† S₋^{j,j+1})
//! ```
//!
//! with detunings `Δ_j = ω_j − ω₁ − (j−1) ω_f`. In each excitation sector
//! `H = const + H_int`, `H_int = h₀ + V`, `h₀ = Σ_j Δ_j S^{jj}`.
//!
//! Coupling constants, indices 1-based in the formulas and 0-based in the
//! returned vectors:
//!
//! ```text
//! α_j⁽¹⁾ = g_j / (Δ_{j+1} − Δ_j)
//! ψ_j⁽¹⁾ = g_j,   ψ_j⁽ᵏ⁺¹⁾ = α_{j+k}⁽¹⁾ ψ_j⁽ᵏ⁾ − α_j⁽¹⁾ ψ_{j+1}⁽ᵏ⁾,   j = 1..N−k
//! α_j⁽²⁾ = ψ_j⁽²⁾ / (Δ_{j+2} − Δ_j)
//! β_ij  = α_i⁽¹⁾ g_j / (Δ_{i+1} − Δ_i + Δ_j − Δ_{j+1}),   i ≠ j
//! ```

use crate::basis::{build_full_basis, BasisState, Excitation, FullBasis, Space};
use crate::error::{Error, Result};
use crate::lie_transform::{iterate, IterateOptions, TransformReport};
use crate::operator::{diagonal_operator, hermitian_eig, word_operator, Ladder, Operator};

/// Relative tolerance for "Δ equals zero" checks.
pub const DETUNING_REL_TOL: f64 = 1e-9;

/// Thresholds on `|α|`: warn above `warn`, refuse above `error`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smallness {
    pub warn: f64,
    pub error: f64,
}

impl Default for Smallness {
    fn default() -> Self {
        Smallness {
            warn: 0.2,
            error: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frequencies {
    pub omega_f: f64,
    /// `ω₁ … ω_N`
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModelSpec {
    levels: usize,
    atoms: usize,
    /// `g₁ … g_{N−1}`
    g: Vec<f64>,
    /// `Δ₁ … Δ_N`, `Δ₁ = 0`
    detunings: Vec<f64>,
    frequencies: Option<Frequencies>,
    pub max_excitation: Option<Excitation>,
    pub smallness: Smallness,
}

fn check_sizes(levels: usize, atoms: usize, g: &[f64]) -> Result<()> {
    if levels < 2 || atoms < 1 {
        return Err(Error::Model(format!(
            "need at least 2 levels and 1 atom, got N = {levels}, A = {atoms}"
        )));
    }
    if g.len() != levels - 1 {
        return Err(Error::Model(format!(
            "expected {} couplings for {levels} levels, got {}",
            levels - 1,
            g.len()
        )));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Model("couplings must be finite".into()));
    }
    Ok(())
}

/// `Δ_j = ω_j − ω₁ − (j−1) ω_f`.
pub fn detunings_from_frequencies(omega_f: f64, omega: &[f64]) -> Vec<f64> {
    omega
        .iter()
        .enumerate()
        .map(|(k, w)| w - omega[0] - k as f64 * omega_f)
        .collect()
}

impl CascadeModelSpec {
    pub fn from_detunings(
        levels: usize,
        atoms: usize,
        g: Vec<f64>,
        detunings: Vec<f64>,
    ) -> Result<Self> {
        check_sizes(levels, atoms, &g)?;
        if detunings.len() != levels {
            return Err(Error::Model(format!(
                "expected {levels} detunings, got {}",
                detunings.len()
            )));
        }
        if detunings.iter().any(|x| !x.is_finite()) {
            return Err(Error::Model("detunings must be finite".into()));
        }
        if detunings[0] != 0.0 {
            return Err(Error::Model(format!(
                "Δ₁ must be 0 (detunings are measured from level 1), got {}",
                detunings[0]
            )));
        }
        Ok(CascadeModelSpec {
            levels,
            atoms,
            g,
            detunings,
            frequencies: None,
            max_excitation: None,
            smallness: Smallness::default(),
        })
    }

    pub fn from_frequencies(
        levels: usize,
        atoms: usize,
        g: Vec<f64>,
        omega_f: f64,
        omega: Vec<f64>,
    ) -> Result<Self> {
        check_sizes(levels, atoms, &g)?;
        if omega.len() != levels {
            return Err(Error::Model(format!(
                "expected {levels} level frequencies, got {}",
                omega.len()
            )));
        }
        if !omega_f.is_finite() || omega.iter().any(|x| !x.is_finite()) {
            return Err(Error::Model("frequencies must be finite".into()));
        }
        if let Some(k) = omega.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Model(format!(
                "cascade ordering needs ω_{} < ω_{}",
                k + 1,
                k + 2
            )));
        }
        let detunings = detunings_from_frequencies(omega_f, &omega);
        Ok(CascadeModelSpec {
            levels,
            atoms,
            g,
            detunings,
            frequencies: Some(Frequencies { omega_f, omega }),
            max_excitation: None,
            smallness: Smallness::default(),
        })
    }

    pub fn with_max_excitation(mut self, max: Excitation) -> Self {
        self.max_excitation = Some(max);
        self
    }

    pub fn with_smallness(mut self, smallness: Smallness) -> Self {
        self.smallness = smallness;
        self
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    pub fn frequencies(&self) -> Option<&Frequencies> {
        self.frequencies.as_ref()
    }

    /// `ω = (ω_N + ω₁)/2`.
    pub fn mean_frequency(&self) -> Option<f64> {
        self.frequencies
            .as_ref()
            .map(|f| 0.5 * (f.omega[0] + f.omega[self.levels - 1]))
    }

    /// Same model with couplings and detunings multiplied by `g_scale` and
    /// `detuning_scale`. Frequencies are dropped.
    pub fn scaled(&self, g_scale: f64, detuning_scale: f64) -> Result<Self> {
        let mut out = CascadeModelSpec::from_detunings(
            self.levels,
            self.atoms,
            self.g.iter().map(|x| x * g_scale).collect(),
            self.detunings.iter().map(|x| x * detuning_scale).collect(),
        )?;
        out.max_excitation = self.max_excitation;
        out.smallness = self.smallness;
        Ok(out)
    }

    fn detuning_scale(&self) -> f64 {
        let base = self
            .detunings
            .iter()
            .fold(0.0, |acc: f64, x| acc.max(x.abs()));
        let field = self.frequencies.as_ref().map_or(0.0, |f| f.omega_f.abs());
        base.max(field).max(f64::MIN_POSITIVE)
    }

    fn is_zero(&self, x: f64) -> bool {
        x.abs() <= DETUNING_REL_TOL * self.detuning_scale()
    }

    /// `Δ_N = 0`: the field is in `(N−1)`-photon resonance.
    pub fn require_resonance(&self) -> Result<()> {
        let last = self.detunings[self.levels - 1];
        if !self.is_zero(last) {
            return Err(Error::Model(format!(
                "Δ_{} = {last} but the {}-photon resonance needs Δ_{} = 0",
                self.levels,
                self.levels - 1,
                self.levels
            )));
        }
        Ok(())
    }

    /// The full basis up to `max_excitation`.
    pub fn full_basis(&self) -> Result<FullBasis> {
        let max = self
            .max_excitation
            .ok_or_else(|| Error::Model("max_excitation not set".into()))?;
        build_full_basis(self.levels, self.atoms, max)
    }

    fn check_space<S: Space + ?Sized>(&self, space: &S) -> Result<()> {
        if space.levels() != self.levels || space.atoms() != self.atoms {
            return Err(Error::Model(format!(
                "space has N = {}, A = {} but the model has N = {}, A = {}",
                space.levels(),
                space.atoms(),
                self.levels,
                self.atoms
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Hamiltonians
// ---------------------------------------------------------------------------

fn op<S: Space + ?Sized>(space: &S, word: &[Ladder]) -> Operator {
    word_operator(space, word).expect("levels checked against the model")
}

fn plus_adjoint(x: Operator) -> Operator {
    let adj = x.adjoint();
    &x + &adj
}

fn minus_adjoint(x: Operator) -> Operator {
    let adj = x.adjoint();
    &x - &adj
}

/// `a^k S^{j+d, j}`: `k` photons absorbed while one atom climbs `d` levels.
fn k_photon<S: Space + ?Sized>(space: &S, photons: usize, from: usize, to: usize) -> Operator {
    let mut word = vec![Ladder::Annihilate; photons];
    word.push(Ladder::Transition { to, from });
    op(space, &word)
}

/// `h₀ = Σ_j Δ_j S^{jj}`.
pub fn h0<S: Space + ?Sized>(spec: &CascadeModelSpec, space: &S) -> Result<Operator> {
    spec.check_space(space)?;
    Ok(diagonal_operator(space, |s| {
        s.occupations
            .iter()
            .zip(&spec.detunings)
            .map(|(&m, d)| m as f64 * d)
            .sum()
    }))
}

/// `V = Σ_j g_j (a S₊^{j,j+1} + a† S₋^{j,j+1})`.
pub fn one_photon_coupling<S: Space + ?Sized>(
    spec: &CascadeModelSpec,
    space: &S,
) -> Result<Operator> {
    spec.check_space(space)?;
    let mut v = Operator::zeros(space.dim(), space.tag());
    for (j, &g) in spec.g.iter().enumerate() {
        if g != 0.0 {
            v = &v + &plus_adjoint(k_photon(space, 1, j + 1, j + 2)).scale(g);
        }
    }
    Ok(v)
}

/// With `include_free_part` the literal Hamiltonian
/// `ω_f a†a + Σ ω_j S^{jj} + V` (needs frequencies); otherwise `h₀ + V`.
pub fn build_hamiltonian<S: Space + ?Sized>(
    spec: &CascadeModelSpec,
    space: &S,
    include_free_part: bool,
) -> Result<Operator> {
    let v = one_photon_coupling(spec, space)?;
    let diagonal = if include_free_part {
        let f = spec
            .frequencies
            .as_ref()
            .ok_or_else(|| Error::Model("the free part needs ω_f and level frequencies".into()))?;
        diagonal_operator(space, |s| {
            f.omega_f * s.photons as f64
                + s.occupations
                    .iter()
                    .zip(&f.omega)
                    .map(|(&m, w)| m as f64 * w)
                    .sum::<f64>()
        })
    } else {
        h0(spec, space)?
    };
    Ok(&diagonal + &v)
}

/// [`build_hamiltonian`] on the spec's full basis.
pub fn build_full_h(
    spec: &CascadeModelSpec,
    basis: &FullBasis,
    include_free_part: bool,
) -> Result<Operator> {
    build_hamiltonian(spec, basis, include_free_part)
}

// ---------------------------------------------------------------------------
// Coupling constants
// ---------------------------------------------------------------------------

/// `α_j⁽¹⁾`, refusing values above the smallness error threshold.
pub fn alpha1(spec: &CascadeModelSpec) -> Result<Vec<f64>> {
    let d = &spec.detunings;
    let mut out = Vec::with_capacity(spec.levels - 1);
    for (j, &g) in spec.g.iter().enumerate() {
        let gap = d[j + 1] - d[j];
        if spec.is_zero(gap) {
            return Err(Error::Resonance {
                quantity: "α⁽¹⁾ (one-photon resonance)",
                indices: format!("j = {}", j + 1),
            });
        }
        let a = g / gap;
        if a.abs() > spec.smallness.error {
            return Err(Error::NotSmall {
                quantity: format!("α_{}⁽¹⁾", j + 1),
                value: a.abs(),
                limit: spec.smallness.error,
            });
        }
        out.push(a);
    }
    Ok(out)
}

/// `ψ⁽ᵏ⁾_j` for `k = 1..N−1`; `psi[k−1][j−1]`, row `k` has `N−k` entries.
pub fn psi_ladder(spec: &CascadeModelSpec) -> Result<Vec<Vec<f64>>> {
    let alpha = alpha1(spec)?;
    Ok(psi_from_alpha(&spec.g, &alpha))
}

fn psi_from_alpha(g: &[f64], alpha: &[f64]) -> Vec<Vec<f64>> {
    let mut ladder = vec![g.to_vec()];
    for k in 1..g.len() {
        let prev = &ladder[k - 1];
        let next: Vec<f64> = (0..prev.len() - 1)
            .map(|j| alpha[j + k] * prev[j] - alpha[j] * prev[j + 1])
            .collect();
        ladder.push(next);
    }
    ladder
}

/// `α_j⁽²⁾ = ψ_j⁽²⁾/(Δ_{j+2} − Δ_j)`, `j = 1..N−2`.
pub fn alpha2(spec: &CascadeModelSpec) -> Result<Vec<f64>> {
    let psi = psi_ladder(spec)?;
    let d = &spec.detunings;
    let Some(psi2) = psi.get(1) else {
        return Ok(Vec::new());
    };
    psi2.iter()
        .enumerate()
        .map(|(j, p)| {
            let gap = d[j + 2] - d[j];
            if spec.is_zero(gap) {
                Err(Error::Resonance {
                    quantity: "α⁽²⁾ (two-photon resonance)",
                    indices: format!("j = {}", j + 1),
                })
            } else {
                Ok(p / gap)
            }
        })
        .collect()
}

/// `β_ij`, `(N−1)×(N−1)`, `beta[i−1][j−1]`; the diagonal is left at zero.
pub fn beta(spec: &CascadeModelSpec) -> Result<Vec<Vec<f64>>> {
    let n = spec.levels - 1;
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[i][j] = beta_pair(spec, i + 1, j + 1)?;
            }
        }
    }
    Ok(out)
}

/// One `β_ij`, 1-based, `i ≠ j`.
pub fn beta_pair(spec: &CascadeModelSpec, i: usize, j: usize) -> Result<f64> {
    let n = spec.levels - 1;
    if i == j || !(1..=n).contains(&i) || !(1..=n).contains(&j) {
        return Err(Error::Model(format!("β_{i}{j} needs i ≠ j in 1..={n}")));
    }
    let alpha = alpha1(spec)?;
    let d = &spec.detunings;
    let gap = d[i] - d[i - 1] + d[j - 1] - d[j];
    if spec.is_zero(gap) {
        return Err(Error::Resonance {
            quantity: "β",
            indices: format!("(i, j) = ({i}, {j})"),
        });
    }
    Ok(alpha[i - 1] * spec.g[j - 1] / gap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLadder {
    pub alpha1: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
    /// Absent when a two-photon denominator vanishes.
    pub alpha2: Option<Vec<f64>>,
    pub beta: Option<Vec<Vec<f64>>>,
    pub warnings: Vec<String>,
}

impl CouplingLadder {
    pub fn new(spec: &CascadeModelSpec) -> Result<Self> {
        let alpha1 = alpha1(spec)?;
        let psi = psi_from_alpha(&spec.g, &alpha1);
        let warnings = alpha1
            .iter()
            .enumerate()
            .filter(|(_, a)| a.abs() > spec.smallness.warn)
            .map(|(j, a)| {
                format!(
                    "|α_{}⁽¹⁾| = {:.3} exceeds {}; the expansion may be inaccurate",
                    j + 1,
                    a.abs(),
                    spec.smallness.warn
                )
            })
            .collect();
        Ok(CouplingLadder {
            alpha1,
            psi,
            alpha2: alpha2(spec).ok(),
            beta: beta(spec).ok(),
            warnings,
        })
    }

    /// `ψ_j⁽ᵏ⁾` with 1-based `k`, `j`.
    pub fn psi(&self, k: usize, j: usize) -> f64 {
        self.psi[k - 1][j - 1]
    }

    pub fn max_alpha(&self) -> f64 {
        self.alpha1.iter().fold(0.0, |acc: f64, a| acc.max(a.abs()))
    }
}

// ---------------------------------------------------------------------------
// Generators and first-order terms
// ---------------------------------------------------------------------------

/// `T₁ = Σ_j α_j⁽¹⁾ (a S₊^{j,j+1} − a† S₋^{j,j+1})`.
pub fn t1_generator<S: Space + ?Sized>(spec: &CascadeModelSpec, space: &S) -> Result<Operator> {
    spec.check_space(space)?;
    let alpha = alpha1(spec)?;
    let mut t = Operator::zeros(space.dim(), space.tag());
    for (j, a) in alpha.iter().enumerate() {
        t = &t + &minus_adjoint(k_photon(space, 1, j + 1, j + 2)).scale(*a);
    }
    Ok(t)
}

/// `Σ_j g_j α_j⁽¹⁾ [S_z^{j,j+1}(2a†a + 1) + ½{S₊^{j,j+1}, S₋^{j,j+1}}]`,
/// diagonal in the product basis.
pub fn h_diag_first<S: Space + ?Sized>(spec: &CascadeModelSpec, space: &S) -> Result<Operator> {
    spec.check_space(space)?;
    let alpha = alpha1(spec)?;
    let weights: Vec<f64> = spec.g.iter().zip(&alpha).map(|(g, a)| g * a).collect();
    Ok(diagonal_operator(space, |s| h_diag_entry(&weights, s)))
}

fn h_diag_entry(weights: &[f64], s: &BasisState) -> f64 {
    let n = s.photons as f64;
    weights
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let lower = s.occupations[j] as f64;
            let upper = s.occupations[j + 1] as f64;
            let sz = 0.5 * (upper - lower);
            // {S₊, S₋} = m_{j+1}(m_j + 1) + m_j(m_{j+1} + 1)
            let anti = upper * (lower + 1.0) + lower * (upper + 1.0);
            w * (sz * (2.0 * n + 1.0) + 0.5 * anti)
        })
        .sum()
}

/// `½ Σ_{i≠j} α_i⁽¹⁾ g_j (S₊^{i,i+1} S₋^{j,j+1} + S₊^{j,j+1} S₋^{i,i+1})`.
pub fn h_nondiag_first<S: Space + ?Sized>(spec: &CascadeModelSpec, space: &S) -> Result<Operator> {
    spec.check_space(space)?;
    let alpha = alpha1(spec)?;
    let mut h = Operator::zeros(space.dim(), space.tag());
    let n = spec.levels - 1;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pair = atom_pair(space, i, j);
            h = &h + &pair.scale(0.5 * alpha[i] * spec.g[j]);
        }
    }
    Ok(h)
}

/// `S₊^{i,i+1} S₋^{j,j+1} + S₊^{j,j+1} S₋^{i,i+1}` with 0-based `i`, `j`.
fn atom_pair<S: Space + ?Sized>(space: &S, i: usize, j: usize) -> Operator {
    let up = |k: usize| Ladder::Transition {
        to: k + 2,
        from: k + 1,
    };
    let down = |k: usize| Ladder::Transition {
        to: k + 1,
        from: k + 2,
    };
    &op(space, &[up(i), down(j)]) + &op(space, &[up(j), down(i)])
}

/// `Σ_j ½ψ_j⁽ᵏ⁾ (a^k S₊^{j,j+k} + h.c.)` for transitions of order `k ≥ 2`,
/// scaled by `1/k` as the coefficient `ψ⁽ᵏ⁾/k` of the transformed Hamiltonian.
pub fn k_photon_terms<S: Space + ?Sized>(
    spec: &CascadeModelSpec,
    space: &S,
    k: usize,
) -> Result<Operator> {
    spec.check_space(space)?;
    if k < 1 || k >= spec.levels {
        return Err(Error::Model(format!(
            "{k}-photon transitions need 1 ≤ k ≤ {}",
            spec.levels - 1
        )));
    }
    let psi = psi_ladder(spec)?;
    let mut h = Operator::zeros(space.dim(), space.tag());
    for (j, p) in psi[k - 1].iter().enumerate() {
        h = &h + &plus_adjoint(k_photon(space, k, j + 1, j + 1 + k)).scale(p / k as f64);
    }
    Ok(h)
}

/// `T₂⁽¹⁾ = ½ Σ_j α_j⁽²⁾ (a² S₊^{j,j+2} − h.c.)` and
/// `T₂⁽²⁾ = ½ Σ_{i≠j} β_ij (S₊^{i,i+1} S₋^{j,j+1} − S₊^{j,j+1} S₋^{i,i+1})`.
pub fn t2_generators<S: Space + ?Sized>(
    spec: &CascadeModelSpec,
    space: &S,
) -> Result<(Operator, Operator)> {
    spec.check_space(space)?;
    let a2 = alpha2(spec)?;
    let b = beta(spec)?;
    let mut first = Operator::zeros(space.dim(), space.tag());
    for (j, a) in a2.iter().enumerate() {
        first = &first + &minus_adjoint(k_photon(space, 2, j + 1, j + 3)).scale(0.5 * a);
    }
    let up = |k: usize| Ladder::Transition {
        to: k + 2,
        from: k + 1,
    };
    let down = |k: usize| Ladder::Transition {
        to: k + 1,
        from: k + 2,
    };
    let mut second = Operator::zeros(space.dim(), space.tag());
    let n = spec.levels - 1;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let x = &op(space, &[up(i), down(j)]) - &op(space, &[up(j), down(i)]);
            second = &second + &x.scale(0.5 * b[i][j]);
        }
    }
    Ok((first, second))
}

/// `true` for states with every listed level (1-based) empty.
pub fn empty_levels_mask<S: Space + ?Sized>(space: &S, levels: &[usize]) -> Vec<bool> {
    space
        .states()
        .iter()
        .map(|s| levels.iter().all(|&l| s.occupation(l) == 0))
        .collect()
}

// ---------------------------------------------------------------------------
// Closed-form effective Hamiltonians
// ---------------------------------------------------------------------------

/// Two-photon effective Hamiltonian for `N = 3`, `Δ₃ = 0`.
///
/// Without the flag: `h₀ + h_diag + ½ψ₁⁽²⁾(a² S₊^{13} + h.c.)` on the whole
/// space. With the flag, on the states with level 2 empty:
///
/// ```text
/// −(g₁g₂/Δ₂)(a² S₊^{13} + h.c.)
///   − (S_z^{13} + A/2)[((g₂² − g₁²)/Δ₂) a†a + g₂²/Δ₂] − A (g₁²/Δ₂) a†a
/// ```
///
/// which is `−(g₁²/Δ₂) a†a S¹¹ − (g₂²/Δ₂)(a†a + 1) S³³` on the Stark diagonal.
pub fn effective_two_photon<S: Space + ?Sized>(
    spec: &CascadeModelSpec,
    space: &S,
    assume_level2_empty: bool,
) -> Result<Operator> {
    spec.check_space(space)?;
    if spec.levels != 3 {
        return Err(Error::Model(format!(
            "two-photon effective Hamiltonian needs N = 3, got N = {}",
            spec.levels
        )));
    }
    spec.require_resonance()?;
    let psi = psi_ladder(spec)?;
    if !assume_level2_empty {
        let coupling = plus_adjoint(k_photon(space, 2, 1, 3)).scale(0.5 * psi[1][0]);
        return Ok(&(&h0(spec, space)? + &h_diag_first(spec, space)?) + &coupling);
    }
    let (g1, g2) = (spec.g[0], spec.g[1]);
    let d2 = spec.detunings[1];
    let a = spec.atoms as f64;
    let coupling = plus_adjoint(k_photon(space, 2, 1, 3)).scale(-g1 * g2 / d2);
    let stark = diagonal_operator(space, |s| {
        let n = s.photons as f64;
        let sz_plus_half = 0.5 * (s.occupation(3) as f64 - s.occupation(1) as f64) + a / 2.0;
        -sz_plus_half * ((g2 * g2 - g1 * g1) / d2 * n + g2 * g2 / d2) - a * g1 * g1 / d2 * n
    });
    let keep = empty_levels_mask(space, &[2]);
    Ok((&coupling + &stark).project(&keep))
}

/// Pieces of the three-photon effective Hamiltonian.
#[derive(Debug, Clone)]
pub struct ThreePhotonTerms {
    /// `⅓ψ₁⁽³⁾ (a³ S₊^{14} + h.c.)`
    pub coupling: Operator,
    /// `−(g₁²/Δ₂) a†a S¹¹ − (g₃²/Δ₃)(a†a + 1) S⁴⁴`
    pub stark: Operator,
    /// `−½β₃₁ S¹¹S⁴⁴ − ¼[α₁⁽²⁾ψ₁⁽²⁾ a†a(a†a − 1) S¹¹ − α₂⁽²⁾ψ₂⁽²⁾ (a†a + 1)(a†a + 2) S⁴⁴]`
    pub higher: Operator,
}

/// All terms projected on the states with levels 2 and 3 empty.
pub fn three_photon_terms<S: Space + ?Sized>(
    spec: &CascadeModelSpec,
    space: &S,
) -> Result<ThreePhotonTerms> {
    spec.check_space(space)?;
    if spec.levels != 4 {
        return Err(Error::Model(format!(
            "three-photon effective Hamiltonian needs N = 4, got N = {}",
            spec.levels
        )));
    }
    spec.require_resonance()?;
    let psi = psi_ladder(spec)?;
    let a2 = alpha2(spec)?;
    let b31 = beta_pair(spec, 3, 1)?;
    let (g1, g3) = (spec.g[0], spec.g[2]);
    let (d2, d3) = (spec.detunings[1], spec.detunings[2]);
    let keep = empty_levels_mask(space, &[2, 3]);

    let coupling = plus_adjoint(k_photon(space, 3, 1, 4))
        .scale(psi[2][0] / 3.0)
        .project(&keep);
    let stark = diagonal_operator(space, |s| {
        let n = s.photons as f64;
        -(g1 * g1 / d2) * n * s.occupation(1) as f64
            - (g3 * g3 / d3) * (n + 1.0) * s.occupation(4) as f64
    })
    .project(&keep);
    let higher = diagonal_operator(space, |s| {
        let n = s.photons as f64;
        let (s11, s44) = (s.occupation(1) as f64, s.occupation(4) as f64);
        -0.5 * b31 * s11 * s44
            - 0.25
                * (a2[0] * psi[1][0] * n * (n - 1.0) * s11
                    - a2[1] * psi[1][1] * (n + 1.0) * (n + 2.0) * s44)
    })
    .project(&keep);
    Ok(ThreePhotonTerms {
        coupling,
        stark,
        higher,
    })
}

/// Three-photon effective Hamiltonian for `N = 4`, `Δ₄ = 0`, on the states
/// with levels 2 and 3 empty: coupling plus Stark shifts, and the
/// `O(1/Δ³)` terms when `keep_order3_terms` is set.
pub fn effective_three_photon<S: Space + ?Sized>(
    spec: &CascadeModelSpec,
    space: &S,
    keep_order3_terms: bool,
) -> Result<Operator> {
    let terms = three_photon_terms(spec, space)?;
    let h = &terms.coupling + &terms.stark;
    Ok(if keep_order3_terms {
        &h + &terms.higher
    } else {
        h
    })
}

// ---------------------------------------------------------------------------
// Numerical pipeline against the closed forms
// ---------------------------------------------------------------------------

/// One resonant block of the numerically transformed Hamiltonian next to
/// the closed-form effective Hamiltonian on the same states.
#[derive(Debug, Clone)]
pub struct BlockComparison {
    /// Indices into the space.
    pub states: Vec<usize>,
    pub pipeline: Operator,
    pub closed_form: Operator,
    /// Largest off-diagonal difference.
    pub coupling_error: f64,
    /// Largest off-diagonal closed-form entry.
    pub coupling_scale: f64,
    /// Largest diagonal difference.
    pub diagonal_error: f64,
}

impl BlockComparison {
    pub fn relative_coupling_error(&self) -> f64 {
        self.coupling_error / self.coupling_scale
    }
}

#[derive(Debug, Clone)]
pub struct PipelineComparison {
    pub transform: TransformReport,
    pub blocks: Vec<BlockComparison>,
    pub max_alpha: f64,
    /// Largest `|E_k(final) − E_k(H)|` over the sorted spectra.
    pub spectrum_shift: f64,
}

impl PipelineComparison {
    pub fn worst_relative_coupling_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(BlockComparison::relative_coupling_error)
            .fold(0.0, f64::max)
    }
}

/// Runs the numerical small-rotation engine on `h₀ + V` with `h₀` as the
/// reference and compares every resonant block that lies inside the
/// closed-form subspace (intermediate levels empty) with
/// [`effective_two_photon`] (`N = 3`) or [`effective_three_photon`]
/// (`N = 4`, `O(1/Δ³)` terms kept when `keep_order3_terms`).
pub fn compare_with_pipeline<S: Space + ?Sized>(
    spec: &CascadeModelSpec,
    space: &S,
    options: &IterateOptions,
    keep_order3_terms: bool,
) -> Result<PipelineComparison> {
    let (closed, intermediate): (Operator, Vec<usize>) = match spec.levels {
        3 => (effective_two_photon(spec, space, true)?, vec![2]),
        4 => (
            effective_three_photon(spec, space, keep_order3_terms)?,
            vec![2, 3],
        ),
        n => {
            return Err(Error::Model(format!(
                "closed-form effective Hamiltonians exist for N = 3 and 4, got N = {n}"
            )))
        }
    };
    let h = build_hamiltonian(spec, space, false)?;
    let reference = h0(spec, space)?;
    let transform = iterate(&h, &reference, options)?;
    let keep = empty_levels_mask(space, &intermediate);
    let blocks = transform
        .resonant_blocks
        .iter()
        .filter(|b| b.iter().all(|&k| keep[k]))
        .map(|states| {
            let pipeline = transform.final_h.submatrix(states);
            let closed_form = closed.submatrix(states);
            let diff = &pipeline - &closed_form;
            let (mut coupling_error, mut coupling_scale, mut diagonal_error) =
                (0.0f64, 0.0f64, 0.0f64);
            for r in 0..states.len() {
                for c in 0..states.len() {
                    if r == c {
                        diagonal_error = diagonal_error.max(diff.get(r, c).norm());
                    } else {
                        coupling_error = coupling_error.max(diff.get(r, c).norm());
                        coupling_scale = coupling_scale.max(closed_form.get(r, c).norm());
                    }
                }
            }
            BlockComparison {
                states: states.clone(),
                pipeline,
                closed_form,
                coupling_error,
                coupling_scale,
                diagonal_error,
            }
        })
        .collect();
    let mut before = hermitian_eig(&h)?.eigenvalues;
    let mut after = hermitian_eig(&transform.final_h)?.eigenvalues;
    before.sort_by(f64::total_cmp);
    after.sort_by(f64::total_cmp);
    let spectrum_shift = before
        .iter()
        .zip(&after)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(PipelineComparison {
        transform,
        blocks,
        max_alpha: CouplingLadder::new(spec)?.max_alpha(),
        spectrum_shift,
    })
}
