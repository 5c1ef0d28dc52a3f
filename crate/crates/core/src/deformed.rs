//! Polynomially deformed su(2) algebras and their small-rotation effective
//! Hamiltonians.
//!
//! A module is spanned by `|m⟩`, `m = m₀, m₀+1, …, m₀+dim−1`, with
//!
//! ```text
//! X₃|m⟩ = m|m⟩,   X₊|m⟩ = √Φ(m+1) |m+1⟩,   X₋|m⟩ = √Φ(m) |m−1⟩
//! [X₃, X±] = ±X±, [X₊, X₋] = P(X₃) = Φ(X₃) − Φ(X₃+1)
//! ```
//!
//! The forward difference is `∇f(X₃) = f(X₃+1) − f(X₃)`, so `P = −∇Φ`.
//!
//! Inside a finite module the structural function that the matrices actually
//! realize is `Φ` cut off to zero at and below `m₀` and above the top weight.
//! The effective Hamiltonians use this truncated function; with it every
//! identity used to resum the rotation series holds exactly on the finite
//! matrices, including the top rung.

use crate::error::{Error, Result};
use crate::operator::{
    commutator, expm_antihermitian, BasisTag, Operator, StateVector, STRUCTURE_FLOOR,
};
use num_complex::Complex64;

/// `Φ(m) = Σ_k c_k m^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralPolynomial {
    coefficients: Vec<f64>,
    /// Named constants (integrals of motion) the coefficients were built from.
    parameters: Vec<(String, f64)>,
}

impl StructuralPolynomial {
    /// Coefficients in ascending powers of `m`.
    pub fn new(coefficients: Vec<f64>) -> Self {
        StructuralPolynomial {
            coefficients,
            parameters: Vec::new(),
        }
    }

    /// `leading · Π (m − r)` over `roots`.
    pub fn from_roots(leading: f64, roots: &[f64]) -> Self {
        let mut coeffs = vec![leading];
        for &r in roots {
            let mut next = vec![0.0; coeffs.len() + 1];
            for (k, &c) in coeffs.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= r * c;
            }
            coeffs = next;
        }
        StructuralPolynomial::new(coeffs)
    }

    /// Ordinary spin `j`: `Φ(m) = (j + m)(j − m + 1)`; lowest weight `−j`.
    pub fn spin(j: f64) -> Self {
        StructuralPolynomial::from_roots(-1.0, &[-j, j + 1.0]).with_parameter("j", j)
    }

    /// Heisenberg–Weyl limit `Φ(m) = m`; lowest weight `0`.
    pub fn boson() -> Self {
        StructuralPolynomial::new(vec![0.0, 1.0])
    }

    /// Cubic `Φ(m) = m (p + 1 − m)(q + m)`, vanishing at `m = 0` and `m = p + 1`.
    /// This is the form met in three-wave mixing and two-photon models with
    /// `p`, `q` set by integrals of motion.
    pub fn cubic(p: f64, q: f64) -> Self {
        StructuralPolynomial::from_roots(-1.0, &[0.0, p + 1.0, -q])
            .with_parameter("p", p)
            .with_parameter("q", q)
    }

    pub fn with_parameter(mut self, name: &str, value: f64) -> Self {
        self.parameters.push((name.to_string(), value));
        self
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn parameters(&self) -> &[(String, f64)] {
        &self.parameters
    }

    pub fn eval(&self, m: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * m + c)
    }
}

#[derive(Debug, Clone)]
pub struct DeformedModule {
    m0: f64,
    dim: usize,
    phi: StructuralPolynomial,
    x3: Operator,
    xp: Operator,
    xm: Operator,
}

const PHI_ZERO_TOL: f64 = 1e-12;

pub fn build_module(phi: StructuralPolynomial, m0: f64, dim: usize) -> Result<DeformedModule> {
    if dim == 0 {
        return Err(Error::Deformed("module dimension must be positive".into()));
    }
    let scale = (0..=dim)
        .map(|k| phi.eval(m0 + k as f64).abs())
        .fold(1.0, f64::max);
    let at_lowest = phi.eval(m0);
    if at_lowest.abs() > PHI_ZERO_TOL * scale {
        return Err(Error::Deformed(format!(
            "Φ(m0) = {at_lowest:e} must vanish at the lowest weight m0 = {m0}"
        )));
    }
    for k in 1..dim {
        let m = m0 + k as f64;
        let value = phi.eval(m);
        if value <= PHI_ZERO_TOL * scale {
            return Err(Error::Deformed(format!(
                "Φ({m}) = {value:e} is not positive inside the module"
            )));
        }
    }
    let tag = BasisTag::module(m0, dim);
    let x3 = Operator::from_diagonal(
        &(0..dim).map(|k| m0 + k as f64).collect::<Vec<_>>(),
        tag.clone(),
    );
    let mut xp = Operator::zeros(dim, tag.clone());
    let mut raise = xp.clone().into_matrix();
    for k in 0..dim.saturating_sub(1) {
        let amp = phi.eval(m0 + (k + 1) as f64).sqrt();
        raise[(k + 1, k)] = Complex64::new(amp, 0.0);
    }
    xp = Operator::new(raise, tag).expect("square");
    let xm = xp.adjoint();
    Ok(DeformedModule {
        m0,
        dim,
        phi,
        x3,
        xp,
        xm,
    })
}

impl DeformedModule {
    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn top(&self) -> f64 {
        self.m0 + (self.dim - 1) as f64
    }

    pub fn phi(&self) -> &StructuralPolynomial {
        &self.phi
    }

    pub fn x3(&self) -> &Operator {
        &self.x3
    }

    pub fn xp(&self) -> &Operator {
        &self.xp
    }

    pub fn xm(&self) -> &Operator {
        &self.xm
    }

    pub fn tag(&self) -> BasisTag {
        self.x3.tag().clone()
    }

    /// Eigenvalue of `X₃` on basis index `k`.
    pub fn weight(&self, k: usize) -> f64 {
        self.m0 + k as f64
    }

    /// Φ as realized by the finite matrices: `X₊X₋ = Φ(X₃)`, `X₋X₊ = Φ(X₃+1)`.
    pub fn phi_realized(&self, m: f64) -> f64 {
        let top = self.top();
        if m <= self.m0 + 0.5 || m > top + 0.5 {
            0.0
        } else {
            self.phi.eval(m)
        }
    }

    /// Diagonal operator `f(X₃)`.
    pub fn diag_fn(&self, f: impl Fn(f64) -> f64) -> Operator {
        let values: Vec<f64> = (0..self.dim).map(|k| f(self.weight(k))).collect();
        Operator::from_diagonal(&values, self.tag())
    }

    /// `P(X₃) = Φ(X₃) − Φ(X₃+1)` from the polynomial (no truncation).
    pub fn p_polynomial(&self) -> Operator {
        self.diag_fn(|m| self.phi.eval(m) - self.phi.eval(m + 1.0))
    }

    /// `T = X₊ − X₋`.
    pub fn rotation_generator(&self) -> Operator {
        &self.xp - &self.xm
    }
}

/// Frobenius residuals of the defining relations of a module.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraResiduals {
    /// `‖[X₃, X₊] − X₊‖`
    pub raising: f64,
    /// `‖[X₃, X₋] + X₋‖`
    pub lowering: f64,
    /// `‖[X₊, X₋] − P(X₃)‖` with the top diagonal entry excluded.
    pub structure_interior: f64,
    /// Top entry of `[X₊, X₋] − P(X₃)`; the truncated ladder makes it `Φ(m₀+dim)`.
    pub corner_defect: f64,
    /// `Φ(m₀ + dim)`.
    pub expected_corner: f64,
    /// `‖X₋|m₀⟩‖`
    pub lowest_weight: f64,
}

impl AlgebraResiduals {
    pub fn max_interior(&self) -> f64 {
        self.raising
            .max(self.lowering)
            .max(self.structure_interior)
            .max(self.lowest_weight)
    }

    pub fn corner_mismatch(&self) -> f64 {
        (self.corner_defect - self.expected_corner).abs()
    }
}

pub fn verify_algebra(module: &DeformedModule) -> AlgebraResiduals {
    let x3 = module.x3();
    let xp = module.xp();
    let xm = module.xm();
    let raising = (&commutator(x3, xp).expect("same module") - xp).frobenius_norm();
    let lowering = (&commutator(x3, xm).expect("same module") + xm).frobenius_norm();
    let structure = &commutator(xp, xm).expect("same module") - &module.p_polynomial();
    let top = module.dim() - 1;
    let mut interior = 0.0;
    for r in 0..module.dim() {
        for c in 0..module.dim() {
            if r == top && c == top {
                continue;
            }
            interior += structure.get(r, c).norm_sqr();
        }
    }
    let lowest_weight = xm.matrix().column(0).norm();
    AlgebraResiduals {
        raising,
        lowering,
        structure_interior: interior.sqrt(),
        corner_defect: structure.get(top, top).re,
        expected_corner: module.phi().eval(module.m0() + module.dim() as f64),
        lowest_weight,
    }
}

/// `H_int = Δ X₃ + g (X₊ + X₋)` on a module, with `ε = g/Δ`.
#[derive(Debug, Clone)]
pub struct Su2HamiltonianSpec {
    pub delta: f64,
    pub g: f64,
    pub module: DeformedModule,
}

impl Su2HamiltonianSpec {
    pub fn new(delta: f64, g: f64, module: DeformedModule) -> Result<Self> {
        if delta == 0.0 || !delta.is_finite() || !g.is_finite() {
            return Err(Error::Deformed(format!(
                "need finite nonzero Δ and finite g, got Δ = {delta}, g = {g}"
            )));
        }
        Ok(Su2HamiltonianSpec { delta, g, module })
    }

    pub fn epsilon(&self) -> f64 {
        self.g / self.delta
    }

    /// Same module, different couplings.
    pub fn with_couplings(&self, delta: f64, g: f64) -> Result<Self> {
        Su2HamiltonianSpec::new(delta, g, self.module.clone())
    }
}

pub fn interaction_hamiltonian(spec: &Su2HamiltonianSpec) -> Operator {
    let m = &spec.module;
    &m.x3().scale(spec.delta) + &(m.xp() + m.xm()).scale(spec.g)
}

/// `U = exp(ε (X₊ − X₋))`.
pub fn small_rotation(spec: &Su2HamiltonianSpec) -> Result<Operator> {
    expm_antihermitian(&spec.module.rotation_generator().scale(spec.epsilon()))
}

/// Order-ε diagonal effective Hamiltonian `Δ X₃ + (g²/Δ) P(X₃)`.
pub fn effective_order1(spec: &Su2HamiltonianSpec) -> Operator {
    let m = &spec.module;
    let coupling = spec.g * spec.g / spec.delta;
    m.diag_fn(|w| spec.delta * w + coupling * (m.phi_realized(w) - m.phi_realized(w + 1.0)))
}

/// Forward differences of the realized Φ.
struct Differences<'a> {
    module: &'a DeformedModule,
}

impl Differences<'_> {
    fn phi(&self, m: f64) -> f64 {
        self.module.phi_realized(m)
    }
    fn d1(&self, m: f64) -> f64 {
        self.phi(m + 1.0) - self.phi(m)
    }
    fn d2(&self, m: f64) -> f64 {
        self.phi(m + 2.0) - 2.0 * self.phi(m + 1.0) + self.phi(m)
    }
    fn d3(&self, m: f64) -> f64 {
        self.phi(m + 3.0) - 3.0 * self.phi(m + 2.0) + 3.0 * self.phi(m + 1.0) - self.phi(m)
    }
}

/// Effective Hamiltonian through `order` (1–3) in `ε`:
///
/// ```text
/// Δ X₃ − ε g ∇Φ
///      + ε² (2g/3) [X₊ ∇²Φ + ∇²Φ X₋]
///      − ε³ (g/4) {X₊² ∇³Φ + ∇³Φ X₋² + 2 ∇[Φ(X₃) ∇²Φ(X₃ − 1)]}
/// ```
pub fn effective_series(spec: &Su2HamiltonianSpec, order: usize) -> Result<Operator> {
    if !(1..=3).contains(&order) {
        return Err(Error::Deformed(format!(
            "series order {order} outside 1..=3"
        )));
    }
    let m = &spec.module;
    let d = Differences { module: m };
    let eps = spec.epsilon();
    let g = spec.g;

    let mut h = &m.x3().scale(spec.delta) + &m.diag_fn(|w| -eps * g * d.d1(w));
    if order >= 2 {
        let f2 = m.diag_fn(|w| d.d2(w));
        let term = &(m.xp() * &f2) + &(&f2 * m.xm());
        h = &h + &term.scale(eps * eps * 2.0 * g / 3.0);
    }
    if order >= 3 {
        let f3 = m.diag_fn(|w| d.d3(w));
        let xp2 = m.xp() * m.xp();
        let xm2 = m.xm() * m.xm();
        // ∇[Φ(X₃)∇²Φ(X₃−1)] = Φ(X₃+1)∇²Φ(X₃) − Φ(X₃)∇²Φ(X₃−1)
        let diag = m.diag_fn(|w| 2.0 * (d.phi(w + 1.0) * d.d2(w) - d.phi(w) * d.d2(w - 1.0)));
        let term = &(&(&xp2 * &f3) + &(&f3 * &xm2)) + &diag;
        h = &h - &term.scale(eps.powi(3) * g / 4.0);
    }
    Ok(h)
}

/// `|Ψ_m⟩ ≈ U†|m⟩` expanded to `order` (1 or 2) in `ε` and normalized:
///
/// ```text
/// |m⟩ − ε (X₊ − X₋)|m⟩ + (ε²/2) {X₊² + X₋² − [Φ(X₃) + Φ(X₃+1)]} |m⟩
/// ```
pub fn eigenstate_correction(
    spec: &Su2HamiltonianSpec,
    index: usize,
    order: usize,
) -> Result<StateVector> {
    let m = &spec.module;
    if index >= m.dim() {
        return Err(Error::Deformed(format!(
            "state index {index} outside module of dimension {}",
            m.dim()
        )));
    }
    if !(1..=2).contains(&order) {
        return Err(Error::Deformed(format!(
            "eigenstate order {order} outside 1..=2"
        )));
    }
    let eps = spec.epsilon();
    let basis = crate::operator::unit_vector(m.dim(), index);
    let mut psi = &basis - m.rotation_generator().apply(&basis) * Complex64::new(eps, 0.0);
    if order == 2 {
        let xp2 = m.xp() * m.xp();
        let xm2 = m.xm() * m.xm();
        let shift = m.diag_fn(|w| m.phi_realized(w) + m.phi_realized(w + 1.0));
        let second = &(&xp2 + &xm2) - &shift;
        psi += second.apply(&basis) * Complex64::new(eps * eps / 2.0, 0.0);
    }
    let norm = psi.norm();
    if norm < STRUCTURE_FLOOR {
        return Err(Error::Deformed("corrected state vanished".into()));
    }
    Ok(psi.unscale(norm))
}
