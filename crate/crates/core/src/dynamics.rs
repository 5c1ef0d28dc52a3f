//! Time evolution, fidelities, observables and error-scaling fits.

use crate::basis::{excitation_number, Space};
use crate::error::{Error, Result};
use crate::operator::{hermitian_eig, EigenDecomposition, Operator, StateVector};
use rayon::prelude::*;

/// Allowed deviation of `‖ψ₀‖` from one.
pub const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Dynamics("time grid is empty".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Dynamics(
                "times must be finite and nonnegative".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Dynamics("times must be strictly ascending".into()));
        }
        Ok(TimeGrid { times })
    }

    /// `points` equally spaced times from 0 to `t_end` inclusive.
    pub fn linspace(t_end: f64, points: usize) -> Result<Self> {
        if points < 2 || !(t_end > 0.0) {
            return Err(Error::Dynamics(format!(
                "need t_end > 0 and at least 2 points, got {t_end} and {points}"
            )));
        }
        let step = t_end / (points - 1) as f64;
        TimeGrid::new((0..points).map(|k| k as f64 * step).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }
}

fn check_state(h: &Operator, psi0: &StateVector) -> Result<()> {
    if psi0.len() != h.dim() {
        return Err(Error::Dynamics(format!(
            "state has dimension {} but the Hamiltonian {}",
            psi0.len(),
            h.dim()
        )));
    }
    let norm = psi0.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::Dynamics(format!(
            "initial state has norm {norm}, expected 1"
        )));
    }
    Ok(())
}

/// `ψ(t) = Q exp(−iΛt) Q† ψ₀` at every grid time.
pub fn evolve(h: &Operator, psi0: &StateVector, grid: &TimeGrid) -> Result<Vec<StateVector>> {
    check_state(h, psi0)?;
    let eig = hermitian_eig(h)?;
    Ok(evolve_with(&eig, psi0, grid))
}

fn evolve_with(eig: &EigenDecomposition, psi0: &StateVector, grid: &TimeGrid) -> Vec<StateVector> {
    grid.times
        .par_iter()
        .map(|&t| eig.propagate(psi0, t))
        .collect()
}

/// How the effective evolution is compared with the exact one.
#[derive(Debug, Clone, Copy)]
pub enum Frame<'a> {
    /// `ψ_eff(t) = exp(−iH_eff t) ψ₀`.
    Bare,
    /// `H_eff` lives in the frame rotated by `U` (`H_eff ≈ U H U†`):
    /// `ψ_eff(t) = U† exp(−iH_eff t) U ψ₀`.
    Rotated(&'a Operator),
}

#[derive(Debug, Clone)]
pub struct FidelityReport {
    pub times: Vec<f64>,
    pub fidelity: Vec<f64>,
    pub min_fidelity: f64,
    pub argmin_time: f64,
    /// Largest population the effective evolution places on states the
    /// effective Hamiltonian does not act on (rows and columns identically
    /// zero), measured in the effective frame.
    pub frozen_population: f64,
}

impl FidelityReport {
    pub fn deficit(&self) -> f64 {
        1.0 - self.min_fidelity
    }
}

/// `F(t) = |⟨ψ_exact(t)|ψ_eff(t)⟩|²`.
pub fn fidelity_series(
    h_exact: &Operator,
    h_eff: &Operator,
    psi0: &StateVector,
    grid: &TimeGrid,
    frame: Frame<'_>,
) -> Result<FidelityReport> {
    h_exact.try_add(h_eff)?;
    check_state(h_exact, psi0)?;
    let exact = evolve(h_exact, psi0, grid)?;
    let start = match frame {
        Frame::Bare => psi0.clone(),
        Frame::Rotated(u) => {
            h_exact.try_add(u)?;
            u.apply(psi0)
        }
    };
    let eig = hermitian_eig(h_eff)?;
    let rotated = evolve_with(&eig, &start, grid);
    let frozen: Vec<usize> = (0..h_eff.dim())
        .filter(|&k| {
            let m = h_eff.matrix();
            m.row(k).iter().all(|z| z.norm() == 0.0) && m.column(k).iter().all(|z| z.norm() == 0.0)
        })
        .collect();
    let frozen_population = rotated
        .iter()
        .map(|v| frozen.iter().map(|&k| v[k].norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max);
    let fidelity: Vec<f64> = exact
        .par_iter()
        .zip(rotated.par_iter())
        .map(|(e, r)| {
            let approx = match frame {
                Frame::Bare => r.clone(),
                Frame::Rotated(u) => u.adjoint().apply(r),
            };
            e.dotc(&approx).norm_sqr()
        })
        .collect();
    let (imin, &min_fidelity) = fidelity
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    Ok(FidelityReport {
        times: grid.times.clone(),
        argmin_time: grid.times[imin],
        fidelity,
        min_fidelity,
        frozen_population,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    pub photons: f64,
    /// `⟨S^{jj}⟩`, `j = 1..N`.
    pub populations: Vec<f64>,
    /// `⟨S_z^{1N}⟩ = (⟨S^{NN}⟩ − ⟨S^{11}⟩)/2`.
    pub inversion: f64,
    /// `⟨N̂⟩`.
    pub excitation: f64,
}

/// Expectation values of the diagonal observables for each state.
pub fn observables<S: Space + ?Sized>(states: &[StateVector], space: &S) -> Vec<Observables> {
    let levels = space.levels();
    states
        .iter()
        .map(|psi| {
            let mut photons = 0.0;
            let mut populations = vec![0.0; levels];
            let mut excitation = 0.0;
            for (k, s) in space.states().iter().enumerate() {
                let p = psi[k].norm_sqr();
                photons += p * s.photons as f64;
                for (level, m) in s.occupations.iter().enumerate() {
                    populations[level] += p * *m as f64;
                }
                excitation += p * excitation_number(s, levels)
                    .expect("state of space")
                    .value();
            }
            let inversion = 0.5 * (populations[levels - 1] - populations[0]);
            Observables {
                photons,
                populations,
                inversion,
                excitation,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueComparison {
    /// `(exact index, effective index, |E_exact − E_eff|, overlap²)`
    pub pairs: Vec<(usize, usize, f64, f64)>,
    pub max_error: f64,
    pub rms_error: f64,
}

/// Pairs each eigenvector of `h_eff` (restricted to `support` when given)
/// with the exact eigenvector of largest overlap and reports the eigenvalue
/// differences. An overlap² below one half is an error.
pub fn eigenvalue_compare(
    h_exact: &Operator,
    h_eff: &Operator,
    support: Option<&[usize]>,
) -> Result<EigenvalueComparison> {
    h_exact.try_add(h_eff)?;
    let all: Vec<usize> = (0..h_eff.dim()).collect();
    let support = support.unwrap_or(&all);
    let exact = hermitian_eig(h_exact)?;
    let eff = hermitian_eig(&h_eff.submatrix(support))?;
    let mut pairs = Vec::with_capacity(eff.dim());
    for k in 0..eff.dim() {
        let v = eff.eigenvector(k);
        let (best, overlap) = (0..exact.dim())
            .map(|i| {
                let e = exact.eigenvector(i);
                let ov: num_complex::Complex64 = support
                    .iter()
                    .enumerate()
                    .map(|(local, &global)| e[global].conj() * v[local])
                    .sum();
                (i, ov.norm_sqr())
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        if overlap < 0.5 {
            return Err(Error::Dynamics(format!(
                "effective eigenvector {k} has no exact partner (best overlap² {overlap:.3})"
            )));
        }
        let error = (exact.eigenvalues[best] - eff.eigenvalues[k]).abs();
        pairs.push((best, k, error, overlap));
    }
    let max_error = pairs.iter().map(|p| p.2).fold(0.0, f64::max);
    let rms_error = (pairs.iter().map(|p| p.2 * p.2).sum::<f64>() / pairs.len() as f64).sqrt();
    Ok(EigenvalueComparison {
        pairs,
        max_error,
        rms_error,
    })
}

/// `2π / |E_a − E_b|` for the two eigenvectors of `h` with the largest
/// weight on `psi`.
pub fn effective_rabi_period(h: &Operator, psi: &StateVector) -> Result<f64> {
    let eig = hermitian_eig(h)?;
    let mut weights: Vec<(f64, usize)> = (0..eig.dim())
        .map(|k| (eig.eigenvector(k).dotc(psi).norm_sqr(), k))
        .collect();
    weights.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    if weights.len() < 2 {
        return Err(Error::Dynamics("a Rabi period needs two states".into()));
    }
    let gap = (eig.eigenvalues[weights[0].1] - eig.eigenvalues[weights[1].1]).abs();
    if !(gap > 0.0) {
        return Err(Error::Dynamics(
            "initial state overlaps degenerate eigenvalues only".into(),
        ));
    }
    Ok(2.0 * std::f64::consts::PI / gap)
}

/// Slopes below this magnitude mark a fit as flat.
pub const FLAT_SLOPE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudy {
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `ln error` against `ln ε`.
    pub fitted_exponent: f64,
    pub intercept: f64,
    /// RMS of the fit residuals in `ln error`.
    pub residual_rms: f64,
    /// The error does not depend on ε (|slope| < 0.5).
    pub flat: bool,
}

/// Evaluates `error_metric` at each ε (positive, strictly descending, at
/// least three) and fits a power law.
pub fn scaling_study(
    epsilons: &[f64],
    mut error_metric: impl FnMut(f64) -> Result<f64>,
) -> Result<ScalingStudy> {
    if epsilons.len() < 3 {
        return Err(Error::Dynamics(
            "a scaling fit needs at least 3 points".into(),
        ));
    }
    if epsilons.iter().any(|e| !(*e > 0.0)) || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Dynamics(
            "epsilons must be positive and strictly descending".into(),
        ));
    }
    let errors = epsilons
        .iter()
        .map(|&e| error_metric(e))
        .collect::<Result<Vec<f64>>>()?;
    if let Some(bad) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::Dynamics(format!(
            "error metric returned {bad}; a log-log fit needs positive errors"
        )));
    }
    let (slope, intercept, residual_rms) = fit_power_law(epsilons, &errors);
    Ok(ScalingStudy {
        epsilons: epsilons.to_vec(),
        errors,
        fitted_exponent: slope,
        intercept,
        residual_rms,
        flat: slope.abs() < FLAT_SLOPE,
    })
}

/// Unweighted least squares on `(ln x, ln y)`: `(slope, intercept, residual RMS)`.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

/// Angular frequency of the strongest oscillation in a uniformly sampled
/// series. Each trial ω is scored by the variance a least-squares fit of
/// `c₀ + c₁ cos ωt + c₂ sin ωt` explains; the best score on a grid over
/// `[2π/T, π/dt]` is refined by golden-section search.
pub fn dominant_frequency(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() < 8 || times.len() != values.len() {
        return Err(Error::Dynamics("need at least 8 matching samples".into()));
    }
    let span = times[times.len() - 1] - times[0];
    let dt = span / (times.len() - 1) as f64;
    let power = |w: f64| {
        let mut gram = nalgebra::Matrix3::<f64>::zeros();
        let mut rhs = nalgebra::Vector3::<f64>::zeros();
        for (t, v) in times.iter().zip(values) {
            let b = nalgebra::Vector3::new(1.0, (w * t).cos(), (w * t).sin());
            gram += b * b.transpose();
            rhs += b * *v;
        }
        match gram.lu().solve(&rhs) {
            Some(c) => c.dot(&rhs),
            None => 0.0,
        }
    };
    let lo = 2.0 * std::f64::consts::PI / span;
    let hi = std::f64::consts::PI / dt;
    let step = lo / 8.0;
    let mut best = (lo, power(lo));
    let mut w = lo;
    while w <= hi {
        let p = power(w);
        if p > best.1 {
            best = (w, p);
        }
        w += step;
    }
    let (mut a, mut b) = ((best.0 - step).max(lo / 2.0), best.0 + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if power(c) > power(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(0.5 * (a + b))
}
