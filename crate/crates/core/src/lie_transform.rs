//! Numerical small-rotation engine.
//!
//! `H = h₀ + V` with `h₀` diagonal. Each step solves `[T, h₀] = −V_off` for the
//! off-resonant part of `V`,
//!
//! ```text
//! T_mn = V_mn / (h₀_m − h₀_n)   when |h₀_m − h₀_n| > tol,   0 otherwise,
//! ```
//!
//! and replaces `H` by `exp(T) H exp(−T)` computed exactly. Pairs that are
//! degenerate in the reference survive as resonant blocks.

use crate::error::{Error, Result};
use crate::operator::{conjugate, expm_antihermitian, Operator};
use num_complex::Complex64;
use rayon::prelude::*;

/// Relative default for the resonance tolerance (times `max|h₀|`).
pub const DEFAULT_RESONANCE_REL: f64 = 1e-6;
/// Non-resonant gaps below this fraction of `max|h₀|` produce a warning.
pub const NEAR_DEGENERATE_REL: f64 = 1e-3;
/// Allowed growth of the residual between steps before reporting divergence.
pub const DIVERGENCE_GROWTH: f64 = 1.1;

/// Pairs `(m, n)` treated as degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceMask {
    dim: usize,
    tol: f64,
    resonant: Vec<bool>,
}

impl ResonanceMask {
    pub fn from_reference(reference: &[f64], tol: f64) -> Self {
        let dim = reference.len();
        let mut resonant = vec![false; dim * dim];
        for m in 0..dim {
            for n in 0..dim {
                resonant[m * dim + n] = (reference[m] - reference[n]).abs() <= tol;
            }
        }
        ResonanceMask { dim, tol, resonant }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn is_resonant(&self, m: usize, n: usize) -> bool {
        self.resonant[m * self.dim + n]
    }

    /// Connected components (size ≥ 2) of the degeneracy graph, each sorted,
    /// ordered by smallest index.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.dim).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in 0..self.dim {
            for n in (m + 1)..self.dim {
                if self.is_resonant(m, n) {
                    let (a, b) = (find(&mut parent, m), find(&mut parent, n));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); self.dim];
        for k in 0..self.dim {
            let root = find(&mut parent, k);
            groups[root].push(k);
        }
        groups.into_iter().filter(|g| g.len() >= 2).collect()
    }

    /// Frobenius norm of the entries of `x` outside the resonant pattern.
    pub fn offresonant_norm(&self, x: &Operator) -> f64 {
        let mut sum = 0.0;
        for m in 0..self.dim {
            for n in 0..self.dim {
                if !self.is_resonant(m, n) {
                    sum += x.get(m, n).norm_sqr();
                }
            }
        }
        sum.sqrt()
    }
}

/// `H = h₀ + V` in the working basis.
#[derive(Debug, Clone)]
pub struct SplitHamiltonian {
    pub h0: Operator,
    pub v: Operator,
    pub mask: ResonanceMask,
}

impl SplitHamiltonian {
    pub fn h0_diagonal(&self) -> Vec<f64> {
        self.h0.diagonal()
    }

    pub fn resonance_tol(&self) -> f64 {
        self.mask.tol()
    }
}

fn default_tol(reference: &[f64]) -> f64 {
    DEFAULT_RESONANCE_REL * reference.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}

/// Splits `h` around a diagonal reference. `resonance_tol = None` picks
/// `1e−6 · max|h₀|`.
pub fn split(
    h: &Operator,
    diagonal_reference: &Operator,
    resonance_tol: Option<f64>,
) -> Result<SplitHamiltonian> {
    let scale = diagonal_reference.max_abs().max(f64::MIN_POSITIVE);
    if !diagonal_reference.is_diagonal(1e-14 * scale) {
        return Err(Error::Transform(
            "diagonal reference has off-diagonal entries".into(),
        ));
    }
    if diagonal_reference
        .matrix()
        .diagonal()
        .iter()
        .any(|z| z.im.abs() > 1e-14 * scale)
    {
        return Err(Error::Transform(
            "diagonal reference has complex entries".into(),
        ));
    }
    let h0 = Operator::from_diagonal(&diagonal_reference.diagonal(), h.tag().clone());
    let v = h.try_add(&-&h0)?;
    let reference = h0.diagonal();
    let tol = resonance_tol.unwrap_or_else(|| default_tol(&reference));
    let mask = ResonanceMask::from_reference(&reference, tol);
    Ok(SplitHamiltonian { h0, v, mask })
}

#[derive(Debug, Clone)]
pub struct GeneratorStep {
    /// Anti-Hermitian `T`.
    pub generator: Operator,
    pub order_label: usize,
    /// `‖V_off‖`, the Frobenius norm removed at first order by this step.
    pub eliminated_norm: f64,
    /// Couplings `(m, n)`, `m < n`, that were skipped because the pair is resonant.
    pub resonant_pairs: Vec<(usize, usize)>,
    /// Largest `|V_mn / (h₀_m − h₀_n)|` and where it sits.
    pub largest_ratio: (f64, usize, usize),
    pub warnings: Vec<String>,
}

/// Solves `[T, h₀] = −V_off` entrywise.
pub fn solve_generator(sh: &SplitHamiltonian) -> GeneratorStep {
    solve_with_mask(&sh.h0.diagonal(), &sh.v, &sh.mask, 1)
}

fn solve_with_mask(
    energies: &[f64],
    v: &Operator,
    mask: &ResonanceMask,
    order_label: usize,
) -> GeneratorStep {
    let n = v.dim();
    let scale = energies.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()));
    let near = NEAR_DEGENERATE_REL * scale;
    let coupling_floor = 1e-14 * v.max_abs();
    let mut t = v.matrix().clone();
    t.fill(Complex64::new(0.0, 0.0));
    let mut eliminated = 0.0;
    let mut resonant_pairs = Vec::new();
    let mut largest = (0.0, 0, 0);
    let mut warnings = Vec::new();
    for r in 0..n {
        for c in 0..n {
            if r == c {
                continue;
            }
            let vrc = v.get(r, c);
            if mask.is_resonant(r, c) {
                if r < c && vrc.norm() > coupling_floor {
                    resonant_pairs.push((r, c));
                }
                continue;
            }
            let gap = energies[r] - energies[c];
            if vrc.norm() == 0.0 {
                continue;
            }
            let entry = vrc / gap;
            t[(r, c)] = entry;
            eliminated += vrc.norm_sqr();
            if entry.norm() > largest.0 {
                largest = (entry.norm(), r, c);
            }
            if r < c && gap.abs() < near && vrc.norm() > coupling_floor {
                warnings.push(format!(
                    "small denominator {gap:.3e} between {r} and {c} (coupling {:.3e})",
                    vrc.norm()
                ));
            }
        }
    }
    GeneratorStep {
        generator: Operator::new(t, v.tag().clone()).expect("square"),
        order_label,
        eliminated_norm: eliminated.sqrt(),
        resonant_pairs,
        largest_ratio: largest,
        warnings,
    }
}

/// `exp(T) H exp(−T)`, exactly.
pub fn step(h: &Operator, gs: &GeneratorStep) -> Result<Operator> {
    if gs.generator.max_abs() == 0.0 {
        return Ok(h.clone());
    }
    let u = expm_antihermitian(&gs.generator)?;
    conjugate(&u, h)
}

#[derive(Debug, Clone)]
pub struct IterateOptions {
    /// Absolute tolerance; `None` means `1e−6 · max|h₀|`.
    pub resonance_tol: Option<f64>,
    pub max_steps: usize,
    /// Absolute target for the off-resonant residual; `None` means
    /// `1e−12 · ‖H‖_F`.
    pub target_residual: Option<f64>,
}

impl Default for IterateOptions {
    fn default() -> Self {
        IterateOptions {
            resonance_tol: None,
            max_steps: 50,
            target_residual: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransformReport {
    pub steps: Vec<GeneratorStep>,
    pub final_h: Operator,
    /// Off-resonant Frobenius residual of `final_h`.
    pub residual_offdiag: f64,
    /// Residual after each step, starting with the input.
    pub residual_history: Vec<f64>,
    pub resonant_blocks: Vec<Vec<usize>>,
    pub converged: bool,
    /// `W` with `final_h = W H W†`.
    pub accumulated_rotation: Operator,
    pub mask: ResonanceMask,
    pub warnings: Vec<String>,
}

impl TransformReport {
    /// `final_h` restricted to one resonant block.
    pub fn block(&self, index: usize) -> Operator {
        self.final_h.submatrix(&self.resonant_blocks[index])
    }
}

/// Repeats [`solve_generator`] and [`step`] until the off-resonant residual is
/// at most the target or `max_steps` is reached.
///
/// The resonance pattern is fixed by the initial reference. The first step
/// uses the reference energies as denominators; later steps use the current
/// diagonal of `H`, which already carries the shifts of earlier steps.
pub fn iterate(
    h: &Operator,
    diagonal_reference: &Operator,
    options: &IterateOptions,
) -> Result<TransformReport> {
    if options.max_steps == 0 {
        return Err(Error::Transform("max_steps must be at least 1".into()));
    }
    if h.hermiticity_residual() > 1e-12 * h.frobenius_norm().max(1.0) {
        return Err(Error::Transform("Hamiltonian is not Hermitian".into()));
    }
    let sh = split(h, diagonal_reference, options.resonance_tol)?;
    let mask = sh.mask.clone();
    let target = options
        .target_residual
        .unwrap_or(1e-12 * h.frobenius_norm());
    // Below this the residual is rounding noise and growth is not divergence.
    let noise = 1e-13 * h.frobenius_norm();

    let mut current = h.clone();
    let mut rotation = Operator::identity(h.dim(), h.tag().clone());
    let mut residual = mask.offresonant_norm(&current);
    let mut history = vec![residual];
    let mut steps = Vec::new();
    let mut warnings = Vec::new();
    let mut energies = sh.h0.diagonal();

    while residual > target && steps.len() < options.max_steps {
        let v = &current - &Operator::from_diagonal(&energies, h.tag().clone());
        let gs = solve_with_mask(&energies, &v, &mask, steps.len() + 1);
        let u = expm_antihermitian(&gs.generator)?;
        // rounding in U H U† leaves an anti-Hermitian part that small
        // denominators in the next step would amplify
        let next = conjugate(&u, &current)?.hermitian_part();
        let next_residual = mask.offresonant_norm(&next);
        if next_residual > DIVERGENCE_GROWTH * residual && next_residual > noise {
            let (largest_ratio, row, col) = gs.largest_ratio;
            return Err(Error::Divergence {
                step: steps.len() + 1,
                previous: residual,
                current: next_residual,
                largest_ratio,
                row,
                col,
            });
        }
        warnings.extend(gs.warnings.iter().cloned());
        rotation = &u * &rotation;
        current = next;
        residual = next_residual;
        history.push(residual);
        energies = current.diagonal();
        steps.push(gs);
        if residual <= noise {
            break;
        }
    }
    warnings.dedup();
    let converged = residual <= target.max(noise);
    Ok(TransformReport {
        steps,
        final_h: current,
        residual_offdiag: residual,
        residual_history: history,
        resonant_blocks: mask.blocks(),
        converged,
        accumulated_rotation: rotation,
        mask,
        warnings,
    })
}

/// Runs [`iterate`] on independent blocks (e.g. excitation sectors) in
/// parallel; reports come back in input order.
pub fn iterate_blocks(
    blocks: &[(Operator, Operator)],
    options: &IterateOptions,
) -> Result<Vec<TransformReport>> {
    blocks
        .par_iter()
        .map(|(h, reference)| iterate(h, reference, options))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deformed::{
        build_module, interaction_hamiltonian, StructuralPolynomial, Su2HamiltonianSpec,
    };
    use crate::operator::{commutator, hermitian_eig, BasisTag};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plain(dim: usize, entries: &[f64]) -> Operator {
        Operator::from_real(dim, entries).unwrap()
    }

    fn diag(values: &[f64]) -> Operator {
        Operator::from_diagonal(values, BasisTag::Plain { dim: values.len() })
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, energies: &[f64], coupling: f64) -> Operator {
        let n = energies.len();
        let mut h = diag(energies).into_matrix();
        for r in 0..n {
            for c in (r + 1)..n {
                let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    * coupling;
                h[(r, c)] = z;
                h[(c, r)] = z.conj();
            }
        }
        Operator::plain(h).unwrap()
    }

    #[test]
    fn split_examples() {
        let h = diag(&[1.0, 2.0, 3.0]);
        let sh = split(&h, &h, None).unwrap();
        assert_eq!(sh.v.max_abs(), 0.0);
        assert!((sh.resonance_tol() - 3e-6).abs() < 1e-18);

        let module = build_module(StructuralPolynomial::spin(1.0), -1.0, 3).unwrap();
        let spec = Su2HamiltonianSpec::new(2.0, 0.1, module.clone()).unwrap();
        let h = interaction_hamiltonian(&spec);
        let sh = split(&h, &module.x3().scale(2.0), None).unwrap();
        assert_eq!(sh.v, (module.xp() + module.xm()).scale(0.1));
        assert_eq!(&sh.h0 + &sh.v, h);

        assert!(split(&h, &h, None).is_err());
    }

    #[test]
    fn generator_examples() {
        let (delta, g) = (2.0, 0.3);
        let h = plain(2, &[0.0, g, g, delta]);
        let sh = split(&h, &diag(&[0.0, delta]), None).unwrap();
        let gs = solve_generator(&sh);
        let t = &gs.generator;
        assert!((t.get(0, 1).re + g / delta).abs() < 1e-16);
        assert!((t.get(1, 0).re - g / delta).abs() < 1e-16);
        assert!(gs.resonant_pairs.is_empty());

        let sh = split(&diag(&[0.0, 1.0, 4.0]), &diag(&[0.0, 1.0, 3.0]), None).unwrap();
        assert_eq!(solve_generator(&sh).generator.max_abs(), 0.0);

        let h = plain(3, &[1.0, 0.2, 0.1, 0.2, 1.0, 0.0, 0.1, 0.0, 3.0]);
        let sh = split(&h, &diag(&[1.0, 1.0, 3.0]), None).unwrap();
        let gs = solve_generator(&sh);
        assert_eq!(gs.generator.get(0, 1).norm(), 0.0);
        assert_eq!(gs.resonant_pairs, vec![(0, 1)]);
        assert_eq!(sh.mask.blocks(), vec![vec![0, 1]]);
    }

    #[test]
    fn step_examples() {
        let h = plain(2, &[0.0, 0.1, 0.1, 1.0]);
        let sh = split(&h, &diag(&[1.0, 1.0]), None).unwrap();
        let gs = solve_generator(&sh);
        assert_eq!(step(&h, &gs).unwrap(), h);

        let module = build_module(StructuralPolynomial::spin(2.0), -2.0, 5).unwrap();
        let (delta, g) = (1.0, 0.02);
        let spec = Su2HamiltonianSpec::new(delta, g, module.clone()).unwrap();
        let h = interaction_hamiltonian(&spec);
        let sh = split(&h, &module.x3().scale(delta), None).unwrap();
        let before = sh.mask.offresonant_norm(&h);
        let once = step(&h, &solve_generator(&sh)).unwrap();
        let after1 = sh.mask.offresonant_norm(&once);
        let sh2 = split(&once, &once.diagonal_part(), None).unwrap();
        let twice = step(&once, &solve_generator(&sh2)).unwrap();
        let after2 = sh.mask.offresonant_norm(&twice);
        let eps = g / delta;
        assert!(after1 < 5.0 * eps * before, "{before} {after1}");
        assert!(after2 < 5.0 * eps * eps * before, "{before} {after2}");
    }

    #[test]
    fn iterate_diagonal_input() {
        let h = diag(&[0.0, 1.0, 2.5]);
        let report = iterate(&h, &h, &IterateOptions::default()).unwrap();
        assert!(report.steps.is_empty());
        assert_eq!(report.residual_offdiag, 0.0);
        assert!(report.converged);
        assert!(iterate(
            &h,
            &h,
            &IterateOptions {
                max_steps: 0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn iterate_reports_divergence() {
        // couplings comparable to the level spacing
        #[rustfmt::skip]
        let h = plain(4, &[
            0.0, -0.996, -0.954, 0.786,
            -0.996, 1.0, 0.514, 0.584,
            -0.954, 0.514, 2.0, -0.988,
            0.786, 0.584, -0.988, 3.0,
        ]);
        match iterate(&h, &h.diagonal_part(), &IterateOptions::default()) {
            Err(Error::Divergence { largest_ratio, .. }) => assert!(largest_ratio > 1.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn iterate_keeps_resonant_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let energies = [0.0, 0.0, 3.0, 5.0, 8.0, 8.0];
        let h = random_hermitian(&mut rng, &energies, 0.05);
        let report = iterate(&h, &diag(&energies), &IterateOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.resonant_blocks, vec![vec![0, 1], vec![4, 5]]);
        let before = hermitian_eig(&h).unwrap().eigenvalues;
        let after = hermitian_eig(&report.final_h).unwrap().eigenvalues;
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
        // the accumulated rotation reproduces final_h
        let rebuilt = conjugate(&report.accumulated_rotation, &h).unwrap();
        assert!((&rebuilt - &report.final_h).frobenius_norm() < 1e-12);
        // resonant blocks decouple: spectrum of each block is part of the spectrum
        let block_eigs = hermitian_eig(&report.block(0)).unwrap().eigenvalues;
        for e in block_eigs {
            assert!(before.iter().any(|x| (x - e).abs() < 1e-10));
        }
        // residual decreases at every step
        for w in report.residual_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn blocks_are_processed_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let blocks: Vec<(Operator, Operator)> = (0..6)
            .map(|k| {
                let energies: Vec<f64> = (0..(3 + k)).map(|i| 2.0 * i as f64).collect();
                (random_hermitian(&mut rng, &energies, 0.05), diag(&energies))
            })
            .collect();
        let parallel = iterate_blocks(&blocks, &IterateOptions::default()).unwrap();
        for ((h, r), report) in blocks.iter().zip(&parallel) {
            let serial = iterate(h, r, &IterateOptions::default()).unwrap();
            assert_eq!(serial.final_h, report.final_h);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn generator_solves_homological_equation(seed in 0u64..10_000, n in 2usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let energies: Vec<f64> = (0..n).map(|i| (i / 2) as f64 * 1.5 + rng.random_range(0.0..0.01) * (i % 2) as f64).collect();
            let h = random_hermitian(&mut rng, &energies, 0.1);
            let sh = split(&h, &diag(&energies), Some(0.02)).unwrap();
            let gs = solve_generator(&sh);
            let t = &gs.generator;
            prop_assert!(t.anti_hermiticity_residual() <= 1e-10 * t.frobenius_norm().max(1e-300));
            let lhs = commutator(t, &sh.h0).unwrap();
            let mut target = -&sh.v;
            let mut m = target.clone().into_matrix();
            for r in 0..n {
                for c in 0..n {
                    if sh.mask.is_resonant(r, c) {
                        m[(r, c)] = Complex64::new(0.0, 0.0);
                    }
                }
            }
            target = Operator::plain(m).unwrap();
            prop_assert!((&lhs - &target).frobenius_norm() < 1e-10);
            for r in 0..n {
                for c in 0..n {
                    if sh.mask.is_resonant(r, c) {
                        prop_assert_eq!(t.get(r, c).norm(), 0.0);
                    }
                }
            }
        }

        #[test]
        fn pipeline_preserves_spectrum(seed in 0u64..10_000, n in 2usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let energies: Vec<f64> = (0..n).map(|i| (i % 4) as f64 * 2.0).collect();
            let h = random_hermitian(&mut rng, &energies, 0.05);
            let report = iterate(&h, &diag(&energies), &IterateOptions::default()).unwrap();
            let before = hermitian_eig(&h).unwrap().eigenvalues;
            let after = hermitian_eig(&report.final_h).unwrap().eigenvalues;
            for (a, b) in before.iter().zip(&after) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
