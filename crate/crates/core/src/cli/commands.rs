//! The five commands: verify, derive, spectrum, evolve, sweep.
//!
//! Each returns a [`ResultTable`], a plain-text report and whether every
//! checked invariant held.

use super::config::{Duration, FrameChoice, ModelConfig, RunConfig};
use super::table::ResultTable;
use crate::basis::{sector_of, AtomicBasis, BasisState, SectorBasis, Space};
use crate::deformed::{
    effective_series, interaction_hamiltonian, small_rotation, verify_algebra, Su2HamiltonianSpec,
};
use crate::dynamics::{
    effective_rabi_period, eigenvalue_compare, fidelity_series, observables, scaling_study, Frame,
    TimeGrid,
};
use crate::error::{Error, Result};
use crate::lie_transform::{iterate, IterateOptions};
use crate::multilevel::{
    build_hamiltonian, compare_with_pipeline, effective_three_photon, effective_two_photon,
    empty_levels_mask, h0, h_diag_first, one_photon_coupling, t1_generator, t2_generators,
    CascadeModelSpec, CouplingLadder,
};
use crate::operator::{
    commutator, conjugate, excitation_op, expm_antihermitian, hermitian_eig, transition_op,
    unit_vector, Operator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;

/// Absolute tolerance for exact algebraic identities.
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Relative tolerance for spectrum preservation by the numerical pipeline.
pub const SPECTRUM_TOL: f64 = 1e-9;
/// Relative size of the random perturbations `verify` applies to g and Δ.
const JITTER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Derive,
    Spectrum,
    Evolve,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Derive => "derive",
            Command::Spectrum => "spectrum",
            Command::Evolve => "evolve",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub table: ResultTable,
    pub report: String,
    /// False when a checked invariant was violated.
    pub success: bool,
}

pub fn run_command(cfg: &RunConfig, command: Command) -> Result<CommandOutput> {
    let mut out = match (&cfg.model, command) {
        (ModelConfig::Deformed(s), Command::Verify) => verify_deformed(cfg, s),
        (ModelConfig::Cascade(s), Command::Verify) => verify_cascade(cfg, s),
        (ModelConfig::Deformed(s), Command::Derive) => derive_deformed(cfg, s),
        (ModelConfig::Cascade(s), Command::Derive) => derive_cascade(cfg, s),
        (ModelConfig::Deformed(s), Command::Spectrum) => spectrum_deformed(cfg, s),
        (ModelConfig::Cascade(s), Command::Spectrum) => spectrum_cascade(cfg, s),
        (ModelConfig::Deformed(s), Command::Evolve) => evolve_deformed(cfg, s),
        (ModelConfig::Cascade(s), Command::Evolve) => evolve_cascade(cfg, s),
        (ModelConfig::Deformed(s), Command::Sweep) => sweep_deformed(cfg, s),
        (ModelConfig::Cascade(s), Command::Sweep) => sweep_cascade(cfg, s),
    }
    .map_err(|e| Error::Model(format!("{}: {e}", command.name())))?;
    let mut meta = metadata(cfg, command);
    meta.append(&mut out.table.metadata);
    out.table.metadata = meta;
    Ok(out)
}

fn metadata(cfg: &RunConfig, command: Command) -> Vec<(String, String)> {
    let mut m = vec![
        (
            "tool".to_string(),
            format!("lieham {}", env!("CARGO_PKG_VERSION")),
        ),
        ("command".to_string(), command.name().to_string()),
        ("energy_unit".to_string(), cfg.energy_unit.clone()),
        ("seed".to_string(), cfg.run.seed.to_string()),
        ("order".to_string(), cfg.run.order.to_string()),
        ("max_steps".to_string(), cfg.run.max_steps.to_string()),
        (
            "resonance_tol".to_string(),
            cfg.run
                .resonance_tol
                .map_or("default".into(), |t| t.to_string()),
        ),
    ];
    // Wall-clock time would break byte-identical output, so the timestamp
    // only appears when the caller pins it.
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        m.push(("timestamp".to_string(), epoch));
    }
    m.push(("config".to_string(), cfg.source.trim_end().to_string()));
    m
}

fn iterate_options(cfg: &RunConfig) -> IterateOptions {
    IterateOptions {
        resonance_tol: cfg.run.resonance_tol,
        max_steps: cfg.run.max_steps,
        target_residual: cfg.run.target_residual,
    }
}

fn check_row(
    table: &mut ResultTable,
    report: &mut String,
    label: &str,
    value: f64,
    tol: f64,
) -> bool {
    let pass = value <= tol;
    table.push_labelled(label, vec![value, tol, f64::from(u8::from(pass))]);
    let _ = writeln!(
        report,
        "{:<4} {label:<36} {value:.3e} (tol {tol:.1e})",
        if pass { "ok" } else { "FAIL" }
    );
    pass
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn verify_deformed(_cfg: &RunConfig, spec: &Su2HamiltonianSpec) -> Result<CommandOutput> {
    let r = verify_algebra(&spec.module);
    let mut table = ResultTable::labelled(&["value", "tolerance", "pass"]);
    let mut report = format!(
        "deformed module: m0 = {}, dim = {}\n",
        spec.module.m0(),
        spec.module.dim()
    );
    let mut ok = true;
    ok &= check_row(
        &mut table,
        &mut report,
        "[X3,X+] - X+",
        r.raising,
        ALGEBRA_TOL,
    );
    ok &= check_row(
        &mut table,
        &mut report,
        "[X3,X-] + X-",
        r.lowering,
        ALGEBRA_TOL,
    );
    ok &= check_row(
        &mut table,
        &mut report,
        "[X+,X-] - P(X3) (interior)",
        r.structure_interior,
        ALGEBRA_TOL,
    );
    ok &= check_row(
        &mut table,
        &mut report,
        "X- |m0>",
        r.lowest_weight,
        ALGEBRA_TOL,
    );
    ok &= check_row(
        &mut table,
        &mut report,
        "corner defect - Phi(m0+dim)",
        r.corner_mismatch(),
        ALGEBRA_TOL * r.expected_corner.abs().max(1.0),
    );
    let _ = writeln!(
        report,
        "corner defect {:.6e}, Phi(m0+dim) {:.6e}",
        r.corner_defect, r.expected_corner
    );
    Ok(CommandOutput {
        table,
        report,
        success: ok,
    })
}

/// The working space of a cascade model: the full basis when a cutoff is
/// configured, otherwise the sector of the initial state.
enum CascadeSpace {
    Full(crate::basis::FullBasis),
    Sector(SectorBasis),
}

impl CascadeSpace {
    fn as_space(&self) -> &(dyn Space + Sync) {
        match self {
            CascadeSpace::Full(b) => b,
            CascadeSpace::Sector(s) => s,
        }
    }

    fn describe(&self) -> String {
        match self {
            CascadeSpace::Full(b) => format!(
                "full basis up to N = {} ({} states)",
                b.max_excitation(),
                b.total_states()
            ),
            CascadeSpace::Sector(s) => {
                format!("sector N = {} ({} states)", s.excitation(), s.len())
            }
        }
    }

    fn sectors(&self) -> Vec<SectorBasis> {
        match self {
            CascadeSpace::Full(b) => b.sectors().to_vec(),
            CascadeSpace::Sector(s) => vec![s.clone()],
        }
    }
}

fn initial_state(cfg: &RunConfig, spec: &CascadeModelSpec) -> Result<BasisState> {
    let level = cfg.evolve.level;
    if level > spec.levels() {
        return Err(Error::ConfigInvalid {
            field: "level".into(),
            message: format!("level {level} outside 1..={}", spec.levels()),
        });
    }
    Ok(BasisState::uniform(
        cfg.evolve.photons,
        spec.levels(),
        spec.atoms(),
        level,
    ))
}

fn initial_sector(cfg: &RunConfig, spec: &CascadeModelSpec) -> Result<SectorBasis> {
    sector_of(&initial_state(cfg, spec)?)
}

fn cascade_space(cfg: &RunConfig, spec: &CascadeModelSpec) -> Result<CascadeSpace> {
    Ok(match spec.max_excitation {
        Some(_) => CascadeSpace::Full(spec.full_basis()?),
        None => CascadeSpace::Sector(initial_sector(cfg, spec)?),
    })
}

fn u_n_residual(levels: usize, atoms: usize) -> Result<f64> {
    let space = AtomicBasis::new(levels, atoms, 0)?;
    let s: Vec<Vec<Operator>> = (1..=levels)
        .map(|i| (1..=levels).map(|j| transition_op(&space, i, j)).collect())
        .collect::<Result<_>>()?;
    let zero = Operator::zeros(space.dim(), space.tag());
    let mut worst = 0.0f64;
    for i in 0..levels {
        for j in 0..levels {
            for k in 0..levels {
                for l in 0..levels {
                    let mut expected = zero.clone();
                    if j == k {
                        expected = &expected + &s[i][l];
                    }
                    if i == l {
                        expected = &expected - &s[k][j];
                    }
                    let c = commutator(&s[i][j], &s[k][l])?;
                    worst = worst.max((&c - &expected).max_abs());
                }
            }
        }
    }
    Ok(worst)
}

fn jittered(spec: &CascadeModelSpec, rng: &mut ChaCha8Rng) -> Result<CascadeModelSpec> {
    let mut factor = || 1.0 + JITTER * (2.0 * rng.random::<f64>() - 1.0);
    let g: Vec<f64> = spec.g().iter().map(|x| x * factor()).collect();
    let d: Vec<f64> = spec.detunings().iter().map(|x| x * factor()).collect();
    let mut out = CascadeModelSpec::from_detunings(spec.levels(), spec.atoms(), g, d)?;
    out.max_excitation = spec.max_excitation;
    out.smallness = spec.smallness;
    Ok(out)
}

fn sorted_spectrum(h: &Operator) -> Result<Vec<f64>> {
    let mut e = hermitian_eig(h)?.eigenvalues;
    e.sort_by(f64::total_cmp);
    Ok(e)
}

fn pipeline_spectrum_shift(
    spec: &CascadeModelSpec,
    sector: &SectorBasis,
    options: &IterateOptions,
) -> Result<(f64, f64, bool)> {
    let h = build_hamiltonian(spec, sector, false)?;
    let report = iterate(&h, &h0(spec, sector)?, options)?;
    let shift = sorted_spectrum(&h)?
        .iter()
        .zip(&sorted_spectrum(&report.final_h)?)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((shift, SPECTRUM_TOL * (1.0 + h.max_abs()), report.converged))
}

fn verify_cascade(cfg: &RunConfig, spec: &CascadeModelSpec) -> Result<CommandOutput> {
    let space = cascade_space(cfg, spec)?;
    let sp = space.as_space();
    let mut table = ResultTable::labelled(&["value", "tolerance", "pass"]);
    let mut report = format!(
        "cascade model: N = {}, A = {}, {}\n",
        spec.levels(),
        spec.atoms(),
        space.describe()
    );
    let h = build_hamiltonian(spec, sp, false)?;
    let scale = h.max_abs().max(1.0);
    let mut ok = true;
    ok &= check_row(
        &mut table,
        &mut report,
        "H - H^dagger",
        h.hermiticity_residual(),
        ALGEBRA_TOL * scale,
    );
    let n_op = excitation_op(sp);
    ok &= check_row(
        &mut table,
        &mut report,
        "[H, N]",
        commutator(&h, &n_op)?.max_abs(),
        ALGEBRA_TOL * scale,
    );
    if spec.frequencies().is_some() {
        let full = build_hamiltonian(spec, sp, true)?;
        ok &= check_row(
            &mut table,
            &mut report,
            "[H_full, N]",
            commutator(&full, &n_op)?.max_abs(),
            ALGEBRA_TOL * full.max_abs().max(1.0),
        );
    }
    match t1_generator(spec, sp) {
        Ok(t1) => {
            let r = &commutator(&t1, &h0(spec, sp)?)? + &one_photon_coupling(spec, sp)?;
            ok &= check_row(
                &mut table,
                &mut report,
                "[T1, h0] + V",
                r.max_abs(),
                ALGEBRA_TOL * scale,
            );
        }
        Err(e) => {
            let _ = writeln!(report, "skip [T1, h0] + V: {e}");
        }
    }
    ok &= check_row(
        &mut table,
        &mut report,
        "u(N) commutation rule",
        u_n_residual(spec.levels(), spec.atoms())?,
        ALGEBRA_TOL,
    );

    let options = iterate_options(cfg);
    let sectors = space.sectors();
    let mut specs = vec![spec.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    for _ in 0..cfg.run.samples {
        specs.push(jittered(spec, &mut rng)?);
    }
    let shifts: Vec<(f64, f64, bool)> = specs
        .par_iter()
        .map(|s| {
            sectors
                .iter()
                .map(|sector| pipeline_spectrum_shift(s, sector, &options))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let worst = shifts.iter().map(|(s, tol, _)| s / tol).fold(0.0, f64::max);
    let unconverged = shifts.iter().filter(|r| !r.2).count();
    let _ = writeln!(
        report,
        "pipeline runs: {} specs x {} sectors (seed {})",
        specs.len(),
        sectors.len(),
        cfg.run.seed
    );
    ok &= check_row(
        &mut table,
        &mut report,
        "pipeline spectrum shift / tol",
        worst,
        1.0,
    );
    ok &= check_row(
        &mut table,
        &mut report,
        "pipeline runs short of target",
        unconverged as f64,
        0.0,
    );
    Ok(CommandOutput {
        table,
        report,
        success: ok,
    })
}

// ---------------------------------------------------------------------------
// derive
// ---------------------------------------------------------------------------

const DERIVE_COLUMNS: [&str; 5] = ["order", "i", "j", "re", "im"];

fn push_entries(table: &mut ResultTable, label: &str, order: usize, op: &Operator) {
    let floor = 1e-15 * op.max_abs();
    for r in 0..op.dim() {
        for c in 0..op.dim() {
            let z = op.get(r, c);
            if z.norm() > floor {
                table.push_labelled(label, vec![order as f64, r as f64, c as f64, z.re, z.im]);
            }
        }
    }
}

fn derive_deformed(cfg: &RunConfig, spec: &Su2HamiltonianSpec) -> Result<CommandOutput> {
    let order = cfg.run.order.min(3);
    let h = effective_series(spec, order)?;
    let mut table = ResultTable::labelled(&DERIVE_COLUMNS);
    push_entries(&mut table, "h_eff", order, &h);
    let mut report = format!(
        "effective Hamiltonian through order {order} in eps = g/delta = {:.6e}\n",
        spec.epsilon()
    );
    for k in 0..spec.module.dim() {
        let _ = writeln!(
            report,
            "  m = {:>6}: diagonal {:.12e}",
            spec.module.weight(k),
            h.get(k, k).re
        );
    }
    if cfg.run.order > 3 {
        let _ = writeln!(report, "note: the closed-form series stops at order 3");
    }
    Ok(CommandOutput {
        table,
        report,
        success: true,
    })
}

fn derive_cascade(cfg: &RunConfig, spec: &CascadeModelSpec) -> Result<CommandOutput> {
    let ladder = CouplingLadder::new(spec)?;
    let mut table = ResultTable::labelled(&DERIVE_COLUMNS);
    let mut report = String::from("coupling ladder (levels i -> j)\n");
    for w in &ladder.warnings {
        let _ = writeln!(report, "warning: {w}");
    }
    for (j, a) in ladder.alpha1.iter().enumerate() {
        table.push_labelled("alpha1", vec![1.0, (j + 1) as f64, (j + 2) as f64, *a, 0.0]);
        let _ = writeln!(report, "  alpha_{}^(1) = {a:.12e}", j + 1);
    }
    for (k, row) in ladder.psi.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            table.push_labelled(
                "psi",
                vec![(k + 1) as f64, (j + 1) as f64, (j + k + 2) as f64, *p, 0.0],
            );
            let _ = writeln!(report, "  psi_{}^({}) = {p:.12e}", j + 1, k + 1);
        }
    }
    if let Some(a2) = &ladder.alpha2 {
        for (j, a) in a2.iter().enumerate() {
            table.push_labelled("alpha2", vec![2.0, (j + 1) as f64, (j + 3) as f64, *a, 0.0]);
            let _ = writeln!(report, "  alpha_{}^(2) = {a:.12e}", j + 1);
        }
    }
    if let Some(b) = &ladder.beta {
        for (i, row) in b.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    table.push_labelled("beta", vec![2.0, (i + 1) as f64, (j + 1) as f64, *v, 0.0]);
                    let _ = writeln!(report, "  beta_{}{} = {v:.12e}", i + 1, j + 1);
                }
            }
        }
    }
    let mut ok = true;
    if matches!(spec.levels(), 3 | 4) && spec.require_resonance().is_ok() {
        let sector = initial_sector(cfg, spec)?;
        let cmp = compare_with_pipeline(spec, &sector, &iterate_options(cfg), cfg.run.order >= 3)?;
        let steps = cmp.transform.steps.len();
        let closed_order = spec.levels() - 1;
        let _ = writeln!(
            report,
            "sector N = {}: numerical pipeline {} steps, residual {:.3e}, {} resonant block(s) in the closed-form subspace",
            sector.excitation(),
            steps,
            cmp.transform.residual_offdiag,
            cmp.blocks.len()
        );
        for b in &cmp.blocks {
            let states: Vec<String> = b
                .states
                .iter()
                .map(|&k| sector.states()[k].to_string())
                .collect();
            let _ = writeln!(report, "  block {}", states.join(" "));
            push_entries(
                &mut table,
                "closed_form",
                closed_order,
                &embed(&b.closed_form, &b.states, sector.dim()),
            );
            push_entries(
                &mut table,
                "pipeline",
                steps,
                &embed(&b.pipeline, &b.states, sector.dim()),
            );
            let _ = writeln!(
                report,
                "    coupling: closed form {:.12e}, pipeline {:.12e}, relative difference {:.3e} ({:.3} max|alpha|)",
                b.coupling_scale,
                b.coupling_scale + b.coupling_error,
                b.relative_coupling_error(),
                b.relative_coupling_error() / cmp.max_alpha
            );
        }
        ok &= cmp.spectrum_shift <= SPECTRUM_TOL * (1.0 + cmp.transform.final_h.max_abs());
        let _ = writeln!(report, "  spectrum shift {:.3e}", cmp.spectrum_shift);
    } else {
        let _ = writeln!(
            report,
            "no closed-form effective Hamiltonian: needs N = 3 or 4 with Δ_N = 0"
        );
    }
    Ok(CommandOutput {
        table,
        report,
        success: ok,
    })
}

/// Places a block back at its sector indices.
fn embed(block: &Operator, states: &[usize], dim: usize) -> Operator {
    let mut m = Operator::zeros(dim, block.tag().clone()).into_matrix();
    for (a, &r) in states.iter().enumerate() {
        for (b, &c) in states.iter().enumerate() {
            m[(r, c)] = block.get(a, b);
        }
    }
    Operator::plain(m).expect("square")
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

fn spectrum_table(
    h_exact: &Operator,
    h_eff: &Operator,
    support: Option<&[usize]>,
) -> Result<(ResultTable, String)> {
    let cmp = eigenvalue_compare(h_exact, h_eff, support)?;
    let exact = hermitian_eig(h_exact)?.eigenvalues;
    let eff_op = match support {
        Some(s) => h_eff.submatrix(s),
        None => h_eff.clone(),
    };
    let eff = hermitian_eig(&eff_op)?.eigenvalues;
    let mut table = ResultTable::new(&[
        "exact_index",
        "effective_index",
        "exact",
        "effective",
        "error",
        "overlap2",
    ]);
    for &(i, k, err, ov) in &cmp.pairs {
        table.push(vec![i as f64, k as f64, exact[i], eff[k], err, ov]);
    }
    let report = format!(
        "{} effective eigenvalues paired: max error {:.6e}, rms {:.6e}\n",
        cmp.pairs.len(),
        cmp.max_error,
        cmp.rms_error
    );
    Ok((table, report))
}

fn spectrum_deformed(cfg: &RunConfig, spec: &Su2HamiltonianSpec) -> Result<CommandOutput> {
    let order = cfg.run.order.min(3);
    let (table, report) = spectrum_table(
        &interaction_hamiltonian(spec),
        &effective_series(spec, order)?,
        None,
    )?;
    Ok(CommandOutput {
        table,
        report: format!("order {order}, eps = {:.6e}\n{report}", spec.epsilon()),
        success: true,
    })
}

/// Closed-form effective Hamiltonian on the sector, the states it acts on,
/// and the frame rotation `U` with `H_eff ≈ U H U†`.
struct CascadeEffective {
    h: Operator,
    support: Option<Vec<usize>>,
    rotation: Operator,
    description: String,
}

fn cascade_effective(
    cfg: &RunConfig,
    spec: &CascadeModelSpec,
    sector: &SectorBasis,
) -> Result<CascadeEffective> {
    let t1 = t1_generator(spec, sector)?;
    let support_of = |levels: &[usize]| -> Vec<usize> {
        empty_levels_mask(sector, levels)
            .iter()
            .enumerate()
            .filter_map(|(k, keep)| keep.then_some(k))
            .collect()
    };
    match spec.levels() {
        3 => {
            let project = cfg.evolve.project;
            Ok(CascadeEffective {
                h: effective_two_photon(spec, sector, project)?,
                support: project.then(|| support_of(&[2])),
                rotation: expm_antihermitian(&t1)?,
                description: if project {
                    "two-photon closed form on states with level 2 empty".into()
                } else {
                    "two-photon h0 + h_diag + coupling on the whole sector".into()
                },
            })
        }
        4 => {
            let (a, b) = t2_generators(spec, sector)?;
            let u = &expm_antihermitian(&(&a + &b))? * &expm_antihermitian(&t1)?;
            Ok(CascadeEffective {
                h: effective_three_photon(spec, sector, cfg.run.order >= 3)?,
                support: Some(support_of(&[2, 3])),
                rotation: u,
                description: format!(
                    "three-photon closed form on states with levels 2, 3 empty{}",
                    if cfg.run.order >= 3 {
                        ", O(1/Δ³) terms kept"
                    } else {
                        ""
                    }
                ),
            })
        }
        n => Err(Error::Model(format!(
            "closed-form effective Hamiltonians exist for N = 3 and 4, got N = {n}"
        ))),
    }
}

fn ladder_warnings(spec: &CascadeModelSpec) -> Result<String> {
    Ok(CouplingLadder::new(spec)?
        .warnings
        .iter()
        .map(|w| format!("warning: {w}\n"))
        .collect())
}

fn spectrum_cascade(cfg: &RunConfig, spec: &CascadeModelSpec) -> Result<CommandOutput> {
    let sector = initial_sector(cfg, spec)?;
    let eff = cascade_effective(cfg, spec, &sector)?;
    let h = build_hamiltonian(spec, &sector, false)?;
    let (table, report) = spectrum_table(&h, &eff.h, eff.support.as_deref())?;
    Ok(CommandOutput {
        table,
        report: format!(
            "{}sector N = {}: {}\n{report}",
            ladder_warnings(spec)?,
            sector.excitation(),
            eff.description
        ),
        success: true,
    })
}

// ---------------------------------------------------------------------------
// evolve
// ---------------------------------------------------------------------------

fn time_grid(cfg: &RunConfig, period: f64) -> Result<TimeGrid> {
    let t_end = match cfg.evolve.duration {
        Duration::Periods(p) => p * period,
        Duration::Time(t) => t,
    };
    TimeGrid::linspace(t_end, cfg.evolve.points)
}

fn evolve_cascade(cfg: &RunConfig, spec: &CascadeModelSpec) -> Result<CommandOutput> {
    let state = initial_state(cfg, spec)?;
    let sector = sector_of(&state)?;
    let eff = cascade_effective(cfg, spec, &sector)?;
    let h = build_hamiltonian(spec, &sector, false)?;
    let psi0 = unit_vector(
        sector.len(),
        sector.index_of(&state).expect("state in its own sector"),
    );
    let frame = match cfg.evolve.frame {
        FrameChoice::Rotated => Frame::Rotated(&eff.rotation),
        FrameChoice::Bare => Frame::Bare,
    };
    let start = match frame {
        Frame::Rotated(u) => u.apply(&psi0),
        Frame::Bare => psi0.clone(),
    };
    let period = effective_rabi_period(&eff.h, &start)?;
    let grid = time_grid(cfg, period)?;
    let fid = fidelity_series(&h, &eff.h, &psi0, &grid, frame)?;
    let states = crate::dynamics::evolve(&h, &psi0, &grid)?;
    let obs = observables(&states, &sector);

    let mut columns: Vec<String> = vec!["t".into(), "fidelity".into(), "photons".into()];
    columns.extend((1..=spec.levels()).map(|j| format!("population_{j}")));
    columns.push("inversion".into());
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = ResultTable::new(&refs);
    for (k, o) in obs.iter().enumerate() {
        let mut row = vec![fid.times[k], fid.fidelity[k], o.photons];
        row.extend(&o.populations);
        row.push(o.inversion);
        table.push(row);
    }
    table.meta("rabi_period", super::table::format_value(period));
    let drift = obs
        .iter()
        .map(|o| (o.excitation - obs[0].excitation).abs())
        .fold(0.0, f64::max);
    let report = ladder_warnings(spec)?
        + &format!(
        "initial state {state}, sector N = {}\n{}\neffective Rabi period {period:.6e}, t_end {:.6e}\nmin fidelity {:.6} at t = {:.6e} (deficit {:.3e})\npopulation frozen by the effective Hamiltonian {:.3e}\nexcitation drift {drift:.3e}\n",
        sector.excitation(),
        eff.description,
        grid.end(),
        fid.min_fidelity,
        fid.argmin_time,
        fid.deficit(),
        fid.frozen_population,
    );
    Ok(CommandOutput {
        table,
        report,
        success: drift <= 1e-9,
    })
}

fn evolve_deformed(cfg: &RunConfig, spec: &Su2HamiltonianSpec) -> Result<CommandOutput> {
    let dim = spec.module.dim();
    let index = cfg.evolve.index;
    if index >= dim {
        return Err(Error::ConfigInvalid {
            field: "index".into(),
            message: format!("index {index} outside 0..{dim}"),
        });
    }
    let order = cfg.run.order.min(3);
    let h = interaction_hamiltonian(spec);
    let h_eff = effective_series(spec, order)?;
    let u = small_rotation(spec)?;
    let frame = match cfg.evolve.frame {
        FrameChoice::Rotated => Frame::Rotated(&u),
        FrameChoice::Bare => Frame::Bare,
    };
    // The fast scale of the exact dynamics.
    let period = 2.0 * std::f64::consts::PI / spec.delta.abs();
    let grid = time_grid(cfg, period)?;
    let psi0 = unit_vector(dim, index);
    let fid = fidelity_series(&h, &h_eff, &psi0, &grid, frame)?;
    let states = crate::dynamics::evolve(&h, &psi0, &grid)?;
    let x3 = spec.module.x3();
    let mut table = ResultTable::new(&["t", "fidelity", "x3"]);
    for (k, s) in states.iter().enumerate() {
        let x = s.dotc(&x3.apply(s)).re;
        table.push(vec![fid.times[k], fid.fidelity[k], x]);
    }
    let report = format!(
        "initial |m = {}>, order {order}, eps = {:.6e}\nt_end {:.6e} ({:.3} periods of 2 pi/delta)\nmin fidelity {:.12} at t = {:.6e}\n",
        spec.module.weight(index),
        spec.epsilon(),
        grid.end(),
        grid.end() / period,
        fid.min_fidelity,
        fid.argmin_time
    );
    Ok(CommandOutput {
        table,
        report,
        success: true,
    })
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

fn sweep_table(study: &crate::dynamics::ScalingStudy, variable: &str) -> ResultTable {
    let mut table = ResultTable::new(&[variable, "error", "fit"]);
    for (e, err) in study.epsilons.iter().zip(&study.errors) {
        let fit = (study.intercept + study.fitted_exponent * e.ln()).exp();
        table.push(vec![*e, *err, fit]);
    }
    table.meta(
        "fitted_exponent",
        super::table::format_value(study.fitted_exponent),
    );
    table
}

fn sweep_report(study: &crate::dynamics::ScalingStudy, what: &str) -> String {
    let mut r = format!("{what}\n");
    for (e, err) in study.epsilons.iter().zip(&study.errors) {
        let _ = writeln!(r, "  {e:.6e}  {err:.6e}");
    }
    let _ = writeln!(
        r,
        "fitted exponent {:.4} (residual rms {:.2e}){}",
        study.fitted_exponent,
        study.residual_rms,
        if study.flat { ", flat" } else { "" }
    );
    r
}

/// Evaluates the metric at every ε in parallel; results keep input order.
fn parallel_study(
    epsilons: &[f64],
    metric: impl Fn(f64) -> Result<f64> + Sync,
) -> Result<crate::dynamics::ScalingStudy> {
    let errors: Vec<f64> = epsilons
        .par_iter()
        .map(|&e| metric(e))
        .collect::<Result<_>>()?;
    let mut lookup = epsilons.iter().zip(errors);
    scaling_study(epsilons, |_| {
        Ok(lookup.next().expect("one error per epsilon").1)
    })
}

fn sweep_deformed(cfg: &RunConfig, spec: &Su2HamiltonianSpec) -> Result<CommandOutput> {
    let order = cfg.run.order.min(3);
    let delta = spec.delta;
    let study = parallel_study(&cfg.epsilons, |eps| {
        let s = spec.with_couplings(delta, eps * delta)?;
        Ok(eigenvalue_compare(
            &interaction_hamiltonian(&s),
            &effective_series(&s, order)?,
            None,
        )?
        .max_error)
    })?;
    Ok(CommandOutput {
        table: sweep_table(&study, "eps"),
        report: sweep_report(
            &study,
            &format!("order-{order} effective eigenvalue error against exact diagonalization, g = eps * {delta}"),
        ),
        success: true,
    })
}

fn sweep_cascade(cfg: &RunConfig, spec: &CascadeModelSpec) -> Result<CommandOutput> {
    let space = cascade_space(cfg, spec)?;
    let sp = space.as_space();
    let base = CouplingLadder::new(spec)?.max_alpha();
    if !(base > 0.0) {
        return Err(Error::Model("all couplings vanish".into()));
    }
    let study = parallel_study(&cfg.epsilons, |eps| {
        let s = spec.scaled(eps / base, 1.0)?;
        let h = build_hamiltonian(&s, sp, false)?;
        let u = expm_antihermitian(&t1_generator(&s, sp)?)?;
        let rotated = conjugate(&u, &h)?.diagonal_part();
        let predicted = &h0(&s, sp)? + &h_diag_first(&s, sp)?;
        Ok((&rotated - &predicted).max_abs())
    })?;
    Ok(CommandOutput {
        table: sweep_table(&study, "max_alpha"),
        report: sweep_report(
            &study,
            &format!(
                "first-order diagonal shift against the diagonal of exp(T1) H exp(-T1), couplings scaled to max|alpha|, {}",
                space.describe()
            ),
        ),
        success: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;

    const TWO_PHOTON: &str = "[model]\nkind = \"cascade\"\nlevels = 3\natoms = 1\ng = [1.0, 1.0]\ndetunings = [0.0, 20.0, 0.0]\n";
    const SPIN: &str =
        "[model]\nkind = \"deformed\"\nphi = \"spin\"\nj = 2.0\ndelta = 1.0\ncoupling = 0.05\n";

    fn run(text: &str, c: Command) -> CommandOutput {
        run_command(&parse_config(text).unwrap(), c).unwrap()
    }

    #[test]
    fn derive_prints_two_photon_coupling() {
        let out = run(TWO_PHOTON, Command::Derive);
        assert!(out.success);
        assert!(
            out.report.contains("psi_1^(2) = -1.000000000000e-1"),
            "{}",
            out.report
        );
        let labels = out.table.labels.as_ref().unwrap();
        let k = labels
            .iter()
            .zip(&out.table.rows)
            .position(|(l, r)| l == "psi" && r[0] == 2.0)
            .unwrap();
        assert_eq!(out.table.rows[k][3], -2.0 * 1.0 * 1.0 / 20.0);
        assert!(labels.iter().any(|l| l == "pipeline"));
    }

    #[test]
    fn verify_spin_module() {
        let out = run(SPIN, Command::Verify);
        assert!(out.success, "{}", out.report);
        assert!(out
            .table
            .column("value")
            .unwrap()
            .iter()
            .all(|v| *v < 1e-12));
    }

    #[test]
    fn verify_cascade_passes() {
        let out = run(
            &format!("{TWO_PHOTON}max_excitation = 3.0\n[run]\nsamples = 3\n"),
            Command::Verify,
        );
        assert!(out.success, "{}", out.report);
        assert_eq!(out.table.column("pass").unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn sweep_three_rows() {
        let out = run(SPIN, Command::Sweep);
        assert_eq!(out.table.rows.len(), 3);
        let slope: f64 = out
            .table
            .metadata
            .iter()
            .find(|(k, _)| k == "fitted_exponent")
            .unwrap()
            .1
            .parse()
            .unwrap();
        assert!(slope >= 2.5, "{slope}");
        let out = run(TWO_PHOTON, Command::Sweep);
        assert!(out
            .table
            .column("error")
            .unwrap()
            .windows(2)
            .all(|w| w[1] < w[0]));
    }

    #[test]
    fn spectrum_and_evolve() {
        let out = run(
            &format!("{TWO_PHOTON}[evolve]\nproject = true\n"),
            Command::Spectrum,
        );
        assert_eq!(out.table.rows.len(), 2);
        assert!(out.table.column("error").unwrap().iter().all(|e| *e < 0.05));
        let out = run(
            &format!("{TWO_PHOTON}[evolve]\npoints = 50\n"),
            Command::Evolve,
        );
        assert!(out.success);
        assert_eq!(out.table.rows.len(), 50);
        assert!(out
            .table
            .column("fidelity")
            .unwrap()
            .iter()
            .all(|f| *f > 0.9));
        let out = run(
            &format!("{SPIN}[evolve]\npoints = 40\nindex = 2\n"),
            Command::Evolve,
        );
        assert!(out
            .table
            .column("fidelity")
            .unwrap()
            .iter()
            .all(|f| *f > 0.999));
    }

    #[test]
    fn identical_runs_are_byte_identical() {
        let text = format!("{TWO_PHOTON}max_excitation = 2.0\n[run]\nseed = 9\nsamples = 2\n");
        let a = run(&text, Command::Verify).table.to_csv_string().unwrap();
        let b = run(&text, Command::Verify).table.to_csv_string().unwrap();
        assert_eq!(a, b);
        assert!(a.contains("# seed: 9\n"));
    }

    #[test]
    fn errors_name_the_command() {
        let text = "[model]\nkind = \"cascade\"\nlevels = 5\natoms = 1\ng = [1.0, 1.0, 1.0, 1.0]\ndetunings = [0.0, 10.0, 25.0, 45.0, 0.0]\n";
        let e = run_command(&parse_config(text).unwrap(), Command::Spectrum).unwrap_err();
        assert!(e.to_string().contains("spectrum:"), "{e}");
    }
}
