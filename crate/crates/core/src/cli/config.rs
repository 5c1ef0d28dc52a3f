//! Run configuration.
//!
//! The file is TOML restricted to flat sections of `key = value` lines:
//!
//! ```text
//! [model]                     # required
//! kind = "cascade"            # "cascade" | "deformed"
//! energy_unit = "g"           # label only
//!
//! # cascade
//! levels = 3
//! atoms = 1
//! g = [1.0, 1.0]
//! detunings = [0.0, 20.0, 0.0]        # or omega_f = … and omega = [ … ]
//! max_excitation = 4.0                # optional, multiple of 1/2
//!
//! # deformed
//! phi = "spin"                # "spin" | "boson" | "cubic" | "polynomial"
//! j = 2.0                     # spin
//! p = 5.0                     # cubic: Φ(m) = m(p + 1 − m)(q + m)
//! q = 1.0
//! coefficients = [0.0, 1.0]   # polynomial, ascending powers
//! m0 = -2.0                   # lowest weight (spin: −j, others: 0)
//! dim = 5                     # module dimension (spin: 2j + 1)
//! delta = 1.0
//! coupling = 0.05
//!
//! [run]
//! order = 3                   # deformed series order; cascade: ≥ 3 keeps O(1/Δ³) terms
//! resonance_tol = 1e-6        # absolute; default 1e−6·max|h₀|
//! max_steps = 50
//! target_residual = 1e-12
//! seed = 0
//! samples = 5                 # seeded random variants checked by `verify`
//!
//! [evolve]
//! photons = 4                 # cascade initial state |n; level⟩
//! level = 1
//! index = 0                   # deformed initial basis index
//! periods = 3.0               # or t_end = …
//! points = 400
//! frame = "rotated"           # "rotated" | "bare"
//! project = false             # N = 3: project out level 2
//!
//! [sweep]
//! epsilons = [0.1, 0.05, 0.025]
//! ```

use crate::basis::Excitation;
use crate::deformed::{build_module, StructuralPolynomial, Su2HamiltonianSpec};
use crate::error::{Error, Result};
use crate::multilevel::CascadeModelSpec;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    run: Option<RawRun>,
    evolve: Option<RawEvolve>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<String>,
    energy_unit: Option<String>,
    levels: Option<usize>,
    atoms: Option<usize>,
    g: Option<Vec<f64>>,
    detunings: Option<Vec<f64>>,
    omega_f: Option<f64>,
    omega: Option<Vec<f64>>,
    max_excitation: Option<f64>,
    phi: Option<String>,
    j: Option<f64>,
    p: Option<f64>,
    q: Option<f64>,
    coefficients: Option<Vec<f64>>,
    m0: Option<f64>,
    dim: Option<usize>,
    delta: Option<f64>,
    coupling: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    order: Option<usize>,
    resonance_tol: Option<f64>,
    max_steps: Option<usize>,
    target_residual: Option<f64>,
    seed: Option<u64>,
    samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvolve {
    photons: Option<usize>,
    level: Option<usize>,
    index: Option<usize>,
    periods: Option<f64>,
    t_end: Option<f64>,
    points: Option<usize>,
    frame: Option<String>,
    project: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum ModelConfig {
    Cascade(CascadeModelSpec),
    Deformed(Su2HamiltonianSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub order: usize,
    pub resonance_tol: Option<f64>,
    pub max_steps: usize,
    pub target_residual: Option<f64>,
    pub seed: u64,
    pub samples: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            order: 1,
            resonance_tol: None,
            max_steps: 50,
            target_residual: None,
            seed: 0,
            samples: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameChoice {
    Rotated,
    Bare,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Duration {
    Periods(f64),
    Time(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveSettings {
    pub photons: usize,
    pub level: usize,
    pub index: usize,
    pub duration: Duration,
    pub points: usize,
    pub frame: FrameChoice,
    pub project: bool,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        EvolveSettings {
            photons: 4,
            level: 1,
            index: 0,
            duration: Duration::Periods(3.0),
            points: 400,
            frame: FrameChoice::Rotated,
            project: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub energy_unit: String,
    pub run: RunSettings,
    pub evolve: EvolveSettings,
    pub epsilons: Vec<f64>,
    /// The text the configuration was parsed from, echoed into output metadata.
    pub source: String,
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        field: field.to_string(),
        message: message.into(),
    }
}

fn required<T>(value: Option<T>, field: &str) -> Result<T> {
    value.ok_or_else(|| invalid(field, "required"))
}

fn finite(value: f64, field: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(field, format!("must be finite, got {value}")))
    }
}

fn finite_all(values: &[f64], field: &str) -> Result<()> {
    for v in values {
        finite(*v, field)?;
    }
    Ok(())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let model = raw
        .model
        .ok_or_else(|| invalid("model", "section required"))?;
    let energy_unit = model.energy_unit.clone().unwrap_or_else(|| "1".to_string());
    let run = run_settings(raw.run.unwrap_or_default())?;
    let evolve = evolve_settings(raw.evolve.unwrap_or_default())?;
    let epsilons = raw
        .sweep
        .unwrap_or_default()
        .epsilons
        .unwrap_or_else(|| vec![0.1, 0.05, 0.025]);
    finite_all(&epsilons, "epsilons")?;
    if epsilons.iter().any(|e| *e <= 0.0) {
        return Err(invalid("epsilons", "must be positive"));
    }
    let kind = required(model.kind.clone(), "kind")?;
    let model = match kind.as_str() {
        "cascade" => ModelConfig::Cascade(cascade_model(model)?),
        "deformed" => ModelConfig::Deformed(deformed_model(model)?),
        other => {
            return Err(invalid(
                "kind",
                format!("expected \"cascade\" or \"deformed\", got \"{other}\""),
            ))
        }
    };
    Ok(RunConfig {
        model,
        energy_unit,
        run,
        evolve,
        epsilons,
        source: text.to_string(),
    })
}

fn reject(present: bool, field: &str, kind: &str) -> Result<()> {
    if present {
        Err(invalid(field, format!("not used by kind = \"{kind}\"")))
    } else {
        Ok(())
    }
}

fn cascade_model(m: RawModel) -> Result<CascadeModelSpec> {
    for (present, field) in [
        (m.phi.is_some(), "phi"),
        (m.j.is_some(), "j"),
        (m.p.is_some(), "p"),
        (m.q.is_some(), "q"),
        (m.coefficients.is_some(), "coefficients"),
        (m.m0.is_some(), "m0"),
        (m.dim.is_some(), "dim"),
        (m.delta.is_some(), "delta"),
        (m.coupling.is_some(), "coupling"),
    ] {
        reject(present, field, "cascade")?;
    }
    let levels = required(m.levels, "levels")?;
    let atoms = required(m.atoms, "atoms")?;
    let g = required(m.g, "g")?;
    finite_all(&g, "g")?;
    if g.len() + 1 != levels {
        return Err(invalid(
            "g",
            format!(
                "expected {} couplings for {levels} levels, got {}",
                levels.saturating_sub(1),
                g.len()
            ),
        ));
    }
    let spec = match (m.detunings, m.omega_f, m.omega) {
        (Some(d), None, None) => {
            finite_all(&d, "detunings")?;
            if d.len() != levels {
                return Err(invalid(
                    "detunings",
                    format!("expected {levels} values, got {}", d.len()),
                ));
            }
            if d[0] != 0.0 {
                return Err(invalid(
                    "detunings",
                    format!(
                        "Δ₁ must be 0 (detunings are measured from level 1), got {}",
                        d[0]
                    ),
                ));
            }
            CascadeModelSpec::from_detunings(levels, atoms, g, d)
        }
        (None, Some(wf), Some(w)) => {
            finite(wf, "omega_f")?;
            finite_all(&w, "omega")?;
            CascadeModelSpec::from_frequencies(levels, atoms, g, wf, w)
        }
        (None, None, None) => return Err(invalid("detunings", "required (or omega_f and omega)")),
        _ => {
            return Err(invalid(
                "detunings",
                "give either detunings or both omega_f and omega",
            ))
        }
    }
    .map_err(|e| invalid("model", e.to_string()))?;
    match m.max_excitation {
        Some(x) => {
            let e = Excitation::from_f64(finite(x, "max_excitation")?)
                .map_err(|e| invalid("max_excitation", e.to_string()))?;
            Ok(spec.with_max_excitation(e))
        }
        None => Ok(spec),
    }
}

fn deformed_model(m: RawModel) -> Result<Su2HamiltonianSpec> {
    for (present, field) in [
        (m.levels.is_some(), "levels"),
        (m.atoms.is_some(), "atoms"),
        (m.g.is_some(), "g"),
        (m.detunings.is_some(), "detunings"),
        (m.omega_f.is_some(), "omega_f"),
        (m.omega.is_some(), "omega"),
        (m.max_excitation.is_some(), "max_excitation"),
    ] {
        reject(present, field, "deformed")?;
    }
    let phi_kind = required(m.phi, "phi")?;
    let (phi, m0_default, dim_default) = match phi_kind.as_str() {
        "spin" => {
            let j = finite(required(m.j, "j")?, "j")?;
            if j <= 0.0 || (2.0 * j).fract() != 0.0 {
                return Err(invalid(
                    "j",
                    format!("must be a positive multiple of 1/2, got {j}"),
                ));
            }
            (
                StructuralPolynomial::spin(j),
                Some(-j),
                Some((2.0 * j) as usize + 1),
            )
        }
        "boson" => (StructuralPolynomial::boson(), Some(0.0), None),
        "cubic" => {
            let p = finite(required(m.p, "p")?, "p")?;
            let q = finite(required(m.q, "q")?, "q")?;
            let natural = (p.fract() == 0.0 && p >= 0.0).then(|| p as usize + 1);
            (StructuralPolynomial::cubic(p, q), Some(0.0), natural)
        }
        "polynomial" => {
            let c = required(m.coefficients, "coefficients")?;
            finite_all(&c, "coefficients")?;
            (StructuralPolynomial::new(c), None, None)
        }
        other => {
            return Err(invalid(
                "phi",
                format!("expected spin, boson, cubic or polynomial, got \"{other}\""),
            ))
        }
    };
    let m0 = match m.m0 {
        Some(v) => finite(v, "m0")?,
        None => required(m0_default, "m0")?,
    };
    let dim = match m.dim {
        Some(d) => d,
        None => required(dim_default, "dim")?,
    };
    let module = build_module(phi, m0, dim).map_err(|e| invalid("phi", e.to_string()))?;
    let delta = finite(required(m.delta, "delta")?, "delta")?;
    let coupling = finite(required(m.coupling, "coupling")?, "coupling")?;
    Su2HamiltonianSpec::new(delta, coupling, module).map_err(|e| invalid("delta", e.to_string()))
}

fn run_settings(r: RawRun) -> Result<RunSettings> {
    let d = RunSettings::default();
    if let Some(tol) = r.resonance_tol {
        if !(finite(tol, "resonance_tol")? >= 0.0) {
            return Err(invalid("resonance_tol", "must be nonnegative"));
        }
    }
    if let Some(t) = r.target_residual {
        if !(finite(t, "target_residual")? > 0.0) {
            return Err(invalid("target_residual", "must be positive"));
        }
    }
    let max_steps = r.max_steps.unwrap_or(d.max_steps);
    if max_steps == 0 {
        return Err(invalid("max_steps", "must be at least 1"));
    }
    let order = r.order.unwrap_or(d.order);
    if order == 0 {
        return Err(invalid("order", "must be at least 1"));
    }
    Ok(RunSettings {
        order,
        resonance_tol: r.resonance_tol,
        max_steps,
        target_residual: r.target_residual,
        seed: r.seed.unwrap_or(d.seed),
        samples: r.samples.unwrap_or(d.samples),
    })
}

fn evolve_settings(e: RawEvolve) -> Result<EvolveSettings> {
    let d = EvolveSettings::default();
    let duration = match (e.periods, e.t_end) {
        (Some(_), Some(_)) => return Err(invalid("t_end", "give either periods or t_end")),
        (Some(p), None) if finite(p, "periods")? > 0.0 => Duration::Periods(p),
        (None, Some(t)) if finite(t, "t_end")? > 0.0 => Duration::Time(t),
        (None, None) => d.duration,
        (Some(_), None) => return Err(invalid("periods", "must be positive")),
        (None, Some(_)) => return Err(invalid("t_end", "must be positive")),
    };
    let points = e.points.unwrap_or(d.points);
    if points < 2 {
        return Err(invalid("points", "need at least 2"));
    }
    let frame = match e.frame.as_deref() {
        None | Some("rotated") => FrameChoice::Rotated,
        Some("bare") => FrameChoice::Bare,
        Some(other) => {
            return Err(invalid(
                "frame",
                format!("expected \"rotated\" or \"bare\", got \"{other}\""),
            ))
        }
    };
    let level = e.level.unwrap_or(d.level);
    if level == 0 {
        return Err(invalid("level", "levels are numbered from 1"));
    }
    Ok(EvolveSettings {
        photons: e.photons.unwrap_or(d.photons),
        level,
        index: e.index.unwrap_or(d.index),
        duration,
        points,
        frame,
        project: e.project.unwrap_or(d.project),
    })
}
