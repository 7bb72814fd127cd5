//! Experiment configuration: a TOML file with one table per concern.
//! Every table is optional and falls back to the defaults below.

use std::fmt;
use std::path::{Path, PathBuf};

use kgscatter_core::soliton::check_speed;
use kgscatter_core::{ChargeProfile, Grid, PerturbationSpec, RunSettings, Scheme, Vec3};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Soliton,
    Spectral,
    WienerCheck,
    Frozen,
    Scatter,
    DecayProbe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Soliton => "soliton",
            Command::Spectral => "spectral",
            Command::WienerCheck => "wiener-check",
            Command::Frozen => "frozen",
            Command::Scatter => "scatter",
            Command::DecayProbe => "decay-probe",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub m: f64,
    pub beta: f64,
    pub n: usize,
    pub l: f64,
    pub profile: ChargeProfile,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            m: 1.0,
            beta: 2.0,
            n: 64,
            l: 16.0,
            profile: ChargeProfile::default(),
        }
    }
}

/// Soliton parameters σ = (b, v); b is ignored in the moving-frame commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolitonConfig {
    pub b: [f64; 3],
    pub v: [f64; 3],
}

impl Default for SolitonConfig {
    fn default() -> Self {
        SolitonConfig {
            b: [0.0; 3],
            v: [0.3, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub scheme: Scheme,
    /// Extra snapshot times; the final state is always written.
    pub snapshots: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dt: 0.1,
            t_end: 5.0,
            sample_every: 5,
            scheme: Scheme::Yoshida4,
            snapshots: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn settings(&self) -> RunSettings {
        RunSettings {
            dt: self.dt,
            t_end: self.t_end,
            sample_every: self.sample_every,
            scheme: self.scheme,
        }
    }
}

/// Random transversal perturbation; the seed comes from the top level.
/// A zero size means the unperturbed soliton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub relative_size: f64,
    pub bumps: usize,
    pub spread: f64,
    pub width_min: f64,
    pub width_max: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        let d = PerturbationSpec::default();
        PerturbationConfig {
            relative_size: 0.0,
            bumps: d.bumps,
            spread: d.spread,
            width_min: d.width_min,
            width_max: d.width_max,
        }
    }
}

impl PerturbationConfig {
    pub fn spec(&self, seed: u64) -> PerturbationSpec {
        PerturbationSpec {
            seed,
            relative_size: self.relative_size,
            bumps: self.bumps,
            spread: self.spread,
            width_min: self.width_min,
            width_max: self.width_max,
        }
    }

    /// Radius of the ball holding the random bumps.
    pub fn data_radius(&self) -> f64 {
        self.spread * 3f64.sqrt() + self.width_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub omega_min: f64,
    pub omega_max: f64,
    pub samples: usize,
    /// Run the |ω||H(iω)| tail audit on [μ + 1, tail_max].
    pub tail: bool,
    pub tail_max: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            omega_min: 0.05,
            omega_max: 6.0,
            samples: 40,
            tail: false,
            tail_max: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WienerConfig {
    pub k_max: f64,
    pub samples: usize,
    pub threshold: f64,
}

impl Default for WienerConfig {
    fn default() -> Self {
        WienerConfig {
            k_max: 20.0,
            samples: 4001,
            threshold: 1e-6,
        }
    }
}

/// Frozen linear flow from P_v(random compact data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrozenConfig {
    /// Also evolve the data with τ₄ added and track |Q(t)|.
    pub secular: bool,
    pub window: [f64; 2],
}

impl Default for FrozenConfig {
    fn default() -> Self {
        FrozenConfig {
            secular: true,
            window: [2.0, 5.0],
        }
    }
}

/// Free moving-frame propagation of a smooth bump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub radius: f64,
    pub step: f64,
    pub t_end: f64,
    pub window: [f64; 2],
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            radius: 3.0,
            step: 0.5,
            t_end: 10.0,
            window: [3.0, 10.0],
        }
    }
}

/// Decay-fit window for `scatter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterConfig {
    pub window: [f64; 2],
    /// Also evaluate ‖N‖_β at each sample.
    pub remainder: bool,
    /// Cauchy threshold on |v(T) − v(3T/4)|.
    pub cauchy_threshold: f64,
}

impl Default for ScatterConfig {
    fn default() -> Self {
        ScatterConfig {
            window: [2.0, 5.0],
            remainder: false,
            cauchy_threshold: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub command: Command,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub soliton: SolitonConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub wiener: WienerConfig,
    #[serde(default)]
    pub frozen: FrozenConfig,
    #[serde(default)]
    pub scatter: ScatterConfig,
    #[serde(default)]
    pub decay: DecayConfig,
}

fn default_seed() -> u64 {
    PerturbationSpec::default().seed
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn invalid(field: &str, reason: impl fmt::Display) -> CliError {
    CliError::Validation {
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

fn check_window(field: &str, w: [f64; 2]) -> Result<(), CliError> {
    if w[0] >= 0.0 && w[0] < w[1] {
        Ok(())
    } else {
        Err(invalid(field, format!("need 0 <= t0 < t1, got {w:?}")))
    }
}

impl ExperimentSpec {
    pub fn new(command: Command) -> Self {
        ExperimentSpec {
            command,
            seed: default_seed(),
            out: default_out(),
            model: ModelConfig::default(),
            soliton: SolitonConfig::default(),
            run: RunConfig::default(),
            perturbation: PerturbationConfig::default(),
            spectral: SpectralConfig::default(),
            wiener: WienerConfig::default(),
            frozen: FrozenConfig::default(),
            scatter: ScatterConfig::default(),
            decay: DecayConfig::default(),
        }
    }

    pub fn v(&self) -> Vec3 {
        Vec3::from(self.soliton.v)
    }

    pub fn b(&self) -> Vec3 {
        Vec3::from(self.soliton.b)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// Checks the parameters each command relies on.
    pub fn validate(&self) -> Result<(), CliError> {
        let m = &self.model;
        if !(m.m > 0.0 && m.m.is_finite()) {
            return Err(invalid("model.m", "mass must be positive"));
        }
        if !(m.beta > 0.0 && m.beta.is_finite()) {
            return Err(invalid("model.beta", "must be positive"));
        }
        let grid = Grid::new(m.n, m.l).map_err(|e| invalid("model.n", e))?;
        m.profile.validate().map_err(|e| invalid("model.profile", e))?;
        check_speed(self.v()).map_err(|e| invalid("soliton.v", e))?;
        if self.soliton.b.iter().chain(&self.soliton.v).any(|x| !x.is_finite()) {
            return Err(invalid("soliton", "entries must be finite"));
        }
        match self.command {
            Command::Simulate | Command::Frozen | Command::Scatter => {
                self.run
                    .settings()
                    .validate(&grid)
                    .map_err(|e| invalid("run", e))?;
                if let Some(t) = self.run.snapshots.iter().find(|t| !(**t >= 0.0 && **t <= self.run.t_end)) {
                    return Err(invalid("run.snapshots", format!("time {t} outside [0, t_end]")));
                }
                let p = &self.perturbation;
                if !(p.relative_size >= 0.0 && p.relative_size.is_finite()) {
                    return Err(invalid("perturbation.relative_size", "must be nonnegative"));
                }
                if !(p.width_min > 0.0 && p.width_min < p.width_max) || p.bumps == 0 || !(p.spread >= 0.0) {
                    return Err(invalid("perturbation", "need bumps >= 1, spread >= 0, 0 < width_min < width_max"));
                }
                if p.data_radius() >= m.l {
                    return Err(invalid("perturbation", "support clipped by the box"));
                }
            }
            _ => {}
        }
        match self.command {
            Command::Frozen => check_window("frozen.window", self.frozen.window)?,
            Command::Scatter => {
                check_window("scatter.window", self.scatter.window)?;
                if !(self.scatter.cauchy_threshold > 0.0) {
                    return Err(invalid("scatter.cauchy_threshold", "must be positive"));
                }
            }
            Command::Spectral => {
                let s = &self.spectral;
                if !(s.omega_min.is_finite() && s.omega_max.is_finite() && s.omega_min <= s.omega_max) {
                    return Err(invalid("spectral", "need omega_min <= omega_max"));
                }
                if s.samples == 0 {
                    return Err(invalid("spectral.samples", "must be at least 1"));
                }
                if s.tail && !(s.tail_max.is_finite() && s.tail_max > 2.0 * m.m) {
                    return Err(invalid("spectral.tail_max", "must exceed μ + 1"));
                }
            }
            Command::WienerCheck => {
                let w = &self.wiener;
                if !(w.k_max > 0.0) || w.samples < 2 || !(w.threshold >= 0.0) {
                    return Err(invalid("wiener", "need k_max > 0, samples >= 2, threshold >= 0"));
                }
            }
            Command::DecayProbe => {
                let d = &self.decay;
                if !(d.radius > 0.0 && d.step > 0.0 && d.t_end > 0.0) {
                    return Err(invalid("decay", "radius, step and t_end must be positive"));
                }
                check_window("decay.window", d.window)?;
                if d.t_end + d.radius >= m.l {
                    return Err(invalid("decay.t_end", format!("wraps around the box: t_end + radius must stay below L = {}", m.l)));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Parses and validates a config text.
pub fn parse_config_str(text: &str) -> Result<ExperimentSpec, CliError> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].lines().count().max(1));
        CliError::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
    parse_config_str(&text)
}
