//! Experiment files: TOML with every table closed to unknown keys.

use std::fs;
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::Deserialize;

use crate::davies::{BathSpec, Statistics};
use crate::linalg::{self, c};
use crate::metropolis::MetropolisConfig;
use crate::models::{self, defaults, Dissipation, DotOccupation, ModelInstance};
use crate::operators::{self, BlochVector, DensityMatrix, InverseTemperature};
use crate::spectral;

/// A complete experiment description.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub bath: BathConfig,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub transform: TransformSpec,
    #[serde(default)]
    pub time: TimeGrid,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Qubit {
        #[serde(default = "qubit_omega")]
        omega: f64,
    },
    Tfim {
        #[serde(default = "tfim_sites")]
        sites: usize,
        #[serde(default = "unit")]
        coupling: f64,
        #[serde(default = "tfim_field")]
        field: f64,
    },
    /// Energies in GHz, bath temperature in Kelvin.
    Atom {
        #[serde(default = "atom_epsilon")]
        epsilon: f64,
    },
    /// Energies in GHz, bath temperature in Kelvin.
    Dot {
        #[serde(default = "dot_epsilon")]
        epsilon: f64,
        #[serde(default = "dot_charging")]
        charging: f64,
        #[serde(default)]
        occupation: OccupationSpec,
    },
}

fn qubit_omega() -> f64 {
    defaults::QUBIT_OMEGA
}
fn tfim_sites() -> usize {
    defaults::TFIM_L
}
fn unit() -> f64 {
    1.0
}
fn tfim_field() -> f64 {
    defaults::TFIM_H
}
fn atom_epsilon() -> f64 {
    defaults::ATOM_EPSILON
}
fn dot_epsilon() -> f64 {
    defaults::DOT_EPSILON
}
fn dot_charging() -> f64 {
    defaults::DOT_CHARGING
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum OccupationSpec {
    #[default]
    PerTransition,
    Single,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticsSpec {
    Bose,
    Fermi,
}

/// Bath temperature (or `beta`, which may be `inf`), statistics and coupling.
/// Unset fields take the model defaults.
#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub temperature: Option<f64>,
    pub beta: Option<f64>,
    pub statistics: Option<StatisticsSpec>,
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    Bloch {
        r: [f64; 3],
    },
    /// Gibbs state of the system Hamiltonian, temperature in the bath's units.
    Thermal {
        temperature: f64,
    },
    RandomMixed {
        #[serde(default = "samples")]
        samples: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Uniform superposition of the computational basis, `|+>^L` for qubits.
    #[default]
    PurePlus,
    /// CSV `i,j,re,im` with a header line; path relative to the config file.
    File {
        path: PathBuf,
    },
}

fn samples() -> usize {
    1000
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TransformSpec {
    #[default]
    None,
    Exact,
    UnitaryMetropolis(AnnealSpec),
    SwapMetropolis(AnnealSpec),
}

/// Annealing parameters; unset values take the unitary or swap defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSpec {
    /// 1-based mode indices entering the cost.
    pub modes: Vec<usize>,
    pub cooling_tau: Option<f64>,
    pub threshold: Option<f64>,
    pub nano: Option<usize>,
    pub micro: Option<usize>,
    #[serde(rename = "macro")]
    pub macro_m: Option<usize>,
    pub max_iterations: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub fermionic: bool,
    pub chains: Option<usize>,
}

impl AnnealSpec {
    pub fn metropolis_config(&self, swap: bool, seed_override: Option<u64>) -> crate::Result<MetropolisConfig> {
        let seed = seed_override.or(self.seed).unwrap_or(0);
        let modes = self.modes.clone();
        let mut cfg = if swap { MetropolisConfig::swap(modes, seed) } else { MetropolisConfig::unitary(modes, seed) };
        if let Some(x) = self.cooling_tau {
            cfg.cooling_tau = x;
        }
        if let Some(x) = self.threshold {
            cfg.threshold_eps = x;
        }
        if let Some(x) = self.nano {
            cfg.nano_n = x;
        }
        if let Some(x) = self.micro {
            cfg.micro_m = x;
        }
        if let Some(x) = self.macro_m {
            cfg.macro_m = x;
        }
        if let Some(x) = self.max_iterations {
            cfg.max_total_iterations = x;
        }
        if cfg.target_modes.is_empty() {
            return Err(crate::Error::Validation("transform.modes must list at least one mode".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_max: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
    /// First non-zero time of a log grid.
    pub t_min: Option<f64>,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { t_max: 10.0, points: 201, spacing: Spacing::Linear, t_min: None }
    }
}

impl TimeGrid {
    pub fn times(&self) -> crate::Result<Vec<f64>> {
        if !(self.t_max.is_finite() && self.t_max >= 0.0) || self.points == 0 {
            return Err(crate::Error::Validation("time.t_max must be >= 0 and time.points >= 1".into()));
        }
        Ok(match self.spacing {
            Spacing::Linear => spectral::linear_times(self.t_max, self.points),
            Spacing::Log => {
                let t_min = self.t_min.unwrap_or(self.t_max * 1e-4);
                if !(t_min > 0.0 && t_min < self.t_max) || self.points < 2 {
                    return Err(crate::Error::Validation(
                        "log grids need 0 < t_min < t_max and at least 2 points".into(),
                    ));
                }
                spectral::log_times(t_min, self.t_max, self.points)
            }
        })
    }
}

/// Column names accepted in `output.observables`, in CSV order after `t`.
pub const OBSERVABLES: [&str; 7] = ["F_neq", "D", "P", "C", "L1", "T1", "Pi"];

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Trajectory columns to keep; all when unset. Order in the file is fixed.
    pub observables: Option<Vec<String>>,
    /// Dump every evolved state as `t,i,j,re,im`.
    #[serde(default)]
    pub states: bool,
    /// Emit a gnuplot script next to each dataset.
    #[serde(default = "yes")]
    pub gnuplot: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, observables: None, states: false, gnuplot: true }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.check().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    /// Cross-field checks that the schema cannot express.
    fn check(&self) -> crate::Result<()> {
        let explicit = matches!(self.model, ModelSpec::Atom { .. } | ModelSpec::Dot { .. });
        if explicit && self.bath.beta.is_some() {
            return Err(crate::Error::Validation("bath.beta: atom and dot models take bath.temperature in Kelvin".into()));
        }
        if self.bath.temperature.is_some() && self.bath.beta.is_some() {
            return Err(crate::Error::Validation("bath: give either temperature or beta, not both".into()));
        }
        if let Some(obs) = &self.output.observables {
            if let Some(bad) = obs.iter().find(|o| !OBSERVABLES.contains(&o.as_str())) {
                return Err(crate::Error::Validation(format!(
                    "output.observables: unknown column {bad:?}, expected one of {OBSERVABLES:?}"
                )));
            }
        }
        self.time.times()?;
        Ok(())
    }

    /// Bath temperature in the model's units, after applying `beta`.
    fn bath_temperature(&self, default: f64) -> f64 {
        match (self.bath.temperature, self.bath.beta) {
            (Some(t), _) => t,
            (None, Some(b)) if b.is_infinite() => 0.0,
            (None, Some(b)) => 1.0 / b,
            (None, None) => default,
        }
    }

    pub fn build_model(&self) -> crate::Result<ModelInstance> {
        let bath = &self.bath;
        let model = match self.model {
            ModelSpec::Qubit { omega } => models::single_qubit(
                omega,
                self.bath_temperature(defaults::QUBIT_TEMPERATURE),
                bath.gamma.unwrap_or(defaults::QUBIT_GAMMA),
            )?,
            ModelSpec::Tfim { sites, coupling, field } => models::tfim(
                sites,
                coupling,
                field,
                self.bath_temperature(defaults::TFIM_TEMPERATURE),
                bath.gamma.unwrap_or(defaults::TFIM_GAMMA),
            )?,
            ModelSpec::Atom { epsilon } => models::two_level_atom(
                epsilon,
                bath.gamma.unwrap_or(defaults::ATOM_GAMMA),
                self.bath_temperature(defaults::ATOM_TEMPERATURE_KELVIN),
            )?,
            ModelSpec::Dot { epsilon, charging, occupation } => models::quantum_dot(
                epsilon,
                charging,
                bath.gamma.unwrap_or(defaults::DOT_GAMMA),
                self.bath_temperature(defaults::DOT_TEMPERATURE_KELVIN),
                match occupation {
                    OccupationSpec::PerTransition => DotOccupation::PerTransition,
                    OccupationSpec::Single => DotOccupation::Single,
                },
            )?,
        };
        let Some(stats) = bath.statistics else { return Ok(model) };
        let stats = match stats {
            StatisticsSpec::Bose => Statistics::Bose,
            StatisticsSpec::Fermi => Statistics::Fermi,
        };
        match &model.dissipation {
            Dissipation::Davies(b) => {
                let mut out = model.clone();
                out.dissipation = Dissipation::Davies(BathSpec::new(b.beta(), stats, b.gamma())?);
                Ok(out)
            }
            Dissipation::Explicit { .. } => {
                let native = if matches!(self.model, ModelSpec::Dot { .. }) { Statistics::Fermi } else { Statistics::Bose };
                if stats == native {
                    Ok(model)
                } else {
                    Err(crate::Error::Validation(format!("bath.statistics: {} fixes {native:?} statistics", model.name)))
                }
            }
        }
    }

    /// Initial state; `base` resolves relative file paths, `seed` overrides the
    /// random-state seed.
    pub fn build_initial(&self, model: &ModelInstance, base: &Path, seed: Option<u64>) -> crate::Result<DensityMatrix> {
        let d = model.dim();
        match &self.initial {
            InitialState::Bloch { r } => {
                if d != 2 {
                    return Err(crate::Error::Validation(format!("initial.kind = \"bloch\" needs d = 2, got {d}")));
                }
                Ok(operators::bloch_to_state(&BlochVector::new(*r)?))
            }
            InitialState::Thermal { temperature } => {
                let t = match self.model {
                    ModelSpec::Atom { .. } | ModelSpec::Dot { .. } => models::kelvin_to_ghz(*temperature),
                    _ => *temperature,
                };
                let basis = operators::diagonalize(&model.hamiltonian)?;
                Ok(operators::thermal_state(&basis, InverseTemperature::from_temperature(t)?))
            }
            InitialState::RandomMixed { samples, seed: s } => {
                operators::random_mixed_state(d, *samples, seed.unwrap_or(*s))
            }
            InitialState::PurePlus => {
                let amp = c(1.0 / (d as f64).sqrt(), 0.0);
                DensityMatrix::pure(&vec![amp; d])
            }
            InitialState::File { path } => {
                let path = if path.is_absolute() { path.clone() } else { base.join(path) };
                let text = fs::read_to_string(&path).map_err(|e| {
                    crate::Error::Validation(format!("initial.path {}: {e}", path.display()))
                })?;
                DensityMatrix::new(parse_state_csv(&text, d)?)
            }
        }
    }
}

/// Parses `i,j,re,im` rows after a header into a `d x d` matrix; absent entries are zero.
pub fn parse_state_csv(text: &str, d: usize) -> crate::Result<linalg::CMat> {
    let mut m = Mat::<linalg::c64>::zeros(d, d);
    for (line_no, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || crate::Error::Validation(format!("state file line {}: expected i,j,re,im", line_no + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        let i: usize = f[0].parse().map_err(|_| bad())?;
        let j: usize = f[1].parse().map_err(|_| bad())?;
        let re: f64 = f[2].parse().map_err(|_| bad())?;
        let im: f64 = f[3].parse().map_err(|_| bad())?;
        if i >= d || j >= d {
            return Err(crate::Error::DimensionMismatch { expected: d, found: i.max(j) + 1 });
        }
        m[(i, j)] = c(re, im);
    }
    Ok(m)
}
