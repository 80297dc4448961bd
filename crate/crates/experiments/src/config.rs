//! Experiment configuration: a TOML document with `[env]`, `[kernel]`, `[run]`,
//! `[schedule]` and `[output]` tables.
//!
//! Only `env.reward_name`, `run.K` and `run.seeds` are required; everything else
//! has a default. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use prosto_core::agent::{InitStateMode, Multipliers, ProstoConfig, ScheduleMode};
use prosto_core::environment::RewardName;
use prosto_core::kernel::KernelSpec;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// `Φ(−1)`, the standard normal CDF at −1.
pub const PHI_MINUS_ONE: f64 = 0.158_655_253_931_457_05;

/// Largest δ accepted without `run.allow_large_delta`.
pub const MAX_DELTA: f64 = 0.25 * PHI_MINUS_ONE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    #[serde(default)]
    pub kernel: KernelSection,
    pub run: RunSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub reward_name: RewardName,
    #[serde(default = "default_grid")]
    pub m_s: usize,
    #[serde(default = "default_grid")]
    pub m_a: usize,
    #[serde(rename = "H", default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_init")]
    pub init_state_mode: InitStateMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Matern,
    SquaredExponential,
}

impl fmt::Display for FamilyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Matern => "matern",
            Self::SquaredExponential => "squared_exponential",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "default_family")]
    pub family: FamilyName,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_lengthscale")]
    pub lengthscale: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            family: default_family(),
            nu: default_nu(),
            lengthscale: default_lengthscale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(rename = "K")]
    pub episodes: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Accept δ above the guarantee's threshold (a warning is logged).
    #[serde(default)]
    pub allow_large_delta: bool,
    #[serde(default = "yes")]
    pub pool_transitions: bool,
    #[serde(default = "yes")]
    pub check_noise_domination: bool,
    #[serde(default = "yes")]
    pub check_gain_domination: bool,
    /// Seeds run concurrently on this many threads.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "default_mode")]
    pub mode: ScheduleMode,
    #[serde(default)]
    pub multipliers: MultiplierSection,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            multipliers: MultiplierSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierSection {
    #[serde(default = "practical_c_tau")]
    pub c_tau: f64,
    #[serde(default = "practical_c_lambda")]
    pub c_lambda: f64,
    #[serde(default = "practical_c_eps")]
    pub c_eps: f64,
    #[serde(default = "practical_c_beta_t")]
    pub c_beta_t: f64,
    #[serde(default = "practical_c_r")]
    pub c_r: f64,
}

impl Default for MultiplierSection {
    fn default() -> Self {
        let m = Multipliers::<f64>::practical();
        Self {
            c_tau: m.c_tau,
            c_lambda: m.c_lambda,
            c_eps: m.c_eps,
            c_beta_t: m.c_beta_t,
            c_r: m.c_r,
        }
    }
}

impl From<MultiplierSection> for Multipliers<f64> {
    fn from(m: MultiplierSection) -> Self {
        Multipliers {
            c_tau: m.c_tau,
            c_lambda: m.c_lambda,
            c_eps: m.c_eps,
            c_beta_t: m.c_beta_t,
            c_r: m.c_r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "yes")]
    pub emit_plots: bool,
    #[serde(default)]
    pub verbose: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            out_dir: default_out_dir(),
            emit_plots: true,
            verbose: false,
        }
    }
}

fn default_grid() -> usize {
    8
}
fn default_horizon() -> usize {
    4
}
fn default_init() -> InitStateMode {
    InitStateMode::Uniform
}
fn default_family() -> FamilyName {
    FamilyName::Matern
}
fn default_nu() -> f64 {
    2.5
}
fn default_lengthscale() -> f64 {
    0.2
}
fn default_delta() -> f64 {
    0.01
}
fn default_workers() -> usize {
    1
}
fn default_mode() -> ScheduleMode {
    ScheduleMode::Practical
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}
fn yes() -> bool {
    true
}
fn practical_c_tau() -> f64 {
    MultiplierSection::default().c_tau
}
fn practical_c_lambda() -> f64 {
    MultiplierSection::default().c_lambda
}
fn practical_c_eps() -> f64 {
    MultiplierSection::default().c_eps
}
fn practical_c_beta_t() -> f64 {
    MultiplierSection::default().c_beta_t
}
fn practical_c_r() -> f64 {
    MultiplierSection::default().c_r
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub episodes: Option<usize>,
    pub no_plots: bool,
    pub verbose: bool,
}

impl Overrides {
    /// `key = value` lines for the manifest, in a fixed order.
    pub fn describe(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(dir) = &self.out_dir {
            out.push(format!("output.out_dir = {}", dir.display()));
        }
        if let Some(seeds) = &self.seeds {
            let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
            out.push(format!("run.seeds = [{}]", list.join(", ")));
        }
        if let Some(k) = self.episodes {
            out.push(format!("run.K = {k}"));
        }
        if self.no_plots {
            out.push("output.emit_plots = false".into());
        }
        if self.verbose {
            out.push("output.verbose = true".into());
        }
        out
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: None,
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Applies command-line overrides and re-validates.
    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self, ConfigError> {
        if let Some(dir) = &o.out_dir {
            self.output.out_dir = dir.clone();
        }
        if let Some(seeds) = &o.seeds {
            self.run.seeds = seeds.clone();
        }
        if let Some(k) = o.episodes {
            self.run.episodes = k;
        }
        if o.no_plots {
            self.output.emit_plots = false;
        }
        if o.verbose {
            self.output.verbose = true;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, message: String| {
            Err(ConfigError::Invalid {
                key: key.into(),
                message,
            })
        };
        if self.env.m_s == 0 {
            return bad("env.m_s", "need at least one state coordinate per axis".into());
        }
        if self.env.m_a == 0 {
            return bad("env.m_a", "need at least one action".into());
        }
        if self.env.horizon == 0 {
            return bad("env.H", "horizon must be at least 1".into());
        }
        match self.kernel.family {
            FamilyName::Matern => {
                if ![0.5, 1.5, 2.5].contains(&self.kernel.nu) {
                    return bad("kernel.nu", format!("{} is not one of 0.5, 1.5, 2.5", self.kernel.nu));
                }
            }
            FamilyName::SquaredExponential => {
                return bad(
                    "kernel.family",
                    "squared_exponential has no polynomial eigen-decay, so the regularizer schedule is undefined; use matern".into(),
                );
            }
        }
        if !(self.kernel.lengthscale > 0.0 && self.kernel.lengthscale.is_finite()) {
            return bad(
                "kernel.lengthscale",
                format!("must be positive, got {}", self.kernel.lengthscale),
            );
        }
        if self.run.episodes < 2 {
            return bad(
                "run.K",
                format!("K ≥ 2 required by schedule, got {}", self.run.episodes),
            );
        }
        if self.run.seeds.is_empty() {
            return bad("run.seeds", "at least one seed is required".into());
        }
        let mut seen = self.run.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.run.seeds.len() {
            return bad("run.seeds", "seeds must be distinct".into());
        }
        let delta = self.run.delta;
        if !(delta > 0.0 && delta < 1.0) {
            return bad("run.delta", format!("must lie in (0, 1), got {delta}"));
        }
        if delta > MAX_DELTA {
            if !self.run.allow_large_delta {
                return bad(
                    "run.delta",
                    format!(
                        "{delta} exceeds 0.25·Φ(−1) ≈ {MAX_DELTA:.7}; the high-probability regret guarantee requires \
                         δ ≤ 0.25·Φ(−1) (set run.allow_large_delta = true to run anyway)"
                    ),
                );
            }
            log::warn!("run.delta = {delta} exceeds 0.25·Φ(−1); the regret guarantee does not apply");
        }
        if self.run.workers == 0 {
            return bad("run.workers", "must be at least 1".into());
        }
        let m = &self.schedule.multipliers;
        for (key, v) in [
            ("schedule.multipliers.c_tau", m.c_tau),
            ("schedule.multipliers.c_lambda", m.c_lambda),
            ("schedule.multipliers.c_eps", m.c_eps),
            ("schedule.multipliers.c_beta_t", m.c_beta_t),
            ("schedule.multipliers.c_r", m.c_r),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(key, format!("must lie in (0, 1], got {v}"));
            }
        }
        Ok(())
    }

    /// The learner's kernel on the `(x1, x2, a)` grid.
    pub fn kernel_spec(&self) -> prosto_core::Result<KernelSpec<f64>> {
        KernelSpec::matern(self.kernel.nu, self.kernel.lengthscale, 3)
    }

    pub fn agent_config(&self) -> ProstoConfig<f64> {
        let mut c = ProstoConfig::new(self.run.episodes);
        c.delta = self.run.delta;
        c.mode = self.schedule.mode;
        c.multipliers = self.schedule.multipliers.into();
        c.pool_transitions = self.run.pool_transitions;
        c.init_state = self.env.init_state_mode;
        c.check_noise_domination = self.run.check_noise_domination;
        c.check_gain_domination = self.run.check_gain_domination;
        c
    }
}

/// Reads, parses and validates the file at `path`.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_toml_str(&text).map_err(|e| e.in_file(path))
}
