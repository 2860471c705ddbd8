//! Sweep manifests: JSON files describing a system, a horizon, budgets and
//! the step sizes to evaluate.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempres_core::linalg::Mat;
use tempres_core::random_system::sample_stable_matrix;
use tempres_core::system::{validate_scalar, validate_vector, HorizonMode, System};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[serde(alias = "finite")]
    #[value(alias = "finite")]
    FiniteUndiscounted,
    FiniteDiscounted,
    #[serde(alias = "infinite")]
    #[value(alias = "infinite")]
    InfiniteDiscounted,
}

impl From<Mode> for HorizonMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::FiniteUndiscounted => HorizonMode::FiniteUndiscounted,
            Mode::FiniteDiscounted => HorizonMode::FiniteDiscounted,
            Mode::InfiniteDiscounted => HorizonMode::InfiniteDiscounted,
        }
    }
}

impl From<HorizonMode> for Mode {
    fn from(m: HorizonMode) -> Self {
        match m {
            HorizonMode::FiniteUndiscounted => Mode::FiniteUndiscounted,
            HorizonMode::FiniteDiscounted => Mode::FiniteDiscounted,
            HorizonMode::InfiniteDiscounted => Mode::InfiniteDiscounted,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Scalar {
        a: f64,
        sigma: f64,
        #[serde(default = "one")]
        q: f64,
    },
    /// Row-major drift matrix; `q` defaults to the identity.
    Vector {
        a: Vec<Vec<f64>>,
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<Vec<Vec<f64>>>,
    },
    /// A random stable symmetric matrix from `sample_stable_matrix`.
    Random {
        n: usize,
        seed: u64,
        #[serde(default = "one")]
        sigma: f64,
    },
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Mat> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::config(format!("{what} must be a non-empty square matrix")));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

impl SystemSpec {
    pub fn build(&self, mode: HorizonMode) -> Result<System> {
        let sys = match self {
            SystemSpec::Scalar { a, sigma, q } => validate_scalar(*a, *sigma, *q, mode).map(System::from),
            SystemSpec::Vector { a, sigma, q } => {
                let a = matrix(a, "system.vector.a")?;
                let q = match q {
                    Some(q) => matrix(q, "system.vector.q")?,
                    None => Mat::identity(a.nrows(), a.nrows()),
                };
                validate_vector(a, *sigma, q, mode).map(System::from)
            }
            SystemSpec::Random { n, seed, sigma } => {
                if *n == 0 {
                    return Err(CliError::config("system.random.n must be positive"));
                }
                validate_vector(sample_stable_matrix(*n, *seed), *sigma, Mat::identity(*n, *n), mode).map(System::from)
            }
        };
        sys.map_err(|e| CliError::config(format!("invalid system: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonPreset {
    /// `T = 1/(1 - γ)`.
    Effective,
    /// `T = c log(B) / log(1/γ)`, one horizon per budget.
    LogBudget(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    Fixed(f64),
    Preset(HorizonPreset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSource {
    /// `h = T/m` for the listed `m`, or for `m = 1..=m_max`.
    Grid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<Vec<u64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m_max: Option<u64>,
    },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorName {
    Closed,
    Oracle,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

fn default_mode() -> Mode {
    Mode::FiniteUndiscounted
}

fn default_replicates() -> u64 {
    1
}

fn default_evaluators() -> Vec<EvaluatorName> {
    vec![EvaluatorName::Closed, EvaluatorName::Oracle]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub system: SystemSpec,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Required in finite modes; defaults to `effective` in the infinite mode.
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Horizon>,
    /// Defaults to 1 in the undiscounted mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub budgets: Vec<u64>,
    pub h: StepSource,
    #[serde(default = "default_replicates")]
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_evaluators")]
    pub evaluators: Vec<EvaluatorName>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("cannot parse config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn horizon_mode(&self) -> HorizonMode {
        self.mode.into()
    }

    pub fn resolved_gamma(&self) -> Result<f64> {
        match (self.horizon_mode(), self.gamma) {
            (HorizonMode::FiniteUndiscounted, None | Some(1.0)) => Ok(1.0),
            (HorizonMode::FiniteUndiscounted, Some(_)) => Err(CliError::config("finite-undiscounted mode requires gamma = 1")),
            (_, None) => Err(CliError::config("gamma is required in discounted modes")),
            (HorizonMode::InfiniteDiscounted, Some(g)) if !(g > 0.0 && g < 1.0) => {
                Err(CliError::config("infinite-discounted mode requires 0 < gamma < 1"))
            }
            (_, Some(g)) if !(g > 0.0 && g <= 1.0) => Err(CliError::config("gamma must lie in (0, 1]")),
            (_, Some(g)) => Ok(g),
        }
    }

    /// Horizon used at budget `B`.
    pub fn horizon_for(&self, budget: u64) -> Result<f64> {
        let gamma = self.resolved_gamma()?;
        let preset = |p: HorizonPreset| -> Result<f64> {
            if gamma >= 1.0 {
                return Err(CliError::config("horizon presets need gamma < 1"));
            }
            Ok(match p {
                HorizonPreset::Effective => 1.0 / (1.0 - gamma),
                HorizonPreset::LogBudget(c) => c * (budget as f64).ln() / (1.0 / gamma).ln(),
            })
        };
        let horizon = match (self.horizon, self.horizon_mode()) {
            (Some(Horizon::Fixed(t)), _) => t,
            (Some(Horizon::Preset(p)), _) => preset(p)?,
            (None, HorizonMode::InfiniteDiscounted) => preset(HorizonPreset::Effective)?,
            (None, _) => return Err(CliError::config("T is required in finite modes")),
        };
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(CliError::config("T must be positive"));
        }
        Ok(horizon)
    }

    /// Step sizes at horizon `T`, in the order they are evaluated.
    pub fn steps_for(&self, horizon: f64) -> Vec<f64> {
        match &self.h {
            StepSource::Grid { m: Some(ms), .. } => ms.iter().map(|&m| horizon / m as f64).collect(),
            StepSource::Grid { m: None, m_max } => (1..=m_max.unwrap_or(0)).map(|m| horizon / m as f64).collect(),
            StepSource::Explicit(hs) => hs.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(CliError::config("replicates must be at least 1"));
        }
        if self.evaluators.is_empty() {
            return Err(CliError::config("at least one evaluator is required"));
        }
        if self.budgets.contains(&0) {
            return Err(CliError::config("budgets must be positive"));
        }
        if let StepSource::Grid { m: Some(ms), .. } = &self.h {
            if ms.contains(&0) {
                return Err(CliError::config("grid m values must be positive"));
            }
        }
        if let StepSource::Grid { m: Some(_), m_max: Some(_) } = &self.h {
            return Err(CliError::config("give either h.grid.m or h.grid.m_max, not both"));
        }
        self.resolved_gamma()?;
        for &b in &self.budgets {
            self.horizon_for(b)?;
        }
        self.system.build(self.horizon_mode())?;
        Ok(())
    }

    pub fn wants(&self, e: EvaluatorName) -> bool {
        self.evaluators.contains(&e)
    }
}
