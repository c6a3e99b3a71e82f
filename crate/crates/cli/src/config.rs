//! Experiment configuration, read from a JSON file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use censored_gp::hyperopt::EpGradient;
use censored_gp::kernels::KernelSpec;
use censored_gp::sim::CensorSpec;
use censored_gp::{EpConfig, OptimizerConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Gaussian likelihood on every row, censored values taken at face value.
    Ncgp,
    /// Gaussian likelihood on the non-censored rows only.
    NcgpA,
    /// Censorship-aware likelihood fitted with EP.
    Cgp,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Ncgp, Model::NcgpA, Model::Cgp];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Ncgp => "ncgp",
            Model::NcgpA => "ncgp_a",
            Model::Cgp => "cgp",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ncgp" => Ok(Model::Ncgp),
            "ncgp_a" => Ok(Model::NcgpA),
            "cgp" => Ok(Model::Cgp),
            other => Err(format!("unknown model `{other}` (expected ncgp, ncgp_a or cgp)")),
        }
    }
}

/// Where the uncensored series comes from. Generated sources draw a fresh
/// series per repeat (seed = repeat seed) unless `seed` pins one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Noisy draws of a known 1-D latent function on [0, 10].
    Synthetic {
        n: usize,
        #[serde(default = "default_noise_var")]
        noise_var: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    MotorcycleLike {
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Daily demand with weather covariates and zero-availability labels.
    SyntheticDemand {
        n_days: usize,
        labelled_fraction: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// 15-minute pickups with a dropoff series for RandDropoff censoring.
    Pickups {
        n: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv {
        demand: PathBuf,
        #[serde(default)]
        weather: Option<PathBuf>,
        /// Adds hour-of-day and day-of-week features.
        #[serde(default)]
        calendar_features: bool,
    },
}

fn default_noise_var() -> f64 {
    0.1
}

/// The censoring variant and the values to sweep. Points are enumerated
/// with the first listed axis outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum CensorGrid {
    FixedThreshold { threshold: Vec<f64> },
    RandomFraction { p: Vec<f64>, ranges: Vec<[f64; 2]> },
    TwoStage { c: Vec<f64> },
    RandDropoff { gamma: Vec<f64>, c: Vec<f64> },
}

/// One censoring setting; fields not used by the variant are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GridPoint {
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub p: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub threshold: Option<f64>,
}

impl GridPoint {
    pub fn spec(&self, seed: u64) -> CensorSpec {
        let get = |v: Option<f64>| v.unwrap_or(f64::NAN);
        if let Some(threshold) = self.threshold {
            CensorSpec::FixedThreshold { threshold }
        } else if let Some(gamma) = self.gamma {
            CensorSpec::RandDropoff { gamma, c: get(self.c), seed }
        } else if let Some(p) = self.p {
            CensorSpec::RandomFraction { p, a: get(self.a), b: get(self.b), seed }
        } else {
            CensorSpec::TwoStage { c: get(self.c) }
        }
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fields = [
            ("c", self.c),
            ("gamma", self.gamma),
            ("p", self.p),
            ("a", self.a),
            ("b", self.b),
            ("threshold", self.threshold),
        ];
        let parts: Vec<String> =
            fields.iter().filter_map(|(k, v)| v.map(|v| format!("{k}={v}"))).collect();
        f.write_str(&parts.join(" "))
    }
}

impl CensorGrid {
    pub fn points(&self) -> Vec<GridPoint> {
        match self {
            CensorGrid::FixedThreshold { threshold } => threshold
                .iter()
                .map(|&t| GridPoint { threshold: Some(t), ..Default::default() })
                .collect(),
            CensorGrid::RandomFraction { p, ranges } => p
                .iter()
                .flat_map(|&p| {
                    ranges.iter().map(move |&[a, b]| GridPoint {
                        p: Some(p),
                        a: Some(a),
                        b: Some(b),
                        ..Default::default()
                    })
                })
                .collect(),
            CensorGrid::TwoStage { c } => {
                c.iter().map(|&c| GridPoint { c: Some(c), ..Default::default() }).collect()
            }
            CensorGrid::RandDropoff { gamma, c } => gamma
                .iter()
                .flat_map(|&g| {
                    c.iter().map(move |&c| GridPoint { c: Some(c), gamma: Some(g), ..Default::default() })
                })
                .collect(),
        }
    }
}

/// Hyperparameter search and inference settings shared by all cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    /// Optimizer for the exact-evidence models.
    pub exact: OptimizerConfig,
    /// Optimizer for the EP evidence.
    pub cgp: OptimizerConfig,
    pub ep: EpConfig,
    pub ep_gradient: EpGradient,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            exact: OptimizerConfig::quasi_newton(),
            cgp: OptimizerConfig::quasi_newton(),
            ep: EpConfig::default(),
            ep_gradient: EpGradient::Analytic,
        }
    }
}

/// Which cell's per-row predictions go to the posterior curve files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSelection {
    pub grid_index: usize,
    pub repeat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Kernel template; its hyperparameter values are only used for the
    /// periodic leaves' starting period. Defaults depend on the source.
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    pub censoring: CensorGrid,
    #[serde(default = "default_models")]
    pub models: Vec<Model>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Repeat r uses seed `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub settings: ModelSettings,
    /// Time-consecutive cross-validation folds of this size; without it
    /// models are scored at their training inputs.
    #[serde(default)]
    pub fold_size: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Off by default so reruns produce identical files.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub curve: CurveSelection,
}

fn default_models() -> Vec<Model> {
    Model::ALL.to_vec()
}

fn default_repeats() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative CSV paths are resolved
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let (DatasetSource::Csv { demand, weather, .. }, Some(dir)) = (&mut cfg.dataset, path.parent()) {
            for p in std::iter::once(demand).chain(weather.as_mut()) {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> Vec<GridPoint> {
        self.censoring.points()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.repeats == 0 {
            return Err(config_err("repeats must be at least 1"));
        }
        if self.models.is_empty() {
            return Err(config_err("no models selected"));
        }
        let grid = self.grid();
        if grid.is_empty() {
            return Err(config_err("censoring grid is empty"));
        }
        for point in &grid {
            point.spec(0).validate().map_err(|e| config_err(format!("grid point {point}: {e}")))?;
        }
        match (&self.dataset, &self.censoring) {
            (DatasetSource::Synthetic { .. } | DatasetSource::MotorcycleLike { .. }, CensorGrid::TwoStage { .. }) => {
                return Err(config_err("two-stage censoring needs a source with availability labels"));
            }
            (
                DatasetSource::Synthetic { .. }
                | DatasetSource::MotorcycleLike { .. }
                | DatasetSource::SyntheticDemand { .. },
                CensorGrid::RandDropoff { .. },
            ) => return Err(config_err("RandDropoff censoring needs a source with a dropoff series")),
            _ => {}
        }
        match self.dataset {
            DatasetSource::Synthetic { n, noise_var, .. } => {
                if n < 2 {
                    return Err(config_err("synthetic n must be at least 2"));
                }
                if noise_var.is_nan() || noise_var <= 0.0 {
                    return Err(config_err("synthetic noise_var must be positive"));
                }
            }
            DatasetSource::SyntheticDemand { n_days, labelled_fraction, .. } => {
                if n_days < 2 {
                    return Err(config_err("n_days must be at least 2"));
                }
                if !(0.0..=1.0).contains(&labelled_fraction) {
                    return Err(config_err("labelled_fraction must lie in [0, 1]"));
                }
            }
            DatasetSource::Pickups { n, .. } if n < 2 => {
                return Err(config_err("pickups n must be at least 2"));
            }
            _ => {}
        }
        self.settings.exact.validate().map_err(config_err)?;
        self.settings.cgp.validate().map_err(config_err)?;
        self.settings.ep.validate().map_err(config_err)?;
        if self.fold_size == Some(0) {
            return Err(config_err("fold_size must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(config_err("threads must be at least 1"));
        }
        if let Some(k) = &self.kernel {
            censored_gp::KernelExpr::try_from(k.clone()).map_err(|e| config_err(format!("kernel: {e}")))?;
        }
        Ok(())
    }
}
