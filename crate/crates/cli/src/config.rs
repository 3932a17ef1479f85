//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use oda_core::model::{Cooling, Schedule, StopCriteria, Threshold};
use oda_core::rl::{ExploreRule, StepRule, TwoTimescaleSchedule};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Cluster,
    Classify,
    RlCartpole,
    CompareBaselines,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Cluster => "cluster",
            Mode::Classify => "classify",
            Mode::RlCartpole => "rl-cartpole",
            Mode::CompareBaselines => "compare-baselines",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    /// Divergence token: `sq_euclidean` or `gen_i_divergence`.
    pub divergence: Option<String>,
    #[serde(default)]
    pub schedule: ScheduleOverrides,
    #[serde(default)]
    pub stop: StopConfig,
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub rl: RlConfig,
    #[serde(default)]
    pub baselines: BaselineConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Seed from the command line, else from the file.
    pub fn resolve_seed(&self, cli: Option<u64>) -> Result<u64, CliError> {
        cli.or(self.seed)
            .ok_or_else(|| CliError::Config("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn data(&self) -> Result<&DataConfig, CliError> {
        self.data
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [data] section".into()))
    }
}

/// Partial schedule: unset keys keep the base schedule's value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOverrides {
    pub gamma: Option<f64>,
    pub t_init: Option<f64>,
    pub t_min: Option<f64>,
    pub k_max: Option<usize>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub eps_c: Option<f64>,
    pub eps_n: Option<f64>,
    pub eps_r: Option<f64>,
    pub delta: Option<f64>,
    pub max_obs_per_level: Option<usize>,
    pub check_period: Option<usize>,
    pub cooling: Option<Cooling>,
    pub threshold: Option<Threshold>,
}

impl ScheduleOverrides {
    pub fn apply(&self, mut s: Schedule) -> Schedule {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { s.$f = v; })*};
        }
        set!(gamma, t_init, t_min, k_max, a, b, eps_c, eps_n, eps_r, delta, max_obs_per_level, check_period, cooling, threshold);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopConfig {
    pub k_max: bool,
    pub t_min: bool,
    pub target_distortion: Option<f64>,
    pub max_levels: Option<usize>,
}

impl Default for StopConfig {
    fn default() -> Self {
        let d = StopCriteria::default();
        Self {
            k_max: d.k_max,
            t_min: d.t_min,
            target_distortion: d.target_distortion,
            max_levels: d.max_levels,
        }
    }
}

impl StopConfig {
    pub fn criteria(&self) -> StopCriteria {
        StopCriteria {
            k_max: self.k_max,
            t_min: self.t_min,
            target_distortion: self.target_distortion,
            max_levels: self.max_levels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// Whether the last CSV column holds class labels.
    pub labeled: bool,
    pub synthetic: Option<Synthetic>,
    /// Standardize features with training-set mean and deviation.
    pub standardize: bool,
    /// Held-out fraction for classification.
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            labeled: false,
            synthetic: None,
            standardize: false,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Synthetic {
    Mixture {
        samples: usize,
        components: Vec<Component>,
    },
    /// Two-dimensional rings around `center`, one class per radius.
    Circles {
        samples: usize,
        radii: Vec<f64>,
        noise: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub mean: Vec<f64>,
    /// Full covariance; defaults to `std^2 I`.
    pub cov: Option<Vec<Vec<f64>>>,
    pub std: Option<f64>,
    pub weight: f64,
    /// Class label; defaults to the component index.
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Start every prototype here instead of at the training mean.
    pub init: Option<Vec<f64>>,
    /// Observations drawn (with replacement) before the run is cut off.
    pub max_observations: u64,
    /// Derive temperatures and perturbation size from the training data.
    pub scale_schedule: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            init: None,
            max_observations: 2_000_000,
            scale_schedule: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Oda,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub aggregation: Aggregation,
    pub episodes: usize,
    pub max_steps: usize,
    pub eval_episodes: usize,
    /// Evaluate the greedy policy every this many training episodes
    /// (0 disables).
    pub eval_every: usize,
    pub grid_bins: usize,
    /// Per-coordinate divisors of the joint embedding.
    pub half_ranges: Option<Vec<f64>>,
    /// Aggregator schedule overrides on top of the cart-pole defaults.
    pub schedule: ScheduleOverrides,
    pub alpha: Option<StepRule>,
    pub beta: Option<StepRule>,
    pub n_period: Option<usize>,
    pub n_period_max: Option<usize>,
    pub discount: Option<f64>,
    pub explore: Option<ExploreRule>,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            aggregation: Aggregation::Oda,
            episodes: 2000,
            max_steps: 200,
            eval_episodes: 50,
            eval_every: 0,
            grid_bins: 4,
            half_ranges: None,
            schedule: ScheduleOverrides::default(),
            alpha: None,
            beta: None,
            n_period: None,
            n_period_max: None,
            discount: None,
            explore: None,
        }
    }
}

impl RlConfig {
    pub fn two_timescale(&self) -> TwoTimescaleSchedule {
        let mut s = TwoTimescaleSchedule::default();
        if let Some(v) = self.alpha {
            s.alpha = v;
        }
        if let Some(v) = self.beta {
            s.beta = v;
        }
        if let Some(v) = self.n_period {
            s.n_period = v;
        }
        if let Some(v) = self.n_period_max {
            s.n_period_max = v;
        }
        if let Some(v) = self.discount {
            s.discount = v;
        }
        if let Some(v) = self.explore {
            s.explore = v;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Centroid count for k-means and sVQ; defaults to the ODA result.
    pub k: Option<usize>,
    pub kmeans_restarts: usize,
    /// sVQ observations.
    pub svq_observations: u64,
    /// Sample count for the farthest-point sVQ initialization.
    pub svq_init_pool: usize,
    pub eval_every: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            k: None,
            kmeans_restarts: 5,
            svq_observations: 50_000,
            svq_init_pool: 200,
            eval_every: 1000,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            mode = "classify"
            seed = 7
            divergence = "sq_euclidean"

            [schedule]
            gamma = 0.7
            threshold = "times_temperature"

            [stop]
            max_levels = 12

            [data]
            test_fraction = 0.25

            [data.synthetic]
            kind = "mixture"
            samples = 100
            components = [
                { mean = [0.0, 0.0], std = 1.0, weight = 0.5, label = "A" },
                { mean = [5.0, 0.0], std = 1.0, weight = 0.5, label = "B" },
            ]

            [rl]
            aggregation = "grid"
            alpha = { a = 1.0, b = 1.0, power = 0.7 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.mode, Some(Mode::Classify));
        assert_eq!(cfg.resolve_seed(None).unwrap(), 7);
        assert_eq!(cfg.resolve_seed(Some(3)).unwrap(), 3);
        let s = cfg.schedule.apply(Schedule::default());
        assert_eq!(s.gamma, 0.7);
        assert_eq!(s.threshold, Threshold::TimesTemperature);
        assert_eq!(s.t_init, Schedule::default().t_init);
        assert_eq!(cfg.stop.criteria().max_levels, Some(12));
        assert!(matches!(cfg.data().unwrap().synthetic, Some(Synthetic::Mixture { samples: 100, .. })));
        assert_eq!(cfg.rl.aggregation, Aggregation::Grid);
        assert_eq!(cfg.rl.two_timescale().alpha.power, 0.7);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_seed() {
        assert!(matches!(
            ExperimentConfig::from_toml("sed = 1"),
            Err(CliError::Config(_))
        ));
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert!(cfg.resolve_seed(None).is_err());
        assert!(cfg.data().is_err());
    }
}
