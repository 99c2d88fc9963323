//! The TOML run configuration shared by all subcommands.
//!
//! Every table is optional and falls back to the documented defaults.
//! Unknown keys are rejected. `FAIRFACE_SEED` in the environment replaces
//! the top-level `seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::TrainConfig;
use crate::metrics::EvalConfig;
use crate::perturb::{HighFrequencyScorer, Transform};
use crate::skintone::KMeansConfig;

pub const SEED_ENV: &str = "FAIRFACE_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{SEED_ENV}=`{0}` is not an unsigned 64-bit integer")]
    BadSeedEnv(String),
    #[error("`{0}` cannot be set; the top-level `seed` drives every random choice")]
    NestedSeed(&'static str),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub palette: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub regions: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    /// Stratification fields: `subset`, `category`, or a grouping name.
    pub strata: Vec<String>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            strata: vec!["subset".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnotatorSection {
    /// Sensitive attribute used by the fairness term, or `none`.
    pub fair_attribute: String,
    pub train: TrainConfig,
}

impl Default for AnnotatorSection {
    fn default() -> Self {
        Self {
            fair_attribute: "skintone".into(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    /// Transforms to run; empty means the full six-transform suite.
    pub transforms: Vec<Transform>,
    pub scorer: HighFrequencyScorer,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub paths: Paths,
    pub split: SplitConfig,
    pub skintone: KMeansConfig,
    pub annotator: AnnotatorSection,
    pub evaluate: EvalConfig,
    pub robustness: RobustnessConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        if cfg.annotator.train.seed != 0 {
            return Err(ConfigError::NestedSeed("annotator.train.seed"));
        }
        if cfg.evaluate.individual.seed != 0 {
            return Err(ConfigError::NestedSeed("evaluate.individual.seed"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies `FAIRFACE_SEED` when set.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        self.apply_seed_var(std::env::var(SEED_ENV).ok().as_deref())
    }

    pub fn apply_seed_var(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        if let Some(v) = value {
            self.seed = v.trim().parse().map_err(|_| ConfigError::BadSeedEnv(v.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.annotator.train.batch_size, 64);
        let c = Config::from_toml("seed = 9\n[annotator]\nfair_attribute = \"gender\"\n[annotator.train]\nlambda = 0.5\n[evaluate]\nthreshold = 0.4\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.annotator.train.lambda, 0.5);
        assert_eq!(c.annotator.fair_attribute, "gender");
        assert_eq!(c.evaluate.threshold, 0.4);
        let c = Config::from_toml("[[robustness.transforms]]\nkind = \"jpeg\"\nquality = 50\n").unwrap();
        assert_eq!(c.robustness.transforms, vec![Transform::Jpeg { quality: 50 }]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("sed = 1\n").is_err());
        assert!(Config::from_toml("[annotator.train]\nlamda = 1.0\n").is_err());
        assert!(Config::from_toml("[[robustness.transforms]]\nkind = \"jpeg\"\nquality = 80\nextra = 1\n").is_err());
        assert!(Config::from_toml("[skintone]\nK = 3\n").is_err());
        assert!(Config::from_toml("[evaluate.individual]\nsigma = 1.0\n").is_err());
        assert!(matches!(
            Config::from_toml("[annotator.train]\nseed = 4\n"),
            Err(ConfigError::NestedSeed(_))
        ));
    }

    #[test]
    fn seed_variable_wins() {
        let mut c = Config::from_toml("seed = 3").unwrap();
        c.apply_seed_var(Some("42")).unwrap();
        assert_eq!(c.seed, 42);
        assert!(c.apply_seed_var(Some("x")).is_err());
        c.apply_seed_var(None).unwrap();
        assert_eq!(c.seed, 42);
    }
}
