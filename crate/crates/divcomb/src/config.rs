//! Experiment configuration: a TOML file whose keys can each be overridden
//! from the command line.

use std::path::Path;

use divcomb_core::net::TrainConfig;
use divcomb_core::pool::{self, ForecasterSpec};
use divcomb_core::series::Frequency;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoolList {
    List(Vec<String>),
    Joined(String),
}

impl PoolList {
    pub fn joined(&self) -> String {
        match self {
            PoolList::List(v) => v.join(","),
            PoolList::Joined(s) => s.clone(),
        }
    }
}

/// Raw config; every key optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub frequency: Option<String>,
    pub horizon: Option<usize>,
    pub seasonal_period: Option<usize>,
    pub input_length: Option<usize>,
    pub pool: Option<PoolList>,
    pub lambda: Option<f64>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub tau: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| AppError::Config(e.to_string().trim().replace('\n', " ")))
    }

    /// Values set in `other` win.
    pub fn merged(self, other: ConfigFile) -> ConfigFile {
        ConfigFile {
            frequency: other.frequency.or(self.frequency),
            horizon: other.horizon.or(self.horizon),
            seasonal_period: other.seasonal_period.or(self.seasonal_period),
            input_length: other.input_length.or(self.input_length),
            pool: other.pool.or(self.pool),
            lambda: other.lambda.or(self.lambda),
            lr: other.lr.or(self.lr),
            batch_size: other.batch_size.or(self.batch_size),
            max_epochs: other.max_epochs.or(self.max_epochs),
            patience: other.patience.or(self.patience),
            seed: other.seed.or(self.seed),
            tau: other.tau.or(self.tau),
        }
    }

    pub fn resolve(&self) -> Result<Settings> {
        let frequency: Frequency = self
            .frequency
            .as_deref()
            .ok_or_else(|| AppError::Config("frequency is required".into()))?
            .parse()
            .unwrap_or_else(|never| match never {});
        let missing = |key: &str| AppError::Config(format!("{key} must be set for frequency {frequency}"));
        let horizon = self
            .horizon
            .or(frequency.default_horizon())
            .ok_or_else(|| missing("horizon"))?;
        let seasonal_period = self
            .seasonal_period
            .or(frequency.default_period())
            .ok_or_else(|| missing("seasonal_period"))?;
        let input_length = self
            .input_length
            .or(frequency.default_input_length())
            .ok_or_else(|| missing("input_length"))?;
        let pool = match &self.pool {
            Some(p) => pool::parse_pool(&p.joined())?,
            None => pool::default_pool(),
        };
        let defaults = TrainConfig::default();
        let seed = self.seed.unwrap_or(0);
        let train = TrainConfig {
            lr: self.lr.unwrap_or(defaults.lr),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            lambda: self
                .lambda
                .or(frequency.default_lambda())
                .ok_or_else(|| missing("lambda"))?,
            max_epochs: self.max_epochs.unwrap_or(defaults.max_epochs),
            patience: self.patience.unwrap_or(defaults.patience),
            seed,
            validation_fraction: defaults.validation_fraction,
        };
        let settings = Settings {
            frequency,
            horizon,
            seasonal_period,
            input_length,
            pool,
            train,
            tau: self.tau,
            seed,
        };
        settings.validate()?;
        Ok(settings)
    }
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub frequency: Frequency,
    pub horizon: usize,
    pub seasonal_period: usize,
    pub input_length: usize,
    pub pool: Vec<ForecasterSpec>,
    pub train: TrainConfig,
    /// Label threshold; `None` means `1/M`.
    pub tau: Option<f64>,
    pub seed: u64,
}

impl Settings {
    pub fn for_frequency(frequency: Frequency) -> Result<Self> {
        ConfigFile {
            frequency: Some(frequency.to_string()),
            ..ConfigFile::default()
        }
        .resolve()
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(AppError::Config(msg.into()));
        if self.horizon == 0 || self.seasonal_period == 0 || self.input_length == 0 {
            return bad("horizon, seasonal_period and input_length must be positive");
        }
        if !(self.train.lr > 0.0) || self.train.batch_size == 0 || !(self.train.lambda >= 0.0) {
            return bad("lr and batch_size must be positive, lambda nonnegative");
        }
        if let Some(t) = self.tau {
            if !(0.0..=1.0).contains(&t) {
                return bad("tau must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn pool_names(&self) -> Vec<String> {
        pool::pool_names(&self.pool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_frequency() {
        let s = Settings::for_frequency(Frequency::Quarterly).unwrap();
        assert_eq!((s.horizon, s.seasonal_period, s.input_length), (8, 4, 64));
        assert_eq!(s.train.lambda, 5e-3);
        assert_eq!((s.train.lr, s.train.batch_size), (1e-3, 32));
        assert_eq!(s.pool.len(), 7);
    }

    #[test]
    fn file_and_overrides() {
        let file = ConfigFile::parse(
            "frequency = \"yearly\"\npool = [\"naive\", \"ses\", \"theta\"]\nlambda = 0.05\nseed = 9\n",
        )
        .unwrap();
        let flags = ConfigFile {
            lambda: Some(0.5),
            ..ConfigFile::default()
        };
        let s = file.merged(flags).resolve().unwrap();
        assert_eq!(s.train.lambda, 0.5);
        assert_eq!(s.seed, 9);
        assert_eq!(s.pool_names(), vec!["naive", "ses", "theta"]);
        let joined = ConfigFile::parse("frequency = \"y\"\npool = \"naive,snaive\"").unwrap();
        assert_eq!(joined.resolve().unwrap().pool.len(), 2);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(ConfigFile::parse("frequencyy = \"yearly\"").is_err());
        assert!(ConfigFile::default().resolve().is_err());
        let other = ConfigFile {
            frequency: Some("weekly".into()),
            ..ConfigFile::default()
        };
        assert!(other.resolve().is_err());
        let tau = ConfigFile {
            frequency: Some("yearly".into()),
            tau: Some(2.0),
            ..ConfigFile::default()
        };
        assert!(tau.resolve().is_err());
    }
}
