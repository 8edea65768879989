//! Run configuration: a single JSON document with a schema version.

use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::background::PiecewiseBackground;
use crate::calendar::{parse_tz, CalendarGrid};
use crate::gibbs::{BackgroundSpec, McmcConfig, ModelKind, Priors};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "AHAWKES_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("reading {path}: {message}")]
    Read { path: String, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackgroundKind {
    Constant,
    Piecewise,
    Seasonal,
}

impl std::str::FromStr for BackgroundKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant" => Ok(Self::Constant),
            "piecewise" => Ok(Self::Piecewise),
            "seasonal" => Ok(Self::Seasonal),
            other => Err(ConfigError::Invalid(format!("unknown background tag {other:?}"))),
        }
    }
}

/// Observation window in local wall-clock time, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelKind,
    pub background: BackgroundKind,
    /// Equal-width bins of a piecewise background.
    pub bins: usize,
    pub priors: Priors,
    pub mcmc: McmcConfig,
    /// IANA zone for calendar binning; required by raw-log ingestion and
    /// the seasonal background.
    pub tz: Option<String>,
    pub window: Option<Window>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: ModelKind::Ancestor,
            background: BackgroundKind::Constant,
            bins: 12,
            priors: Priors::default(),
            mcmc: McmcConfig::default(),
            tz: None,
            window: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion(self.schema_version));
        }
        self.mcmc.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.priors.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.background == BackgroundKind::Piecewise && self.bins == 0 {
            return Err(ConfigError::Invalid("piecewise background needs at least one bin".into()));
        }
        if self.background == BackgroundKind::Seasonal && (self.tz.is_none() || self.window.is_none()) {
            return Err(ConfigError::Invalid("seasonal background needs tz and window".into()));
        }
        if let Some(tz) = &self.tz {
            parse_tz(tz).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Calendar of the configured window and zone.
    pub fn calendar(&self) -> Result<Arc<CalendarGrid>, ConfigError> {
        let (Some(tz), Some(window)) = (&self.tz, self.window) else {
            return Err(ConfigError::Invalid("tz and window are required for calendar binning".into()));
        };
        let tz = parse_tz(tz).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let grid = CalendarGrid::from_local(window.start, window.end, tz).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Arc::new(grid))
    }

    /// Background spec for a log observed on `[0, horizon]`.
    pub fn background_spec(&self, horizon: f64) -> Result<BackgroundSpec, ConfigError> {
        Ok(match self.background {
            BackgroundKind::Constant => BackgroundSpec::Constant,
            BackgroundKind::Piecewise => {
                BackgroundSpec::Piecewise { edges: PiecewiseBackground::uniform_edges(horizon, self.bins) }
            }
            BackgroundKind::Seasonal => BackgroundSpec::Seasonal { calendar: self.calendar()? },
        })
    }

    /// Canonical JSON of the resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`RunConfig::canonical_json`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_model_choices() {
        let c = RunConfig::from_json(r#"{"schema_version": 1}"#).unwrap();
        assert_eq!(c.mcmc.iterations, 20_000);
        assert_eq!(c.mcmc.burn_in, 5_000);
        assert_eq!(c.priors.k.rate, 10.0);
        assert_eq!(c.model, ModelKind::Ancestor);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(RunConfig::from_json(r#"{"schema_version": 2}"#), Err(ConfigError::SchemaVersion(2))));
        assert!(RunConfig::from_json(r#"{"schema_version": 1, "modle": "classic"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema_version": 1, "background": "seasonal"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema_version": 1, "tz": "Mars/Olympus"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"schema_version": 1, "mcmc": {"iterations": 10, "burn_in": 10}}"#).is_err());
    }

    #[test]
    fn seasonal_config_builds_a_calendar() {
        let c = RunConfig::from_json(
            r#"{"schema_version": 1, "background": "seasonal", "tz": "Europe/London",
                "window": {"start": "2021-01-01T00:00:00", "end": "2022-01-01T00:00:00"}}"#,
        )
        .unwrap();
        assert_eq!(c.calendar().unwrap().horizon(), 8760.0);
        assert!(matches!(c.background_spec(8760.0).unwrap(), BackgroundSpec::Seasonal { .. }));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
