//! Latent-branching Gibbs samplers for the classic and the Ancestor model.
//!
//! One iteration updates, in this order: the branching vector, the
//! background, `K`, `L` (Ancestor only) and the kernel rates. Every block
//! except the kernel rates is drawn from its exact full conditional; the
//! rates use a doubling slice sampler.

mod branching;
mod chain;
mod conjugate;
mod seasonal;
mod slice;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;

pub use branching::{ancestor_sample_branching, classic_sample_branching};
pub use chain::{run_chain, BackgroundDraw, BackgroundSpec, ChainDraws, Draw, FitSpec};
pub use conjugate::{
    influence_stats, sample_influence, sample_k_l, sample_mu_constant, sample_mu_piecewise, InfluenceStats,
    ParentSet,
};
pub use seasonal::{event_cells, sample_seasonal_background, SeasonalFactor, SeasonalUpdate};
pub use slice::{
    kernel_rate_log_conditional, rate_stats, sample_kernel_rates, slice_sample, RateStats, SliceSettings,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GibbsError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("all parent weights vanish for event {event}")]
    DegenerateWeights { event: usize },
    #[error("slice sampler for {what} failed at {value} after {steps} steps")]
    SliceFailure { what: String, value: f64, steps: u32 },
    #[error("invalid {what} at iteration {iteration}; chain aborted")]
    InvalidState { iteration: usize, what: String, last_good: Option<Box<Draw>> },
    #[error("chain has no retained draws")]
    EmptyChain,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Gamma law in the shape–rate parameterisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub const fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn validate(&self, what: &str) -> Result<(), GibbsError> {
        if self.shape > 0.0 && self.rate > 0.0 && self.shape.is_finite() && self.rate.is_finite() {
            Ok(())
        } else {
            Err(GibbsError::InvalidConfig(format!("{what} prior needs positive shape and rate")))
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    /// Conjugate update with `count` observations over `exposure`.
    pub fn posterior(&self, count: f64, exposure: f64) -> Self {
        Self { shape: self.shape + count, rate: self.rate + exposure }
    }

    /// Log density up to its normalising constant; `-inf` off the support.
    pub fn log_kernel(&self, x: f64) -> f64 {
        if x > 0.0 {
            (self.shape - 1.0) * x.ln() - self.rate * x
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate).expect("validated gamma prior").sample(rng)
    }
}

/// Prior specification. Defaults: `μ, α, θ ~ Gamma(1, 1)`, magnitudes
/// `Gamma(1, 10)`, kernel rates `Gamma(2, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    pub mu: GammaPrior,
    pub k: GammaPrior,
    pub l: GammaPrior,
    pub kernel_rate: GammaPrior,
    pub alpha: GammaPrior,
    pub theta: GammaPrior,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            mu: GammaPrior::new(1.0, 1.0),
            k: GammaPrior::new(1.0, 10.0),
            l: GammaPrior::new(1.0, 10.0),
            kernel_rate: GammaPrior::new(2.0, 1.0),
            alpha: GammaPrior::new(1.0, 1.0),
            theta: GammaPrior::new(1.0, 1.0),
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<(), GibbsError> {
        self.mu.validate("mu")?;
        self.k.validate("K")?;
        self.l.validate("L")?;
        self.kernel_rate.validate("kernel rate")?;
        self.alpha.validate("alpha")?;
        self.theta.validate("theta")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Classic,
    Ancestor,
    /// Ancestor model with off-diagonal `L` fixed at zero.
    AncestorRestricted,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Classic => "classic",
            Self::Ancestor => "ancestor",
            Self::AncestorRestricted => "ancestor-restricted",
        }
    }

    pub fn is_ancestor(&self) -> bool {
        !matches!(self, Self::Classic)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = GibbsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classic" => Ok(Self::Classic),
            "ancestor" => Ok(Self::Ancestor),
            "ancestor-restricted" => Ok(Self::AncestorRestricted),
            other => Err(GibbsError::InvalidConfig(format!("unknown model tag {other:?}"))),
        }
    }
}

/// MCMC run settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub slice: SliceSettings,
    /// Parent candidates whose kernel has decayed below `exp(-cutoff)` at
    /// the slowest current rate are skipped; `None` enumerates all.
    pub candidate_cutoff: Option<f64>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 5_000,
            thin: 1,
            seed: 0,
            slice: SliceSettings::default(),
            candidate_cutoff: Some(50.0),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), GibbsError> {
        if self.burn_in >= self.iterations {
            return Err(GibbsError::InvalidConfig(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(GibbsError::InvalidConfig("thinning interval must be at least 1".into()));
        }
        if let Some(c) = self.candidate_cutoff {
            if !(c > 0.0) {
                return Err(GibbsError::InvalidConfig("candidate cutoff must be positive".into()));
            }
        }
        self.slice.validate()
    }

    /// `(iterations − burn_in) / thin`, rounded down.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Draws an index from unnormalised log weights.
pub(crate) fn draw_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (i, w) in log_weights.iter().enumerate() {
        let p = (w - max).exp();
        if p > 0.0 {
            last = Some(i);
            if u < p {
                return Some(i);
            }
            u -= p;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        let bad = McmcConfig { burn_in: 10, iterations: 10, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = McmcConfig { thin: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let c = McmcConfig { iterations: 6000, burn_in: 2000, thin: 3, ..Default::default() };
        assert_eq!(c.retained(), 1333);
    }

    #[test]
    fn log_categorical_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = [0.0f64.ln(), 1.0f64.ln(), 3.0f64.ln()];
        let mut hits = [0usize; 3];
        for _ in 0..40_000 {
            hits[draw_log_categorical(&w, &mut rng).unwrap()] += 1;
        }
        assert_eq!(hits[0], 0);
        let p = hits[2] as f64 / 40_000.0;
        assert!((p - 0.75).abs() < 3.0 * (0.75f64 * 0.25 / 40_000.0).sqrt() + 1e-3);
        assert!(draw_log_categorical(&[f64::NEG_INFINITY; 2], &mut rng).is_none());
    }

    #[test]
    fn model_tags_round_trip() {
        for k in [ModelKind::Classic, ModelKind::Ancestor, ModelKind::AncestorRestricted] {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("hawkes".parse::<ModelKind>().is_err());
    }
}
