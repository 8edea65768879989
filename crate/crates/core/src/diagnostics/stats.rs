//! Summary statistics of an event stream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::EventLog;

/// Forward window of the Ripley statistic, in hours.
pub const RIPLEY_WINDOW: f64 = 2.0;
/// Quantile above which inter-event times form the upper tail.
pub const UPPER_TAIL_QUANTILE: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("{statistic} needs at least {needed} events, found {found}")]
    InsufficientData { statistic: &'static str, needed: usize, found: usize },
    #[error("dimension {dim} out of range for {num_dims} dimensions")]
    DimensionOutOfRange { dim: usize, num_dims: usize },
}

/// Which events enter the statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatScope {
    /// All dimensions merged into one time-ordered stream.
    Pooled,
    /// One dimension (0-based).
    Dimension(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    UpperTailMeanIet,
    Acf1Iet,
    RipleyK2h,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Self::UpperTailMeanIet, Self::Acf1Iet, Self::RipleyK2h];

    pub fn name(&self) -> &'static str {
        match self {
            Self::UpperTailMeanIet => "upper_tail_mean_iet",
            Self::Acf1Iet => "acf1_iet",
            Self::RipleyK2h => "ripley_k_2h",
        }
    }

    pub fn of(&self, stats: &SummaryStats) -> f64 {
        match self {
            Self::UpperTailMeanIet => stats.upper_tail_mean_iet,
            Self::Acf1Iet => stats.acf1_iet,
            Self::RipleyK2h => stats.ripley_k_2h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    /// Mean inter-event time strictly above its 90th percentile (hours).
    pub upper_tail_mean_iet: f64,
    /// Lag-1 autocorrelation of inter-event times.
    pub acf1_iet: f64,
    /// Set when the inter-event times have zero variance; `acf1_iet` is 0.
    pub acf1_degenerate: bool,
    /// Mean number of events in `(t_i, t_i + 2h]`.
    pub ripley_k_2h: f64,
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean of the values strictly above the type-7 90th percentile; the
/// percentile itself when no value exceeds it.
pub fn upper_tail_mean(iets: &[f64]) -> f64 {
    let mut sorted = iets.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = quantile_sorted(&sorted, UPPER_TAIL_QUANTILE);
    let (sum, n) = iets.iter().filter(|&&x| x > q).fold((0.0, 0usize), |(s, n), &x| (s + x, n + 1));
    if n == 0 {
        q
    } else {
        sum / n as f64
    }
}

/// Lag-1 sample autocorrelation (mean-centred, full-sample variance in the
/// denominator); `None` for zero variance.
pub fn acf1(xs: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let denom: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    if denom == 0.0 {
        return None;
    }
    let num: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    Some(num / denom)
}

/// `(1/N) Σ_i #{j : t_i < t_j ≤ t_i + window}` for sorted times.
pub fn ripley_forward(times: &[f64], window: f64) -> f64 {
    let mut total = 0usize;
    let mut hi = 0;
    for (i, &t) in times.iter().enumerate() {
        hi = hi.max(i + 1);
        while hi < times.len() && times[hi] <= t + window {
            hi += 1;
        }
        let lo = times[i + 1..hi].partition_point(|&s| s <= t) + i + 1;
        total += hi - lo;
    }
    total as f64 / times.len() as f64
}

fn scoped_times(log: &EventLog, scope: StatScope) -> Result<Vec<f64>, StatsError> {
    match scope {
        StatScope::Pooled => Ok(log.times().collect()),
        StatScope::Dimension(d) if d < log.num_dims() => {
            Ok(log.events().iter().filter(|e| e.dim == d).map(|e| e.time).collect())
        }
        StatScope::Dimension(dim) => Err(StatsError::DimensionOutOfRange { dim, num_dims: log.num_dims() }),
    }
}

pub fn compute_summary_stats(log: &EventLog, scope: StatScope) -> Result<SummaryStats, StatsError> {
    let times = scoped_times(log, scope)?;
    let n = times.len();
    if n < 2 {
        return Err(StatsError::InsufficientData { statistic: "upper_tail_mean_iet", needed: 2, found: n });
    }
    if n < 3 {
        return Err(StatsError::InsufficientData { statistic: "acf1_iet", needed: 3, found: n });
    }
    let iets: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let acf = acf1(&iets);
    Ok(SummaryStats {
        upper_tail_mean_iet: upper_tail_mean(&iets),
        acf1_iet: acf.unwrap_or(0.0),
        acf1_degenerate: acf.is_none(),
        ripley_k_2h: ripley_forward(&times, RIPLEY_WINDOW),
    })
}
