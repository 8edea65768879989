//! Posterior predictive checks, trace diagnostics and recovery studies.

mod ppc;
mod recovery;
mod stats;
mod trace;

use thiserror::Error;

use crate::gibbs::GibbsError;
use crate::model::ModelError;
use crate::simulate::SimulationError;

pub use ppc::{
    cumulative_envelope, posterior_predictive, Envelope, PpcOptions, PpcReport, PpcResult, ENVELOPE_LEVELS,
};
pub use recovery::{
    correlation, recovery_study, replicate_seeds, rmse, simulate_replicate, FailedReplicate, RecoveryOptions,
    RecoveryReport, ReplicateFit,
};
pub use stats::{
    acf1, compute_summary_stats, quantile_sorted, ripley_forward, upper_tail_mean, StatScope, Statistic,
    StatsError, SummaryStats, RIPLEY_WINDOW, UPPER_TAIL_QUANTILE,
};
pub use trace::{drift_statistic, trace_report, TraceReport, TraceSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("chain has no retained draws")]
    EmptyChain,
    #[error("needed {needed} stable draws, only {available} available")]
    NotEnoughDraws { needed: usize, available: usize },
    #[error("grid point {0} lies outside the observation window")]
    InvalidGrid(f64),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One-sample Kolmogorov–Smirnov test against `U(0, 1)`: the statistic `D`
/// and its asymptotic p-value with the Stephens small-sample correction.
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max);
    (d, kolmogorov_survival((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d))
}

/// `P(K > λ)` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_reference_points() {
        // Classical critical values: P(K > 1.358) ≈ 0.05, P(K > 1.628) ≈ 0.01.
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn ks_on_uniform_grid_and_shifted_data() {
        let grid: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
        let (d, p) = ks_uniform(&grid);
        assert!((d - 0.0025).abs() < 1e-12);
        assert!(p > 0.99);
        let shifted: Vec<f64> = grid.iter().map(|x| x * x).collect();
        assert!(ks_uniform(&shifted).1 < 1e-6);
    }
}
