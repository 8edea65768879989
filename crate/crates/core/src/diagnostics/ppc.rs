//! Posterior predictive checks and cumulative-count envelopes.
//!
//! Draws are visited in the order of a hash of their parameter values and
//! each replicate is seeded from that hash, so results do not depend on the
//! order in which the chain stored its draws.

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::stats::{compute_summary_stats, quantile_sorted, StatScope, Statistic};
use super::DiagnosticsError;
use crate::gibbs::{ChainDraws, Draw};
use crate::model::EventLog;
use crate::simulate::{simulate, SimulationRequest, StopRule, DEFAULT_MAX_EVENTS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpcOptions {
    pub replicates: usize,
    pub scope: StatScope,
    pub seed: u64,
    pub max_events: usize,
}

impl PpcOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self { replicates, scope: StatScope::Pooled, seed, max_events: DEFAULT_MAX_EVENTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpcResult {
    pub statistic: Statistic,
    pub observed: f64,
    pub draws: Vec<f64>,
    /// `2 min(P(draw ≥ obs), P(draw ≤ obs))`, capped at one.
    pub p_value: f64,
    /// `P(draw ≥ obs)`.
    pub p_upper: f64,
    /// `P(draw ≤ obs)`.
    pub p_lower: f64,
}

impl PpcResult {
    fn new(statistic: Statistic, observed: f64, draws: Vec<f64>) -> Self {
        let n = draws.len() as f64;
        let (p_upper, p_lower) = if draws.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                draws.iter().filter(|&&d| d >= observed).count() as f64 / n,
                draws.iter().filter(|&&d| d <= observed).count() as f64 / n,
            )
        };
        Self { statistic, observed, draws, p_value: (2.0 * p_upper.min(p_lower)).min(1.0), p_upper, p_lower }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpcReport {
    pub results: Vec<PpcResult>,
    pub replicates: usize,
    /// Draws skipped because they were unstable or their simulation failed.
    pub unstable_replaced: usize,
    /// Replicate statistics that could not be computed (too few events).
    pub failed_statistics: usize,
}

fn draw_key(draw: &Draw) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for (_, v) in draw.columns() {
        hasher.update(v.to_bits().to_le_bytes());
    }
    hasher.finalize().into()
}

/// Simulates `replicates` logs on `[0, horizon]` from distinct stable draws
/// and hands each to `visit`. Returns the number of draws skipped.
fn for_each_replicate(
    chain: &ChainDraws,
    horizon: f64,
    replicates: usize,
    seed: u64,
    max_events: usize,
    mut visit: impl FnMut(EventLog),
) -> Result<usize, DiagnosticsError> {
    if replicates == 0 {
        return Ok(0);
    }
    if chain.is_empty() {
        return Err(DiagnosticsError::EmptyChain);
    }
    let mut order: Vec<([u8; 32], usize)> = chain.draws.iter().enumerate().map(|(i, d)| (draw_key(d), i)).collect();
    order.sort();
    let mut done = 0;
    let mut skipped = 0;
    for (key, i) in order {
        if done == replicates {
            break;
        }
        let draw = &chain.draws[i];
        if draw.stability_radius() >= 1.0 {
            skipped += 1;
            continue;
        }
        let params = chain.params_at(i)?;
        let stream = u64::from_le_bytes(key[..8].try_into().expect("eight bytes"));
        let mut request = SimulationRequest::new(params, StopRule::Horizon(horizon), seed ^ stream);
        request.max_events = max_events;
        match simulate(&request) {
            Ok(data) => {
                visit(data.log);
                done += 1;
            }
            Err(_) => skipped += 1,
        }
    }
    if done < replicates {
        return Err(DiagnosticsError::NotEnoughDraws { needed: replicates, available: done });
    }
    Ok(skipped)
}

/// Predictive distribution of each statistic over `R` replicates simulated
/// on the observation window of `observed`.
pub fn posterior_predictive(
    chain: &ChainDraws,
    observed: &EventLog,
    statistics: &[Statistic],
    options: &PpcOptions,
) -> Result<PpcReport, DiagnosticsError> {
    let obs = compute_summary_stats(observed, options.scope)?;
    let mut draws = vec![Vec::with_capacity(options.replicates); statistics.len()];
    let mut failed = 0;
    let skipped =
        for_each_replicate(chain, observed.horizon(), options.replicates, options.seed, options.max_events, |log| {
            match compute_summary_stats(&log, options.scope) {
                Ok(s) => {
                    for (slot, stat) in draws.iter_mut().zip(statistics) {
                        slot.push(stat.of(&s));
                    }
                }
                Err(_) => failed += statistics.len(),
            }
        })?;
    let results =
        statistics.iter().zip(draws).map(|(stat, d)| PpcResult::new(*stat, stat.of(&obs), d)).collect();
    Ok(PpcReport { results, replicates: options.replicates, unstable_replaced: skipped, failed_statistics: failed })
}

/// Pointwise predictive quantiles of the pooled cumulative count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    pub grid: Vec<f64>,
    /// 2.5, 25, 50, 75 and 97.5 % quantiles per grid point.
    pub quantiles: Vec<[f64; 5]>,
    pub observed: Vec<f64>,
    pub unstable_replaced: usize,
}

pub const ENVELOPE_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

fn cumulative_counts(log: &EventLog, grid: &[f64]) -> Vec<f64> {
    let times: Vec<f64> = log.times().collect();
    grid.iter().map(|&g| times.partition_point(|&t| t <= g) as f64).collect()
}

pub fn cumulative_envelope(
    chain: &ChainDraws,
    observed: &EventLog,
    grid: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<Envelope, DiagnosticsError> {
    if let Some(&g) = grid.iter().find(|&&g| !(0.0..=observed.horizon()).contains(&g)) {
        return Err(DiagnosticsError::InvalidGrid(g));
    }
    let mut curves = vec![Vec::with_capacity(replicates); grid.len()];
    let skipped = for_each_replicate(chain, observed.horizon(), replicates, seed, DEFAULT_MAX_EVENTS, |log| {
        for (slot, c) in curves.iter_mut().zip(cumulative_counts(&log, grid)) {
            slot.push(c);
        }
    })?;
    let quantiles = curves
        .into_iter()
        .map(|mut c| {
            if c.is_empty() {
                return [f64::NAN; 5];
            }
            c.sort_by(f64::total_cmp);
            ENVELOPE_LEVELS.map(|p| quantile_sorted(&c, p))
        })
        .collect();
    Ok(Envelope {
        grid: grid.to_vec(),
        quantiles,
        observed: cumulative_counts(observed, grid),
        unstable_replaced: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::Background;
    use crate::gibbs::{run_chain, BackgroundSpec, FitSpec, McmcConfig, ModelKind};
    use crate::model::{AncestorParams, InfluenceMatrix, KernelSpec, ModelParams};

    fn fitted() -> (EventLog, ChainDraws) {
        let truth = AncestorParams::new(
            Background::constant(vec![0.1, 0.2]).unwrap(),
            InfluenceMatrix::filled(2, 0.4),
            InfluenceMatrix::diag_off(2, 0.2, 0.05),
            KernelSpec::uniform(1.5).unwrap(),
            KernelSpec::uniform(0.7).unwrap(),
            false,
        )
        .unwrap();
        let data = simulate(&SimulationRequest::new(ModelParams::Ancestor(truth), StopRule::EventCount(300), 2)).unwrap();
        let config = McmcConfig { iterations: 300, burn_in: 100, thin: 2, seed: 3, ..Default::default() };
        let chain = run_chain(&data.log, &FitSpec::new(ModelKind::Ancestor, BackgroundSpec::Constant, config)).unwrap();
        (data.log, chain)
    }

    #[test]
    fn zero_replicates_is_empty() {
        let (log, chain) = fitted();
        let r = posterior_predictive(&chain, &log, &Statistic::ALL, &PpcOptions::new(0, 1)).unwrap();
        assert!(r.results.iter().all(|x| x.draws.is_empty()));
    }

    #[test]
    fn p_values_are_order_invariant() {
        let (log, mut chain) = fitted();
        let opts = PpcOptions::new(30, 9);
        let a = posterior_predictive(&chain, &log, &Statistic::ALL, &opts).unwrap();
        chain.draws.reverse();
        let b = posterior_predictive(&chain, &log, &Statistic::ALL, &opts).unwrap();
        assert_eq!(a, b);
        for r in &a.results {
            assert_eq!(r.draws.len(), 30);
            assert!((0.0..=1.0).contains(&r.p_value));
            assert!(r.p_upper + r.p_lower >= 1.0);
        }
        assert!(posterior_predictive(&chain, &log, &Statistic::ALL, &PpcOptions::new(1000, 9)).is_err());
    }

    #[test]
    fn envelope_at_horizon_and_zero_rate() {
        let (log, chain) = fitted();
        let env = cumulative_envelope(&chain, &log, &[0.0, log.horizon()], 20, 4).unwrap();
        assert_eq!(env.observed, vec![0.0, log.len() as f64]);
        assert_eq!(env.quantiles[0], [0.0; 5]);
        assert!(env.quantiles[1].windows(2).all(|w| w[0] <= w[1]));
        assert!(cumulative_envelope(&chain, &log, &[log.horizon() + 1.0], 5, 4).is_err());

        let mut zero = chain.clone();
        for d in &mut zero.draws {
            d.background = crate::gibbs::BackgroundDraw::Constant(vec![0.0, 0.0]);
        }
        let env = cumulative_envelope(&zero, &log, &[1.0, log.horizon()], 10, 4).unwrap();
        assert!(env.quantiles.iter().all(|q| q.iter().all(|&v| v == 0.0)));
    }
}
