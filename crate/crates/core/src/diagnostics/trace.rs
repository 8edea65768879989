//! Trace series and the running-mean drift statistic.

use serde::Serialize;

use super::DiagnosticsError;
use crate::gibbs::ChainDraws;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceReport {
    pub iterations: Vec<usize>,
    pub series: Vec<TraceSeries>,
    /// Every retained spectral radius of the stability matrix is below one.
    pub stable: bool,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// `|mean(first half) − mean(second half)| / sqrt((s₁² + s₂²) / 2)`; zero
/// for a constant series. With an odd length the middle value is dropped.
pub fn drift_statistic(values: &[f64]) -> f64 {
    let half = values.len() / 2;
    if half == 0 {
        return 0.0;
    }
    let (m1, v1) = mean_var(&values[..half]);
    let (m2, v2) = mean_var(&values[values.len() - half..]);
    let diff = (m1 - m2).abs();
    let sd = ((v1 + v2) / 2.0).sqrt();
    if diff == 0.0 {
        0.0
    } else if sd == 0.0 {
        f64::INFINITY
    } else {
        diff / sd
    }
}

/// Trace of every chain column with its drift statistic.
pub fn trace_report(chain: &ChainDraws) -> Result<TraceReport, DiagnosticsError> {
    let first = chain.draws.first().ok_or(DiagnosticsError::EmptyChain)?;
    let names: Vec<String> = first.columns().into_iter().map(|(n, _)| n).collect();
    let mut values = vec![Vec::with_capacity(chain.len()); names.len()];
    for d in &chain.draws {
        for (slot, (_, v)) in values.iter_mut().zip(d.columns()) {
            slot.push(v);
        }
    }
    let series = names
        .into_iter()
        .zip(values)
        .map(|(name, values)| TraceSeries { drift: drift_statistic(&values), name, values })
        .collect();
    Ok(TraceReport {
        iterations: chain.draws.iter().map(|d| d.iteration).collect(),
        series,
        stable: chain.draws.iter().all(|d| d.stability_radius() < 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::GammaPrior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_chain_has_no_drift() {
        assert_eq!(drift_statistic(&[0.3; 50]), 0.0);
        assert_eq!(drift_statistic(&[]), 0.0);
    }

    #[test]
    fn iid_draws_rarely_drift() {
        let prior = GammaPrior::new(2.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut small = 0;
        for _ in 0..200 {
            let xs: Vec<f64> = (0..1000).map(|_| prior.sample(&mut rng)).collect();
            small += (drift_statistic(&xs) < 0.2) as usize;
        }
        assert!(small >= 198, "{small}");
    }

    #[test]
    fn trend_is_detected() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        assert!(drift_statistic(&xs) > 1.0);
    }
}
