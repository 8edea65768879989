//! Doubling slice sampler and the kernel-rate conditionals.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::conjugate::ParentSet;
use super::{GammaPrior, GibbsError};
use crate::model::{exp_primitive, BranchingState, EventLog, InfluenceMatrix, KernelSpec, ModelParams};

const MAX_SHRINK_STEPS: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SliceSettings {
    pub width: f64,
    pub max_doublings: u32,
}

impl Default for SliceSettings {
    fn default() -> Self {
        Self { width: 1.0, max_doublings: 50 }
    }
}

impl SliceSettings {
    pub fn validate(&self) -> Result<(), GibbsError> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(GibbsError::InvalidConfig("slice width must be positive".into()));
        }
        Ok(())
    }
}

/// One univariate slice-sampling transition from `x0` for the log density
/// `log_f`, using doubling to find the interval and shrinkage with the
/// doubling acceptance test.
pub fn slice_sample<R, F>(x0: f64, mut log_f: F, settings: &SliceSettings, what: &str, rng: &mut R) -> Result<f64, GibbsError>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let fail = |value, steps| GibbsError::SliceFailure { what: what.to_string(), value, steps };
    let f0 = log_f(x0);
    if !f0.is_finite() {
        return Err(fail(x0, 0));
    }
    let e: f64 = Exp1.sample(rng);
    let y = f0 - e;
    let w = settings.width;
    let mut left = x0 - w * rng.random::<f64>();
    let mut right = left + w;
    let mut f_left = log_f(left);
    let mut f_right = log_f(right);
    let mut doublings = 0;
    while y < f_left || y < f_right {
        if doublings == settings.max_doublings {
            return Err(fail(x0, doublings));
        }
        if rng.random::<f64>() < 0.5 {
            left -= right - left;
            f_left = log_f(left);
        } else {
            right += right - left;
            f_right = log_f(right);
        }
        doublings += 1;
    }
    let (mut lo, mut hi) = (left, right);
    for _ in 0..MAX_SHRINK_STEPS {
        let x1 = lo + rng.random::<f64>() * (hi - lo);
        let f1 = log_f(x1);
        if y < f1 && accepts(x0, x1, y, left, right, w, &mut log_f) {
            return Ok(x1);
        }
        if x1 < x0 {
            lo = x1;
        } else {
            hi = x1;
        }
    }
    Err(fail(x0, MAX_SHRINK_STEPS))
}

/// Acceptance test for a point found by shrinking a doubled interval.
fn accepts<F: FnMut(f64) -> f64>(x0: f64, x1: f64, y: f64, left: f64, right: f64, w: f64, log_f: &mut F) -> bool {
    let (mut l, mut r) = (left, right);
    let mut differ = false;
    while r - l > 1.1 * w {
        let mid = 0.5 * (l + r);
        if (x0 < mid) != (x1 < mid) {
            differ = true;
        }
        if x1 < mid {
            r = mid;
        } else {
            l = mid;
        }
        if differ && y >= log_f(l) && y >= log_f(r) {
            return false;
        }
    }
    true
}

/// Data entering the conditional of one kernel rate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateStats {
    /// Number of parent–child pairs governed by the rate.
    pub children: f64,
    /// Sum of their lags.
    pub lag_sum: f64,
    /// `(η, T − t_p)` per parent, `η` summed over the governed targets.
    pub compensators: Vec<(f64, f64)>,
}

/// Statistics for the diagonal (`diagonal = true`) or off-diagonal rate of
/// the kernel used by `parents`.
pub fn rate_stats(
    log: &EventLog,
    branching: &BranchingState,
    magnitudes: &InfluenceMatrix,
    parents: ParentSet,
    diagonal: bool,
) -> RateStats {
    let m = log.num_dims();
    let horizon = log.horizon();
    let mut out = RateStats::default();
    let eta: Vec<f64> = (0..m)
        .map(|s| (0..m).filter(|&t| (t == s) == diagonal).map(|t| magnitudes.get(s, t)).sum())
        .collect();
    for j in (0..log.len()).filter(|&j| parents.contains(branching, j)) {
        let s = log.dim(j);
        if eta[s] > 0.0 {
            out.compensators.push((eta[s], horizon - log.time(j)));
        }
        for &c in branching.children(j) {
            let c = c as usize;
            if (log.dim(c) == s) == diagonal {
                out.children += 1.0;
                out.lag_sum += log.time(c) - log.time(j);
            }
        }
    }
    out
}

/// `log π(r) + n log r − r Σ lag − Σ η (1 − e^{−r τ})`.
pub fn kernel_rate_log_conditional(stats: &RateStats, prior: GammaPrior, rate: f64) -> f64 {
    if !(rate > 0.0 && rate.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let comp: f64 = stats.compensators.iter().map(|&(eta, tau)| eta * exp_primitive(rate, tau)).sum();
    prior.log_kernel(rate) + stats.children * rate.ln() - rate * stats.lag_sum - comp
}

fn update_rate<R: Rng + ?Sized>(
    current: f64,
    stats: &RateStats,
    prior: GammaPrior,
    settings: &SliceSettings,
    what: &str,
    rng: &mut R,
) -> Result<f64, GibbsError> {
    slice_sample(current, |r| kernel_rate_log_conditional(stats, prior, r), settings, what, rng)
}

/// Slice updates of `β_diag, β_off` and, for the Ancestor model,
/// `γ_diag, γ_off`, conditional on the current magnitudes.
pub fn sample_kernel_rates<R: Rng + ?Sized>(
    log: &EventLog,
    branching: &BranchingState,
    params: &ModelParams,
    prior: GammaPrior,
    settings: &SliceSettings,
    rng: &mut R,
) -> Result<(KernelSpec, Option<KernelSpec>), GibbsError> {
    let pair = |current: &KernelSpec, mags: &InfluenceMatrix, set: ParentSet, names: [&str; 2], rng: &mut R| {
        let diag = rate_stats(log, branching, mags, set, true);
        let rate_diag = update_rate(current.rate_diag, &diag, prior, settings, names[0], rng)?;
        let off = rate_stats(log, branching, mags, set, false);
        let rate_off = update_rate(current.rate_off, &off, prior, settings, names[1], rng)?;
        Ok::<_, GibbsError>(KernelSpec::new(rate_diag, rate_off)?)
    };
    match params {
        ModelParams::Classic(p) => {
            let g = pair(&p.g, &p.k, ParentSet::All, ["beta_diag", "beta_off"], rng)?;
            Ok((g, None))
        }
        ModelParams::Ancestor(p) => {
            let g = pair(&p.g, &p.k, ParentSet::Immigrant, ["beta_diag", "beta_off"], rng)?;
            let h = pair(&p.h, &p.l, ParentSet::Triggered, ["gamma_diag", "gamma_off"], rng)?;
            Ok((g, Some(h)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::Background;
    use crate::model::{AncestorParams, Event};
    use crate::simulate::{simulate, SimulationRequest, StopRule};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn slice_sampler_targets_gamma() {
        let prior = GammaPrior::new(3.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut x = 1.0;
        let mut xs = Vec::new();
        for i in 0..60_000 {
            x = slice_sample(x, |r| prior.log_kernel(r), &SliceSettings::default(), "x", &mut rng).unwrap();
            if i % 3 == 0 {
                xs.push(x);
            }
        }
        let d = GammaDist::new(3.0, 2.0).unwrap();
        let n = xs.len() as f64;
        assert!(ks_statistic(xs, |v| d.cdf(v)) < 1.63 / n.sqrt());
    }

    #[test]
    fn empty_parent_set_recovers_prior() {
        let log = EventLog::empty(10.0, 2).unwrap();
        let b = BranchingState::all_immigrant(&log);
        let stats = rate_stats(&log, &b, &InfluenceMatrix::filled(2, 0.3), ParentSet::Immigrant, true);
        assert_eq!(stats, RateStats::default());
        let prior = GammaPrior::new(2.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut x = 2.0;
        let mut xs = Vec::new();
        for i in 0..40_000 {
            x = update_rate(x, &stats, prior, &SliceSettings::default(), "beta", &mut rng).unwrap();
            if i % 2 == 0 {
                xs.push(x);
            }
        }
        let d = GammaDist::new(2.0, 1.0).unwrap();
        let n = xs.len() as f64;
        assert!(ks_statistic(xs, |v| d.cdf(v)) < 1.63 / n.sqrt());
    }

    #[test]
    fn doubling_limit_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let flat = |_: f64| 0.0;
        let s = SliceSettings { width: 1.0, max_doublings: 5 };
        assert!(matches!(slice_sample(0.0, flat, &s, "flat", &mut rng), Err(GibbsError::SliceFailure { .. })));
        assert!(slice_sample(-1.0, |r: f64| GammaPrior::new(2.0, 1.0).log_kernel(r), &s, "x", &mut rng).is_err());
    }

    /// One parent, one child at lag `ℓ`, far horizon: the conditional is
    /// `(a − 1 + 1) log β − β (b + ℓ) − η`, maximised at `a / (b + ℓ)`.
    #[test]
    fn single_pair_mode_matches_grid_search() {
        let log = EventLog::new(vec![Event::new(0.0, 0), Event::new(0.7, 0)], 1e4, 1).unwrap();
        let b = BranchingState::from_parents(&log, vec![0, 1]).unwrap();
        let stats = rate_stats(&log, &b, &InfluenceMatrix::filled(1, 0.5), ParentSet::Immigrant, true);
        assert_eq!(stats.children, 1.0);
        assert!((stats.lag_sum - 0.7).abs() < 1e-15);
        let prior = GammaPrior::new(2.0, 1.0);
        let grid_mode = (1..200_000)
            .map(|i| i as f64 * 1e-4)
            .max_by(|x, y| {
                kernel_rate_log_conditional(&stats, prior, *x).total_cmp(&kernel_rate_log_conditional(&stats, prior, *y))
            })
            .unwrap();
        assert!((grid_mode - 2.0 / 1.7).abs() < 2e-4);
    }

    #[test]
    fn conditional_peaks_near_truth_on_long_data() {
        let truth = AncestorParams::new(
            Background::constant(vec![0.05; 3]).unwrap(),
            InfluenceMatrix::filled(3, 0.6),
            InfluenceMatrix::diag_off(3, 0.3, 0.05),
            KernelSpec::uniform(2.0).unwrap(),
            KernelSpec::uniform(0.5).unwrap(),
            false,
        )
        .unwrap();
        let data = simulate(&SimulationRequest::new(
            ModelParams::Ancestor(truth.clone()),
            StopRule::EventCount(6000),
            17,
        ))
        .unwrap();
        let prior = GammaPrior::new(2.0, 1.0);
        for (mags, set, rate) in [(&truth.k, ParentSet::Immigrant, 2.0), (&truth.l, ParentSet::Triggered, 0.5)] {
            for diag in [true, false] {
                let s = rate_stats(&data.log, &data.truth, mags, set, diag);
                let at = |r| kernel_rate_log_conditional(&s, prior, r);
                assert!(at(rate) > at(2.0 * rate));
                assert!(at(rate) > at(0.5 * rate));
            }
        }
    }
}
