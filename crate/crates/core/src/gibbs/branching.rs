//! Branching-structure updates.

use rand::Rng;

use super::{draw_log_categorical, GibbsError};
use crate::model::{AncestorParams, BranchingState, ClassicParams, EventLog, KernelSpec};

/// First event index whose lag to `t` is within the candidate window.
fn first_candidate(log: &EventLog, j: usize, cutoff: Option<f64>, slowest_rate: f64) -> usize {
    match cutoff {
        None => 0,
        Some(c) => {
            let earliest = log.time(j) - c / slowest_rate;
            log.events()[..j].partition_point(|e| e.time < earliest)
        }
    }
}

fn slowest(specs: &[KernelSpec]) -> f64 {
    specs.iter().flat_map(|s| [s.rate_diag, s.rate_off]).fold(f64::INFINITY, f64::min)
}

/// Table of `(ln η, ln rate, rate)` per `(source, target)`.
fn law_table(m: usize, law: impl Fn(usize, usize) -> (f64, f64)) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(m * m);
    for s in 0..m {
        for t in 0..m {
            let (mag, rate) = law(s, t);
            out.push((mag.ln(), rate.ln(), rate));
        }
    }
    out
}

/// Independent draw of every `B_i` with `P(B_i = 0) ∝ μ(t_i)` and
/// `P(B_i = j) ∝ K g(t_i − t_j)`, flat prior over parents.
pub fn classic_sample_branching<R: Rng + ?Sized>(
    log: &EventLog,
    params: &ClassicParams,
    cutoff: Option<f64>,
    rng: &mut R,
) -> Result<BranchingState, GibbsError> {
    let m = log.num_dims();
    let table = law_table(m, |s, t| (params.k.get(s, t), params.g.rate(s, t)));
    let slow = slowest(&[params.g]);
    let mut parents = vec![0u32; log.len()];
    let mut weights = Vec::new();
    for i in 0..log.len() {
        let (ti, di) = (log.time(i), log.dim(i));
        let lo = first_candidate(log, i, cutoff, slow);
        weights.clear();
        weights.push(params.background.rate(di, ti).ln());
        for j in lo..i {
            let (ln_mag, ln_rate, rate) = table[log.dim(j) * m + di];
            weights.push(ln_mag + ln_rate - rate * (ti - log.time(j)));
        }
        let pick = draw_log_categorical(&weights, rng).ok_or(GibbsError::DegenerateWeights { event: i })?;
        parents[i] = if pick == 0 { 0 } else { (lo + pick) as u32 };
    }
    Ok(BranchingState::from_parents(log, parents)?)
}

/// One reverse-time sweep `j = N, …, 1` updating `state` in place.
///
/// The weight of candidate `k` is the incoming term (background, or the
/// candidate's current `K g` / `L h` law) times the outgoing block of `j`
/// under the label the candidate implies: `K, g` when `k = 0`, `L, h`
/// otherwise. The outgoing block takes only two values, so it is computed
/// twice per event.
pub fn ancestor_sample_branching<R: Rng + ?Sized>(
    log: &EventLog,
    params: &AncestorParams,
    state: &mut BranchingState,
    cutoff: Option<f64>,
    rng: &mut R,
) -> Result<(), GibbsError> {
    state.check_consistency(log)?;
    let m = log.num_dims();
    let horizon = log.horizon();
    let imm = law_table(m, |s, t| params.offspring_law(true, s, t));
    let trg = law_table(m, |s, t| params.offspring_law(false, s, t));
    let slow = slowest(&[params.g, params.h]);
    let mut weights = Vec::new();
    for j in (0..log.len()).rev() {
        let (tj, dj) = (log.time(j), log.dim(j));
        let outgoing = |table: &[(f64, f64, f64)]| {
            let mut total = 0.0;
            for target in 0..m {
                let (ln_mag, _, rate) = table[dj * m + target];
                if ln_mag > f64::NEG_INFINITY {
                    total -= ln_mag.exp() * crate::model::exp_primitive(rate, horizon - tj);
                }
            }
            for &c in state.children(j) {
                let c = c as usize;
                let (ln_mag, ln_rate, rate) = table[dj * m + log.dim(c)];
                total += ln_mag + ln_rate - rate * (log.time(c) - tj);
            }
            total
        };
        let out_imm = outgoing(&imm);
        let out_trg = outgoing(&trg);
        let lo = first_candidate(log, j, cutoff, slow);
        weights.clear();
        weights.push(params.background.rate(dj, tj).ln() + out_imm);
        for k in lo..j {
            let table = if state.is_immigrant(k) { &imm } else { &trg };
            let (ln_mag, ln_rate, rate) = table[log.dim(k) * m + dj];
            weights.push(ln_mag + ln_rate - rate * (tj - log.time(k)) + out_trg);
        }
        let pick = draw_log_categorical(&weights, rng).ok_or(GibbsError::DegenerateWeights { event: j })?;
        let parent = if pick == 0 { 0 } else { (lo + pick) as u32 };
        state.set_parent(log, j, parent);
    }
    Ok(())
}
