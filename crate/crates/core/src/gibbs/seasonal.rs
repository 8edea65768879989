//! Update of the separable seasonal background.
//!
//! The rate is `α_m θ_hour θ_wday θ_month / Z`. Each factor block is drawn
//! from its per-cell Gamma conditional given the others, with the scale
//! `α̃_m = α_m / Z` pooled over dimensions; the block is then rescaled to
//! exposure-weighted mean one and the scale moved into `α̃`. Last, `α_m`
//! (the time-average rate) is drawn from `Gamma(a + n_m, b + T)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GammaPrior, GibbsError};
use crate::background::SeasonalBackground;
use crate::calendar::{CalendarCell, CalendarGrid, HOURS, MONTHS, NUM_CELLS, WEEKDAYS};
use crate::model::{BranchingState, EventLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeasonalFactor {
    Hour,
    Weekday,
    Month,
}

/// Bins of the updated factors that had no exposure in the window; their
/// draws come from the prior.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeasonalUpdate {
    pub zero_exposure: Vec<(SeasonalFactor, usize)>,
}

/// Calendar cell index of every event.
pub fn event_cells(log: &EventLog, calendar: &CalendarGrid) -> Vec<usize> {
    log.times().map(|t| calendar.cell_index_at(t)).collect()
}

fn cell_parts(idx: usize) -> [usize; 3] {
    let c = CalendarCell::from_index(idx);
    [c.hour as usize - 1, c.wday as usize - 1, c.month as usize - 1]
}

/// One Gibbs pass over `θ_hour`, `θ_wday`, `θ_month` and `α`.
pub fn sample_seasonal_background<R: Rng + ?Sized>(
    log: &EventLog,
    branching: &BranchingState,
    seasonal: &mut SeasonalBackground,
    cells: &[usize],
    prior_alpha: GammaPrior,
    prior_theta: GammaPrior,
    rng: &mut R,
) -> Result<SeasonalUpdate, GibbsError> {
    let calendar = seasonal.calendar().clone();
    let exposure = calendar.exposure();
    let mut cell_counts = vec![0usize; NUM_CELLS];
    for j in branching.immigrant_parents() {
        cell_counts[cells[j]] += 1;
    }
    let mut scale: f64 = seasonal.alpha().iter().sum::<f64>() / seasonal.norm();
    let mut factors = [
        seasonal.theta_hour().to_vec(),
        seasonal.theta_wday().to_vec(),
        seasonal.theta_month().to_vec(),
    ];
    let weights = [exposure.hour_weights(), exposure.wday_weights(), exposure.month_weights()];
    let kinds = [SeasonalFactor::Hour, SeasonalFactor::Weekday, SeasonalFactor::Month];
    let sizes = [HOURS, WEEKDAYS, MONTHS];
    let parts: Vec<[usize; 3]> = (0..NUM_CELLS).map(cell_parts).collect();
    let mut update = SeasonalUpdate::default();
    for block in 0..3 {
        let mut counts = vec![0.0; sizes[block]];
        let mut raw_exposure = vec![0.0; sizes[block]];
        let mut weighted = vec![0.0; sizes[block]];
        for (idx, p) in parts.iter().enumerate() {
            let e = exposure.by_index(idx);
            counts[p[block]] += cell_counts[idx] as f64;
            if e > 0.0 {
                let others: f64 = (0..3).filter(|&b| b != block).map(|b| factors[b][p[b]]).product();
                raw_exposure[p[block]] += e;
                weighted[p[block]] += e * others;
            }
        }
        for i in 0..sizes[block] {
            if raw_exposure[i] == 0.0 {
                update.zero_exposure.push((kinds[block], i));
            }
            factors[block][i] = prior_theta.posterior(counts[i], scale * weighted[i]).sample(rng);
        }
        let mean: f64 = factors[block].iter().zip(&weights[block]).map(|(v, w)| v * w).sum();
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(GibbsError::InvalidConfig("seasonal factor block collapsed to zero".into()));
        }
        factors[block].iter_mut().for_each(|v| *v /= mean);
        scale *= mean;
    }
    let [hour, wday, month] = factors;
    seasonal.set_factors(hour, wday, month)?;
    let horizon = log.horizon();
    let alpha = branching
        .immigrant_counts()
        .iter()
        .map(|&n| prior_alpha.posterior(n as f64, horizon).sample(rng))
        .collect();
    seasonal.set_alpha(alpha);
    Ok(update)
}
