//! Background (immigrant) rates: constant, piecewise-constant on a partition
//! of the window, or the separable seasonal form
//! `μ_m(t) = α_m θ_hour θ_wday θ_month / Z`.
//!
//! Each seasonal factor vector is kept at exposure-weighted mean one. Because
//! the exposure tensor is not separable in general, the product of three
//! mean-one vectors need not average to one over the window; the cached
//! constant `Z` is that average, so `α_m` is always the time-average rate.

use std::sync::Arc;

use crate::calendar::{CalendarCell, CalendarGrid, HOURS, MONTHS, NUM_CELLS, WEEKDAYS};
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub enum Background {
    /// `μ_m` per dimension, events per hour.
    Constant(Vec<f64>),
    Piecewise(PiecewiseBackground),
    Seasonal(SeasonalBackground),
}

fn check_rates(v: &[f64], what: &str) -> Result<(), ModelError> {
    if v.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(ModelError::InvalidParameter(format!("{what} must be finite and >= 0")));
    }
    Ok(())
}

impl Background {
    pub fn constant(mu: Vec<f64>) -> Result<Self, ModelError> {
        if mu.is_empty() {
            return Err(ModelError::NoDimensions);
        }
        check_rates(&mu, "background rates")?;
        Ok(Self::Constant(mu))
    }

    pub fn num_dims(&self) -> usize {
        match self {
            Self::Constant(mu) => mu.len(),
            Self::Piecewise(p) => p.rates.len(),
            Self::Seasonal(s) => s.alpha.len(),
        }
    }

    /// `μ_m(t)`; zero outside the window of a piecewise or seasonal background.
    #[inline]
    pub fn rate(&self, m: usize, t: f64) -> f64 {
        match self {
            Self::Constant(mu) => mu[m],
            Self::Piecewise(p) => p.rate(m, t),
            Self::Seasonal(s) => s.rate(m, t),
        }
    }

    /// `∫_0^upto μ_m(t) dt`.
    pub fn integral(&self, m: usize, upto: f64) -> f64 {
        match self {
            Self::Constant(mu) => mu[m] * upto,
            Self::Piecewise(p) => p.integral(m, upto),
            Self::Seasonal(s) => s.integral(m, upto),
        }
    }

    /// Upper bound on `μ_m(t)` over the window, used for thinning.
    pub fn max_rate(&self, m: usize) -> f64 {
        match self {
            Self::Constant(mu) => mu[m],
            Self::Piecewise(p) => p.rates[m].iter().copied().fold(0.0, f64::max),
            Self::Seasonal(s) => s.max_rate(m),
        }
    }

    pub fn as_constant(&self) -> Option<&[f64]> {
        match self {
            Self::Constant(mu) => Some(mu),
            _ => None,
        }
    }

    pub fn values_ok(&self) -> bool {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0);
        match self {
            Self::Constant(mu) => finite(mu),
            Self::Piecewise(p) => p.rates.iter().all(|r| finite(r)),
            Self::Seasonal(s) => {
                finite(&s.alpha) && finite(&s.theta_hour) && finite(&s.theta_wday) && finite(&s.theta_month)
            }
        }
    }
}

/// `μ_m(t) = μ_{m,b}` on bin `b = [edges[b], edges[b+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseBackground {
    edges: Vec<f64>,
    rates: Vec<Vec<f64>>,
}

impl PiecewiseBackground {
    /// `rates[m][b]` for dimension `m`, bin `b`; `edges` starts at 0 and is
    /// strictly increasing.
    pub fn new(edges: Vec<f64>, rates: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if edges.len() < 2 || edges[0] != 0.0 || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::InvalidParameter(
                "piecewise edges must start at 0 and increase strictly".into(),
            ));
        }
        if rates.is_empty() {
            return Err(ModelError::NoDimensions);
        }
        for r in &rates {
            if r.len() != edges.len() - 1 {
                return Err(ModelError::DimensionMismatch { expected: edges.len() - 1, found: r.len() });
            }
            check_rates(r, "piecewise rates")?;
        }
        Ok(Self { edges, rates })
    }

    /// `bins` equal-width bins over `[0, horizon]`.
    pub fn uniform_edges(horizon: f64, bins: usize) -> Vec<f64> {
        (0..=bins).map(|b| horizon * b as f64 / bins as f64).collect()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn bin_width(&self, b: usize) -> f64 {
        self.edges[b + 1] - self.edges[b]
    }

    /// Bin containing `t`; the final edge belongs to the last bin.
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        let last = *self.edges.last().unwrap();
        if !(0.0..=last).contains(&t) {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= t).saturating_sub(1).min(self.num_bins() - 1))
    }

    pub fn rate(&self, m: usize, t: f64) -> f64 {
        self.bin_of(t).map_or(0.0, |b| self.rates[m][b])
    }

    pub fn integral(&self, m: usize, upto: f64) -> f64 {
        let mut total = 0.0;
        for b in 0..self.num_bins() {
            let lo = self.edges[b];
            if lo >= upto {
                break;
            }
            let hi = self.edges[b + 1].min(upto);
            total += self.rates[m][b] * (hi - lo);
        }
        total
    }

    pub fn set_rates(&mut self, rates: Vec<Vec<f64>>) {
        assert_eq!(rates.len(), self.rates.len());
        self.rates = rates;
    }
}

/// Separable seasonal background on a calendar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalBackground {
    alpha: Vec<f64>,
    theta_hour: Vec<f64>,
    theta_wday: Vec<f64>,
    theta_month: Vec<f64>,
    calendar: Arc<CalendarGrid>,
    /// Exposure-weighted mean of the factor product over the window.
    norm: f64,
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

impl SeasonalBackground {
    /// Factor vectors are rescaled to exposure-weighted mean one; `alpha` is
    /// taken as the time-average rate per dimension.
    pub fn new(
        alpha: Vec<f64>,
        theta_hour: Vec<f64>,
        theta_wday: Vec<f64>,
        theta_month: Vec<f64>,
        calendar: Arc<CalendarGrid>,
    ) -> Result<Self, ModelError> {
        if alpha.is_empty() {
            return Err(ModelError::NoDimensions);
        }
        for (v, n, what) in [
            (&theta_hour, HOURS, "theta_hour"),
            (&theta_wday, WEEKDAYS, "theta_wday"),
            (&theta_month, MONTHS, "theta_month"),
        ] {
            if v.len() != n {
                return Err(ModelError::DimensionMismatch { expected: n, found: v.len() });
            }
            check_rates(v, what)?;
        }
        check_rates(&alpha, "alpha")?;
        let mut s = Self { alpha, theta_hour, theta_wday, theta_month, calendar, norm: 1.0 };
        s.renormalize()?;
        Ok(s)
    }

    /// All seasonal factors equal to one.
    pub fn flat(alpha: Vec<f64>, calendar: Arc<CalendarGrid>) -> Result<Self, ModelError> {
        Self::new(alpha, vec![1.0; HOURS], vec![1.0; WEEKDAYS], vec![1.0; MONTHS], calendar)
    }

    fn renormalize(&mut self) -> Result<(), ModelError> {
        let e = self.calendar.exposure();
        for (v, w) in [
            (&mut self.theta_hour, e.hour_weights()),
            (&mut self.theta_wday, e.wday_weights()),
            (&mut self.theta_month, e.month_weights()),
        ] {
            let mean = weighted_mean(v, &w);
            if !(mean > 0.0 && mean.is_finite()) {
                return Err(ModelError::InvalidParameter(
                    "seasonal factors vanish on every exposed cell".into(),
                ));
            }
            v.iter_mut().for_each(|x| *x /= mean);
        }
        let horizon = self.calendar.horizon();
        let mut z = 0.0;
        for (idx, &exp) in e.as_slice().iter().enumerate() {
            if exp > 0.0 {
                z += exp * self.raw_product(idx);
            }
        }
        self.norm = z / horizon;
        Ok(())
    }

    #[inline]
    fn raw_product(&self, idx: usize) -> f64 {
        let c = CalendarCell::from_index(idx);
        self.theta_hour[c.hour as usize - 1] * self.theta_wday[c.wday as usize - 1] * self.theta_month[c.month as usize - 1]
    }

    /// Mean-one seasonal multiplier of a cell.
    #[inline]
    pub fn profile(&self, cell_index: usize) -> f64 {
        self.raw_product(cell_index) / self.norm
    }

    /// Multipliers of every cell, indexed like the exposure tensor.
    pub fn profile_table(&self) -> Vec<f64> {
        (0..NUM_CELLS).map(|i| self.profile(i)).collect()
    }

    pub fn rate(&self, m: usize, t: f64) -> f64 {
        if !(0.0..=self.calendar.horizon()).contains(&t) {
            return 0.0;
        }
        self.alpha[m] * self.profile(self.calendar.cell_index_at(t))
    }

    pub fn integral(&self, m: usize, upto: f64) -> f64 {
        let mut total = 0.0;
        for (lo, hi, cell) in self.calendar.segments() {
            if lo >= upto {
                break;
            }
            total += self.profile(cell) * (hi.min(upto) - lo);
        }
        self.alpha[m] * total
    }

    /// `α_m max θ_hour max θ_wday max θ_month / Z`.
    pub fn max_rate(&self, m: usize) -> f64 {
        let mx = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        self.alpha[m] * mx(&self.theta_hour) * mx(&self.theta_wday) * mx(&self.theta_month) / self.norm
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn theta_hour(&self) -> &[f64] {
        &self.theta_hour
    }

    pub fn theta_wday(&self) -> &[f64] {
        &self.theta_wday
    }

    pub fn theta_month(&self) -> &[f64] {
        &self.theta_month
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn calendar(&self) -> &Arc<CalendarGrid> {
        &self.calendar
    }

    pub fn set_alpha(&mut self, alpha: Vec<f64>) {
        assert_eq!(alpha.len(), self.alpha.len());
        self.alpha = alpha;
    }

    /// Replaces the factor vectors; they are rescaled to mean one and `Z`
    /// recomputed. Returns the three scale factors that were divided out.
    pub fn set_factors(
        &mut self,
        hour: Vec<f64>,
        wday: Vec<f64>,
        month: Vec<f64>,
    ) -> Result<[f64; 3], ModelError> {
        let e = self.calendar.exposure();
        let scales = [
            weighted_mean(&hour, &e.hour_weights()),
            weighted_mean(&wday, &e.wday_weights()),
            weighted_mean(&month, &e.month_weights()),
        ];
        self.theta_hour = hour;
        self.theta_wday = wday;
        self.theta_month = month;
        self.renormalize()?;
        Ok(scales)
    }

    /// `Σ_h w_h θ_hour(h)` and the weekday/month analogues.
    pub fn weighted_means(&self) -> [f64; 3] {
        let e = self.calendar.exposure();
        [
            weighted_mean(&self.theta_hour, &e.hour_weights()),
            weighted_mean(&self.theta_wday, &e.wday_weights()),
            weighted_mean(&self.theta_month, &e.month_weights()),
        ]
    }
}
