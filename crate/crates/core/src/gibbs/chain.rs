//! The full sampler loop and its retained draws.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::branching::{ancestor_sample_branching, classic_sample_branching};
use super::conjugate::{influence_stats, sample_influence, sample_k_l, sample_mu_constant, sample_mu_piecewise, ParentSet};
use super::seasonal::{event_cells, sample_seasonal_background, SeasonalFactor};
use super::slice::sample_kernel_rates;
use super::{GibbsError, McmcConfig, ModelKind, Priors};
use crate::background::{Background, PiecewiseBackground, SeasonalBackground};
use crate::calendar::CalendarGrid;
use crate::likelihood::spectral_radius;
use crate::model::{
    AncestorParams, BranchingState, ClassicParams, EventLog, InfluenceMatrix, KernelSpec, ModelError, ModelParams,
};

/// Shape of the background rate being fitted.
#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundSpec {
    Constant,
    Piecewise { edges: Vec<f64> },
    Seasonal { calendar: Arc<CalendarGrid> },
}

impl BackgroundSpec {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Piecewise { .. } => "piecewise",
            Self::Seasonal { .. } => "seasonal",
        }
    }

    fn check(&self, log: &EventLog) -> Result<(), GibbsError> {
        let horizon = log.horizon();
        match self {
            Self::Constant => Ok(()),
            Self::Piecewise { edges } => {
                let ok = edges.len() >= 2
                    && edges[0] == 0.0
                    && (edges[edges.len() - 1] - horizon).abs() <= 1e-9 * horizon.max(1.0)
                    && edges.windows(2).all(|w| w[1] > w[0]);
                if ok {
                    Ok(())
                } else {
                    Err(GibbsError::InvalidConfig("piecewise edges must increase from 0 to the horizon".into()))
                }
            }
            Self::Seasonal { calendar } => {
                if (calendar.horizon() - horizon).abs() <= 1e-6 {
                    Ok(())
                } else {
                    Err(GibbsError::InvalidConfig(format!(
                        "calendar window of {} h does not match the log horizon {horizon} h",
                        calendar.horizon()
                    )))
                }
            }
        }
    }

    /// Background with every rate at `value` (factors flat).
    fn initial(&self, num_dims: usize, value: f64) -> Result<Background, ModelError> {
        Ok(match self {
            Self::Constant => Background::constant(vec![value; num_dims])?,
            Self::Piecewise { edges } => Background::Piecewise(PiecewiseBackground::new(
                edges.clone(),
                vec![vec![value; edges.len() - 1]; num_dims],
            )?),
            Self::Seasonal { calendar } => {
                Background::Seasonal(SeasonalBackground::flat(vec![value; num_dims], calendar.clone())?)
            }
        })
    }
}

/// Everything `run_chain` needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSpec {
    pub model: ModelKind,
    pub background: BackgroundSpec,
    pub priors: Priors,
    pub config: McmcConfig,
}

impl FitSpec {
    pub fn new(model: ModelKind, background: BackgroundSpec, config: McmcConfig) -> Self {
        Self { model, background, priors: Priors::default(), config }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundDraw {
    Constant(Vec<f64>),
    Piecewise(Vec<Vec<f64>>),
    Seasonal { alpha: Vec<f64>, theta_hour: Vec<f64>, theta_wday: Vec<f64>, theta_month: Vec<f64> },
}

impl BackgroundDraw {
    fn of(background: &Background) -> Self {
        match background {
            Background::Constant(mu) => Self::Constant(mu.clone()),
            Background::Piecewise(p) => Self::Piecewise(p.rates().to_vec()),
            Background::Seasonal(s) => Self::Seasonal {
                alpha: s.alpha().to_vec(),
                theta_hour: s.theta_hour().to_vec(),
                theta_wday: s.theta_wday().to_vec(),
                theta_month: s.theta_month().to_vec(),
            },
        }
    }

    /// Time-average background rate per dimension.
    pub fn mean_rates(&self, edges: Option<&[f64]>) -> Vec<f64> {
        match self {
            Self::Constant(mu) => mu.clone(),
            Self::Seasonal { alpha, .. } => alpha.clone(),
            Self::Piecewise(rates) => {
                let edges = edges.expect("piecewise draws need their edges");
                let span = edges[edges.len() - 1] - edges[0];
                rates
                    .iter()
                    .map(|row| row.iter().enumerate().map(|(b, r)| r * (edges[b + 1] - edges[b])).sum::<f64>() / span)
                    .collect()
            }
        }
    }

    pub fn to_background(&self, spec: &BackgroundSpec) -> Result<Background, ModelError> {
        match (self, spec) {
            (Self::Constant(mu), BackgroundSpec::Constant) => Background::constant(mu.clone()),
            (Self::Piecewise(rates), BackgroundSpec::Piecewise { edges }) => {
                Ok(Background::Piecewise(PiecewiseBackground::new(edges.clone(), rates.clone())?))
            }
            (Self::Seasonal { alpha, theta_hour, theta_wday, theta_month }, BackgroundSpec::Seasonal { calendar }) => {
                Ok(Background::Seasonal(SeasonalBackground::new(
                    alpha.clone(),
                    theta_hour.clone(),
                    theta_wday.clone(),
                    theta_month.clone(),
                    calendar.clone(),
                )?))
            }
            _ => Err(ModelError::InvalidParameter("background draw does not match the background spec".into())),
        }
    }
}

/// One retained state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub iteration: usize,
    pub background: BackgroundDraw,
    pub k: InfluenceMatrix,
    /// `None` for the classic model.
    pub l: Option<InfluenceMatrix>,
    pub g: KernelSpec,
    pub h: Option<KernelSpec>,
    pub rho_k: f64,
    pub rho_l: Option<f64>,
    pub immigrants: usize,
    pub immigrant_counts: Vec<usize>,
}

impl Draw {
    fn capture(iteration: usize, params: &ModelParams, branching: &BranchingState) -> Self {
        Self::from_parts(iteration, params, branching.immigrant_counts().to_vec())
    }

    fn from_parts(iteration: usize, params: &ModelParams, immigrant_counts: Vec<usize>) -> Self {
        let (k, l, g, h) = match params {
            ModelParams::Classic(p) => (p.k.clone(), None, p.g, None),
            ModelParams::Ancestor(p) => (p.k.clone(), Some(p.l.clone()), p.g, Some(p.h)),
        };
        Self {
            iteration,
            background: BackgroundDraw::of(params.background()),
            rho_k: spectral_radius(k.column_convention()),
            rho_l: l.as_ref().map(|l| spectral_radius(l.column_convention())),
            k,
            l,
            g,
            h,
            immigrants: immigrant_counts.iter().sum(),
            immigrant_counts,
        }
    }

    /// Named scalar values in chain-file column order: background, `K_i_j`,
    /// `L_i_j`, kernel rates, spectral radii and immigrant counts. Indices
    /// are 1-based, `K_i_j` is the influence of `i` on `j`.
    pub fn columns(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        match &self.background {
            BackgroundDraw::Constant(mu) => {
                out.extend(mu.iter().enumerate().map(|(i, v)| (format!("mu_{}", i + 1), *v)));
            }
            BackgroundDraw::Piecewise(rates) => {
                for (i, row) in rates.iter().enumerate() {
                    out.extend(row.iter().enumerate().map(|(b, v)| (format!("mu_{}_{}", i + 1, b + 1), *v)));
                }
            }
            BackgroundDraw::Seasonal { alpha, theta_hour, theta_wday, theta_month } => {
                out.extend(alpha.iter().enumerate().map(|(i, v)| (format!("alpha_{}", i + 1), *v)));
                for (name, v) in [("theta_hour", theta_hour), ("theta_wday", theta_wday), ("theta_month", theta_month)] {
                    out.extend(v.iter().enumerate().map(|(i, x)| (format!("{name}_{}", i + 1), *x)));
                }
            }
        }
        let m = self.k.dim();
        let mut matrix = |name: &str, mat: &InfluenceMatrix| {
            for s in 0..m {
                for t in 0..m {
                    out.push((format!("{name}_{}_{}", s + 1, t + 1), mat.get(s, t)));
                }
            }
        };
        matrix("K", &self.k);
        if let Some(l) = &self.l {
            matrix("L", l);
        }
        out.push(("beta_diag".into(), self.g.rate_diag));
        out.push(("beta_off".into(), self.g.rate_off));
        if let Some(h) = self.h {
            out.push(("gamma_diag".into(), h.rate_diag));
            out.push(("gamma_off".into(), h.rate_off));
        }
        out.push(("rho_K".into(), self.rho_k));
        if let Some(r) = self.rho_l {
            out.push(("rho_L".into(), r));
        }
        out.push(("immigrants".into(), self.immigrants as f64));
        out.extend(self.immigrant_counts.iter().enumerate().map(|(i, &n)| (format!("immigrants_{}", i + 1), n as f64)));
        out
    }

    /// Spectral radius of the matrix governing stability.
    pub fn stability_radius(&self) -> f64 {
        self.rho_l.unwrap_or(self.rho_k)
    }

    pub fn to_params(&self, spec: &BackgroundSpec, restricted: bool) -> Result<ModelParams, ModelError> {
        let background = self.background.to_background(spec)?;
        Ok(match (&self.l, self.h) {
            (Some(l), Some(h)) => ModelParams::Ancestor(AncestorParams::new(
                background,
                self.k.clone(),
                l.clone(),
                self.g,
                h,
                restricted,
            )?),
            _ => ModelParams::Classic(ClassicParams::new(background, self.k.clone(), self.g)?),
        })
    }
}

/// Retained draws plus the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub model: ModelKind,
    pub background: BackgroundSpec,
    pub priors: Priors,
    pub config: McmcConfig,
    pub num_dims: usize,
    pub horizon: f64,
    pub draws: Vec<Draw>,
    /// Seasonal bins without exposure, drawn from their prior.
    pub zero_exposure: Vec<(SeasonalFactor, usize)>,
    /// Wall-clock duration of the run; not part of any serialized output.
    pub elapsed_secs: f64,
}

fn mean_of<'a>(items: impl Iterator<Item = &'a InfluenceMatrix>, m: usize) -> Option<InfluenceMatrix> {
    let mut acc = InfluenceMatrix::zeros(m);
    let mut n = 0usize;
    for mat in items {
        for (s, t, v) in mat.entries() {
            acc.set(s, t, acc.get(s, t) + v);
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    Some(InfluenceMatrix::from_fn(m, |s, t| acc.get(s, t) / n as f64))
}

impl ChainDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn params_at(&self, i: usize) -> Result<ModelParams, ModelError> {
        self.draws[i].to_params(&self.background, self.model == ModelKind::AncestorRestricted)
    }

    pub fn posterior_mean_k(&self) -> Option<InfluenceMatrix> {
        mean_of(self.draws.iter().map(|d| &d.k), self.num_dims)
    }

    pub fn posterior_mean_l(&self) -> Option<InfluenceMatrix> {
        mean_of(self.draws.iter().filter_map(|d| d.l.as_ref()), self.num_dims)
    }

    /// Posterior mean of the time-average background rate per dimension.
    pub fn posterior_mean_background(&self) -> Vec<f64> {
        let edges = match &self.background {
            BackgroundSpec::Piecewise { edges } => Some(edges.as_slice()),
            _ => None,
        };
        let mut acc = vec![0.0; self.num_dims];
        for d in &self.draws {
            for (a, v) in acc.iter_mut().zip(d.background.mean_rates(edges)) {
                *a += v;
            }
        }
        acc.iter().map(|a| a / self.draws.len().max(1) as f64).collect()
    }

    /// Posterior means of `(β_diag, β_off)` and, if present, `(γ_diag, γ_off)`.
    pub fn posterior_mean_rates(&self) -> ([f64; 2], Option<[f64; 2]>) {
        let n = self.draws.len().max(1) as f64;
        let mut g = [0.0; 2];
        let mut h = [0.0; 2];
        let mut has_h = false;
        for d in &self.draws {
            g[0] += d.g.rate_diag / n;
            g[1] += d.g.rate_off / n;
            if let Some(hh) = d.h {
                has_h = true;
                h[0] += hh.rate_diag / n;
                h[1] += hh.rate_off / n;
            }
        }
        (g, has_h.then_some(h))
    }

    /// Parameters at the componentwise posterior mean. Averaging keeps the
    /// seasonal factors on their mean-one constraints, which are linear.
    pub fn posterior_mean_params(&self) -> Result<ModelParams, GibbsError> {
        let first = self.draws.first().ok_or(GibbsError::EmptyChain)?;
        let n = self.draws.len() as f64;
        let avg = |f: &dyn Fn(&Draw) -> &[f64]| -> Vec<f64> {
            let mut acc = vec![0.0; f(first).len()];
            for d in &self.draws {
                for (a, v) in acc.iter_mut().zip(f(d)) {
                    *a += v / n;
                }
            }
            acc
        };
        let background = match &first.background {
            BackgroundDraw::Constant(_) => BackgroundDraw::Constant(avg(&|d| match &d.background {
                BackgroundDraw::Constant(mu) => mu,
                _ => &[],
            })),
            BackgroundDraw::Piecewise(rows) => BackgroundDraw::Piecewise(
                (0..rows.len())
                    .map(|i| {
                        avg(&|d| match &d.background {
                            BackgroundDraw::Piecewise(r) => &r[i],
                            _ => &[],
                        })
                    })
                    .collect(),
            ),
            BackgroundDraw::Seasonal { .. } => {
                let part = |which: usize| {
                    avg(&|d| match &d.background {
                        BackgroundDraw::Seasonal { alpha, theta_hour, theta_wday, theta_month } => {
                            [alpha, theta_hour, theta_wday, theta_month][which]
                        }
                        _ => &[],
                    })
                };
                BackgroundDraw::Seasonal { alpha: part(0), theta_hour: part(1), theta_wday: part(2), theta_month: part(3) }
            }
        };
        let (g, h) = self.posterior_mean_rates();
        let mean = Draw {
            iteration: 0,
            background,
            k: self.posterior_mean_k().ok_or(GibbsError::EmptyChain)?,
            l: self.posterior_mean_l(),
            g: KernelSpec::new(g[0], g[1])?,
            h: h.map(|h| KernelSpec::new(h[0], h[1])).transpose()?,
            rho_k: 0.0,
            rho_l: None,
            immigrants: 0,
            immigrant_counts: Vec::new(),
        };
        Ok(mean.to_params(&self.background, self.model == ModelKind::AncestorRestricted)?)
    }
}

fn check_state(params: &ModelParams, restricted: bool) -> Result<(), String> {
    if !params.background().values_ok() {
        return Err("background rate".into());
    }
    let positive = |m: &InfluenceMatrix, off_zero: bool| {
        m.entries().all(|(s, t, v)| if off_zero && s != t { v == 0.0 } else { v.is_finite() && v > 0.0 })
    };
    let rates_ok = |k: &KernelSpec| [k.rate_diag, k.rate_off].iter().all(|r| r.is_finite() && *r > 0.0);
    match params {
        ModelParams::Classic(p) => {
            if !positive(&p.k, false) {
                return Err("K".into());
            }
            if !rates_ok(&p.g) {
                return Err("kernel rates".into());
            }
        }
        ModelParams::Ancestor(p) => {
            if !positive(&p.k, false) {
                return Err("K".into());
            }
            if !positive(&p.l, restricted) {
                return Err("L".into());
            }
            if !rates_ok(&p.g) || !rates_ok(&p.h) {
                return Err("kernel rates".into());
            }
        }
    }
    Ok(())
}

fn initial_params(spec: &FitSpec, num_dims: usize) -> Result<ModelParams, GibbsError> {
    let p = &spec.priors;
    let background = spec.background.initial(
        num_dims,
        if matches!(spec.background, BackgroundSpec::Seasonal { .. }) { p.alpha.mean() } else { p.mu.mean() },
    )?;
    let rate = p.kernel_rate.mean();
    let g = KernelSpec::uniform(rate)?;
    let k = InfluenceMatrix::filled(num_dims, p.k.mean());
    Ok(match spec.model {
        ModelKind::Classic => ModelParams::Classic(ClassicParams::new(background, k, g)?),
        kind => {
            let restricted = kind == ModelKind::AncestorRestricted;
            let mut l = InfluenceMatrix::filled(num_dims, p.l.mean());
            if restricted {
                l = l.diagonal_only();
            }
            ModelParams::Ancestor(AncestorParams::new(background, k, l, g, g, restricted)?)
        }
    })
}

/// Runs one chain: `B` all-immigrant and parameters at their prior means
/// initially; blocks in the order branching, background, `K`, `L`, rates.
pub fn run_chain(log: &EventLog, spec: &FitSpec) -> Result<ChainDraws, GibbsError> {
    let started = Instant::now();
    let config = &spec.config;
    config.validate()?;
    spec.priors.validate()?;
    spec.background.check(log)?;
    let m = log.num_dims();
    let restricted = spec.model == ModelKind::AncestorRestricted;
    let mut params = initial_params(spec, m)?;
    let mut branching = BranchingState::all_immigrant(log);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let cells = match &spec.background {
        BackgroundSpec::Seasonal { calendar } => event_cells(log, calendar),
        _ => Vec::new(),
    };
    let mut zero_exposure = Vec::new();
    let mut draws = Vec::with_capacity(config.retained());
    let priors = &spec.priors;
    let horizon = log.horizon();
    for iteration in 1..=config.iterations {
        let previous = params.clone();
        let previous_counts = branching.immigrant_counts().to_vec();
        let abort = |what: String| GibbsError::InvalidState {
            iteration,
            what,
            last_good: Some(Box::new(Draw::from_parts(iteration - 1, &previous, previous_counts.clone()))),
        };
        match &params {
            ModelParams::Classic(p) => {
                branching = classic_sample_branching(log, p, config.candidate_cutoff, &mut rng)?;
            }
            ModelParams::Ancestor(p) => {
                ancestor_sample_branching(log, p, &mut branching, config.candidate_cutoff, &mut rng)?;
            }
        }
        let background = match &mut params {
            ModelParams::Classic(p) => &mut p.background,
            ModelParams::Ancestor(p) => &mut p.background,
        };
        match background {
            Background::Constant(mu) => *mu = sample_mu_constant(&branching, priors.mu, horizon, &mut rng),
            Background::Piecewise(pw) => {
                let rates = sample_mu_piecewise(log, &branching, pw.edges(), priors.mu, &mut rng)?;
                pw.set_rates(rates);
            }
            Background::Seasonal(s) => {
                let update = sample_seasonal_background(log, &branching, s, &cells, priors.alpha, priors.theta, &mut rng)
                    .map_err(|e| abort(e.to_string()))?;
                if zero_exposure.is_empty() {
                    zero_exposure = update.zero_exposure;
                }
            }
        }
        match &mut params {
            ModelParams::Classic(p) => {
                let stats = influence_stats(log, &branching, &p.g, ParentSet::All);
                p.k = sample_influence(&stats, priors.k, false, &mut rng);
            }
            ModelParams::Ancestor(p) => {
                let (k, l) = sample_k_l(log, &branching, &p.g, &p.h, priors.k, priors.l, restricted, &mut rng);
                p.k = k;
                p.l = l;
            }
        }
        check_state(&params, restricted).map_err(abort)?;
        let (g, h) = sample_kernel_rates(log, &branching, &params, priors.kernel_rate, &config.slice, &mut rng)
            .map_err(|e| abort(e.to_string()))?;
        match &mut params {
            ModelParams::Classic(p) => p.g = g,
            ModelParams::Ancestor(p) => {
                p.g = g;
                p.h = h.expect("ancestor rates");
            }
        }
        check_state(&params, restricted).map_err(abort)?;
        if iteration > config.burn_in && (iteration - config.burn_in).is_multiple_of(config.thin) {
            draws.push(Draw::capture(iteration, &params, &branching));
        }
    }
    Ok(ChainDraws {
        model: spec.model,
        background: spec.background.clone(),
        priors: spec.priors,
        config: *config,
        num_dims: m,
        horizon,
        draws,
        zero_exposure,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::GammaPrior;
    use crate::simulate::{simulate, SimulationRequest, StopRule};

    fn small_config(seed: u64) -> McmcConfig {
        McmcConfig { iterations: 400, burn_in: 100, thin: 2, seed, ..Default::default() }
    }

    fn scenario1() -> AncestorParams {
        AncestorParams::new(
            Background::constant(vec![0.05; 3]).unwrap(),
            InfluenceMatrix::filled(3, 0.6),
            InfluenceMatrix::diag_off(3, 0.3, 0.05),
            KernelSpec::uniform(2.0).unwrap(),
            KernelSpec::uniform(0.5).unwrap(),
            false,
        )
        .unwrap()
    }

    #[test]
    fn retained_count_and_determinism() {
        let data =
            simulate(&SimulationRequest::new(ModelParams::Ancestor(scenario1()), StopRule::EventCount(300), 3)).unwrap();
        for kind in [ModelKind::Classic, ModelKind::Ancestor, ModelKind::AncestorRestricted] {
            let spec = FitSpec::new(kind, BackgroundSpec::Constant, small_config(9));
            let a = run_chain(&data.log, &spec).unwrap();
            let b = run_chain(&data.log, &spec).unwrap();
            assert_eq!(a.len(), 150);
            assert_eq!(a.draws, b.draws);
            for d in &a.draws {
                assert!(d.k.entries().all(|(_, _, v)| v > 0.0));
                assert_eq!(d.rho_l.is_some(), kind.is_ancestor());
                if kind == ModelKind::AncestorRestricted {
                    let l = d.l.as_ref().unwrap();
                    assert!(l.entries().all(|(s, t, v)| s == t || v == 0.0));
                }
            }
        }
    }

    #[test]
    fn empty_log_samples_the_priors() {
        let log = EventLog::empty(50.0, 2).unwrap();
        let config = McmcConfig { iterations: 20_000, burn_in: 1, thin: 1, seed: 2, ..Default::default() };
        let chain = run_chain(&log, &FitSpec::new(ModelKind::Ancestor, BackgroundSpec::Constant, config)).unwrap();
        let n = chain.len() as f64;
        let mu_post = GammaPrior::new(1.0, 51.0);
        let mu_mean: f64 = chain.draws.iter().map(|d| d.background.mean_rates(None)[0]).sum::<f64>() / n;
        assert!((mu_mean - mu_post.mean()).abs() < 4.0 * (mu_post.variance() / n).sqrt());
        let rate_mean: f64 = chain.draws.iter().map(|d| d.h.unwrap().rate_off).sum::<f64>() / n;
        assert!((rate_mean - 2.0).abs() < 0.1);
        let k_mean: f64 = chain.draws.iter().map(|d| d.k.get(0, 1)).sum::<f64>() / n;
        assert!((k_mean - 0.1).abs() < 4.0 * (0.01f64 / n).sqrt());
    }

    #[test]
    fn scenario1_chain_separates_k_from_l() {
        let data =
            simulate(&SimulationRequest::new(ModelParams::Ancestor(scenario1()), StopRule::EventCount(1500), 5)).unwrap();
        let config = McmcConfig { iterations: 1500, burn_in: 500, thin: 1, seed: 1, ..Default::default() };
        let chain = run_chain(&data.log, &FitSpec::new(ModelKind::Ancestor, BackgroundSpec::Constant, config)).unwrap();
        let k = chain.posterior_mean_k().unwrap();
        let l = chain.posterior_mean_l().unwrap();
        let k_avg: f64 = k.entries().map(|(_, _, v)| v).sum::<f64>() / 9.0;
        let l_diag: f64 = (0..3).map(|i| l.get(i, i)).sum::<f64>() / 3.0;
        let l_off: f64 = (l.entries().map(|(_, _, v)| v).sum::<f64>() - 3.0 * l_diag) / 6.0;
        assert!(k_avg > 0.3 && k_avg > l_diag, "{k:?}");
        assert!(l_diag > 2.0 * l_off && (l_diag - 0.3).abs() < 0.15, "{l:?}");
        assert!(chain.draws.iter().all(|d| d.rho_l.unwrap() < 1.0));
    }

    #[test]
    fn piecewise_background_chain_runs() {
        let data =
            simulate(&SimulationRequest::new(ModelParams::Ancestor(scenario1()), StopRule::EventCount(200), 8)).unwrap();
        let edges = PiecewiseBackground::uniform_edges(data.horizon(), 4);
        let spec = FitSpec::new(ModelKind::Ancestor, BackgroundSpec::Piecewise { edges: edges.clone() }, small_config(4));
        let chain = run_chain(&data.log, &spec).unwrap();
        let mu = chain.posterior_mean_background();
        assert_eq!(mu.len(), 3);
        assert!(mu.iter().all(|&x| x > 0.0 && x < 0.5));
        let p = chain.params_at(0).unwrap();
        assert!(matches!(p.background(), Background::Piecewise(_)));
        let bad = FitSpec::new(ModelKind::Ancestor, BackgroundSpec::Piecewise { edges: vec![0.0, 1.0] }, small_config(4));
        assert!(run_chain(&data.log, &bad).is_err());
    }
}
