//! Simulate-then-refit studies against known generating parameters.

use serde::Serialize;

use super::DiagnosticsError;
use crate::gibbs::{run_chain, FitSpec, McmcConfig, ModelKind, Priors};
use crate::model::InfluenceMatrix;
use crate::scenarios::ScenarioSpec;
use crate::simulate::{simulate, SimulatedData, SimulationRequest};

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOptions {
    pub replicates: usize,
    /// Overrides the scenario's event count.
    pub events: Option<usize>,
    pub config: McmcConfig,
    pub priors: Priors,
    pub fit_model: ModelKind,
    pub seed: u64,
}

impl RecoveryOptions {
    pub fn new(replicates: usize, config: McmcConfig, seed: u64) -> Self {
        Self { replicates, events: None, config, priors: Priors::default(), fit_model: ModelKind::Ancestor, seed }
    }
}

/// Posterior means of one replicate fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFit {
    pub replicate: usize,
    pub data_seed: u64,
    pub chain_seed: u64,
    pub events: usize,
    pub horizon: f64,
    /// Time-average background rate per dimension.
    pub mu: Vec<f64>,
    pub k: InfluenceMatrix,
    pub l: Option<InfluenceMatrix>,
    pub g: [f64; 2],
    pub h: Option<[f64; 2]>,
    pub rmse_k: f64,
    pub rmse_l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedReplicate {
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub scenario: String,
    pub fit_model: ModelKind,
    pub replicates: usize,
    pub generating_k: InfluenceMatrix,
    pub generating_l: InfluenceMatrix,
    pub fits: Vec<ReplicateFit>,
    pub failed: Vec<FailedReplicate>,
    /// Averages of the per-replicate posterior means.
    pub mean_mu: Vec<f64>,
    pub mean_k: InfluenceMatrix,
    pub mean_l: Option<InfluenceMatrix>,
    pub mean_g: [f64; 2],
    pub mean_h: Option<[f64; 2]>,
    /// Entrywise spread of the posterior means across replicates.
    pub sd_k: InfluenceMatrix,
    pub sd_l: Option<InfluenceMatrix>,
    /// Entrywise correlation between generating and averaged matrices.
    pub corr_k: Option<f64>,
    pub corr_l: Option<f64>,
    /// Entrywise RMSE of the averaged matrices.
    pub rmse_k: f64,
    pub rmse_l: Option<f64>,
    /// Mean over replicates of the per-replicate entrywise RMSE.
    pub mean_replicate_rmse_k: f64,
    pub mean_replicate_rmse_l: Option<f64>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `(data seed, chain seed)` of replicate `r`.
pub fn replicate_seeds(seed: u64, r: usize) -> (u64, u64) {
    let base = mix(seed ^ mix(r as u64));
    (base, mix(base))
}

/// Data set of replicate `r`; identical for every fitted model.
pub fn simulate_replicate(
    scenario: &ScenarioSpec,
    r: usize,
    seed: u64,
    events: Option<usize>,
) -> Result<SimulatedData, DiagnosticsError> {
    let spec = match events {
        Some(n) => scenario.clone().with_events(n),
        None => scenario.clone(),
    };
    let request = SimulationRequest::new(spec.model_params(), spec.stop, replicate_seeds(seed, r).0);
    Ok(simulate(&request)?)
}

/// Pearson correlation of paired entries; `None` when either side is constant.
pub fn correlation(a: &InfluenceMatrix, b: &InfluenceMatrix) -> Option<f64> {
    let x: Vec<f64> = a.entries().map(|e| e.2).collect();
    let y: Vec<f64> = b.entries().map(|e| e.2).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(&y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx).powi(2);
        syy += (yi - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn rmse(a: &InfluenceMatrix, b: &InfluenceMatrix) -> f64 {
    let n = (a.dim() * a.dim()) as f64;
    (a.entries().map(|(s, t, v)| (v - b.get(s, t)).powi(2)).sum::<f64>() / n).sqrt()
}

fn mean_sd(mats: &[&InfluenceMatrix], m: usize) -> (InfluenceMatrix, InfluenceMatrix) {
    let n = mats.len() as f64;
    let mean = InfluenceMatrix::from_fn(m, |s, t| mats.iter().map(|x| x.get(s, t)).sum::<f64>() / n);
    let sd = InfluenceMatrix::from_fn(m, |s, t| {
        if mats.len() < 2 {
            return 0.0;
        }
        let mu = mean.get(s, t);
        (mats.iter().map(|x| (x.get(s, t) - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    (mean, sd)
}

fn mean_vec(rows: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut n = 0.0;
    for row in rows {
        if acc.is_empty() {
            acc = vec![0.0; row.len()];
        }
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        n += 1.0;
    }
    acc.iter().map(|a| a / n).collect()
}

fn fit_replicate(scenario: &ScenarioSpec, r: usize, options: &RecoveryOptions) -> Result<ReplicateFit, DiagnosticsError> {
    let (data_seed, chain_seed) = replicate_seeds(options.seed, r);
    let data = simulate_replicate(scenario, r, options.seed, options.events)?;
    let mut fit_background = scenario.fit_background.clone();
    if let crate::gibbs::BackgroundSpec::Piecewise { edges } = &mut fit_background {
        let last = edges.len() - 1;
        edges[last] = data.horizon();
    }
    let mut spec = FitSpec::new(options.fit_model, fit_background, McmcConfig { seed: chain_seed, ..options.config });
    spec.priors = options.priors;
    let chain = run_chain(&data.log, &spec)?;
    let k = chain.posterior_mean_k().ok_or(DiagnosticsError::EmptyChain)?;
    let l = chain.posterior_mean_l();
    let (g, h) = chain.posterior_mean_rates();
    Ok(ReplicateFit {
        replicate: r,
        data_seed,
        chain_seed,
        events: data.log.len(),
        horizon: data.horizon(),
        mu: chain.posterior_mean_background(),
        rmse_k: rmse(&k, &scenario.params.k),
        rmse_l: l.as_ref().map(|l| rmse(l, &scenario.params.l)),
        k,
        l,
        g,
        h,
    })
}

/// Simulates and refits `replicates` data sets; failed replicates are
/// reported and left out of the aggregates. `progress` sees each finished
/// replicate.
pub fn recovery_study(
    scenario: &ScenarioSpec,
    options: &RecoveryOptions,
    mut progress: impl FnMut(&Result<ReplicateFit, DiagnosticsError>),
) -> Result<RecoveryReport, DiagnosticsError> {
    let mut fits = Vec::new();
    let mut failed = Vec::new();
    for r in 0..options.replicates {
        let fit = fit_replicate(scenario, r, options);
        progress(&fit);
        match fit {
            Ok(f) => fits.push(f),
            Err(e) => failed.push(FailedReplicate { replicate: r, error: e.to_string() }),
        }
    }
    if fits.is_empty() {
        return Err(DiagnosticsError::NotEnoughDraws { needed: 1, available: 0 });
    }
    let m = scenario.params.num_dims();
    let n = fits.len() as f64;
    let (mean_k, sd_k) = mean_sd(&fits.iter().map(|f| &f.k).collect::<Vec<_>>(), m);
    let ls: Vec<&InfluenceMatrix> = fits.iter().filter_map(|f| f.l.as_ref()).collect();
    let (mean_l, sd_l) = if ls.is_empty() {
        (None, None)
    } else {
        let (a, b) = mean_sd(&ls, m);
        (Some(a), Some(b))
    };
    let mean_g = {
        let v = mean_vec(fits.iter().map(|f| f.g.to_vec()));
        [v[0], v[1]]
    };
    let mean_h = fits.iter().all(|f| f.h.is_some()).then(|| {
        let v = mean_vec(fits.iter().filter_map(|f| f.h.map(|h| h.to_vec())));
        [v[0], v[1]]
    });
    Ok(RecoveryReport {
        scenario: scenario.name.to_string(),
        fit_model: options.fit_model,
        replicates: options.replicates,
        generating_k: scenario.params.k.clone(),
        generating_l: scenario.params.l.clone(),
        mean_mu: mean_vec(fits.iter().map(|f| f.mu.clone())),
        corr_k: correlation(&scenario.params.k, &mean_k),
        corr_l: mean_l.as_ref().and_then(|l| correlation(&scenario.params.l, l)),
        rmse_k: rmse(&mean_k, &scenario.params.k),
        rmse_l: mean_l.as_ref().map(|l| rmse(l, &scenario.params.l)),
        mean_replicate_rmse_k: fits.iter().map(|f| f.rmse_k).sum::<f64>() / n,
        mean_replicate_rmse_l: mean_l.as_ref().map(|_| fits.iter().filter_map(|f| f.rmse_l).sum::<f64>() / n),
        mean_k,
        mean_l,
        mean_g,
        mean_h,
        sd_k,
        sd_l,
        fits,
        failed,
    })
}
