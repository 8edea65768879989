//! Conditional log-likelihoods given the branching structure, and stability
//! analysis through spectral radii and the stationary-mean linear system.

use nalgebra::{DMatrix, DVector};

use crate::model::{exp_log_density, exp_primitive, AncestorParams, BranchingState, ClassicParams, EventLog, ModelError};

/// Conditional log-likelihood; `Impossible` stands for log 0, reached when a
/// zero magnitude (or zero background rate) has to explain an observed child.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogLikelihood {
    Finite(f64),
    Impossible {
        /// 0-based parent event, `None` for the background.
        parent: Option<usize>,
        child: usize,
    },
}

impl LogLikelihood {
    pub fn value(&self) -> f64 {
        match *self {
            Self::Finite(v) => v,
            Self::Impossible { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn is_impossible(&self) -> bool {
        matches!(self, Self::Impossible { .. })
    }
}

/// Offspring law of one parent: magnitude and kernel rate per target.
pub(crate) trait ParentLaw {
    fn law(&self, immigrant_parent: bool, source: usize, target: usize) -> (f64, f64);
}

impl ParentLaw for AncestorParams {
    #[inline]
    fn law(&self, immigrant_parent: bool, source: usize, target: usize) -> (f64, f64) {
        self.offspring_law(immigrant_parent, source, target)
    }
}

impl ParentLaw for ClassicParams {
    #[inline]
    fn law(&self, _immigrant_parent: bool, source: usize, target: usize) -> (f64, f64) {
        (self.k.get(source, target), self.g.rate(source, target))
    }
}

/// Log of one parent's block: `Σ_m [−η G(T − t_p)] + Σ_children log(η g(lag))`.
/// `Err(child)` if a zero magnitude meets a child.
pub(crate) fn parent_block<P: ParentLaw>(
    params: &P,
    log: &EventLog,
    branching: &BranchingState,
    p: usize,
    immigrant_parent: bool,
) -> Result<f64, usize> {
    let source = log.dim(p);
    let tau = log.horizon() - log.time(p);
    let mut total = 0.0;
    for m in 0..log.num_dims() {
        let (mag, rate) = params.law(immigrant_parent, source, m);
        total -= mag * exp_primitive(rate, tau);
    }
    for &c in branching.children(p) {
        let c = c as usize;
        let (mag, rate) = params.law(immigrant_parent, source, log.dim(c));
        if mag <= 0.0 {
            return Err(c);
        }
        total += mag.ln() + exp_log_density(rate.ln(), rate, log.time(c) - log.time(p));
    }
    Ok(total)
}

fn check_branching(log: &EventLog, branching: &BranchingState) -> Result<(), ModelError> {
    if branching.len() != log.len() {
        return Err(ModelError::ParentLength { expected: log.len(), found: branching.len() });
    }
    Ok(())
}

fn conditional_loglik<P: ParentLaw>(
    params: &P,
    background: &crate::background::Background,
    log: &EventLog,
    branching: &BranchingState,
) -> Result<LogLikelihood, ModelError> {
    check_branching(log, branching)?;
    if background.num_dims() != log.num_dims() {
        return Err(ModelError::DimensionMismatch { expected: log.num_dims(), found: background.num_dims() });
    }
    let horizon = log.horizon();
    let mut total = 0.0;
    for m in 0..log.num_dims() {
        total -= background.integral(m, horizon);
    }
    for j in branching.immigrant_parents() {
        let rate = background.rate(log.dim(j), log.time(j));
        if rate <= 0.0 {
            return Ok(LogLikelihood::Impossible { parent: None, child: j });
        }
        total += rate.ln();
    }
    for p in 0..log.len() {
        match parent_block(params, log, branching, p, branching.is_immigrant(p)) {
            Ok(v) => total += v,
            Err(child) => return Ok(LogLikelihood::Impossible { parent: Some(p), child }),
        }
    }
    Ok(LogLikelihood::Finite(total))
}

/// Classic multivariate Hawkes log-likelihood conditional on `B`.
pub fn classic_conditional_loglik(
    params: &ClassicParams,
    log: &EventLog,
    branching: &BranchingState,
) -> Result<LogLikelihood, ModelError> {
    conditional_loglik(params, &params.background, log, branching)
}

/// Ancestor Hawkes log-likelihood conditional on `B`: immigrant parents use
/// `(K, g)`, triggered parents `(L, h)`.
pub fn ancestor_conditional_loglik(
    params: &AncestorParams,
    log: &EventLog,
    branching: &BranchingState,
) -> Result<LogLikelihood, ModelError> {
    conditional_loglik(params, &params.background, log, branching)
}

/// Spectral radii and, for a constant background, the stationary rates.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub spectral_radius_l: f64,
    pub spectral_radius_k: f64,
    pub stable: bool,
    /// Mean rate of triggered events `r = (I − L)⁻¹ K μ`.
    pub stationary_triggered_rate: Option<Vec<f64>>,
    /// `λ̄ = μ + r`.
    pub stationary_total_rate: Option<Vec<f64>>,
}

/// Stability is governed by `L`; `r` and `λ̄` are returned only for a
/// constant background with `ρ(L) < 1`.
pub fn stability_report(params: &AncestorParams) -> StabilityReport {
    let rho_l = spectral_radius(params.l.column_convention());
    let rho_k = spectral_radius(params.k.column_convention());
    let stable = rho_l < 1.0;
    let (r, total) = match (stable, params.background.as_constant()) {
        (true, Some(mu)) => {
            let r = stationary_triggered_rate(params.k.column_convention(), params.l.column_convention(), mu);
            match r {
                Some(r) => {
                    let total = mu.iter().zip(&r).map(|(a, b)| a + b).collect();
                    (Some(r), Some(total))
                }
                None => (None, None),
            }
        }
        _ => (None, None),
    };
    StabilityReport {
        spectral_radius_l: rho_l,
        spectral_radius_k: rho_k,
        stable,
        stationary_triggered_rate: r,
        stationary_total_rate: total,
    }
}

/// Classic process: stable iff `ρ(K) < 1`, with `λ̄ = (I − K)⁻¹ μ`.
pub fn classic_stability_report(params: &ClassicParams) -> StabilityReport {
    let mut report = stability_report(&params.as_ancestor());
    report.stable = report.spectral_radius_k < 1.0;
    report
}

/// Solves `(I − L) r = K μ` in the column convention.
fn stationary_triggered_rate(k: &DMatrix<f64>, l: &DMatrix<f64>, mu: &[f64]) -> Option<Vec<f64>> {
    let m = mu.len();
    let rhs = k * DVector::from_column_slice(mu);
    let a = DMatrix::<f64>::identity(m, m) - l;
    a.lu().solve(&rhs).map(|r| r.iter().copied().collect())
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 100_000;

/// Spectral radius of a nonnegative matrix.
///
/// Power iteration on `A + I`, whose Perron root `ρ(A) + 1` strictly dominates
/// every other eigenvalue in modulus; falls back to a dense eigenvalue
/// computation if the iteration stalls.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    if a.iter().any(|&x| x < 0.0) {
        return dense_spectral_radius(a);
    }
    let shifted = a + DMatrix::<f64>::identity(n, n);
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = &shifted * &v;
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - estimate).abs() <= POWER_TOL * next.abs().max(1.0) {
            let residual = (&shifted * &v - &v * next).norm();
            if residual <= 1e-12 * next.abs().max(1.0) {
                return (next - 1.0).max(0.0);
            }
        }
        estimate = next;
    }
    dense_spectral_radius(a)
}

/// Largest eigenvalue modulus via a dense Schur decomposition.
pub fn dense_spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}
