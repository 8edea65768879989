//! Gamma-conjugate blocks: background rates and influence magnitudes.

use rand::Rng;

use super::{GammaPrior, GibbsError};
use crate::model::{exp_primitive, BranchingState, EventLog, InfluenceMatrix, KernelSpec};

/// `μ_m ~ Gamma(a + |S_{0,m}|, b + T)` for every dimension.
pub fn sample_mu_constant<R: Rng + ?Sized>(
    branching: &BranchingState,
    prior: GammaPrior,
    horizon: f64,
    rng: &mut R,
) -> Vec<f64> {
    branching
        .immigrant_counts()
        .iter()
        .map(|&n| prior.posterior(n as f64, horizon).sample(rng))
        .collect()
}

/// Per-bin immigrant counts `n_{m,b}` for the partition given by `edges`.
pub(crate) fn piecewise_counts(log: &EventLog, branching: &BranchingState, edges: &[f64]) -> Vec<Vec<usize>> {
    let bins = edges.len() - 1;
    let mut counts = vec![vec![0; bins]; log.num_dims()];
    for j in branching.immigrant_parents() {
        let t = log.time(j);
        let b = edges[1..].partition_point(|&e| e < t).min(bins - 1);
        counts[log.dim(j)][b] += 1;
    }
    counts
}

/// `μ_{m,b} ~ Gamma(a + n_{m,b}, b + Δ_b)` on the partition `edges`.
pub fn sample_mu_piecewise<R: Rng + ?Sized>(
    log: &EventLog,
    branching: &BranchingState,
    edges: &[f64],
    prior: GammaPrior,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, GibbsError> {
    if edges.len() < 2 {
        return Err(GibbsError::InvalidConfig("piecewise background needs at least one bin".into()));
    }
    let counts = piecewise_counts(log, branching, edges);
    Ok(counts
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(b, &n)| prior.posterior(n as f64, edges[b + 1] - edges[b]).sample(rng))
                .collect()
        })
        .collect())
}

/// Which events act as parents for a magnitude matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentSet {
    /// `J_K`: immigrant events.
    Immigrant,
    /// `J_L`: triggered events.
    Triggered,
    /// Every event (classic model).
    All,
}

impl ParentSet {
    #[inline]
    pub(crate) fn contains(&self, branching: &BranchingState, j: usize) -> bool {
        match self {
            Self::Immigrant => branching.is_immigrant(j),
            Self::Triggered => !branching.is_immigrant(j),
            Self::All => true,
        }
    }
}

/// Sufficient statistics for one magnitude matrix, indexed `[source][target]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceStats {
    /// `Σ_{j ∈ J, d_j = s} |S_{j,t}|`.
    pub counts: Vec<Vec<f64>>,
    /// `Σ_{j ∈ J, d_j = s} G_{s→t}(T − t_j)`.
    pub exposure: Vec<Vec<f64>>,
}

pub fn influence_stats(
    log: &EventLog,
    branching: &BranchingState,
    kernel: &KernelSpec,
    parents: ParentSet,
) -> InfluenceStats {
    let m = log.num_dims();
    let mut counts = vec![vec![0.0; m]; m];
    let mut exposure = vec![vec![0.0; m]; m];
    let horizon = log.horizon();
    for j in (0..log.len()).filter(|&j| parents.contains(branching, j)) {
        let s = log.dim(j);
        for t in 0..m {
            exposure[s][t] += exp_primitive(kernel.rate(s, t), horizon - log.time(j));
        }
        for &c in branching.children(j) {
            counts[s][log.dim(c as usize)] += 1.0;
        }
    }
    InfluenceStats { counts, exposure }
}

/// Independent conjugate draws of every entry; with `diagonal_only` the
/// off-diagonal entries are fixed at zero.
pub fn sample_influence<R: Rng + ?Sized>(
    stats: &InfluenceStats,
    prior: GammaPrior,
    diagonal_only: bool,
    rng: &mut R,
) -> InfluenceMatrix {
    let m = stats.counts.len();
    let mut out = InfluenceMatrix::zeros(m);
    for s in 0..m {
        for t in 0..m {
            if diagonal_only && s != t {
                continue;
            }
            out.set(s, t, prior.posterior(stats.counts[s][t], stats.exposure[s][t]).sample(rng));
        }
    }
    out
}

/// Draws `K` over `J_K` with `g`, then `L` over `J_L` with `h`.
#[allow(clippy::too_many_arguments)]
pub fn sample_k_l<R: Rng + ?Sized>(
    log: &EventLog,
    branching: &BranchingState,
    g: &KernelSpec,
    h: &KernelSpec,
    prior_k: GammaPrior,
    prior_l: GammaPrior,
    restricted: bool,
    rng: &mut R,
) -> (InfluenceMatrix, InfluenceMatrix) {
    let k = sample_influence(&influence_stats(log, branching, g, ParentSet::Immigrant), prior_k, false, rng);
    let l = sample_influence(&influence_stats(log, branching, h, ParentSet::Triggered), prior_l, restricted, rng);
    (k, l)
}
