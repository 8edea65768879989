//! Domain types shared by every other module: event logs, branching
//! structures, exponential kernels, influence matrices and parameter sets.
//!
//! Dimensions are 0-based in the Rust API and 1-based in every file format.
//! Parent vectors follow the usual branching convention: `B_j = 0` marks an
//! immigrant, `B_j = k > 0` names the event with 1-based index `k`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::background::Background;

/// Offset added to exact ties when building a log from unsorted input.
pub const TIE_JITTER: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("negative lag {0}")]
    NegativeLag(f64),
    #[error("time {time} outside the observation window [0, {horizon}]")]
    TimeOutsideWindow { time: f64, horizon: f64 },
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("number of dimensions must be at least 1")]
    NoDimensions,
    #[error("event {index}: time {time} is not strictly after the previous event ({previous})")]
    NotIncreasing { index: usize, time: f64, previous: f64 },
    #[error("event {index}: time {time} is negative, non-finite or beyond the horizon {horizon}")]
    EventOutsideWindow { index: usize, time: f64, horizon: f64 },
    #[error("event {index}: dimension {dim} out of range for {num_dims} dimensions")]
    DimensionOutOfRange { index: usize, dim: usize, num_dims: usize },
    #[error("parent vector has length {found}, expected {expected}")]
    ParentLength { expected: usize, found: usize },
    #[error("event {index} (1-based): parent {parent} is not in 0..{index}")]
    InvalidParent { index: usize, parent: usize },
    #[error("branching structure is inconsistent: {0}")]
    InconsistentBranching(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A single observed event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Hours since the start of the observation window.
    pub time: f64,
    /// 0-based dimension.
    pub dim: usize,
}

impl Event {
    pub fn new(time: f64, dim: usize) -> Self {
        Self { time, dim }
    }
}

/// Time-ordered events on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
    horizon: f64,
    num_dims: usize,
}

impl EventLog {
    /// Validates strict ordering, dimension range and window membership.
    pub fn new(events: Vec<Event>, horizon: f64, num_dims: usize) -> Result<Self, ModelError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ModelError::InvalidHorizon(horizon));
        }
        if num_dims == 0 {
            return Err(ModelError::NoDimensions);
        }
        let mut previous = f64::NEG_INFINITY;
        for (index, e) in events.iter().enumerate() {
            if !(e.time >= 0.0 && e.time <= horizon) {
                return Err(ModelError::EventOutsideWindow { index, time: e.time, horizon });
            }
            if e.time <= previous {
                return Err(ModelError::NotIncreasing { index, time: e.time, previous });
            }
            if e.dim >= num_dims {
                return Err(ModelError::DimensionOutOfRange { index, dim: e.dim, num_dims });
            }
            previous = e.time;
        }
        Ok(Self { events, horizon, num_dims })
    }

    /// Sorts by time (stable, so input order breaks ties) and shifts exact
    /// ties forward by [`TIE_JITTER`]. Returns the log and the number of
    /// events that were moved.
    pub fn from_unsorted(
        mut events: Vec<Event>,
        horizon: f64,
        num_dims: usize,
    ) -> Result<(Self, usize), ModelError> {
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut jittered = 0;
        for i in 1..events.len() {
            if events[i].time <= events[i - 1].time {
                events[i].time = events[i - 1].time + TIE_JITTER;
                jittered += 1;
            }
        }
        let horizon = match events.last() {
            Some(last) if last.time > horizon => last.time,
            _ => horizon,
        };
        Ok((Self::new(events, horizon, num_dims)?, jittered))
    }

    pub fn empty(horizon: f64, num_dims: usize) -> Result<Self, ModelError> {
        Self::new(Vec::new(), horizon, num_dims)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_dims(&self) -> usize {
        self.num_dims
    }

    pub fn time(&self, i: usize) -> f64 {
        self.events[i].time
    }

    pub fn dim(&self, i: usize) -> usize {
        self.events[i].dim
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().map(|e| e.time)
    }

    pub fn counts_by_dim(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_dims];
        for e in &self.events {
            counts[e.dim] += 1;
        }
        counts
    }

    /// Events of one dimension, re-indexed as a one-dimensional log.
    pub fn restrict_to_dim(&self, dim: usize) -> Result<Self, ModelError> {
        let events = self
            .events
            .iter()
            .filter(|e| e.dim == dim)
            .map(|e| Event::new(e.time, 0))
            .collect();
        Self::new(events, self.horizon, 1)
    }
}

/// Latent parent assignment together with its inverse (the child sets).
///
/// `S_{0,m}` is kept implicitly through per-dimension immigrant counts; the
/// explicit child lists cover event parents only, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchingState {
    parents: Vec<u32>,
    children: Vec<Vec<u32>>,
    immigrant_counts: Vec<usize>,
}

impl BranchingState {
    /// Every event an immigrant (`B ≡ 0`).
    pub fn all_immigrant(log: &EventLog) -> Self {
        Self {
            parents: vec![0; log.len()],
            children: vec![Vec::new(); log.len()],
            immigrant_counts: log.counts_by_dim(),
        }
    }

    /// Builds the child sets and parent partitions from a parent vector.
    pub fn from_parents(log: &EventLog, parents: Vec<u32>) -> Result<Self, ModelError> {
        if parents.len() != log.len() {
            return Err(ModelError::ParentLength { expected: log.len(), found: parents.len() });
        }
        let mut children = vec![Vec::new(); log.len()];
        let mut immigrant_counts = vec![0; log.num_dims()];
        for (j, &b) in parents.iter().enumerate() {
            let b = b as usize;
            if b > j {
                return Err(ModelError::InvalidParent { index: j + 1, parent: b });
            }
            if b == 0 {
                immigrant_counts[log.dim(j)] += 1;
            } else {
                children[b - 1].push(j as u32);
            }
        }
        Ok(Self { parents, children, immigrant_counts })
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    /// Raw parent vector in the `B_j ∈ {0, …, j}` (1-based parent) convention.
    pub fn parents(&self) -> &[u32] {
        &self.parents
    }

    /// 0-based index of the parent of event `j`, `None` for immigrants.
    pub fn parent(&self, j: usize) -> Option<usize> {
        match self.parents[j] {
            0 => None,
            b => Some(b as usize - 1),
        }
    }

    pub fn is_immigrant(&self, j: usize) -> bool {
        self.parents[j] == 0
    }

    /// Direct children of event `j` across all dimensions, ascending.
    pub fn children(&self, j: usize) -> &[u32] {
        &self.children[j]
    }

    /// `S_{j+1, m}`: children of event `j` in dimension `m`.
    pub fn children_in<'a>(
        &'a self,
        log: &'a EventLog,
        j: usize,
        m: usize,
    ) -> impl Iterator<Item = usize> + 'a {
        self.children[j].iter().map(|&c| c as usize).filter(move |&c| log.dim(c) == m)
    }

    /// `S_{0, m}`: immigrant events in dimension `m`.
    pub fn immigrants_in<'a>(&'a self, log: &'a EventLog, m: usize) -> impl Iterator<Item = usize> + 'a {
        (0..self.parents.len()).filter(move |&j| self.parents[j] == 0 && log.dim(j) == m)
    }

    /// `|S_{0,m}|` for every dimension.
    pub fn immigrant_counts(&self) -> &[usize] {
        &self.immigrant_counts
    }

    pub fn num_immigrants(&self) -> usize {
        self.immigrant_counts.iter().sum()
    }

    /// `J_K`: events with `B_j = 0`.
    pub fn immigrant_parents(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.parents.len()).filter(move |&j| self.parents[j] == 0)
    }

    /// `J_L`: events with `B_j > 0`.
    pub fn triggered_parents(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.parents.len()).filter(move |&j| self.parents[j] != 0)
    }

    /// Reassigns the parent of event `j` and patches the child sets.
    /// `parent` uses the raw convention (0 = immigrant, k = 1-based event).
    pub fn set_parent(&mut self, log: &EventLog, j: usize, parent: u32) {
        let old = self.parents[j];
        if old == parent {
            return;
        }
        debug_assert!((parent as usize) <= j);
        let jj = j as u32;
        if old == 0 {
            self.immigrant_counts[log.dim(j)] -= 1;
        } else {
            let list = &mut self.children[old as usize - 1];
            if let Ok(pos) = list.binary_search(&jj) {
                list.remove(pos);
            }
        }
        if parent == 0 {
            self.immigrant_counts[log.dim(j)] += 1;
        } else {
            let list = &mut self.children[parent as usize - 1];
            let pos = list.binary_search(&jj).unwrap_or_else(|p| p);
            list.insert(pos, jj);
        }
        self.parents[j] = parent;
    }

    /// Checks that the child sets are exactly the inverse of the parent vector.
    pub fn check_consistency(&self, log: &EventLog) -> Result<(), ModelError> {
        let rebuilt = Self::from_parents(log, self.parents.clone())?;
        if rebuilt != *self {
            return Err(ModelError::InconsistentBranching(
                "child sets do not match the parent vector".into(),
            ));
        }
        if self.parents.len() != log.len() {
            return Err(ModelError::ParentLength { expected: log.len(), found: self.parents.len() });
        }
        Ok(())
    }
}

/// Builds a [`BranchingState`] from a parent vector.
pub fn rebuild_child_sets(log: &EventLog, parents: Vec<u32>) -> Result<BranchingState, ModelError> {
    BranchingState::from_parents(log, parents)
}

/// Exponential kernel with one rate for self-influence and one for
/// cross-influence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub rate_diag: f64,
    pub rate_off: f64,
}

impl KernelSpec {
    pub fn new(rate_diag: f64, rate_off: f64) -> Result<Self, ModelError> {
        for r in [rate_diag, rate_off] {
            if !(r > 0.0 && r.is_finite()) {
                return Err(ModelError::InvalidParameter(format!("kernel rate {r} must be positive")));
            }
        }
        Ok(Self { rate_diag, rate_off })
    }

    pub fn uniform(rate: f64) -> Result<Self, ModelError> {
        Self::new(rate, rate)
    }

    #[inline]
    pub fn rate(&self, source: usize, target: usize) -> f64 {
        if source == target {
            self.rate_diag
        } else {
            self.rate_off
        }
    }

    pub fn density(&self, source: usize, target: usize, lag: f64) -> Result<f64, ModelError> {
        if lag < 0.0 || lag.is_nan() {
            return Err(ModelError::NegativeLag(lag));
        }
        Ok(exp_density(self.rate(source, target), lag))
    }

    pub fn primitive(&self, source: usize, target: usize, z: f64) -> Result<f64, ModelError> {
        if z < 0.0 || z.is_nan() {
            return Err(ModelError::NegativeLag(z));
        }
        Ok(exp_primitive(self.rate(source, target), z))
    }
}

/// `g(lag) = rate · exp(−rate · lag)`.
pub fn kernel_density(spec: &KernelSpec, source: usize, target: usize, lag: f64) -> Result<f64, ModelError> {
    spec.density(source, target, lag)
}

/// `G(z) = 1 − exp(−rate · z)`.
pub fn kernel_primitive(spec: &KernelSpec, source: usize, target: usize, z: f64) -> Result<f64, ModelError> {
    spec.primitive(source, target, z)
}

#[inline]
pub(crate) fn exp_density(rate: f64, lag: f64) -> f64 {
    rate * (-rate * lag).exp()
}

#[inline]
pub(crate) fn exp_primitive(rate: f64, z: f64) -> f64 {
    -(-rate * z).exp_m1()
}

#[inline]
pub(crate) fn exp_log_density(log_rate: f64, rate: f64, lag: f64) -> f64 {
    log_rate - rate * lag
}

/// Nonnegative `M × M` influence matrix.
///
/// Stored in the column convention: matrix entry `(target, source)` holds the
/// influence `source → target`, so that `r = (I − L)⁻¹ K μ` is a plain
/// matrix–vector product. Always go through [`InfluenceMatrix::get`] with
/// `(source, target)` arguments rather than indexing the raw matrix.
/// Serialized as a list of rows, row `i` listing the influences of source `i`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct InfluenceMatrix(DMatrix<f64>);

impl InfluenceMatrix {
    pub fn zeros(m: usize) -> Self {
        Self(DMatrix::zeros(m, m))
    }

    pub fn filled(m: usize, value: f64) -> Self {
        Self(DMatrix::from_element(m, m, value))
    }

    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self(DMatrix::from_fn(m, m, |target, source| f(source, target)))
    }

    /// Diagonal and off-diagonal constants.
    pub fn diag_off(m: usize, diag: f64, off: f64) -> Self {
        Self::from_fn(m, |s, t| if s == t { diag } else { off })
    }

    /// Rows indexed by source, columns by target (the printed `K_{m1→m2}` layout).
    pub fn from_source_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let m = rows.len();
        if m == 0 {
            return Err(ModelError::NoDimensions);
        }
        for row in rows {
            if row.len() != m {
                return Err(ModelError::DimensionMismatch { expected: m, found: row.len() });
            }
            if row.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(ModelError::InvalidParameter("influence entries must be finite and >= 0".into()));
            }
        }
        Ok(Self::from_fn(m, |s, t| rows[s][t]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, source: usize, target: usize) -> f64 {
        self.0[(target, source)]
    }

    #[inline]
    pub fn set(&mut self, source: usize, target: usize, value: f64) {
        self.0[(target, source)] = value;
    }

    /// Raw matrix in the column convention (`(target, source)`).
    pub fn column_convention(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn source_rows(&self) -> Vec<Vec<f64>> {
        let m = self.dim();
        (0..m).map(|s| (0..m).map(|t| self.get(s, t)).collect()).collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|&x| x >= 0.0 && x.is_finite())
    }

    /// Zeroes every off-diagonal entry.
    pub fn diagonal_only(&self) -> Self {
        let m = self.dim();
        Self::from_fn(m, |s, t| if s == t { self.get(s, t) } else { 0.0 })
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let m = self.dim();
        (0..m).flat_map(move |s| (0..m).map(move |t| (s, t, self.get(s, t))))
    }
}

impl fmt::Debug for InfluenceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.source_rows()).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for InfluenceMatrix {
    type Error = ModelError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Self::from_source_rows(&rows)
    }
}

impl From<InfluenceMatrix> for Vec<Vec<f64>> {
    fn from(m: InfluenceMatrix) -> Self {
        m.source_rows()
    }
}

/// Parameters of the classic multivariate Hawkes process.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicParams {
    pub background: Background,
    pub k: InfluenceMatrix,
    pub g: KernelSpec,
}

/// Parameters of the Ancestor Hawkes process: immigrants reproduce through
/// `(k, g)`, triggered events through `(l, h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AncestorParams {
    pub background: Background,
    pub k: InfluenceMatrix,
    pub l: InfluenceMatrix,
    pub g: KernelSpec,
    pub h: KernelSpec,
    /// Triggered events only excite their own dimension.
    pub restricted: bool,
}

impl ClassicParams {
    pub fn new(background: Background, k: InfluenceMatrix, g: KernelSpec) -> Result<Self, ModelError> {
        let p = Self { background, k, g };
        p.validate()?;
        Ok(p)
    }

    pub fn num_dims(&self) -> usize {
        self.k.dim()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let m = self.background.num_dims();
        if self.k.dim() != m {
            return Err(ModelError::DimensionMismatch { expected: m, found: self.k.dim() });
        }
        if !self.k.is_nonnegative() {
            return Err(ModelError::InvalidParameter("K entries must be >= 0".into()));
        }
        KernelSpec::new(self.g.rate_diag, self.g.rate_off)?;
        Ok(())
    }

    /// The classic process is the Ancestor process with `L = K`, `h = g`.
    pub fn as_ancestor(&self) -> AncestorParams {
        AncestorParams {
            background: self.background.clone(),
            k: self.k.clone(),
            l: self.k.clone(),
            g: self.g,
            h: self.g,
            restricted: false,
        }
    }

    /// `μ_m(t) + Σ_{t_i < t} K g(t − t_i)`.
    pub fn intensity_at(&self, log: &EventLog, m: usize, t: f64) -> Result<f64, ModelError> {
        if !(0.0..=log.horizon()).contains(&t) {
            return Err(ModelError::TimeOutsideWindow { time: t, horizon: log.horizon() });
        }
        let mut total = self.background.rate(m, t);
        for e in log.events().iter().take_while(|e| e.time < t) {
            total += self.k.get(e.dim, m) * exp_density(self.g.rate(e.dim, m), t - e.time);
        }
        Ok(total)
    }
}

impl AncestorParams {
    pub fn new(
        background: Background,
        k: InfluenceMatrix,
        l: InfluenceMatrix,
        g: KernelSpec,
        h: KernelSpec,
        restricted: bool,
    ) -> Result<Self, ModelError> {
        let p = Self { background, k, l, g, h, restricted };
        p.validate()?;
        Ok(p)
    }

    pub fn num_dims(&self) -> usize {
        self.k.dim()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let m = self.background.num_dims();
        for mat in [&self.k, &self.l] {
            if mat.dim() != m {
                return Err(ModelError::DimensionMismatch { expected: m, found: mat.dim() });
            }
            if !mat.is_nonnegative() {
                return Err(ModelError::InvalidParameter("K and L entries must be >= 0".into()));
            }
        }
        KernelSpec::new(self.g.rate_diag, self.g.rate_off)?;
        KernelSpec::new(self.h.rate_diag, self.h.rate_off)?;
        if self.restricted && self.l.entries().any(|(s, t, v)| s != t && v != 0.0) {
            return Err(ModelError::InvalidParameter(
                "restricted variant requires zero off-diagonal L".into(),
            ));
        }
        Ok(())
    }

    /// Magnitude and kernel rate for a parent of the given type.
    #[inline]
    pub fn offspring_law(&self, immigrant_parent: bool, source: usize, target: usize) -> (f64, f64) {
        if immigrant_parent {
            (self.k.get(source, target), self.g.rate(source, target))
        } else {
            (self.l.get(source, target), self.h.rate(source, target))
        }
    }

    /// Intensity of dimension `m` at time `t` given the branching labels.
    /// Only events strictly before `t` contribute.
    pub fn intensity_at(
        &self,
        log: &EventLog,
        branching: &BranchingState,
        m: usize,
        t: f64,
    ) -> Result<f64, ModelError> {
        if !(0.0..=log.horizon()).contains(&t) {
            return Err(ModelError::TimeOutsideWindow { time: t, horizon: log.horizon() });
        }
        if branching.len() != log.len() {
            return Err(ModelError::ParentLength { expected: log.len(), found: branching.len() });
        }
        let mut total = self.background.rate(m, t);
        for (i, e) in log.events().iter().enumerate().take_while(|(_, e)| e.time < t) {
            let (mag, rate) = self.offspring_law(branching.is_immigrant(i), e.dim, m);
            total += mag * exp_density(rate, t - e.time);
        }
        Ok(total)
    }
}

/// Parameters of either model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Classic(ClassicParams),
    Ancestor(AncestorParams),
}

impl ModelParams {
    pub fn num_dims(&self) -> usize {
        match self {
            Self::Classic(p) => p.num_dims(),
            Self::Ancestor(p) => p.num_dims(),
        }
    }

    pub fn background(&self) -> &Background {
        match self {
            Self::Classic(p) => &p.background,
            Self::Ancestor(p) => &p.background,
        }
    }

    /// Ancestor form of the parameters (`L = K`, `h = g` for the classic model).
    pub fn to_ancestor(&self) -> AncestorParams {
        match self {
            Self::Classic(p) => p.as_ancestor(),
            Self::Ancestor(p) => p.clone(),
        }
    }

    /// The matrix whose spectral radius decides stability.
    pub fn reproduction_matrix(&self) -> &InfluenceMatrix {
        match self {
            Self::Classic(p) => &p.k,
            Self::Ancestor(p) => &p.l,
        }
    }
}

/// Intensity of dimension `m` at `t` under the Ancestor model.
pub fn intensity_at(
    params: &AncestorParams,
    log: &EventLog,
    branching: &BranchingState,
    m: usize,
    t: f64,
) -> Result<f64, ModelError> {
    params.intensity_at(log, branching, m, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log_of(times: &[(f64, usize)], horizon: f64, m: usize) -> EventLog {
        EventLog::new(times.iter().map(|&(t, d)| Event::new(t, d)).collect(), horizon, m).unwrap()
    }

    #[test]
    fn density_examples() {
        let k = KernelSpec::new(2.0, 0.5).unwrap();
        assert_eq!(kernel_density(&k, 0, 0, 0.0).unwrap(), 2.0);
        assert_eq!(kernel_density(&k, 0, 1, 0.0).unwrap(), 0.5);
        assert!((kernel_density(&k, 0, 0, 1.0).unwrap() - 0.270_670_566_473_225_4).abs() < 1e-15);
        assert!(matches!(kernel_density(&k, 0, 0, -1.0), Err(ModelError::NegativeLag(_))));
    }

    #[test]
    fn primitive_examples() {
        let k = KernelSpec::new(2.0, 2.0).unwrap();
        assert_eq!(kernel_primitive(&k, 0, 1, 0.0).unwrap(), 0.0);
        assert!((kernel_primitive(&k, 0, 0, 1e6).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(kernel_primitive(&k, 0, 0, f64::INFINITY).unwrap(), 1.0);
        assert!(kernel_primitive(&k, 0, 0, -0.1).is_err());
        // Composite Simpson over [0, 0.5] as the reference.
        let n = 2000;
        let h = 0.5 / n as f64;
        let f = |x: f64| k.density(0, 0, x).unwrap();
        let mut s = f(0.0) + f(0.5);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let quad = s * h / 3.0;
        let exact = kernel_primitive(&k, 0, 0, 0.5).unwrap();
        assert!((quad - exact).abs() < 1e-12);
        assert!((exact - 0.632_120_558_828_557_7).abs() < 1e-15);
    }

    #[test]
    fn primitive_derivative_is_density() {
        let k = KernelSpec::new(2.0, 0.5).unwrap();
        let eps = 1e-5;
        for i in 1..60 {
            let z = i as f64 * 0.1;
            for (s, t) in [(0, 0), (0, 1)] {
                let fd = (k.primitive(s, t, z + eps).unwrap() - k.primitive(s, t, z - eps).unwrap()) / (2.0 * eps);
                assert!((fd - k.density(s, t, z).unwrap()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn log_validation() {
        assert!(EventLog::new(vec![Event::new(1.0, 0), Event::new(1.0, 0)], 5.0, 1).is_err());
        assert!(EventLog::new(vec![Event::new(1.0, 2)], 5.0, 2).is_err());
        assert!(EventLog::new(vec![Event::new(6.0, 0)], 5.0, 1).is_err());
        assert!(EventLog::new(vec![], 0.0, 1).is_err());
        assert!(EventLog::empty(5.0, 3).unwrap().is_empty());
    }

    #[test]
    fn ties_are_jittered_in_input_order() {
        let (log, moved) = EventLog::from_unsorted(
            vec![Event::new(2.0, 1), Event::new(1.0, 0), Event::new(2.0, 0)],
            10.0,
            2,
        )
        .unwrap();
        assert_eq!(moved, 1);
        assert_eq!(log.dim(1), 1);
        assert_eq!(log.time(2), 2.0 + TIE_JITTER);
        assert_eq!(log.dim(2), 0);
    }

    #[test]
    fn intensity_examples() {
        let bg = Background::constant(vec![0.05, 0.05]).unwrap();
        let params = AncestorParams::new(
            bg,
            InfluenceMatrix::filled(2, 0.6),
            InfluenceMatrix::diag_off(2, 0.3, 0.05),
            KernelSpec::new(2.0, 0.5).unwrap(),
            KernelSpec::uniform(0.5).unwrap(),
            false,
        )
        .unwrap();
        let empty = EventLog::empty(10.0, 2).unwrap();
        let b0 = BranchingState::all_immigrant(&empty);
        assert_eq!(params.intensity_at(&empty, &b0, 1, 3.0).unwrap(), 0.05);

        let log = log_of(&[(1.0, 0)], 10.0, 2);
        let b = BranchingState::all_immigrant(&log);
        assert_eq!(params.intensity_at(&log, &b, 1, 1.0).unwrap(), 0.05);
        let v = params.intensity_at(&log, &b, 1, 2.0).unwrap();
        assert!((v - (0.05 + 0.6 * 0.5 * (-0.5f64).exp())).abs() < 1e-15);
        assert!((v - 0.231_959_197_913_79).abs() < 1e-12);
        assert!(params.intensity_at(&log, &b, 1, 11.0).is_err());
    }

    #[test]
    fn intensity_without_excitation_is_background() {
        let bg = Background::constant(vec![0.2, 0.1]).unwrap();
        let params = AncestorParams::new(
            bg,
            InfluenceMatrix::zeros(2),
            InfluenceMatrix::zeros(2),
            KernelSpec::uniform(1.0).unwrap(),
            KernelSpec::uniform(1.0).unwrap(),
            false,
        )
        .unwrap();
        let log = log_of(&[(1.0, 0), (2.0, 1), (2.5, 0)], 5.0, 2);
        let b = BranchingState::from_parents(&log, vec![0, 1, 2]).unwrap();
        for i in 0..50 {
            let t = i as f64 * 0.1;
            assert_eq!(params.intensity_at(&log, &b, 0, t).unwrap(), 0.2);
            assert_eq!(params.intensity_at(&log, &b, 1, t).unwrap(), 0.1);
        }
    }

    #[test]
    fn rebuild_examples() {
        let log = log_of(&[(1.0, 0), (2.0, 1), (3.0, 0)], 5.0, 2);
        let b = rebuild_child_sets(&log, vec![0, 0, 0]).unwrap();
        assert_eq!(b.immigrants_in(&log, 0).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(b.immigrants_in(&log, 1).collect::<Vec<_>>(), vec![1]);
        assert_eq!(b.triggered_parents().count(), 0);

        let log = log_of(&[(1.0, 0), (2.0, 0), (3.0, 0)], 5.0, 1);
        let b = rebuild_child_sets(&log, vec![0, 1, 2]).unwrap();
        assert_eq!(b.children_in(&log, 0, 0).collect::<Vec<_>>(), vec![1]);
        assert_eq!(b.children_in(&log, 1, 0).collect::<Vec<_>>(), vec![2]);
        assert_eq!(b.immigrant_parents().collect::<Vec<_>>(), vec![0]);
        assert_eq!(b.triggered_parents().collect::<Vec<_>>(), vec![1, 2]);

        assert!(matches!(
            rebuild_child_sets(&log, vec![0, 2, 0]),
            Err(ModelError::InvalidParent { index: 2, parent: 2 })
        ));
        assert!(rebuild_child_sets(&log, vec![0, 0]).is_err());
    }

    #[test]
    fn set_parent_matches_rebuild() {
        let log = log_of(&[(1.0, 0), (2.0, 1), (3.0, 0), (4.0, 1)], 5.0, 2);
        let mut b = BranchingState::all_immigrant(&log);
        b.set_parent(&log, 3, 2);
        b.set_parent(&log, 2, 1);
        b.set_parent(&log, 3, 1);
        b.set_parent(&log, 1, 1);
        assert_eq!(b, rebuild_child_sets(&log, vec![0, 1, 1, 1]).unwrap());
        b.check_consistency(&log).unwrap();
    }

    proptest! {
        #[test]
        fn round_trip_random_parents(seed in proptest::collection::vec(0u32..1000, 20)) {
            let events: Vec<Event> = (0..20).map(|i| Event::new(i as f64 + 0.5, i % 3)).collect();
            let log = EventLog::new(events, 25.0, 3).unwrap();
            let parents: Vec<u32> = seed.iter().enumerate().map(|(j, &s)| s % (j as u32 + 1)).collect();
            let b = rebuild_child_sets(&log, parents.clone()).unwrap();
            let back: Vec<u32> = (0..20).map(|j| b.parent(j).map_or(0, |p| p as u32 + 1)).collect();
            prop_assert_eq!(&back, &parents);
            // child sets are the inverse of B partitioned by dimension
            for p in 0..20 {
                for m in 0..3 {
                    for c in b.children_in(&log, p, m) {
                        prop_assert_eq!(b.parent(c), Some(p));
                        prop_assert_eq!(log.dim(c), m);
                    }
                }
            }
            prop_assert_eq!(b.immigrant_parents().count() + b.triggered_parents().count(), 20);
        }

        #[test]
        fn intensity_is_additive(split in 1usize..7) {
            let bg = Background::constant(vec![0.1, 0.3]).unwrap();
            let params = AncestorParams::new(
                bg.clone(),
                InfluenceMatrix::from_source_rows(&[vec![0.5, 0.2], vec![0.1, 0.4]]).unwrap(),
                InfluenceMatrix::from_source_rows(&[vec![0.3, 0.05], vec![0.07, 0.2]]).unwrap(),
                KernelSpec::new(1.5, 0.7).unwrap(),
                KernelSpec::new(0.4, 0.9).unwrap(),
                false,
            ).unwrap();
            let all = log_of(&[(0.5, 0), (1.0, 1), (1.7, 0), (2.2, 1), (3.1, 1), (3.5, 0), (4.0, 0)], 6.0, 2);
            let parents = vec![0, 1, 0, 3, 2, 5, 0];
            let b = rebuild_child_sets(&all, parents.clone()).unwrap();
            // Split the events into a prefix and a suffix, evaluated separately.
            let head = EventLog::new(all.events()[..split].to_vec(), 6.0, 2).unwrap();
            let bh = rebuild_child_sets(&head, parents[..split].to_vec()).unwrap();
            let t = 5.0;
            for m in 0..2 {
                let whole = params.intensity_at(&all, &b, m, t).unwrap();
                let mut tail = 0.0;
                for i in split..all.len() {
                    let (mag, rate) = params.offspring_law(b.is_immigrant(i), all.dim(i), m);
                    tail += mag * exp_density(rate, t - all.time(i));
                }
                let part = params.intensity_at(&head, &bh, m, t).unwrap() + tail;
                prop_assert!((whole - part).abs() < 1e-12);
            }
        }
    }
}
