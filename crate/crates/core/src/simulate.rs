//! Exact simulation through the cluster representation.
//!
//! Immigrants arrive per dimension from the background; every event then
//! spawns Poisson numbers of direct children per target dimension. Ground
//! truth parents are recorded along the way.
//!
//! Random streams: all generators are `ChaCha8` seeded from the request seed.
//! Immigrants of dimension `m` use stream `m`; the cascade rooted at the
//! `k`-th immigrant of dimension `m` uses stream `2^63 | m·2^40 | k`. A
//! cascade's content therefore depends only on its root, never on how many
//! other cascades exist or in which order they are expanded.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use thiserror::Error;

use crate::background::Background;
use crate::likelihood::spectral_radius;
use crate::model::{
    exp_primitive, AncestorParams, BranchingState, Event, EventLog, ModelError, ModelParams, TIE_JITTER,
};

/// Default cap on generated events; hitting it aborts the simulation.
pub const DEFAULT_MAX_EVENTS: usize = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("explosive parameters: spectral radius {0} >= 1 with a fixed event-count stop rule")]
    Unstable(f64),
    #[error("thinning bound for dimension {dim} is not finite ({bound})")]
    ThinningBound { dim: usize, bound: f64 },
    #[error("event-count stop rule needs a constant background with positive total rate")]
    UnsupportedStopRule,
    #[error("simulation exceeded {0} events")]
    TooManyEvents(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Observe the process on `[0, T]`.
    Horizon(f64),
    /// Keep the first `N` events; the horizon becomes the `N`-th event time.
    EventCount(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRequest {
    pub params: ModelParams,
    pub stop: StopRule,
    pub seed: u64,
    pub max_events: usize,
}

impl SimulationRequest {
    pub fn new(params: ModelParams, stop: StopRule, seed: u64) -> Self {
        Self { params, stop, seed, max_events: DEFAULT_MAX_EVENTS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub log: EventLog,
    pub truth: BranchingState,
}

impl SimulatedData {
    pub fn horizon(&self) -> f64 {
        self.log.horizon()
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn cascade_stream(dim: usize, ordinal: usize) -> u64 {
    (1u64 << 63) | ((dim as u64) << 40) | ordinal as u64
}

/// Arrival generator for one dimension of the background. The next
/// candidate is drawn ahead of time, so extending the window consumes the
/// random stream exactly as a single long window would.
struct ImmigrantStream {
    dim: usize,
    bound: f64,
    next: Option<f64>,
}

impl ImmigrantStream {
    fn new(background: &Background, dim: usize) -> Result<Self, SimulationError> {
        let bound = background.max_rate(dim);
        if !bound.is_finite() || bound < 0.0 {
            return Err(SimulationError::ThinningBound { dim, bound });
        }
        Ok(Self { dim, bound, next: None })
    }

    /// Arrivals up to `until`, appended to `out`. Candidates come from a
    /// homogeneous process at the bound and are kept with probability
    /// `μ(t) / bound` (always kept for a constant background).
    fn advance<R: Rng>(&mut self, background: &Background, until: f64, rng: &mut R, out: &mut Vec<f64>) {
        if self.bound <= 0.0 {
            return;
        }
        let gap = Exp::new(self.bound).expect("positive rate");
        let constant = matches!(background, Background::Constant(_));
        let mut candidate = match self.next {
            Some(t) => t,
            None => gap.sample(rng),
        };
        while candidate <= until {
            if constant || rng.random::<f64>() * self.bound < background.rate(self.dim, candidate) {
                out.push(candidate);
            }
            candidate += gap.sample(rng);
        }
        self.next = Some(candidate);
    }
}

/// Background arrivals on `[0, horizon]` as `(time, dim)` pairs, grouped by
/// dimension.
pub fn simulate_immigrants<R: Rng>(
    background: &Background,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<Event>, SimulationError> {
    let mut out = Vec::new();
    for m in 0..background.num_dims() {
        let mut stream = ImmigrantStream::new(background, m)?;
        let mut times = Vec::new();
        stream.advance(background, horizon, rng, &mut times);
        out.extend(times.into_iter().map(|t| Event::new(t, m)));
    }
    Ok(out)
}

/// Direct children of one parent on `(t_parent, horizon]`.
///
/// Per target `m` the count is `Poisson(η G(horizon − t_parent))` with `η`
/// the `K` (immigrant parent) or `L` (triggered parent) entry; lags come from
/// the kernel conditioned to the remaining window by inverse CDF. An infinite
/// horizon gives untruncated offspring.
pub fn simulate_offspring<R: Rng>(
    parent: Event,
    is_immigrant: bool,
    params: &AncestorParams,
    horizon: f64,
    rng: &mut R,
) -> Vec<Event> {
    let mut out = Vec::new();
    let remaining = horizon - parent.time;
    if remaining <= 0.0 {
        return out;
    }
    for m in 0..params.num_dims() {
        let (mag, rate) = params.offspring_law(is_immigrant, parent.dim, m);
        if mag <= 0.0 {
            continue;
        }
        let mass = exp_primitive(rate, remaining);
        let mean = mag * mass;
        if mean <= 0.0 {
            continue;
        }
        let count = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
        for _ in 0..count {
            let u: f64 = rng.random();
            let lag = -(-u * mass).ln_1p() / rate;
            out.push(Event::new(parent.time + lag, m));
        }
    }
    out
}

struct Node {
    time: f64,
    dim: usize,
    parent: Option<usize>,
}

/// Expands the full cascade of one immigrant breadth-first.
fn expand_cascade(
    root: Event,
    params: &AncestorParams,
    horizon: f64,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
    max_events: usize,
) -> Result<(), SimulationError> {
    let root_idx = nodes.len();
    nodes.push(Node { time: root.time, dim: root.dim, parent: None });
    let mut queue = VecDeque::from([root_idx]);
    while let Some(idx) = queue.pop_front() {
        let parent = Event::new(nodes[idx].time, nodes[idx].dim);
        let immigrant = nodes[idx].parent.is_none();
        for child in simulate_offspring(parent, immigrant, params, horizon, rng) {
            if nodes.len() >= max_events {
                return Err(SimulationError::TooManyEvents(max_events));
            }
            queue.push_back(nodes.len());
            nodes.push(Node { time: child.time, dim: child.dim, parent: Some(idx) });
        }
    }
    Ok(())
}

/// Sorts generated nodes by time, keeps those with `time <= horizon` (at most
/// `keep` of them) and relabels parents.
fn assemble(
    nodes: &[Node],
    horizon: f64,
    keep: Option<usize>,
    num_dims: usize,
) -> Result<SimulatedData, SimulationError> {
    let mut order: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].time <= horizon).collect();
    order.sort_by(|&a, &b| nodes[a].time.total_cmp(&nodes[b].time));
    if let Some(n) = keep {
        order.truncate(n);
    }
    let mut new_index = vec![u32::MAX; nodes.len()];
    for (pos, &i) in order.iter().enumerate() {
        new_index[i] = pos as u32;
    }
    let mut events = Vec::with_capacity(order.len());
    let mut parents = Vec::with_capacity(order.len());
    let mut last = f64::NEG_INFINITY;
    for &i in &order {
        let mut t = nodes[i].time;
        if t <= last {
            t = last + TIE_JITTER;
        }
        last = t;
        events.push(Event::new(t, nodes[i].dim));
        parents.push(match nodes[i].parent {
            None => 0,
            Some(p) => new_index[p] + 1,
        });
    }
    let horizon = match keep {
        Some(_) => events.last().map_or(horizon, |e| e.time),
        None => horizon.max(last),
    };
    let log = EventLog::new(events, horizon, num_dims)?;
    let truth = BranchingState::from_parents(&log, parents)?;
    Ok(SimulatedData { log, truth })
}

/// Simulates the Ancestor process (or the classic one through `L = K`,
/// `h = g`).
///
/// With a horizon stop rule the cascades are truncated at the horizon. With
/// an event-count rule the cascades are expanded without truncation on a
/// window that doubles until it holds `N` events, and the first `N` are kept.
pub fn simulate(request: &SimulationRequest) -> Result<SimulatedData, SimulationError> {
    let params = request.params.to_ancestor();
    params.validate()?;
    let m = params.num_dims();
    let background = &params.background;
    let seed = request.seed;
    let mut streams = (0..m).map(|d| ImmigrantStream::new(background, d)).collect::<Result<Vec<_>, _>>()?;
    let mut immigrant_rngs: Vec<ChaCha8Rng> = (0..m).map(|d| stream_rng(seed, d as u64)).collect();
    let mut ordinals = vec![0usize; m];
    let mut nodes = Vec::new();

    match request.stop {
        StopRule::Horizon(horizon) => {
            if !(horizon > 0.0 && horizon.is_finite()) {
                return Err(ModelError::InvalidHorizon(horizon).into());
            }
            for d in 0..m {
                let mut times = Vec::new();
                streams[d].advance(background, horizon, &mut immigrant_rngs[d], &mut times);
                for t in times {
                    let mut rng = stream_rng(seed, cascade_stream(d, ordinals[d]));
                    ordinals[d] += 1;
                    expand_cascade(Event::new(t, d), &params, horizon, &mut rng, &mut nodes, request.max_events)?;
                }
            }
            assemble(&nodes, horizon, None, m)
        }
        StopRule::EventCount(target) => {
            let rho = spectral_radius(request.params.reproduction_matrix().column_convention());
            if rho >= 1.0 {
                return Err(SimulationError::Unstable(rho));
            }
            let mu = background.as_constant().ok_or(SimulationError::UnsupportedStopRule)?;
            let total_mu: f64 = mu.iter().sum();
            if total_mu <= 0.0 {
                return Err(SimulationError::UnsupportedStopRule);
            }
            if target == 0 {
                return Err(ModelError::InvalidParameter("event count must be positive".into()).into());
            }
            let mean_rate = crate::likelihood::stability_report(&params)
                .stationary_total_rate
                .map(|r| r.iter().sum::<f64>())
                .filter(|r: &f64| *r > 0.0 && r.is_finite())
                .unwrap_or(total_mu);
            let mut window = (1.1 * target as f64 / mean_rate).max(1.0);
            loop {
                for d in 0..m {
                    let mut times = Vec::new();
                    streams[d].advance(background, window, &mut immigrant_rngs[d], &mut times);
                    for t in times {
                        let mut rng = stream_rng(seed, cascade_stream(d, ordinals[d]));
                        ordinals[d] += 1;
                        expand_cascade(
                            Event::new(t, d),
                            &params,
                            f64::INFINITY,
                            &mut rng,
                            &mut nodes,
                            request.max_events,
                        )?;
                    }
                }
                let observed = nodes.iter().filter(|n| n.time <= window).count();
                if observed >= target {
                    return assemble(&nodes, window, Some(target), m);
                }
                window *= 2.0;
            }
        }
    }
}
