//! Ancestor Hawkes processes: multivariate self-exciting point processes in
//! which immigrant and triggered events excite the future through separate
//! influence matrices (`K` and `L`) and kernels (`g` and `h`).
//!
//! The crate covers exact cluster simulation, conditional likelihoods and
//! stability analysis, latent-branching Gibbs samplers for both the Ancestor
//! and the classic model, posterior predictive diagnostics, and the calendar
//! machinery behind a seasonal background rate.

pub mod background;
pub mod calendar;
pub mod config;
pub mod diagnostics;
pub mod gibbs;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod scenarios;
pub mod simulate;

pub use background::{Background, PiecewiseBackground, SeasonalBackground};
pub use model::{
    AncestorParams, BranchingState, ClassicParams, Event, EventLog, InfluenceMatrix, KernelSpec, ModelError,
    ModelParams,
};
