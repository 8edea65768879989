//! File formats: raw message logs, event and truth CSVs, and chain files.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file reads back bit for bit.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use chrono::{DateTime, NaiveDateTime, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{resolve_local, CalendarError, CalendarGrid};
use crate::gibbs::{BackgroundDraw, BackgroundSpec, ChainDraws, Draw, McmcConfig, ModelKind, Priors};
use crate::likelihood::spectral_radius;
use crate::model::{BranchingState, Event, EventLog, InfluenceMatrix, KernelSpec, ModelError};

pub const RAW_HEADER: [&str; 2] = ["timestamp", "sender"];
pub const EVENTS_HEADER: [&str; 2] = ["time_hours", "dimension"];
pub const TRUTH_HEADER: [&str; 2] = ["event_index", "parent_index"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("expected header {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("no events inside the observation window ({dropped} rows outside it)")]
    EmptyLog { dropped: usize },
    #[error("chain file: {0}")]
    Chain(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Calendar(#[from] CalendarError),
}

fn parse_error(record: &csv::StringRecord, message: impl Into<String>) -> IoError {
    IoError::Parse { line: record.position().map_or(0, |p| p.line()), message: message.into() }
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), IoError> {
    let found: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if found != expected {
        return Err(IoError::Header { expected: expected.iter().map(|s| s.to_string()).collect(), found });
    }
    Ok(())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader)
}

/// Parses an ISO-8601 timestamp. Offsets are honoured; naive timestamps are
/// local wall-clock times in `tz`.
pub fn parse_timestamp(s: &str, tz: Tz) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|naive| resolve_local(naive, tz))
}

/// A raw log mapped onto dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedLog {
    pub log: EventLog,
    /// Sender label of each dimension, in order of first appearance.
    pub senders: Vec<String>,
    /// Rows outside the window.
    pub dropped: usize,
    /// Events moved forward to break exact ties.
    pub jittered: usize,
    pub calendar: Arc<CalendarGrid>,
}

/// Reads `timestamp,sender` rows and keeps those in `[start, end)` of the
/// calendar window, in hours since its start.
pub fn ingest_messages<R: Read>(reader: R, calendar: Arc<CalendarGrid>) -> Result<IngestedLog, IoError> {
    let mut reader = csv_reader(reader);
    check_header(&mut reader, &RAW_HEADER)?;
    let horizon = calendar.horizon();
    let mut senders: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut events = Vec::new();
    let mut dropped = 0;
    for record in reader.records() {
        let record = record?;
        let stamp = record.get(0).unwrap_or_default();
        let sender = record.get(1).unwrap_or_default();
        if sender.is_empty() {
            return Err(parse_error(&record, "empty sender label"));
        }
        let instant = parse_timestamp(stamp, calendar.tz())
            .ok_or_else(|| parse_error(&record, format!("unparseable timestamp {stamp:?}")))?;
        let t = calendar.hours_since_start(instant);
        if !(0.0..horizon).contains(&t) {
            dropped += 1;
            continue;
        }
        let next = senders.len();
        let dim = *index.entry(sender.to_string()).or_insert_with(|| {
            senders.push(sender.to_string());
            next
        });
        events.push(Event::new(t, dim));
    }
    if events.is_empty() {
        return Err(IoError::EmptyLog { dropped });
    }
    let (log, jittered) = EventLog::from_unsorted(events, horizon, senders.len())?;
    Ok(IngestedLog { log, senders, dropped, jittered, calendar })
}

/// Writes `time_hours,dimension` with 1-based dimensions.
pub fn write_events<W: Write>(log: &EventLog, writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVENTS_HEADER)?;
    for e in log.events() {
        w.write_record([e.time.to_string(), (e.dim + 1).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an events CSV. Without an explicit horizon the last event time is
/// used; without a dimension count the largest dimension seen.
pub fn read_events<R: Read>(reader: R, horizon: Option<f64>, num_dims: Option<usize>) -> Result<EventLog, IoError> {
    let mut reader = csv_reader(reader);
    check_header(&mut reader, &EVENTS_HEADER)?;
    let mut events = Vec::new();
    for record in reader.records() {
        let record = record?;
        let time: f64 = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_error(&record, "time_hours is not a number"))?;
        let dim: usize = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .filter(|&d: &usize| d >= 1)
            .ok_or_else(|| parse_error(&record, "dimension must be an integer >= 1"))?;
        events.push(Event::new(time, dim - 1));
    }
    let dims = num_dims.unwrap_or_else(|| events.iter().map(|e| e.dim + 1).max().unwrap_or(1));
    let horizon = horizon.unwrap_or_else(|| events.last().map_or(0.0, |e| e.time));
    Ok(EventLog::new(events, horizon, dims)?)
}

/// Writes `event_index,parent_index`, both 1-based, parent 0 for immigrants.
pub fn write_truth<W: Write>(branching: &BranchingState, writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRUTH_HEADER)?;
    for (i, p) in branching.parents().iter().enumerate() {
        w.write_record([(i + 1).to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(reader: R, log: &EventLog) -> Result<BranchingState, IoError> {
    let mut reader = csv_reader(reader);
    check_header(&mut reader, &TRUTH_HEADER)?;
    let mut parents = Vec::new();
    for record in reader.records() {
        let record = record?;
        let index: usize = record.get(0).and_then(|s| s.parse().ok()).unwrap_or(0);
        if index != parents.len() + 1 {
            return Err(parse_error(&record, format!("expected event_index {}", parents.len() + 1)));
        }
        let parent: u32 = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_error(&record, "parent_index is not an integer"))?;
        parents.push(parent);
    }
    Ok(BranchingState::from_parents(log, parents)?)
}

/// How the background of a chain was specified, in serializable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackgroundMeta {
    Constant,
    Piecewise { edges: Vec<f64> },
    Seasonal { start: DateTime<Utc>, end: DateTime<Utc>, tz: String },
}

impl BackgroundMeta {
    pub fn of(spec: &BackgroundSpec) -> Self {
        match spec {
            BackgroundSpec::Constant => Self::Constant,
            BackgroundSpec::Piecewise { edges } => Self::Piecewise { edges: edges.clone() },
            BackgroundSpec::Seasonal { calendar } => {
                Self::Seasonal { start: calendar.start(), end: calendar.end(), tz: calendar.tz().name().to_string() }
            }
        }
    }

    pub fn to_spec(&self) -> Result<BackgroundSpec, IoError> {
        Ok(match self {
            Self::Constant => BackgroundSpec::Constant,
            Self::Piecewise { edges } => BackgroundSpec::Piecewise { edges: edges.clone() },
            Self::Seasonal { start, end, tz } => BackgroundSpec::Seasonal {
                calendar: Arc::new(CalendarGrid::new(*start, *end, crate::calendar::parse_tz(tz)?)?),
            },
        })
    }
}

/// Sidecar of a chain CSV: everything needed to rebuild the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub schema_version: u32,
    pub model: ModelKind,
    pub background: BackgroundMeta,
    pub priors: Priors,
    pub mcmc: McmcConfig,
    pub num_dims: usize,
    pub horizon: f64,
    pub draws: usize,
    pub columns: Vec<String>,
    pub zero_exposure: Vec<(crate::gibbs::SeasonalFactor, usize)>,
}

pub const CHAIN_SCHEMA_VERSION: u32 = 1;

impl ChainMeta {
    pub fn of(chain: &ChainDraws) -> Self {
        Self {
            schema_version: CHAIN_SCHEMA_VERSION,
            model: chain.model,
            background: BackgroundMeta::of(&chain.background),
            priors: chain.priors,
            mcmc: chain.config,
            num_dims: chain.num_dims,
            horizon: chain.horizon,
            draws: chain.len(),
            columns: chain.draws.first().map(|d| d.columns().into_iter().map(|c| c.0).collect()).unwrap_or_default(),
            zero_exposure: chain.zero_exposure.clone(),
        }
    }
}

/// One row per retained draw: `iteration` then [`Draw::columns`].
pub fn write_chain<W: Write>(chain: &ChainDraws, writer: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    let Some(first) = chain.draws.first() else {
        w.write_record(["iteration"])?;
        w.flush()?;
        return Ok(());
    };
    let mut header = vec!["iteration".to_string()];
    header.extend(first.columns().into_iter().map(|c| c.0));
    w.write_record(&header)?;
    for d in &chain.draws {
        let mut row = vec![d.iteration.to_string()];
        row.extend(d.columns().into_iter().map(|c| c.1.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn take(values: &HashMap<&str, f64>, name: &str) -> Result<f64, IoError> {
    values.get(name).copied().ok_or_else(|| IoError::Chain(format!("missing column {name}")))
}

fn take_vec(values: &HashMap<&str, f64>, prefix: &str, n: usize) -> Result<Vec<f64>, IoError> {
    (1..=n).map(|i| take(values, &format!("{prefix}_{i}"))).collect()
}

fn take_matrix(values: &HashMap<&str, f64>, name: &str, m: usize) -> Result<InfluenceMatrix, IoError> {
    let mut mat = InfluenceMatrix::zeros(m);
    for s in 0..m {
        for t in 0..m {
            mat.set(s, t, take(values, &format!("{name}_{}_{}", s + 1, t + 1))?);
        }
    }
    Ok(mat)
}

fn draw_from_row(values: &HashMap<&str, f64>, meta: &ChainMeta, spec: &BackgroundSpec) -> Result<Draw, IoError> {
    let m = meta.num_dims;
    let background = match spec {
        BackgroundSpec::Constant => BackgroundDraw::Constant(take_vec(values, "mu", m)?),
        BackgroundSpec::Piecewise { edges } => BackgroundDraw::Piecewise(
            (1..=m).map(|i| take_vec(values, &format!("mu_{i}"), edges.len() - 1)).collect::<Result<_, _>>()?,
        ),
        BackgroundSpec::Seasonal { .. } => BackgroundDraw::Seasonal {
            alpha: take_vec(values, "alpha", m)?,
            theta_hour: take_vec(values, "theta_hour", crate::calendar::HOURS)?,
            theta_wday: take_vec(values, "theta_wday", crate::calendar::WEEKDAYS)?,
            theta_month: take_vec(values, "theta_month", crate::calendar::MONTHS)?,
        },
    };
    let k = take_matrix(values, "K", m)?;
    let g = KernelSpec::new(take(values, "beta_diag")?, take(values, "beta_off")?)?;
    let (l, h) = if meta.model.is_ancestor() {
        (
            Some(take_matrix(values, "L", m)?),
            Some(KernelSpec::new(take(values, "gamma_diag")?, take(values, "gamma_off")?)?),
        )
    } else {
        (None, None)
    };
    let counts: Vec<usize> = take_vec(values, "immigrants", m)?.into_iter().map(|c| c as usize).collect();
    Ok(Draw {
        iteration: take(values, "iteration")? as usize,
        background,
        rho_k: spectral_radius(k.column_convention()),
        rho_l: l.as_ref().map(|l| spectral_radius(l.column_convention())),
        k,
        l,
        g,
        h,
        immigrants: counts.iter().sum(),
        immigrant_counts: counts,
    })
}

/// Rebuilds the draws of a chain CSV written by [`write_chain`].
pub fn read_chain<R: Read>(reader: R, meta: &ChainMeta) -> Result<ChainDraws, IoError> {
    if meta.schema_version != CHAIN_SCHEMA_VERSION {
        return Err(IoError::Chain(format!("unsupported schema version {}", meta.schema_version)));
    }
    let spec = meta.background.to_spec()?;
    let mut reader = csv_reader(reader);
    let header = reader.headers()?.clone();
    let mut draws = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut values = HashMap::new();
        for (name, field) in header.iter().zip(record.iter()) {
            let v: f64 = field.parse().map_err(|_| parse_error(&record, format!("{name} is not a number")))?;
            values.insert(name, v);
        }
        draws.push(draw_from_row(&values, meta, &spec)?);
    }
    if draws.len() != meta.draws {
        return Err(IoError::Chain(format!("expected {} draws, found {}", meta.draws, draws.len())));
    }
    Ok(ChainDraws {
        model: meta.model,
        background: spec,
        priors: meta.priors,
        config: meta.mcmc,
        num_dims: meta.num_dims,
        horizon: meta.horizon,
        draws,
        zero_exposure: meta.zero_exposure.clone(),
        elapsed_secs: 0.0,
    })
}
