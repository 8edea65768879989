use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ancestor_hawkes::config::{BackgroundKind, ConfigError, RunConfig, CONFIG_ENV};
use ancestor_hawkes::diagnostics::{
    compute_summary_stats, cumulative_envelope, posterior_predictive, recovery_study, trace_report,
    DiagnosticsError, PpcOptions, StatScope, Statistic, ENVELOPE_LEVELS,
};
use ancestor_hawkes::gibbs::{run_chain, FitSpec, GibbsError, ModelKind};
use ancestor_hawkes::io::{self, ChainMeta, IoError};
use ancestor_hawkes::model::{EventLog, ModelError};
use ancestor_hawkes::scenarios::Preset;
use ancestor_hawkes::simulate::{simulate, SimulationError, SimulationRequest, StopRule};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Parser)]
#[command(name = "ahawkes", version, about = "Ancestor Hawkes processes: simulate, fit and check")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run config.
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct ChainFlags {
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    background: Option<BackgroundKind>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a built-in scenario; writes events.csv, truth.csv and events.meta.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "scenario1")]
        scenario: Preset,
        /// Number of events (event-count scenarios).
        #[arg(long, conflicts_with = "horizon")]
        events: Option<usize>,
        /// Observe on [0, H] hours instead of stopping at an event count.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Run the Gibbs sampler; writes chain.csv, chain.json and posterior.json.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chain: ChainFlags,
        /// events CSV (time_hours,dimension) or raw log (timestamp,sender).
        #[arg(long)]
        data: PathBuf,
        /// Window length of an events CSV without a sidecar.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Posterior predictive checks; writes ppc.json, ppc_draws.csv and envelope.csv.
    Ppc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        horizon: Option<f64>,
        /// chain.csv written by `fit` (chain.json alongside).
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        /// Statistics of one dimension (1-based) instead of the pooled stream.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 50)]
        grid_points: usize,
    },
    /// Summary statistics of a log; writes summary.json.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Simulate-and-refit recovery study; writes recovery.json and recovery_scatter.csv.
    Recover {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chain: ChainFlags,
        #[arg(long, default_value = "scenario1")]
        preset: Preset,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        #[arg(long)]
        events: Option<usize>,
    },
    /// Trace series and drift statistics; writes traces.csv and drift.json.
    Traces {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chain: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::File { .. } => "file",
            Self::Config(_) => "config",
            Self::Io(_) => "data",
            Self::Model(_) => "model",
            Self::Simulation(_) => "simulation",
            Self::Gibbs(_) => "sampler",
            Self::Diagnostics(_) => "diagnostics",
            Self::Json(_) => "json",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::File { path: path.display().to_string(), source }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).map_err(file_error(dir))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).map_err(file_error(&path))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(file_error(&dir.join(name)))?;
    w.flush().map_err(file_error(&dir.join(name)))
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut s)).map_err(file_error(path))?;
    Ok(s)
}

fn resolve_config(common: &Common, chain: Option<&ChainFlags>) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.mcmc.seed = config.seed;
    if let Some(c) = chain {
        if let Some(m) = c.model {
            config.model = m;
        }
        if let Some(b) = c.background {
            config.background = b;
        }
        if let Some(n) = c.iters {
            config.mcmc.iterations = n;
        }
        if let Some(n) = c.burnin {
            config.mcmc.burn_in = n;
        }
        if let Some(n) = c.thin {
            config.mcmc.thin = n;
        }
    }
    config.validate()?;
    Ok(config)
}

/// Sidecar of an events CSV: the window length and dimension count.
#[derive(Debug, Serialize, Deserialize)]
struct EventsMeta {
    horizon: f64,
    num_dims: usize,
    #[serde(default)]
    senders: Vec<String>,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

struct LoadedData {
    log: EventLog,
    senders: Vec<String>,
    dropped: usize,
}

fn load_data(path: &Path, horizon: Option<f64>, config: &RunConfig) -> Result<LoadedData> {
    let file = File::open(path).map_err(file_error(path))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    std::io::BufRead::read_line(&mut reader, &mut first).map_err(file_error(path))?;
    let rest = first.as_bytes().chain(reader);
    if first.trim_start().starts_with("timestamp") {
        let got = io::ingest_messages(rest, config.calendar()?)?;
        return Ok(LoadedData { log: got.log, senders: got.senders, dropped: got.dropped });
    }
    let meta_path = sidecar(path, "meta.json");
    let meta: Option<EventsMeta> =
        if meta_path.exists() { Some(serde_json::from_str(&read_to_string(&meta_path)?)?) } else { None };
    let log = io::read_events(
        rest,
        horizon.or(meta.as_ref().map(|m| m.horizon)),
        meta.as_ref().map(|m| m.num_dims),
    )?;
    Ok(LoadedData { log, senders: meta.map(|m| m.senders).unwrap_or_default(), dropped: 0 })
}

fn load_chain(path: &Path) -> Result<ancestor_hawkes::gibbs::ChainDraws> {
    let meta_path = path.with_extension("json");
    let meta: ChainMeta = serde_json::from_str(&read_to_string(&meta_path)?)?;
    let file = File::open(path).map_err(file_error(path))?;
    Ok(io::read_chain(BufReader::new(file), &meta)?)
}

fn simulate_cmd(common: &Common, scenario: Preset, events: Option<usize>, horizon: Option<f64>) -> Result<serde_json::Value> {
    let config = resolve_config(common, None)?;
    let mut spec = scenario.spec()?;
    if let Some(n) = events {
        if !matches!(spec.stop, StopRule::EventCount(_)) {
            return Err(CliError::Usage(format!("{scenario} is observed on a fixed window; use --horizon")));
        }
        spec.stop = StopRule::EventCount(n);
    }
    if let Some(h) = horizon {
        spec.stop = StopRule::Horizon(h);
    }
    let data = simulate(&SimulationRequest::new(spec.model_params(), spec.stop, config.seed))?;
    let dir = &common.out_dir;
    let mut w = create(dir, "events.csv")?;
    io::write_events(&data.log, &mut w)?;
    let mut w = create(dir, "truth.csv")?;
    io::write_truth(&data.truth, &mut w)?;
    let meta = EventsMeta { horizon: data.horizon(), num_dims: data.log.num_dims(), senders: Vec::new() };
    write_json(dir, "events.meta.json", &meta)?;
    Ok(json!({
        "scenario": scenario.as_str(),
        "events": data.log.len(),
        "horizon": data.horizon(),
        "immigrants": data.truth.num_immigrants(),
        "files": ["events.csv", "truth.csv", "events.meta.json"],
    }))
}

fn fit_cmd(common: &Common, flags: &ChainFlags, data: &Path, horizon: Option<f64>) -> Result<(RunConfig, serde_json::Value)> {
    let config = resolve_config(common, Some(flags))?;
    let loaded = load_data(data, horizon, &config)?;
    let mut spec = FitSpec::new(config.model, config.background_spec(loaded.log.horizon())?, config.mcmc);
    spec.priors = config.priors;
    let chain = run_chain(&loaded.log, &spec)?;
    let dir = &common.out_dir;
    let mut w = create(dir, "chain.csv")?;
    io::write_chain(&chain, &mut w)?;
    write_json(dir, "chain.json", &ChainMeta::of(&chain))?;
    let (g, h) = chain.posterior_mean_rates();
    let posterior = json!({
        "model": config.model,
        "events": loaded.log.len(),
        "horizon": loaded.log.horizon(),
        "senders": loaded.senders,
        "dropped_rows": loaded.dropped,
        "draws": chain.len(),
        "background_mean": chain.posterior_mean_background(),
        "K": chain.posterior_mean_k(),
        "L": chain.posterior_mean_l(),
        "beta": g,
        "gamma": h,
        "max_rho": chain.draws.iter().map(|d| d.stability_radius()).fold(0.0, f64::max),
        "zero_exposure_bins": chain.zero_exposure,
    });
    write_json(dir, "posterior.json", &posterior)?;
    let summary = json!({
        "events": loaded.log.len(),
        "draws": chain.len(),
        "files": ["chain.csv", "chain.json", "posterior.json"],
    });
    Ok((config, summary))
}

fn scope(dim: Option<usize>) -> Result<StatScope> {
    match dim {
        None => Ok(StatScope::Pooled),
        Some(0) => Err(CliError::Usage("--dim is 1-based".into())),
        Some(d) => Ok(StatScope::Dimension(d - 1)),
    }
}

#[allow(clippy::too_many_arguments)]
fn ppc_cmd(
    common: &Common,
    data: &Path,
    horizon: Option<f64>,
    chain_path: &Path,
    replicates: usize,
    dim: Option<usize>,
    grid_points: usize,
) -> Result<serde_json::Value> {
    let config = resolve_config(common, None)?;
    let chain = load_chain(chain_path)?;
    let loaded = load_data(data, horizon.or(Some(chain.horizon)), &config)?;
    let mut options = PpcOptions::new(replicates, config.seed);
    options.scope = scope(dim)?;
    let report = posterior_predictive(&chain, &loaded.log, &Statistic::ALL, &options)?;
    let dir = &common.out_dir;
    write_json(dir, "ppc.json", &report)?;
    let mut w = csv::Writer::from_writer(create(dir, "ppc_draws.csv")?);
    w.write_record(["statistic", "replicate", "value"]).map_err(IoError::from)?;
    for r in &report.results {
        for (i, v) in r.draws.iter().enumerate() {
            w.write_record([r.statistic.name().to_string(), (i + 1).to_string(), v.to_string()]).map_err(IoError::from)?;
        }
    }
    w.flush().map_err(file_error(&dir.join("ppc_draws.csv")))?;
    let horizon = loaded.log.horizon();
    let points = grid_points.max(1);
    let grid: Vec<f64> = (1..=points).map(|i| horizon * i as f64 / points as f64).collect();
    let envelope = cumulative_envelope(&chain, &loaded.log, &grid, replicates, config.seed)?;
    let mut w = csv::Writer::from_writer(create(dir, "envelope.csv")?);
    let mut header = vec!["time_hours".to_string()];
    header.extend(ENVELOPE_LEVELS.iter().map(|p| format!("q{}", p * 100.0)));
    header.push("observed".into());
    w.write_record(&header).map_err(IoError::from)?;
    for ((t, q), o) in envelope.grid.iter().zip(&envelope.quantiles).zip(&envelope.observed) {
        let mut row = vec![t.to_string()];
        row.extend(q.iter().map(|v| v.to_string()));
        row.push(o.to_string());
        w.write_record(&row).map_err(IoError::from)?;
    }
    w.flush().map_err(file_error(&dir.join("envelope.csv")))?;
    Ok(json!({
        "replicates": replicates,
        "p_values": report.results.iter().map(|r| json!({"statistic": r.statistic.name(), "p_value": r.p_value})).collect::<Vec<_>>(),
        "unstable_replaced": report.unstable_replaced,
        "files": ["ppc.json", "ppc_draws.csv", "envelope.csv"],
    }))
}

fn summarize_cmd(common: &Common, data: &Path, horizon: Option<f64>) -> Result<serde_json::Value> {
    let config = resolve_config(common, None)?;
    let loaded = load_data(data, horizon, &config)?;
    let log = &loaded.log;
    let stats_or_error = |scope| match compute_summary_stats(log, scope) {
        Ok(s) => serde_json::to_value(s).expect("stats serialize"),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let per_dim: Vec<_> = (0..log.num_dims()).map(|d| stats_or_error(StatScope::Dimension(d))).collect();
    let summary = json!({
        "events": log.len(),
        "horizon": log.horizon(),
        "counts_by_dimension": log.counts_by_dim(),
        "pooled": stats_or_error(StatScope::Pooled),
        "per_dimension": per_dim,
    });
    write_json(&common.out_dir, "summary.json", &summary)?;
    Ok(json!({ "events": log.len(), "files": ["summary.json"] }))
}

fn recover_cmd(
    common: &Common,
    flags: &ChainFlags,
    preset: Preset,
    replicates: usize,
    events: Option<usize>,
) -> Result<(RunConfig, serde_json::Value)> {
    let config = resolve_config(common, Some(flags))?;
    let scenario = preset.spec()?;
    let mut options = ancestor_hawkes::diagnostics::RecoveryOptions::new(replicates, config.mcmc, config.seed);
    options.events = events;
    options.priors = config.priors;
    options.fit_model = config.model;
    let report = recovery_study(&scenario, &options, |_| {})?;
    let dir = &common.out_dir;
    write_json(dir, "recovery.json", &report)?;
    let mut w = csv::Writer::from_writer(create(dir, "recovery_scatter.csv")?);
    w.write_record(["matrix", "source", "target", "generating", "mean_recovered", "sd"]).map_err(IoError::from)?;
    let mut rows = vec![("K", &report.generating_k, &report.mean_k, &report.sd_k)];
    if let (Some(mean), Some(sd)) = (&report.mean_l, &report.sd_l) {
        rows.push(("L", &report.generating_l, mean, sd));
    }
    for (name, truth, mean, sd) in rows {
        for (s, t, v) in truth.entries() {
            w.write_record([
                name.to_string(),
                (s + 1).to_string(),
                (t + 1).to_string(),
                v.to_string(),
                mean.get(s, t).to_string(),
                sd.get(s, t).to_string(),
            ])
            .map_err(IoError::from)?;
        }
    }
    w.flush().map_err(file_error(&dir.join("recovery_scatter.csv")))?;
    let summary = json!({
        "preset": preset.as_str(),
        "replicates": replicates,
        "failed": report.failed.len(),
        "corr_k": report.corr_k,
        "corr_l": report.corr_l,
        "rmse_k": report.rmse_k,
        "rmse_l": report.rmse_l,
        "files": ["recovery.json", "recovery_scatter.csv"],
    });
    Ok((config, summary))
}

fn traces_cmd(common: &Common, chain_path: &Path) -> Result<serde_json::Value> {
    resolve_config(common, None)?;
    let chain = load_chain(chain_path)?;
    let report = trace_report(&chain)?;
    let dir = &common.out_dir;
    let mut w = csv::Writer::from_writer(create(dir, "traces.csv")?);
    let mut header = vec!["iteration".to_string()];
    header.extend(report.series.iter().map(|s| s.name.clone()));
    w.write_record(&header).map_err(IoError::from)?;
    for (i, it) in report.iterations.iter().enumerate() {
        let mut row = vec![it.to_string()];
        row.extend(report.series.iter().map(|s| s.values[i].to_string()));
        w.write_record(&row).map_err(IoError::from)?;
    }
    w.flush().map_err(file_error(&dir.join("traces.csv")))?;
    let drift: Vec<_> = report.series.iter().map(|s| json!({ "name": s.name, "drift": s.drift })).collect();
    write_json(dir, "drift.json", &json!({ "stable": report.stable, "series": drift }))?;
    Ok(json!({ "stable": report.stable, "series": report.series.len(), "files": ["traces.csv", "drift.json"] }))
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let (name, common, config, summary) = match &cli.command {
        Command::Simulate { common, scenario, events, horizon } => {
            let config = resolve_config(common, None)?;
            ("simulate", common, config, simulate_cmd(common, *scenario, *events, *horizon)?)
        }
        Command::Fit { common, chain, data, horizon } => {
            let (config, s) = fit_cmd(common, chain, data, *horizon)?;
            ("fit", common, config, s)
        }
        Command::Ppc { common, data, horizon, chain, replicates, dim, grid_points } => {
            let config = resolve_config(common, None)?;
            ("ppc", common, config, ppc_cmd(common, data, *horizon, chain, *replicates, *dim, *grid_points)?)
        }
        Command::Summarize { common, data, horizon } => {
            let config = resolve_config(common, None)?;
            ("summarize", common, config, summarize_cmd(common, data, *horizon)?)
        }
        Command::Recover { common, chain, preset, replicates, events } => {
            let (config, s) = recover_cmd(common, chain, *preset, *replicates, *events)?;
            ("recover", common, config, s)
        }
        Command::Traces { common, chain } => {
            let config = resolve_config(common, None)?;
            ("traces", common, config, traces_cmd(common, chain)?)
        }
    };
    write_json(&common.out_dir, "run.json", &json!({ "command": name, "config": config }))?;
    Ok(json!({
        "command": name,
        "seed": config.seed,
        "config_hash": config.hash(),
        "out_dir": common.out_dir.display().to_string(),
        "result": summary,
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
