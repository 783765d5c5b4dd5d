//! The `netshift` command line: `estimate`, `simulate` and `benchmark`, each
//! driven by a JSON config with flag overrides.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{
    check_positivity, load_frame, summarize, FrameSchema, PositivityReport, SummarySpec,
};
use crate::error::{Error, Result};
use crate::estimate::{one_step, plugin, tmle, Estimate, InferenceContext, Method, TmleMode};
use crate::network::{Network, NetworkKind};
use crate::nuisance::{fit_nuisances, NuisanceConfig, Selection};
use crate::policy::Policy;
use crate::rng::SeedStream;
use crate::sim::{
    exact_truth, ground_truth, run_benchmark, simulate, BenchmarkConfig, DgpSpec, GroundTruth,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ESTIMATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "netshift",
    version,
    about = "Shift-policy effects under network interference"
)]
struct Cli {
    #[command(subcommand)]
    command: CommandKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CommandKindTag {
    Estimate,
    Simulate,
    Benchmark,
}

#[derive(Debug, clap::Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "netshift-out")]
    out: PathBuf,
    /// Cross-fitting folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Density-ratio clip bounds as `lo,hi`.
    #[arg(long, value_parser = parse_clip)]
    clip: Option<(f64, f64)>,
    /// Only log errors.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum CommandKind {
    /// Estimate the shift effect on observed data.
    Estimate(CommonArgs),
    /// Draw a dataset from a simulation DGP with its ground truth.
    Simulate(CommonArgs),
    /// Run a replicated estimator comparison.
    Benchmark(CommonArgs),
}

impl CommandKind {
    fn split(self) -> (CommandKindTag, CommonArgs) {
        match self {
            CommandKind::Estimate(a) => (CommandKindTag::Estimate, a),
            CommandKind::Simulate(a) => (CommandKindTag::Simulate, a),
            CommandKind::Benchmark(a) => (CommandKindTag::Benchmark, a),
        }
    }
}

fn parse_clip(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo > 0.0 && lo < hi) {
        return Err("need 0 < lo < hi".into());
    }
    Ok((lo, hi))
}

/// Estimation on a CSV plus edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub data: PathBuf,
    pub edges: PathBuf,
    #[serde(default)]
    pub directed: bool,
    #[serde(default)]
    pub schema: FrameSchema,
    pub policy: Policy,
    /// Optional grid of policy magnitudes; replaces the policy's own delta.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default = "SummarySpec::neighbor_sum")]
    pub summary: SummarySpec,
    #[serde(default)]
    pub nuisance: NuisanceConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub tmle_mode: TmleMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_degree_bin")]
    pub degree_bin: usize,
    /// Share of a degree stratum allowed to leave the observed summary range
    /// before the stratum is flagged.
    #[serde(default = "default_positivity_tolerance")]
    pub positivity_tolerance: f64,
}

/// One simulated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub network: NetworkKind,
    pub n: usize,
    #[serde(default)]
    pub dgp: DgpSpec,
    pub policy: Policy,
    #[serde(default = "default_truth_reps")]
    pub truth_reps: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Estimate(EstimateConfig),
    Simulate(SimulateConfig),
    Benchmark(BenchmarkConfig),
}

fn default_methods() -> Vec<Method> {
    vec![Method::OneStep, Method::Tmle]
}
fn default_alpha() -> f64 {
    0.05
}
fn default_degree_bin() -> usize {
    1
}
fn default_positivity_tolerance() -> f64 {
    0.05
}
fn default_truth_reps() -> usize {
    1000
}

impl RunConfig {
    fn name(&self) -> &'static str {
        match self {
            RunConfig::Estimate(_) => "estimate",
            RunConfig::Simulate(_) => "simulate",
            RunConfig::Benchmark(_) => "benchmark",
        }
    }

    /// Reads a config, filling in `command` from the subcommand when absent.
    pub fn load(path: &Path, command: &str) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: Value = serde_json::from_str(&text)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        match obj.get("command") {
            None => {
                obj.insert("command".into(), Value::String(command.into()));
            }
            Some(Value::String(c)) if c == command => {}
            Some(other) => {
                return Err(Error::Config(format!(
                    "config is for command {other} but `{command}` was requested"
                )))
            }
        }
        let mut cfg: RunConfig = serde_json::from_value(value)?;
        if let RunConfig::Estimate(e) = &mut cfg {
            let base = path.parent().unwrap_or(Path::new("."));
            e.data = absolute(base, &e.data);
            e.edges = absolute(base, &e.edges);
        }
        Ok(cfg)
    }

    fn apply_overrides(&mut self, args: &CommonArgs) {
        let nuisance = match self {
            RunConfig::Estimate(e) => {
                e.seed = args.seed.unwrap_or(e.seed);
                Some(&mut e.nuisance)
            }
            RunConfig::Simulate(s) => {
                s.seed = args.seed.unwrap_or(s.seed);
                None
            }
            RunConfig::Benchmark(b) => {
                b.seed = args.seed.unwrap_or(b.seed);
                Some(&mut b.nuisance)
            }
        };
        if let Some(nc) = nuisance {
            nc.folds = args.folds.unwrap_or(nc.folds);
            nc.clip = args.clip.unwrap_or(nc.clip);
        }
    }
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    let joined = if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    };
    std::path::absolute(&joined).unwrap_or(joined)
}

/// Exit code for an error: estimation failures are 1, bad input is 2.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFiniteEif { .. }
        | Error::FluctuationDiverged { .. }
        | Error::BoundUnavailable(_)
        | Error::EstimationFailed(_)
        | Error::AnalyticWeightUnavailable(_) => EXIT_ESTIMATION,
        _ => EXIT_INPUT,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::NodeOutOfRange { .. } | Error::InvalidNetwork(_) => "network",
        Error::InvalidParameter(_) => "parameter",
        Error::MissingColumn(_)
        | Error::InvalidCell { .. }
        | Error::LengthMismatch { .. }
        | Error::Csv(_) => "data",
        Error::InvalidPolicy(_) | Error::NonInvertiblePolicy { .. } => "policy",
        Error::AnalyticWeightUnavailable(_) => "weight",
        Error::InvalidFolds(_) | Error::InvalidLearner(_) | Error::EmptyLibrary => "nuisance",
        Error::NonFiniteEif { .. }
        | Error::FluctuationDiverged { .. }
        | Error::EstimationFailed(_)
        | Error::InvalidAlpha(_) => "estimation",
        Error::BoundUnavailable(_) => "bound",
        Error::Config(_) | Error::Json(_) => "config",
        Error::Io { .. } => "io",
    }
}

/// Machine-readable description of a failed run.
pub fn error_json(e: &Error) -> Value {
    let mut v = json!({
        "error": error_kind(e),
        "message": e.to_string(),
        "exit_code": exit_code(e),
    });
    if let Error::Io { path, .. } = e {
        v["path"] = json!(path);
    }
    v
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (tag, args) = cli.command.split();
    let level = if args.quiet {
        log::LevelFilter::Error
    } else {
        log::LevelFilter::Info
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    let command = match tag {
        CommandKindTag::Estimate => "estimate",
        CommandKindTag::Simulate => "simulate",
        CommandKindTag::Benchmark => "benchmark",
    };
    let result = RunConfig::load(&args.config, command).and_then(|mut cfg| {
        cfg.apply_overrides(&args);
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(t) = args.threads {
            pool = pool.num_threads(t);
        }
        let pool = pool
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| execute(&cfg, &args.out))
    });
    match result {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("serializable summary")
            );
            EXIT_OK
        }
        Err(e) => {
            log::error!("{e}");
            let body = error_json(&e);
            println!(
                "{}",
                serde_json::to_string_pretty(&body).expect("serializable error")
            );
            if fs::create_dir_all(&args.out).is_ok() {
                let _ = fs::write(args.out.join("error.json"), body.to_string());
            }
            exit_code(&e)
        }
    }
}

/// Runs a resolved config, writing everything into `out`. Returns a short
/// JSON summary for stdout.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<Value> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let stale = out.join("error.json");
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
    }
    write_json(&out.join("config.json"), cfg)?;
    log::info!("running {} into {}", cfg.name(), out.display());
    match cfg {
        RunConfig::Estimate(c) => cmd_estimate(c, out),
        RunConfig::Simulate(c) => cmd_simulate(c, out),
        RunConfig::Benchmark(c) => cmd_benchmark(c, out),
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Estimates and diagnostics for one policy magnitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaResult {
    pub policy: Policy,
    /// Per-interval level after the multiplicity correction.
    pub alpha: f64,
    pub estimates: Vec<Estimate>,
    pub positivity: PositivityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome_selection: Option<Selection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_selection: Option<Selection>,
    pub folds: usize,
}

/// The estimation pipeline on loaded inputs, for every policy in the grid.
pub fn estimate_all(
    cfg: &EstimateConfig,
    frame: &crate::data::Frame,
    net: &Network,
) -> Result<Vec<DeltaResult>> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidAlpha(cfg.alpha));
    }
    if cfg.methods.is_empty() {
        return Err(Error::Config("no estimation methods requested".into()));
    }
    if cfg.degree_bin == 0 {
        return Err(Error::Config("degree_bin must be at least 1".into()));
    }
    if frame.outcome().is_none() {
        return Err(Error::MissingColumn("outcome".into()));
    }
    let policies: Vec<Policy> = match &cfg.deltas {
        None => vec![cfg.policy.clone()],
        Some(d) if d.is_empty() => return Err(Error::Config("deltas grid is empty".into())),
        Some(d) => d
            .iter()
            .map(|&x| cfg.policy.with_delta(x))
            .collect::<Result<_>>()?,
    };
    let alpha = cfg.alpha / policies.len() as f64;
    let degrees = net.degrees();
    let dep = net.dependency();
    let mut ctx = InferenceContext::new(&dep, &degrees).with_alpha(alpha);
    ctx.degree_bin = cfg.degree_bin;
    let y = frame.outcome().expect("checked above");
    let stream = SeedStream::new(cfg.seed);
    policies
        .into_iter()
        .enumerate()
        .map(|(g, policy)| {
            let sf = summarize(frame, net, &cfg.summary, &policy)?;
            let positivity = check_positivity(&sf, cfg.positivity_tolerance);
            if positivity.any_flagged() {
                log::warn!("shifted summaries leave the observed support in some degree strata");
            }
            let fold_seed = stream.child("folds", &[g as u64]).root();
            let nf = fit_nuisances(&sf, &policy, &cfg.nuisance, fold_seed)?;
            let flags: Vec<usize> = positivity
                .strata
                .iter()
                .filter(|s| s.flagged)
                .map(|s| s.degree)
                .collect();
            let estimates = cfg
                .methods
                .iter()
                .map(|m| {
                    let mut est = match m {
                        Method::Plugin => {
                            let mut e = plugin(&nf);
                            e.alpha = alpha;
                            e.k_max = ctx.degrees.iter().copied().max().unwrap_or(0);
                            e
                        }
                        Method::OneStep => one_step(&nf, y, &ctx)?,
                        Method::Tmle => tmle(&nf, y, cfg.tmle_mode, &ctx)?,
                    };
                    est.diagnostics.positivity_flags = flags.clone();
                    Ok(est)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DeltaResult {
                policy,
                alpha,
                estimates,
                positivity,
                outcome_selection: nf.outcome_selection,
                ratio_selection: nf.ratio_selection,
                folds: nf.folds,
            })
        })
        .collect()
}

fn cmd_estimate(cfg: &EstimateConfig, out: &Path) -> Result<Value> {
    let frame = load_frame(&cfg.data, &cfg.schema)?;
    let net = Network::read_edge_list(&cfg.edges, Some(frame.n()), cfg.directed)?;
    if net.n() != frame.n() {
        return Err(Error::LengthMismatch {
            what: "network nodes".into(),
            expected: frame.n(),
            found: net.n(),
        });
    }
    let results = estimate_all(cfg, &frame, &net)?;
    let mut files = Vec::new();
    for (g, r) in results.iter().enumerate() {
        let name = if results.len() == 1 {
            "estimate.json".to_string()
        } else {
            format!("estimate_{g:03}.json")
        };
        write_json(&out.join(&name), r)?;
        files.push(name);
    }
    if results.len() > 1 {
        let path = out.join("curve.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["delta", "method", "psi", "ci_lower", "ci_upper", "alpha"])?;
        for r in &results {
            for e in &r.estimates {
                let (lo, hi) = e.ci.map_or((String::new(), String::new()), |(l, h)| {
                    (l.to_string(), h.to_string())
                });
                w.write_record([
                    r.policy.delta().to_string(),
                    e.method.label().to_string(),
                    e.psi.to_string(),
                    lo,
                    hi,
                    r.alpha.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        files.push("curve.csv".into());
    }
    let summary: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "delta": r.policy.delta(),
                "estimates": r.estimates.iter().map(|e| json!({
                    "method": e.method,
                    "psi": e.psi,
                    "ci": e.ci,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(json!({ "command": "estimate", "files": files, "results": summary }))
}

/// Ground-truth file written by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub policy: Policy,
    #[serde(flatten)]
    pub monte_carlo: GroundTruth,
    /// Closed-form value on the same network, when available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<f64>,
}

fn cmd_simulate(cfg: &SimulateConfig, out: &Path) -> Result<Value> {
    if cfg.n < 2 {
        return Err(Error::Config("n must be at least 2".into()));
    }
    let stream = SeedStream::new(cfg.seed);
    let net = cfg
        .network
        .build(cfg.n, stream.child("network", &[]).root())?;
    let frame = simulate(&cfg.dgp, &net, &mut stream.rng("data", &[]))?;
    let schema = FrameSchema {
        exposure: "A".into(),
        outcome: Some("Y".into()),
        covariates: cfg.dgp.covariate_names(),
    };
    frame.write_csv(out.join("data.csv"), &schema)?;
    net.write_edge_list(out.join("edges.csv"))?;
    let mc = ground_truth(
        &cfg.dgp,
        &cfg.policy,
        &net,
        cfg.truth_reps,
        stream.child("truth", &[]).root(),
    )?;
    let exact = exact_truth(&cfg.dgp, &cfg.policy, &net, None).ok();
    let truth = TruthFile {
        policy: cfg.policy.clone(),
        monte_carlo: mc,
        exact,
    };
    write_json(&out.join("truth.json"), &truth)?;
    Ok(json!({
        "command": "simulate",
        "files": ["data.csv", "edges.csv", "truth.json"],
        "psi": truth.monte_carlo.psi,
        "mc_se": truth.monte_carlo.mc_se,
        "exact": truth.exact,
    }))
}

fn cmd_benchmark(cfg: &BenchmarkConfig, out: &Path) -> Result<Value> {
    let result = run_benchmark(cfg)?;
    result.write(out)?;
    let failed = result.records.iter().filter(|r| r.error.is_some()).count();
    if failed == result.records.len() {
        return Err(Error::EstimationFailed(format!(
            "all {failed} benchmark estimates failed"
        )));
    }
    if failed > 0 {
        log::warn!(
            "{failed} of {} benchmark estimates failed",
            result.records.len()
        );
    }
    Ok(json!({
        "command": "benchmark",
        "files": ["records.jsonl", "aggregates.json", "table.csv"],
        "records": result.records.len(),
        "failed": failed,
        "purity_violations": result.purity.violations,
    }))
}
