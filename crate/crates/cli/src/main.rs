//! `binmetric`: estimate, compare and plan binary-metric evaluations.
//!
//! stdout carries only the JSON payload. The resolved request is echoed to
//! stderr as `config: {...}`; saving it and passing it back with `--request`
//! reproduces the same output byte for byte.
//!
//! Exit codes: 0 ok, 2 usage, 3 data, 4 numeric failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use binmetric::binarize::{roc_csv, Pooling};
use binmetric::ingest::{load_count_summary, load_ratings, scored_samples, summarize, Format, HUMAN_SOURCE};
use binmetric::planner::{FreeVariable, MinSamples, PlanTable};
use binmetric::workflow::{
    run_binarize, run_compare, run_estimate, run_plan, run_plan_table, BinarizeRequest, CompareRequest, EstimateMode,
    EstimateReport, EstimateRequest, PlanRequest, PlanTableRequest, DEFAULT_GAMMA,
};
use binmetric::{CountSummary, GridConfig, PlanParams};
use binmetric_service::ServiceConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

const TABLE_PHI: &str = "0,100,250,500,1000,2500,5000,10000";
const TABLE_M: &str = "0,1000,2500,5000,10000,50000,100000";

#[derive(Parser)]
#[command(name = "binmetric", version, about = "Bayesian estimates of a system's success rate from human and metric binary ratings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Posterior of one system's success rate.
    Estimate(EstimateArgs),
    /// Probability that system A beats system B, and whether that is significant.
    Compare(CompareArgs),
    /// Distinguishable difference for a planned campaign, or the sample count reaching a target.
    Plan(PlanArgs),
    /// Distinguishable difference over a grid of human and metric sample sizes.
    Table(TableArgs),
    /// Threshold a scalar metric against human labels.
    Binarize(BinarizeArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

/// A flag combination that cannot be run.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must lie in [0, 1], got {v}"))
    }
}

fn parse_gamma(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie strictly between 0 and 1, got {v}"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

/// `N_ALPHA,N_RHO,N_ETA`
fn parse_grid(s: &str) -> Result<GridConfig, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad grid size {p:?}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, r, e] => GridConfig::new(a, r, e).map_err(|e| e.to_string()),
        _ => Err(format!("expected N_ALPHA,N_RHO,N_ETA, got {s:?}")),
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Free,
    Known,
    Estimated,
    Mixed,
}

impl From<ModeArg> for EstimateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Free => EstimateMode::Free,
            ModeArg::Known => EstimateMode::Known,
            ModeArg::Estimated => EstimateMode::Estimated,
            ModeArg::Mixed => EstimateMode::Mixed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateModeArg {
    Provided,
    Estimated,
}

#[derive(Clone, Copy, ValueEnum)]
enum FreeArg {
    NPhi,
    #[value(name = "n-m")]
    NM,
    NRhoEta,
}

#[derive(Args)]
struct RatingSource {
    /// Ratings file, CSV or JSON lines.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Format of --ratings; guessed from the extension when absent.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Source name of the error-free (human) ratings.
    #[arg(long, default_value = HUMAN_SOURCE)]
    human: String,
    /// Source name of the automated metric.
    #[arg(long)]
    metric: Option<String>,
}

impl RatingSource {
    fn load(&self) -> Result<Vec<binmetric::RatingRecord>> {
        let path = self.ratings.as_deref().ok_or_else(|| usage("--ratings is required"))?;
        let format = match self.format {
            Some(FormatArg::Csv) => Format::Csv,
            Some(FormatArg::Jsonl) => Format::Jsonl,
            None => Format::from_path(path),
        };
        load_ratings(path, format).with_context(|| format!("reading {}", path.display()))
    }

    fn counts(&self, records: &[binmetric::RatingRecord], system: &str) -> Result<CountSummary> {
        let pair = summarize(records, &self.human, self.metric.as_deref().unwrap_or(""), system)?;
        for w in &pair.warnings {
            eprintln!("warning: {w}");
        }
        Ok(pair.counts)
    }
}

#[derive(Args)]
struct PosteriorArgs {
    #[arg(long, value_enum, required_unless_present = "request")]
    mode: Option<ModeArg>,
    /// True positive rate of the metric, when known.
    #[arg(long, value_parser = parse_probability, requires = "eta", required_if_eq("mode", "known"))]
    rho: Option<f64>,
    /// True negative rate of the metric, when known.
    #[arg(long, value_parser = parse_probability, requires = "rho", required_if_eq("mode", "known"))]
    eta: Option<f64>,
    /// Grid sizes N_ALPHA,N_RHO,N_ETA for the marginal posterior.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridConfig>,
}

impl PosteriorArgs {
    /// `from_ratings`: the counts were folded from a ratings file, so a
    /// metric source must be named for every mode that reads metric counts.
    fn request(&self, counts: CountSummary, metric: &Option<String>, system: &str, from_ratings: bool) -> Result<EstimateRequest> {
        let mode = self.mode.ok_or_else(|| usage("--mode is required"))?.into();
        if from_ratings && metric.is_none() && mode != EstimateMode::Free {
            return Err(usage("--metric is required for this mode"));
        }
        Ok(EstimateRequest {
            rho: self.rho,
            eta: self.eta,
            grid: self.grid,
            metric_id: metric.clone().unwrap_or_default(),
            system_id: system.to_string(),
            ..EstimateRequest::new(mode, counts)
        })
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    source: RatingSource,
    /// System to estimate.
    #[arg(long)]
    system: Option<String>,
    /// Count summary JSON used instead of --ratings.
    #[arg(long, conflicts_with = "ratings")]
    counts: Option<PathBuf>,
    #[command(flatten)]
    posterior: PosteriorArgs,
    /// Replay an echoed configuration; all other flags are ignored.
    #[arg(long)]
    request: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: RatingSource,
    #[arg(long, required_unless_present = "request")]
    system_a: Option<String>,
    #[arg(long, required_unless_present = "request")]
    system_b: Option<String>,
    #[command(flatten)]
    posterior: PosteriorArgs,
    /// Significance level.
    #[arg(long, value_parser = parse_gamma, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long)]
    request: Option<PathBuf>,
}

#[derive(Args)]
struct CampaignArgs {
    /// Expected success rate of the system.
    #[arg(long, value_parser = parse_probability, required_unless_present = "request")]
    alpha: Option<f64>,
    #[arg(long, value_parser = parse_probability, required_unless_present = "request")]
    rho: Option<f64>,
    #[arg(long, value_parser = parse_probability, required_unless_present = "request")]
    eta: Option<f64>,
    #[arg(long, value_parser = parse_gamma, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    /// Whether rho and eta are known or estimated from gold pairs.
    #[arg(long, value_enum, default_value = "estimated")]
    mode: RateModeArg,
    /// Number of gold pairs; by default the human-rated pairs double as gold.
    #[arg(long)]
    n_rho_eta: Option<u64>,
    /// Positive share of the gold pairs (with --n-rho-eta; default alpha).
    #[arg(long, value_parser = parse_probability, requires = "n_rho_eta")]
    psi: Option<f64>,
    /// Starting grid sizes N_ALPHA,N_RHO,N_ETA.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridConfig>,
    /// Keep the starting grid instead of refining it until the posterior settles.
    #[arg(long)]
    no_refine: bool,
}

impl CampaignArgs {
    fn params(&self, n_phi: u64, n_m: u64) -> Result<PlanParams> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| usage(format!("--{name} is required")));
        let (alpha, rho, eta) = (need(self.alpha, "alpha")?, need(self.rho, "rho")?, need(self.eta, "eta")?);
        let mut p = match self.mode {
            RateModeArg::Provided => PlanParams::provided(alpha, rho, eta, self.gamma, n_phi, n_m),
            RateModeArg::Estimated => PlanParams::shared(alpha, rho, eta, self.gamma, n_phi, n_m),
        };
        if let Some(n) = self.n_rho_eta {
            p.shared_gold = false;
            p.n_rho_eta = n;
            p.psi = self.psi.unwrap_or(alpha);
        }
        let start = self.grid.unwrap_or(GridConfig::REDUCED);
        let cap = (!self.no_refine).then_some(GridConfig::FULL.max_with(&start));
        Ok(p.with_grids(start, cap))
    }
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    /// Number of human ratings.
    #[arg(long, default_value_t = 0)]
    n_phi: u64,
    /// Number of metric ratings.
    #[arg(long = "n-m", default_value_t = 0)]
    n_m: u64,
    /// Target difference; prints the smallest count of --free reaching it.
    #[arg(long = "target-eps", value_parser = parse_positive, requires = "free")]
    target_eps: Option<f64>,
    /// Sample count solved for with --target-eps.
    #[arg(long, value_enum, requires = "target_eps")]
    free: Option<FreeArg>,
    #[arg(long)]
    request: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    /// Human sample sizes (rows).
    #[arg(long, value_delimiter = ',', default_value = TABLE_PHI)]
    phi_values: Vec<u64>,
    /// Metric sample sizes (columns).
    #[arg(long = "m-values", value_delimiter = ',', default_value = TABLE_M)]
    m_values: Vec<u64>,
    /// Also write the grid as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    request: Option<PathBuf>,
}

#[derive(Args)]
struct BinarizeArgs {
    #[command(flatten)]
    source: RatingSource,
    /// One threshold over all systems instead of one per system.
    #[arg(long)]
    pooled: bool,
    /// Write the ROC curve(s) as CSV; with several systems, one file per system.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    request: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Port to listen on (0 picks a free one); defaults to $PORT or 8080.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Per-request compute budget; defaults to $COMPUTE_BUDGET_MS.
    #[arg(long)]
    budget_ms: Option<u64>,
    /// Allowed browser origin; defaults to $CORS_ORIGIN, or any.
    #[arg(long)]
    cors_origin: Option<String>,
}

trait GridExt {
    fn max_with(&self, other: &GridConfig) -> GridConfig;
}

impl GridExt for GridConfig {
    fn max_with(&self, other: &GridConfig) -> GridConfig {
        GridConfig {
            n_alpha: self.n_alpha.max(other.n_alpha),
            n_rho: self.n_rho.max(other.n_rho),
            n_eta: self.n_eta.max(other.n_eta),
        }
    }
}

fn read_request<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v = serde_json::from_str(text.trim().strip_prefix("config:").unwrap_or(&text))
        .with_context(|| format!("parsing request {}", path.display()))?;
    Ok(v)
}

fn echo<T: Serialize>(config: &T) -> Result<()> {
    eprintln!("config: {}", serde_json::to_string(config)?);
    Ok(())
}

fn emit<T: Serialize>(payload: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, payload)?;
    writeln!(out)?;
    Ok(())
}

fn describe(r: &EstimateReport) -> String {
    let mut s = format!("alpha: mode {:.4}, mean {:.4}, sd {:.4}", r.mode, r.mean, r.variance.sqrt());
    if let Some(b) = &r.posterior.beta {
        s.push_str(&format!(", Beta({}, {})", b.a, b.b));
    } else if let Some(n) = r.posterior.n_bins {
        s.push_str(&format!(", {n}-bin grid"));
    }
    if let Some(k) = &r.known {
        if k.clamped {
            s.push_str(&format!(" (closed form {:.4} clamped to [0, 1])", k.raw));
        }
    }
    s
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let req: EstimateRequest = match &a.request {
        Some(p) => read_request(p)?,
        None => {
            let (counts, system, from_ratings) = match (&a.counts, &a.source.ratings) {
                (Some(path), _) => (load_count_summary(path)?, a.system.clone().unwrap_or_default(), false),
                (None, Some(_)) => {
                    let system = a.system.clone().ok_or_else(|| usage("--system is required with --ratings"))?;
                    (a.source.counts(&a.source.load()?, &system)?, system, true)
                }
                (None, None) => return Err(usage("one of --ratings, --counts or --request is required")),
            };
            a.posterior.request(counts, &a.source.metric, &system, from_ratings)?
        }
    };
    echo(&req)?;
    let (report, _) = run_estimate(&req)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("{}", describe(&report));
    emit(&report)
}

fn compare(a: &CompareArgs) -> Result<()> {
    let req: CompareRequest = match &a.request {
        Some(p) => read_request(p)?,
        None => {
            let records = a.source.load()?;
            let side = |system: &Option<String>| -> Result<EstimateRequest> {
                let system = system.as_deref().ok_or_else(|| usage("--system-a and --system-b are required"))?;
                a.posterior.request(a.source.counts(&records, system)?, &a.source.metric, system, true)
            };
            CompareRequest { a: side(&a.system_a)?, b: side(&a.system_b)?, gamma: a.gamma }
        }
    };
    echo(&req)?;
    let r = run_compare(&req)?;
    let c = &r.comparison;
    eprintln!(
        "P(alpha_a > alpha_b) = {:.4}: {} at gamma = {} (distinguishable difference {:.3})",
        c.prob_greater,
        if c.significant { "significant" } else { "not significant" },
        c.gamma,
        c.epsilon_hat
    );
    emit(&r)
}

fn plan(a: &PlanArgs) -> Result<()> {
    let req: PlanRequest = match &a.request {
        Some(p) => read_request(p)?,
        None => PlanRequest {
            params: a.campaign.params(a.n_phi, a.n_m)?,
            target_epsilon: a.target_eps,
            free: a.free.map(|f| match f {
                FreeArg::NPhi => FreeVariable::NPhi,
                FreeArg::NM => FreeVariable::NM,
                FreeArg::NRhoEta => FreeVariable::NRhoEta,
            }),
        },
    };
    echo(&req)?;
    let r = run_plan(&req)?;
    match (&r.epsilon, &r.min_samples) {
        (Some(e), _) => eprintln!("distinguishable difference: {e:.3}"),
        (_, Some(MinSamples::Reached { count, epsilon })) => eprintln!("reached {epsilon:.4} with {count} samples"),
        (_, Some(MinSamples::Unreachable { epsilon })) => eprintln!("unreachable: best {epsilon:.4}"),
        _ => {}
    }
    eprintln!("{}", r.disclaimer);
    emit(&r)
}

fn table(a: &TableArgs) -> Result<()> {
    let req: PlanTableRequest = match &a.request {
        Some(p) => read_request(p)?,
        None => PlanTableRequest {
            params: a.campaign.params(0, 0)?,
            phi_values: a.phi_values.clone(),
            m_values: a.m_values.clone(),
        },
    };
    echo(&req)?;
    let t: PlanTable = run_plan_table(&req)?;
    eprint!("{}", t.to_text());
    if let Some(path) = &a.out {
        std::fs::write(path, t.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    emit(&t)
}

fn binarize(a: &BinarizeArgs) -> Result<()> {
    let req: BinarizeRequest = match &a.request {
        Some(p) => read_request(p)?,
        None => {
            let metric = a.source.metric.as_deref().ok_or_else(|| usage("--metric is required"))?;
            let samples = scored_samples(&a.source.load()?, &a.source.human, metric)?;
            BinarizeRequest { samples, pooling: if a.pooled { Pooling::Pooled } else { Pooling::PerSystem } }
        }
    };
    eprintln!("config: {} scored samples, pooling {:?}", req.samples.len(), req.pooling);
    let r = run_binarize(&req)?;
    for (key, c) in &r.thresholds {
        eprintln!("{key}: tau {}, rho {:.4}, eta {:.4}, auc {:.4}", c.tau, c.rho_hat, c.eta_hat, r.auc[key]);
    }
    if let Some(path) = &a.out {
        if r.roc.len() == 1 {
            let points = r.roc.values().next().map(Vec::as_slice).unwrap_or_default();
            std::fs::write(path, roc_csv(points)).with_context(|| format!("writing {}", path.display()))?;
        } else {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("roc");
            for (key, points) in &r.roc {
                let file = path.with_file_name(format!("{stem}.{key}.csv"));
                std::fs::write(&file, roc_csv(points)).with_context(|| format!("writing {}", file.display()))?;
            }
        }
    }
    emit(&r)
}

fn serve(a: &ServeArgs) -> Result<()> {
    let mut config = ServiceConfig::from_env().map_err(usage)?;
    if let Some(p) = a.port {
        config.port = p;
    }
    if let Some(ms) = a.budget_ms {
        if ms == 0 {
            return Err(usage("--budget-ms must be positive"));
        }
        config.compute_budget = std::time::Duration::from_millis(ms);
    }
    if let Some(o) = &a.cors_origin {
        config.cors_origin = Some(o.clone());
    }
    eprintln!("config: {config:?}");
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), config.port))
            .await
            .with_context(|| format!("binding {}:{}", a.host, config.port))?;
        let addr = listener.local_addr()?;
        {
            let mut out = std::io::stdout().lock();
            writeln!(out, "http://{addr}")?;
            out.flush()?;
        }
        binmetric_service::serve(listener, &config).await?;
        Ok(())
    })
}

/// Usage 2, numeric 4, everything else about the data 3.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.chain().find_map(|c| c.downcast_ref::<binmetric::Error>()) {
        Some(be) if be.is_numeric() => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Compare(a) => compare(a),
        Command::Plan(a) => plan(a),
        Command::Table(a) => table(a),
        Command::Binarize(a) => binarize(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
