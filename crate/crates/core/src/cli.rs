//! Command-line front end. `run` parses arguments, executes one command and
//! returns the process exit status.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::checks::{format_table, run_checks, CheckOptions};
use crate::data::{Format, SplitPlan};
use crate::embedding::{DanmlConfig, LiftedMode, LiftedParams};
use crate::error::{invalid, Error, Result};
use crate::eval::{
    evaluate_metric, run_experiment, toy_embedding_train, write_accuracy_csv, ExperimentConfig, ExperimentOutcome,
    Learner, SyntheticSpec, ToyLoss, TuneGrid, MAX_K,
};
use crate::fetch::{cache_dir, fetch, resolve_dataset};
use crate::geometry::{class_gap, inseparability_report, lipschitz_lower_bound};
use crate::metric::{write_trace_csv, LossKind, MetricJson};
use crate::{LabeledDataset, MetricMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "anml", version, about = "Adaptive neighborhood metric learning")]
pub struct Cli {
    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn metrics over repeated splits, or train toy embeddings.
    Train(RunArgs),
    /// Evaluate a stored metric with k-NN over repeated splits.
    Eval(RunArgs),
    /// Inseparability, class-gap and Lipschitz report.
    Analyze(RunArgs),
    /// Finite-difference and reduction-identity self-checks.
    Losscheck(CheckArgs),
    /// Download a manifest dataset into the cache.
    Fetch(FetchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LossName {
    Hinge,
    Logistic,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingLossName {
    Danml,
    Triplet,
    Ms,
    Lifted,
    Npairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PaperUci,
}

/// Every run parameter. Doubles as the JSON config-file schema; unset
/// values fall back to the config file, then to defaults.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled name, manifest name, or file path.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub delimiter: Option<char>,
    /// identity, lanml-minus, lanml-plus or pnca.
    #[arg(long)]
    pub learner: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma2: Option<f64>,
    /// Regularization weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda2: Option<f64>,
    #[arg(long, value_enum)]
    pub loss: Option<LossName>,
    #[arg(long, allow_hyphen_values = true)]
    pub margin: Option<f64>,
    /// Similars per query.
    #[arg(long)]
    pub k_similars: Option<usize>,
    /// Evaluate k-NN for k in 1..=k_max.
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub stratified: Option<bool>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Cross-validated grid search over gamma1, gamma2 and lambda.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub tune: Option<bool>,
    /// Fit preprocessing on the full dataset before splitting.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub paper_protocol: Option<bool>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub pca_dim: Option<usize>,
    /// Train free embeddings on synthetic data with this loss.
    #[arg(long, value_enum)]
    pub embedding_loss: Option<EmbeddingLossName>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Metric JSON for `eval` and `analyze`.
    #[arg(long)]
    pub metric: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON file with any of the run parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub params: RunConfig,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Comma-separated subset of checks.
    #[arg(long, value_delimiter = ',')]
    pub only: Option<Vec<String>>,
    /// Debug: scale the analytic gradient of the named check.
    #[arg(long, hide = true)]
    pub corrupt_gradient: Option<String>,
    /// Write results JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    pub name: String,
    #[arg(long)]
    pub force: bool,
    /// Overrides the cache directory environment variable.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

/// Overlays the set fields of `flags` on `file`.
pub fn merge_config(file: &RunConfig, flags: &RunConfig) -> Result<RunConfig> {
    let mut base = serde_json::to_value(file)?;
    if let (Value::Object(b), Value::Object(f)) = (&mut base, serde_json::to_value(flags)?) {
        for (k, v) in f {
            if !v.is_null() {
                b.insert(k, v);
            }
        }
    }
    Ok(serde_json::from_value(base)?)
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::NotFound(format!("config file {}: {e}", p.display())))?;
            serde_json::from_str(&text)?
        }
        None => RunConfig::default(),
    };
    merge_config(&file, &args.params)
}

impl RunConfig {
    fn format(&self) -> Result<Option<Format>> {
        self.format.as_deref().map(str::parse).transpose()
    }

    fn delimiter(&self) -> Result<u8> {
        let c = self.delimiter.unwrap_or(',');
        if !c.is_ascii() {
            return invalid("delimiter must be an ASCII character");
        }
        Ok(c as u8)
    }

    pub fn load_dataset(&self) -> Result<LabeledDataset> {
        let Some(spec) = &self.dataset else {
            return invalid("--dataset is required");
        };
        resolve_dataset(spec, self.format()?, self.delimiter()?, &cache_dir())
    }

    fn loss_kind(&self) -> LossKind {
        match self.loss {
            Some(LossName::Logistic) => LossKind::Logistic,
            Some(LossName::Identity) => LossKind::Identity,
            Some(LossName::Hinge) | None => LossKind::Hinge { margin: self.margin.unwrap_or(1.0) },
        }
    }

    /// Experiment configuration: preset (if any), then explicit values.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let learner: Learner = self.learner.as_deref().map(str::parse).transpose()?.unwrap_or_default();
        let mut cfg = match self.preset {
            Some(Preset::PaperUci) | None => ExperimentConfig::paper_uci(learner),
        };
        let l = &mut cfg.lanml;
        if let Some(v) = self.gamma1 {
            l.gamma1 = v;
        }
        if let Some(v) = self.gamma2 {
            l.gamma2 = v;
        }
        if let Some(v) = self.lambda {
            l.reg_weight = v;
        }
        if self.loss.is_some() || self.margin.is_some() {
            l.loss = self.loss_kind();
        }
        if let Some(v) = self.k_similars {
            l.similars_per_query = v;
        }
        if let Some(v) = self.max_iters {
            l.solver.max_iters = v;
        }
        if let Some(v) = self.step_size {
            l.solver.step_size = v;
        }
        if let Some(a) = self.alpha {
            cfg.pnca_alpha = a;
        }
        let defaults = SplitPlan::default();
        cfg.plan = SplitPlan {
            train_fraction: self.train_fraction.unwrap_or(defaults.train_fraction),
            trials: self.trials.unwrap_or(defaults.trials),
            seed: self.seed.unwrap_or(defaults.seed),
            stratified: self.stratified.unwrap_or(defaults.stratified),
        };
        if let Some(k) = self.k_max {
            if k == 0 || k > MAX_K {
                return invalid(format!("k_max must lie in 1..={MAX_K}"));
            }
            cfg.k_values = (1..=k).collect();
        }
        if let Some(p) = self.pca_dim {
            cfg.pca_dim = Some(p);
        }
        if let Some(r) = self.restarts {
            cfg.restarts = r;
        }
        cfg.paper_protocol = self.paper_protocol.unwrap_or(false);
        if self.tune.unwrap_or(false) {
            cfg.tune = Some(TuneGrid::full());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn toy(&self, which: EmbeddingLossName) -> Result<(SyntheticSpec, ToyLoss, usize, f64)> {
        let d = SyntheticSpec::default();
        let spec = SyntheticSpec {
            classes: self.classes.unwrap_or(d.classes),
            per_class: self.per_class.unwrap_or(d.per_class),
            dim: self.dim.unwrap_or(d.dim),
            seed: self.seed.unwrap_or(d.seed),
        };
        let loss = match which {
            EmbeddingLossName::Danml => {
                let dc = DanmlConfig::default();
                let lambda1 = self.lambda1.unwrap_or(dc.lambda1);
                let sigma = self.lambda2.map_or(dc.lambda2 - dc.lambda1, |l2| l2 - lambda1);
                let mut cfg = DanmlConfig::from_tuning_grid(
                    self.gamma1.unwrap_or(dc.gamma1),
                    self.gamma2.unwrap_or(dc.gamma2),
                    lambda1,
                    sigma,
                );
                if self.loss.is_some() {
                    cfg.loss = self.loss_kind();
                }
                cfg.validate()?;
                ToyLoss::Danml(cfg)
            }
            EmbeddingLossName::Triplet => ToyLoss::Triplet { margin: self.margin.unwrap_or(0.5) },
            EmbeddingLossName::Ms => ToyLoss::Ms {
                alpha: self.alpha.unwrap_or(2.0),
                beta: self.beta.unwrap_or(40.0),
                margin: self.margin.unwrap_or(-0.5),
            },
            EmbeddingLossName::Lifted => ToyLoss::Lifted(LiftedParams {
                gamma1: self.gamma1.unwrap_or(1.0),
                gamma2: self.gamma2.unwrap_or(1.0),
                lambda1: self.lambda1.unwrap_or(1.0),
                lambda2: self.lambda2.unwrap_or(-1.0),
                margin: self.margin.unwrap_or(1.0),
                mode: LiftedMode::Improved,
            }),
            EmbeddingLossName::Npairs => {
                ToyLoss::Npairs { gamma: self.gamma1.unwrap_or(1.0), lambda: self.lambda1.unwrap_or(0.0) }
            }
        };
        if let ToyLoss::Npairs { .. } = loss {
            if spec.per_class != 2 {
                return invalid("npairs needs --per-class 2");
            }
        }
        Ok((spec, loss, self.steps.unwrap_or(500), self.step_size.unwrap_or(0.05)))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    seed: Option<u64>,
}

fn write_manifest(out: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let m = Manifest { command, tool: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), config: cfg, seed: cfg.seed };
    write_json(&out.join("manifest.json"), &m)
}

fn write_experiment(out: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    write_json(&out.join("summary.json"), &outcome.summary)?;
    write_json(&out.join("trials.json"), &outcome.rows)?;
    write_accuracy_csv(&outcome.rows, std::fs::File::create(out.join("accuracy.csv"))?)?;
    let metrics = out.join("metrics");
    std::fs::create_dir_all(&metrics)?;
    for (t, m) in outcome.metrics.iter().enumerate() {
        write_json(&metrics.join(format!("trial_{t:02}.json")), &m.to_json())?;
    }
    if outcome.traces.iter().any(|t| !t.is_empty()) {
        let traces = out.join("traces");
        std::fs::create_dir_all(&traces)?;
        for (t, tr) in outcome.traces.iter().enumerate() {
            write_trace_csv(tr, std::fs::File::create(traces.join(format!("trial_{t:02}.csv")))?)?;
        }
    }
    Ok(())
}

fn report_experiment(outcome: &ExperimentOutcome) {
    let s = &outcome.summary;
    println!(
        "{} / {}: best-k accuracy {:.2} ± {:.2} % over {} trials",
        s.dataset,
        s.learner,
        100.0 * s.mean,
        100.0 * s.std,
        s.trials
    );
}

fn write_embeddings(path: &Path, batch: &crate::embedding::EmbeddingBatch) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::metric::csv_err)?;
    for (row, label) in batch.rows().iter().zip(batch.labels()) {
        let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
        rec.push(label.to_string());
        w.write_record(&rec).map_err(crate::metric::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_train(args: &RunArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    if let Some(which) = cfg.embedding_loss {
        let (spec, loss, steps, step) = cfg.toy(which)?;
        let o = toy_embedding_train(&spec, &loss, steps, step)?;
        write_manifest(&args.out, "train", &cfg)?;
        write_embeddings(&args.out.join("embeddings_initial.csv"), &o.initial)?;
        write_embeddings(&args.out.join("embeddings_final.csv"), &o.last)?;
        let mut w = csv::Writer::from_path(args.out.join("loss_trace.csv")).map_err(crate::metric::csv_err)?;
        w.write_record(["step", "loss"]).map_err(crate::metric::csv_err)?;
        for (i, l) in o.trace.iter().enumerate() {
            w.write_record(&[i.to_string(), l.to_string()]).map_err(crate::metric::csv_err)?;
        }
        w.flush()?;
        let summary = serde_json::json!({
            "loss": loss,
            "steps": steps,
            "step_size": step,
            "loss_initial": o.trace[0],
            "loss_final": o.trace[o.trace.len() - 1],
            "recall_at_1_before": o.recall_before,
            "recall_at_1_after": o.recall_after,
        });
        write_json(&args.out.join("summary.json"), &summary)?;
        println!(
            "{}: loss {:.6} -> {:.6}, recall@1 {:.3} -> {:.3}",
            loss.name(),
            o.trace[0],
            o.trace[o.trace.len() - 1],
            o.recall_before,
            o.recall_after
        );
        return Ok(EXIT_OK);
    }
    let exp = cfg.experiment()?;
    let data = cfg.load_dataset()?;
    let outcome = run_experiment(&data, &exp)?;
    write_manifest(&args.out, "train", &cfg)?;
    write_json(&args.out.join("experiment.json"), &exp)?;
    write_experiment(&args.out, &outcome)?;
    report_experiment(&outcome);
    Ok(EXIT_OK)
}

fn read_metric(path: &Path) -> Result<MetricMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::NotFound(format!("metric file {}: {e}", path.display())))?;
    let j: MetricJson = serde_json::from_str(&text)?;
    MetricMatrix::from_json(&j)
}

fn cmd_eval(args: &RunArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let mut exp = cfg.experiment()?;
    exp.learner = Learner::Identity;
    exp.tune = None;
    let data = cfg.load_dataset()?;
    let outcome = match &cfg.metric {
        Some(p) => evaluate_metric(&data, &exp, &read_metric(p)?)?,
        None => run_experiment(&data, &exp)?,
    };
    write_manifest(&args.out, "eval", &cfg)?;
    write_experiment(&args.out, &outcome)?;
    report_experiment(&outcome);
    Ok(EXIT_OK)
}

fn cmd_analyze(args: &RunArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let data = cfg.load_dataset()?;
    let k = cfg.k_similars.unwrap_or(10);
    let report = inseparability_report(&data, k)?;
    let gap = class_gap(&data)?;
    let (projected_gap, lipschitz) = match &cfg.metric {
        Some(p) => {
            let m = read_metric(p)?;
            let after = class_gap(&m.transform(&data)?)?;
            let bound = lipschitz_lower_bound(gap.delta, after.delta)?;
            (Some(after), Some(bound))
        }
        None => (None, None),
    };
    write_manifest(&args.out, "analyze", &cfg)?;
    let out = serde_json::json!({
        "dataset": data.name,
        "similars_per_query": k,
        "inseparability": report,
        "class_gap": gap,
        "projected_class_gap": projected_gap,
        "lipschitz_lower_bound": lipschitz,
    });
    write_json(&args.out.join("analysis.json"), &out)?;
    println!(
        "{}: inseparable fraction {:.4}, class gap {:.6}{}",
        data.name,
        report.fraction,
        gap.delta,
        lipschitz.map_or(String::new(), |l| format!(", Lipschitz lower bound {l:.6}"))
    );
    Ok(EXIT_OK)
}

fn cmd_losscheck(args: &CheckArgs) -> Result<i32> {
    let opts = CheckOptions {
        seed: args.seed,
        instances: args.instances,
        only: args.only.clone(),
        corrupt: args.corrupt_gradient.clone(),
    };
    let results = run_checks(&opts)?;
    print!("{}", format_table(&results));
    if let Some(p) = &args.out {
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_json(p, &results)?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        Ok(EXIT_CHECK_FAILED)
    }
}

fn cmd_fetch(args: &FetchArgs) -> Result<i32> {
    let dir = args.cache_dir.clone().unwrap_or_else(cache_dir);
    let r = fetch(&args.name, &dir, args.force)?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    if r.verified.is_none() {
        eprintln!("note: no pinned checksum for {}; recorded sha256 {}", r.name, r.sha256);
    }
    Ok(EXIT_OK)
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidInput(_) => "invalid_input",
        Error::NotFound(_) => "not_found",
        Error::Convergence(_) => "convergence",
        Error::Solver(_) => "solver",
        Error::Numeric(_) => "numeric",
        Error::Parse { .. } => "parse",
        Error::Trial { source, .. } => error_kind(source),
        Error::Io(_) => "io",
        Error::Json(_) => "config",
    }
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new().parse_filters(level).format_timestamp(None).try_init();
}

pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Losscheck(a) => cmd_losscheck(a),
        Command::Fetch(a) => cmd_fetch(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(&cli.log_level);
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            let msg = serde_json::json!({ "error": error_kind(&e), "message": e.to_string(), "exit_code": e.exit_code() });
            let _ = writeln!(std::io::stderr(), "{msg}");
            e.exit_code()
        }
    }
}
