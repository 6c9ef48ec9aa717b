//! Command-line surface: six subcommands around the library, each writing
//! its artifacts plus a run manifest into the output directory.
//!
//! Config resolution: values in the `--config` JSON file override
//! command-line flags, which override built-in defaults. The output
//! directory falls back to the `ORDMIX_OUTDIR` environment variable. A seed
//! is mandatory for every command.
//!
//! Every run writes `manifest.json` (atomically, even on failure) holding
//! the resolved config, the input checksum, the output file inventory with
//! checksums, and the error record if any. The manifest is the only
//! artifact containing wall-clock fields; all other outputs are
//! byte-reproducible from (input, config, seed).

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::{
    default_tiers_seeded, generate, instance_sidecar, run_benchmark, write_instance_csv,
    write_report_csv, BenchmarkOptions, TierSpec,
};
use crate::embedding::{fit_embedding, transform, OrdinalDataset};
use crate::error::{Error, Result};
use crate::ingest::{ingest_csv, read_schema, IngestStats, SchemaSidecar};
use crate::mixture::{fit, FitMode, MixtureConfig};
use crate::selection::{
    run_pipeline, run_pipeline_pinned, ModelVariant, PipelineConfig, PipelineOutput, SelectionPlan,
};
use crate::stability::{
    alpha_sweep, bootstrap_stability, item_set_sweep, n_min_sweep, weight_resample_refit,
    write_bootstrap_csv, write_sensitivity_csv, ItemSetVariant, SensitivityReport,
    DEFAULT_ALPHA_SWEEP, DEFAULT_BOOTSTRAP_REPLICATES, DEFAULT_N_MIN_SWEEP,
    DEFAULT_WEIGHT_REPLICATES,
};

#[derive(Debug, Parser)]
#[command(
    name = "ordmix",
    version,
    about = "Mixtures of sparse Gaussian DAGs over score-embedded ordinal survey data"
)]
struct Cli {
    /// JSON config file; its values override command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the mixture-of-DAGs model on a CSV dataset.
    Fit(FitArgs),
    /// Select K by inner cross-validation and fit all model variants.
    Select(SelectArgs),
    /// Run the tiered synthetic benchmark.
    Benchmark(BenchmarkArgs),
    /// Bootstrap assignment stability around a reference pipeline run.
    Bootstrap(BootstrapArgs),
    /// Sensitivity sweeps: concentration, item set, cluster-mass floor,
    /// weighted resampling.
    Sensitivity(SensitivityArgs),
    /// Generate the synthetic benchmark instances as CSV + ground truth.
    Generate(GenerateArgs),
}

/// Flags shared by the dataset-consuming commands.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct CommonFlags {
    /// Input CSV (header of item names, 1-based integer codes).
    #[arg(long)]
    input: Option<PathBuf>,
    /// RNG seed; mandatory (also settable via the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $ORDMIX_OUTDIR, then ./ordmix-out).
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Cell value marking a missing response; empty cells always count.
    #[arg(long)]
    missing_token: Option<String>,
    /// JSON schema sidecar: {"item": category_count, ...}.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct PipelineFlags {
    /// Truncation level for stick-breaking discovery.
    #[arg(long)]
    k_max: Option<usize>,
    /// DP concentration.
    #[arg(long)]
    alpha: Option<f64>,
    /// Minimum effective cluster mass before pruning.
    #[arg(long)]
    n_min: Option<f64>,
    /// Parent cap per node in graph search.
    #[arg(long)]
    max_parents: Option<usize>,
    /// BIC penalty multiplier.
    #[arg(long)]
    lambda: Option<f64>,
    /// EM iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Log-likelihood convergence threshold.
    #[arg(long)]
    eps_loglik: Option<f64>,
    /// Assignment-change convergence threshold.
    #[arg(long)]
    eps_assign: Option<f64>,
}

impl PipelineFlags {
    fn to_config(&self, seed: u64) -> PipelineConfig {
        let mut config = PipelineConfig::new(seed);
        if let Some(v) = self.k_max {
            config.k_max = v;
        }
        if let Some(v) = self.alpha {
            config.alpha = v;
        }
        if let Some(v) = self.n_min {
            config.n_min = v;
        }
        if let Some(v) = self.max_parents {
            config.max_parents = v;
        }
        if let Some(v) = self.lambda {
            config.lambda = v;
        }
        if let Some(v) = self.max_iters {
            config.max_iters = v;
        }
        if let Some(v) = self.eps_loglik {
            config.eps_loglik = v;
        }
        if let Some(v) = self.eps_assign {
            config.eps_assign = v;
        }
        config
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct PlanFlags {
    /// Candidate K grid, comma separated (default 2,3,4,5,6).
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    /// Outer holdout fraction (default 0.2).
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Inner cross-validation folds (default 5).
    #[arg(long)]
    folds: Option<usize>,
}

impl PlanFlags {
    fn to_plan(&self) -> SelectionPlan {
        let mut plan = SelectionPlan::default();
        if let Some(grid) = &self.k_grid {
            plan.k_grid = grid.clone();
        }
        if let Some(v) = self.test_fraction {
            plan.outer_test_fraction = v;
        }
        if let Some(v) = self.folds {
            plan.inner_folds = v;
        }
        plan
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pipeline: PipelineFlags,
    /// Fixed cluster count; omit for stick-breaking discovery.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct SelectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pipeline: PipelineFlags,
    #[command(flatten)]
    #[serde(flatten)]
    plan: PlanFlags,
    /// Skip selection and pin the confirmatory K.
    #[arg(long)]
    pin_k: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct BenchmarkArgs {
    /// RNG seed; mandatory.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// JSON file with a TierSpec array overriding the default tiers.
    #[arg(long)]
    tiers: Option<PathBuf>,
    /// Tier names that also run K selection (default: easy).
    #[arg(long, value_delimiter = ',')]
    selection_tiers: Option<Vec<String>>,
    #[command(flatten)]
    #[serde(flatten)]
    pipeline: PipelineFlags,
    #[command(flatten)]
    #[serde(flatten)]
    plan: PlanFlags,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct BootstrapArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pipeline: PipelineFlags,
    #[command(flatten)]
    #[serde(flatten)]
    plan: PlanFlags,
    /// Bootstrap replicates (default 20).
    #[arg(long)]
    b: Option<usize>,
    /// Hold every bootstrap refit at the reference K* instead of re-running
    /// selection per replicate.
    #[arg(long, default_value_t = false)]
    pin_k_star: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct SensitivityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pipeline: PipelineFlags,
    #[command(flatten)]
    #[serde(flatten)]
    plan: PlanFlags,
    /// Axes to run, comma separated from alpha,n_min,item_set,weights
    /// (default: alpha,n_min).
    #[arg(long, value_delimiter = ',')]
    axes: Option<Vec<String>>,
    /// Concentration settings (default 0.5,1,2).
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Cluster-mass floors (default 120,400,500,700).
    #[arg(long, value_delimiter = ',')]
    n_min_grid: Option<Vec<f64>>,
    /// JSON file with an ItemSetVariant array (required for item_set).
    #[arg(long)]
    item_variants: Option<PathBuf>,
    /// Text file with one positive row weight per line (required for
    /// weights).
    #[arg(long)]
    weights_file: Option<PathBuf>,
    /// Weighted-resample replicates (default 4).
    #[arg(long)]
    weight_replicates: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct GenerateArgs {
    /// RNG seed; mandatory.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// JSON file with a TierSpec array overriding the default tiers.
    #[arg(long)]
    tiers: Option<PathBuf>,
}

/// Entry point behind `main`; returns the process exit code.
pub fn run_cli() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Fit(args) => run_fit(overlay(args, config)?),
        Command::Select(args) => run_select(overlay(args, config)?),
        Command::Benchmark(args) => run_benchmark_cmd(overlay(args, config)?),
        Command::Bootstrap(args) => run_bootstrap_cmd(overlay(args, config)?),
        Command::Sensitivity(args) => run_sensitivity_cmd(overlay(args, config)?),
        Command::Generate(args) => run_generate(overlay(args, config)?),
    }
}

/// Overlays the config file's values onto flag values. Keys must match the
/// command's field set; the file wins wherever both are given.
fn overlay<T: Serialize + DeserializeOwned>(args: T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(path)?;
    let file: serde_json::Value = serde_json::from_str(&text)?;
    let serde_json::Value::Object(overrides) = file else {
        return Err(Error::InvalidConfig(
            "config file must hold a JSON object".into(),
        ));
    };
    let mut base = serde_json::to_value(&args)?;
    let obj = base
        .as_object_mut()
        .expect("flag structs serialize to objects");
    for (key, value) in overrides {
        if !obj.contains_key(&key) {
            return Err(Error::InvalidConfig(format!(
                "unknown config key {key:?} for this command"
            )));
        }
        obj.insert(key, value);
    }
    Ok(serde_json::from_value(base)?)
}

fn require_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| Error::InvalidConfig("a seed is mandatory (--seed or config)".into()))
}

fn require_input(input: &Option<PathBuf>) -> Result<&Path> {
    input
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("an input CSV is required (--input or config)".into()))
}

fn resolve_outdir(outdir: Option<PathBuf>) -> Result<PathBuf> {
    let dir = outdir
        .or_else(|| std::env::var_os("ORDMIX_OUTDIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ordmix-out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, Serialize)]
struct OutputFile {
    path: String,
    sha256: String,
    bytes: u64,
}

/// Wall-clock fields live here and nowhere else; every other artifact is
/// deterministic in (input, config, seed).
#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a serde_json::Value,
    input_sha256: Option<&'a str>,
    ingest: Option<IngestStats>,
    outputs: &'a [OutputFile],
    started_unix_seconds: f64,
    wall_clock_seconds: f64,
    error: Option<String>,
}

struct RunContext {
    outdir: PathBuf,
    outputs: Vec<OutputFile>,
    ingest: Option<IngestStats>,
}

impl RunContext {
    fn new(outdir: PathBuf) -> RunContext {
        RunContext {
            outdir,
            outputs: Vec::new(),
            ingest: None,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.outdir.join(name)
    }

    /// Pretty JSON with a trailing newline; records the file's checksum.
    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(self.path(name), &text)?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(text.as_bytes()),
            bytes: text.len() as u64,
        });
        Ok(())
    }

    /// Records a file some module writer already produced in the outdir.
    fn record(&mut self, name: &str) -> Result<()> {
        let bytes = std::fs::read(self.path(name))?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }
}

/// Runs a command body, then writes the manifest — also on failure, with
/// the error recorded. The manifest write is atomic (temp + rename).
fn with_manifest(
    command: &str,
    config_snapshot: &serde_json::Value,
    input: Option<&Path>,
    outdir: PathBuf,
    body: impl FnOnce(&mut RunContext) -> Result<()>,
) -> Result<()> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let input_sha = match input {
        Some(path) => Some(sha256_file(path)?),
        None => None,
    };

    let mut ctx = RunContext::new(outdir);
    let result = body(&mut ctx);

    let manifest = RunManifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: config_snapshot,
        input_sha256: input_sha.as_deref(),
        ingest: ctx.ingest,
        outputs: &ctx.outputs,
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        error: result.as_ref().err().map(|e| e.to_string()),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let tmp = ctx.path("manifest.json.tmp");
    std::fs::write(&tmp, &text)?;
    std::fs::rename(&tmp, ctx.path("manifest.json"))?;
    result
}

fn load_dataset(common: &CommonFlags, ctx: &mut RunContext) -> Result<OrdinalDataset> {
    let input = require_input(&common.input)?;
    let schema: Option<SchemaSidecar> = match &common.schema {
        Some(path) => Some(read_schema(path)?),
        None => None,
    };
    let (data, stats) = ingest_csv(input, common.missing_token.as_deref(), schema.as_ref())?;
    if stats.n_dropped > 0 {
        println!(
            "dropped {} of {} rows with missing values",
            stats.n_dropped, stats.n_read
        );
    }
    ctx.ingest = Some(stats);
    Ok(data)
}

fn read_tiers(path: &Path) -> Result<Vec<TierSpec>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn run_fit(args: FitArgs) -> Result<()> {
    let seed = require_seed(args.common.seed)?;
    let outdir = resolve_outdir(args.common.outdir.clone())?;
    let snapshot = serde_json::to_value(&args)?;
    let input = args.common.input.clone();
    with_manifest("fit", &snapshot, input.as_deref(), outdir, |ctx| {
        let data = load_dataset(&args.common, ctx)?;
        let embedding = fit_embedding(&data)?;
        let x = transform(&data, &embedding)?;

        let pipeline = args.pipeline.to_config(seed);
        let mode = match args.k {
            Some(k) => FitMode::Fixed { k },
            None => FitMode::Bnp {
                k_max: pipeline.k_max,
            },
        };
        let config: MixtureConfig = pipeline.mixture_config(mode, seed);
        let model = fit(&x, &config)?;

        ctx.write_json("embedding.json", &embedding.to_json())?;
        ctx.write_json("model.json", &model.to_json())?;

        let mut w = csv::Writer::from_path(ctx.path("assignments.csv"))?;
        w.write_record(["row", "cluster"])?;
        for (i, z) in model.assignments().iter().enumerate() {
            w.write_record([i.to_string(), z.to_string()])?;
        }
        w.flush()?;
        drop(w);
        ctx.record("assignments.csv")?;

        println!(
            "fit: {} clusters ({} effective), converged: {}",
            model.k(),
            model.effective_k(crate::mixture::EFFECTIVE_K_THRESHOLD),
            model.trace().converged
        );
        Ok(())
    })
}

/// Table-style model comparison: one row per variant, with the MSE delta
/// against the single-graph baseline.
fn write_model_comparison(output: &PipelineOutput, path: &Path) -> Result<()> {
    let mse_of = |variant: ModelVariant| -> f64 {
        output
            .report
            .variant_mse
            .iter()
            .find(|v| v.variant == variant)
            .map(|v| v.holdout_mse)
            .expect("pipeline reports all four variants")
    };
    let baseline = mse_of(ModelVariant::SingleGraph);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "mse", "delta_vs_baseline"])?;
    for variant in [
        ModelVariant::SingleGraph,
        ModelVariant::MixtureOnly,
        ModelVariant::BnpDag,
        ModelVariant::FixedKDag,
    ] {
        let mse = mse_of(variant);
        w.write_record([
            variant.label().to_string(),
            format!("{mse}"),
            format!("{}", mse - baseline),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_k_curve(output: &PipelineOutput, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "holdout_mse"])?;
    for point in &output.report.curve {
        w.write_record([point.k.to_string(), format!("{}", point.mse)])?;
    }
    w.flush()?;
    Ok(())
}

fn run_select(args: SelectArgs) -> Result<()> {
    let seed = require_seed(args.common.seed)?;
    let outdir = resolve_outdir(args.common.outdir.clone())?;
    let snapshot = serde_json::to_value(&args)?;
    let input = args.common.input.clone();
    with_manifest("select", &snapshot, input.as_deref(), outdir, |ctx| {
        let data = load_dataset(&args.common, ctx)?;
        let plan = args.plan.to_plan();
        let config = args.pipeline.to_config(seed);
        let output = run_pipeline_pinned(&data, &plan, &config, args.pin_k)?;

        ctx.write_json("selection.json", &output.report)?;
        ctx.write_json("confirmatory_model.json", &output.confirmatory.to_json())?;
        write_k_curve(&output, &ctx.path("k_curve.csv"))?;
        ctx.record("k_curve.csv")?;
        write_model_comparison(&output, &ctx.path("model_comparison.csv"))?;
        ctx.record("model_comparison.csv")?;

        println!(
            "select: K* = {} over grid {:?}",
            output.report.k_star, plan.k_grid
        );
        Ok(())
    })
}

fn run_benchmark_cmd(args: BenchmarkArgs) -> Result<()> {
    let seed = require_seed(args.seed)?;
    let outdir = resolve_outdir(args.outdir.clone())?;
    let snapshot = serde_json::to_value(&args)?;
    with_manifest("benchmark", &snapshot, None, outdir, |ctx| {
        let tiers = match &args.tiers {
            Some(path) => read_tiers(path)?,
            None => default_tiers_seeded(seed),
        };
        let mut options = BenchmarkOptions::new(seed);
        options.pipeline = args.pipeline.to_config(seed);
        options.plan = args.plan.to_plan();
        if let Some(names) = &args.selection_tiers {
            options.selection_tiers = names.clone();
        }
        let report = run_benchmark(&tiers, &options)?;

        ctx.write_json("benchmark_report.json", &report)?;
        write_report_csv(&report, &ctx.path("benchmark.csv"))?;
        ctx.record("benchmark.csv")?;

        for summary in &report.summaries {
            println!(
                "benchmark: {} / {}: mse {:.4} ± {:.4}, ari {:.3}",
                summary.tier,
                summary.variant.label(),
                summary.mse_mean,
                summary.mse_sd,
                summary.ari_mean
            );
        }
        Ok(())
    })
}

fn run_bootstrap_cmd(args: BootstrapArgs) -> Result<()> {
    let seed = require_seed(args.common.seed)?;
    let outdir = resolve_outdir(args.common.outdir.clone())?;
    let snapshot = serde_json::to_value(&args)?;
    let input = args.common.input.clone();
    with_manifest("bootstrap", &snapshot, input.as_deref(), outdir, |ctx| {
        let data = load_dataset(&args.common, ctx)?;
        let plan = args.plan.to_plan();
        let config = args.pipeline.to_config(seed);
        let reference = run_pipeline(&data, &plan, &config)?;
        let b = args.b.unwrap_or(DEFAULT_BOOTSTRAP_REPLICATES);
        let pin = args.pin_k_star.then_some(reference.report.k_star);
        let report = bootstrap_stability(&data, &reference, b, &plan, &config, pin)?;

        ctx.write_json("bootstrap.json", &report)?;
        write_bootstrap_csv(&report, &ctx.path("bootstrap.csv"))?;
        ctx.record("bootstrap.csv")?;

        println!(
            "bootstrap: B = {}, mean agreement {:.4} (min {:.4})",
            report.b, report.summary.mean_agreement, report.summary.min_agreement
        );
        Ok(())
    })
}

fn read_row_weights(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut weights = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let w: f64 = line.parse().map_err(|_| Error::Parse {
            row: i + 1,
            col: 1,
            message: format!("weight {line:?} is not a number"),
        })?;
        weights.push(w);
    }
    Ok(weights)
}

fn run_sensitivity_cmd(args: SensitivityArgs) -> Result<()> {
    let seed = require_seed(args.common.seed)?;
    let outdir = resolve_outdir(args.common.outdir.clone())?;
    let snapshot = serde_json::to_value(&args)?;
    let input = args.common.input.clone();
    with_manifest("sensitivity", &snapshot, input.as_deref(), outdir, |ctx| {
        let data = load_dataset(&args.common, ctx)?;
        let plan = args.plan.to_plan();
        let config = args.pipeline.to_config(seed);

        let axes: Vec<String> = args
            .axes
            .clone()
            .unwrap_or_else(|| vec!["alpha".into(), "n_min".into()]);
        let mut reports: Vec<SensitivityReport> = Vec::new();
        for axis in &axes {
            let report = match axis.as_str() {
                "alpha" => {
                    let alphas = args
                        .alphas
                        .clone()
                        .unwrap_or_else(|| DEFAULT_ALPHA_SWEEP.to_vec());
                    alpha_sweep(&data, &alphas, &plan, &config)?
                }
                "n_min" => {
                    let grid = args
                        .n_min_grid
                        .clone()
                        .unwrap_or_else(|| DEFAULT_N_MIN_SWEEP.to_vec());
                    n_min_sweep(&data, &grid, &plan, &config)?
                }
                "item_set" => {
                    let path = args.item_variants.as_deref().ok_or_else(|| {
                        Error::InvalidConfig(
                            "item_set axis needs --item-variants <file>".into(),
                        )
                    })?;
                    let text = std::fs::read_to_string(path)?;
                    let variants: Vec<ItemSetVariant> = serde_json::from_str(&text)?;
                    item_set_sweep(&data, &variants, &plan, &config)?
                }
                "weights" => {
                    let path = args.weights_file.as_deref().ok_or_else(|| {
                        Error::InvalidConfig("weights axis needs --weights-file <file>".into())
                    })?;
                    let weights = read_row_weights(path)?;
                    let r = args.weight_replicates.unwrap_or(DEFAULT_WEIGHT_REPLICATES);
                    weight_resample_refit(&data, &weights, r, &plan, &config)?
                }
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown sensitivity axis {other:?}"
                    )))
                }
            };
            reports.push(report);
        }

        ctx.write_json("sensitivity.json", &reports)?;
        write_sensitivity_csv(&reports, &ctx.path("sensitivity.csv"))?;
        ctx.record("sensitivity.csv")?;

        for report in &reports {
            println!(
                "sensitivity: axis {} over {} settings",
                report.axis.label(),
                report.settings.len()
            );
        }
        Ok(())
    })
}

fn run_generate(args: GenerateArgs) -> Result<()> {
    let seed = require_seed(args.seed)?;
    let outdir = resolve_outdir(args.outdir.clone())?;
    let snapshot = serde_json::to_value(&args)?;
    with_manifest("generate", &snapshot, None, outdir, |ctx| {
        let tiers = match &args.tiers {
            Some(path) => read_tiers(path)?,
            None => default_tiers_seeded(seed),
        };
        for tier in &tiers {
            tier.validate()?;
            let schema: SchemaSidecar = tier
                .cut_probs
                .iter()
                .enumerate()
                .map(|(j, cuts)| (format!("item_{}", j + 1), cuts.len() + 1))
                .collect();
            ctx.write_json(&format!("{}.schema.json", tier.name), &schema)?;
            for rep in 0..tier.replications {
                let instance = generate(tier, rep)?;
                let csv_name = format!("{}_{rep}.csv", tier.name);
                write_instance_csv(&instance, &ctx.path(&csv_name))?;
                ctx.record(&csv_name)?;
                let truth_name = format!("{}_{rep}.truth.json", tier.name);
                ctx.write_json(&truth_name, &instance_sidecar(&instance))?;
            }
        }
        println!(
            "generate: {} instances across {} tiers",
            tiers.iter().map(|t| t.replications).sum::<usize>(),
            tiers.len()
        );
        Ok(())
    })
}
