//! Command-line driver for the attribution workflow.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 invalid input
//! data, 3 not enough data for the requested litmus.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ioattrib::attribution::{run_pipeline, write_artifact, ErrorBreakdown, Format, PipelineConfig};
use ioattrib::data::START_TIME;
use ioattrib::duplicates::{
    application_error_bound, default_bucket_edges, delta_t_profile, find_duplicate_sets, noise_estimate, pair_deltas,
    write_profile_csv,
};
use ioattrib::ingest::{self, split, SplitMode, Splits};
use ioattrib::metrics::ErrorSummary;
use ioattrib::model::{grid_search, write_grid_csv, GbtHyperparams, GbtModel};
use ioattrib::simulator::{self, SimConfig, VOLUME_FEATURE};
use ioattrib::system::{golden_time_model, tune_and_evaluate, weekly_error_timeline, write_timeline_csv};
use ioattrib::uncertainty::{decompose, ood_error_share, select_eu_threshold, train_ensemble, write_uncertainty_csv};
use ioattrib::{Dataset64, Error};

#[derive(Parser)]
#[command(name = "ioattrib", version, about = "Attribute I/O throughput model error to its causes")]
struct Cli {
    /// Worker threads for grid search and ensemble training [default: all cores]
    #[arg(short = 'j', long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: jobs.csv, truth.csv and schema.toml
    Simulate(SimulateArgs),
    /// Fit one model with fixed hyperparameters and score it
    Train(TrainArgs),
    /// Grid-search hyperparameters and write the heatmap table
    Tune(TuneArgs),
    /// Run a single litmus test
    Litmus {
        #[arg(value_enum)]
        which: Litmus,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Run the full attribution pipeline
    Attribute(DataArgs),
    /// Re-render an existing JSON report
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Litmus {
    App,
    System,
    Ood,
    Noise,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulator config (TOML); defaults apply to omitted keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "IOATTRIB_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Job table (CSV)
    #[arg(long)]
    jobs: PathBuf,
    /// Feature schema (TOML)
    #[arg(long)]
    schema: PathBuf,
    /// Pipeline config (TOML, one section per module); flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config
    #[arg(long, env = "IOATTRIB_SEED")]
    seed: Option<u64>,
    /// Drop jobs that moved fewer bytes than this [default: off]
    #[arg(long)]
    min_volume: Option<f64>,
    /// Feature holding per-job I/O volume, for --min-volume
    #[arg(long, default_value = VOLUME_FEATURE)]
    volume_feature: String,
    /// Ensemble size
    #[arg(long)]
    k: Option<usize>,
    /// Concurrency window of the noise litmus, seconds
    #[arg(long)]
    dt_max: Option<f64>,
    /// Grid override: comma-separated tree counts
    #[arg(long, value_delimiter = ',')]
    n_trees: Option<Vec<usize>>,
    /// Grid override: comma-separated depths
    #[arg(long, value_delimiter = ',')]
    max_depth: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated features [default: observable application features]
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json written by `attribute`
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value = "svg")]
    format: String,
    #[arg(long)]
    out: PathBuf,
}

/// Marks failures caused by the input data (exit code 2).
#[derive(Debug)]
struct BadData(String);

impl fmt::Display for BadData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadData {}

fn bad_data<T>(r: ioattrib::Result<T>, what: &Path) -> Result<T> {
    r.map_err(|e| match e {
        // keep these typed so the exit code stays right
        Error::Insufficient { .. } => anyhow::Error::new(e),
        e => anyhow::Error::new(BadData(format!("{}: {e}", what.display()))),
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.is::<BadData>()) {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Insufficient { .. }) => 3,
        Some(e) if e.is_data_error() => 2,
        _ => 1,
    }
}

/// Everything a run used, written next to its outputs.
#[derive(Serialize)]
struct RunConfig<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    litmus: Option<Litmus>,
    threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    inputs: Option<Inputs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pipeline: Option<&'a PipelineConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulator: Option<&'a SimConfig>,
}

#[derive(Serialize)]
struct Inputs {
    jobs: PathBuf,
    schema: PathBuf,
    /// 0 means the filter is off.
    min_volume: f64,
    volume_feature: String,
}

fn echo_config(out: &Path, cfg: &RunConfig) -> Result<()> {
    let text = toml::to_string(cfg).context("serializing the resolved config")?;
    fs::write(out.join("run_config.toml"), text)?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn resolve_pipeline(a: &DataArgs) -> Result<PipelineConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.apply_seed(seed);
    }
    if let Some(k) = a.k {
        cfg.ensemble.k = k;
    }
    if let Some(dt) = a.dt_max {
        cfg.dt_max = dt;
    }
    if let Some(n) = &a.n_trees {
        cfg.grid.n_trees = n.clone();
        cfg.golden_grid.n_trees = n.clone();
    }
    if let Some(d) = &a.max_depth {
        cfg.grid.max_depth = d.clone();
        cfg.golden_grid.max_depth = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load(a: &DataArgs) -> Result<Dataset64> {
    let schema = bad_data(ingest::load_schema(&a.schema), &a.schema)?;
    let ds = bad_data(ingest::load_csv(&a.jobs, &schema), &a.jobs)?;
    match a.min_volume {
        Some(min) if min > 0.0 => {
            let kept = ingest::filter_min_volume(&ds, &a.volume_feature, min)?;
            eprintln!("min-volume filter kept {} of {} jobs", kept.len(), ds.len());
            Ok(kept)
        }
        _ => Ok(ds),
    }
}

fn inputs(a: &DataArgs) -> Inputs {
    Inputs {
        jobs: a.jobs.clone(),
        schema: a.schema.clone(),
        min_volume: a.min_volume.unwrap_or(0.0),
        volume_feature: a.volume_feature.clone(),
    }
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn data_run_config<'a>(
    command: &'a str,
    a: &DataArgs,
    cfg: &'a PipelineConfig,
    features: Option<Vec<String>>,
    litmus: Option<Litmus>,
) -> RunConfig<'a> {
    RunConfig {
        command,
        litmus,
        threads: rayon::current_num_threads(),
        inputs: Some(inputs(a)),
        features,
        pipeline: Some(cfg),
        simulator: None,
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SimConfig::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    prepare_out(&a.out)?;
    let (ds, truth) = simulator::generate::<f64>(&cfg)?;
    let files = simulator::export(&ds, &truth, &a.out)?;
    echo_config(
        &a.out,
        &RunConfig {
            command: "simulate",
            litmus: None,
            threads: rayon::current_num_threads(),
            inputs: None,
            features: None,
            pipeline: None,
            simulator: Some(&cfg),
        },
    )?;
    println!("wrote {} jobs to {}", ds.len(), files.jobs.display());
    Ok(())
}

fn features_or_default(ds: &Dataset64, features: &Option<Vec<String>>) -> Result<Vec<String>> {
    let f = features
        .clone()
        .unwrap_or_else(|| ds.schema().observable_app_features().to_vec());
    ds.schema().check_features(&f)?;
    Ok(f)
}

#[derive(Serialize)]
struct TrainMetrics<'a> {
    features: &'a [String],
    hyperparams: GbtHyperparams,
    train: ErrorSummary<f64>,
    validation: Option<ErrorSummary<f64>>,
    test: ErrorSummary<f64>,
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = resolve_pipeline(&a.data)?;
    if let Some(n) = a.data.n_trees.as_ref().and_then(|v| v.first()) {
        cfg.baseline.n_trees = *n;
    }
    if let Some(d) = a.data.max_depth.as_ref().and_then(|v| v.first()) {
        cfg.baseline.max_depth = *d;
    }
    if let Some(lr) = a.learning_rate {
        cfg.baseline.learning_rate = lr;
    }
    cfg.validate()?;
    let ds = load(&a.data)?;
    let features = features_or_default(&ds, &a.features)?;
    prepare_out(&a.data.out)?;
    echo_config(
        &a.data.out,
        &data_run_config("train", &a.data, &cfg, Some(features.clone()), None),
    )?;
    let splits = split(&ds, &cfg.split)?;
    let model = GbtModel::train(&splits.train, &features, &cfg.baseline)?;
    let score = |d: &Dataset64| -> ioattrib::Result<ErrorSummary<f64>> { ErrorSummary::from_signed(&model.signed_errors(d)?) };
    let metrics = TrainMetrics {
        features: &features,
        hyperparams: cfg.baseline,
        train: score(&splits.train)?,
        validation: if splits.validation.is_empty() {
            None
        } else {
            Some(score(&splits.validation)?)
        },
        test: score(&splits.test)?,
    };
    model.save(a.data.out.join("model.json"))?;
    write_json(&a.data.out.join("metrics.json"), &metrics)?;
    println!(
        "test median abs error {:.4} log10 ({:.2}%)",
        metrics.test.log_error, metrics.test.percent
    );
    Ok(())
}

#[derive(Serialize)]
struct TuneSummary<'a> {
    features: &'a [String],
    best: GbtHyperparams,
    test: ErrorSummary<f64>,
}

fn tune(a: &TuneArgs) -> Result<()> {
    let cfg = resolve_pipeline(&a.data)?;
    let ds = load(&a.data)?;
    let features = features_or_default(&ds, &a.features)?;
    prepare_out(&a.data.out)?;
    echo_config(
        &a.data.out,
        &data_run_config("tune", &a.data, &cfg, Some(features.clone()), None),
    )?;
    let splits = split(&ds, &cfg.split)?;
    let search = grid_search(&splits.train, &splits.validation, &features, &cfg.grid)?;
    write_grid_csv(&search.table, BufWriter::new(File::create(a.data.out.join("grid.csv"))?))?;
    let model = GbtModel::train(&splits.train, &features, &search.best)?;
    let test = ErrorSummary::from_signed(&model.signed_errors(&splits.test)?)?;
    write_json(
        &a.data.out.join("tuned.json"),
        &TuneSummary {
            features: &features,
            best: search.best,
            test,
        },
    )?;
    println!("best {:?}: test {:.2}%", search.best, test.percent);
    Ok(())
}

#[derive(Serialize)]
struct AppLitmus {
    duplicate_sets: usize,
    duplicate_jobs: usize,
    duplicate_fraction: f64,
    bound: ErrorSummary<f64>,
}

#[derive(Serialize)]
struct SystemLitmus {
    tuned: ErrorSummary<f64>,
    golden: ErrorSummary<f64>,
    tuned_hyperparams: GbtHyperparams,
    golden_hyperparams: GbtHyperparams,
    /// 1 − golden/tuned on median absolute log error.
    relative_reduction: f64,
}

#[derive(Serialize)]
struct OodLitmus {
    reference: &'static str,
    threshold: f64,
    method: ioattrib::uncertainty::ThresholdMethod,
    n_ood_jobs: usize,
    fraction_of_jobs: f64,
    fraction_of_error: f64,
}

fn random_split_splits(ds: &Dataset64, cfg: &PipelineConfig) -> Result<Splits<f64>> {
    if cfg.split.mode == SplitMode::Temporal {
        anyhow::bail!(Error::Config("the golden model needs a random split".into()));
    }
    Ok(split(ds, &cfg.split)?)
}

fn litmus(which: Litmus, a: &DataArgs) -> Result<()> {
    let cfg = resolve_pipeline(a)?;
    let ds = load(a)?;
    prepare_out(&a.out)?;
    echo_config(&a.out, &data_run_config("litmus", a, &cfg, None, Some(which)))?;
    match which {
        Litmus::App => {
            let dup = find_duplicate_sets(&ds);
            let bound = application_error_bound(&dup.sets)?;
            write_json(
                &a.out.join("app_litmus.json"),
                &AppLitmus {
                    duplicate_sets: dup.sets.len(),
                    duplicate_jobs: dup.duplicate_jobs,
                    duplicate_fraction: dup.duplicate_fraction,
                    bound,
                },
            )?;
            println!("application error bound {:.2}%", bound.percent);
        }
        Litmus::System => {
            if !ds.schema().contains(START_TIME) {
                anyhow::bail!(Error::Insufficient {
                    litmus: "system litmus".into(),
                    reason: format!("schema has no `{START_TIME}` feature"),
                });
            }
            let splits = random_split_splits(&ds, &cfg)?;
            let app = ds.schema().observable_app_features().to_vec();
            let tuned = tune_and_evaluate(&splits, &app, &cfg.grid)?;
            let golden = golden_time_model(&splits, &cfg.golden_grid)?;
            let t = tuned.test_error.log_error;
            let summary = SystemLitmus {
                tuned: tuned.test_error,
                golden: golden.test_error,
                tuned_hyperparams: tuned.search.best,
                golden_hyperparams: golden.search.best,
                relative_reduction: if t > 0.0 { 1.0 - golden.test_error.log_error / t } else { 0.0 },
            };
            write_json(&a.out.join("system_litmus.json"), &summary)?;
            let mut points = weekly_error_timeline(&tuned.model, &splits.test, "app_only")?;
            points.extend(weekly_error_timeline(&golden.model, &splits.test, "app_plus_time")?);
            write_timeline_csv(&points, BufWriter::new(File::create(a.out.join("timeline.csv"))?))?;
            println!(
                "start time cuts the median error by {:.1}% ({:.2}% -> {:.2}%)",
                summary.relative_reduction * 100.0,
                summary.tuned.percent,
                summary.golden.percent
            );
        }
        Litmus::Ood => {
            let splits = split(&ds, &cfg.split)?;
            let use_golden = ds.schema().contains(START_TIME) && cfg.split.mode == SplitMode::Random;
            let (reference, model) = if use_golden {
                ("golden", golden_time_model(&splits, &cfg.golden_grid)?)
            } else {
                let app = ds.schema().observable_app_features().to_vec();
                ("tuned", tune_and_evaluate(&splits, &app, &cfg.grid)?)
            };
            let ensemble = train_ensemble(&splits.train, &model.model.feature_names, &model.search.best, &cfg.ensemble)?;
            let estimates = decompose(&ensemble, &splits.test)?;
            let selection = select_eu_threshold(&estimates)?;
            let share = ood_error_share(&estimates, selection.threshold)?;
            let flagged: HashSet<String> = share.ood_job_ids.iter().cloned().collect();
            write_uncertainty_csv(&estimates, &flagged, BufWriter::new(File::create(a.out.join("uncertainty.csv"))?))?;
            write_json(
                &a.out.join("ood_litmus.json"),
                &OodLitmus {
                    reference,
                    threshold: selection.threshold,
                    method: selection.method,
                    n_ood_jobs: flagged.len(),
                    fraction_of_jobs: share.fraction_of_jobs,
                    fraction_of_error: share.fraction_of_error,
                },
            )?;
            println!(
                "{:.2}% of test jobs are OoD and carry {:.2}% of the error",
                share.fraction_of_jobs * 100.0,
                share.fraction_of_error * 100.0
            );
        }
        Litmus::Noise => {
            let dup = find_duplicate_sets(&ds);
            let profile = delta_t_profile(&pair_deltas(&dup.sets), &default_bucket_edges())?;
            write_profile_csv(&profile, BufWriter::new(File::create(a.out.join("dt_profile.csv"))?))?;
            let noise = noise_estimate(&dup.sets, &HashSet::new(), cfg.dt_max)?;
            write_json(&a.out.join("noise_litmus.json"), &noise)?;
            println!(
                "noise sigma {:.4} log10: 68% band ±{:.2}%, 95% band ±{:.2}%",
                noise.sigma, noise.band_68, noise.band_95
            );
        }
    }
    Ok(())
}

fn attribute(a: &DataArgs) -> Result<()> {
    let cfg = resolve_pipeline(a)?;
    let ds = load(a)?;
    prepare_out(&a.out)?;
    echo_config(&a.out, &data_run_config("attribute", a, &cfg, None, None))?;
    let report = run_pipeline(&ds, &cfg)?;
    for format in [Format::Json, Format::Csv, Format::Svg] {
        write_artifact(&report, format, &a.out)?;
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("baseline error {:.2}%", report.baseline_error.percent);
    for s in &report.classes {
        println!("  {:<20} {:>6.1}%", s.class.label(), s.share * 100.0);
    }
    println!("  {:<20} {:>6.1}%", "Unexplained", report.unexplained.share * 100.0);
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let format: Format = a.format.parse()?;
    let text = fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let parsed: ErrorBreakdown<f64> = bad_data(ErrorBreakdown::from_json(&text), &a.report)?;
    prepare_out(&a.out)?;
    #[derive(Serialize)]
    struct ReportConfig<'a> {
        command: &'a str,
        report: &'a Path,
        format: &'a str,
    }
    fs::write(
        a.out.join("run_config.toml"),
        toml::to_string(&ReportConfig {
            command: "report",
            report: &a.report,
            format: format.extension(),
        })?,
    )?;
    let path = write_artifact(&parsed, format, &a.out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Tune(a) => tune(a),
        Command::Litmus { which, data } => litmus(*which, data),
        Command::Attribute(a) => attribute(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            if !text.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
