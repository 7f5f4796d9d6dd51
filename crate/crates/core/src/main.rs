use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use gesture_obfuscation::data::{ingest_csv, target_lengths, write_csv, CsvSchema, Dataset};
use gesture_obfuscation::metrics::{build_cdf, Metric};
use gesture_obfuscation::pipeline::{
    evaluate_config, experiment_grid, obfuscate_dataset, train_from_raw, MetricsReport, ModelStore,
    ObfuscationConfig,
};
use gesture_obfuscation::stats::median;
use gesture_obfuscation::store::{load_store, save_store, update_store_dir};
use gesture_obfuscation::synth::{self, SynthConfig};
use gesture_obfuscation::{Error, NoiseConfig, ScaleRule};

const EXIT_IO: u8 = 3;
const EXIT_DATA: u8 = 4;
const EXIT_TRAIN: u8 = 5;
const EXIT_EVAL: u8 = 6;

#[derive(Parser)]
#[command(
    name = "gesture-obf",
    version,
    about = "Obfuscate gesture sensor time-series with forecasts and correlated noise"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a CSV dataset and print a summary.
    Ingest(IngestArgs),
    /// Preprocess, split and train clustering and forecasting models.
    Train(TrainArgs),
    /// Obfuscate every gesture of a CSV dataset with a trained store.
    Obfuscate(ObfuscateArgs),
    /// Evaluate one obfuscation setting on held-out data.
    Evaluate(EvalArgs),
    /// Run the full noise-scale and correlation-threshold sweep.
    Sweep(EvalArgs),
    /// Generate a labeled synthetic gesture dataset.
    Synth(SynthArgs),
    /// Re-emit CDF files from a saved metrics report.
    Report(ReportArgs),
    /// Retrain the users present in new data and replace the store.
    Update(UpdateArgs),
}

/// Obfuscation and preprocessing settings. Flags override `--config`, which
/// overrides the defaults shown.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML file with any of these settings, keyed by flag name.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Noise magnitude rule: sqrt2std | sqrtstd | 2std | std2 | std [default: 2std]
    #[arg(long)]
    noise_scale: Option<String>,
    /// Minimum Pearson correlation between noise and forecast, in [0.05, 0.95] [default: 0.5]
    #[arg(long)]
    corr_threshold: Option<f64>,
    /// Highest linear-prediction order tried [default: 8]
    #[arg(long)]
    max_order: Option<usize>,
    /// Noise draws per order before moving on [default: 50]
    #[arg(long)]
    max_retries: Option<usize>,
    /// Seed for splitting, clustering, fitting and noise [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Training share of each user's gestures [default: 0.8]
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Percentile of gesture lengths used as the fixed length [default: 90]
    #[arg(long)]
    percentile: Option<f64>,
    /// MAE radius counting similar gestures for information gain [default: 0.1]
    #[arg(long)]
    similarity_threshold: Option<f64>,
    /// Worker threads, 0 for all cores [default: 0]
    #[arg(long)]
    parallelism: Option<usize>,
    /// Clusters per user and feature when data has no labels [default: number of labels]
    #[arg(long)]
    clusters: Option<usize>,
    /// Also train a pooled model for users absent from the store [default: off]
    #[arg(long)]
    public_model: bool,
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    noise_scale: Option<String>,
    corr_threshold: Option<f64>,
    max_order: Option<usize>,
    max_retries: Option<usize>,
    seed: Option<u64>,
    train_fraction: Option<f64>,
    percentile: Option<f64>,
    similarity_threshold: Option<f64>,
    parallelism: Option<usize>,
    clusters: Option<usize>,
    public_model: Option<bool>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ObfuscationConfig, Failure> {
        let file: FileConfig = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
                toml::from_str(&text)
                    .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let defaults = ObfuscationConfig::default();
        let scale = self.noise_scale.clone().or(file.noise_scale);
        let scale_rule = match scale {
            Some(s) => s
                .parse::<ScaleRule>()
                .map_err(|e| Failure::usage(e.to_string()))?,
            None => defaults.noise.scale_rule,
        };
        let cfg = ObfuscationConfig {
            noise: NoiseConfig {
                scale_rule,
                tau: self
                    .corr_threshold
                    .or(file.corr_threshold)
                    .unwrap_or(defaults.noise.tau),
                max_order: self
                    .max_order
                    .or(file.max_order)
                    .unwrap_or(defaults.noise.max_order),
                max_retries: self
                    .max_retries
                    .or(file.max_retries)
                    .unwrap_or(defaults.noise.max_retries),
                seed: self.seed.or(file.seed).unwrap_or(defaults.noise.seed),
            },
            train_fraction: self
                .train_fraction
                .or(file.train_fraction)
                .unwrap_or(defaults.train_fraction),
            percentile: self
                .percentile
                .or(file.percentile)
                .unwrap_or(defaults.percentile),
            similarity_threshold: self
                .similarity_threshold
                .or(file.similarity_threshold)
                .unwrap_or(defaults.similarity_threshold),
            parallelism: self
                .parallelism
                .or(file.parallelism)
                .unwrap_or(defaults.parallelism),
            clusters: self.clusters.or(file.clusters),
            public_model: self.public_model || file.public_model.unwrap_or(false),
        };
        cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Whether a single obfuscation setting was pinned on the command line.
    fn pins_setting(&self) -> bool {
        self.noise_scale.is_some() || self.corr_threshold.is_some()
    }
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    data: PathBuf,
    /// Percentile for the reported fixed lengths.
    #[arg(long, default_value_t = 90.0)]
    percentile: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// Dataset name used in report file names [default: data file stem]
    #[arg(long)]
    name: Option<String>,
    /// Creation timestamp recorded in the store (unix seconds).
    #[arg(long, env = "SOURCE_DATE_EPOCH", default_value_t = 0)]
    created: u64,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct ObfuscateArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV, in the units of the input.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    store: PathBuf,
    /// Raw CSV to evaluate on [default: the store's held-out split]
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for reports and CDF files.
    #[arg(long, env = "GESTURE_OBF_OUT")]
    out: PathBuf,
    /// Positions at which each CDF is sampled.
    #[arg(long, default_value_t = 101)]
    cdf_points: usize,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    users: usize,
    #[arg(long, default_value_t = 4)]
    types: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 2)]
    sessions: usize,
    /// Nominal samples per gesture.
    #[arg(long, default_value_t = 64)]
    length: usize,
    /// Std of the per-sample jitter.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Metrics report JSON written by `evaluate` or `sweep`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, env = "GESTURE_OBF_OUT")]
    out: PathBuf,
    #[arg(long, default_value_t = 101)]
    cdf_points: usize,
    /// Data variant: original | forecast | obfuscated
    #[arg(long, default_value = "obfuscated")]
    variant: String,
}

#[derive(Args)]
struct UpdateArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

struct Failure {
    code: u8,
    category: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: String) -> Self {
        Failure {
            code: 2,
            category: "usage",
            message,
        }
    }

    fn io(message: String) -> Self {
        Failure {
            code: EXIT_IO,
            category: "io",
            message,
        }
    }

    /// Maps library errors, charging anything not about I/O or input data to
    /// the stage that failed.
    fn from_error(e: Error, stage_code: u8, stage: &'static str) -> Self {
        let (code, category) = match &e {
            Error::Io { .. } => (EXIT_IO, "io"),
            Error::Schema(_)
            | Error::EmptyDataset
            | Error::DegenerateFeature(_)
            | Error::Serde(_)
            | Error::Store(_) => (EXIT_DATA, "data"),
            _ => (stage_code, stage),
        };
        Failure {
            code,
            category,
            message: e.to_string(),
        }
    }
}

fn data_err(e: Error) -> Failure {
    Failure::from_error(e, EXIT_DATA, "data")
}

fn train_err(e: Error) -> Failure {
    Failure::from_error(e, EXIT_TRAIN, "training")
}

fn eval_err(e: Error) -> Failure {
    Failure::from_error(e, EXIT_EVAL, "evaluation")
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn cmd_ingest(args: &IngestArgs) -> Result<(), Failure> {
    let d = ingest_csv(&args.data, &CsvSchema::default()).map_err(data_err)?;
    let summary = serde_json::json!({
        "users": d.users().len(),
        "gestures": d.instance_count(),
        "series": d.series.len(),
        "features": d.feature_names,
        "fixed_lengths": target_lengths(&d, args.percentile),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let cfg = args.cfg.resolve()?;
    let raw = ingest_csv(&args.data, &CsvSchema::default()).map_err(data_err)?;
    let name = args.name.clone().unwrap_or_else(|| {
        args.data
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    let (mut store, split) = train_from_raw(&raw, &name, &cfg).map_err(train_err)?;
    store.created_unix = args.created;
    for w in &split.warnings {
        eprintln!("warning: {w}");
    }
    let cells = store.cluster_model_count()
        + store
            .failures
            .iter()
            .filter(|f| f.cluster.is_none())
            .count();
    eprintln!(
        "trained {} cluster models and {} forecast models over {} user/feature cells; {} failures",
        store.cluster_model_count(),
        store.forecast_model_count(),
        cells,
        store.failures.len()
    );
    for f in &store.failures {
        let cluster = f
            .cluster
            .map(|c| c.to_string())
            .unwrap_or_else(|| "-".into());
        eprintln!("  failed {}/{}/{}: {}", f.user, f.feature, cluster, f.error);
    }
    if store.forecast_model_count() == 0 {
        return Err(Failure {
            code: EXIT_TRAIN,
            category: "training",
            message: "no forecast model could be trained".into(),
        });
    }
    save_store(&store, &args.store).map_err(train_err)
}

fn load(path: &Path) -> Result<ModelStore, Failure> {
    load_store(path).map_err(data_err)
}

fn cmd_obfuscate(args: &ObfuscateArgs) -> Result<(), Failure> {
    let cfg = args.cfg.resolve()?;
    let store = load(&args.store)?;
    let raw = ingest_csv(&args.data, &CsvSchema::default()).map_err(data_err)?;
    let data = store.preprocess(&raw).map_err(data_err)?;
    let (done, failures) = obfuscate_dataset(&data, &store, &cfg).map_err(eval_err)?;
    for f in &failures {
        eprintln!(
            "warning: {}/{}/{}/{}: {}",
            f.user, f.session, f.gesture, f.feature, f.error
        );
    }
    let series = done
        .into_iter()
        .map(|(_, o)| {
            let mut s = o.series;
            if let Some(e) = store.extrema.get(&s.feature_name) {
                s.values = s.values.iter().map(|&v| e.unscale(v)).collect();
            }
            s
        })
        .collect();
    let out = Dataset {
        series,
        feature_names: data.feature_names.clone(),
        split: data.split,
    };
    let mut buf = Vec::new();
    write_csv(&out, &mut buf).map_err(data_err)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_file(&args.out, &buf)?;
    eprintln!(
        "obfuscated {} series, {} failures",
        out.series.len(),
        failures.len()
    );
    Ok(())
}

fn evaluation_data(store: &ModelStore, data: Option<&Path>) -> Result<Dataset, Failure> {
    match data {
        Some(path) => {
            let raw = ingest_csv(path, &CsvSchema::default()).map_err(data_err)?;
            store.preprocess(&raw).map_err(data_err)
        }
        None => store.holdout.clone().ok_or_else(|| Failure {
            code: EXIT_DATA,
            category: "data",
            message: "store has no held-out split; pass --data".into(),
        }),
    }
}

fn write_cdfs(
    report: &MetricsReport,
    out: &Path,
    points: usize,
    variant: &str,
) -> Result<(), Failure> {
    let metrics = match variant {
        "original" => &report.original,
        "forecast" => &report.forecast,
        "obfuscated" => &report.obfuscated,
        other => return Err(Failure::usage(format!("unknown variant `{other}`"))),
    };
    let suffix = if variant == "obfuscated" {
        String::new()
    } else {
        format!("-{variant}")
    };
    for metric in Metric::ALL {
        let values = metrics.values(metric);
        let mut text = String::from("x,fraction\n");
        for (x, f) in build_cdf(&values, points) {
            text.push_str(&format!("{x},{f}\n"));
        }
        let name = format!(
            "{}_{}_{}{suffix}.csv",
            report.dataset,
            metric.name(),
            report.label
        );
        write_file(&out.join(name), text.as_bytes())?;
    }
    Ok(())
}

fn emit_report(report: &MetricsReport, out: &Path, points: usize) -> Result<(), Failure> {
    let mut text =
        serde_json::to_string_pretty(report).map_err(|e| data_err(Error::Serde(e.to_string())))?;
    text.push('\n');
    write_file(
        &out.join(format!("{}_report_{}.json", report.dataset, report.label)),
        text.as_bytes(),
    )?;
    write_cdfs(report, out, points, "obfuscated")?;
    let t = &report.timing_seconds;
    if !t.is_empty() {
        let mut sorted = t.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let p95 = sorted[((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
        eprintln!(
            "{}: {} gestures, median {:.4}s, p95 {:.4}s, {} failures",
            report.label,
            report.gestures,
            median(t),
            p95,
            report.failures.len()
        );
    }
    Ok(())
}

fn single_label(cfg: &ObfuscationConfig) -> String {
    format!("scale-{}_tau-{}", cfg.noise.scale_rule, cfg.noise.tau)
}

fn cmd_evaluate(args: &EvalArgs, sweep: bool) -> Result<(), Failure> {
    let cfg = args.cfg.resolve()?;
    let store = load(&args.store)?;
    let data = evaluation_data(&store, args.data.as_deref())?;
    create_dir(&args.out)?;
    let grid = if sweep && !args.cfg.pins_setting() {
        experiment_grid(&cfg)
    } else {
        vec![(single_label(&cfg), cfg)]
    };
    for (label, cfg) in &grid {
        let (report, _) = evaluate_config(&data, &store, label, cfg).map_err(eval_err)?;
        emit_report(&report, &args.out, args.cdf_points)?;
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    let d = synth::generate(&SynthConfig {
        users: args.users,
        types: args.types,
        reps: args.reps,
        sessions: args.sessions,
        length: args.length,
        noise: args.noise,
        seed: args.seed,
    });
    let mut buf = Vec::new();
    write_csv(&d, &mut buf).map_err(data_err)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_file(&args.out, &buf)
}

fn cmd_report(args: &ReportArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.input)
        .map_err(|e| Failure::io(format!("{}: {e}", args.input.display())))?;
    let report: MetricsReport = serde_json::from_str(&text)
        .map_err(|e| data_err(Error::Serde(format!("{}: {e}", args.input.display()))))?;
    create_dir(&args.out)?;
    write_cdfs(&report, &args.out, args.cdf_points, &args.variant)
}

fn cmd_update(args: &UpdateArgs) -> Result<(), Failure> {
    let cfg = args.cfg.resolve()?;
    let raw = ingest_csv(&args.data, &CsvSchema::default()).map_err(data_err)?;
    let store = update_store_dir(&args.store, &raw, &cfg).map_err(train_err)?;
    eprintln!(
        "store updated: {} forecast models, {} failures",
        store.forecast_model_count(),
        store.failures.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Obfuscate(a) => cmd_obfuscate(a),
        Command::Evaluate(a) => cmd_evaluate(a, false),
        Command::Sweep(a) => cmd_evaluate(a, true),
        Command::Synth(a) => cmd_synth(a),
        Command::Report(a) => cmd_report(a),
        Command::Update(a) => cmd_update(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.category, f.message);
            ExitCode::from(f.code)
        }
    }
}
