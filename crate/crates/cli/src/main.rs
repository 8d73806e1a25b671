use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tacfuse_core::classifier::{train_contact_classifier, SvmModel, TrainOptions, TrainingSummary};
use tacfuse_core::config::SystemConfig;
use tacfuse_core::metrics::{compute_metrics, ModeSummary};
use tacfuse_core::pipeline::io::{read_estimates, read_timing, write_estimates, write_timing, EstimateFile, EstimateHeader, ESTIMATE_SCHEMA_VERSION};
use tacfuse_core::pipeline::{run_batch, CfSource, Mode};
use tacfuse_core::report::{self, RunSummary};
use tacfuse_core::simulator::io::{file_hash, DatasetHeader};
use tacfuse_core::simulator::{read_dataset, simulate_batch, write_dataset, Dataset, GridKind};
use tacfuse_core::Error;

#[derive(Parser)]
#[command(name = "tacfuse", version, about = "Tactile-visual pose estimation for suction-held insertion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a train or test batch of insertion trials.
    Simulate {
        #[arg(long)]
        kind: GridKind,
        #[arg(long, default_value = "rect")]
        object: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// System config TOML (replaces the built-in one for --object).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the contact-formation classifier with a CV grid search.
    TrainCf {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        object: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Grid as `C1,C2,..:G1,G2,..` (defaults from the config).
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        out_model: PathBuf,
        /// Training summary JSON (defaults to the model path with `.summary.json`).
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Held-out dataset for test accuracy and the confusion matrix.
        #[arg(long)]
        test_data: Option<PathBuf>,
        /// Write a learning-curve CSV here.
        #[arg(long)]
        learning_curve: Option<PathBuf>,
        /// Learning-curve sizes; `full` stands for every contact sample.
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000,16000,full")]
        lc_sizes: Vec<String>,
    },
    /// Run the estimator over every trial of a dataset.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        /// Classifier model JSON; required unless --oracle-cf.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Use ground-truth contact formations instead of the classifier.
        #[arg(long)]
        oracle_cf: bool,
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compute metrics and write the report tables.
    Report {
        #[arg(long, num_args = 1..)]
        estimates: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        truth: Vec<PathBuf>,
        /// Training summaries written by train-cf.
        #[arg(long, num_args = 1..)]
        classifier: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(Error::Json(e))
    }
}

type Outcome = Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotSpd | Error::Singular { .. } | Error::ContactSolver => 3,
        _ => 2,
    }
}

/// Attaches the path to I/O failures.
fn at<T>(p: &Path, r: tacfuse_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        Error::Io(io) => Failure::Core(Error::Dataset(format!("{}: {io}", p.display()))),
        e => Failure::Core(e),
    })
}

fn load_config(object: &str, path: Option<&Path>) -> Result<SystemConfig, Failure> {
    match path {
        Some(p) => Ok(SystemConfig::load(p)?),
        None => SystemConfig::builtin(object).map_err(|_| Failure::Usage(format!("unknown object {object:?}, expected rect or ellip"))),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("bad grid value {v:?}"))))
        .collect()
}

fn simulate(kind: GridKind, object: &str, out: &Path, seed: u64, config: Option<&Path>) -> Outcome {
    let cfg = load_config(object, config)?;
    let geom = cfg.geometry()?;
    let trials = simulate_batch(kind, &cfg.simulator, &geom, seed);
    let records: usize = trials.iter().map(|t| t.record_count()).sum();
    let duration: f64 = trials.iter().map(|t| t.duration()).sum();
    let invalid = trials.iter().filter(|t| !t.valid).count();
    let data = Dataset { header: DatasetHeader::new(kind, seed, cfg.simulator, geom, trials.len()), trials };
    write_dataset(&data, out)?;
    println!(
        "{} trials ({} invalid), {} records, {:.1} s total, sha256 {}",
        data.trials.len(),
        invalid,
        records,
        duration,
        file_hash(out)?
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_cf(
    data: &Path,
    object: Option<&str>,
    config: Option<&Path>,
    grid: Option<&str>,
    folds: Option<usize>,
    out_model: &Path,
    summary: Option<&Path>,
    test_data: Option<&Path>,
    learning_curve: Option<&Path>,
    lc_sizes: &[String],
) -> Outcome {
    if folds.is_some_and(|k| k < 2) {
        return Err(Failure::Usage("--folds must be at least 2".into()));
    }
    let ds = at(data, read_dataset(data))?;
    let geom = ds.header.geometry.clone();
    if let Some(o) = object {
        if o != geom.name {
            return Err(Failure::Usage(format!("--object {o} but the dataset holds {}", geom.name)));
        }
    }
    let cfg = load_config(&geom.name, config)?;
    let mut opts = TrainOptions::from_config(&cfg.classifier);
    if let Some(k) = folds {
        opts.folds = k;
    }
    if let Some(g) = grid {
        let (c, gamma) = g
            .split_once(':')
            .ok_or_else(|| Failure::Usage("--grid expects C1,C2,..:G1,G2,..".into()))?;
        opts.grid_c = parse_list(c)?;
        opts.grid_gamma = parse_list(gamma)?;
    }
    if learning_curve.is_some() {
        let sizes = lc_sizes
            .iter()
            .map(|s| match s.as_str() {
                "full" => Ok(usize::MAX),
                v => v.parse::<usize>().map_err(|_| Failure::Usage(format!("bad learning-curve size {v:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        opts.learning_curve_sizes = Some(sizes);
    }
    let test = match test_data {
        Some(p) => {
            let t = at(p, read_dataset(p))?;
            if t.header.registry_hash != ds.header.registry_hash {
                return Err(Failure::Core(Error::Dataset("test data uses a different CF registry".into())));
            }
            Some(t)
        }
        None => None,
    };
    let out = train_contact_classifier(
        &ds.trials,
        test.as_ref().map(|t| t.trials.as_slice()),
        &geom,
        &cfg.classifier,
        &opts,
        file_hash(data)?,
    )?;
    std::fs::write(out_model, out.model.to_json()? + "\n")?;
    let summary_path = summary.map(Path::to_path_buf).unwrap_or_else(|| out_model.with_extension("summary.json"));
    std::fs::write(&summary_path, serde_json::to_string_pretty(&out.summary)? + "\n")?;
    if let (Some(p), Some(curve)) = (learning_curve, &out.summary.learning_curve) {
        std::fs::write(p, report::learning_curve_csv(curve))?;
    }
    let s = &out.summary;
    println!(
        "C={} gamma={} cv accuracy {:.1}% (all samples {:.1}%){}",
        s.c,
        s.gamma,
        100.0 * s.cv_accuracy,
        100.0 * s.cv_accuracy_ungated,
        s.test_accuracy.map_or(String::new(), |a| format!(", test {:.1}%", 100.0 * a))
    );
    Ok(())
}

fn estimate(data: &Path, model: Option<&Path>, oracle: bool, mode: Mode, out: &Path, config: Option<&Path>) -> Outcome {
    let (model, model_hash) = match (model, oracle) {
        (Some(_), true) => return Err(Failure::Usage("--model and --oracle-cf are exclusive".into())),
        (None, false) => return Err(Failure::Usage("--model is required unless --oracle-cf is given".into())),
        (Some(p), false) => {
            let text = at(p, std::fs::read_to_string(p).map_err(Error::Io))?;
            (Some(SvmModel::from_json(&text)?), Some(file_hash(p)?))
        }
        (None, true) => (None, None),
    };
    let ds = at(data, read_dataset(data))?;
    let geom = &ds.header.geometry;
    let cfg = load_config(&geom.name, config)?;
    let source = match &model {
        Some(m) => CfSource::Classifier(m),
        None => CfSource::Truth,
    };
    let (trials, timing) = run_batch(&ds.trials, geom, &cfg.estimator, mode, source)?;
    let header = EstimateHeader {
        schema_version: ESTIMATE_SCHEMA_VERSION,
        mode,
        geometry: geom.name.clone(),
        registry_hash: geom.registry.hash(),
        dataset_hash: file_hash(data)?,
        model_hash,
        trials: trials.len(),
    };
    write_estimates(&EstimateFile { header, trials }, out)?;
    write_timing(&timing, &timing_path(out))?;
    println!(
        "{} steps, mean {:.2} ms, p99 {:.2} ms, max {:.2} ms, {} ticks dropped their contact factor",
        timing.steps, timing.mean_ms, timing.p99_ms, timing.max_ms, timing.dropped_c_factor_ticks
    );
    Ok(())
}

fn timing_path(estimates: &Path) -> PathBuf {
    estimates.with_extension("timing.json")
}

fn report_cmd(estimates: &[PathBuf], truth: &[PathBuf], classifier: &[PathBuf], out_dir: &Path) -> Outcome {
    if estimates.is_empty() {
        return Err(Failure::Usage("no estimate files given".into()));
    }
    let mut datasets = Vec::new();
    for p in truth {
        datasets.push((at(p, file_hash(p))?, at(p, read_dataset(p))?));
    }
    let mut runs: Vec<RunSummary> = Vec::new();
    for p in estimates {
        let est = at(p, read_estimates(p))?;
        let (_, ds) = datasets
            .iter()
            .find(|(h, _)| *h == est.header.dataset_hash)
            .ok_or_else(|| Error::Dataset(format!("no --truth dataset matches {}", p.display())))?;
        if est.trials.len() != ds.trials.len() {
            return Err(Error::Dataset(format!("{} has {} trials, truth has {}", p.display(), est.trials.len(), ds.trials.len())).into());
        }
        let metrics = est
            .trials
            .iter()
            .zip(&ds.trials)
            .map(|(e, t)| compute_metrics(e, t))
            .collect::<Result<Vec<_>, _>>()?;
        if runs.iter().any(|r| r.geometry == est.header.geometry && r.mode == est.header.mode) {
            return Err(Failure::Usage(format!("two estimate files for {} / {}", est.header.geometry, est.header.mode)));
        }
        runs.push(RunSummary {
            geometry: est.header.geometry.clone(),
            mode: est.header.mode,
            trials: metrics.len(),
            metrics: ModeSummary::from_trials(&metrics),
            timing: at(&timing_path(p), read_timing(&timing_path(p)))?,
        });
    }
    let classifiers = classifier
        .iter()
        .map(|p| Ok(serde_json::from_str::<TrainingSummary>(&at(p, std::fs::read_to_string(p).map_err(Error::Io))?)?))
        .collect::<Result<Vec<_>, Failure>>()?;

    std::fs::create_dir_all(out_dir)?;
    let of = |g: &str| runs.iter().filter(|r| r.geometry == g).collect::<Vec<_>>();
    let (rect, ellip) = (of("rect"), of("ellip"));
    if !rect.is_empty() {
        std::fs::write(out_dir.join("table2.csv"), report::pose_table_csv(&rect))?;
        std::fs::write(out_dir.join("table3.csv"), report::contact_point_table_csv(&rect))?;
    }
    if !ellip.is_empty() {
        std::fs::write(out_dir.join("table4.csv"), report::pose_table_csv(&ellip))?;
    }
    let primary = classifiers.iter().find(|c| c.geometry == "rect").or(classifiers.first());
    if let Some(c) = primary {
        std::fs::write(out_dir.join("confusion.csv"), report::confusion_csv(&c.labels, &c.confusion))?;
    }
    for c in &classifiers {
        std::fs::write(out_dir.join(format!("confusion_{}.csv", c.geometry)), report::confusion_csv(&c.labels, &c.confusion))?;
    }
    let curve = primary
        .and_then(|c| c.learning_curve.as_ref())
        .or_else(|| classifiers.iter().find_map(|c| c.learning_curve.as_ref()));
    if let Some(lc) = curve {
        std::fs::write(out_dir.join("learning_curve.csv"), report::learning_curve_csv(lc))?;
    }
    std::fs::write(out_dir.join("runtime.json"), report::runtime_json(&runs, &classifiers)?)?;
    std::fs::write(out_dir.join("summary.md"), report::markdown_summary(&runs, &classifiers))?;
    println!("{} estimation runs, {} classifiers -> {}", runs.len(), classifiers.len(), out_dir.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate { kind, object, out, seed, config } => simulate(kind, &object, &out, seed, config.as_deref()),
        Command::TrainCf { data, object, config, grid, folds, out_model, summary, test_data, learning_curve, lc_sizes } => train_cf(
            &data,
            object.as_deref(),
            config.as_deref(),
            grid.as_deref(),
            folds,
            &out_model,
            summary.as_deref(),
            test_data.as_deref(),
            learning_curve.as_deref(),
            &lc_sizes,
        ),
        Command::Estimate { data, model, oracle_cf, mode, out, config } => {
            estimate(&data, model.as_deref(), oracle_cf, mode, &out, config.as_deref())
        }
        Command::Report { estimates, truth, classifier, out_dir } => report_cmd(&estimates, &truth, &classifier, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
