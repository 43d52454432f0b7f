//! `headsmith` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use headsmith_core::avt::{self, FitOptions, VarianceSelector};
use headsmith_core::imgprep::{self, PrepOp, DEFAULT_NEGATIVE_MARGIN};
use headsmith_core::io::{read_json, write_json};
use headsmith_core::metrics::Average;
use headsmith_core::nas::{self, SearchConfig, SearchSpace, Strategy};
use headsmith_core::nnet::TrainedModel;
use headsmith_core::pipeline::{self, ExperimentConfig, SplitFractions};
use headsmith_core::synth::{self, BlobConfig};
use headsmith_core::{Error, FeatureMatrix};

#[derive(Parser)]
#[command(name = "headsmith", version, about = "Variance-thresholded feature pruning and classifier-head search")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment (baseline + AVT conditions) from a JSON config.
    Run(RunArgs),
    /// Fit a variance selector on a feature CSV.
    AvtFit(AvtFitArgs),
    /// Apply a fitted selector to a feature CSV.
    AvtApply(AvtApplyArgs),
    /// Search classifier-head architectures on train/validation CSVs.
    Nas(NasArgs),
    /// Evaluate a saved model on a labelled feature CSV.
    Evaluate(EvaluateArgs),
    /// Split a feature CSV patient-wise into train/val/test CSVs.
    Split(SplitArgs),
    /// Batch image preprocessing on a directory of PGM files.
    Prep(PrepArgs),
    /// Generate a synthetic feature CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    max_trials: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    average: Option<String>,
    #[arg(long)]
    variance_ddof: Option<usize>,
    /// Comma-separated percentiles, e.g. `1.5,50,98.5`.
    #[arg(long)]
    percentiles: Option<String>,
    #[arg(long)]
    no_baseline: bool,
    #[arg(long)]
    drop_constant: bool,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    stop_after: Option<usize>,
    /// Comma-separated train,val,test fractions.
    #[arg(long)]
    fractions: Option<String>,
    /// Run only this condition (repeatable), e.g. `--only high`.
    #[arg(long)]
    only: Vec<String>,
}

#[derive(Args)]
struct AvtFitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    percentile: f64,
    #[arg(long, default_value_t = 0)]
    variance_ddof: usize,
    /// Drop zero-variance features even when the threshold is zero.
    #[arg(long)]
    drop_constant: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AvtApplyArgs {
    #[arg(long)]
    selector: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NasArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long, default_value_t = nas::DEFAULT_MAX_TRIALS)]
    max_trials: usize,
    #[arg(long, default_value_t = nas::DEFAULT_MAX_EPOCHS)]
    max_epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long, default_value = "random")]
    strategy: String,
    /// Stop after this many consecutive non-improving trials.
    #[arg(long)]
    stop_after: Option<usize>,
    /// JSON file overriding the default search space.
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Selector to apply to the data before evaluation.
    #[arg(long)]
    selector: Option<PathBuf>,
    #[arg(long, default_value = "macro")]
    average: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated train,val,test fractions.
    #[arg(long, default_value = "0.70,0.15,0.15")]
    fractions: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrepKind {
    Equalize,
    Mirror,
    Negatives,
}

#[derive(Args)]
struct PrepArgs {
    #[arg(value_enum)]
    op: PrepKind,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NEGATIVE_MARGIN)]
    margin: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Separable Gaussian blobs.
    Blobs,
    /// Features with pairwise-distinct variances.
    Distinct,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(value_enum)]
    kind: SynthKind,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 62)]
    features: usize,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    patients: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Csv(_) | Error::Io { .. } | Error::Json(_) => 3,
        Error::Shape(_) | Error::Argument(_) => 4,
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_average(s: &str) -> Result<Average, Error> {
    s.parse().map_err(|e: Error| config_err(e.to_string()))
}

fn parse_list(s: &str, flag: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| config_err(format!("cannot parse {flag} value {s:?}")))
}

fn parse_fractions(s: &str) -> Result<SplitFractions, Error> {
    let [train, val, test] = parse_list(s, "--fractions")?[..] else {
        return Err(config_err("--fractions needs exactly three values"));
    };
    Ok(SplitFractions { train, val, test })
}

fn run(args: RunArgs) -> Result<u8, Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    // Relative paths in the config resolve against the config's directory.
    let base = args.config.parent().unwrap_or(Path::new("")).to_path_buf();
    if cfg.feature_csv.is_relative() {
        cfg.feature_csv = base.join(&cfg.feature_csv);
    }
    if cfg.output_dir.is_relative() {
        cfg.output_dir = base.join(&cfg.output_dir);
    }
    if let Some(v) = args.features {
        cfg.feature_csv = v;
    }
    if let Some(v) = args.out {
        cfg.output_dir = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.max_trials {
        cfg.max_trials = v;
    }
    if let Some(v) = args.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.parallel {
        cfg.parallel = v;
    }
    if let Some(v) = args.average {
        cfg.average = parse_average(&v)?;
    }
    if let Some(v) = args.variance_ddof {
        cfg.variance_ddof = v;
    }
    if let Some(v) = args.percentiles {
        cfg.percentiles = parse_list(&v, "--percentiles")?;
    }
    if args.no_baseline {
        cfg.include_baseline = false;
    }
    if args.drop_constant {
        cfg.drop_constant = true;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.patience {
        cfg.patience = v;
    }
    if let Some(v) = args.stop_after {
        cfg.stop_after_non_improving = Some(v);
    }
    if let Some(v) = args.fractions {
        cfg.split = parse_fractions(&v)?;
    }
    if !args.only.is_empty() {
        cfg.only = Some(args.only);
    }
    let outcome = pipeline::run_experiment(&cfg)?;
    let reports = outcome.reports();
    if !reports.is_empty() {
        println!("{}", pipeline::render_comparison(&reports));
    }
    let failures = outcome.failures();
    for (name, err) in &failures {
        eprintln!("condition {name} failed: {err}");
    }
    Ok(if failures.is_empty() { 0 } else { 4 })
}

fn avt_fit(args: AvtFitArgs) -> Result<u8, Error> {
    if !(0.0..=100.0).contains(&args.percentile) {
        return Err(config_err(format!("percentile {} outside [0, 100]", args.percentile)));
    }
    if args.variance_ddof > 1 {
        return Err(config_err("--variance-ddof must be 0 or 1"));
    }
    let data = FeatureMatrix::read_csv(&args.data)?;
    let options = FitOptions {
        ddof: args.variance_ddof,
        drop_constant: args.drop_constant,
    };
    let sel = avt::fit_with(&data, args.percentile, options)?;
    write_json(&args.out, &sel)?;
    println!(
        "percentile {}: threshold {:e}, kept {} of {} features",
        sel.percentile,
        sel.threshold,
        sel.kept_width(),
        sel.width
    );
    Ok(0)
}

fn avt_apply(args: AvtApplyArgs) -> Result<u8, Error> {
    let sel: VarianceSelector = read_json(&args.selector)?;
    sel.validate()?;
    let data = FeatureMatrix::read_csv(&args.data)?;
    sel.transform(&data)?.write_csv(&args.out)?;
    Ok(0)
}

fn nas_cmd(args: NasArgs) -> Result<u8, Error> {
    let strategy: Strategy = args.strategy.parse()?;
    let space = match &args.space {
        Some(p) => read_json::<SearchSpace>(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?,
        None => SearchSpace::default(),
    };
    let train = FeatureMatrix::read_csv(&args.train)?;
    let val = FeatureMatrix::read_csv(&args.val)?;
    let cfg = SearchConfig {
        max_trials: args.max_trials,
        max_epochs: args.max_epochs,
        seed: args.seed,
        parallel: args.parallel,
        stop_after_non_improving: args.stop_after,
        strategy,
        ..SearchConfig::default()
    };
    let result = nas::search(&train, &val, &space, &cfg)?;
    let table = nas::export_architecture(&result);
    std::fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    headsmith_core::io::write_atomic(&args.out.join("trials.jsonl"), result.trials_jsonl()?.as_bytes())?;
    result.best_model.save(&args.out.join("model.json"))?;
    let best = result.best_trial();
    let summary = serde_json::json!({
        "best_trial_index": result.best_trial_index,
        "val_accuracy": best.val_accuracy,
        "architecture": best.architecture,
        "config": best.config,
        "table": table,
    });
    write_json(&args.out.join("result.json"), &summary)?;
    headsmith_core::io::write_atomic(&args.out.join("table.txt"), table.to_string().as_bytes())?;
    println!("best trial {} (val accuracy {:.4})\n{table}", result.best_trial_index, best.val_accuracy);
    Ok(0)
}

fn evaluate(args: EvaluateArgs) -> Result<u8, Error> {
    let average = parse_average(&args.average)?;
    let model = TrainedModel::load(&args.model)?;
    let mut data = FeatureMatrix::read_csv(&args.data)?;
    if let Some(p) = &args.selector {
        let sel: VarianceSelector = read_json(p)?;
        sel.validate()?;
        data = sel.transform(&data)?;
    }
    if let Some(&y) = data.labels().iter().find(|&&y| y >= model.spec.num_classes) {
        return Err(Error::Data(format!("label {y} out of range for a {}-class model", model.spec.num_classes)));
    }
    let report = pipeline::evaluate(&model, &data, model.spec.num_classes, average)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    print!("{}", report.to_text());
    Ok(0)
}

fn split(args: SplitArgs) -> Result<u8, Error> {
    let fractions = parse_fractions(&args.fractions)?;
    fractions.validate()?;
    let data = FeatureMatrix::read_csv(&args.data)?;
    let plan = pipeline::patient_split(&data, fractions, args.seed)?;
    let s = plan.apply(&data)?;
    s.train.write_csv(args.out.join("train.csv"))?;
    s.val.write_csv(args.out.join("val.csv"))?;
    s.test.write_csv(args.out.join("test.csv"))?;
    write_json(&args.out.join("split.json"), &plan)?;
    let [a, b, c] = plan.patient_counts();
    println!(
        "patients {a}/{b}/{c}, samples {}/{}/{}",
        s.train.len(),
        s.val.len(),
        s.test.len()
    );
    Ok(0)
}

fn prep(args: PrepArgs) -> Result<u8, Error> {
    let op = match args.op {
        PrepKind::Equalize => PrepOp::Equalize,
        PrepKind::Mirror => PrepOp::Mirror,
        PrepKind::Negatives => {
            if !(args.margin > 0.0) {
                return Err(config_err("--margin must be positive"));
            }
            PrepOp::Negatives { margin: args.margin }
        }
    };
    let manifest = imgprep::process_dir(op, &args.input, &args.out)?;
    println!(
        "{} images processed, {} changed, {} flagged",
        manifest.files.len(),
        manifest.changed.len(),
        manifest.flagged.len()
    );
    Ok(0)
}

fn synth_cmd(args: SynthArgs) -> Result<u8, Error> {
    let data = match args.kind {
        SynthKind::Blobs => synth::gaussian_blobs(&BlobConfig {
            classes: args.classes,
            features: args.features,
            samples: args.samples,
            patients: args.patients,
            seed: args.seed,
            ..BlobConfig::default()
        }),
        SynthKind::Distinct => synth::distinct_variance_matrix(args.features, args.samples, args.classes, args.seed),
    }
    .map_err(|e| config_err(e.to_string()))?;
    data.write_csv(&args.out)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::AvtFit(a) => avt_fit(a),
        Command::AvtApply(a) => avt_apply(a),
        Command::Nas(a) => nas_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Split(a) => split(a),
        Command::Prep(a) => prep(a),
        Command::Synth(a) => synth_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
