use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use specdetect::backend::{open_backend, BackendKind};
use specdetect::config::{ConfigLayer, RunConfig, BUNDLE_ENV};
use specdetect::detector::{score_batch, ScoreLine};
use specdetect::eval::report::{robustness_csv, sweep_csv, write_json, write_roc_csvs};
use specdetect::eval::{
    bench_runtime, evaluate, robustness_grid, sweep, CorruptionSpec, EvalOptions, SweepAxis,
};
use specdetect::fixture::{write_fixture, FixtureSpec};
use specdetect::image::ResizeFilter;
use specdetect::manifest::{load_manifest, DatasetManifest, Label, ManifestEntry};
use specdetect::Error;

const DEFAULT_OUT: &str = "specdetect-out";

/// Exit status per error class; stable across releases.
mod exit {
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const IO: u8 = 3;
    pub const EMPTY_CLASS: u8 = 4;
}

#[derive(Parser)]
#[command(
    name = "specdetect",
    version,
    about = "Training-free generated-image detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score images given as paths or through --manifest.
    Score {
        #[command(flatten)]
        run: RunArgs,
        images: Vec<PathBuf>,
    },
    /// Per-generator AUC, ROC curves and their average.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate under image corruptions.
    Robustness {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated kind:level pairs; defaults to every kind at levels 1-3.
        #[arg(long, value_delimiter = ',')]
        corruptions: Vec<String>,
    },
    /// Vary lambda, patch size or layer, holding the rest fixed.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Time perturbation, embedding and scoring.
    Bench {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write the synthetic real/low-passed fixture and its manifest.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = FixtureSpec::default().seed)]
        fixture_seed: u64,
        #[arg(long, default_value_t = 224)]
        size: usize,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON config file; keys are the long flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    target_size: Option<usize>,
    #[arg(long, value_enum)]
    resize_filter: Option<FilterArg>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum BackendArg {
    Spectral,
    Vit,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FilterArg {
    Bilinear,
    Bicubic,
}

impl RunArgs {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            manifest: self.manifest.clone(),
            backend: self.backend.map(|b| match b {
                BackendArg::Spectral => BackendKind::Spectral,
                BackendArg::Vit => BackendKind::Vit,
            }),
            bundle: self.bundle.clone(),
            layer: self.layer,
            lambda: self.lambda,
            tau: self.tau,
            patch_size: self.patch_size,
            batch_size: self.batch_size,
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
            target_size: self.target_size,
            resize_filter: self.resize_filter.map(|f| match f {
                FilterArg::Bilinear => ResizeFilter::Bilinear,
                FilterArg::Bicubic => ResizeFilter::Bicubic,
            }),
        }
    }

    fn resolve(&self) -> Result<RunConfig, Error> {
        let file = match &self.config {
            Some(path) => ConfigLayer::from_file(path).map_err(|e| match e {
                Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
                other => other,
            })?,
            None => ConfigLayer::default(),
        };
        let env_bundle = std::env::var_os(BUNDLE_ENV).map(PathBuf::from);
        RunConfig::resolve(&[&file, &self.layer()], env_bundle)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::LayerOutOfRange { .. } | Error::Unsupported(_) => exit::CONFIG,
        Error::Io(_)
        | Error::Json(_)
        | Error::Decode { .. }
        | Error::UnsupportedFormat(_)
        | Error::Parse { .. }
        | Error::EmptyManifest(_)
        | Error::BundleLoad { .. }
        | Error::Encode(_) => exit::IO,
        Error::EmptyClass(_) => exit::EMPTY_CLASS,
        _ => exit::FAILURE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn require_manifest(cfg: &RunConfig) -> Result<DatasetManifest, Error> {
    let path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("--manifest is required".into()))?;
    load_manifest(path)
}

/// Resolves the output directory, defaulting it so the echoed config is complete.
fn with_out_dir(mut cfg: RunConfig) -> Result<(RunConfig, PathBuf), Error> {
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&out)?;
    cfg.out = Some(out.clone());
    Ok((cfg, out))
}

fn write_run_json(out: &Path, cfg: &RunConfig) -> Result<(), Error> {
    write_json(&out.join("run.json"), cfg, &serde_json::Value::Null)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Score { run, images } => cmd_score(&run, images),
        Command::Evaluate { run } => cmd_evaluate(&run),
        Command::Robustness { run, corruptions } => cmd_robustness(&run, &corruptions),
        Command::Sweep { run, axis, values } => cmd_sweep(&run, &axis, &values),
        Command::Bench { run } => cmd_bench(&run),
        Command::Fixture {
            out,
            count,
            fixture_seed,
            size,
        } => {
            let spec = FixtureSpec {
                size,
                seed: fixture_seed,
                ..Default::default()
            };
            let path = write_fixture(&out, &spec, count)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn cmd_score(args: &RunArgs, images: Vec<PathBuf>) -> Result<(), Error> {
    let cfg = args.resolve()?;
    let manifest = match (&cfg.manifest, images.is_empty()) {
        (Some(_), true) => require_manifest(&cfg)?,
        (None, false) => DatasetManifest::new(
            images
                .into_iter()
                .map(|path| ManifestEntry {
                    path,
                    label: Label::Real,
                    generator: String::new(),
                })
                .collect(),
        ),
        (Some(_), false) => {
            return Err(Error::Config(
                "pass either image paths or --manifest, not both".into(),
            ))
        }
        (None, true) => return Err(Error::Config("no images to score".into())),
    };
    let labelled = cfg.manifest.is_some();
    let backend = open_backend(&cfg.backend_descriptor())?;
    let lines = score_batch(
        &manifest,
        &cfg.perturb_config(),
        backend.backend(),
        &cfg.score_options(),
    )?;

    let mut text = String::new();
    for line in &lines {
        let line = match line {
            ScoreLine::Scored(r) if !labelled => ScoreLine::Scored(specdetect::ScoreRecord {
                label: None,
                generator: None,
                ..r.clone()
            }),
            other => other.clone(),
        };
        text.push_str(&serde_json::to_string(&line)?);
        text.push('\n');
    }
    match &cfg.out {
        Some(out) => {
            fs::create_dir_all(out)?;
            fs::write(out.join("scores.jsonl"), text)?;
            write_run_json(out, &cfg)?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn eval_options(cfg: &RunConfig) -> EvalOptions {
    EvalOptions {
        score: cfg.score_options(),
        record_runtime: false,
    }
}

fn cmd_evaluate(args: &RunArgs) -> Result<(), Error> {
    let (cfg, out) = with_out_dir(args.resolve()?)?;
    let manifest = require_manifest(&cfg)?;
    let backend = open_backend(&cfg.backend_descriptor())?;
    let report = evaluate(
        &manifest,
        &cfg.perturb_config(),
        &backend,
        &eval_options(&cfg),
    )?;
    write_json(&out.join("report.json"), &cfg, &report)?;
    write_roc_csvs(&out.join("roc"), &report)?;
    write_run_json(&out, &cfg)?;
    for (g, a) in &report.per_generator_auc {
        eprintln!("auc[{g}]={a}");
    }
    println!("average_auc={}", report.average_auc);
    Ok(())
}

#[derive(Serialize)]
struct RobustnessEntry<'a> {
    corruption: &'a CorruptionSpec,
    report: &'a specdetect::eval::EvalReport,
}

fn cmd_robustness(args: &RunArgs, corruptions: &[String]) -> Result<(), Error> {
    let (cfg, out) = with_out_dir(args.resolve()?)?;
    let specs = if corruptions.is_empty() {
        CorruptionSpec::standard_grid()
    } else {
        corruptions
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<CorruptionSpec>, Error>>()?
    };
    let manifest = require_manifest(&cfg)?;
    let backend = open_backend(&cfg.backend_descriptor())?;
    let rows = robustness_grid(
        &manifest,
        &cfg.perturb_config(),
        &backend,
        &eval_options(&cfg),
        &specs,
    )?;
    fs::write(out.join("robustness.csv"), robustness_csv(&rows))?;
    let entries: Vec<RobustnessEntry> = rows
        .iter()
        .map(|(corruption, report)| RobustnessEntry { corruption, report })
        .collect();
    write_json(&out.join("robustness.json"), &cfg, &entries)?;
    write_run_json(&out, &cfg)?;
    for (spec, report) in &rows {
        println!(
            "{}:{} average_auc={}",
            spec.kind, spec.level, report.average_auc
        );
    }
    Ok(())
}

fn cmd_sweep(args: &RunArgs, axis: &str, values: &[f64]) -> Result<(), Error> {
    let axis: SweepAxis = axis.parse()?;
    let (cfg, out) = with_out_dir(args.resolve()?)?;
    let manifest = require_manifest(&cfg)?;
    let backend = open_backend(&cfg.backend_descriptor())?;
    let rows = sweep(
        &manifest,
        &cfg.perturb_config(),
        &backend,
        &eval_options(&cfg),
        axis,
        values,
    )?;
    fs::write(
        out.join(format!("sweep_{axis}.csv")),
        sweep_csv(axis, &rows),
    )?;
    write_json(&out.join(format!("sweep_{axis}.json")), &cfg, &rows)?;
    write_run_json(&out, &cfg)?;
    for r in &rows {
        println!("{axis}={} average_auc={}", r.value, r.average_auc);
    }
    Ok(())
}

fn cmd_bench(args: &RunArgs) -> Result<(), Error> {
    let (cfg, out) = with_out_dir(args.resolve()?)?;
    let manifest = require_manifest(&cfg)?;
    let backend = open_backend(&cfg.backend_descriptor())?;
    let report = bench_runtime(
        &manifest,
        &cfg.perturb_config(),
        &backend,
        &cfg.score_options(),
    )?;
    write_json(&out.join("bench.json"), &cfg, &report)?;
    write_run_json(&out, &cfg)?;
    if report.empty {
        println!("runtime_seconds=0 images=0 (empty)");
    } else {
        println!(
            "runtime_seconds={} per_image_seconds={} images={} batch_size={}",
            report.total_seconds, report.per_image_seconds, report.images, report.batch_size
        );
    }
    Ok(())
}
