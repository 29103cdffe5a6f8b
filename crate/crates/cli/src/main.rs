use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use canopy_cli::bench::{bench, BenchArgs};
use canopy_cli::report::{report, ReportArgs};
use canopy_cli::serve::{serve_labels, ServiceConfig};
use canopy_cli::stages::{self, *};
use canopy_cli::{run_manifest, Ctx};
use canopy_core::exec;

#[derive(Parser)]
#[command(name = "canopy", version, about = "Multispectral ALS tree-species pipeline")]
struct Cli {
    /// Master seed of every randomized stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory (default `out`; for `run`, overrides the manifest).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset directory (default `<out>/dataset`).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Import LAS 1.2 or CSV point files into canonical points.csv.
    Convert(ConvertArgs),
    /// Ground filtering, DTM, CHM, tree tops, watershed and segment extraction.
    Segment(SegmentArgs),
    /// Stratified train/test split of labels.csv.
    Split(SplitArgs),
    /// Feature table and schema for every segment.
    Featurize(FeaturizeArgs),
    /// Random forest on the training split.
    Train(TrainArgs),
    Predict(PredictArgs),
    /// Accuracy metrics, confusion matrices, breakdowns and bootstrap CIs.
    Evaluate(EvaluateArgs),
    /// Cross-validated error versus training-set size.
    SweepSize(SweepArgs),
    /// Cross-validated error versus point density.
    SweepDensity(SweepArgs),
    /// Power-law fit of a sweep and extrapolation to target errors.
    FitScaling(FitScalingArgs),
    /// Synthetic forest plot or segment set with exact truth.
    Synth(SynthArgs),
    /// Markdown and JSON summary of an output directory.
    Report(ReportArgs),
    /// Label service for the annotation UI.
    Serve(ServeArgs),
    /// Stage runtimes at several thread counts.
    Bench(BenchArgs),
    /// Run an experiment manifest.
    Run(RunArgs),
}

#[derive(Parser)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Built UI bundle served at `/`.
    #[arg(long)]
    ui: Option<PathBuf>,
    #[arg(long)]
    journal: Option<PathBuf>,
}

#[derive(Parser)]
struct RunArgs {
    manifest: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    exec::configure_global_threads(cli.jobs);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut ctx = Ctx::new(&out, cli.seed);
    if let Some(d) = &cli.dataset {
        ctx.dataset = d.clone();
    }
    let written = match &cli.command {
        Command::Convert(a) => stages::convert(&ctx, a)?,
        Command::Segment(a) => stages::segment(&ctx, a)?,
        Command::Split(a) => stages::split(&ctx, a)?,
        Command::Featurize(a) => stages::featurize(&ctx, a)?,
        Command::Train(a) => stages::train(&ctx, a)?,
        Command::Predict(a) => stages::predict(&ctx, a)?,
        Command::Evaluate(a) => stages::evaluate(&ctx, a)?,
        Command::SweepSize(a) => stages::sweep_size(&ctx, a)?,
        Command::SweepDensity(a) => stages::sweep_density_stage(&ctx, a)?,
        Command::FitScaling(a) => stages::fit_scaling(&ctx, a)?,
        Command::Synth(a) => stages::synth(&ctx, a)?,
        Command::Report(a) => report(&ctx, a)?,
        Command::Bench(a) => bench(&ctx, a)?,
        Command::Serve(a) => {
            let cfg = ServiceConfig {
                dataset: cli.dataset.clone().unwrap_or(out),
                journal: a.journal.clone(),
                ui_dir: a.ui.clone(),
            };
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(serve_labels(cfg, SocketAddr::new(a.host, a.port)))?;
            Vec::new()
        }
        Command::Run(a) => {
            let summary = run_manifest(&a.manifest, cli.out.as_deref())?;
            for t in &summary.timings {
                println!("{:<14} {:>9.3} s", t.stage, t.seconds);
            }
            vec![summary.out]
        }
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
