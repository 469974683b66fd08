use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use recaudit::commands::Runner;
use recaudit::manifest::RunManifest;
use recaudit::ml1m::prepare_ml1m;
use recaudit::report::cmd_report;

/// Batch audit of how recommendation algorithms treat age-defined user
/// groups: genre-preference deviation exploration plus a full recommender
/// experiment with per-group significance testing.
#[derive(Parser)]
#[command(name = "recaudit", version, about)]
struct Cli {
    /// Cap on worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the raw dataset into a canonical log with a drop report.
    Ingest(ManifestArg),
    /// Sample users from the ingested log (stratified, capped, windowed).
    Sample(ManifestArg),
    /// Binarize, k-core filter, split, and derive the Child Set.
    Preprocess(ManifestArg),
    /// Preference deviation exploration: AGP/IGD/APD tables, popularity
    /// extension, and per-genre significance.
    Explore(ManifestArg),
    /// Train, tune, recommend, and evaluate all recommenders on the General
    /// and Child sets.
    RsExperiment(ManifestArg),
    /// Recompute significance annotations from persisted per-user metrics.
    Stats(ManifestArg),
    /// Merge a run directory into one validated report bundle.
    Report {
        /// Run directory (defaults to the manifest's output dir).
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Generate a synthetic dataset in the canonical ingest formats.
    Synth(ManifestArg),
    /// Convert a MovieLens-1M release directory into the input schemas.
    PrepareMl1m {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        dest: PathBuf,
    },
}

#[derive(clap::Args)]
struct ManifestArg {
    /// Path to the run manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
}

fn runner(arg: &ManifestArg) -> anyhow::Result<Runner> {
    let manifest = RunManifest::load(&arg.manifest)?;
    Runner::new(manifest)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.workers > 0 {
        // Ignore the error when a pool already exists (tests, repeat calls).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global();
    }
    match &cli.command {
        Command::Ingest(arg) => runner(arg)?.cmd_ingest().map(|_| ()),
        Command::Sample(arg) => runner(arg)?.cmd_sample().map(|_| ()),
        Command::Preprocess(arg) => runner(arg)?.cmd_preprocess().map(|_| ()),
        Command::Explore(arg) => runner(arg)?.cmd_explore().map(|_| ()),
        Command::RsExperiment(arg) => runner(arg)?.cmd_rs_experiment().map(|_| ()),
        Command::Stats(arg) => runner(arg)?.cmd_stats().map(|_| ()),
        Command::Report { run_dir, manifest } => {
            let dir = match (run_dir, manifest) {
                (Some(dir), _) => dir.clone(),
                (None, Some(path)) => RunManifest::load(path)?.output.dir,
                (None, None) => anyhow::bail!("report needs --run-dir or --manifest"),
            };
            cmd_report(&dir)
        }
        Command::Synth(arg) => runner(arg)?.cmd_synth().map(|_| ()),
        Command::PrepareMl1m { source, dest } => prepare_ml1m(source, dest),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            // Configuration problems exit 2, data problems exit 1.
            let code = err
                .downcast_ref::<recaudit_core::Error>()
                .map_or(1, recaudit_core::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
