use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msa_cli::{apply_overrides, parse_config, rerun, run, Experiment, ScenarioConfig};

const DEFAULT_OUT_DIR: &str = "msa-out";

/// Metasurface transmitter simulator.
///
/// Option precedence is command-line flags, then config keys, then built-in
/// defaults. Without `--config` a built-in 4 x 4 example scenario is used.
#[derive(Debug, Parser)]
#[command(name = "msa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "MSA_OUT_DIR", default_value = DEFAULT_OUT_DIR)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo size: realizations for sweeps, channel draws for
    /// two-stream, random baselines for precode.
    #[arg(long)]
    trials: Option<usize>,
    /// Suppresses the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Noise-aware received signal for one scenario.
    Simulate(RunArgs),
    /// Closed-form and quantized surface phases.
    Precode(RunArgs),
    /// BER versus SNR.
    BerSweep(RunArgs),
    /// Mean optimized power versus element count.
    DiversitySweep(RunArgs),
    /// Two receivers sharing one surface, before and after optimization.
    TwoStream(RunArgs),
    /// Doppler-signature synthesis through the surface.
    Sense(RunArgs),
    /// Re-executes a recorded run and checks its outputs byte for byte.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to `rerun/` next to the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn run_experiment(experiment: Experiment, args: RunArgs) -> anyhow::Result<()> {
    init_logging(args.quiet);
    let mut cfg = match &args.config {
        Some(path) => parse_config(path)?,
        None => ScenarioConfig::example(),
    };
    apply_overrides(&mut cfg, experiment, args.seed, args.trials)?;
    let (manifest, outcome) = run(experiment, &cfg, &args.out)?;
    if !args.quiet {
        println!("{experiment}: {}", outcome.summary);
        println!("wrote {} files and {} to {}", manifest.outputs.len(), msa_cli::MANIFEST_FILE, args.out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => run_experiment(Experiment::Simulate, a),
        Command::Precode(a) => run_experiment(Experiment::Precode, a),
        Command::BerSweep(a) => run_experiment(Experiment::BerSweep, a),
        Command::DiversitySweep(a) => run_experiment(Experiment::DiversitySweep, a),
        Command::TwoStream(a) => run_experiment(Experiment::TwoStream, a),
        Command::Sense(a) => run_experiment(Experiment::Sense, a),
        Command::Rerun { manifest, out, quiet } => (|| {
            init_logging(quiet);
            let out = out.unwrap_or_else(|| manifest.parent().unwrap_or(std::path::Path::new(".")).join("rerun"));
            let replay = rerun(&manifest, &out)?;
            if !replay.mismatches.is_empty() {
                anyhow::bail!("outputs differ from the recorded run: {}", replay.mismatches.join(", "));
            }
            if !quiet {
                println!(
                    "{}: {} outputs reproduced byte for byte in {}",
                    replay.original.subcommand,
                    replay.fresh.outputs.len(),
                    out.display()
                );
            }
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
