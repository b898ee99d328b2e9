use std::path::PathBuf;
use std::process::ExitCode;

use bgkin::config::{Experiment, RunConfig};
use bgkin::experiment::run_experiment;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bgkin", version, about = "Hard-sphere kinetic theory experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One-body occupation coefficient on a grid.
    K1(Common),
    /// Pair occupation coefficients at bulk tuples.
    Ks(Common),
    /// Master and Boltzmann operators at bulk probes.
    Ops(Common),
    /// Event-driven hard-sphere dynamics with observables.
    Md(Common),
    /// k1 along a Boltzmann-Grad sequence with a rate fit.
    BgSweep(Common),
    /// Contact integral along a sequence against its zero right limit.
    Noncomm(Common),
    /// Pair correlation along a sequence.
    Chaos(Common),
    /// Homogeneous relaxation of a two-beam velocity distribution.
    Relax(Common),
    /// Boltzmann-Shannon entropy of a pdf.
    Entropy(Common),
    /// Parse and validate a config without running it.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(common: &Common, expected: Experiment) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::from_path(&common.config).map_err(|e| e.to_string())?;
    if cfg.experiment != expected {
        return Err(format!(
            "config is for experiment `{}`, subcommand is `{}`",
            cfg.experiment.name(),
            expected.name()
        ));
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, experiment) = match cli.command {
        Command::ValidateConfig { config } => {
            return match RunConfig::from_path(&config) {
                Ok(cfg) => {
                    println!("ok: experiment `{}`", cfg.experiment.name());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(2)
                }
            };
        }
        Command::K1(c) => (c, Experiment::K1),
        Command::Ks(c) => (c, Experiment::Ks),
        Command::Ops(c) => (c, Experiment::Ops),
        Command::Md(c) => (c, Experiment::Md),
        Command::BgSweep(c) => (c, Experiment::BgSweep),
        Command::Noncomm(c) => (c, Experiment::Noncomm),
        Command::Chaos(c) => (c, Experiment::Chaos),
        Command::Relax(c) => (c, Experiment::Relax),
        Command::Entropy(c) => (c, Experiment::Entropy),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match load(&common, experiment) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&cfg) {
        Ok(m) => {
            println!(
                "{}: wrote {} files to {} in {:.2} s",
                m.experiment,
                m.files.len(),
                cfg.output_dir.display(),
                m.wall_clock_seconds
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
