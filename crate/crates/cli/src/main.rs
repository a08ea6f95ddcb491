use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dadao::config::parse_seeds;
use dadao::{run_experiment, save_sweep, scaling_sweep, Error, ExperimentConfig};

/// Worker-pool size; defaults to the number of cores.
const WORKERS_VAR: &str = "DADAO_WORKERS";

#[derive(Parser)]
#[command(name = "dadao", version, about = "Asynchronous decentralized optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of one experiment and write trajectories and a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Seed list such as `0..3,7`; overrides `run.seeds`.
        #[arg(long)]
        seeds: Option<String>,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run to the target precision for several network sizes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &PathBuf, seeds: Option<String>, out: Option<PathBuf>) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| format!("config: {}: {e}", path.display()))?;
    if let Some(s) = seeds {
        cfg.seeds = parse_seeds(&s).map_err(|e| format!("config: --seeds: {e}"))?;
    }
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    cfg.validate().map_err(|e| format!("config: {e}"))?;
    Ok(cfg)
}

fn describe(e: Error) -> String {
    match e {
        Error::Stage { .. } => e.to_string(),
        other => format!("simulation: {other}"),
    }
}

fn execute(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { config, seeds, out } => {
            let cfg = load(&config, seeds, out)?;
            let summary = run_experiment(&cfg).map_err(describe)?;
            print!("{}", summary.to_text());
            eprintln!("wrote {} files to {}", summary.files.len(), cfg.output_dir.display());
        }
        Command::Sweep { config, n, seeds, out } => {
            let cfg = load(&config, seeds, out)?;
            let table = scaling_sweep(&cfg, &n).map_err(describe)?;
            let files = save_sweep(&cfg, &table).map_err(describe)?;
            print!("{}", table.to_csv());
            println!(
                "# comms exponent {:.4}, grads exponent {:.4}",
                table.comms_exponent, table.grads_exponent
            );
            eprintln!("wrote {} files to {}", files.len(), cfg.output_dir.display());
        }
    }
    Ok(())
}

fn init_pool() -> Result<(), String> {
    let Ok(v) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| format!("setup: {WORKERS_VAR} must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("setup: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_pool().and_then(|()| execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("dadao: error in stage {msg}");
            ExitCode::FAILURE
        }
    }
}
