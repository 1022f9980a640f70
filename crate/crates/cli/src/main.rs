use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ngdpinn_cli::{exit, parse_config_with, run, Mode, Overrides};

/// Thread-count override for the parallel kernels.
const THREADS_ENV: &str = "NGDPINN_THREADS";

#[derive(Parser)]
#[command(name = "ngdpinn", version, about = "Train two-layer networks and PINNs with GD/NGD and check convergence bounds")]
struct Cli {
    mode: Mode,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit::INVALID_CONFIG);
    }
    let overrides = Overrides {
        mode: Some(cli.mode),
        out: cli.out,
        seed: cli.seed,
    };
    let config = match parse_config_with(&cli.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(exit::INVALID_CONFIG);
        }
    };
    match run(&config) {
        Ok(manifest) => {
            println!(
                "{}: {:?} ({} files in {}, {:.2}s)",
                config.mode,
                manifest.status,
                manifest.files.len() + 1,
                config.out.display(),
                manifest.duration_secs
            );
            if let Some(msg) = &manifest.message {
                eprintln!("{msg}");
            }
            ExitCode::from(manifest.status.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
