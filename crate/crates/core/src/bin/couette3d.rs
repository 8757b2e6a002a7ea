use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use couette_core::experiment::{configure_threads, run, write_outputs, ExperimentConfig, Kind};
use couette_core::Error;

/// Small-disturbance experiments for 3D plane Couette flow.
///
/// Exit status: 0 on success, 2 for configuration errors, 3 for numerical
/// failures. `COUETTE3D_THREADS` caps the worker pool.
#[derive(Parser, Debug)]
#[command(name = "couette3d", version)]
struct Cli {
    /// linear | streak | sim3d | toy | multiplier-table | coord
    kind: String,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`; defaults to `out/<kind>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main_inner(cli: Cli) -> couette_core::Result<PathBuf> {
    configure_threads()?;
    let kind: Kind = cli.kind.parse()?;
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    match cfg.kind {
        Some(k) if k != kind => {
            return Err(Error::Config(format!("config is for {k}, command line asks for {kind}")));
        }
        _ => cfg.kind = Some(kind),
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = Some(o);
    }
    cfg.validate()?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
    let out = run(&cfg)?;
    write_outputs(&cfg, &out, &dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("couette3d: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
