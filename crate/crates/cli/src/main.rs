use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levy_libor::experiment::{bench_paths, bench_tenor, run_experiment, ExperimentConfig};
use levy_libor::Error;

/// Monte Carlo caplet experiments in a Lévy-driven LIBOR market model.
#[derive(Parser, Debug)]
#[command(name = "levy-libor", version)]
struct Cli {
    /// Override `output.directory`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Override `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Price the caplet grid for every configured (scheme, drift mode) pair.
    Run { config: PathBuf },
    /// Time Full and Picard evolution across path counts.
    BenchPaths {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
    },
    /// Time exact and second-order drift evaluation across tenor sizes.
    BenchTenor {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
}

fn load(cli: &Cli, path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
        other => other,
    })?;
    if let Some(dir) = &cli.out_dir {
        cfg.output.directory = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            let out = run_experiment(&cfg)?;
            for p in out.pricing_files.iter().chain(&out.diff_files) {
                println!("wrote {}", p.display());
            }
            println!("wrote {}", out.manifest.display());
        }
        Command::BenchPaths { config, counts } => {
            let cfg = load(cli, config)?;
            let b = bench_paths(&cfg, counts)?;
            for r in &b.records {
                println!("{:<7} {:>8} paths  {:.4} s", r.scheme.name(), r.n_paths, r.wall_seconds);
            }
            for (name, fit) in [("full", b.full), ("picard", b.picard)] {
                if let Some(f) = fit {
                    println!("{name}: slope {:.3e} s/path, R² {:.4}", f.slope, f.r_squared);
                    if f.r_squared <= 0.95 {
                        log::warn!("{name}: timing not linear in paths (R² = {:.4})", f.r_squared);
                    }
                }
            }
            if let Some(r) = b.slope_ratio {
                println!("slope ratio picard/full: {r:.3}");
            }
            println!("wrote {}", b.csv.display());
        }
        Command::BenchTenor { config, sizes } => {
            let cfg = load(cli, config)?;
            let b = bench_tenor(&cfg, sizes)?;
            for r in &b.records {
                println!("N={:<3} {:<12} {:.6} s", r.n_rates, r.drift_mode.name(), r.wall_seconds);
            }
            for (n, why) in &b.refused {
                println!("N={n:<3} exact        refused: {why}");
            }
            println!("wrote {}", b.csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
