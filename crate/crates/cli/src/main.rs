use std::path::PathBuf;
use std::process::ExitCode;

use alconf_cli::{analyze, gen_data, run};
use alconf_core::BlobConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "alconf",
    version,
    about = "Active learning simulations with confidence estimates and uncertainty clipping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Gaussian-blob dataset as CSV plus an outlier sidecar.
    GenData {
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        per_class: usize,
        #[arg(long, default_value_t = 0.0)]
        outlier_fraction: f64,
        #[arg(long, default_value_t = 4.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every cell of an experiment grid.
    Run {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Aggregate a results directory into CSV tables.
    Analyze {
        results: PathBuf,
        /// Defaults to the results directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::GenData {
            classes,
            dim,
            per_class,
            outlier_fraction,
            separation,
            seed,
            out,
        } => {
            let cfg = BlobConfig {
                class_count: classes,
                dim,
                per_class,
                outlier_fraction,
                separation,
                seed,
            };
            let sidecar = gen_data(&cfg, &out)?;
            println!("wrote {} and {}", out.display(), sidecar.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, jobs, out } => {
            let report = run(&config, &out, jobs)?;
            println!(
                "{} of {} cells written to {}",
                report.written.len(),
                report.manifest.cells.len(),
                out.display()
            );
            for f in &report.failures {
                eprintln!("failed: {}: {}", f.cell, f.message);
            }
            Ok(if report.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Analyze { results, out } => {
            let out = out.unwrap_or_else(|| results.clone());
            for path in analyze(&results, &out)? {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
