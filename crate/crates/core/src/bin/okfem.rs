use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use okfem::harness::{self, ConvergenceConfig, RunConfig};
use okfem::Error;

#[derive(Parser)]
#[command(name = "okfem", version, about = "Ohta-Kawasaki finite element solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write series.csv plus VTK snapshots
    Run(Common),
    /// Mesh convergence study; writes rates.csv
    Converge(Common),
    /// Run the configured list of kappa values; writes compare.csv
    Compare(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides output_dir from the config
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides seed from the config
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for concurrent runs (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
    }
}

fn execute(cli: &Cli) -> okfem::Result<()> {
    let common = match &cli.command {
        Command::Run(c) | Command::Converge(c) | Command::Compare(c) => c,
    };
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Run(c) => {
            let mut cfg = RunConfig::from_file(&c.config)?;
            c.apply(&mut cfg);
            let summary = harness::run_to_dir(&cfg, &cfg.output_dir)?;
            let (first, last) = (&summary.reports[0], summary.reports.last().unwrap());
            let drift = summary
                .reports
                .iter()
                .map(|r| r.mass_balance_residual.abs())
                .fold(0.0, f64::max);
            println!(
                "{} steps, energy {:.6e} -> {:.6e}, mass {:.6e} -> {:.6e}, max mass residual {:.2e}",
                last.step, first.energy, last.energy, first.mass, last.mass, drift
            );
            println!("wrote {}", summary.series.display());
        }
        Command::Converge(c) => {
            let mut cfg = ConvergenceConfig::from_file(&c.config)?;
            c.apply(&mut cfg.run);
            let table = harness::run_convergence(&cfg, Some(&cfg.run.output_dir))?;
            println!("{table}");
            println!("wrote {}", Path::new(&cfg.run.output_dir).join("rates.csv").display());
        }
        Command::Compare(c) => {
            let mut cfg = RunConfig::from_file(&c.config)?;
            c.apply(&mut cfg);
            let cmp = harness::run_comparison(&cfg, Some(&cfg.output_dir))?;
            for (k, drop) in cmp.kappas.iter().zip(cmp.energy_drops()) {
                println!("kappa {k}: energy drop {drop:.6e}");
            }
            println!("wrote {}", cfg.output_dir.join("compare.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("okfem: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
