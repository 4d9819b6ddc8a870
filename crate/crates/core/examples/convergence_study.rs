//! Mesh convergence against a finer reference solution. Level k uses
//! 2^(k+1) subdivisions.
//!
//! cargo run --release --example convergence_study -- 4 5

use okfem::harness::{self, ConvergenceConfig};

fn main() -> okfem::Result<()> {
    let mut args = std::env::args().skip(1);
    let finest: u32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let reference: u32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(finest + 1);
    let mut cfg = ConvergenceConfig::from_text("version = 1\nt_end = 0.1\n")?;
    cfg.levels = (1..=finest).collect();
    cfg.reference_level = reference;
    let table = harness::run_convergence(&cfg, None)?;
    println!("{table}");
    Ok(())
}
