//! Cahn-Hilliard (κ = 0) and Ohta-Kawasaki runs from the cosine initial
//! state without forcing. Writes series.csv and VTK snapshots.
//!
//! cargo run --release --example experiment1 -- 100 out/exp1

use std::path::PathBuf;

use okfem::harness::{self, Preset, RunConfig};

fn main() -> okfem::Result<()> {
    let mut args = std::env::args().skip(1);
    let t_end: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "out/exp1".into()));

    for kappa in [0.0, 100.0] {
        let cfg = RunConfig {
            kappa,
            t_end,
            ..Preset::Exp1.run_config()
        };
        let summary = harness::run_to_dir(&cfg, &harness::kappa_dir(&dir, kappa))?;
        let r = &summary.reports;
        let drift = r.iter().map(|x| (x.mass - r[0].mass).abs()).fold(0.0, f64::max);
        let slack = r[1..].iter().map(|x| x.energy_balance_slack).fold(f64::INFINITY, f64::min);
        println!(
            "kappa {kappa:>5}: E {:.6} -> {:.6}, mass drift {drift:.1e}, min slack {slack:.2e}, {} snapshots",
            r[0].energy,
            r.last().unwrap().energy,
            summary.snapshots.len()
        );
    }
    Ok(())
}
