//! Random perturbation of a constant state on the unit cube.
//!
//! cargo run --release --example experiment3_3d -- 16 0.5

use okfem::harness::{self, Preset, RunConfig};

fn main() -> okfem::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(8);
    let t_end: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.2);
    let cfg = RunConfig {
        n,
        t_end,
        ..Preset::Exp3.run_config()
    };
    let cmp = harness::run_comparison(&cfg, None)?;
    for (kappa, r) in cmp.kappas.iter().zip(&cmp.reports) {
        let peak = r.iter().map(|x| x.energy).fold(f64::NEG_INFINITY, f64::max);
        let iters = r.iter().map(|x| x.newton_iterations).max().unwrap_or(0);
        println!(
            "kappa {kappa:>5}: E {:.6} -> {:.6} (peak {peak:.6}), mass {:.6} -> {:.6}, max Newton iterations {iters}",
            r[0].energy,
            r.last().unwrap().energy,
            r[0].mass,
            r.last().unwrap().mass
        );
    }
    Ok(())
}
