//! Logistic source term: the mass grows and the mass balance holds
//! step by step.

use okfem::harness::{self, Preset, RunConfig};

fn main() -> okfem::Result<()> {
    let t_end: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let cfg = RunConfig {
        t_end,
        n: 50,
        kappas: vec![0.0, 100.0],
        ..Preset::Exp2.run_config()
    };
    let cmp = harness::run_comparison(&cfg, None)?;
    for (kappa, r) in cmp.kappas.iter().zip(&cmp.reports) {
        let last = r.last().unwrap();
        let residual = r.iter().map(|x| x.mass_balance_residual.abs()).fold(0.0, f64::max);
        println!(
            "kappa {kappa:>5}: mean {:.6} -> {:.6}, max balance residual {residual:.1e}",
            r[0].mass,
            last.mass
        );
    }
    Ok(())
}
