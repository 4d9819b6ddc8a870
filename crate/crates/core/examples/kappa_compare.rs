//! Energy decay for several repulsion strengths from the same initial data.

use okfem::harness::{self, Preset, RunConfig};

fn main() -> okfem::Result<()> {
    let t_end: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2.0);
    let cfg = RunConfig {
        t_end,
        n: 64,
        kappas: vec![0.0, 10.0, 100.0],
        ..Preset::Exp1.run_config()
    };
    let cmp = harness::run_comparison(&cfg, None)?;
    for (kappa, drop) in cmp.kappas.iter().zip(cmp.energy_drops()) {
        println!("kappa {kappa:>5}: E(0) - E({t_end}) = {drop:.6e}");
    }
    print!("{}", cmp.to_csv().lines().take(4).collect::<Vec<_>>().join("\n"));
    println!("\n...");
    Ok(())
}
