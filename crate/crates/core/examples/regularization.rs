//! Clamped mobility, continued potential and the entropy function for a
//! few regularization widths.

use okfem::builtin_quartic_model;
use okfem::model::{entropy_function, regularized_mobility, regularized_potential};

fn main() -> okfem::Result<()> {
    let spec = builtin_quartic_model();
    for delta in [0.1, 0.01] {
        let md = regularized_mobility(&spec.mobility, delta)?;
        let pot = regularized_potential(&spec, delta)?;
        let phi = entropy_function(&spec, Some(delta))?;
        let corner = md(1.0 - delta).max(md(delta - 1.0));
        println!("delta = {delta}");
        println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "x", "m_delta", "psi_delta", "Phi_delta", "bound");
        for x in [0.0, 0.5, 0.95, 1.2, 1.5, 2.0] {
            let entropy = phi.value(x)?;
            // (|x| - 1)_+² ≤ 2 Φ_δ(x) max m_δ(±(1-δ))
            let bound = 2.0 * entropy * corner;
            println!(
                "{x:>6.2} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                md(x),
                pot.psi(x),
                entropy,
                bound
            );
        }
    }
    Ok(())
}
