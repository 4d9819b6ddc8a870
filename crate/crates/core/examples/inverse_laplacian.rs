//! Discrete inverse Laplacian with and without a mobility weight, and the
//! resulting H⁻¹ norms.

use std::f64::consts::PI;
use std::sync::Arc;

use okfem::{build_structured_mesh, builtin_quartic_model, FeSpace, InverseLaplacianContext};

fn main() -> okfem::Result<()> {
    let space = Arc::new(FeSpace::new(build_structured_mesh(2, 64)?)?);
    let mut ctx = InverseLaplacianContext::for_space(space.clone())?;

    // cos(πx)cos(πy) is an eigenfunction of -Δ with Neumann data, eigenvalue 2π²
    let v = space.interpolate(|x| (PI * x[0]).cos() * (PI * x[1]).cos());
    let w = ctx.inv_laplacian(&v)?;
    let ratio = w[0] / v[0];
    println!("w/v at the corner = {ratio:.6}, 1/(2π²) = {:.6}", 1.0 / (2.0 * PI * PI));
    println!("‖v‖_(-1) = {:.6e}", ctx.h_minus1_norm(&v, false)?);

    let spec = builtin_quartic_model();
    let q = space.interpolate(|x| 0.8 * (2.0 * PI * x[0]).sin());
    let m = spec.mobility.clone();
    ctx.set_weight(&q, &move |s| m(s))?;
    let wm = ctx.inv_laplacian_weighted(&v)?;
    println!("weighted: w_m/v at the corner = {:.6}", wm[0] / v[0]);
    println!("‖v‖_(-1,m) = {:.6e}", ctx.h_minus1_norm(&v, true)?);
    Ok(())
}
