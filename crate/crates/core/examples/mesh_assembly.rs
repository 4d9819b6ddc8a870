//! Builds the structured meshes and checks the assembled P1 matrices.
//!
//! cargo run --example mesh_assembly -- 3 4

use okfem::{build_structured_mesh, refine_uniform, FeSpace};

fn main() -> okfem::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let dim = args.first().copied().unwrap_or(2);
    let n = args.get(1).copied().unwrap_or(8);

    let mesh = build_structured_mesh(dim, n)?;
    println!(
        "dim {dim}, n {n}: {} vertices, {} cells, h = {:.4}",
        mesh.num_vertices(),
        mesh.num_cells(),
        mesh.mesh_size()
    );
    let fine = refine_uniform(&mesh);
    println!("refined: {} cells, nested = {}", fine.num_cells(), mesh.is_nested_in(&fine));

    let space = FeSpace::new(mesh)?;
    let m = space.assemble_mass();
    let k = space.assemble_stiffness();
    let ones = vec![1.0; space.num_dofs()];
    let k1 = k.mul_vec(&ones).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    println!("nnz(M) = {}, (1, M 1) = {:.15}", m.nnz(), m.quad_form(&ones));
    println!("max |K 1| = {k1:.2e}");

    // ∫ x_0² over the unit cube is 1/3; P1 interpolation overshoots by O(h²)
    let x2 = space.interpolate(|x| x[0] * x[0]);
    println!("(I_h x², 1) = {:.6} (exact 1/3)", space.integrate(&x2, &|v| v)?);
    Ok(())
}
