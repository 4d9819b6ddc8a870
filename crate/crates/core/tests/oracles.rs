mod common;

use std::sync::Arc;

use common::{max_diff, smooth_state, DenseFem};
use nalgebra::DMatrix;
use okfem::fem::transfer_matrix;
use okfem::{build_structured_mesh, refine_uniform, FeSpace, InverseLaplacianContext};

fn dense(m: &okfem::linalg::SparseMatrix) -> DMatrix<f64> {
    let rows = m.to_dense();
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn spaces() -> Vec<FeSpace> {
    [(2, 1), (2, 3), (3, 1), (3, 2)]
        .iter()
        .map(|&(d, n)| FeSpace::new(build_structured_mesh(d, n).unwrap()).unwrap())
        .collect()
}

#[test]
fn mass_and_stiffness_match_dense_assembly() {
    for space in spaces() {
        let oracle = DenseFem::new(space.mesh());
        assert!((dense(&space.assemble_mass()) - &oracle.mass).amax() < 1e-15);
        assert!((dense(&space.assemble_stiffness()) - &oracle.stiffness).amax() < 1e-13);
        // the mass matrix integrates constants to the unit volume
        assert!((oracle.mass.sum() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn nonlinear_loads_are_exact_for_quartic_integrands() {
    for space in spaces() {
        let oracle = DenseFem::new(space.mesh());
        let phi = smooth_state(space.mesh(), 0.1);
        for p in 0..=3 {
            let ours = space.assemble_nonlinear_load(&phi, &|x| x.powi(p as i32)).unwrap();
            assert!(max_diff(&ours, oracle.power_load(&phi, p).as_slice()) < 1e-15, "power {p}");
        }
        let w = space.assemble_weighted_mass(&phi, &|x| x * x).unwrap();
        assert!((dense(&w) - oracle.weighted_mass(&phi, 2)).amax() < 1e-15);
        let exact4: f64 = (0..space.mesh().num_cells())
            .map(|c| oracle.cell_mean_power(c, &phi, 4) * oracle.cells[c].volume)
            .sum();
        assert!((space.integrate(&phi, &|x| x.powi(4)).unwrap() - exact4).abs() < 1e-15);
    }
}

#[test]
fn weighted_stiffness_uses_cell_mean_of_weight() {
    for space in spaces() {
        let oracle = DenseFem::new(space.mesh());
        let phi = smooth_state(space.mesh(), -0.2);
        let ours = space
            .assemble_weighted_stiffness(&phi, &|x| 1e-3 + (1.0 - x * x).powi(2) / 16.0)
            .unwrap();
        let expected = oracle.weighted_stiffness(&oracle.quartic_mobility_weights(&phi, 1e-3));
        assert!((dense(&ours) - expected).amax() < 1e-14);
    }
}

#[test]
fn inverse_laplacian_solution_satisfies_bordered_system() {
    for space in spaces() {
        let oracle = DenseFem::new(space.mesh());
        let v = smooth_state(space.mesh(), 0.3);
        let ctx = InverseLaplacianContext::for_space(Arc::new(space)).unwrap();
        let (w, lambda) = oracle.bordered_solve(&oracle.stiffness, &v);
        assert!(max_diff(&ctx.inv_laplacian(&v).unwrap(), w.as_slice()) < 1e-12);
        // the multiplier is the mean of v
        let mean = oracle.ones_mass().dot(&nalgebra::DVector::from_column_slice(&v));
        assert!((lambda - mean).abs() < 1e-12);
    }
}

#[test]
fn transfer_reproduces_linear_functions_and_prolongs_mass() {
    for (dim, n) in [(2, 2), (3, 1)] {
        let coarse_mesh = build_structured_mesh(dim, n).unwrap();
        let fine_mesh = refine_uniform(&refine_uniform(&coarse_mesh));
        let coarse = FeSpace::new(coarse_mesh).unwrap();
        let fine = FeSpace::new(fine_mesh).unwrap();
        let p = transfer_matrix(&coarse, &fine).unwrap();
        let linear = |x: &[f64]| 0.3 + x.iter().enumerate().map(|(i, v)| (i as f64 + 1.5) * v).sum::<f64>();
        let uc = coarse.interpolate(linear);
        let uf = fine.interpolate(linear);
        assert!(max_diff(&p.mul_vec(&uc), &uf) < 1e-14);
        // Galerkin identity Pᵀ M_f P = M_c for nested P1 spaces
        let mf = dense(&fine.assemble_mass());
        let pd = dense(&p);
        let galerkin = pd.transpose() * mf * &pd;
        assert!((galerkin - dense(&coarse.assemble_mass())).amax() < 1e-15);
    }
}
