use std::sync::Arc;

use okfem::harness::{ConvergenceConfig, Preset, RunConfig};
use okfem::model::{entropy_function, regularized_mobility, regularized_potential};
use okfem::scheme::Stepper;
use okfem::{
    build_structured_mesh, builtin_quartic_model, diagnostics, refine_uniform, FeSpace, FieldVector, Forcing,
    InverseLaplacianContext, SchemeConfig,
};
use proptest::prelude::*;

fn context(dim: usize, n: usize) -> InverseLaplacianContext {
    let space = FeSpace::new(build_structured_mesh(dim, n).unwrap()).unwrap();
    InverseLaplacianContext::for_space(Arc::new(space)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mesh_counts_and_volume(dim in 2usize..=3, n in 1usize..=5) {
        let mesh = build_structured_mesh(dim, n).unwrap();
        let cells_per_cube = if dim == 2 { 2 } else { 6 };
        prop_assert_eq!(mesh.num_vertices(), (n + 1).pow(dim as u32));
        prop_assert_eq!(mesh.num_cells(), cells_per_cube * n.pow(dim as u32));
        let space = FeSpace::new(mesh.clone()).unwrap();
        let volume: f64 = space.geometry().iter().map(|g| g.volume).sum();
        prop_assert!((volume - 1.0).abs() < 1e-13);
        let fine = refine_uniform(&mesh);
        prop_assert_eq!(fine.subdivisions(), 2 * n);
        prop_assert!(mesh.is_nested_in(&fine));
    }

    #[test]
    fn one_step_conserves_mass_and_dissipates(
        values in prop::collection::vec(-0.8f64..0.8, 49),
        kappa in prop::sample::select(vec![0.0, 10.0, 100.0]),
        tau in prop::sample::select(vec![1e-3, 1e-2, 1e-1]),
    ) {
        let ctx = context(2, 6);
        let spec = builtin_quartic_model().with_kappa(kappa);
        let cfg = SchemeConfig::new(tau, tau);
        let phi = FieldVector::new(values, 0);
        let r = Stepper::new(&ctx, &spec, cfg).unwrap().step(&phi).unwrap();
        let m0 = diagnostics::mass(&ctx, &phi);
        let m1 = diagnostics::mass(&ctx, &r.phi_next);
        prop_assert!((m1 - m0).abs() < 1e-14);
        let e0 = diagnostics::discrete_energy(&ctx, &spec, &phi).unwrap();
        let e1 = diagnostics::discrete_energy(&ctx, &spec, &r.phi_next).unwrap();
        prop_assert!(e1 <= e0 + 1e-10, "energy rose from {} to {}", e0, e1);
    }

    #[test]
    fn forced_step_adds_forcing_mass(values in prop::collection::vec(-0.9f64..0.9, 27)) {
        let ctx = context(3, 2);
        let spec = builtin_quartic_model().with_kappa(10.0).with_forcing(Forcing::Logistic);
        let tau = 0.01;
        let phi = FieldVector::new(values, 0);
        let r = Stepper::new(&ctx, &spec, SchemeConfig::new(tau, tau)).unwrap().step(&phi).unwrap();
        let source = ctx.space().integrate(&phi, &|x| 0.1 * (1.0 - x * x)).unwrap();
        let gained = diagnostics::mass(&ctx, &r.phi_next) - diagnostics::mass(&ctx, &phi);
        prop_assert!((gained - tau * source).abs() < 1e-15);
    }

    #[test]
    fn regularized_mobility_is_even_and_bounded(x in -3.0f64..3.0, delta in 0.001f64..0.5) {
        let spec = builtin_quartic_model();
        let md = regularized_mobility(&spec.mobility, delta).unwrap();
        prop_assert_eq!(md(x), md(-x));
        let lower = (spec.mobility)(1.0 - delta);
        prop_assert!(md(x) >= lower && md(x) <= (spec.mobility)(0.0));
        let pot = regularized_potential(&spec, delta).unwrap();
        prop_assert!((pot.psi1.d2)(x) >= 0.0);
    }

    #[test]
    fn entropy_is_nonnegative_and_convex(x in -2.5f64..2.5, delta in prop::sample::select(vec![0.1, 0.01])) {
        let spec = builtin_quartic_model();
        let phi = entropy_function(&spec, Some(delta)).unwrap();
        let h = 1e-2;
        let (a, b, c) = (phi.value(x - h).unwrap(), phi.value(x).unwrap(), phi.value(x + h).unwrap());
        prop_assert!(b >= 0.0);
        prop_assert!(a - 2.0 * b + c >= -1e-9);
        prop_assert_eq!(phi.value(0.0).unwrap(), 0.0);
    }

    #[test]
    fn config_text_round_trips(
        seed in any::<u64>(),
        n in 1usize..200,
        kappa in 0.0f64..1e3,
        stride in 1usize..50,
        preset in prop::sample::select(vec![Preset::Exp1, Preset::Exp2, Preset::Exp3]),
    ) {
        let cfg = RunConfig { seed, n, kappa, output_stride: stride, ..preset.run_config() };
        let parsed = RunConfig::from_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(parsed, cfg);
    }
}

#[test]
fn convergence_config_rejects_levels_above_reference() {
    let err = ConvergenceConfig::from_text("version = 1\nlevels = 1,2,6\nreference_level = 5\n").unwrap_err();
    assert!(err.to_string().contains("nested"), "{err}");
}
