//! P1 finite elements for the Ohta-Kawasaki equation with
//! state-dependent mobility and a reaction term.
//!
//! The time discretization treats the convex part of the double-well
//! potential implicitly and the concave part, the mobility and the forcing
//! explicitly. With an exact nonlinear solve this conserves mass (or matches
//! the forcing exactly) and satisfies a discrete energy inequality.
//!
//! ```no_run
//! use std::sync::Arc;
//! use okfem::{build_structured_mesh, builtin_quartic_model, FeSpace, InverseLaplacianContext};
//! use okfem::scheme::{initial_field, run, InitialCondition, SchemeConfig};
//!
//! let space = Arc::new(FeSpace::new(build_structured_mesh(2, 32)?)?);
//! let ctx = InverseLaplacianContext::for_space(space.clone())?;
//! let spec = builtin_quartic_model().with_kappa(10.0);
//! let phi0 = initial_field(&space, InitialCondition::Cosine2d, 0)?;
//! let reports = run(&ctx, &spec, &SchemeConfig::new(0.01, 0.5), &phi0, &mut [])?;
//! println!("energy {} -> {}", reports[0].energy, reports.last().unwrap().energy);
//! # Ok::<(), okfem::Error>(())
//! ```

pub mod diagnostics;
pub mod error;
pub mod fem;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod operators;
pub mod quadrature;
pub mod scheme;

pub use diagnostics::StepReport;
pub use error::{Error, Result};
pub use fem::{FeSpace, FieldVector};
pub use mesh::{build_structured_mesh, refine_uniform, SimplicialMesh};
pub use model::{builtin_quartic_model, Forcing, ModelSpec};
pub use operators::InverseLaplacianContext;
pub use scheme::{SchemeConfig, StepResult};
