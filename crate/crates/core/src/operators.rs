//! Discrete (weighted) inverse Laplacians on the mean-free P1 space and the
//! `H^{-1}`-type norms they induce.
//!
//! For a state `q` and weight `m`, `w = (-Δ_{h,m})^{-1} v` is the mean-free
//! P1 function with `(m(q) ∇w, ∇ξ) = (v, ξ)` for all mean-free `ξ`. The mean
//! constraint is the integral mean, enforced through the bordered system
//! with `c = M·1`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{FeSpace, FieldVector};
use crate::linalg::{ConstrainedSolver, SolveOptions, SparseMatrix, SpdSolver};

/// Matrices and cached factorizations of one P1 space.
pub struct InverseLaplacianContext {
    space: Arc<FeSpace>,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    ones_mass: Vec<f64>,
    laplace: ConstrainedSolver,
    mass_solver: SpdSolver,
    weighted: Option<WeightedOperator>,
    opts: SolveOptions,
}

/// A weighted stiffness matrix together with its bordered solver.
pub struct WeightedOperator {
    pub matrix: SparseMatrix,
    solver: ConstrainedSolver,
    /// Level and length of the field the weight was evaluated at.
    pub state_tag: (u32, usize),
}

impl InverseLaplacianContext {
    pub fn new(space: Arc<FeSpace>, opts: SolveOptions) -> Result<Self> {
        let mass = space.assemble_mass();
        let stiffness = space.assemble_stiffness();
        let ones_mass = mass.mul_vec(&vec![1.0; space.num_dofs()]);
        let laplace = ConstrainedSolver::new(stiffness.clone(), ones_mass.clone(), opts)?;
        let mass_solver = SpdSolver::new(mass.clone(), opts)?;
        Ok(Self {
            space,
            mass,
            stiffness,
            ones_mass,
            laplace,
            mass_solver,
            weighted: None,
            opts,
        })
    }

    /// Context with the default method for the space size.
    pub fn for_space(space: Arc<FeSpace>) -> Result<Self> {
        let n = space.num_dofs();
        Self::new(space, SolveOptions::auto(n))
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// `M·1`, the integral-mean functional.
    pub fn ones_mass(&self) -> &[f64] {
        &self.ones_mass
    }

    pub fn domain_volume(&self) -> f64 {
        self.ones_mass.iter().sum()
    }

    pub fn options(&self) -> SolveOptions {
        self.opts
    }

    /// Solves `M x = b`.
    pub fn solve_mass(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.mass_solver.solve(b)
    }

    /// Builds the weighted operator for `weight(q)`; replaces any previous one.
    pub fn set_weight(&mut self, q: &FieldVector, weight: &dyn Fn(f64) -> f64) -> Result<()> {
        let matrix = self.space.assemble_weighted_stiffness(q, weight)?;
        self.set_weighted_matrix(matrix, (q.mesh_level, q.len()))
    }

    /// Installs an already assembled weighted stiffness matrix.
    pub fn set_weighted_matrix(&mut self, matrix: SparseMatrix, state_tag: (u32, usize)) -> Result<()> {
        let solver = ConstrainedSolver::new(matrix.clone(), self.ones_mass.clone(), self.opts)?;
        self.weighted = Some(WeightedOperator {
            matrix,
            solver,
            state_tag,
        });
        Ok(())
    }

    pub fn weighted(&self) -> Option<&WeightedOperator> {
        self.weighted.as_ref()
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.space.num_dofs() {
            return Err(Error::invalid("field length does not match the context space"));
        }
        Ok(())
    }

    /// `(-Δ_h)^{-1} v`.
    pub fn inv_laplacian(&self, v: &[f64]) -> Result<FieldVector> {
        self.check(v)?;
        let (w, _) = self.laplace.solve(&self.mass.mul_vec(v))?;
        Ok(FieldVector::new(w, self.space.level()))
    }

    /// `(-Δ_{h,m})^{-1} v` with the installed weight.
    pub fn inv_laplacian_weighted(&self, v: &[f64]) -> Result<FieldVector> {
        self.check(v)?;
        let op = self
            .weighted
            .as_ref()
            .ok_or_else(|| Error::invalid("no weighted operator installed"))?;
        let (w, _) = op.solver.solve(&self.mass.mul_vec(v))?;
        Ok(FieldVector::new(w, self.space.level()))
    }

    /// Discrete `H^{-1}` norm, weighted or with `m ≡ 1`.
    pub fn h_minus1_norm(&self, v: &[f64], weighted: bool) -> Result<f64> {
        let (w, a) = if weighted {
            let op = self
                .weighted
                .as_ref()
                .ok_or_else(|| Error::invalid("no weighted operator installed"))?;
            (self.inv_laplacian_weighted(v)?, &op.matrix)
        } else {
            (self.inv_laplacian(v)?, &self.stiffness)
        };
        Ok(a.quad_form(&w).max(0.0).sqrt())
    }
}
