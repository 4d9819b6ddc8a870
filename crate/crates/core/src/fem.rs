//! Continuous piecewise-linear finite elements: assembly of mass, stiffness,
//! weighted stiffness and nonlinear loads, plus nodal interpolation and
//! transfer between nested meshes.
//!
//! Nonlinear integrands are composed pointwise with the discrete field at the
//! nodes of a positive-weight degree-4 rule.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{barycentric_gradients, CellGeometry, SimplicialMesh};
use crate::quadrature::QuadratureRule;

/// Nodal coefficients of a P1 function (or a dual load vector) on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVector {
    pub values: Vec<f64>,
    pub mesh_level: u32,
}

impl FieldVector {
    pub fn new(values: Vec<f64>, mesh_level: u32) -> Self {
        Self { values, mesh_level }
    }

    pub fn zeros(len: usize, mesh_level: u32) -> Self {
        Self::new(vec![0.0; len], mesh_level)
    }

    pub fn constant(len: usize, value: f64, mesh_level: u32) -> Self {
        Self::new(vec![value; len], mesh_level)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Deref for FieldVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for FieldVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// The P1 space on a mesh with everything assembly needs precomputed.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: SimplicialMesh,
    geometry: Vec<CellGeometry>,
    rule: QuadratureRule,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// For cell `c`, local pair `(a, b)`: value slot of entry `(v_a, v_b)`.
    cell_slots: Vec<usize>,
}

impl FeSpace {
    pub fn new(mesh: SimplicialMesh) -> Result<Self> {
        let geometry = (0..mesh.num_cells())
            .map(|c| barycentric_gradients(&mesh, c))
            .collect::<Result<Vec<_>>>()?;
        let rule = QuadratureRule::for_dim(mesh.dim());
        let nv = mesh.num_vertices();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nv];
        for cell in mesh.cells() {
            for &a in cell {
                adj[a].extend_from_slice(cell);
            }
        }
        let mut row_ptr = Vec::with_capacity(nv + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let k = mesh.vertices_per_cell();
        let mut cell_slots = Vec::with_capacity(mesh.num_cells() * k * k);
        for cell in mesh.cells() {
            for &a in cell {
                let cols = &col_idx[row_ptr[a]..row_ptr[a + 1]];
                for &b in cell {
                    let pos = cols.binary_search(&b).expect("pattern contains cell couplings");
                    cell_slots.push(row_ptr[a] + pos);
                }
            }
        }
        Ok(Self {
            mesh,
            geometry,
            rule,
            row_ptr,
            col_idx,
            cell_slots,
        })
    }

    pub fn mesh(&self) -> &SimplicialMesh {
        &self.mesh
    }

    pub fn geometry(&self) -> &[CellGeometry] {
        &self.geometry
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn level(&self) -> u32 {
        self.mesh.level()
    }

    /// Zero matrix carrying the vertex-adjacency pattern.
    pub fn empty_matrix(&self) -> SparseMatrix {
        let n = self.num_dofs();
        SparseMatrix::from_csr(n, n, self.row_ptr.clone(), self.col_idx.clone(), vec![0.0; self.col_idx.len()])
            .expect("vertex pattern is valid CSR")
    }

    fn check_field(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.num_dofs() {
            return Err(Error::invalid(format!(
                "field has {} values, mesh has {} vertices",
                q.len(),
                self.num_dofs()
            )));
        }
        Ok(())
    }

    /// Values of the discrete field `q` at the quadrature points of `cell`.
    fn field_at_points(&self, cell: &[usize], q: &[f64], out: &mut [f64]) {
        for (p, o) in self.rule.points.iter().zip(out.iter_mut()) {
            *o = cell.iter().enumerate().map(|(a, &v)| p[a] * q[v]).sum();
        }
    }

    fn assemble_local<F>(&self, mut local: F) -> SparseMatrix
    where
        F: FnMut(usize, &[usize], &CellGeometry, usize, usize) -> f64,
    {
        let mut m = self.empty_matrix();
        let k = self.mesh.vertices_per_cell();
        let vals = m.values_mut();
        for (c, cell) in self.mesh.cells().enumerate() {
            let g = &self.geometry[c];
            let slots = &self.cell_slots[c * k * k..(c + 1) * k * k];
            for a in 0..k {
                for b in 0..k {
                    vals[slots[a * k + b]] += local(c, cell, g, a, b);
                }
            }
        }
        m
    }

    /// Consistent mass matrix `M_ij = (phi_i, phi_j)`.
    pub fn assemble_mass(&self) -> SparseMatrix {
        let d = self.mesh.dim() as f64;
        let denom = (d + 1.0) * (d + 2.0);
        self.assemble_local(|_, _, g, a, b| {
            let f = if a == b { 2.0 } else { 1.0 };
            g.volume * f / denom
        })
    }

    /// Stiffness matrix `K_ij = (grad phi_i, grad phi_j)`.
    pub fn assemble_stiffness(&self) -> SparseMatrix {
        self.assemble_local(|_, _, g, a, b| g.volume * g.grad_dot(a, b))
    }

    /// Per-cell quadrature average of `weight(q_h)`; the stiffness integrand
    /// is constant per cell otherwise.
    fn cell_weights(&self, q: &[f64], weight: &dyn Fn(f64) -> f64, what: &str) -> Result<Vec<f64>> {
        self.check_field(q)?;
        let mut at = vec![0.0; self.rule.len()];
        let mut out = Vec::with_capacity(self.mesh.num_cells());
        for cell in self.mesh.cells() {
            self.field_at_points(cell, q, &mut at);
            let mut acc = 0.0;
            for (&x, &w) in at.iter().zip(&self.rule.weights) {
                let m = weight(x);
                if !m.is_finite() {
                    return Err(Error::Evaluation {
                        what: what.to_string(),
                        value: x,
                    });
                }
                if m < 0.0 {
                    return Err(Error::Model(format!("negative {what} {m:e} at state value {x}")));
                }
                acc += w * m;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// `∫ weight(q_h) grad phi_i . grad phi_j dx`.
    pub fn assemble_weighted_stiffness(&self, q: &[f64], weight: &dyn Fn(f64) -> f64) -> Result<SparseMatrix> {
        let w = self.cell_weights(q, weight, "weight")?;
        Ok(self.assemble_local(|c, _, g, a, b| w[c] * g.volume * g.grad_dot(a, b)))
    }

    /// `∫ g(q_h) phi_i phi_j dx`: the Jacobian of [`Self::assemble_nonlinear_load`]
    /// when `g` is the derivative of the load integrand.
    pub fn assemble_weighted_mass(&self, q: &[f64], g: &dyn Fn(f64) -> f64) -> Result<SparseMatrix> {
        self.check_field(q)?;
        let np = self.rule.len();
        let mut at = vec![0.0; np];
        let mut m = self.empty_matrix();
        let k = self.mesh.vertices_per_cell();
        let vals = m.values_mut();
        for (c, cell) in self.mesh.cells().enumerate() {
            self.field_at_points(cell, q, &mut at);
            let vol = self.geometry[c].volume;
            let slots = &self.cell_slots[c * k * k..(c + 1) * k * k];
            for (p, (&x, &w)) in at.iter().zip(&self.rule.weights).enumerate() {
                let gx = g(x);
                if !gx.is_finite() {
                    return Err(Error::Evaluation {
                        what: "weighted mass integrand".into(),
                        value: x,
                    });
                }
                let lam = &self.rule.points[p];
                let s = vol * w * gx;
                for a in 0..k {
                    for b in 0..k {
                        vals[slots[a * k + b]] += s * lam[a] * lam[b];
                    }
                }
            }
        }
        Ok(m)
    }

    /// Dual vector `b_i = ∫ g(q_h) phi_i dx`.
    pub fn assemble_nonlinear_load(&self, q: &[f64], g: &dyn Fn(f64) -> f64) -> Result<FieldVector> {
        self.check_field(q)?;
        let mut at = vec![0.0; self.rule.len()];
        let mut b = vec![0.0; self.num_dofs()];
        for (c, cell) in self.mesh.cells().enumerate() {
            self.field_at_points(cell, q, &mut at);
            let vol = self.geometry[c].volume;
            for (p, (&x, &w)) in at.iter().zip(&self.rule.weights).enumerate() {
                let gx = g(x);
                if !gx.is_finite() {
                    return Err(Error::Evaluation {
                        what: "load integrand".into(),
                        value: x,
                    });
                }
                let s = vol * w * gx;
                for (a, &v) in cell.iter().enumerate() {
                    b[v] += s * self.rule.points[p][a];
                }
            }
        }
        Ok(FieldVector::new(b, self.level()))
    }

    /// `∫ g(q_h) dx` with the same rule as the loads.
    pub fn integrate(&self, q: &[f64], g: &dyn Fn(f64) -> f64) -> Result<f64> {
        self.check_field(q)?;
        let mut at = vec![0.0; self.rule.len()];
        let mut total = 0.0;
        for (c, cell) in self.mesh.cells().enumerate() {
            self.field_at_points(cell, q, &mut at);
            let mut acc = 0.0;
            for (&x, &w) in at.iter().zip(&self.rule.weights) {
                let gx = g(x);
                if !gx.is_finite() {
                    return Err(Error::Evaluation {
                        what: "integrand".into(),
                        value: x,
                    });
                }
                acc += w * gx;
            }
            total += self.geometry[c].volume * acc;
        }
        Ok(total)
    }

    /// Fallible variant of [`Self::integrate`] for integrands that can fail.
    pub fn try_integrate(&self, q: &[f64], g: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
        self.check_field(q)?;
        let mut at = vec![0.0; self.rule.len()];
        let mut total = 0.0;
        for (c, cell) in self.mesh.cells().enumerate() {
            self.field_at_points(cell, q, &mut at);
            let mut acc = 0.0;
            for (&x, &w) in at.iter().zip(&self.rule.weights) {
                acc += w * g(x)?;
            }
            total += self.geometry[c].volume * acc;
        }
        Ok(total)
    }

    /// Nodal interpolation of a function of the coordinates.
    pub fn interpolate(&self, f: impl Fn(&[f64]) -> f64) -> FieldVector {
        let values = (0..self.num_dofs()).map(|v| f(self.mesh.vertex(v))).collect();
        FieldVector::new(values, self.level())
    }

    /// Evaluates the P1 function `field` at a point.
    pub fn evaluate(&self, field: &[f64], point: &[f64]) -> Result<f64> {
        self.check_field(field)?;
        let (c, bary) = self.mesh.locate(point)?;
        Ok(self.mesh.cell(c).iter().enumerate().map(|(a, &v)| bary[a] * field[v]).sum())
    }
}

/// Exact embedding of a coarse P1 function into a nested fine space.
pub fn transfer_to_fine(coarse_field: &[f64], coarse: &FeSpace, fine: &FeSpace) -> Result<FieldVector> {
    coarse.check_field(coarse_field)?;
    if !coarse.mesh().is_nested_in(fine.mesh()) {
        return Err(Error::invalid(format!(
            "meshes are not nested (n={} into n={})",
            coarse.mesh().subdivisions(),
            fine.mesh().subdivisions()
        )));
    }
    let values = (0..fine.num_dofs())
        .map(|v| coarse.evaluate(coarse_field, fine.mesh().vertex(v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldVector::new(values, fine.level()))
}

/// The embedding of [`transfer_to_fine`] as a sparse `fine × coarse` matrix,
/// for transferring many fields between the same pair of spaces.
pub fn transfer_matrix(coarse: &FeSpace, fine: &FeSpace) -> Result<SparseMatrix> {
    if !coarse.mesh().is_nested_in(fine.mesh()) {
        return Err(Error::invalid(format!(
            "meshes are not nested (n={} into n={})",
            coarse.mesh().subdivisions(),
            fine.mesh().subdivisions()
        )));
    }
    let mut triplets = Vec::new();
    for v in 0..fine.num_dofs() {
        let (c, bary) = coarse.mesh().locate(fine.mesh().vertex(v))?;
        for (a, &w) in coarse.mesh().cell(c).iter().enumerate() {
            if bary[a] != 0.0 {
                triplets.push((v, w, bary[a]));
            }
        }
    }
    SparseMatrix::from_triplets(fine.num_dofs(), coarse.num_dofs(), &triplets)
}

/// `(1^T M field) / (1^T M 1)`: the integral mean.
pub fn mean_value(field: &[f64], mass: &SparseMatrix) -> f64 {
    let ones_mass = mass.mul_vec(&vec![1.0; field.len()]);
    let volume: f64 = ones_mass.iter().sum();
    crate::linalg::dot(&ones_mass, field) / volume
}

pub fn mean_free_part(field: &FieldVector, mass: &SparseMatrix) -> FieldVector {
    let mean = mean_value(field, mass);
    FieldVector::new(field.iter().map(|v| v - mean).collect(), field.mesh_level)
}
