//! Dense reference implementations used to check the sparse solver.
//!
//! Everything here is computed independently of the library's assembly:
//! gradients come from inverting the affine cell map and all polynomial
//! integrals use the exact barycentric monomial formula.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use okfem::SimplicialMesh;

pub struct DenseCell {
    pub vertices: Vec<usize>,
    pub volume: f64,
    pub grads: Vec<DVector<f64>>,
}

pub struct DenseFem {
    pub dim: usize,
    pub n: usize,
    pub cells: Vec<DenseCell>,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

impl DenseFem {
    pub fn new(mesh: &SimplicialMesh) -> Self {
        let dim = mesh.dim();
        let n = mesh.num_vertices();
        let mut cells = Vec::new();
        for cell in mesh.cells() {
            let x0 = DVector::from_column_slice(mesh.vertex(cell[0]));
            let mut jac = DMatrix::zeros(dim, dim);
            for j in 0..dim {
                let xj = DVector::from_column_slice(mesh.vertex(cell[j + 1]));
                jac.set_column(j, &(xj - &x0));
            }
            let volume = jac.determinant().abs() / factorial(dim);
            let inv_t = jac.try_inverse().expect("degenerate cell").transpose();
            // grad λ_j = J^{-T} e_{j-1} for j ≥ 1, grad λ_0 = -Σ
            let mut grads: Vec<DVector<f64>> = (0..dim).map(|j| inv_t.column(j).into_owned()).collect();
            let g0 = -grads.iter().fold(DVector::zeros(dim), |acc, g| acc + g);
            grads.insert(0, g0);
            cells.push(DenseCell {
                vertices: cell.to_vec(),
                volume,
                grads,
            });
        }
        let mut fem = Self {
            dim,
            n,
            cells,
            mass: DMatrix::zeros(n, n),
            stiffness: DMatrix::zeros(n, n),
        };
        fem.stiffness = fem.weighted_stiffness(&vec![1.0; fem.cells.len()]);
        fem.mass = fem.weighted_mass(&vec![0.0; n], 0);
        fem
    }

    /// `∫_T Π λ_a^{α_a} = |T| d! Π α_a! / (d + |α|)!`.
    pub fn monomial(&self, cell: usize, alpha: &[usize]) -> f64 {
        let total: usize = alpha.iter().sum();
        let num: f64 = alpha.iter().map(|&a| factorial(a)).product();
        self.cells[cell].volume * factorial(self.dim) * num / factorial(self.dim + total)
    }

    /// Exact `∫_T φ_h^p λ_extra...` for a P1 field `phi`.
    fn power_integral(&self, cell: usize, phi: &[f64], p: usize, extra: &[usize]) -> f64 {
        let k = self.dim + 1;
        let verts = &self.cells[cell].vertices;
        let mut total = 0.0;
        let combos = k.pow(p as u32);
        for code in 0..combos {
            let mut alpha = vec![0usize; k];
            for &e in extra {
                alpha[e] += 1;
            }
            let mut c = code;
            let mut coef = 1.0;
            for _ in 0..p {
                let a = c % k;
                c /= k;
                alpha[a] += 1;
                coef *= phi[verts[a]];
            }
            total += coef * self.monomial(cell, &alpha);
        }
        total
    }

    /// `∫ φ_h^p λ_i`.
    pub fn power_load(&self, phi: &[f64], p: usize) -> DVector<f64> {
        let mut b = DVector::zeros(self.n);
        for (c, cell) in self.cells.iter().enumerate() {
            for (a, &i) in cell.vertices.iter().enumerate() {
                b[i] += self.power_integral(c, phi, p, &[a]);
            }
        }
        b
    }

    /// `∫ φ_h^p λ_i λ_j`.
    pub fn weighted_mass(&self, phi: &[f64], p: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (c, cell) in self.cells.iter().enumerate() {
            for (a, &i) in cell.vertices.iter().enumerate() {
                for (b, &j) in cell.vertices.iter().enumerate() {
                    m[(i, j)] += self.power_integral(c, phi, p, &[a, b]);
                }
            }
        }
        m
    }

    /// Cell mean of `φ_h^p`.
    pub fn cell_mean_power(&self, cell: usize, phi: &[f64], p: usize) -> f64 {
        self.power_integral(cell, phi, p, &[]) / self.cells[cell].volume
    }

    /// `Σ_T w_T |T| ∇λ_i·∇λ_j`.
    pub fn weighted_stiffness(&self, weights: &[f64]) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.n, self.n);
        for (cell, &w) in self.cells.iter().zip(weights) {
            for (a, &i) in cell.vertices.iter().enumerate() {
                for (b, &j) in cell.vertices.iter().enumerate() {
                    k[(i, j)] += w * cell.volume * cell.grads[a].dot(&cell.grads[b]);
                }
            }
        }
        k
    }

    /// Cell weights of the quartic mobility `floor + (1 - φ²)²/16`.
    pub fn quartic_mobility_weights(&self, phi: &[f64], floor: f64) -> Vec<f64> {
        (0..self.cells.len())
            .map(|c| {
                let p2 = self.cell_mean_power(c, phi, 2);
                let p4 = self.cell_mean_power(c, phi, 4);
                floor + (1.0 - 2.0 * p2 + p4) / 16.0
            })
            .collect()
    }

    pub fn ones_mass(&self) -> DVector<f64> {
        &self.mass * DVector::from_element(self.n, 1.0)
    }

    /// Solves `[[A, c], [cᵀ, 0]] [w; λ] = [M v; 0]` densely.
    pub fn bordered_solve(&self, a: &DMatrix<f64>, v: &[f64]) -> (DVector<f64>, f64) {
        let n = self.n;
        let c = self.ones_mass();
        let mut big = DMatrix::zeros(n + 1, n + 1);
        big.view_mut((0, 0), (n, n)).copy_from(a);
        for i in 0..n {
            big[(i, n)] = c[i];
            big[(n, i)] = c[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(&self.mass * DVector::from_column_slice(v)));
        let x = big.lu().solve(&rhs).expect("singular bordered system");
        (x.rows(0, n).into_owned(), x[n])
    }

    /// Quartic-model residual of one time step, unknowns `[φ, μ, ν, λ]`.
    pub fn step_residual(&self, p: &StepParams, phi_n: &[f64], x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let phi = x.rows(0, n).into_owned();
        let mu = x.rows(n, n).into_owned();
        let nu = x.rows(2 * n, n).into_owned();
        let lambda = x[3 * n];
        let phin = DVector::from_column_slice(phi_n);
        let c = self.ones_mass();
        let km = self.weighted_stiffness(&self.quartic_mobility_weights(phi_n, p.floor));
        // 0.1 (1 - φ²) for |φ| < 1
        let forcing = if p.logistic {
            (self.ones_mass() - self.power_load(phi_n, 2)) * 0.1
        } else {
            DVector::zeros(n)
        };
        let cubic = self.power_load(phi.as_slice(), 3);
        let mut r = DVector::zeros(3 * n + 1);
        r.rows_mut(0, n)
            .copy_from(&(&self.mass * (&phi - &phin) / p.tau + &km * &mu - forcing));
        r.rows_mut(n, n).copy_from(
            &(&self.stiffness * &phi * p.epsilon_sq + cubic - &self.mass * &phin + &self.mass * &nu * p.kappa
                - &self.mass * &mu),
        );
        r.rows_mut(2 * n, n)
            .copy_from(&(&self.stiffness * &nu + &c * lambda - &self.mass * &phi));
        r[3 * n] = c.dot(&nu);
        r
    }

    fn step_jacobian(&self, p: &StepParams, phi_n: &[f64], x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n;
        let phi: Vec<f64> = x.rows(0, n).iter().copied().collect();
        let km = self.weighted_stiffness(&self.quartic_mobility_weights(phi_n, p.floor));
        let c = self.ones_mass();
        let mut j = DMatrix::zeros(3 * n + 1, 3 * n + 1);
        j.view_mut((0, 0), (n, n)).copy_from(&(&self.mass / p.tau));
        j.view_mut((0, n), (n, n)).copy_from(&km);
        j.view_mut((n, 0), (n, n))
            .copy_from(&(&self.stiffness * p.epsilon_sq + self.weighted_mass(&phi, 2) * 3.0));
        j.view_mut((n, n), (n, n)).copy_from(&(-&self.mass));
        j.view_mut((n, 2 * n), (n, n)).copy_from(&(&self.mass * p.kappa));
        j.view_mut((2 * n, 0), (n, n)).copy_from(&(-&self.mass));
        j.view_mut((2 * n, 2 * n), (n, n)).copy_from(&self.stiffness);
        for i in 0..n {
            j[(2 * n + i, 3 * n)] = c[i];
            j[(3 * n, 2 * n + i)] = c[i];
        }
        j
    }

    /// Full Newton on the stacked `3N+1` system with dense LU, started from
    /// `[φⁿ, 0, 0, 0]`.
    pub fn newton_step(&self, p: &StepParams, phi_n: &[f64]) -> DVector<f64> {
        let n = self.n;
        let mut x = DVector::zeros(3 * n + 1);
        x.rows_mut(0, n).copy_from_slice(phi_n);
        for _ in 0..50 {
            let r = self.step_residual(p, phi_n, &x);
            if r.amax() < 1e-14 {
                return x;
            }
            let dx = self.step_jacobian(p, phi_n, &x).lu().solve(&r).expect("singular Jacobian");
            x -= dx;
        }
        panic!("dense Newton did not converge");
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepParams {
    pub tau: f64,
    pub epsilon_sq: f64,
    pub kappa: f64,
    pub floor: f64,
    pub logistic: bool,
}

/// Smooth nodal data with values well inside `(-1, 1)`.
pub fn smooth_state(mesh: &SimplicialMesh, shift: f64) -> Vec<f64> {
    (0..mesh.num_vertices())
        .map(|v| {
            let x = mesh.vertex(v);
            let s: f64 = x.iter().enumerate().map(|(i, xi)| (i as f64 + 1.0) * xi).sum();
            shift + 0.4 * (3.0 * s).sin() * (1.0 - 0.5 * x[0])
        })
        .collect()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// One criterion line on the terminal, bypassing libtest's output capture.
pub fn report(id: &str, pass: bool, detail: &str) {
    use std::io::Write;
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] {id} {detail}");
}
