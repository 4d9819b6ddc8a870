//! Structured conforming simplicial meshes of the unit square and cube.
//!
//! Vertices are numbered lexicographically by their `(z, y, x)` grid index.
//! Cells are stored cube by cube in the same order; each grid square is split
//! into two triangles along its lower-left to upper-right diagonal, each grid
//! cube into the six tetrahedra of its Kuhn subdivision.

use crate::error::{Error, Result};

/// Kuhn simplices of the unit cube, one per axis permutation.
const KUHN_PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMesh {
    dim: usize,
    n: usize,
    level: u32,
    /// Flat coordinates, `dim` entries per vertex.
    coords: Vec<f64>,
    /// Flat connectivity, `dim + 1` entries per cell.
    cells: Vec<usize>,
}

/// Constant barycentric gradients and volume of one simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    /// Gradients of the `dim + 1` barycentric coordinates; unused
    /// components and rows are zero.
    pub grads: [[f64; 3]; 4],
    pub volume: f64,
}

impl CellGeometry {
    pub fn grad_dot(&self, a: usize, b: usize) -> f64 {
        let (ga, gb) = (self.grads[a], self.grads[b]);
        ga[0] * gb[0] + ga[1] * gb[1] + ga[2] * gb[2]
    }
}

/// Builds the structured mesh of `(0,1)^dim` with `n` subdivisions per axis.
pub fn build_structured_mesh(dim: usize, n: usize) -> Result<SimplicialMesh> {
    if dim != 2 && dim != 3 {
        return Err(Error::invalid(format!("mesh dimension must be 2 or 3, got {dim}")));
    }
    if n == 0 {
        return Err(Error::invalid("mesh needs at least one subdivision per axis"));
    }
    let np = n + 1;
    let h = n as f64;
    let mut coords = Vec::with_capacity(np.pow(dim as u32) * dim);
    let mut cells;
    if dim == 2 {
        for j in 0..np {
            for i in 0..np {
                coords.push(i as f64 / h);
                coords.push(j as f64 / h);
            }
        }
        cells = Vec::with_capacity(2 * n * n * 3);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                cells.extend_from_slice(&[v00, v10, v11]);
                cells.extend_from_slice(&[v00, v11, v01]);
            }
        }
    } else {
        for k in 0..np {
            for j in 0..np {
                for i in 0..np {
                    coords.push(i as f64 / h);
                    coords.push(j as f64 / h);
                    coords.push(k as f64 / h);
                }
            }
        }
        let stride = [1, np, np * np];
        cells = Vec::with_capacity(6 * n * n * n * 4);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let base = (k * np + j) * np + i;
                    for (t, perm) in KUHN_PERMUTATIONS.iter().enumerate() {
                        let v0 = base;
                        let v1 = v0 + stride[perm[0]];
                        let v2 = v1 + stride[perm[1]];
                        let v3 = v2 + stride[perm[2]];
                        // odd permutations come out negatively oriented
                        if t == 0 || t == 3 || t == 4 {
                            cells.extend_from_slice(&[v0, v1, v2, v3]);
                        } else {
                            cells.extend_from_slice(&[v0, v2, v1, v3]);
                        }
                    }
                }
            }
        }
    }
    Ok(SimplicialMesh {
        dim,
        n,
        level: 0,
        coords,
        cells,
    })
}

/// Uniform refinement: the structured mesh with twice as many subdivisions.
pub fn refine_uniform(mesh: &SimplicialMesh) -> SimplicialMesh {
    let mut fine = build_structured_mesh(mesh.dim, 2 * mesh.n)
        .expect("refining a valid mesh cannot fail");
    fine.level = mesh.level + 1;
    fine
}

/// Barycentric gradients and volume of a cell.
pub fn barycentric_gradients(mesh: &SimplicialMesh, cell: usize) -> Result<CellGeometry> {
    let vs = mesh.cell(cell);
    let x0 = mesh.vertex(vs[0]);
    let mut geom = CellGeometry {
        grads: [[0.0; 3]; 4],
        volume: 0.0,
    };
    if mesh.dim == 2 {
        let (x1, x2) = (mesh.vertex(vs[1]), mesh.vertex(vs[2]));
        let (a, b) = (x1[0] - x0[0], x2[0] - x0[0]);
        let (c, d) = (x1[1] - x0[1], x2[1] - x0[1]);
        let det = a * d - b * c;
        if !(det > 0.0) {
            return Err(Error::Geometry(format!("cell {cell} is degenerate or inverted (det {det})")));
        }
        // rows of the inverse of [[a, b], [c, d]]
        geom.grads[1] = [d / det, -b / det, 0.0];
        geom.grads[2] = [-c / det, a / det, 0.0];
        geom.volume = det / 2.0;
    } else {
        let (x1, x2, x3) = (mesh.vertex(vs[1]), mesh.vertex(vs[2]), mesh.vertex(vs[3]));
        let e: [[f64; 3]; 3] = [
            [x1[0] - x0[0], x1[1] - x0[1], x1[2] - x0[2]],
            [x2[0] - x0[0], x2[1] - x0[1], x2[2] - x0[2]],
            [x3[0] - x0[0], x3[1] - x0[1], x3[2] - x0[2]],
        ];
        let cross = |u: [f64; 3], v: [f64; 3]| {
            [
                u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                u[0] * v[1] - u[1] * v[0],
            ]
        };
        let c12 = cross(e[1], e[2]);
        let det = e[0][0] * c12[0] + e[0][1] * c12[1] + e[0][2] * c12[2];
        if !(det > 0.0) {
            return Err(Error::Geometry(format!("cell {cell} is degenerate or inverted (det {det})")));
        }
        // gradient of lambda_k is the k-th row of J^{-1}, J = [e0 e1 e2] by columns
        let c20 = cross(e[2], e[0]);
        let c01 = cross(e[0], e[1]);
        for (k, c) in [c12, c20, c01].into_iter().enumerate() {
            geom.grads[k + 1] = [c[0] / det, c[1] / det, c[2] / det];
        }
        geom.volume = det / 6.0;
    }
    for d in 0..3 {
        geom.grads[0][d] = -(1..=mesh.dim).map(|k| geom.grads[k][d]).sum::<f64>();
    }
    Ok(geom)
}

impl SimplicialMesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Subdivisions per axis.
    pub fn subdivisions(&self) -> usize {
        self.n
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn with_level(mut self, level: u32) -> Self {
        self.level = level;
        self
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn vertices_per_cell(&self) -> usize {
        self.dim + 1
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks_exact(self.dim + 1)
    }

    /// Diameter of the largest cell: `sqrt(dim) / n` for the structured mesh.
    pub fn mesh_size(&self) -> f64 {
        (self.dim as f64).sqrt() / self.n as f64
    }

    /// Index of the vertex at integer grid position `idx` (x, y\[, z\]).
    pub fn grid_vertex(&self, idx: &[usize]) -> usize {
        let np = self.n + 1;
        match self.dim {
            2 => idx[1] * np + idx[0],
            _ => (idx[2] * np + idx[1]) * np + idx[0],
        }
    }

    /// Finds a cell containing `point` together with the barycentric
    /// coordinates of the point in that cell.
    pub fn locate(&self, point: &[f64]) -> Result<(usize, [f64; 4])> {
        if point.len() != self.dim {
            return Err(Error::invalid("point dimension does not match mesh"));
        }
        let tol = 1e-12;
        let n = self.n as f64;
        let mut cube = [0usize; 3];
        let mut local = [0.0f64; 3];
        for d in 0..self.dim {
            let x = point[d];
            if !(-tol..=1.0 + tol).contains(&x) {
                return Err(Error::invalid(format!("point {point:?} lies outside the unit domain")));
            }
            let s = (x * n).clamp(0.0, n);
            let c = (s.floor() as usize).min(self.n - 1);
            cube[d] = c;
            local[d] = s - c as f64;
        }
        let np = self.n;
        let cell = if self.dim == 2 {
            let sq = cube[1] * np + cube[0];
            2 * sq + usize::from(local[1] > local[0])
        } else {
            let cb = (cube[2] * np + cube[1]) * np + cube[0];
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| local[b].total_cmp(&local[a]));
            let t = KUHN_PERMUTATIONS
                .iter()
                .position(|p| *p == order)
                .expect("every ordering is a Kuhn permutation");
            6 * cb + t
        };
        let geom = barycentric_gradients(self, cell)?;
        let x0 = self.vertex(self.cell(cell)[0]);
        let mut bary = [0.0; 4];
        for (k, b) in bary.iter_mut().enumerate().take(self.dim + 1).skip(1) {
            *b = (0..self.dim).map(|d| geom.grads[k][d] * (point[d] - x0[d])).sum();
        }
        bary[0] = 1.0 - bary[1..=self.dim].iter().sum::<f64>();
        Ok((cell, bary))
    }

    /// Whether every vertex of `self` is a vertex of `fine` (nested
    /// structured meshes of the same dimension).
    pub fn is_nested_in(&self, fine: &SimplicialMesh) -> bool {
        self.dim == fine.dim && fine.n >= self.n && fine.n.is_multiple_of(self.n)
    }

    /// For nested meshes, maps each vertex of `self` to the coincident
    /// vertex of `fine`.
    pub fn vertex_map_into(&self, fine: &SimplicialMesh) -> Result<Vec<usize>> {
        if !self.is_nested_in(fine) {
            return Err(Error::invalid(format!(
                "mesh with n={} is not nested in mesh with n={}",
                self.n, fine.n
            )));
        }
        let r = fine.n / self.n;
        let np = self.n + 1;
        let map = (0..self.num_vertices())
            .map(|v| {
                let i = v % np;
                let j = (v / np) % np;
                let k = v / (np * np);
                fine.grid_vertex(&[r * i, r * j, r * k])
            })
            .collect();
        Ok(map)
    }
}
