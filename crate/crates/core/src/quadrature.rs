//! Degree-4 quadrature rules on simplices in barycentric form.
//!
//! Weights are normalized to sum to one, so a rule integrates over a cell
//! after multiplication by the cell volume. All weights are positive.

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Barycentric coordinates of each point (`dim + 1` used entries).
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn for_dim(dim: usize) -> Self {
        match dim {
            2 => triangle_degree4(),
            3 => tetrahedron_degree4(),
            _ => panic!("no quadrature rule for dimension {dim}"),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Symmetric 6-point rule on the triangle (Dunavant, degree 4).
fn triangle_degree4() -> QuadratureRule {
    const A1: f64 = 0.445_948_490_915_964_9;
    const W1: f64 = 0.223_381_589_678_011_5;
    const A2: f64 = 0.091_576_213_509_770_74;
    const W2: f64 = 0.109_951_743_655_321_9;
    let mut points = Vec::with_capacity(6);
    let mut weights = Vec::with_capacity(6);
    for (a, w) in [(A1, W1), (A2, W2)] {
        let b = 1.0 - 2.0 * a;
        for p in [[b, a, a, 0.0], [a, b, a, 0.0], [a, a, b, 0.0]] {
            points.push(p);
            weights.push(w);
        }
    }
    QuadratureRule { points, weights }
}

fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    // nodes/weights on [-1, 1], mapped to [0, 1]
    let raw: Vec<(f64, f64)> = match n {
        3 => {
            let x = (3.0f64 / 5.0).sqrt();
            vec![(-x, 5.0 / 9.0), (0.0, 8.0 / 9.0), (x, 5.0 / 9.0)]
        }
        4 => {
            let s = 2.0 / 7.0 * (6.0f64 / 5.0).sqrt();
            let (xi, xo) = ((3.0 / 7.0 - s).sqrt(), (3.0 / 7.0 + s).sqrt());
            let (wi, wo) = ((18.0 + 30f64.sqrt()) / 36.0, (18.0 - 30f64.sqrt()) / 36.0);
            vec![(-xo, wo), (-xi, wi), (xi, wi), (xo, wo)]
        }
        _ => unreachable!(),
    };
    raw.into_iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// Conical-product (collapsed Gauss) rule on the tetrahedron, exact for
/// degree 4 with 36 positive weights.
fn tetrahedron_degree4() -> QuadratureRule {
    let gu = gauss_legendre_unit(4);
    let gv = gauss_legendre_unit(3);
    let gw = gauss_legendre_unit(3);
    let mut points = Vec::with_capacity(36);
    let mut weights = Vec::with_capacity(36);
    for &(u, wu) in &gu {
        for &(v, wv) in &gv {
            for &(w, ww) in &gw {
                let x = u;
                let y = v * (1.0 - u);
                let z = w * (1.0 - u) * (1.0 - v);
                points.push([1.0 - x - y - z, x, y, z]);
                // reference volume is 1/6
                weights.push(6.0 * wu * wv * ww * (1.0 - u).powi(2) * (1.0 - v));
            }
        }
    }
    QuadratureRule { points, weights }
}
