//! Scalar constitutive ingredients: the convex-concave potential split,
//! mobility, forcing, their `delta`-regularizations and the entropy function.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn scalar_map(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ScalarMap {
    Arc::new(f)
}

/// A C² scalar function bundled with its first two derivatives.
#[derive(Clone)]
pub struct SmoothMap {
    pub value: ScalarMap,
    pub d1: ScalarMap,
    pub d2: ScalarMap,
}

impl SmoothMap {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            d1: Arc::new(d1),
            d2: Arc::new(d2),
        }
    }
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SmoothMap")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forcing {
    None,
    /// `f(x) = max(0, 1 - x²) / 10`.
    Logistic,
}

/// Model parameters and constitutive maps.
#[derive(Clone)]
pub struct ModelSpec {
    pub epsilon_sq: f64,
    pub kappa: f64,
    /// Convex part, treated implicitly.
    pub psi1: SmoothMap,
    /// Concave part, treated explicitly.
    pub psi2: SmoothMap,
    pub mobility: ScalarMap,
    pub forcing: ScalarMap,
    pub mobility_floor: f64,
    pub delta: Option<f64>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("epsilon_sq", &self.epsilon_sq)
            .field("kappa", &self.kappa)
            .field("mobility_floor", &self.mobility_floor)
            .field("delta", &self.delta)
            .finish_non_exhaustive()
    }
}

pub const QUARTIC_EPSILON_SQ: f64 = 1e-3;
pub const QUARTIC_MOBILITY_FLOOR: f64 = 1e-14;

/// Quartic double well `(x² - 1)² / 4` split as `(x⁴ + 1)/4 - x²/2`, mobility
/// `floor + (1 - x²)²/16`, no forcing.
pub fn builtin_quartic_model() -> ModelSpec {
    quartic_model_with_floor(QUARTIC_MOBILITY_FLOOR)
}

pub fn quartic_model_with_floor(floor: f64) -> ModelSpec {
    ModelSpec {
        epsilon_sq: QUARTIC_EPSILON_SQ,
        kappa: 0.0,
        psi1: SmoothMap::new(|x| 0.25 * (x.powi(4) + 1.0), |x| x.powi(3), |x| 3.0 * x * x),
        psi2: SmoothMap::new(|x| -0.5 * x * x, |x| -x, |_| -1.0),
        mobility: scalar_map(move |x| floor + (1.0 - x * x).powi(2) / 16.0),
        forcing: scalar_map(|_| 0.0),
        mobility_floor: floor,
        delta: None,
    }
}

pub fn forcing_map(kind: Forcing) -> ScalarMap {
    match kind {
        Forcing::None => scalar_map(|_| 0.0),
        Forcing::Logistic => scalar_map(|x| 0.1 * (1.0 - x * x).max(0.0)),
    }
}

impl ModelSpec {
    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_forcing(mut self, kind: Forcing) -> Self {
        self.forcing = forcing_map(kind);
        self
    }

    pub fn with_epsilon_sq(mut self, epsilon_sq: f64) -> Self {
        self.epsilon_sq = epsilon_sq;
        self
    }

    pub fn with_delta(mut self, delta: Option<f64>) -> Self {
        self.delta = delta;
        self
    }

    /// Full potential `Ψ = Ψ₁ + Ψ₂`.
    pub fn psi(&self, x: f64) -> f64 {
        (self.psi1.value)(x) + (self.psi2.value)(x)
    }

    pub fn psi_d1(&self, x: f64) -> f64 {
        (self.psi1.d1)(x) + (self.psi2.d1)(x)
    }

    pub fn psi_d2(&self, x: f64) -> f64 {
        (self.psi1.d2)(x) + (self.psi2.d2)(x)
    }

    /// Checks the structural hypotheses on a grid over `range`: convex
    /// `Ψ₁`, concave `Ψ₂`, mobility bounded below by a positive floor,
    /// nonnegative bounded forcing.
    pub fn validate(&self, range: (f64, f64), samples: usize) -> Result<()> {
        if !(self.epsilon_sq > 0.0) {
            return Err(Error::Model(format!("epsilon^2 must be positive, got {}", self.epsilon_sq)));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Model(format!("kappa must be nonnegative, got {}", self.kappa)));
        }
        if !(self.mobility_floor > 0.0) {
            return Err(Error::Model("mobility floor must be positive".into()));
        }
        if let Some(d) = self.delta {
            check_delta(d)?;
        }
        let samples = samples.max(2);
        for i in 0..samples {
            let x = range.0 + (range.1 - range.0) * i as f64 / (samples - 1) as f64;
            if (self.psi1.d2)(x) < 0.0 {
                return Err(Error::Model(format!("psi1 is not convex at {x}")));
            }
            if (self.psi2.d2)(x) > 0.0 {
                return Err(Error::Model(format!("psi2 is not concave at {x}")));
            }
            let m = (self.mobility)(x);
            if !(m >= self.mobility_floor) {
                return Err(Error::Model(format!("mobility {m:e} below floor at {x}")));
            }
            let f = (self.forcing)(x);
            if !(f >= 0.0 && f.is_finite()) {
                return Err(Error::Model(format!("forcing {f} is negative or unbounded at {x}")));
            }
        }
        Ok(())
    }
}

/// `Ψ₁'(a) + Ψ₂'(b)`: implicit convex part, explicit concave part.
pub fn split_potential_derivative(spec: &ModelSpec, a: f64, b: f64) -> Result<f64> {
    let v = (spec.psi1.d1)(a) + (spec.psi2.d1)(b);
    if !v.is_finite() {
        return Err(Error::Evaluation {
            what: "split potential derivative".into(),
            value: if (spec.psi1.d1)(a).is_finite() { b } else { a },
        });
    }
    Ok(v)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("regularization width must lie in (0,1), got {delta}")));
    }
    Ok(())
}

/// Three-branch clamp of `m` at `±(1 - delta)`.
pub fn regularized_mobility(mobility: &ScalarMap, delta: f64) -> Result<ScalarMap> {
    check_delta(delta)?;
    let lo = (mobility)(delta - 1.0);
    let hi = (mobility)(1.0 - delta);
    let m = mobility.clone();
    Ok(scalar_map(move |x| {
        if x <= delta - 1.0 {
            lo
        } else if x >= 1.0 - delta {
            hi
        } else {
            m(x)
        }
    }))
}

/// `Ψ_{1,δ}` (clamped curvature, quadratic continuation beyond `±(1-δ)`)
/// and `Ψ̄₂` (quadratic continuation beyond `±1`).
#[derive(Debug, Clone)]
pub struct RegularizedPotential {
    pub psi1: SmoothMap,
    pub psi2: SmoothMap,
}

impl RegularizedPotential {
    pub fn psi(&self, x: f64) -> f64 {
        (self.psi1.value)(x) + (self.psi2.value)(x)
    }

    pub fn psi_d2(&self, x: f64) -> f64 {
        (self.psi1.d2)(x) + (self.psi2.d2)(x)
    }
}

/// Second-order Taylor continuation of `f` beyond the seams `lo` and `hi`.
fn quadratic_continuation(f: &SmoothMap, lo: f64, hi: f64) -> SmoothMap {
    let at = |s: f64| ((f.value)(s), (f.d1)(s), (f.d2)(s));
    let (l0, l1, l2) = at(lo);
    let (h0, h1, h2) = at(hi);
    let (v, d1, d2) = (f.value.clone(), f.d1.clone(), f.d2.clone());
    SmoothMap::new(
        move |x| {
            if x < lo {
                let t = x - lo;
                l0 + l1 * t + 0.5 * l2 * t * t
            } else if x > hi {
                let t = x - hi;
                h0 + h1 * t + 0.5 * h2 * t * t
            } else {
                v(x)
            }
        },
        move |x| {
            if x < lo {
                l1 + l2 * (x - lo)
            } else if x > hi {
                h1 + h2 * (x - hi)
            } else {
                d1(x)
            }
        },
        move |x| {
            if x < lo {
                l2
            } else if x > hi {
                h2
            } else {
                d2(x)
            }
        },
    )
}

pub fn regularized_potential(spec: &ModelSpec, delta: f64) -> Result<RegularizedPotential> {
    check_delta(delta)?;
    // Clamping Ψ₁'' and integrating twice from the data at 0 reproduces Ψ₁
    // inside the safe interval and its Taylor polynomial outside.
    Ok(RegularizedPotential {
        psi1: quadratic_continuation(&spec.psi1, delta - 1.0, 1.0 - delta),
        psi2: quadratic_continuation(&spec.psi2, -1.0, 1.0),
    })
}

/// Entropy `Φ` with `Φ'' = 1/m`, `Φ(0) = Φ'(0) = 0`, for a strictly
/// positive mobility (the clamped one when a width is given).
#[derive(Clone)]
pub struct EntropyFunction {
    inv_mobility: ScalarMap,
    /// Kinks of the integrand.
    seams: Vec<f64>,
}

const ENTROPY_REL_TOL: f64 = 1e-10;

pub fn entropy_function(spec: &ModelSpec, delta: Option<f64>) -> Result<EntropyFunction> {
    let (m, seams) = match delta {
        Some(d) => (regularized_mobility(&spec.mobility, d)?, vec![d - 1.0, 1.0 - d]),
        None => (spec.mobility.clone(), Vec::new()),
    };
    Ok(EntropyFunction {
        inv_mobility: scalar_map(move |x| 1.0 / m(x)),
        seams,
    })
}

impl EntropyFunction {
    fn pieces(&self, x: f64) -> Vec<(f64, f64)> {
        let (a, b) = if x >= 0.0 { (0.0, x) } else { (x, 0.0) };
        let mut cuts = vec![a];
        cuts.extend(self.seams.iter().copied().filter(|&s| s > a && s < b));
        cuts.push(b);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// `Φ(x) = ∫₀^x (x - z)/m(z) dz`.
    pub fn value(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Ok(0.0);
        }
        let g = |z: f64| (x - z) * (self.inv_mobility)(z);
        let sign = if x >= 0.0 { 1.0 } else { -1.0 };
        let mut total = 0.0;
        for (a, b) in self.pieces(x) {
            total += adaptive_simpson(&g, a, b, ENTROPY_REL_TOL)?;
        }
        Ok(sign * total)
    }

    /// `Φ'(x) = ∫₀^x 1/m(z) dz`.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let sign = if x >= 0.0 { 1.0 } else { -1.0 };
        let mut total = 0.0;
        for (a, b) in self.pieces(x) {
            total += adaptive_simpson(&|z| (self.inv_mobility)(z), a, b, ENTROPY_REL_TOL)?;
        }
        Ok(sign * total)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        (self.inv_mobility)(x)
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to relative tolerance
/// `rel_tol` of the integral magnitude.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // coarse magnitude estimate sets the absolute target
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    let eps = rel_tol * scale;
    let v = simpson_step(f, a, b, fa, fm, fb, whole, eps, 60)?;
    if !v.is_finite() {
        return Err(Error::Evaluation {
            what: "entropy quadrature".into(),
            value: b,
        });
    }
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * eps {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Evaluation {
            what: format!("adaptive quadrature did not converge on [{a}, {b}]"),
            value: m,
        });
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)?)
}
