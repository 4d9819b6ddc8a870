//! Discrete energy, mass, dissipation and balance bookkeeping.

use crate::error::Result;
use crate::fem::FeSpace;
use crate::linalg::{dot, SparseMatrix};
use crate::model::{EntropyFunction, ModelSpec};
use crate::operators::InverseLaplacianContext;

/// One row of the simulation time series.
///
/// `dissipation`, `forcing_work`, `forcing_mass` and `energy_balance_slack`
/// belong to the step that ended at `time` (zero for the initial report);
/// `mass_balance_residual` is accumulated from the start of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    /// `τ (m(φⁿ) ∇μⁿ⁺¹, ∇μⁿ⁺¹)`.
    pub dissipation: f64,
    /// `τ (f(φⁿ), μⁿ⁺¹)`.
    pub forcing_work: f64,
    /// `τ (f(φⁿ), 1)`.
    pub forcing_mass: f64,
    pub mass_balance_residual: f64,
    pub energy_balance_slack: f64,
    pub newton_iterations: usize,
    pub entropy: Option<f64>,
}

impl StepReport {
    pub fn initial(mass: f64, energy: f64, entropy: Option<f64>) -> Self {
        Self {
            step: 0,
            time: 0.0,
            mass,
            energy,
            dissipation: 0.0,
            forcing_work: 0.0,
            forcing_mass: 0.0,
            mass_balance_residual: 0.0,
            energy_balance_slack: 0.0,
            newton_iterations: 0,
            entropy,
        }
    }
}

/// `(φ, 1)`.
pub fn mass(ctx: &InverseLaplacianContext, phi: &[f64]) -> f64 {
    dot(ctx.ones_mass(), phi)
}

/// `ε²/2 |∇φ|² + ∫Ψ(φ) + κ/2 ‖φ - φ̄‖²_{H⁻¹_h}`.
pub fn discrete_energy(ctx: &InverseLaplacianContext, spec: &ModelSpec, phi: &[f64]) -> Result<f64> {
    let gradient = 0.5 * spec.epsilon_sq * ctx.stiffness().quad_form(phi);
    let potential = ctx.space().integrate(phi, &|x| spec.psi(x))?;
    let nonlocal = if spec.kappa == 0.0 {
        0.0
    } else {
        let mean = mass(ctx, phi) / ctx.domain_volume();
        let centered: Vec<f64> = phi.iter().map(|v| v - mean).collect();
        let w = ctx.inv_laplacian(&centered)?;
        0.5 * spec.kappa * dot(&ctx.mass().mul_vec(&centered), &w)
    };
    Ok(gradient + potential + nonlocal)
}

/// `μᵀ K_m μ`, without the time-step factor.
pub fn dissipation(weighted_stiffness: &SparseMatrix, mu: &[f64]) -> f64 {
    weighted_stiffness.quad_form(mu)
}

/// Mass residual and energy slack of the window spanned by `reports`
/// (first report is the window start).
pub fn balance_residuals(reports: &[StepReport]) -> (f64, f64) {
    let (Some(first), Some(last)) = (reports.first(), reports.last()) else {
        return (0.0, 0.0);
    };
    let steps = &reports[1..];
    let forced_mass: f64 = steps.iter().map(|r| r.forcing_mass).sum();
    let work: f64 = steps.iter().map(|r| r.forcing_work).sum();
    let dissipated: f64 = steps.iter().map(|r| r.dissipation).sum();
    let mass_residual = last.mass - first.mass - forced_mass;
    let energy_slack = first.energy + work - last.energy - dissipated;
    (mass_residual, energy_slack)
}

/// `∫ Φ(φ_h) dx` with the assembly quadrature.
pub fn entropy_integral(space: &FeSpace, entropy: &EntropyFunction, phi: &[f64]) -> Result<f64> {
    space.try_integrate(phi, &|x| entropy.value(x))
}
