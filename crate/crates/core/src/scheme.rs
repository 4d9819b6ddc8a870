//! The fully discrete time step and the outer time loop.
//!
//! Each step solves, for `(φ, μ, ν, λ)` with `φⁿ` given,
//!
//! ```text
//! M(φ - φⁿ)/τ + K_{m(φⁿ)} μ                 = (f(φⁿ), ·)
//! ε² K φ + (Ψ₁'(φ), ·) + (Ψ₂'(φⁿ), ·) + κ M ν - M μ = 0
//! K ν + λ M·1                                = M φ
//! (M·1)ᵀ ν                                   = 0
//! ```
//!
//! monolithically with Newton's method. Only `(Ψ₁'(φ), ·)` is nonlinear; its
//! Jacobian is the mass matrix weighted by `Ψ₁''(φ)`.

use crate::diagnostics::{self, StepReport};
use crate::error::{Error, Result};
use crate::fem::{FeSpace, FieldVector};
use crate::linalg::{dot, norm2, BorderedLu, SparseMatrix};
use crate::model::{entropy_function, ModelSpec};
use crate::operators::InverseLaplacianContext;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub tau: f64,
    pub t_end: f64,
    pub newton_rel_tol: f64,
    pub newton_abs_tol: f64,
    pub newton_max_iter: usize,
    /// Keep a Jacobian factorization across iterations and steps while it
    /// still contracts the residual (chord iterations).
    pub reuse_jacobian: bool,
}

impl SchemeConfig {
    pub fn new(tau: f64, t_end: f64) -> Self {
        Self {
            tau,
            t_end,
            newton_rel_tol: 1e-10,
            newton_abs_tol: 1e-12,
            newton_max_iter: 25,
            reuse_jacobian: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("time step must be positive, got {}", self.tau)));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::invalid(format!("final time must be nonnegative, got {}", self.t_end)));
        }
        if !(self.newton_rel_tol > 0.0 && self.newton_abs_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::invalid("Newton tolerances and iteration limit must be positive"));
        }
        Ok(())
    }

    /// `T / τ`, which must be an integer up to rounding.
    pub fn num_steps(&self) -> Result<usize> {
        self.validate()?;
        let ratio = self.t_end / self.tau;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::invalid(format!(
                "final time {} is not a multiple of the step {}",
                self.t_end, self.tau
            )));
        }
        Ok(steps as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub phi_next: FieldVector,
    pub mu_next: FieldVector,
    pub nu_next: FieldVector,
    pub lagrange_multiplier: f64,
    pub newton_iterations: usize,
    pub final_residual: f64,
    /// Residual norm before each Newton iteration and after the last one.
    pub residual_trace: Vec<f64>,
}

/// Starting point of the Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    /// `φ = φⁿ` with `μ`, `ν` from the linear equations at `φⁿ`.
    Lagged,
    /// All unknowns zero.
    Zero,
}

/// Chemical potential and nonlocal field consistent with `phi`:
/// `ν = (-Δ_h)^{-1}(φ - φ̄)` and `M μ = ε² K φ + (Ψ'(φ), ·) + κ M ν`.
/// Returns `(μ, ν, φ̄)`.
pub fn chemical_potential(
    ctx: &InverseLaplacianContext,
    spec: &ModelSpec,
    phi: &FieldVector,
) -> Result<(FieldVector, FieldVector, f64)> {
    let space = ctx.space();
    let mean = diagnostics::mass(ctx, phi) / ctx.domain_volume();
    let nu = ctx.inv_laplacian(phi)?;
    let psi = space.assemble_nonlinear_load(phi, &|x| spec.psi_d1(x))?;
    let kphi = ctx.stiffness().mul_vec(phi);
    let mnu = ctx.mass().mul_vec(&nu);
    let rhs: Vec<f64> = (0..phi.len())
        .map(|i| spec.epsilon_sq * kphi[i] + psi[i] + spec.kappa * mnu[i])
        .collect();
    let mu = ctx.solve_mass(&rhs)?;
    Ok((FieldVector::new(mu, space.level()), nu, mean))
}

/// Chord iterations continue while each one reduces the residual at least
/// by this factor.
const CHORD_CONTRACTION: f64 = 0.1;

/// Per-step data that depends only on `φⁿ`.
struct Lagged {
    mobility_stiffness: SparseMatrix,
    forcing: Vec<f64>,
    concave: Vec<f64>,
    mass_phi_n: Vec<f64>,
}

/// Newton solver for the time step; keeps the sparse LU analysis between
/// steps since the Jacobian pattern never changes.
pub struct Stepper<'a> {
    ctx: &'a InverseLaplacianContext,
    spec: &'a ModelSpec,
    cfg: SchemeConfig,
    lu: BorderedLu,
    factored: bool,
    /// `(0, 0, M·1)`: the multiplier column and the constraint row.
    border: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(ctx: &'a InverseLaplacianContext, spec: &'a ModelSpec, cfg: SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        if !(spec.epsilon_sq > 0.0) || !(spec.kappa >= 0.0) {
            return Err(Error::Model("epsilon^2 must be positive and kappa nonnegative".into()));
        }
        Ok(Self {
            ctx,
            spec,
            cfg,
            lu: BorderedLu::new(),
            factored: false,
            border: [vec![0.0; 2 * ctx.space().num_dofs()], ctx.ones_mass().to_vec()].concat(),
        })
    }

    fn space(&self) -> &FeSpace {
        self.ctx.space()
    }

    fn lagged(&self, phi_n: &FieldVector) -> Result<Lagged> {
        let space = self.space();
        let m = self.spec.mobility.clone();
        let mobility_stiffness = space
            .assemble_weighted_stiffness(phi_n, &move |x| {
                let v = m(x);
                if v > 0.0 {
                    v
                } else {
                    f64::NAN
                }
            })
            .map_err(|e| match e {
                Error::Evaluation { value, .. } => Error::Model(format!(
                    "mobility is not strictly positive at state value {value}"
                )),
                other => other,
            })?;
        let forcing = space.assemble_nonlinear_load(phi_n, &*self.spec.forcing)?.values;
        let concave = space.assemble_nonlinear_load(phi_n, &*self.spec.psi2.d1)?.values;
        let mass_phi_n = self.ctx.mass().mul_vec(phi_n);
        Ok(Lagged {
            mobility_stiffness,
            forcing,
            concave,
            mass_phi_n,
        })
    }

    fn residual(&self, lag: &Lagged, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.space().num_dofs();
        let (phi, rest) = x.split_at(n);
        let (mu, rest) = rest.split_at(n);
        let (nu, lambda) = rest.split_at(n);
        let lambda = lambda[0];
        let tau = self.cfg.tau;
        let (m, k, c) = (self.ctx.mass(), self.ctx.stiffness(), self.ctx.ones_mass());
        let mphi = m.mul_vec(phi);
        let mmu = m.mul_vec(mu);
        let mnu = m.mul_vec(nu);
        let kphi = k.mul_vec(phi);
        let knu = k.mul_vec(nu);
        let kmmu = lag.mobility_stiffness.mul_vec(mu);
        let convex = self.space().assemble_nonlinear_load(phi, &*self.spec.psi1.d1)?;
        let mut r = vec![0.0; 3 * n + 1];
        for i in 0..n {
            r[i] = (mphi[i] - lag.mass_phi_n[i]) / tau + kmmu[i] - lag.forcing[i];
            r[n + i] = self.spec.epsilon_sq * kphi[i] + convex[i] + lag.concave[i] + self.spec.kappa * mnu[i] - mmu[i];
            r[2 * n + i] = knu[i] + lambda * c[i] - mphi[i];
        }
        r[3 * n] = dot(c, nu);
        Ok(r)
    }

    /// Jacobian without the mean-constraint border, which is handled by
    /// [`BorderedLu`].
    fn jacobian(&self, lag: &Lagged, phi: &[f64]) -> Result<SparseMatrix> {
        let space = self.space();
        let n = space.num_dofs();
        let curvature = space.assemble_weighted_mass(phi, &*self.spec.psi1.d2)?;
        let (m, k) = (self.ctx.mass(), self.ctx.stiffness());
        let (rp, ci) = (m.row_ptr(), m.col_idx());
        let (mv, kv, kmv, wv) = (m.values(), k.values(), lag.mobility_stiffness.values(), curvature.values());
        let (tau, eps2, kappa) = (self.cfg.tau, self.spec.epsilon_sq, self.spec.kappa);
        let nnz = 7 * mv.len();
        let mut row_ptr = Vec::with_capacity(3 * n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        // all blocks share the P1 pattern; append row `r` of a block at column `offset`
        let push_block = |offset: usize, r: usize, vals: &dyn Fn(usize) -> f64, col_idx: &mut Vec<usize>, values: &mut Vec<f64>| {
            for s in rp[r]..rp[r + 1] {
                col_idx.push(offset + ci[s]);
                values.push(vals(s));
            }
        };
        for r in 0..n {
            push_block(0, r, &|s| mv[s] / tau, &mut col_idx, &mut values);
            push_block(n, r, &|s| kmv[s], &mut col_idx, &mut values);
            row_ptr.push(col_idx.len());
        }
        for r in 0..n {
            push_block(0, r, &|s| eps2 * kv[s] + wv[s], &mut col_idx, &mut values);
            push_block(n, r, &|s| -mv[s], &mut col_idx, &mut values);
            push_block(2 * n, r, &|s| kappa * mv[s], &mut col_idx, &mut values);
            row_ptr.push(col_idx.len());
        }
        for r in 0..n {
            push_block(0, r, &|s| -mv[s], &mut col_idx, &mut values);
            push_block(2 * n, r, &|s| kv[s], &mut col_idx, &mut values);
            row_ptr.push(col_idx.len());
        }
        SparseMatrix::from_csr(3 * n, 3 * n, row_ptr, col_idx, values)
    }

    fn initial_guess(&self, phi_n: &FieldVector, guess: InitialGuess) -> Result<Vec<f64>> {
        let n = self.space().num_dofs();
        let mut x = vec![0.0; 3 * n + 1];
        if guess == InitialGuess::Lagged {
            let (mu, nu, mean) = chemical_potential(self.ctx, self.spec, phi_n)?;
            x[..n].copy_from_slice(phi_n);
            x[n..2 * n].copy_from_slice(&mu);
            x[2 * n..3 * n].copy_from_slice(&nu);
            x[3 * n] = mean;
        }
        Ok(x)
    }

    /// Advances `phi_n` by one time step.
    pub fn step(&mut self, phi_n: &FieldVector) -> Result<StepResult> {
        self.step_with_guess(phi_n, InitialGuess::Lagged)
    }

    pub fn step_with_guess(&mut self, phi_n: &FieldVector, guess: InitialGuess) -> Result<StepResult> {
        let n = self.space().num_dofs();
        if phi_n.len() != n {
            return Err(Error::invalid("state does not live on the context mesh"));
        }
        if !phi_n.is_finite() {
            return Err(Error::invalid("state contains non-finite values"));
        }
        let lag = self.lagged(phi_n)?;
        let mut x = self.initial_guess(phi_n, guess)?;
        let mut r = self.residual(&lag, &x)?;
        let r0 = norm2(&r);
        let target = self.cfg.newton_abs_tol.max(self.cfg.newton_rel_tol * r0);
        let mut trace = vec![r0];
        let mut iterations = 0;
        let mut refactor = !self.cfg.reuse_jacobian || !self.factored;
        // at least one iteration so the linear equations hold to round-off
        loop {
            let rn = *trace.last().unwrap();
            if iterations > 0 && rn <= target {
                break;
            }
            if iterations == self.cfg.newton_max_iter || !rn.is_finite() {
                return Err(Error::Step {
                    step: 0,
                    reason: format!(
                        "Newton did not reach {target:.3e} in {iterations} iterations (time step may be too large)"
                    ),
                    trace,
                });
            }
            let fresh = refactor;
            if refactor {
                self.factored = false;
                let jac = self.jacobian(&lag, &x[..n])?;
                self.lu.factor(&jac, &self.border, &self.border, 2 * n)?;
                self.factored = true;
                refactor = !self.cfg.reuse_jacobian;
            }
            let (delta, dlambda) = self.lu.solve(&r[..3 * n], r[3 * n])?;
            let mut trial = x.clone();
            for (xi, di) in trial.iter_mut().zip(&delta) {
                *xi -= di;
            }
            trial[3 * n] -= dlambda;
            let r_trial = self.residual(&lag, &trial)?;
            let rt = norm2(&r_trial);
            iterations += 1;
            if !fresh && !(rt < rn) {
                // a stale Jacobian that does not reduce the residual: retry
                // from the same point with an exact one
                refactor = true;
                trace.push(rn);
                continue;
            }
            if !fresh && rt > CHORD_CONTRACTION * rn {
                refactor = true;
            }
            x = trial;
            r = r_trial;
            trace.push(rt);
        }
        let level = self.space().level();
        let lambda = x[3 * n];
        let mut parts = x.chunks_exact(n);
        let mut next = || FieldVector::new(parts.next().unwrap().to_vec(), level);
        let (phi_next, mu_next, nu_next) = (next(), next(), next());
        Ok(StepResult {
            phi_next,
            mu_next,
            nu_next,
            lagrange_multiplier: lambda,
            newton_iterations: iterations,
            final_residual: *trace.last().unwrap(),
            residual_trace: trace,
        })
    }

    /// Step together with its diagnostic report.
    fn step_with_report(&mut self, step: usize, phi_n: &FieldVector, prev: &StepReport) -> Result<(StepResult, StepReport)> {
        let result = self.step(phi_n).map_err(|e| match e {
            Error::Step { reason, trace, .. } => Error::Step { step, reason, trace },
            other => other,
        })?;
        let lag = self.lagged(phi_n)?;
        let tau = self.cfg.tau;
        let dissipation = tau * diagnostics::dissipation(&lag.mobility_stiffness, &result.mu_next);
        let forcing_work = tau * dot(&lag.forcing, &result.mu_next);
        let forcing_mass = tau * lag.forcing.iter().sum::<f64>();
        let mass = diagnostics::mass(self.ctx, &result.phi_next);
        let energy = diagnostics::discrete_energy(self.ctx, self.spec, &result.phi_next)?;
        let entropy = self.entropy(&result.phi_next)?;
        let report = StepReport {
            step,
            time: step as f64 * tau,
            mass,
            energy,
            dissipation,
            forcing_work,
            forcing_mass,
            mass_balance_residual: prev.mass_balance_residual + (mass - prev.mass - forcing_mass),
            energy_balance_slack: prev.energy + forcing_work - energy - dissipation,
            newton_iterations: result.newton_iterations,
            entropy,
        };
        Ok((result, report))
    }

    fn entropy(&self, phi: &FieldVector) -> Result<Option<f64>> {
        match self.spec.delta {
            Some(d) => {
                let ent = entropy_function(self.spec, Some(d))?;
                Ok(Some(diagnostics::entropy_integral(self.space(), &ent, phi)?))
            }
            None => Ok(None),
        }
    }
}

/// One time step from `phi_n`.
pub fn step(
    ctx: &InverseLaplacianContext,
    spec: &ModelSpec,
    cfg: &SchemeConfig,
    phi_n: &FieldVector,
) -> Result<StepResult> {
    Stepper::new(ctx, spec, *cfg)?.step(phi_n)
}

/// State handed to observers after the initial setup and after every step.
pub struct Snapshot<'a> {
    pub step: usize,
    pub time: f64,
    pub phi: &'a FieldVector,
    pub mu: &'a FieldVector,
    pub nu: &'a FieldVector,
    pub report: &'a StepReport,
}

pub trait Observer {
    fn observe(&mut self, snapshot: &Snapshot<'_>) -> Result<()>;
}

impl<F: FnMut(&Snapshot<'_>) -> Result<()>> Observer for F {
    fn observe(&mut self, snapshot: &Snapshot<'_>) -> Result<()> {
        self(snapshot)
    }
}

/// A run that stopped early; `reports` holds everything computed before
/// the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub reports: Vec<StepReport>,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run stopped after {} reports: {}", self.reports.len(), self.error)
    }
}

impl std::error::Error for RunFailure {}

impl From<RunFailure> for Error {
    fn from(f: RunFailure) -> Self {
        f.error
    }
}

/// Runs `T/τ` steps from `phi_0`. The returned reports start with the
/// initial state.
pub fn run(
    ctx: &InverseLaplacianContext,
    spec: &ModelSpec,
    cfg: &SchemeConfig,
    phi_0: &FieldVector,
    observers: &mut [&mut dyn Observer],
) -> std::result::Result<Vec<StepReport>, RunFailure> {
    let mut reports = Vec::new();
    let fail = |reports: Vec<StepReport>, error: Error| RunFailure { reports, error };
    let steps = match cfg.num_steps() {
        Ok(s) => s,
        Err(e) => return Err(fail(reports, e)),
    };
    let mut stepper = match Stepper::new(ctx, spec, *cfg) {
        Ok(s) => s,
        Err(e) => return Err(fail(reports, e)),
    };
    let init = (|| -> Result<_> {
        if phi_0.len() != ctx.space().num_dofs() {
            return Err(Error::invalid("initial field does not live on the context mesh"));
        }
        let (mu, nu, _) = chemical_potential(ctx, spec, phi_0)?;
        let energy = diagnostics::discrete_energy(ctx, spec, phi_0)?;
        let report = StepReport::initial(diagnostics::mass(ctx, phi_0), energy, stepper.entropy(phi_0)?);
        Ok((mu, nu, report))
    })();
    let (mu, nu, report) = match init {
        Ok(v) => v,
        Err(e) => return Err(fail(reports, e)),
    };
    let snapshot = Snapshot {
        step: 0,
        time: 0.0,
        phi: phi_0,
        mu: &mu,
        nu: &nu,
        report: &report,
    };
    for obs in observers.iter_mut() {
        if let Err(e) = obs.observe(&snapshot) {
            return Err(fail(reports, e));
        }
    }
    reports.push(report);
    let mut phi = phi_0.clone();
    for k in 1..=steps {
        let (result, report) = match stepper.step_with_report(k, &phi, reports.last().unwrap()) {
            Ok(v) => v,
            Err(e) => return Err(fail(reports, e)),
        };
        let snapshot = Snapshot {
            step: k,
            time: report.time,
            phi: &result.phi_next,
            mu: &result.mu_next,
            nu: &result.nu_next,
            report: &report,
        };
        for obs in observers.iter_mut() {
            if let Err(e) = obs.observe(&snapshot) {
                return Err(fail(reports, e));
            }
        }
        reports.push(report);
        phi = result.phi_next;
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// `cos(2π x₁) cos(2π x₂) / 100`.
    Cosine2d,
    /// `-0.1 + U(-10⁻³, 10⁻³)` i.i.d. per vertex.
    Uniform3d,
    Constant(f64),
}

/// Nodal initial data; `seed` drives the random kinds.
pub fn initial_field(space: &FeSpace, kind: InitialCondition, seed: u64) -> Result<FieldVector> {
    use rand::{Rng, SeedableRng};
    let dim = space.mesh().dim();
    match kind {
        InitialCondition::Cosine2d => {
            if dim != 2 {
                return Err(Error::invalid("cosine2d initial data needs a 2D mesh"));
            }
            let tp = 2.0 * std::f64::consts::PI;
            Ok(space.interpolate(|x| (tp * x[0]).cos() * (tp * x[1]).cos() / 100.0))
        }
        InitialCondition::Uniform3d => {
            if dim != 3 {
                return Err(Error::invalid("uniform3d initial data needs a 3D mesh"));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let values = (0..space.num_dofs())
                .map(|_| -0.1 + rng.random_range(-1e-3..1e-3))
                .collect();
            Ok(FieldVector::new(values, space.level()))
        }
        InitialCondition::Constant(c) => Ok(FieldVector::constant(space.num_dofs(), c, space.level())),
    }
}
