//! Experiment drivers behind the command-line tool: single runs, κ sweeps
//! and the mesh convergence study, plus their file output.

pub mod config;
pub mod output;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::diagnostics::StepReport;
use crate::error::{Error, Result};
use crate::fem::{transfer_matrix, FeSpace, FieldVector};
use crate::mesh::build_structured_mesh;
use crate::model::ModelSpec;
use crate::operators::InverseLaplacianContext;
use crate::scheme::{self, initial_field, Observer, SchemeConfig, Snapshot};

pub use config::{ConvergenceConfig, Preset, RunConfig, SolverChoice, CONFIG_VERSION};

/// Everything needed to start a run.
pub struct Problem {
    pub space: Arc<FeSpace>,
    pub ctx: InverseLaplacianContext,
    pub spec: ModelSpec,
    pub scheme: SchemeConfig,
    pub phi0: FieldVector,
}

impl Problem {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mesh = build_structured_mesh(cfg.dim, cfg.n)?;
        Self::on_mesh(cfg, Arc::new(FeSpace::new(mesh)?))
    }

    fn on_mesh(cfg: &RunConfig, space: Arc<FeSpace>) -> Result<Self> {
        let ctx = InverseLaplacianContext::new(space.clone(), cfg.solver.options(space.num_dofs()))?;
        let phi0 = initial_field(&space, cfg.initial, cfg.seed)?;
        Ok(Self {
            space,
            ctx,
            spec: cfg.model(),
            scheme: cfg.scheme(),
            phi0,
        })
    }

    pub fn run(&self, observers: &mut [&mut dyn Observer]) -> std::result::Result<Vec<StepReport>, scheme::RunFailure> {
        scheme::run(&self.ctx, &self.spec, &self.scheme, &self.phi0, observers)
    }
}

/// Runs without writing files.
pub fn simulate(cfg: &RunConfig) -> Result<Vec<StepReport>> {
    Ok(Problem::new(cfg)?.run(&mut [])?)
}

/// Exit status for an error: 2 configuration, 3 model or solver, 4 I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidArgument(_) => 2,
        Error::Io(_) => 4,
        _ => 3,
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub reports: Vec<StepReport>,
    pub series: PathBuf,
    pub snapshots: Vec<PathBuf>,
}

struct SnapshotWriter<'a> {
    dir: &'a Path,
    space: &'a FeSpace,
    stride: usize,
    last_step: usize,
    written: Vec<PathBuf>,
}

impl Observer for SnapshotWriter<'_> {
    fn observe(&mut self, s: &Snapshot<'_>) -> Result<()> {
        let due = s.step == 0 || s.step == self.last_step || (self.stride > 0 && s.step.is_multiple_of(self.stride));
        if due {
            let path = self.dir.join(output::snapshot_name(s.step));
            let title = format!("okfem step {} t={}", s.step, s.time);
            output::write_vtk(
                &path,
                self.space.mesh(),
                &title,
                &[("phi", s.phi), ("mu", s.mu), ("nu", s.nu)],
            )?;
            self.written.push(path);
        }
        Ok(())
    }
}

/// Runs `cfg` and writes `series.csv`, `config.txt` and VTK snapshots into
/// `dir`. On a step failure the series up to the failure is still written.
pub fn run_to_dir(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    let problem = Problem::new(cfg)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    let mut writer = SnapshotWriter {
        dir,
        space: &problem.space,
        stride: cfg.snapshot_stride,
        last_step: problem.scheme.num_steps()?,
        written: Vec::new(),
    };
    let series = dir.join("series.csv");
    match problem.run(&mut [&mut writer]) {
        Ok(reports) => {
            output::write_series(&series, &output::thin_series(&reports, cfg.output_stride))?;
            Ok(RunSummary {
                reports,
                series,
                snapshots: writer.written,
            })
        }
        Err(failure) => {
            output::write_series(&series, &output::thin_series(&failure.reports, cfg.output_stride))?;
            Err(failure.error)
        }
    }
}

/// Runs of one configuration for several values of κ.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub kappas: Vec<f64>,
    pub reports: Vec<Vec<StepReport>>,
}

impl Comparison {
    /// `t` followed by `energy_kappa=<κ>` and `mass_kappa=<κ>` per run.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for k in &self.kappas {
            out.push_str(&format!(",energy_kappa={k},mass_kappa={k}"));
        }
        out.push('\n');
        let rows = self.reports.iter().map(Vec::len).min().unwrap_or(0);
        for i in 0..rows {
            out.push_str(&self.reports[0][i].time.to_string());
            for r in &self.reports {
                out.push_str(&format!(",{},{}", r[i].energy, r[i].mass));
            }
            out.push('\n');
        }
        out
    }

    /// `E(0) - E(t_end)` per κ.
    pub fn energy_drops(&self) -> Vec<f64> {
        self.reports
            .iter()
            .map(|r| r.first().map_or(0.0, |a| a.energy) - r.last().map_or(0.0, |b| b.energy))
            .collect()
    }
}

pub fn kappa_dir(dir: &Path, kappa: f64) -> PathBuf {
    dir.join(format!("kappa_{kappa}"))
}

/// Runs `cfg` once per entry of `cfg.kappas`, concurrently, each into its
/// own subdirectory when `dir` is given, and writes the joined
/// `compare.csv`.
pub fn run_comparison(cfg: &RunConfig, dir: Option<&Path>) -> Result<Comparison> {
    cfg.validate()?;
    let reports = cfg
        .kappas
        .par_iter()
        .map(|&kappa| {
            let single = RunConfig {
                kappa,
                ..cfg.clone()
            };
            match dir {
                Some(d) => run_to_dir(&single, &kappa_dir(d, kappa)).map(|s| s.reports),
                None => simulate(&single),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let cmp = Comparison {
        kappas: cfg.kappas.clone(),
        reports,
    };
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
        fs::write(d.join("compare.csv"), cmp.to_csv())?;
    }
    Ok(cmp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub level: u32,
    pub h: f64,
    pub err_phi: f64,
    pub err_mu: f64,
    pub err_nu: f64,
    pub eoc_phi: Option<f64>,
    pub eoc_mu: Option<f64>,
    pub eoc_nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatesTable {
    pub reference_level: u32,
    pub rows: Vec<RateRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RatesTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,h,err_phi,eoc_phi,err_mu,eoc_mu,err_nu,eoc_nu\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.level,
                r.h,
                r.err_phi,
                opt(r.eoc_phi),
                r.err_mu,
                opt(r.eoc_mu),
                r.err_nu,
                opt(r.eoc_nu)
            ));
        }
        out
    }
}

impl fmt::Display for RatesTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = |v: Option<f64>| v.map(|x| format!("{x:6.2}")).unwrap_or_else(|| "     -".into());
        writeln!(
            f,
            "{:>3} {:>9} {:>11} {:>6} {:>11} {:>6} {:>11} {:>6}",
            "k", "h", "err(phi)", "eoc", "err(mu)", "eoc", "err(nu)", "eoc"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>3} {:>9.3e} {:>11.3e} {} {:>11.3e} {} {:>11.3e} {}",
                r.level,
                r.h,
                r.err_phi,
                e(r.eoc_phi),
                r.err_mu,
                e(r.eoc_mu),
                r.err_nu,
                e(r.eoc_nu)
            )?;
        }
        write!(f, "reference level {}", self.reference_level)
    }
}

fn level_space(cfg: &ConvergenceConfig, level: u32) -> Result<Arc<FeSpace>> {
    let n = ConvergenceConfig::subdivisions(level);
    Ok(Arc::new(FeSpace::new(build_structured_mesh(cfg.run.dim, n)?.with_level(level))?))
}

struct Recorder {
    fields: Vec<[Vec<f64>; 3]>,
}

impl Observer for Recorder {
    fn observe(&mut self, s: &Snapshot<'_>) -> Result<()> {
        self.fields.push([s.phi.to_vec(), s.mu.to_vec(), s.nu.to_vec()]);
        Ok(())
    }
}

/// Accumulates the squared-norm errors of a coarse run against stored
/// reference fields.
struct ErrorAccumulator<'a> {
    reference: &'a [[Vec<f64>; 3]],
    transfer: crate::linalg::SparseMatrix,
    mass: &'a crate::linalg::SparseMatrix,
    v_norm: &'a crate::linalg::SparseMatrix,
    tau: f64,
    err: [f64; 3],
}

impl Observer for ErrorAccumulator<'_> {
    fn observe(&mut self, s: &Snapshot<'_>) -> Result<()> {
        let reference = self
            .reference
            .get(s.step)
            .ok_or_else(|| Error::invalid("coarse run has more steps than the reference"))?;
        let diff = |coarse: &[f64], fine: &[f64]| -> Vec<f64> {
            self.transfer.mul_vec(coarse).iter().zip(fine).map(|(a, b)| a - b).collect()
        };
        let d_phi = diff(s.phi, &reference[0]);
        self.err[0] = self.err[0].max(self.v_norm.quad_form(&d_phi));
        if s.step > 0 {
            let d_mu = diff(s.mu, &reference[1]);
            self.err[1] += self.tau * self.mass.quad_form(&d_mu);
            let d_nu = diff(s.nu, &reference[2]);
            self.err[2] = self.err[2].max(self.v_norm.quad_form(&d_nu));
        }
        Ok(())
    }
}

/// Squared-norm errors of each level against the reference solution:
/// `max_n ‖φ - φ_ref‖²_V`, `τ Σ_n ‖μ - μ_ref‖²` and `max_n ‖ν - ν_ref‖²_V`
/// with `‖·‖²_V = ‖·‖² + ‖∇·‖²`, all evaluated on the reference mesh.
pub fn run_convergence(cfg: &ConvergenceConfig, dir: Option<&Path>) -> Result<RatesTable> {
    cfg.validate()?;
    cfg.run.validate()?;
    let ref_space = level_space(cfg, cfg.reference_level)?;
    let reference = Problem::on_mesh(&cfg.run, ref_space.clone())?;
    let mut recorder = Recorder { fields: Vec::new() };
    reference.run(&mut [&mut recorder])?;
    let v_norm = reference.ctx.mass().combine(1.0, reference.ctx.stiffness(), 1.0)?;

    let mut levels = cfg.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let errors = levels
        .par_iter()
        .map(|&level| -> Result<[f64; 3]> {
            let space = level_space(cfg, level)?;
            let problem = Problem::on_mesh(&cfg.run, space.clone())?;
            let mut acc = ErrorAccumulator {
                reference: &recorder.fields,
                transfer: transfer_matrix(&space, &ref_space)?,
                mass: reference.ctx.mass(),
                v_norm: &v_norm,
                tau: cfg.run.tau,
                err: [0.0; 3],
            };
            problem.run(&mut [&mut acc])?;
            Ok(acc.err)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<RateRow> = Vec::new();
    for (&level, err) in levels.iter().zip(&errors) {
        let eoc = |i: usize| {
            rows.last().map(|prev: &RateRow| {
                let prev_err = [prev.err_phi, prev.err_mu, prev.err_nu][i];
                (prev_err / err[i]).log2() / (level - prev.level) as f64
            })
        };
        let row = RateRow {
            level,
            h: 1.0 / ConvergenceConfig::subdivisions(level) as f64,
            err_phi: err[0],
            err_mu: err[1],
            err_nu: err[2],
            eoc_phi: eoc(0),
            eoc_mu: eoc(1),
            eoc_nu: eoc(2),
        };
        rows.push(row);
    }
    let table = RatesTable {
        reference_level: cfg.reference_level,
        rows,
    };
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
        fs::write(d.join("rates.csv"), table.to_csv())?;
    }
    Ok(table)
}
