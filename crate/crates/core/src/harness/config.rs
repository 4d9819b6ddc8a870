//! Flat `key = value` run configuration.
//!
//! ```text
//! version = 1
//! preset = exp2
//! kappa = 100
//! output_stride = 10
//! ```
//!
//! A preset fills in every field; later keys override it regardless of
//! order in the file. Blank lines and `#` comments are ignored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{SolveMethod, SolveOptions};
use crate::model::{quartic_model_with_floor, Forcing, ModelSpec, QUARTIC_EPSILON_SQ, QUARTIC_MOBILITY_FLOOR};
use crate::scheme::{InitialCondition, SchemeConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 2D relaxation, no forcing.
    Exp1,
    /// Experiment 1 with logistic forcing.
    Exp2,
    /// 3D, random initial data, logistic forcing.
    Exp3,
}

impl FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exp1" => Ok(Preset::Exp1),
            "exp2" => Ok(Preset::Exp2),
            "exp3" => Ok(Preset::Exp3),
            _ => Err(format!("unknown preset '{s}' (expected exp1, exp2 or exp3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    /// Direct below a size threshold, CG above.
    Auto,
    Direct,
    Cg,
}

impl SolverChoice {
    pub fn options(self, unknowns: usize) -> SolveOptions {
        match self {
            SolverChoice::Auto => SolveOptions::auto(unknowns),
            SolverChoice::Direct => SolveOptions::direct(),
            SolverChoice::Cg => SolveOptions {
                method: SolveMethod::IterativeCg,
                ..SolveOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub n: usize,
    pub tau: f64,
    pub t_end: f64,
    pub kappa: f64,
    /// Values swept by `compare`.
    pub kappas: Vec<f64>,
    pub epsilon_sq: f64,
    pub forcing: Forcing,
    pub initial: InitialCondition,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Every how many steps a series row is written.
    pub output_stride: usize,
    /// Every how many steps a VTK snapshot is written; 0 keeps only the
    /// first and last.
    pub snapshot_stride: usize,
    pub newton_rel_tol: f64,
    pub newton_abs_tol: f64,
    pub newton_max_iter: usize,
    pub reuse_jacobian: bool,
    pub solver: SolverChoice,
    pub entropy_delta: Option<f64>,
    pub mobility_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub run: RunConfig,
    /// Level `k` uses `2^(k+1)` subdivisions per axis.
    pub levels: Vec<u32>,
    pub reference_level: u32,
}

impl Preset {
    pub fn run_config(self) -> RunConfig {
        let base = RunConfig {
            dim: 2,
            n: 100,
            tau: 0.01,
            t_end: 5.0,
            kappa: 0.0,
            kappas: vec![0.0, 10.0, 100.0],
            epsilon_sq: QUARTIC_EPSILON_SQ,
            forcing: Forcing::None,
            initial: InitialCondition::Cosine2d,
            seed: 0,
            output_dir: PathBuf::from("output"),
            output_stride: 1,
            snapshot_stride: 100,
            newton_rel_tol: 1e-10,
            newton_abs_tol: 1e-12,
            newton_max_iter: 25,
            reuse_jacobian: true,
            solver: SolverChoice::Auto,
            entropy_delta: None,
            mobility_floor: QUARTIC_MOBILITY_FLOOR,
        };
        match self {
            Preset::Exp1 => base,
            Preset::Exp2 => RunConfig {
                forcing: Forcing::Logistic,
                ..base
            },
            Preset::Exp3 => RunConfig {
                dim: 3,
                n: 16,
                t_end: 0.5,
                kappas: vec![0.0, 100.0],
                forcing: Forcing::Logistic,
                initial: InitialCondition::Uniform3d,
                snapshot_stride: 10,
                ..base
            },
        }
    }
}

impl RunConfig {
    pub fn scheme(&self) -> SchemeConfig {
        SchemeConfig {
            tau: self.tau,
            t_end: self.t_end,
            newton_rel_tol: self.newton_rel_tol,
            newton_abs_tol: self.newton_abs_tol,
            newton_max_iter: self.newton_max_iter,
            reuse_jacobian: self.reuse_jacobian,
        }
    }

    pub fn model(&self) -> ModelSpec {
        quartic_model_with_floor(self.mobility_floor)
            .with_kappa(self.kappa)
            .with_forcing(self.forcing)
            .with_epsilon_sq(self.epsilon_sq)
            .with_delta(self.entropy_delta)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::Config { line: 0, message };
        if !(self.dim == 2 || self.dim == 3) {
            return Err(bad(format!("dim must be 2 or 3, got {}", self.dim)));
        }
        if self.n == 0 {
            return Err(bad("n must be at least 1".into()));
        }
        if self.output_stride == 0 {
            return Err(bad("output_stride must be at least 1".into()));
        }
        let compatible = match self.initial {
            InitialCondition::Cosine2d => self.dim == 2,
            InitialCondition::Uniform3d => self.dim == 3,
            InitialCondition::Constant(_) => true,
        };
        if !compatible {
            return Err(bad(format!("initial condition {:?} does not fit dim {}", self.initial, self.dim)));
        }
        if self.kappas.is_empty() {
            return Err(bad("kappas must list at least one value".into()));
        }
        self.scheme().num_steps().map_err(|e| bad(e.to_string()))?;
        self.model().validate((-2.0, 2.0), 401).map_err(|e| bad(e.to_string()))?;
        for &k in &self.kappas {
            if !(k >= 0.0) {
                return Err(bad(format!("kappa values must be nonnegative, got {k}")));
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        let (run, _) = build(&entries, false)?;
        Ok(run)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Serializes every field; `from_text` of the result reproduces `self`.
    pub fn to_text(&self) -> String {
        let initial = match self.initial {
            InitialCondition::Cosine2d => "cosine2d".to_string(),
            InitialCondition::Uniform3d => "uniform3d".to_string(),
            InitialCondition::Constant(c) => format!("constant:{c}"),
        };
        let kappas: Vec<String> = self.kappas.iter().map(|k| k.to_string()).collect();
        let mut lines = vec![
            format!("version = {CONFIG_VERSION}"),
            format!("dim = {}", self.dim),
            format!("n = {}", self.n),
            format!("tau = {}", self.tau),
            format!("t_end = {}", self.t_end),
            format!("kappa = {}", self.kappa),
            format!("kappas = {}", kappas.join(",")),
            format!("epsilon_sq = {}", self.epsilon_sq),
            "model = quartic".to_string(),
            format!(
                "forcing = {}",
                match self.forcing {
                    Forcing::None => "none",
                    Forcing::Logistic => "logistic",
                }
            ),
            format!("initial = {initial}"),
            format!("seed = {}", self.seed),
            format!("output_dir = {}", self.output_dir.display()),
            format!("output_stride = {}", self.output_stride),
            format!("snapshot_stride = {}", self.snapshot_stride),
            format!("newton_rel_tol = {}", self.newton_rel_tol),
            format!("newton_abs_tol = {}", self.newton_abs_tol),
            format!("newton_max_iter = {}", self.newton_max_iter),
            format!("reuse_jacobian = {}", self.reuse_jacobian),
            format!(
                "solver = {}",
                match self.solver {
                    SolverChoice::Auto => "auto",
                    SolverChoice::Direct => "direct",
                    SolverChoice::Cg => "cg",
                }
            ),
            format!("mobility_floor = {}", self.mobility_floor),
        ];
        if let Some(d) = self.entropy_delta {
            lines.push(format!("entropy_delta = {d}"));
        }
        lines.join("\n") + "\n"
    }
}

impl ConvergenceConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        let (run, study) = build(&entries, true)?;
        let (levels, reference_level) = study.expect("requested");
        let cfg = Self {
            run,
            levels,
            reference_level,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::Config { line: 0, message };
        if self.levels.is_empty() {
            return Err(bad("levels must list at least one level".into()));
        }
        if let Some(&k) = self.levels.iter().find(|&&k| k > self.reference_level) {
            return Err(bad(format!(
                "level {k} is finer than the reference level {}; meshes are not nested",
                self.reference_level
            )));
        }
        if self.reference_level > 10 {
            return Err(bad("reference level above 10 is not supported".into()));
        }
        if matches!(self.run.initial, InitialCondition::Uniform3d) {
            return Err(bad("convergence studies need deterministic nodal initial data".into()));
        }
        Ok(())
    }

    /// Subdivisions per axis of level `k`.
    pub fn subdivisions(level: u32) -> usize {
        1usize << (level + 1)
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                message: format!("expected key = value, got '{content}'"),
            });
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config {
                line,
                message: "empty key".into(),
            });
        }
        let entry = Entry {
            line,
            value: value.trim().to_string(),
        };
        if entries.insert(key.clone(), entry).is_some() {
            return Err(Error::Config {
                line,
                message: format!("duplicate key '{key}'"),
            });
        }
    }
    Ok(entries)
}

fn value<T: FromStr>(entry: &Entry, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    entry.value.parse().map_err(|e| Error::Config {
        line: entry.line,
        message: format!("invalid value for {key}: {e}"),
    })
}

fn parse_list<T: FromStr>(entry: &Entry, key: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    entry
        .value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|e| Error::Config {
                line: entry.line,
                message: format!("invalid entry '{s}' in {key}: {e}"),
            })
        })
        .collect()
}

type Study = Option<(Vec<u32>, u32)>;

fn build(entries: &BTreeMap<String, Entry>, convergence: bool) -> Result<(RunConfig, Study)> {
    let version = entries.get("version").ok_or_else(|| Error::Config {
        line: 0,
        message: "missing version key".into(),
    })?;
    let v: u32 = value(version, "version")?;
    if v != CONFIG_VERSION {
        return Err(Error::Config {
            line: version.line,
            message: format!("unsupported config version {v} (this build reads {CONFIG_VERSION})"),
        });
    }
    let preset = match entries.get("preset") {
        Some(e) => value::<Preset>(e, "preset")?,
        None => Preset::Exp1,
    };
    let mut cfg = preset.run_config();
    if convergence {
        cfg.kappa = 100.0;
        cfg.forcing = Forcing::Logistic;
        cfg.tau = 1e-3;
        cfg.t_end = 0.5;
        cfg.solver = SolverChoice::Direct;
        cfg.snapshot_stride = 0;
    }
    let mut levels = vec![1, 2, 3, 4];
    let mut reference_level = 5;
    for (key, entry) in entries {
        match key.as_str() {
            "version" | "preset" => {}
            "dim" => cfg.dim = value(entry, key)?,
            "n" => cfg.n = value(entry, key)?,
            "tau" => cfg.tau = value(entry, key)?,
            "t_end" => cfg.t_end = value(entry, key)?,
            "kappa" => cfg.kappa = value(entry, key)?,
            "kappas" => cfg.kappas = parse_list(entry, key)?,
            "epsilon_sq" => cfg.epsilon_sq = value(entry, key)?,
            "model" => {
                if entry.value != "quartic" {
                    return Err(Error::Config {
                        line: entry.line,
                        message: format!("unknown model '{}' (only quartic is built in)", entry.value),
                    });
                }
            }
            "forcing" => {
                cfg.forcing = match entry.value.as_str() {
                    "none" => Forcing::None,
                    "logistic" => Forcing::Logistic,
                    other => {
                        return Err(Error::Config {
                            line: entry.line,
                            message: format!("unknown forcing '{other}' (expected none or logistic)"),
                        })
                    }
                }
            }
            "initial" => cfg.initial = parse_initial(entry)?,
            "seed" => cfg.seed = value(entry, key)?,
            "output_dir" => cfg.output_dir = PathBuf::from(&entry.value),
            "output_stride" => cfg.output_stride = value(entry, key)?,
            "snapshot_stride" => cfg.snapshot_stride = value(entry, key)?,
            "newton_rel_tol" => cfg.newton_rel_tol = value(entry, key)?,
            "newton_abs_tol" => cfg.newton_abs_tol = value(entry, key)?,
            "newton_max_iter" => cfg.newton_max_iter = value(entry, key)?,
            "reuse_jacobian" => cfg.reuse_jacobian = value(entry, key)?,
            "solver" => {
                cfg.solver = match entry.value.as_str() {
                    "auto" => SolverChoice::Auto,
                    "direct" => SolverChoice::Direct,
                    "cg" => SolverChoice::Cg,
                    other => {
                        return Err(Error::Config {
                            line: entry.line,
                            message: format!("unknown solver '{other}' (expected auto, direct or cg)"),
                        })
                    }
                }
            }
            "entropy_delta" => cfg.entropy_delta = Some(value(entry, key)?),
            "mobility_floor" => cfg.mobility_floor = value(entry, key)?,
            "levels" if convergence => levels = parse_list(entry, key)?,
            "reference_level" if convergence => reference_level = value(entry, key)?,
            _ => {
                return Err(Error::Config {
                    line: entry.line,
                    message: format!("unknown key '{key}'"),
                })
            }
        }
    }
    cfg.validate()?;
    Ok((cfg, convergence.then_some((levels, reference_level))))
}

fn parse_initial(entry: &Entry) -> Result<InitialCondition> {
    match entry.value.as_str() {
        "cosine2d" => Ok(InitialCondition::Cosine2d),
        "uniform3d" => Ok(InitialCondition::Uniform3d),
        other => match other.strip_prefix("constant:") {
            Some(c) => Ok(InitialCondition::Constant(value(
                &Entry {
                    line: entry.line,
                    value: c.trim().to_string(),
                },
                "initial",
            )?)),
            None => Err(Error::Config {
                line: entry.line,
                message: format!("unknown initial condition '{other}'"),
            }),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_with_overrides() {
        let cfg = RunConfig::from_text("version = 1\npreset = exp2\n# comment\nkappa = 10 # inline\nn = 20\n").unwrap();
        assert_eq!(cfg.forcing, Forcing::Logistic);
        assert_eq!(cfg.kappa, 10.0);
        assert_eq!(cfg.n, 20);
        assert_eq!(cfg.tau, 0.01);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = Preset::Exp3.run_config();
        cfg.entropy_delta = Some(0.05);
        cfg.initial = InitialCondition::Constant(-0.25);
        cfg.kappas = vec![0.0, 2.5];
        assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let line_of = |text: &str| match RunConfig::from_text(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(line_of("preset = exp1\n"), 0);
        assert_eq!(line_of("version = 2\n"), 1);
        assert_eq!(line_of("version = 1\nbogus = 3\n"), 2);
        assert_eq!(line_of("version = 1\nn = ten\n"), 2);
        assert_eq!(line_of("version = 1\njust words\n"), 2);
        assert_eq!(line_of("version = 1\nn = 3\nn = 4\n"), 3);
        assert_eq!(line_of("version = 1\npreset = exp9\n"), 2);
        // semantic checks
        assert_eq!(line_of("version = 1\noutput_stride = 0\n"), 0);
        assert_eq!(line_of("version = 1\ndim = 3\n"), 0);
        assert_eq!(line_of("version = 1\ntau = 0.3\nt_end = 1\n"), 0);
        assert_eq!(line_of("version = 1\nlevels = 1,2\n"), 2);
    }

    #[test]
    fn convergence_defaults_and_nesting() {
        let cfg = ConvergenceConfig::from_text("version = 1\npreset = exp2\n").unwrap();
        assert_eq!(cfg.levels, vec![1, 2, 3, 4]);
        assert_eq!(cfg.reference_level, 5);
        assert_eq!(cfg.run.tau, 1e-3);
        assert_eq!(cfg.run.kappa, 100.0);
        assert_eq!(ConvergenceConfig::subdivisions(5), 64);
        assert!(ConvergenceConfig::from_text("version = 1\nlevels = 1,6\nreference_level = 5\n").is_err());
        assert!(ConvergenceConfig::from_text("version = 1\nlevels = 2\nreference_level = 2\n").is_ok());
        assert!(ConvergenceConfig::from_text("version = 1\npreset = exp3\n").is_err());
    }
}
