use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::ConvergenceSetup;
use crate::discrete::{Grid1D, Stencil};
use crate::error::{Error, Result};
use crate::regression::{build_skew_constraints, DEFAULT_BOX, DEFAULT_LAMBDA};
use crate::simulate::CnBackend;
use crate::solvers::{Method, SolverOptions};
use crate::training::TrainingConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    Table1,
    Convergence,
    Energy,
    Dispersion,
    Nonstandard,
    Noisy,
    SolverBench,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 7] = [
        ExperimentName::Table1,
        ExperimentName::Convergence,
        ExperimentName::Energy,
        ExperimentName::Dispersion,
        ExperimentName::Nonstandard,
        ExperimentName::Noisy,
        ExperimentName::SolverBench,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ExperimentName::Table1 => "table1",
            ExperimentName::Convergence => "convergence",
            ExperimentName::Energy => "energy",
            ExperimentName::Dispersion => "dispersion",
            ExperimentName::Nonstandard => "nonstandard",
            ExperimentName::Noisy => "noisy",
            ExperimentName::SolverBench => "solver_bench",
        }
    }
}

impl std::str::FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|e| e.label() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment '{s}'")))
    }
}

/// Time-stepping settings shared by the simulation stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    /// `dt = dt_ratio * dx`.
    pub dt_ratio: f64,
    pub n_steps: usize,
    pub backend: CnBackend,
    pub snapshot_every: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            dt_ratio: 0.5,
            n_steps: 300,
            backend: CnBackend::Dense,
            snapshot_every: 5,
        }
    }
}

/// Solver settings; unset iteration limits fall back to the per-method defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub first_order_max_iters: usize,
    pub admm_max_iters: usize,
    pub tol: f64,
    pub rho: f64,
    pub step: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let fo = SolverOptions::for_method(Method::Pg);
        let admm = SolverOptions::for_method(Method::Admm);
        Self {
            first_order_max_iters: fo.max_iters,
            admm_max_iters: admm.max_iters,
            tol: fo.tol,
            rho: admm.rho,
            step: None,
        }
    }
}

impl SolverSettings {
    pub fn options(&self, method: Method) -> SolverOptions {
        let mut o = SolverOptions::for_method(method);
        o.max_iters = match method {
            Method::Pg | Method::Nag => self.first_order_max_iters,
            Method::Admm | Method::Reference => self.admm_max_iters,
        };
        o.tol = self.tol;
        o.rho = self.rho;
        o.step = self.step;
        o
    }
}

/// Skew stencil used as the target of the nonstandard-operator study, stored
/// as multiples of `1 / dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonstandardTarget {
    pub scaled_coefficients: Vec<f64>,
}

impl Default for NonstandardTarget {
    fn default() -> Self {
        // (2, -10, 0, 10, -2) / 12; consistent first derivative (sum l w_l = 1)
        Self {
            scaled_coefficients: vec![2.0 / 12.0, -10.0 / 12.0, 0.0, 10.0 / 12.0, -2.0 / 12.0],
        }
    }
}

impl NonstandardTarget {
    pub fn stencil(&self, grid: &Grid1D) -> Result<Stencil> {
        let w = Stencil::new(self.scaled_coefficients.iter().map(|c| c / grid.dx()).collect())?
            .with_dx(grid.dx());
        let cs = build_skew_constraints(w.radius())?;
        if cs.residual(&nalgebra::DVector::from_column_slice(w.coeffs())) != 0.0 {
            return Err(Error::InvalidConfig("nonstandard target must be exactly skew".into()));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoisySettings {
    pub sigma: f64,
    pub radius: usize,
    /// Extra noise levels evaluated for `sweep.csv`; empty disables the sweep.
    pub sigma_sweep: Vec<f64>,
    /// Blow-up factor `E^{N_t} / E^0` regarded as a failure of the unconstrained fit.
    pub blowup_factor: f64,
}

impl Default for NoisySettings {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            radius: 4,
            sigma_sweep: Vec::new(),
            blowup_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceSettings {
    pub setup: ConvergenceSetup,
    pub radius: usize,
    /// Box bound used at the default 64-point grid; scaled by `N / 64` so
    /// that `1 / (2 dx)`-sized coefficients stay admissible on finer grids.
    pub box_bound_at_64: f64,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self {
            setup: ConvergenceSetup::default(),
            radius: 1,
            box_bound_at_64: DEFAULT_BOX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    pub training: TrainingConfig,
    pub sim: SimSettings,
    pub solver: SolverSettings,
    pub radius: usize,
    pub lambda: f64,
    pub box_bound: f64,
    /// Radii covered by the energy and dispersion studies.
    pub radii: Vec<usize>,
    pub dispersion_samples: usize,
    pub convergence: ConvergenceSettings,
    pub nonstandard: NonstandardTarget,
    pub noisy: NoisySettings,
    /// ADMM penalty used by the solver benchmark.
    pub bench_rho: f64,
    /// Where CSV/JSON outputs go; `None` keeps results in memory only.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: ExperimentName::Table1,
            training: TrainingConfig::default(),
            sim: SimSettings::default(),
            solver: SolverSettings::default(),
            radius: 1,
            lambda: DEFAULT_LAMBDA,
            box_bound: DEFAULT_BOX,
            radii: vec![1, 2, 3, 4],
            dispersion_samples: 4096,
            convergence: ConvergenceSettings::default(),
            nonstandard: NonstandardTarget::default(),
            noisy: NoisySettings::default(),
            bench_rho: 0.01,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(name: ExperimentName) -> Self {
        let mut cfg = Self {
            name,
            ..Self::default()
        };
        if name == ExperimentName::Nonstandard {
            cfg.radius = 2;
        }
        cfg
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = Some(dir.into());
        self
    }

    pub fn grid(&self) -> Grid1D {
        self.training.grid
    }

    pub fn dt(&self) -> f64 {
        self.sim.dt_ratio * self.grid().dx()
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        for m in Method::ALL {
            self.solver.options(m).validate()?;
        }
        let n = self.grid().n();
        let too_wide = |r: usize| r == 0 || 2 * r + 1 > n;
        if too_wide(self.radius) || self.radii.iter().any(|r| too_wide(*r)) || too_wide(self.noisy.radius) {
            return Err(Error::InvalidConfig(format!("every radius must satisfy 1 <= R and 2R+1 <= N={n}")));
        }
        if !(self.lambda > 0.0 && self.box_bound > 0.0 && self.bench_rho > 0.0) {
            return Err(Error::InvalidConfig("lambda, box bound and bench rho must be > 0".into()));
        }
        if !(self.sim.dt_ratio > 0.0) || self.sim.n_steps == 0 {
            return Err(Error::InvalidConfig("sim needs dt_ratio > 0 and n_steps >= 1".into()));
        }
        if self.dispersion_samples == 0 {
            return Err(Error::InvalidConfig("dispersion_samples must be >= 1".into()));
        }
        if self.noisy.sigma <= 0.0 || self.noisy.sigma_sweep.iter().any(|s| *s <= 0.0) {
            return Err(Error::InvalidConfig("noise levels must be > 0".into()));
        }
        if self.nonstandard.scaled_coefficients.len().is_multiple_of(2) {
            return Err(Error::InvalidConfig("nonstandard target needs an odd number of coefficients".into()));
        }
        Ok(())
    }
}
