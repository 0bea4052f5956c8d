//! Scripted studies built from the library pieces. Every `run_*` is
//! deterministic given its config; when `output_dir` is set it also writes
//! CSV tables and a `manifest.json` describing the run.

mod config;
mod robustness;
mod solver_bench;
mod stencil_studies;

use std::fs::File;
use std::path::PathBuf;

use serde::Serialize;

pub use config::{
    ConvergenceSettings, ExperimentConfig, ExperimentName, NoisySettings, NonstandardTarget, SimSettings,
    SolverSettings,
};
pub use robustness::{run_noisy, run_nonstandard, NoisyReport, NoisySweepRow, NonstandardReport};
pub use solver_bench::{run_solver_bench, SolverBenchChecks, SolverBenchReport};
pub use stencil_studies::{
    run_convergence, run_dispersion, run_energy, run_table1, DispersionEntry, DispersionReport, EnergyReport,
    EnergyRow, Table1Report, Table1Row,
};

use crate::discrete::{FieldPair, Grid1D, Stencil};
use crate::error::Result;
use crate::regression::{assemble_regression, build_skew_constraints, RegressionSystem};
use crate::simulate::{simulate, SimConfig, SimResult};
use crate::solvers::{solve, Method, SolverReport};
use crate::training::TrainingSet;

/// Provenance record written next to every experiment's outputs.
#[derive(Debug, Serialize)]
struct Manifest<'a, R: Serialize> {
    experiment: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
    summary: &'a R,
}

/// Optional output directory; all writes are no-ops when unset.
pub(crate) struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    pub(crate) fn new(cfg: &ExperimentConfig) -> Result<Self> {
        if let Some(dir) = &cfg.output_dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            dir: cfg.output_dir.clone(),
        })
    }

    pub(crate) fn file(&self, name: &str) -> Result<Option<File>> {
        match &self.dir {
            Some(d) => Ok(Some(File::create(d.join(name))?)),
            None => Ok(None),
        }
    }

    pub(crate) fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        if let Some(f) = self.file(name)? {
            let mut wtr = csv::Writer::from_writer(f);
            wtr.write_record(header)?;
            for r in rows {
                wtr.write_record(r)?;
            }
            wtr.flush()?;
        }
        Ok(())
    }

    pub(crate) fn manifest<R: Serialize>(&self, cfg: &ExperimentConfig, name: ExperimentName, summary: &R) -> Result<()> {
        if let Some(f) = self.file("manifest.json")? {
            let m = Manifest {
                experiment: name.label(),
                version: env!("CARGO_PKG_VERSION"),
                seed: cfg.training.seed,
                config: cfg,
                summary,
            };
            serde_json::to_writer_pretty(f, &m)?;
        }
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Coefficient column names `w_-R, ..., w_R`.
pub(crate) fn coefficient_header(radius: usize) -> Vec<String> {
    let r = radius as isize;
    (-r..=r).map(|l| format!("w_{l}")).collect()
}

pub(crate) fn system_for(cfg: &ExperimentConfig, ts: &TrainingSet, radius: usize) -> Result<RegressionSystem> {
    assemble_regression(ts, radius, cfg.lambda, cfg.box_bound)
}

pub(crate) fn learn(cfg: &ExperimentConfig, sys: &RegressionSystem, method: Method) -> Result<SolverReport> {
    let cs = build_skew_constraints((sys.dim() - 1) / 2)?;
    solve(method, sys, &cs, &cfg.solver.options(method))
}

pub(crate) fn run_sim(
    cfg: &ExperimentConfig,
    grid: Grid1D,
    stencil: &Stencil,
    init: &FieldPair,
    dt: f64,
    snapshots: bool,
) -> Result<SimResult> {
    let sim = SimConfig::new(grid, stencil.clone(), dt, cfg.sim.n_steps).with_backend(cfg.sim.backend);
    simulate(init, &sim, snapshots.then_some(cfg.sim.snapshot_every))
}

/// Runs the experiment named in `cfg`, returning its report as JSON.
pub fn run_named(cfg: &ExperimentConfig) -> Result<serde_json::Value> {
    Ok(match cfg.name {
        ExperimentName::Table1 => serde_json::to_value(run_table1(cfg)?)?,
        ExperimentName::Convergence => serde_json::to_value(run_convergence(cfg)?)?,
        ExperimentName::Energy => serde_json::to_value(run_energy(cfg)?)?,
        ExperimentName::Dispersion => serde_json::to_value(run_dispersion(cfg)?)?,
        ExperimentName::Nonstandard => serde_json::to_value(run_nonstandard(cfg)?)?,
        ExperimentName::Noisy => serde_json::to_value(run_noisy(cfg)?)?,
        ExperimentName::SolverBench => serde_json::to_value(run_solver_bench(cfg)?)?,
    })
}
