//! Solvers for the skew-constrained stencil QP.
//!
//! * [`solve_pg`] / [`solve_nag`]: first-order methods on the equality-only
//!   problem; every iterate is projected onto `{Cw = d}`.
//! * [`solve_admm`]: splits the box onto a copy `z`; the `w` step is an exact
//!   KKT solve factored once.
//! * [`solve_reference`]: primal active-set method over the box bounds with
//!   exact equality-constrained KKT solves; the accuracy baseline.

mod active_set;
mod admm;
mod first_order;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discrete::Stencil;
use crate::error::{Error, Result};
use crate::regression::{ConstraintSet, RegressionSystem};

pub use active_set::solve_reference;
pub use admm::{solve_admm, AdmmSolver, AdmmState};
pub use first_order::{nesterov_momentum, solve_nag, solve_pg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pg,
    Nag,
    Admm,
    #[serde(rename = "ref")]
    Reference,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pg, Method::Nag, Method::Admm, Method::Reference];

    pub fn label(self) -> &'static str {
        match self {
            Method::Pg => "PG",
            Method::Nag => "NAG",
            Method::Admm => "ADMM",
            Method::Reference => "REFERENCE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pg" => Ok(Method::Pg),
            "nag" => Ok(Method::Nag),
            "admm" => Ok(Method::Admm),
            "ref" | "reference" => Ok(Method::Reference),
            other => Err(Error::InvalidConfig(format!("unknown solver method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once `||w^{k+1} - w^k||_2 <= tol`.
    pub tol: f64,
    /// ADMM penalty.
    pub rho: f64,
    /// Step size override for PG/NAG; defaults to `1 / lipschitz_estimate`.
    pub step: Option<f64>,
    pub enforce_box: bool,
}

impl SolverOptions {
    /// Defaults per method: 500 iterations for PG/NAG, 100 for ADMM.
    pub fn for_method(method: Method) -> Self {
        let (max_iters, enforce_box) = match method {
            Method::Pg | Method::Nag => (500, false),
            Method::Admm | Method::Reference => (100, true),
        };
        Self {
            max_iters,
            tol: 1e-12,
            rho: 1.0,
            step: None,
            enforce_box,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be > 0".into()));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::InvalidConfig("rho must be > 0".into()));
        }
        if let Some(step) = self.step {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::InvalidConfig("step must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Final iterate plus per-iteration traces. All traces have one entry per
/// iteration; entry `k` describes the iterate produced by iteration `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub method: Method,
    pub w_final: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub eq_residual_trace: Vec<f64>,
    pub step_diff_trace: Vec<f64>,
    pub time_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolverReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("at least one iteration")
    }

    pub fn final_eq_residual(&self) -> f64 {
        *self.eq_residual_trace.last().expect("at least one iteration")
    }

    pub fn stencil(&self) -> Result<Stencil> {
        Stencil::new(self.w_final.clone())
    }

    pub fn w_final_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.w_final)
    }

    /// One row per iteration: `iter,objective,eq_residual,step_diff,elapsed_s`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["iter", "objective", "eq_residual", "step_diff", "elapsed_s"])?;
        for k in 0..self.iterations {
            wtr.write_record(&[
                (k + 1).to_string(),
                format!("{:e}", self.objective_trace[k]),
                format!("{:e}", self.eq_residual_trace[k]),
                format!("{:e}", self.step_diff_trace[k]),
                format!("{:e}", self.time_trace[k]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Same as [`SolverReport::write_csv`] without the wall-clock column, so
    /// the output is reproducible byte for byte.
    pub fn write_iterates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["iter", "objective", "eq_residual", "step_diff"])?;
        for k in 0..self.iterations {
            wtr.write_record(&[
                (k + 1).to_string(),
                format!("{:e}", self.objective_trace[k]),
                format!("{:e}", self.eq_residual_trace[k]),
                format!("{:e}", self.step_diff_trace[k]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(std::fs::File::create(path)?, self)?;
        Ok(())
    }
}

/// Dispatches to the solver for `method`.
pub fn solve(
    method: Method,
    sys: &RegressionSystem,
    cs: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<SolverReport> {
    match method {
        Method::Pg => solve_pg(sys, cs, opts),
        Method::Nag => solve_nag(sys, cs, opts),
        Method::Admm => solve_admm(sys, cs, opts),
        Method::Reference => solve_reference(sys, cs, opts),
    }
}

struct TraceRecorder {
    method: Method,
    start: Instant,
    objective: Vec<f64>,
    eq_residual: Vec<f64>,
    step_diff: Vec<f64>,
    time: Vec<f64>,
}

impl TraceRecorder {
    fn new(method: Method) -> Self {
        Self {
            method,
            start: Instant::now(),
            objective: Vec::new(),
            eq_residual: Vec::new(),
            step_diff: Vec::new(),
            time: Vec::new(),
        }
    }

    fn record(&mut self, objective: f64, eq_residual: f64, step_diff: f64) -> Result<()> {
        let iteration = self.objective.len() + 1;
        if !objective.is_finite() || !step_diff.is_finite() {
            return Err(Error::NonFinite {
                context: self.method.label(),
                iteration,
            });
        }
        self.objective.push(objective);
        self.eq_residual.push(eq_residual);
        self.step_diff.push(step_diff);
        self.time.push(self.start.elapsed().as_secs_f64());
        Ok(())
    }

    fn finish(self, w: &DVector<f64>, converged: bool) -> SolverReport {
        SolverReport {
            method: self.method,
            w_final: w.iter().copied().collect(),
            iterations: self.objective.len(),
            objective_trace: self.objective,
            eq_residual_trace: self.eq_residual,
            step_diff_trace: self.step_diff,
            time_trace: self.time,
            converged,
        }
    }
}

fn check_dims(sys: &RegressionSystem, cs: &ConstraintSet) -> Result<()> {
    crate::error::check_len("constraint columns vs stencil length", sys.dim(), cs.dim())
}

/// Dense saddle-point matrix `[[H, N^T], [N, 0]]`.
fn saddle_matrix(h: &DMatrix<f64>, normals: &DMatrix<f64>) -> DMatrix<f64> {
    let p = h.nrows();
    let m = normals.nrows();
    let mut k = DMatrix::zeros(p + m, p + m);
    k.view_mut((0, 0), (p, p)).copy_from(h);
    k.view_mut((0, p), (p, m)).copy_from(&normals.transpose());
    k.view_mut((p, 0), (m, p)).copy_from(normals);
    k
}
