use nalgebra::{DVector, LU};
use nalgebra::{Dyn, DMatrix};

use super::{check_dims, saddle_matrix, Method, SolverOptions, SolverReport, TraceRecorder};
use crate::error::{Error, Result};
use crate::regression::{ConstraintSet, RegressionSystem};

/// ADMM iterate triple: stencil `w`, box copy `z`, scaled dual `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub w: DVector<f64>,
    pub z: DVector<f64>,
    pub u: DVector<f64>,
}

impl AdmmState {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: DVector::zeros(dim),
            z: DVector::zeros(dim),
            u: DVector::zeros(dim),
        }
    }
}

/// ADMM with the KKT matrix `[[A^T A + (lambda + rho) I, C^T], [C, 0]]`
/// factored once.
pub struct AdmmSolver<'a> {
    sys: &'a RegressionSystem,
    cs: &'a ConstraintSet,
    rho: f64,
    kkt: LU<f64, Dyn, Dyn>,
}

impl<'a> AdmmSolver<'a> {
    pub fn new(sys: &'a RegressionSystem, cs: &'a ConstraintSet, rho: f64) -> Result<Self> {
        check_dims(sys, cs)?;
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidConfig("rho must be > 0".into()));
        }
        let p = sys.dim();
        let h = sys.hessian() + DMatrix::identity(p, p) * rho;
        let kkt = saddle_matrix(&h, cs.c()).lu();
        if !kkt.is_invertible() {
            return Err(Error::Singular("ADMM KKT matrix"));
        }
        Ok(Self { sys, cs, rho, kkt })
    }

    /// One sweep: KKT solve for `w`, box clip for `z`, dual ascent for `u`.
    pub fn step(&self, state: &mut AdmmState) -> Result<()> {
        let p = self.sys.dim();
        let m = self.cs.rows();
        let mut rhs = DVector::zeros(p + m);
        rhs.rows_mut(0, p)
            .copy_from(&(self.sys.atb() + (&state.z - &state.u) * self.rho));
        rhs.rows_mut(p, m).copy_from(self.cs.d());
        let sol = self
            .kkt
            .solve(&rhs)
            .ok_or(Error::Singular("ADMM KKT matrix"))?;
        state.w = sol.rows(0, p).into_owned();
        let bound = self.sys.box_bound();
        state.z = (&state.w + &state.u).map(|v| v.clamp(-bound, bound));
        state.u += &state.w - &state.z;
        Ok(())
    }

    /// Iterates from `state` until the `w` step and the primal gap `||w - z||`
    /// both fall below `opts.tol`. Returns `z` as the solution.
    pub fn run(&self, mut state: AdmmState, opts: &SolverOptions) -> Result<SolverReport> {
        opts.validate()?;
        let mut trace = TraceRecorder::new(Method::Admm);
        let mut converged = false;
        for _ in 0..opts.max_iters {
            let w_old = state.w.clone();
            self.step(&mut state)?;
            let step = (&state.w - &w_old).norm();
            trace.record(self.sys.objective(&state.w), self.cs.residual(&state.w), step)?;
            if step <= opts.tol && (&state.w - &state.z).norm() <= opts.tol {
                converged = true;
                break;
            }
        }
        Ok(trace.finish(&state.z, converged))
    }
}

pub fn solve_admm(sys: &RegressionSystem, cs: &ConstraintSet, opts: &SolverOptions) -> Result<SolverReport> {
    opts.validate()?;
    let solver = AdmmSolver::new(sys, cs, opts.rho)?;
    solver.run(AdmmState::zeros(sys.dim()), opts)
}
