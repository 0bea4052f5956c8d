//! Primal active-set method for the box- and equality-constrained QP.
//!
//! Starts at the feasible point `P(0)`, moves along exact equality-constrained
//! Newton steps and adds a blocking bound when one is hit; drops the bound
//! with the most negative multiplier at a stationary point. Finishes with a
//! direct KKT solve on the final working set, so when no bound is active the
//! answer is the closed-form equality-constrained solution.

use nalgebra::{DMatrix, DVector};

use super::{check_dims, saddle_matrix, Method, SolverOptions, SolverReport, TraceRecorder};
use crate::error::{Error, Result};
use crate::regression::{project_affine, ConstraintSet, RegressionSystem};

/// Relative tolerance on KKT stationarity and multiplier signs.
const KKT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
struct ActiveBound {
    index: usize,
    /// +1 for `w_j = M`, -1 for `w_j = -M`.
    side: f64,
}

struct Workspace<'a> {
    sys: &'a RegressionSystem,
    cs: &'a ConstraintSet,
    hessian: DMatrix<f64>,
}

impl Workspace<'_> {
    fn normals(&self, active: &[ActiveBound]) -> DMatrix<f64> {
        let p = self.sys.dim();
        let m = self.cs.rows();
        let mut n = DMatrix::zeros(m + active.len(), p);
        n.view_mut((0, 0), (m, p)).copy_from(self.cs.c());
        for (r, b) in active.iter().enumerate() {
            n[(m + r, b.index)] = 1.0;
        }
        n
    }

    /// Solves `[[H, N^T], [N, 0]] [x; nu] = [top; bottom]`.
    fn kkt_solve(
        &self,
        active: &[ActiveBound],
        top: &DVector<f64>,
        bottom: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let p = self.sys.dim();
        let normals = self.normals(active);
        let k = saddle_matrix(&self.hessian, &normals);
        let mut rhs = DVector::zeros(p + normals.nrows());
        rhs.rows_mut(0, p).copy_from(top);
        rhs.rows_mut(p, normals.nrows()).copy_from(bottom);
        let sol = k
            .lu()
            .solve(&rhs)
            .ok_or(Error::Singular("active-set KKT matrix"))?;
        Ok((
            sol.rows(0, p).into_owned(),
            sol.rows(p, normals.nrows()).into_owned(),
        ))
    }

    /// Direct solve for the iterate satisfying the working set exactly.
    fn solve_on(&self, active: &[ActiveBound]) -> Result<(DVector<f64>, DVector<f64>)> {
        let m = self.cs.rows();
        let bound = self.sys.box_bound();
        let mut bottom = DVector::zeros(m + active.len());
        bottom.rows_mut(0, m).copy_from(self.cs.d());
        for (r, b) in active.iter().enumerate() {
            bottom[m + r] = b.side * bound;
        }
        self.kkt_solve(active, self.sys.atb(), &bottom)
    }

    /// Signed bound multipliers (>= 0 at optimality) from the KKT multipliers.
    fn bound_multipliers(&self, active: &[ActiveBound], nu: &DVector<f64>) -> Vec<f64> {
        let m = self.cs.rows();
        // H w - A^T b + N^T nu = 0, so an upper bound needs nu >= 0
        // and a lower bound nu <= 0
        active
            .iter()
            .enumerate()
            .map(|(r, b)| b.side * nu[m + r])
            .collect()
    }
}

pub fn solve_reference(sys: &RegressionSystem, cs: &ConstraintSet, opts: &SolverOptions) -> Result<SolverReport> {
    opts.validate()?;
    check_dims(sys, cs)?;
    let p = sys.dim();
    let bound = sys.box_bound();
    let ws = Workspace {
        sys,
        cs,
        hessian: sys.hessian(),
    };
    let grad_scale = sys.atb().amax().max(sys.hessian().amax() * bound).max(1.0);
    let limit = 1usize << p.min(20);
    let mut trace = TraceRecorder::new(Method::Reference);

    let mut w = project_affine(&DVector::zeros(p), cs)?;
    if w.amax() > bound {
        return Err(Error::InvalidConfig(
            "equality constraints admit no point near the origin inside the box".into(),
        ));
    }
    let mut active: Vec<ActiveBound> = Vec::new();
    let mut changes = 0usize;
    // set after an unblocked full step: w minimizes over the working set
    let mut at_subspace_min = false;
    loop {
        if changes > limit {
            return Err(Error::ActiveSetCycling { limit });
        }
        let g = sys.gradient(&w);
        let zeros = DVector::zeros(cs.rows() + active.len());
        let (dir, nu) = ws.kkt_solve(&active, &(-g), &zeros)?;

        if at_subspace_min || dir.norm() <= 1e-14 * (1.0 + w.norm()) {
            at_subspace_min = false;
            let mults = ws.bound_multipliers(&active, &nu);
            let worst = mults
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, v)| (i, *v));
            match worst {
                Some((i, v)) if v < -KKT_TOL * grad_scale => {
                    active.remove(i);
                    changes += 1;
                    trace.record(sys.objective(&w), cs.residual(&w), 0.0)?;
                    continue;
                }
                _ => break,
            }
        }

        // longest feasible step along dir, capped at 1
        let mut alpha = 1.0;
        let mut blocking = None;
        // components pinned implicitly by the working set move only by roundoff
        let negligible = 1e-13 * dir.amax();
        for j in 0..p {
            if active.iter().any(|b| b.index == j) || dir[j].abs() <= negligible {
                continue;
            }
            let (limit_val, side) = if dir[j] > 0.0 { (bound, 1.0) } else { (-bound, -1.0) };
            let room = (limit_val - w[j]) / dir[j];
            if room < alpha {
                alpha = room.max(0.0);
                blocking = Some(ActiveBound { index: j, side });
            }
        }
        let next = &w + &dir * alpha;
        let step = (&next - &w).norm();
        w = next;
        match blocking {
            Some(b) => {
                active.push(b);
                changes += 1;
            }
            None => at_subspace_min = true,
        }
        trace.record(sys.objective(&w), cs.residual(&w), step)?;
    }

    // exact solve on the final working set
    let (w_exact, nu) = ws.solve_on(&active)?;
    let stationarity = (&ws.hessian * &w_exact - sys.atb() + ws.normals(&active).tr_mul(&nu)).amax();
    let mults_ok = ws
        .bound_multipliers(&active, &nu)
        .iter()
        .all(|m| *m >= -KKT_TOL * grad_scale);
    let in_box = w_exact.amax() <= bound * (1.0 + 1e-12);
    let step = (&w_exact - &w).norm();
    trace.record(sys.objective(&w_exact), cs.residual(&w_exact), step)?;
    let converged = stationarity <= KKT_TOL * grad_scale && mults_ok && in_box;
    Ok(trace.finish(&w_exact, converged))
}
