use nalgebra::DVector;

use super::{check_dims, Method, SolverOptions, SolverReport, TraceRecorder};
use crate::error::{Error, Result};
use crate::regression::{lipschitz_estimate, project_affine, ConstraintSet, RegressionSystem};

fn prepare(
    name: &'static str,
    sys: &RegressionSystem,
    cs: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<f64> {
    opts.validate()?;
    check_dims(sys, cs)?;
    if opts.enforce_box {
        return Err(Error::BoxNotSupported(name));
    }
    Ok(opts.step.unwrap_or_else(|| 1.0 / lipschitz_estimate(sys)))
}

/// Projected gradient: `w <- P(w - alpha grad f(w))` from `P(0)`.
pub fn solve_pg(sys: &RegressionSystem, cs: &ConstraintSet, opts: &SolverOptions) -> Result<SolverReport> {
    let alpha = prepare("projected gradient", sys, cs, opts)?;
    let mut trace = TraceRecorder::new(Method::Pg);
    let mut w = project_affine(&DVector::zeros(sys.dim()), cs)?;
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let next = project_affine(&(&w - sys.gradient(&w) * alpha), cs)?;
        let step = (&next - &w).norm();
        w = next;
        trace.record(sys.objective(&w), cs.residual(&w), step)?;
        if step <= opts.tol {
            converged = true;
            break;
        }
    }
    Ok(trace.finish(&w, converged))
}

/// One update of the momentum schedule: returns `(t_{k+1}, beta_k)` with
/// `t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2` and `beta_k = (t_k - 1) / t_{k+1}`.
pub fn nesterov_momentum(t: f64) -> (f64, f64) {
    let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
    (t_next, (t - 1.0) / t_next)
}

/// Nesterov-accelerated projected gradient with the standard `t_k` schedule.
pub fn solve_nag(sys: &RegressionSystem, cs: &ConstraintSet, opts: &SolverOptions) -> Result<SolverReport> {
    let alpha = prepare("Nesterov accelerated gradient", sys, cs, opts)?;
    let mut trace = TraceRecorder::new(Method::Nag);
    let mut w = project_affine(&DVector::zeros(sys.dim()), cs)?;
    let mut w_prev = w.clone();
    let mut t = 1.0;
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let (t_next, beta) = nesterov_momentum(t);
        let y = &w + (&w - &w_prev) * beta;
        let next = project_affine(&(&y - sys.gradient(&y) * alpha), cs)?;
        let step = (&next - &w).norm();
        w_prev = std::mem::replace(&mut w, next);
        t = t_next;
        trace.record(sys.objective(&w), cs.residual(&w), step)?;
        if step <= opts.tol {
            converged = true;
            break;
        }
    }
    Ok(trace.finish(&w, converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::build_skew_constraints;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn identity_system(b: [f64; 3]) -> RegressionSystem {
        RegressionSystem::new(DMatrix::identity(3, 3), DVector::from_row_slice(&b), 0.0, 100.0).unwrap()
    }

    fn opts(method: Method) -> SolverOptions {
        SolverOptions::for_method(method)
    }

    #[test]
    fn pg_feasible_unconstrained_minimum() {
        let cs = build_skew_constraints(1).unwrap();
        let rep = solve_pg(&identity_system([1.0, 0.0, -1.0]), &cs, &opts(Method::Pg)).unwrap();
        for (a, b) in rep.w_final.iter().zip([1.0, 0.0, -1.0]) {
            assert_relative_eq!(*a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn pg_projects_symmetric_target_to_zero() {
        let cs = build_skew_constraints(1).unwrap();
        let rep = solve_pg(&identity_system([1.0, 1.0, 1.0]), &cs, &opts(Method::Pg)).unwrap();
        assert!(rep.w_final.iter().all(|v| v.abs() < 1e-10));
        assert!(rep.converged);
    }

    #[test]
    fn pg_traces_are_consistent() {
        let cs = build_skew_constraints(1).unwrap();
        let sys = RegressionSystem::new(
            DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.5, 0.0, 1.0, 3.0, 2.0, 0.1, 1.0, 1.0, 1.0, 1.0]),
            DVector::from_row_slice(&[1.0, -2.0, 0.5, 3.0]),
            1e-3,
            100.0,
        )
        .unwrap();
        let rep = solve_pg(&sys, &cs, &opts(Method::Pg)).unwrap();
        assert_eq!(rep.objective_trace.len(), rep.iterations);
        assert_eq!(rep.time_trace.len(), rep.iterations);
        assert!(rep.eq_residual_trace.iter().all(|r| *r <= 1e-12));
        for pair in rep.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-14);
        }
    }

    #[test]
    fn momentum_schedule_starts_null() {
        let (t1, beta) = nesterov_momentum(1.0);
        assert_relative_eq!(t1, 0.5 * (1.0 + 5f64.sqrt()), epsilon = 1e-15);
        assert_eq!(beta, 0.0);
        let (t2, beta2) = nesterov_momentum(t1);
        assert!(t2 > t1 && beta2 > 0.0 && beta2 < 1.0);
    }

    #[test]
    fn nag_scalar_closed_form() {
        let lambda = 1e-3;
        let sys = RegressionSystem::new(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, 4.0),
            lambda,
            100.0,
        )
        .unwrap();
        let cs = ConstraintSet::none(1);
        let rep = solve_nag(&sys, &cs, &opts(Method::Nag)).unwrap();
        assert_relative_eq!(rep.w_final[0], 8.0 / (4.0 + lambda), epsilon = 1e-10);
    }

    #[test]
    fn box_enforcement_is_rejected() {
        let cs = build_skew_constraints(1).unwrap();
        let mut o = opts(Method::Pg);
        o.enforce_box = true;
        let sys = identity_system([1.0, 0.0, -1.0]);
        assert!(matches!(solve_pg(&sys, &cs, &o), Err(Error::BoxNotSupported(_))));
        assert!(matches!(solve_nag(&sys, &cs, &o), Err(Error::BoxNotSupported(_))));
    }

    #[test]
    fn non_finite_is_reported() {
        let cs = build_skew_constraints(1).unwrap();
        let mut o = opts(Method::Pg);
        o.step = Some(1e300);
        let sys = identity_system([1e10, 0.0, -1e10]);
        assert!(matches!(solve_pg(&sys, &cs, &o), Err(Error::NonFinite { .. })));
    }
}
