//! PG / NAG / ADMM (and the reference solver) on one system, with traces.

use serde::Serialize;

use super::{fmt, system_for, ExperimentConfig, ExperimentName, Output};
use crate::error::Result;
use crate::regression::build_skew_constraints;
use crate::solvers::{solve, Method, SolverReport};
use crate::training::generate_training_set;

/// Relative slack for comparing two converged objective values that agree
/// to rounding.
const ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverBenchChecks {
    pub pg_monotone: bool,
    pub nag_increases: usize,
    /// First NAG iteration whose objective reaches PG's final value.
    pub nag_iters_to_pg_final: Option<usize>,
    pub pg_iterations: usize,
    pub nag_final_le_pg: bool,
    /// `(f_ADMM(w^1) - f_ref) / |f_ref|`.
    pub admm_first_relative_gap: f64,
    pub admm_first_le_nag_20th: bool,
    /// Largest `|f_m - f_ref| / |f_ref|` over the four methods.
    pub max_final_relative_spread: f64,
}

impl SolverBenchChecks {
    /// Human-readable list of the properties that did not hold.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.pg_monotone {
            out.push("PG objective trace is not monotone".to_string());
        }
        if self.nag_increases == 0 {
            out.push("NAG objective trace never increases".to_string());
        }
        match self.nag_iters_to_pg_final {
            Some(k) if k < self.pg_iterations => {}
            other => out.push(format!(
                "NAG reached PG's final objective at {other:?}, PG used {} iterations",
                self.pg_iterations
            )),
        }
        if !self.nag_final_le_pg {
            out.push("NAG final objective exceeds PG's".to_string());
        }
        if !self.admm_first_le_nag_20th {
            out.push("ADMM first iterate is worse than NAG's 20th".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverBenchReport {
    pub reports: Vec<SolverReport>,
    pub reference_objective: f64,
    pub checks: SolverBenchChecks,
}

impl SolverBenchReport {
    pub fn report(&self, method: Method) -> &SolverReport {
        self.reports.iter().find(|r| r.method == method).expect("all methods run")
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    finals: Vec<(Method, usize, bool, f64, f64)>,
    reference_objective: f64,
    checks: &'a SolverBenchChecks,
}

pub fn run_solver_bench(cfg: &ExperimentConfig) -> Result<SolverBenchReport> {
    cfg.validate()?;
    let out = Output::new(cfg)?;
    let ts = generate_training_set(&cfg.training)?;
    let sys = system_for(cfg, &ts, cfg.radius)?;
    let cs = build_skew_constraints(cfg.radius)?;

    let reports: Vec<SolverReport> = Method::ALL
        .into_iter()
        .map(|m| {
            let mut opts = cfg.solver.options(m);
            if m == Method::Admm {
                opts.rho = cfg.bench_rho;
            }
            solve(m, &sys, &cs, &opts)
        })
        .collect::<Result<_>>()?;
    let [pg, nag, admm, reference] = [0, 1, 2, 3].map(|i| &reports[i]);
    let f_ref = reference.final_objective();
    let f_pg = pg.final_objective();
    let rel = |f: f64| (f - f_ref) / f_ref.abs();

    let checks = SolverBenchChecks {
        pg_monotone: pg.objective_trace.windows(2).all(|p| p[1] <= p[0]),
        nag_increases: nag.objective_trace.windows(2).filter(|p| p[1] > p[0]).count(),
        nag_iters_to_pg_final: nag
            .objective_trace
            .iter()
            .position(|f| *f <= f_pg + ROUNDOFF * f_pg.abs())
            .map(|k| k + 1),
        pg_iterations: pg.iterations,
        nag_final_le_pg: nag.final_objective() <= f_pg + ROUNDOFF * f_pg.abs(),
        admm_first_relative_gap: rel(admm.objective_trace[0]),
        admm_first_le_nag_20th: nag
            .objective_trace
            .get(19)
            .is_none_or(|f20| admm.objective_trace[0] <= *f20),
        max_final_relative_spread: reports.iter().map(|r| rel(r.final_objective()).abs()).fold(0.0, f64::max),
    };

    for r in &reports {
        if let Some(f) = out.file(&format!("trace_{}.csv", r.method.label().to_ascii_lowercase()))? {
            r.write_iterates_csv(f)?;
        }
    }
    // wall-clock data lives apart from the reproducible traces
    let timing: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| {
            r.time_trace
                .iter()
                .enumerate()
                .map(|(k, t)| vec![r.method.label().to_string(), (k + 1).to_string(), fmt(*t)])
        })
        .collect();
    out.csv("timing.csv", &["method", "iter", "elapsed_s"], &timing)?;
    let finals: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.method.label().to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
                fmt(r.final_objective()),
                fmt(r.final_eq_residual()),
            ]
        })
        .collect();
    out.csv(
        "summary.csv",
        &["method", "iterations", "converged", "final_objective", "final_eq_residual"],
        &finals,
    )?;
    let summary = Summary {
        finals: reports
            .iter()
            .map(|r| (r.method, r.iterations, r.converged, r.final_objective(), r.final_eq_residual()))
            .collect(),
        reference_objective: f_ref,
        checks: &checks,
    };
    out.manifest(cfg, ExperimentName::SolverBench, &summary)?;

    Ok(SolverBenchReport {
        reference_objective: f_ref,
        checks,
        reports,
    })
}
