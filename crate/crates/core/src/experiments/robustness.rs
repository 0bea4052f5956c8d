//! Nonstandard target recovery and noisy-data training.

use nalgebra::DVector;
use serde::Serialize;

use super::{fmt, learn, run_sim, system_for, ExperimentConfig, ExperimentName, Output};
use crate::discrete::{centered_difference_of_radius, Grid1D, Stencil};
use crate::error::{Error, Result};
use crate::par;
use crate::regression::{build_skew_constraints, solve_unconstrained};
use crate::simulate::{relative_l2_error, single_mode_initial, SimResult};
use crate::solvers::Method;
use crate::training::{generate_training_set, generate_training_set_with, DerivativeSource, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonstandardReport {
    pub w_star: Vec<f64>,
    pub w_qp: Vec<f64>,
    pub w_cd: Vec<f64>,
    /// `||w_QP - w*|| / ||w*||`.
    pub qp_relative_error: f64,
    /// `||w_CD - w*|| / ||w*||`.
    pub cd_relative_error: f64,
    pub qp_constraint_residual: f64,
    /// Max relative energy drift of the `w*`, `w_CD` and `w_QP` runs.
    pub drift_star: f64,
    pub drift_cd: f64,
    pub drift_qp: f64,
    /// Relative L2 distance of `E(x, T)` from the `w*` run.
    pub field_error_cd: f64,
    pub field_error_qp: f64,
}

fn relative_distance(a: &Stencil, b: &Stencil) -> Result<f64> {
    Ok(a.distance(b)? / b.l2_norm())
}

pub fn run_nonstandard(cfg: &ExperimentConfig) -> Result<NonstandardReport> {
    cfg.validate()?;
    let out = Output::new(cfg)?;
    let grid = cfg.grid();
    let w_star = cfg.nonstandard.stencil(&grid)?;
    let radius = w_star.radius();
    let ts = generate_training_set_with(&cfg.training, &DerivativeSource::Operator(w_star.clone()))?;
    let sys = system_for(cfg, &ts, radius)?;
    let rep = learn(cfg, &sys, Method::Admm)?;
    let w_qp = rep.stencil()?;
    let w_cd = centered_difference_of_radius(&grid, radius)?;

    let init = single_mode_initial(&grid);
    let dt = cfg.dt();
    let runs: Vec<SimResult> = [&w_star, &w_cd, &w_qp]
        .into_iter()
        .map(|w| run_sim(cfg, grid, w, &init, dt, false))
        .collect::<Result<_>>()?;

    let report = NonstandardReport {
        w_star: w_star.coeffs().to_vec(),
        w_qp: w_qp.coeffs().to_vec(),
        w_cd: w_cd.coeffs().to_vec(),
        qp_relative_error: relative_distance(&w_qp, &w_star)?,
        cd_relative_error: relative_distance(&w_cd, &w_star)?,
        qp_constraint_residual: rep.final_eq_residual(),
        drift_star: runs[0].max_relative_energy_drift(),
        drift_cd: runs[1].max_relative_energy_drift(),
        drift_qp: runs[2].max_relative_energy_drift(),
        field_error_cd: relative_l2_error(&runs[1].final_state.e, &runs[0].final_state.e, &grid)?,
        field_error_qp: relative_l2_error(&runs[2].final_state.e, &runs[0].final_state.e, &grid)?,
    };

    let r = radius as isize;
    let stencil_rows: Vec<Vec<String>> = (-r..=r)
        .map(|l| {
            vec![
                l.to_string(),
                fmt(w_star.at(l)),
                fmt(w_cd.at(l)),
                fmt(w_qp.at(l)),
            ]
        })
        .collect();
    out.csv("stencils.csv", &["offset", "w_star", "w_cd", "w_qp"], &stencil_rows)?;
    write_three("fields.csv", &out, &grid, &["w_star", "w_cd", "w_qp"], &runs.iter().map(Some).collect::<Vec<_>>())?;
    out.manifest(cfg, ExperimentName::Nonstandard, &report)?;
    Ok(report)
}

/// Writes `E(x,T)` columns to `fields_name` and the energy series to `energy.csv`.
fn write_three(fields_name: &str, out: &Output, grid: &Grid1D, labels: &[&str], runs: &[Option<&SimResult>]) -> Result<()> {
    let mut header = vec!["x".to_string()];
    header.extend(labels.iter().map(|l| format!("E_{l}")));
    let rows: Vec<Vec<String>> = (0..grid.n())
        .map(|i| {
            let mut row = vec![fmt(grid.x(i))];
            row.extend(runs.iter().map(|r| r.map(|r| fmt(r.final_state.e[i])).unwrap_or_default()));
            row
        })
        .collect();
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(fields_name, &refs, &rows)?;

    let steps = runs.iter().flatten().map(|r| r.energy_series.len()).max().unwrap_or(0);
    let mut header = vec!["step".to_string()];
    header.extend(labels.iter().map(|l| format!("energy_{l}")));
    let rows: Vec<Vec<String>> = (0..steps)
        .map(|n| {
            let mut row = vec![n.to_string()];
            row.extend(runs.iter().map(|r| {
                r.and_then(|r| r.energy_series.get(n)).map(|e| fmt(e.value())).unwrap_or_default()
            }));
            row
        })
        .collect();
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("energy.csv", &refs, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisySweepRow {
    pub sigma: f64,
    pub ls_constraint_residual: f64,
    /// `E^{N_t} / E^0` of the unconstrained stencil; infinite when the run overflowed.
    pub ls_energy_ratio: f64,
    pub qp_constraint_residual: f64,
    pub qp_drift: f64,
    /// Relative L2 distance of the constrained run's `E(x,T)` from the clean centered difference.
    pub qp_field_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisyReport {
    pub sigma: f64,
    pub radius: usize,
    pub w_cd: Vec<f64>,
    pub w_ls: Vec<f64>,
    pub w_qp: Vec<f64>,
    pub ls_condition_number: f64,
    pub cd_drift: f64,
    /// Step at which the unconstrained run stopped producing finite values.
    pub ls_overflow_step: Option<usize>,
    pub ls_blew_up: bool,
    pub headline: NoisySweepRow,
    pub sweep: Vec<NoisySweepRow>,
}

struct NoisyRuns {
    row: NoisySweepRow,
    w_ls: Stencil,
    w_qp: Stencil,
    condition: f64,
    ls_run: std::result::Result<SimResult, usize>,
    qp_run: SimResult,
}

fn noisy_case(cfg: &ExperimentConfig, sigma: f64, cd_run: &SimResult, snapshots: bool) -> Result<NoisyRuns> {
    let grid = cfg.grid();
    let radius = cfg.noisy.radius;
    let training = TrainingConfig {
        noise_std: sigma,
        ..cfg.training.clone()
    };
    let ts = generate_training_set(&training)?;
    let sys = system_for(cfg, &ts, radius)?;
    let cs = build_skew_constraints(radius)?;
    let ls = solve_unconstrained(&sys)?;
    let qp = learn(cfg, &sys, Method::Admm)?;
    let w_qp = qp.stencil()?;
    let init = single_mode_initial(&grid);
    let ls_run = match run_sim(cfg, grid, &ls.stencil, &init, cfg.dt(), snapshots) {
        Ok(r) => Ok(r),
        Err(Error::NonFinite { iteration, .. }) => Err(iteration),
        Err(e) => return Err(e),
    };
    let qp_run = run_sim(cfg, grid, &w_qp, &init, cfg.dt(), snapshots)?;
    let row = NoisySweepRow {
        sigma,
        ls_constraint_residual: cs.residual(&DVector::from_column_slice(ls.stencil.coeffs())),
        ls_energy_ratio: ls_run.as_ref().map(|r| r.energy_ratio()).unwrap_or(f64::INFINITY),
        qp_constraint_residual: qp.final_eq_residual(),
        qp_drift: qp_run.max_relative_energy_drift(),
        qp_field_error: relative_l2_error(&qp_run.final_state.e, &cd_run.final_state.e, &grid)?,
    };
    Ok(NoisyRuns {
        row,
        w_ls: ls.stencil,
        w_qp,
        condition: ls.condition_number,
        ls_run,
        qp_run,
    })
}

/// Centered difference, ridge least squares and constrained ADMM fits on
/// noisy derivative data, each time-stepped with CN.
pub fn run_noisy(cfg: &ExperimentConfig) -> Result<NoisyReport> {
    cfg.validate()?;
    let out = Output::new(cfg)?;
    let grid = cfg.grid();
    let radius = cfg.noisy.radius;
    let w_cd = centered_difference_of_radius(&grid, radius)?;
    let cd_run = run_sim(cfg, grid, &w_cd, &single_mode_initial(&grid), cfg.dt(), true)?;

    let main = noisy_case(cfg, cfg.noisy.sigma, &cd_run, true)?;
    let sweep: Vec<NoisySweepRow> = par::map_slice(&cfg.noisy.sigma_sweep, |&s| {
        noisy_case(cfg, s, &cd_run, false).map(|c| c.row)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let report = NoisyReport {
        sigma: cfg.noisy.sigma,
        radius,
        w_cd: w_cd.coeffs().to_vec(),
        w_ls: main.w_ls.coeffs().to_vec(),
        w_qp: main.w_qp.coeffs().to_vec(),
        ls_condition_number: main.condition,
        cd_drift: cd_run.max_relative_energy_drift(),
        ls_overflow_step: main.ls_run.as_ref().err().copied(),
        ls_blew_up: main.row.ls_energy_ratio >= cfg.noisy.blowup_factor,
        headline: main.row.clone(),
        sweep,
    };

    let ls_ref = main.ls_run.as_ref().ok();
    write_three("fields.csv", &out, &grid, &["cd", "ls", "qp"], &[Some(&cd_run), ls_ref, Some(&main.qp_run)])?;
    for (label, run) in [("cd", Some(&cd_run)), ("ls", ls_ref), ("qp", Some(&main.qp_run))] {
        if let (Some(run), Some(f)) = (run, out.file(&format!("spacetime_{label}.csv"))?) {
            run.write_spacetime_csv(f)?;
        }
    }
    let stencil_rows: Vec<Vec<String>> = (0..2 * radius + 1)
        .map(|i| {
            vec![
                (i as isize - radius as isize).to_string(),
                fmt(report.w_cd[i]),
                fmt(report.w_ls[i]),
                fmt(report.w_qp[i]),
            ]
        })
        .collect();
    out.csv("stencils.csv", &["offset", "w_cd", "w_ls", "w_qp"], &stencil_rows)?;
    if !report.sweep.is_empty() {
        let rows: Vec<Vec<String>> = report
            .sweep
            .iter()
            .map(|r| {
                vec![
                    fmt(r.sigma),
                    fmt(r.ls_constraint_residual),
                    fmt(r.ls_energy_ratio),
                    fmt(r.qp_constraint_residual),
                    fmt(r.qp_drift),
                    fmt(r.qp_field_error),
                ]
            })
            .collect();
        out.csv(
            "sweep.csv",
            &["sigma", "ls_constraint_residual", "ls_energy_ratio", "qp_constraint_residual", "qp_drift", "qp_field_error"],
            &rows,
        )?;
    }
    out.manifest(cfg, ExperimentName::Noisy, &report)?;
    Ok(report)
}
