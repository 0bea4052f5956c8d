//! Learned-vs-centered comparisons on the default problem: the radius-1
//! table, energy conservation, dispersion, and grid convergence.

use serde::Serialize;

use super::{coefficient_header, fmt, learn, run_sim, system_for, ExperimentConfig, ExperimentName, Output};
use crate::analysis::{
    convergence_study, cn_dispersion, half_circle_thetas, symbol, ConvergenceStudy, DispersionCurves,
};
use crate::discrete::{centered_difference_of_radius, Grid1D, Stencil};
use crate::error::Result;
use crate::par;
use crate::regression::{assemble_regression, build_skew_constraints};
use crate::simulate::{relative_l2_error, single_mode_initial, SimResult};
use crate::solvers::{solve_admm, Method};
use crate::training::{generate_training_set, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub label: String,
    pub coefficients: Vec<f64>,
    /// Relative L2 error of `E(x, T)` against the centered-difference run.
    pub err: Option<f64>,
    /// `||Cw - d||_2`.
    pub r_eq: Option<f64>,
    pub objective: Option<f64>,
    pub iterations: Option<usize>,
    /// Set when the solver or the simulation failed; the other fields are then partial.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Report {
    pub radius: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub rows: Vec<Table1Row>,
}

impl Table1Report {
    pub fn row(&self, label: &str) -> Option<&Table1Row> {
        self.rows.iter().find(|r| r.label == label)
    }
}

const FD_LABEL: &str = "FD";

pub fn run_table1(cfg: &ExperimentConfig) -> Result<Table1Report> {
    cfg.validate()?;
    let out = Output::new(cfg)?;
    let grid = cfg.grid();
    let radius = cfg.radius;
    let ts = generate_training_set(&cfg.training)?;
    let sys = system_for(cfg, &ts, radius)?;
    let cs = build_skew_constraints(radius)?;
    let init = single_mode_initial(&grid);
    let dt = cfg.dt();

    let fd = centered_difference_of_radius(&grid, radius)?;
    let fd_run = run_sim(cfg, grid, &fd, &init, dt, false)?;
    let mut rows = vec![Table1Row {
        label: FD_LABEL.into(),
        coefficients: fd.coeffs().to_vec(),
        err: Some(0.0),
        r_eq: Some(cs.residual(&nalgebra::DVector::from_column_slice(fd.coeffs()))),
        objective: Some(sys.objective(&nalgebra::DVector::from_column_slice(fd.coeffs()))),
        iterations: None,
        failure: None,
    }];
    let mut fields = vec![("FD".to_string(), fd_run.final_state.e.clone())];

    for method in Method::ALL {
        let mut row = Table1Row {
            label: method.label().into(),
            coefficients: Vec::new(),
            err: None,
            r_eq: None,
            objective: None,
            iterations: None,
            failure: None,
        };
        match learn(cfg, &sys, method) {
            Ok(rep) => {
                row.coefficients = rep.w_final.clone();
                row.r_eq = Some(rep.final_eq_residual());
                row.objective = Some(rep.final_objective());
                row.iterations = Some(rep.iterations);
                let run = rep
                    .stencil()
                    .and_then(|w| run_sim(cfg, grid, &w, &init, dt, false))
                    .and_then(|r| {
                        let err = relative_l2_error(&r.final_state.e, &fd_run.final_state.e, &grid)?;
                        Ok((r, err))
                    });
                match run {
                    Ok((r, err)) => {
                        row.err = Some(err);
                        fields.push((method.label().to_string(), r.final_state.e));
                    }
                    Err(e) => row.failure = Some(format!("simulation: {e}")),
                }
            }
            Err(e) => row.failure = Some(format!("solver: {e}")),
        }
        rows.push(row);
    }

    let report = Table1Report {
        radius,
        dt,
        n_steps: cfg.sim.n_steps,
        rows,
    };

    let mut header: Vec<String> = vec!["method".into()];
    header.extend(coefficient_header(radius));
    header.extend(["err", "r_eq", "objective", "iterations", "failure"].map(String::from));
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    let table: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut line = vec![r.label.clone()];
            if r.coefficients.len() == 2 * radius + 1 {
                line.extend(r.coefficients.iter().map(|c| format!("{c:.9e}")));
            } else {
                line.extend(std::iter::repeat_n(String::new(), 2 * radius + 1));
            }
            line.extend([
                opt(r.err),
                opt(r.r_eq),
                opt(r.objective),
                r.iterations.map(|i| i.to_string()).unwrap_or_default(),
                r.failure.clone().unwrap_or_default(),
            ]);
            line
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("table1.csv", &header_refs, &table)?;
    write_fields(&out, &grid, &fields)?;
    out.manifest(cfg, ExperimentName::Table1, &report)?;
    Ok(report)
}

/// `fields.csv`: one `E(x, T)` column per stencil.
fn write_fields(out: &Output, grid: &Grid1D, fields: &[(String, Vec<f64>)]) -> Result<()> {
    let mut header = vec!["x".to_string()];
    header.extend(fields.iter().map(|(l, _)| format!("E_{l}")));
    let rows: Vec<Vec<String>> = (0..grid.n())
        .map(|i| {
            let mut r = vec![fmt(grid.x(i))];
            r.extend(fields.iter().map(|(_, e)| fmt(e[i])));
            r
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("fields.csv", &header_refs, &rows)
}

/// Traveling-wave grid refinement of ADMM-learned stencils, re-trained at
/// every resolution.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let out = Output::new(cfg)?;
    let settings = &cfg.convergence;
    let provider = |grid: &Grid1D| -> Result<Stencil> {
        let training = TrainingConfig {
            grid: Grid1D::new(grid.n(), grid.length())?,
            ..cfg.training.clone()
        };
        let ts = generate_training_set(&training)?;
        let box_bound = settings.box_bound_at_64 * grid.n() as f64 / 64.0;
        let sys = assemble_regression(&ts, settings.radius, cfg.lambda, box_bound)?;
        let cs = build_skew_constraints(settings.radius)?;
        let rep = solve_admm(&sys, &cs, &cfg.solver.options(Method::Admm))?;
        Ok(rep.stencil()?.with_dx(grid.dx()))
    };
    let mut setup = settings.setup.clone();
    setup.length = cfg.grid().length();
    let study = convergence_study(provider, &setup)?;
    if let Some(f) = out.file("convergence.csv")? {
        study.write_csv(f)?;
    }
    out.manifest(cfg, ExperimentName::Convergence, &study)?;
    Ok(study)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub radius: usize,
    pub label: String,
    pub dt_factor: f64,
    pub skew_residual: f64,
    pub max_relative_drift: f64,
    pub energy_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
}

impl EnergyReport {
    pub fn worst_drift(&self) -> f64 {
        self.rows.iter().map(|r| r.max_relative_drift).fold(0.0, f64::max)
    }
}

/// Energy drift of the centered difference and of every solver's stencil,
/// for each configured radius, at the base time step and at twice it.
pub fn run_energy(cfg: &ExperimentConfig) -> Result<EnergyReport> {
    cfg.validate()?;
    let out = Output::new(cfg)?;
    let grid = cfg.grid();
    let ts = generate_training_set(&cfg.training)?;
    let init = single_mode_initial(&grid);
    const DT_FACTORS: [f64; 2] = [1.0, 2.0];

    let per_radius = par::map_slice(&cfg.radii, |&radius| -> Result<Vec<(EnergyRow, SimResult)>> {
        let sys = system_for(cfg, &ts, radius)?;
        let mut stencils = vec![(FD_LABEL.to_string(), centered_difference_of_radius(&grid, radius)?)];
        for method in Method::ALL {
            stencils.push((method.label().to_string(), learn(cfg, &sys, method)?.stencil()?));
        }
        let mut rows = Vec::new();
        for (label, w) in &stencils {
            for factor in DT_FACTORS {
                let run = run_sim(cfg, grid, w, &init, factor * cfg.dt(), false)?;
                rows.push((
                    EnergyRow {
                        radius,
                        label: label.clone(),
                        dt_factor: factor,
                        skew_residual: w.skew_residual(),
                        max_relative_drift: run.max_relative_energy_drift(),
                        energy_ratio: run.energy_ratio(),
                    },
                    run,
                ));
            }
        }
        Ok(rows)
    });

    let mut rows = Vec::new();
    let mut series = Vec::new();
    for block in per_radius {
        for (row, run) in block? {
            let e0 = run.energy_series[0].value();
            for (step, e) in run.energy_series.iter().enumerate() {
                series.push(vec![
                    row.radius.to_string(),
                    row.label.clone(),
                    row.dt_factor.to_string(),
                    step.to_string(),
                    fmt(e.value()),
                    fmt(e.value() - e0),
                ]);
            }
            rows.push(row);
        }
    }
    let report = EnergyReport { rows };
    let summary: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.radius.to_string(),
                r.label.clone(),
                r.dt_factor.to_string(),
                fmt(r.skew_residual),
                fmt(r.max_relative_drift),
            ]
        })
        .collect();
    out.csv(
        "energy_summary.csv",
        &["radius", "stencil", "dt_factor", "skew_residual", "max_relative_drift"],
        &summary,
    )?;
    out.csv(
        "energy_series.csv",
        &["radius", "stencil", "dt_factor", "step", "energy", "energy_minus_initial"],
        &series,
    )?;
    out.manifest(cfg, ExperimentName::Energy, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionEntry {
    pub radius: usize,
    pub label: String,
    pub coefficients: Vec<f64>,
    /// `max_theta | |mu_CN(theta)| - 1 |`.
    pub max_amplification_deviation: f64,
    #[serde(skip)]
    pub curves: DispersionCurves,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionReport {
    pub dt: f64,
    pub entries: Vec<DispersionEntry>,
}

/// CN amplification and phase of ADMM-learned stencils next to the centered
/// difference of the same radius.
pub fn run_dispersion(cfg: &ExperimentConfig) -> Result<DispersionReport> {
    cfg.validate()?;
    let out = Output::new(cfg)?;
    let grid = cfg.grid();
    let ts = generate_training_set(&cfg.training)?;
    let thetas = half_circle_thetas(cfg.dispersion_samples);
    let dt = cfg.dt();

    let per_radius = par::map_slice(&cfg.radii, |&radius| -> Result<Vec<DispersionEntry>> {
        let sys = system_for(cfg, &ts, radius)?;
        let learned = learn(cfg, &sys, Method::Admm)?.stencil()?;
        let cd = centered_difference_of_radius(&grid, radius)?;
        [("learned", learned), ("centered", cd)]
            .into_iter()
            .map(|(label, w)| {
                let curves = cn_dispersion(&w, dt, &thetas, Some(grid.dx()))?;
                Ok(DispersionEntry {
                    radius,
                    label: label.into(),
                    coefficients: w.coeffs().to_vec(),
                    max_amplification_deviation: curves
                        .amplification
                        .iter()
                        .map(|a| (a - 1.0).abs())
                        .fold(0.0, f64::max),
                    curves,
                })
            })
            .collect()
    });
    let mut entries = Vec::new();
    for block in per_radius {
        entries.extend(block?);
    }

    let mut disp_rows = Vec::new();
    let mut symbol_rows = Vec::new();
    for e in &entries {
        let w = Stencil::new(e.coefficients.clone())?;
        let sym = symbol(&w, &thetas);
        for i in 0..thetas.len() {
            disp_rows.push(vec![
                e.radius.to_string(),
                e.label.clone(),
                fmt(thetas[i]),
                fmt(e.curves.amplification[i]),
                fmt(e.curves.phase_ratio[i]),
                fmt(e.curves.reference_phase_ratio[i]),
            ]);
            symbol_rows.push(vec![
                e.radius.to_string(),
                e.label.clone(),
                fmt(thetas[i]),
                fmt(sym.values[i].re),
                fmt(sym.values[i].im),
            ]);
        }
    }
    out.csv(
        "dispersion.csv",
        &["radius", "stencil", "theta", "amplification", "phase_ratio", "reference_phase_ratio"],
        &disp_rows,
    )?;
    out.csv("symbol.csv", &["radius", "stencil", "theta", "re_mu", "im_mu"], &symbol_rows)?;
    let report = DispersionReport { dt, entries };
    out.manifest(cfg, ExperimentName::Dispersion, &report)?;
    Ok(report)
}
