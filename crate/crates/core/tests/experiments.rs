use std::collections::BTreeMap;
use std::path::Path;

use stencil_lab::analysis::ConvergenceSetup;
use stencil_lab::experiments::*;
use stencil_lab::regression::build_skew_constraints;
use stencil_lab::{centered_difference_of_radius, Grid1D};

fn small(name: ExperimentName) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_experiment(name);
    cfg.training.n_sims = 20;
    cfg.sim.n_steps = 40;
    cfg.radii = vec![1, 2];
    cfg.dispersion_samples = 64;
    cfg.convergence.setup = ConvergenceSetup {
        resolutions: vec![32, 64],
        final_time: 1.0,
        ..ConvergenceSetup::default()
    };
    cfg
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && !p.ends_with("timing.csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn every_experiment_is_byte_reproducible() {
    for name in ExperimentName::ALL {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = small(name);
        if name == ExperimentName::Noisy {
            cfg.noisy.sigma_sweep = vec![0.25];
        }
        run_named(&cfg.clone().with_output_dir(a.path())).unwrap();
        run_named(&cfg.with_output_dir(b.path())).unwrap();
        let fa = csv_files(a.path());
        assert!(!fa.is_empty(), "{name:?} wrote no CSV");
        assert_eq!(fa, csv_files(b.path()), "{name:?} differs between runs");

        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["experiment"], name.label());
        assert_eq!(manifest["seed"], 20_240_601);
        assert!(manifest["version"].is_string());
        assert!(manifest["config"]["training"]["n_sims"] == 20);
    }
}

#[test]
fn table1_layout() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_table1(&small(ExperimentName::Table1).with_output_dir(dir.path())).unwrap();
    let labels: Vec<&str> = report.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["FD", "PG", "NAG", "ADMM", "REFERENCE"]);
    let fd = report.row("FD").unwrap();
    assert_eq!(fd.err, Some(0.0));
    assert_eq!(fd.r_eq, Some(0.0));
    for r in &report.rows[1..] {
        assert!(r.failure.is_none());
        assert!(r.r_eq.unwrap() <= 1e-8);
    }
    let text = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert!(text.starts_with("method,w_-1,w_0,w_1,err,r_eq,objective,iterations,failure\n"));
    assert_eq!(text.lines().count(), 6);
    let fields = std::fs::read_to_string(dir.path().join("fields.csv")).unwrap();
    assert!(fields.starts_with("x,E_FD,E_PG,E_NAG,E_ADMM,E_REFERENCE\n"));
    assert_eq!(fields.lines().count(), 65);
}

#[test]
fn table1_flags_failed_solver_and_continues() {
    let mut cfg = small(ExperimentName::Table1);
    // a huge fixed step makes PG and NAG diverge
    cfg.solver.step = Some(1e6);
    let report = run_table1(&cfg).unwrap();
    for label in ["PG", "NAG"] {
        let row = report.row(label).unwrap();
        assert!(row.failure.as_deref().unwrap().contains("solver"), "{row:?}");
        assert!(row.err.is_none());
    }
    for label in ["ADMM", "REFERENCE"] {
        assert!(report.row(label).unwrap().failure.is_none());
    }
}

#[test]
fn convergence_small_run() {
    let study = run_convergence(&small(ExperimentName::Convergence)).unwrap();
    assert!(study.is_complete());
    assert_eq!(study.rows.len(), 2);
    assert!(study.rows[1].error < study.rows[0].error);
    assert!(study.rows[0].order.is_none() && study.rows[1].order.is_some());
}

#[test]
fn energy_and_dispersion_cover_all_radii() {
    let energy = run_energy(&small(ExperimentName::Energy)).unwrap();
    // 2 radii x (FD + 4 solvers) x 2 time steps
    assert_eq!(energy.rows.len(), 20);
    assert!(energy.worst_drift() <= 1e-10);
    let disp = run_dispersion(&small(ExperimentName::Dispersion)).unwrap();
    assert_eq!(disp.entries.len(), 4);
    assert!(disp.entries.iter().all(|e| e.max_amplification_deviation <= 1e-13));
}

#[test]
fn nonstandard_target_properties() {
    let grid = Grid1D::new(64, 1.0).unwrap();
    let w = NonstandardTarget::default().stencil(&grid).unwrap();
    let cs = build_skew_constraints(2).unwrap();
    assert_eq!(cs.residual(&nalgebra::DVector::from_column_slice(w.coeffs())), 0.0);
    let cd = centered_difference_of_radius(&grid, 2).unwrap();
    assert!(w.distance(&cd).unwrap() > 1.0);
    // consistent first derivative: sum_l l w_l = 1
    let moment: f64 = (-2..=2).map(|l| l as f64 * w.at(l) * grid.dx()).sum();
    assert!((moment - 1.0).abs() < 1e-14);

    let skewless = NonstandardTarget {
        scaled_coefficients: vec![1.0, 0.0, 1.0],
    };
    assert!(skewless.stencil(&grid).is_err());
}

#[test]
fn noisy_writes_sweep_and_spacetime() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ExperimentName::Noisy);
    cfg.noisy.sigma_sweep = vec![0.1, 1.0];
    let report = run_noisy(&cfg.with_output_dir(dir.path())).unwrap();
    assert_eq!(report.sweep.len(), 2);
    assert!(report.headline.ls_constraint_residual > 0.0);
    assert!(report.headline.qp_constraint_residual <= 1e-10);
    for f in ["sweep.csv", "spacetime_cd.csv", "spacetime_qp.csv", "fields.csv", "energy.csv", "stencils.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn solver_bench_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_solver_bench(&small(ExperimentName::SolverBench).with_output_dir(dir.path())).unwrap();
    assert_eq!(report.reports.len(), 4);
    for f in ["trace_pg.csv", "trace_nag.csv", "trace_admm.csv", "trace_reference.csv", "timing.csv", "summary.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let trace = std::fs::read_to_string(dir.path().join("trace_pg.csv")).unwrap();
    assert!(trace.starts_with("iter,objective,eq_residual,step_diff\n"));
}

#[test]
fn config_json_partial_and_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"name": "noisy", "noisy": {"sigma": 0.25}, "training": {"n_sims": 7}}"#).unwrap();
    let cfg = ExperimentConfig::load_json(&path).unwrap();
    assert_eq!(cfg.name, ExperimentName::Noisy);
    assert_eq!(cfg.noisy.sigma, 0.25);
    assert_eq!(cfg.noisy.radius, 4);
    assert_eq!(cfg.training.n_sims, 7);
    assert_eq!(cfg.training.m_max, 5);
    assert_eq!(cfg.training.grid.n(), 64);

    std::fs::write(&path, r#"{"radius": 40}"#).unwrap();
    assert!(ExperimentConfig::load_json(&path).unwrap_err().is_config_error());
    std::fs::write(&path, r#"{"training": {"grid": {"n": 2, "length": 1.0}}}"#).unwrap();
    assert!(ExperimentConfig::load_json(&path).is_err());
}

#[test]
fn defaults_match_the_reference_setup() {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.grid().n(), 64);
    assert_eq!(cfg.grid().length(), 1.0);
    assert_eq!(cfg.training.n_sims, 200);
    assert_eq!(cfg.training.m_max, 5);
    assert_eq!(cfg.lambda, 1e-6);
    assert_eq!(cfg.box_bound, 100.0);
    assert_eq!(cfg.dt(), 0.5 / 64.0);
    assert_eq!(cfg.sim.n_steps, 300);
    assert_eq!("solver-bench".parse::<ExperimentName>().unwrap(), ExperimentName::SolverBench);
}
