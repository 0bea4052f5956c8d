use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use stencil_lab::analysis::{cfl_bound, cn_dispersion, half_circle_thetas, max_wave_speed, symbol};
use stencil_lab::experiments::{run_named, run_solver_bench, ExperimentConfig, ExperimentName};
use stencil_lab::regression::{assemble_regression, build_skew_constraints};
use stencil_lab::simulate::{simulate, single_mode_initial, traveling_wave_exact, CnBackend, SimConfig};
use stencil_lab::solvers::{solve, Method};
use stencil_lab::training::{generate_training_set, TrainingSet};
use stencil_lab::{centered_difference_of_radius, Error, Stencil};

#[derive(Parser)]
#[command(name = "stencil-lab", version, about = "Learn and validate energy-conserving stencils for 1D Maxwell")]
struct Cli {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a spectral training set and write it as JSON.
    GenData {
        #[arg(long)]
        n_sims: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Fit a skew stencil with one solver.
    Learn {
        #[arg(long, value_enum, default_value_t = MethodArg::Admm)]
        method: MethodArg,
        #[arg(long)]
        radius: Option<usize>,
        /// Training set written by `gen-data`; generated from the config otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run Crank-Nicolson with a stencil and write energy and field CSVs.
    Simulate {
        /// Stencil JSON (as written by `learn`); defaults to the centered difference.
        #[arg(long)]
        stencil: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        dt_ratio: Option<f64>,
        #[arg(long, value_enum, default_value_t = BackendArg::Dense)]
        backend: BackendArg,
        #[arg(long, value_enum, default_value_t = InitialArg::SingleMode)]
        initial: InitialArg,
    },
    /// Fourier symbol, wave speed, CFL bound and CN dispersion of a stencil.
    Dispersion {
        #[arg(long)]
        stencil: Option<PathBuf>,
        #[arg(long)]
        dt_ratio: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Grid-convergence study of ADMM-learned stencils.
    Converge,
    /// Run a named experiment.
    Experiment {
        #[arg(value_parser = parse_experiment)]
        name: ExperimentName,
        /// Extra noise levels for the noisy experiment's sweep (comma separated).
        #[arg(long, value_delimiter = ',')]
        sigma_sweep: Vec<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Pg,
    Nag,
    Admm,
    Ref,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Pg => Method::Pg,
            MethodArg::Nag => Method::Nag,
            MethodArg::Admm => Method::Admm,
            MethodArg::Ref => Method::Reference,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Dense,
    Spectral,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitialArg {
    SingleMode,
    TravelingWave,
}

fn parse_experiment(s: &str) -> std::result::Result<ExperimentName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidConfig(msg.into()).into()
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load_json(path).map_err(|e| match e {
            Error::Io(io) => config_error(format!("cannot read {}: {io}", path.display())),
            other => other.into(),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.training.seed = seed;
    }
    cfg.output_dir = Some(cli.out.clone());
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

fn read_stencil(path: Option<&Path>, cfg: &ExperimentConfig) -> Result<Stencil> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| config_error(format!("cannot read {}: {e}", p.display())))?;
            Ok(serde_json::from_str(&text).map_err(Error::from)?)
        }
        None => Ok(centered_difference_of_radius(&cfg.grid(), cfg.radius)?),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    match cli.command {
        Command::GenData { n_sims, noise } => {
            if let Some(n) = n_sims {
                cfg.training.n_sims = n;
            }
            if let Some(s) = noise {
                cfg.training.noise_std = s;
            }
            let ts = generate_training_set(&cfg.training)?;
            ts.save_json(&out.join("training.json"))?;
            println!("wrote {} samples to {}", ts.n_sims(), out.join("training.json").display());
        }
        Command::Learn { method, radius, data } => {
            let method = Method::from(method);
            let radius = radius.unwrap_or(cfg.radius);
            let ts = match data {
                Some(p) => TrainingSet::load_json(&p)?,
                None => generate_training_set(&cfg.training)?,
            };
            let sys = assemble_regression(&ts, radius, cfg.lambda, cfg.box_bound)?;
            let cs = build_skew_constraints(radius)?;
            let report = solve(method, &sys, &cs, &cfg.solver.options(method))?;
            let grid = ts.grid()?;
            let stencil = report.stencil()?.with_dx(grid.dx());
            write_json(&out.join("stencil.json"), &stencil)?;
            report.save_csv(&out.join("trace.csv"))?;
            report.save_json(&out.join("report.json"))?;
            println!(
                "{method}: w = {:?}, objective = {:.12e}, ||Cw-d|| = {:.2e}, iterations = {}",
                stencil.coeffs(),
                report.final_objective(),
                report.final_eq_residual(),
                report.iterations
            );
        }
        Command::Simulate { stencil, steps, dt_ratio, backend, initial } => {
            let grid = cfg.grid();
            let w = read_stencil(stencil.as_deref(), &cfg)?;
            let dt = dt_ratio.unwrap_or(cfg.sim.dt_ratio) * grid.dx();
            let backend = match backend {
                BackendArg::Dense => CnBackend::Dense,
                BackendArg::Spectral => CnBackend::Spectral,
            };
            let sim = SimConfig::new(grid, w, dt, steps.unwrap_or(cfg.sim.n_steps)).with_backend(backend);
            let init = match initial {
                InitialArg::SingleMode => single_mode_initial(&grid),
                InitialArg::TravelingWave => traveling_wave_exact(&grid, 0.0),
            };
            let res = simulate(&init, &sim, Some(cfg.sim.snapshot_every))?;
            res.save_csvs(out)?;
            #[derive(Serialize)]
            struct Summary {
                dt: f64,
                n_steps: usize,
                final_time: f64,
                max_relative_energy_drift: f64,
                energy_ratio: f64,
            }
            let summary = Summary {
                dt,
                n_steps: sim.n_steps,
                final_time: sim.final_time(),
                max_relative_energy_drift: res.max_relative_energy_drift(),
                energy_ratio: res.energy_ratio(),
            };
            write_json(&out.join("summary.json"), &summary)?;
            println!("max relative energy drift {:.3e}", summary.max_relative_energy_drift);
        }
        Command::Dispersion { stencil, dt_ratio, samples } => {
            let grid = cfg.grid();
            let w = read_stencil(stencil.as_deref(), &cfg)?;
            let dt = dt_ratio.unwrap_or(cfg.sim.dt_ratio) * grid.dx();
            let thetas = half_circle_thetas(samples.unwrap_or(cfg.dispersion_samples));
            symbol(&w, &thetas).write_csv(File::create(out.join("symbol.csv"))?)?;
            cn_dispersion(&w, dt, &thetas, Some(grid.dx()))?.write_csv(File::create(out.join("dispersion.csv"))?)?;
            let c_max = max_wave_speed(&w);
            let cfl = cfl_bound(&w).ok();
            write_json(
                &out.join("wave_speed.json"),
                &serde_json::json!({ "c_max": c_max, "cfl_bound": cfl, "dt": dt }),
            )?;
            println!("c_max = {c_max:.10}, CFL bound = {cfl:?}");
        }
        Command::Converge => {
            cfg.name = ExperimentName::Convergence;
            let report = run_named(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report["rows"])?);
            if let Some(f) = report.get("failure").filter(|f| !f.is_null()) {
                anyhow::bail!("convergence study stopped early: {f}");
            }
        }
        Command::Experiment { name, sigma_sweep } => {
            cfg.name = name;
            if cfg.name == ExperimentName::Nonstandard && cli.config.is_none() {
                cfg.radius = 2;
            }
            if !sigma_sweep.is_empty() {
                cfg.noisy.sigma_sweep = sigma_sweep;
            }
            if name == ExperimentName::SolverBench {
                let failed = run_solver_bench(&cfg)?.checks.failures();
                if !failed.is_empty() {
                    anyhow::bail!("solver benchmark checks failed: {}", failed.join("; "));
                }
            } else {
                run_named(&cfg)?;
            }
            println!("wrote {} outputs to {}", name.label(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<Error>().is_some_and(Error::is_config_error);
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
