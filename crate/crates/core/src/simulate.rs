//! Crank–Nicolson integration of `dE/dt = D H`, `dH/dt = D E`.
//!
//! With `U = [E; H]` the system is `dU/dt = A U`, `A = [[0, D], [D, 0]]`.
//! `A` is skew whenever the stencil is, and then every CN step preserves
//! `||U||` exactly for any time step.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discrete::{convolve, discrete_energy, weighted_norm, Energy, FieldPair, Grid1D, Stencil};
use crate::error::{check_len, Error, Result};
use crate::spectral::FftPair;

/// Linear solver behind each CN step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CnBackend {
    /// Dense LU of the 2N x 2N matrix `I - (dt/2) A`, factored once.
    #[default]
    Dense,
    /// Per-mode 2x2 solves in the discrete Fourier basis.
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub grid: Grid1D,
    pub stencil: Stencil,
    #[serde(default)]
    pub backend: CnBackend,
}

impl SimConfig {
    pub fn new(grid: Grid1D, stencil: Stencil, dt: f64, n_steps: usize) -> Self {
        Self {
            dt,
            n_steps,
            grid,
            stencil,
            backend: CnBackend::Dense,
        }
    }

    pub fn with_backend(mut self, backend: CnBackend) -> Self {
        self.backend = backend;
        self
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.stencil.len() > self.grid.n() {
            return Err(Error::StencilTooWide {
                radius: self.stencil.radius(),
                n: self.grid.n(),
            });
        }
        Ok(())
    }
}

enum Kernel {
    Dense {
        lu: LU<f64, Dyn, Dyn>,
    },
    Spectral {
        fft: FftPair,
        /// Per mode `(diag, off)` of the CN propagator
        /// `[[diag, off], [off, diag]]`.
        propagator: Vec<(Complex64, Complex64)>,
    },
}

/// Prepared CN propagator for one `(stencil, dt, N)`.
pub struct CnStepper {
    n: usize,
    dt: f64,
    stencil: Stencil,
    kernel: Kernel,
}

impl std::fmt::Debug for CnStepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CnStepper")
            .field("n", &self.n)
            .field("dt", &self.dt)
            .field("stencil", &self.stencil)
            .finish()
    }
}

impl CnStepper {
    /// `dt` may be negative (backward stepping); it must be finite and nonzero.
    pub fn new(grid: &Grid1D, stencil: &Stencil, dt: f64, backend: CnBackend) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be finite and nonzero, got {dt}")));
        }
        let n = grid.n();
        if stencil.len() > n {
            return Err(Error::StencilTooWide {
                radius: stencil.radius(),
                n,
            });
        }
        let kernel = match backend {
            CnBackend::Dense => {
                let d = crate::discrete::operator_matrix(stencil, n)?;
                let mut m = DMatrix::identity(2 * n, 2 * n);
                let half = -0.5 * dt;
                m.view_mut((0, n), (n, n)).copy_from(&(&d * half));
                m.view_mut((n, 0), (n, n)).copy_from(&(&d * half));
                let lu = m.lu();
                if !lu.is_invertible() {
                    return Err(Error::Singular("Crank–Nicolson matrix I - (dt/2) A"));
                }
                Kernel::Dense { lu }
            }
            CnBackend::Spectral => {
                let mut propagator = Vec::with_capacity(n);
                for m in 0..n {
                    let theta = 2.0 * PI * m as f64 / n as f64;
                    let a = symbol_at(stencil, theta) * (0.5 * dt);
                    let denom = Complex64::new(1.0, 0.0) - a * a;
                    if denom.norm() < 1e-14 {
                        return Err(Error::Singular("Crank–Nicolson modal block"));
                    }
                    propagator.push(((Complex64::new(1.0, 0.0) + a * a) / denom, a * 2.0 / denom));
                }
                Kernel::Spectral {
                    fft: FftPair::new(n),
                    propagator,
                }
            }
        };
        Ok(Self {
            n,
            dt,
            stencil: stencil.clone(),
            kernel,
        })
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(&cfg.grid, &cfg.stencil, cfg.dt, cfg.backend)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Solves `(I - dt/2 A) U^{n+1} = (I + dt/2 A) U^n`.
    pub fn step(&self, f: &FieldPair) -> Result<FieldPair> {
        check_len("E field", self.n, f.e.len())?;
        check_len("H field", self.n, f.h.len())?;
        let n = self.n;
        let next = match &self.kernel {
            Kernel::Dense { lu } => {
                let half = 0.5 * self.dt;
                let de = convolve(&self.stencil, &f.e);
                let dh = convolve(&self.stencil, &f.h);
                let mut rhs = DVector::zeros(2 * n);
                for i in 0..n {
                    rhs[i] = f.e[i] + half * dh[i];
                    rhs[n + i] = f.h[i] + half * de[i];
                }
                let sol = lu
                    .solve(&rhs)
                    .ok_or(Error::Singular("Crank–Nicolson matrix I - (dt/2) A"))?;
                FieldPair {
                    e: sol.rows(0, n).iter().copied().collect(),
                    h: sol.rows(n, n).iter().copied().collect(),
                }
            }
            Kernel::Spectral { fft, propagator } => {
                let mut e = fft.forward_real(&f.e);
                let mut h = fft.forward_real(&f.h);
                for ((ek, hk), (diag, off)) in e.iter_mut().zip(h.iter_mut()).zip(propagator) {
                    let (e0, h0) = (*ek, *hk);
                    *ek = diag * e0 + off * h0;
                    *hk = off * e0 + diag * h0;
                }
                fft.inverse(&mut e);
                fft.inverse(&mut h);
                FieldPair {
                    e: e.into_iter().map(|c| c.re).collect(),
                    h: h.into_iter().map(|c| c.re).collect(),
                }
            }
        };
        if next.e.iter().chain(&next.h).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "Crank–Nicolson step",
                iteration: 0,
            });
        }
        Ok(next)
    }
}

/// `mu(theta) = sum_l w_l exp(i l theta)`.
pub(crate) fn symbol_at(w: &Stencil, theta: f64) -> Complex64 {
    let r = w.radius() as isize;
    (-r..=r)
        .map(|l| Complex64::from_polar(w.at(l), l as f64 * theta))
        .sum()
}

/// One CN step with a prepared stepper.
pub fn cn_step(f: &FieldPair, stepper: &CnStepper) -> Result<FieldPair> {
    stepper.step(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub fields: FieldPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub grid: Grid1D,
    pub dt: f64,
    pub final_state: FieldPair,
    /// Energy after each step, starting with the initial condition.
    pub energy_series: Vec<Energy>,
    pub snapshots: Vec<Snapshot>,
}

impl SimResult {
    pub fn energies(&self) -> Vec<f64> {
        self.energy_series.iter().map(|e| e.value()).collect()
    }

    /// `max_n |E^n - E^0| / E^0`.
    pub fn max_relative_energy_drift(&self) -> f64 {
        let e0 = self.energy_series[0].value();
        self.energy_series
            .iter()
            .map(|e| (e.value() - e0).abs())
            .fold(0.0, f64::max)
            / e0
    }

    /// `E^{N_t} / E^0`.
    pub fn energy_ratio(&self) -> f64 {
        self.energy_series.last().expect("nonempty").value() / self.energy_series[0].value()
    }

    pub fn write_energy_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["step", "t", "energy", "energy_minus_initial"])?;
        let e0 = self.energy_series[0].value();
        for (step, e) in self.energy_series.iter().enumerate() {
            wtr.write_record(&[
                step.to_string(),
                format!("{:e}", step as f64 * self.dt),
                format!("{:e}", e.value()),
                format!("{:e}", e.value() - e0),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_final_field_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["x", "E", "H"])?;
        for i in 0..self.grid.n() {
            wtr.write_record(&[
                format!("{:e}", self.grid.x(i)),
                format!("{:e}", self.final_state.e[i]),
                format!("{:e}", self.final_state.h[i]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_spacetime_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "x", "E"])?;
        for snap in &self.snapshots {
            for i in 0..self.grid.n() {
                wtr.write_record(&[
                    format!("{:e}", snap.t),
                    format!("{:e}", self.grid.x(i)),
                    format!("{:e}", snap.fields.e[i]),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Writes `energy.csv`, `final_field.csv` and, when snapshots exist,
    /// `spacetime.csv` into `dir`.
    pub fn save_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_energy_csv(std::fs::File::create(dir.join("energy.csv"))?)?;
        self.write_final_field_csv(std::fs::File::create(dir.join("final_field.csv"))?)?;
        if !self.snapshots.is_empty() {
            self.write_spacetime_csv(std::fs::File::create(dir.join("spacetime.csv"))?)?;
        }
        Ok(())
    }
}

/// Default spacing of stored snapshots.
pub const DEFAULT_SNAPSHOT_EVERY: usize = 5;

/// Runs `cfg.n_steps` CN steps from `init`, recording the energy after every
/// step and the fields every `snapshot_every` steps (plus the initial state).
pub fn simulate(init: &FieldPair, cfg: &SimConfig, snapshot_every: Option<usize>) -> Result<SimResult> {
    let stepper = CnStepper::from_config(cfg)?;
    simulate_with(init, cfg, &stepper, snapshot_every)
}

pub fn simulate_with(
    init: &FieldPair,
    cfg: &SimConfig,
    stepper: &CnStepper,
    snapshot_every: Option<usize>,
) -> Result<SimResult> {
    init.check_grid(&cfg.grid)?;
    let every = snapshot_every.filter(|k| *k > 0);
    let mut state = init.clone();
    let mut energy_series = Vec::with_capacity(cfg.n_steps + 1);
    energy_series.push(discrete_energy(&state, &cfg.grid)?);
    let mut snapshots = Vec::new();
    if every.is_some() {
        snapshots.push(Snapshot {
            step: 0,
            t: 0.0,
            fields: state.clone(),
        });
    }
    for step in 1..=cfg.n_steps {
        state = stepper.step(&state).map_err(|e| match e {
            Error::NonFinite { context, .. } => Error::NonFinite {
                context,
                iteration: step,
            },
            other => other,
        })?;
        energy_series.push(discrete_energy(&state, &cfg.grid)?);
        if let Some(k) = every {
            if step % k == 0 {
                snapshots.push(Snapshot {
                    step,
                    t: step as f64 * cfg.dt,
                    fields: state.clone(),
                });
            }
        }
    }
    Ok(SimResult {
        grid: cfg.grid,
        dt: cfg.dt,
        final_state: state,
        energy_series,
        snapshots,
    })
}

/// Default initial condition `E = sin(2 pi x / L)`, `H = cos(2 pi x / L)`.
pub fn single_mode_initial(grid: &Grid1D) -> FieldPair {
    let k = 2.0 * PI / grid.length();
    FieldPair {
        e: grid.sample(|x| (k * x).sin()),
        h: grid.sample(|x| (k * x).cos()),
    }
}

/// Right-moving exact solution `E = sin(2 pi (x - t) / L)`, `H = -E`.
pub fn traveling_wave_exact(grid: &Grid1D, t: f64) -> FieldPair {
    let k = 2.0 * PI / grid.length();
    let e = grid.sample(|x| (k * (x - t)).sin());
    let h = e.iter().map(|v| -v).collect();
    FieldPair { e, h }
}

/// `||num - ref|| / ||ref||` in the dx-weighted norm.
pub fn relative_l2_error(num: &[f64], reference: &[f64], grid: &Grid1D) -> Result<f64> {
    check_len("numerical field", grid.n(), num.len())?;
    check_len("reference field", grid.n(), reference.len())?;
    let denom = weighted_norm(reference, grid)?;
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    let diff: Vec<f64> = num.iter().zip(reference).map(|(a, b)| a - b).collect();
    Ok(weighted_norm(&diff, grid)? / denom)
}
