//! Fourier symbol, wave speed and CFL bound, CN dispersion, modal energies
//! and grid-convergence studies.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discrete::{operator_matrix, FieldPair, Grid1D, Stencil};
use crate::error::{Error, Result};
use crate::par;
use crate::simulate::{relative_l2_error, simulate, symbol_at, traveling_wave_exact, CnBackend, SimConfig};
use crate::spectral::FftPair;

/// Samples of `mu(theta) = sum_k w_k exp(i k theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolCurve {
    pub thetas: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl SymbolCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["theta", "re_mu", "im_mu"])?;
        for (t, v) in self.thetas.iter().zip(&self.values) {
            wtr.write_record(&[format!("{t:e}"), format!("{:e}", v.re), format!("{:e}", v.im)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn symbol(w: &Stencil, thetas: &[f64]) -> SymbolCurve {
    SymbolCurve {
        thetas: thetas.to_vec(),
        values: thetas.iter().map(|&t| symbol_at(w, t)).collect(),
    }
}

/// `n` uniform samples of `(0, pi]`.
pub fn half_circle_thetas(n: usize) -> Vec<f64> {
    (1..=n).map(|j| PI * j as f64 / n as f64).collect()
}

/// `n` uniform samples of `[-pi, pi]`.
pub fn full_circle_thetas(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| -PI + 2.0 * PI * j as f64 / (n - 1) as f64)
        .collect()
}

const WAVE_SPEED_SAMPLES: usize = 4096;

/// `c_max = max_theta |mu(theta)|`: dense scan, then golden-section
/// refinement around the best sample.
pub fn max_wave_speed(w: &Stencil) -> f64 {
    let speed = |t: f64| symbol_at(w, t).norm();
    let h = 2.0 * PI / WAVE_SPEED_SAMPLES as f64;
    let (mut best_t, mut best) = (0.0, speed(0.0));
    for j in 0..WAVE_SPEED_SAMPLES {
        let t = -PI + j as f64 * h;
        let s = speed(t);
        if s > best {
            best = s;
            best_t = t;
        }
    }
    // golden-section on the bracketing cells
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best_t - h, best_t + h);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (speed(c), speed(d));
    while (b - a).abs() > 1e-10 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = speed(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = speed(d);
        }
    }
    best.max(fc).max(fd)
}

/// Explicit-scheme time-step bound `2 / c_max`.
pub fn cfl_bound(w: &Stencil) -> Result<f64> {
    let c = max_wave_speed(w);
    if c == 0.0 {
        return Err(Error::DegenerateOperator);
    }
    Ok(2.0 / c)
}

/// Per-mode CN amplification `|mu_CN|` and normalized phase `arg(mu_CN)/theta`
/// with `mu_CN = (1 + dt/2 lambda) / (1 - dt/2 lambda)`, `lambda` the stencil
/// symbol. `reference_phase_ratio` uses the exact symbol `i theta / dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionCurves {
    pub thetas: Vec<f64>,
    pub amplification: Vec<f64>,
    pub phase_ratio: Vec<f64>,
    pub reference_phase_ratio: Vec<f64>,
}

impl DispersionCurves {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["theta", "amplification", "phase_ratio", "reference_phase_ratio"])?;
        for i in 0..self.thetas.len() {
            wtr.write_record(&[
                format!("{:e}", self.thetas[i]),
                format!("{:e}", self.amplification[i]),
                format!("{:e}", self.phase_ratio[i]),
                format!("{:e}", self.reference_phase_ratio[i]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// CN one-step eigenvalue for a mode with semi-discrete eigenvalue `lambda`.
pub fn cn_amplification_factor(lambda: Complex64, dt: f64) -> Complex64 {
    let half = lambda * (0.5 * dt);
    (Complex64::new(1.0, 0.0) + half) / (Complex64::new(1.0, 0.0) - half)
}

/// `dx` is taken from the stencil when recorded, otherwise from `grid_dx`.
pub fn cn_dispersion(w: &Stencil, dt: f64, thetas: &[f64], grid_dx: Option<f64>) -> Result<DispersionCurves> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt}")));
    }
    let dx = w.dx().or(grid_dx);
    let mut out = DispersionCurves {
        thetas: thetas.to_vec(),
        amplification: Vec::with_capacity(thetas.len()),
        phase_ratio: Vec::with_capacity(thetas.len()),
        reference_phase_ratio: Vec::with_capacity(thetas.len()),
    };
    for &t in thetas {
        let mu = cn_amplification_factor(symbol_at(w, t), dt);
        out.amplification.push(mu.norm());
        out.phase_ratio.push(mu.arg() / t);
        let reference = match dx {
            Some(dx) => cn_amplification_factor(Complex64::new(0.0, t / dx), dt).arg() / t,
            None => f64::NAN,
        };
        out.reference_phase_ratio.push(reference);
    }
    Ok(out)
}

/// `(dx/2) (|E_m|^2 + |H_m|^2)` per discrete mode, unitary DFT; sums to the
/// discrete energy.
pub fn modal_energies(f: &FieldPair, grid: &Grid1D) -> Result<Vec<f64>> {
    f.check_grid(grid)?;
    let fft = FftPair::new(grid.n());
    let e = fft.forward_real(&f.e);
    let h = fft.forward_real(&f.h);
    let scale = 0.5 * grid.dx() / grid.n() as f64;
    Ok(e
        .iter()
        .zip(&h)
        .map(|(a, b)| scale * (a.norm_sqr() + b.norm_sqr()))
        .collect())
}

/// The 2N x 2N generator `[[0, D], [D, 0]]` acting on `[E; H]`.
pub fn maxwell_block_matrix(w: &Stencil, n: usize) -> Result<DMatrix<f64>> {
    let d = operator_matrix(w, n)?;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).copy_from(&d);
    a.view_mut((n, 0), (n, n)).copy_from(&d);
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N_x")]
    pub n_x: usize,
    pub dx: f64,
    pub error: f64,
    /// `log2(err_prev / err)`; absent on the first row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Resolution and reason of the first failure; rows stop before it.
    pub failure: Option<(usize, String)>,
}

impl ConvergenceStudy {
    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn into_result(self) -> Result<Vec<ConvergenceRow>> {
        match self.failure {
            None => Ok(self.rows),
            Some((n, reason)) => Err(Error::ConvergenceStudy { n, reason }),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["N_x", "dx", "error", "order"])?;
        for r in &self.rows {
            wtr.write_record(&[
                r.n_x.to_string(),
                format!("{:e}", r.dx),
                format!("{:e}", r.error),
                r.order.map(|o| format!("{o:.6}")).unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Parameters of a traveling-wave convergence run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceSetup {
    pub resolutions: Vec<usize>,
    pub length: f64,
    pub final_time: f64,
    /// `dt = dt_ratio * dx`, rounded so that a whole number of steps hits `final_time`.
    pub dt_ratio: f64,
}

impl Default for ConvergenceSetup {
    fn default() -> Self {
        Self {
            resolutions: vec![64, 128, 256, 512],
            length: 1.0,
            final_time: 10.0,
            dt_ratio: 0.2,
        }
    }
}

/// For each resolution: obtain a stencil from `provider`, run CN on the
/// traveling wave to `final_time`, and measure the relative L2 error in E.
pub fn convergence_study<P>(provider: P, setup: &ConvergenceSetup) -> Result<ConvergenceStudy>
where
    P: Fn(&Grid1D) -> Result<Stencil> + Sync + Send,
{
    if setup.resolutions.is_empty() || setup.resolutions.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidConfig("resolutions must be nonempty and strictly ascending".into()));
    }
    if !(setup.final_time > 0.0 && setup.dt_ratio > 0.0) {
        return Err(Error::InvalidConfig("final time and dt ratio must be > 0".into()));
    }
    let outcomes = par::map_slice(&setup.resolutions, |&n| -> Result<(f64, f64)> {
        let grid = Grid1D::new(n, setup.length)?;
        let stencil = provider(&grid)?;
        let n_steps = (setup.final_time / (setup.dt_ratio * grid.dx())).round().max(1.0) as usize;
        let dt = setup.final_time / n_steps as f64;
        let cfg = SimConfig::new(grid, stencil, dt, n_steps).with_backend(CnBackend::Spectral);
        let res = simulate(&traveling_wave_exact(&grid, 0.0), &cfg, None)?;
        let exact = traveling_wave_exact(&grid, setup.final_time);
        Ok((grid.dx(), relative_l2_error(&res.final_state.e, &exact.e, &grid)?))
    });

    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut failure = None;
    for (&n, outcome) in setup.resolutions.iter().zip(outcomes) {
        match outcome {
            Ok((dx, error)) => {
                let order = rows.last().map(|prev| (prev.error / error).log2());
                rows.push(ConvergenceRow { n_x: n, dx, error, order });
            }
            Err(e) => {
                failure = Some((n, e.to_string()));
                break;
            }
        }
    }
    Ok(ConvergenceStudy { rows, failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{centered_difference_of_radius, centered_difference_stencil, discrete_energy};
    use crate::simulate::single_mode_initial;
    use approx::assert_relative_eq;

    fn cd64() -> Stencil {
        centered_difference_stencil(&Grid1D::new(64, 1.0).unwrap())
    }

    #[test]
    fn centered_difference_symbol() {
        let thetas = full_circle_thetas(101);
        let curve = symbol(&cd64(), &thetas);
        for (t, v) in curve.thetas.iter().zip(&curve.values) {
            assert!(v.re.abs() <= 1e-13);
            assert_relative_eq!(v.im, 64.0 * t.sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn symbol_at_zero_is_coefficient_sum() {
        let w = Stencil::new(vec![0.5, 1.5, -2.0, 4.0, 0.25]).unwrap();
        let s = symbol(&w, &[0.0]).values[0];
        assert_relative_eq!(s.re, 4.25, epsilon = 1e-14);
        assert_eq!(symbol(&cd64(), &[0.0]).values[0].norm(), 0.0);
    }

    #[test]
    fn symbol_matches_operator_eigenvalues() {
        let n = 12;
        let w = Stencil::new(vec![0.2, -1.1, 0.3, 0.9, 0.05]).unwrap();
        let d = operator_matrix(&w, n).unwrap();
        for m in 0..n {
            let theta = 2.0 * PI * m as f64 / n as f64;
            // Fourier vector v_j = exp(i theta j) satisfies D v = mu(theta) v
            let mu = symbol(&w, &[theta]).values[0];
            for i in 0..n {
                let mut dv = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    dv += d[(i, j)] * Complex64::from_polar(1.0, theta * j as f64);
                }
                let want = mu * Complex64::from_polar(1.0, theta * i as f64);
                assert!((dv - want).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn wave_speed_and_cfl() {
        assert_relative_eq!(max_wave_speed(&cd64()), 64.0, epsilon = 1e-10);
        assert_relative_eq!(cfl_bound(&cd64()).unwrap(), 0.03125, epsilon = 1e-12);
        assert_eq!(max_wave_speed(&Stencil::zeros(2)), 0.0);
        assert!(matches!(cfl_bound(&Stencil::zeros(1)), Err(Error::DegenerateOperator)));
        let tripled = cd64().scaled(3.0);
        assert_relative_eq!(max_wave_speed(&tripled), 192.0, epsilon = 1e-9);
        assert_relative_eq!(cfl_bound(&cd64().scaled(2.0)).unwrap(), 0.03125 / 2.0, epsilon = 1e-12);
        let learned = Stencil::new(vec![-32.906114, 0.0, 32.906114]).unwrap();
        assert_relative_eq!(cfl_bound(&learned).unwrap(), 2.0 / (2.0 * 32.906114), epsilon = 1e-12);
    }

    #[test]
    fn wave_speed_of_wider_stencil() {
        let g = Grid1D::new(64, 1.0).unwrap();
        let w = centered_difference_of_radius(&g, 3).unwrap();
        let fine: f64 = (0..200_001)
            .map(|j| symbol_at(&w, -PI + 2.0 * PI * j as f64 / 200_000.0).norm())
            .fold(0.0, f64::max);
        assert!(max_wave_speed(&w) >= fine - 1e-9);
        assert!(max_wave_speed(&w) - fine < 1e-6);
    }

    #[test]
    fn cn_dispersion_skew_is_unitary() {
        let g = Grid1D::new(64, 1.0).unwrap();
        let w = centered_difference_of_radius(&g, 2).unwrap();
        let curves = cn_dispersion(&w, 0.5 * g.dx(), &half_circle_thetas(4096), None).unwrap();
        assert!(curves.amplification.iter().all(|a| (a - 1.0).abs() <= 1e-13));
        assert!(curves.reference_phase_ratio.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn cn_dispersion_small_theta_limit() {
        let g = Grid1D::new(64, 1.0).unwrap();
        let dt = 0.5 * g.dx();
        let theta = 1e-3;
        let c = cn_dispersion(&cd64(), dt, &[theta], None).unwrap();
        // arg mu_CN ~ dt sin(theta) / dx for small arguments
        let taylor = dt * theta.sin() / g.dx() / theta;
        assert_relative_eq!(c.phase_ratio[0], taylor, max_relative = 1e-6);
        assert_relative_eq!(c.phase_ratio[0], dt / g.dx(), max_relative = 1e-6);
    }

    #[test]
    fn dissipative_stencil_damps() {
        // Re lambda < 0 at every theta != 0
        let w = Stencil::new(vec![32.0, -64.0, 32.0]).unwrap();
        let c = cn_dispersion(&w, 0.01, &half_circle_thetas(64), Some(1.0 / 64.0)).unwrap();
        assert!(c.amplification.iter().all(|a| *a < 1.0));
        assert!(cn_dispersion(&w, 0.0, &[1.0], None).is_err());
    }

    #[test]
    fn modal_energy_single_mode() {
        let g = Grid1D::new(64, 1.0).unwrap();
        let me = modal_energies(&single_mode_initial(&g), &g).unwrap();
        let nonzero: Vec<usize> = (0..64).filter(|m| me[*m] > 1e-12).collect();
        assert_eq!(nonzero, vec![1, 63]);
        assert_relative_eq!(me.iter().sum::<f64>(), 0.5, epsilon = 1e-13);
    }

    #[test]
    fn modal_energy_parseval_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let g = Grid1D::new(37, 2.5).unwrap();
        for _ in 0..20 {
            let f = FieldPair::new(
                (0..37).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                (0..37).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let total = discrete_energy(&f, &g).unwrap().value();
            let sum: f64 = modal_energies(&f, &g).unwrap().iter().sum();
            assert_relative_eq!(sum, total, max_relative = 1e-12);
        }
    }

    #[test]
    fn centered_difference_converges_second_order() {
        let setup = ConvergenceSetup {
            resolutions: vec![32, 64, 128],
            final_time: 1.0,
            ..ConvergenceSetup::default()
        };
        let study = convergence_study(|g: &Grid1D| Ok(centered_difference_stencil(g)), &setup).unwrap();
        assert!(study.is_complete());
        for o in study.orders() {
            assert!((o - 2.0).abs() < 0.1, "order {o}");
        }
    }

    #[test]
    fn fourth_order_stencil_converges_fourth_order() {
        let setup = ConvergenceSetup {
            resolutions: vec![8, 16, 32],
            final_time: 1.0,
            dt_ratio: 0.02,
            ..ConvergenceSetup::default()
        };
        let study = convergence_study(|g: &Grid1D| centered_difference_of_radius(g, 2), &setup).unwrap();
        for o in study.orders() {
            assert!(o > 3.5, "order {o}");
        }
    }

    #[test]
    fn failure_keeps_partial_rows() {
        let setup = ConvergenceSetup {
            resolutions: vec![16, 32, 64],
            final_time: 0.1,
            ..ConvergenceSetup::default()
        };
        let provider = |g: &Grid1D| {
            if g.n() >= 32 {
                Err(Error::Singular("test"))
            } else {
                Ok(centered_difference_stencil(g))
            }
        };
        let study = convergence_study(provider, &setup).unwrap();
        assert_eq!(study.rows.len(), 1);
        assert_eq!(study.failure.as_ref().unwrap().0, 32);
        assert!(study.into_result().is_err());
        let bad = ConvergenceSetup {
            resolutions: vec![64, 32],
            ..ConvergenceSetup::default()
        };
        assert!(convergence_study(|g: &Grid1D| Ok(centered_difference_stencil(g)), &bad).is_err());
    }
}
