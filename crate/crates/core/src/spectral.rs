//! FFT-based differentiation on the periodic grid.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::discrete::Grid1D;
use crate::error::{check_len, Result};

/// Signed integer mode for FFT bin `m` of an `n`-point transform, in the
/// symmetric range `-(n/2) .. n/2`. The Nyquist bin of an even transform
/// maps to `+n/2`.
pub fn signed_mode(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Reusable forward/inverse FFT pair for one grid size.
#[derive(Clone)]
pub struct FftPair {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPair").field("n", &self.n).finish()
    }
}

impl FftPair {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward DFT of a real vector.
    pub fn forward_real(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// In-place unnormalized forward DFT.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse DFT including the `1/N` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

/// Spectral first-derivative operator for a fixed grid.
#[derive(Debug, Clone)]
pub struct SpectralDifferentiator {
    grid: Grid1D,
    fft: FftPair,
    /// `i k` per FFT bin; zero for the mean and for the even-N Nyquist bin.
    multipliers: Vec<Complex64>,
}

impl SpectralDifferentiator {
    pub fn new(grid: Grid1D) -> Self {
        let n = grid.n();
        let multipliers = (0..n)
            .map(|m| {
                if n.is_multiple_of(2) && m == n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    let k = 2.0 * std::f64::consts::PI * signed_mode(m, n) as f64 / grid.length();
                    Complex64::new(0.0, k)
                }
            })
            .collect();
        Self {
            grid,
            fft: FftPair::new(n),
            multipliers,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn differentiate(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("spectral derivative input", self.grid.n(), u.len())?;
        let mut buf = self.fft.forward_real(u);
        for (c, k) in buf.iter_mut().zip(&self.multipliers) {
            *c *= k;
        }
        self.fft.inverse(&mut buf);
        // imaginary residue is roundoff for real input
        Ok(buf.into_iter().map(|c| c.re).collect())
    }
}

/// Spectral x-derivative of a periodic real field.
pub fn spectral_derivative(u: &[f64], grid: &Grid1D) -> Result<Vec<f64>> {
    SpectralDifferentiator::new(*grid).differentiate(u)
}
