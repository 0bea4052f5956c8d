//! Random band-limited Maxwell states and their time derivatives.
//!
//! Each sample `s` draws from its own ChaCha8 stream (`seed`, stream `s`),
//! so generation order and thread count never change the output.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::discrete::{convolve, Grid1D, Stencil};
use crate::error::{check_len, Error, Result};
use crate::par;
use crate::spectral::SpectralDifferentiator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub n_sims: usize,
    pub m_max: usize,
    pub grid: Grid1D,
    pub seed: u64,
    /// Standard deviation of the Gaussian mode amplitudes.
    pub amplitude_std: f64,
    /// Standard deviation of additive noise on the derivatives (0 = clean).
    pub noise_std: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            n_sims: 200,
            m_max: 5,
            grid: Grid1D::new(64, 1.0).expect("valid default grid"),
            seed: 20_240_601,
            amplitude_std: 1.0,
            noise_std: 0.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.n();
        if self.n_sims == 0 {
            return Err(Error::InvalidConfig("n_sims must be >= 1".into()));
        }
        if self.m_max == 0 || 2 * self.m_max >= n {
            return Err(Error::InvalidConfig(format!(
                "m_max must satisfy 1 <= m_max < N/2, got m_max={} with N={n}",
                self.m_max
            )));
        }
        if !(self.amplitude_std.is_finite() && self.amplitude_std > 0.0) {
            return Err(Error::InvalidConfig("amplitude_std must be positive".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig("noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Where the training targets come from.
#[derive(Debug, Clone)]
pub enum DerivativeSource {
    /// Exact spectral x-derivatives, i.e. the continuous Maxwell system.
    Spectral,
    /// A prescribed convolution operator standing in for unknown physics.
    Operator(Stencil),
}

/// States and time derivatives, each stored row-major as `[n_sims][2][N]`
/// with channel 0 = E and channel 1 = H.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub header: TrainingHeader,
    pub states: Vec<f64>,
    pub derivatives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHeader {
    pub n_sims: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub m_max: usize,
    pub seed: u64,
    pub sigma: f64,
}

impl TrainingSet {
    pub fn n_sims(&self) -> usize {
        self.header.n_sims
    }

    pub fn n(&self) -> usize {
        self.header.n
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.header.n, self.header.length)
    }

    fn offset(&self, sample: usize, channel: usize) -> usize {
        assert!(channel < 2, "channel must be 0 (E) or 1 (H)");
        assert!(sample < self.header.n_sims, "sample index out of range");
        (sample * 2 + channel) * self.header.n
    }

    pub fn state(&self, sample: usize, channel: usize) -> &[f64] {
        let o = self.offset(sample, channel);
        &self.states[o..o + self.header.n]
    }

    pub fn derivative(&self, sample: usize, channel: usize) -> &[f64] {
        let o = self.offset(sample, channel);
        &self.derivatives[o..o + self.header.n]
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = BufReader::new(File::open(path)?);
        let ts: TrainingSet = serde_json::from_reader(file)?;
        let expected = ts.header.n_sims * 2 * ts.header.n;
        check_len("training states", expected, ts.states.len())?;
        check_len("training derivatives", expected, ts.derivatives.len())?;
        Ok(ts)
    }
}

/// `sum_m a_m sin(2 pi m x / L + phi_m)` for `m = 1..=amplitudes.len()`.
pub fn band_limited_field(grid: &Grid1D, amplitudes: &[f64], phases: &[f64]) -> Result<Vec<f64>> {
    check_len("phases", amplitudes.len(), phases.len())?;
    let two_pi_over_l = 2.0 * PI / grid.length();
    Ok(grid.sample(|x| {
        amplitudes
            .iter()
            .zip(phases)
            .enumerate()
            .map(|(idx, (a, p))| a * (two_pi_over_l * (idx + 1) as f64 * x + p).sin())
            .sum()
    }))
}

fn random_field(grid: &Grid1D, m_max: usize, amp: &Normal<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut amplitudes = Vec::with_capacity(m_max);
    let mut phases = Vec::with_capacity(m_max);
    for _ in 0..m_max {
        amplitudes.push(amp.sample(rng));
        phases.push(rng.gen_range(0.0..2.0 * PI));
    }
    band_limited_field(grid, &amplitudes, &phases).expect("matching lengths")
}

/// Random spectral training set with exact Maxwell time derivatives.
pub fn generate_training_set(cfg: &TrainingConfig) -> Result<TrainingSet> {
    generate_training_set_with(cfg, &DerivativeSource::Spectral)
}

pub fn generate_training_set_with(
    cfg: &TrainingConfig,
    source: &DerivativeSource,
) -> Result<TrainingSet> {
    cfg.validate()?;
    let grid = cfg.grid;
    let n = grid.n();
    if let DerivativeSource::Operator(w) = source {
        if w.len() > n {
            return Err(Error::StencilTooWide {
                radius: w.radius(),
                n,
            });
        }
    }
    let amp = Normal::new(0.0, cfg.amplitude_std)
        .map_err(|e| Error::InvalidConfig(format!("amplitude distribution: {e}")))?;
    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(format!("noise distribution: {e}")))?;
    let diff = SpectralDifferentiator::new(grid);

    let samples = par::map_range(cfg.n_sims, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(s as u64);
        let e = random_field(&grid, cfg.m_max, &amp, &mut rng);
        let h = random_field(&grid, cfg.m_max, &amp, &mut rng);
        let (dx_e, dx_h) = match source {
            DerivativeSource::Spectral => (
                diff.differentiate(&e).expect("grid-sized field"),
                diff.differentiate(&h).expect("grid-sized field"),
            ),
            DerivativeSource::Operator(w) => (convolve(w, &e), convolve(w, &h)),
        };
        // dE/dt = dH/dx, dH/dt = dE/dx
        let mut dt_e = dx_h;
        let mut dt_h = dx_e;
        if cfg.noise_std > 0.0 {
            for v in dt_e.iter_mut().chain(dt_h.iter_mut()) {
                *v += noise.sample(&mut rng);
            }
        }
        (e, h, dt_e, dt_h)
    });

    let mut states = Vec::with_capacity(cfg.n_sims * 2 * n);
    let mut derivatives = Vec::with_capacity(cfg.n_sims * 2 * n);
    for (e, h, dt_e, dt_h) in samples {
        states.extend_from_slice(&e);
        states.extend_from_slice(&h);
        derivatives.extend_from_slice(&dt_e);
        derivatives.extend_from_slice(&dt_h);
    }
    Ok(TrainingSet {
        header: TrainingHeader {
            n_sims: cfg.n_sims,
            n,
            length: grid.length(),
            m_max: cfg.m_max,
            seed: cfg.seed,
            sigma: cfg.noise_std,
        },
        states,
        derivatives,
    })
}
