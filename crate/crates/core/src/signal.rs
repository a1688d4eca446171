//! Uniformly sampled real-valued signals: construction, noise generation and
//! SNR mixing.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// A uniformly sampled real-valued signal with its sample rate in Hz.
///
/// Samples are dimensionless amplitudes, nominally in ±1. All samples are
/// finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Signal {
    /// Validates and wraps a sample vector. Rejects non-finite samples and
    /// non-positive sample rates.
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive and finite, got {sample_rate}"
            )));
        }
        if let Some(idx) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample {idx} is not finite"
            )));
        }
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    /// Internal constructor for samples already known to be finite.
    pub(crate) fn from_parts_unchecked(samples: Vec<f64>, sample_rate: f64) -> Self {
        Signal {
            samples,
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean square of the samples over the full length.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|s| s * s).sum();
        sum / self.samples.len() as f64
    }

    /// Root mean square amplitude.
    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    /// Returns a copy scaled by `c`.
    pub fn scaled(&self, c: f64) -> Signal {
        Signal {
            samples: self.samples.iter().map(|s| s * c).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Generates `n` independent standard-normal samples, deterministic per seed.
pub fn white_noise(n: usize, seed: u64, sample_rate: f64) -> Signal {
    let mut rng = rng_from_seed(seed);
    let samples: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Signal {
        samples,
        sample_rate,
    }
}

/// Returns `s + c·v` with `c` chosen so that the signal-to-noise ratio
/// `10·log10(P_s / P_cv)` equals `snr_db`. Powers are mean squares over the
/// full length.
pub fn mix_at_snr(s: &Signal, v: &Signal, snr_db: f64) -> Result<Signal> {
    if s.len() != v.len() {
        return Err(Error::InvalidArgument(format!(
            "signal lengths differ: {} vs {}",
            s.len(),
            v.len()
        )));
    }
    if s.sample_rate != v.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "sample rates differ: {} vs {}",
            s.sample_rate, v.sample_rate
        )));
    }
    let p_v = v.power();
    if p_v == 0.0 {
        return Err(Error::Degenerate("noise signal has zero power".into()));
    }
    let c = (s.power() / p_v).sqrt() * 10f64.powf(-snr_db / 20.0);
    let samples = s
        .samples
        .iter()
        .zip(&v.samples)
        .map(|(a, b)| a + c * b)
        .collect();
    Ok(Signal {
        samples,
        sample_rate: s.sample_rate,
    })
}
