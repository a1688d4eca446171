//! FIR and rational (IIR) filters in direct form, with numerically checked
//! stability for rational denominators.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::signal::Signal;

/// FIR coefficient vector; index 0 is the zero-lag tap.
#[derive(Debug, Clone, PartialEq)]
pub struct FirCoeffs {
    taps: Vec<f64>,
}

impl FirCoeffs {
    /// Wraps a tap vector. Must be non-empty with all entries finite.
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidArgument("FIR taps must be non-empty".into()));
        }
        if let Some(idx) = taps.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("tap {idx} is not finite")));
        }
        Ok(FirCoeffs { taps })
    }

    /// An all-zero filter of the given length.
    pub fn zeros(len: usize) -> Result<Self> {
        FirCoeffs::new(vec![0.0; len])
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Euclidean norm of the taps.
    pub fn norm(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> FirCoeffs {
        FirCoeffs {
            taps: self.taps.iter().map(|t| t * c).collect(),
        }
    }

    /// Polynomial product: the taps of `self(q)·other(q)`.
    pub fn convolve(&self, other: &FirCoeffs) -> FirCoeffs {
        let mut out = vec![0.0; self.taps.len() + other.taps.len() - 1];
        for (i, a) in self.taps.iter().enumerate() {
            for (j, b) in other.taps.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        FirCoeffs { taps: out }
    }
}

impl AsRef<[f64]> for FirCoeffs {
    fn as_ref(&self) -> &[f64] {
        &self.taps
    }
}

/// Rational filter `num(q)/den(q)` with a monic denominator whose roots all
/// lie strictly inside the unit circle.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFilter {
    numerator: FirCoeffs,
    denominator: FirCoeffs,
}

impl RationalFilter {
    pub fn new(numerator: FirCoeffs, denominator: FirCoeffs) -> Result<Self> {
        if denominator.taps()[0] != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "denominator must be monic, leading coefficient {}",
                denominator.taps()[0]
            )));
        }
        let radius = max_pole_radius(denominator.taps());
        if radius >= 1.0 {
            return Err(Error::Unstable(format!(
                "denominator pole radius {radius} >= 1"
            )));
        }
        Ok(RationalFilter {
            numerator,
            denominator,
        })
    }

    /// An FIR transfer function (denominator `[1]`).
    pub fn fir(numerator: FirCoeffs) -> Self {
        RationalFilter {
            numerator,
            denominator: FirCoeffs { taps: vec![1.0] },
        }
    }

    pub fn numerator(&self) -> &FirCoeffs {
        &self.numerator
    }

    pub fn denominator(&self) -> &FirCoeffs {
        &self.denominator
    }

    /// Number of leading zero taps in the numerator (the filter's pure delay).
    pub fn leading_delay(&self) -> usize {
        self.numerator
            .taps()
            .iter()
            .take_while(|t| **t == 0.0)
            .count()
    }

    /// Returns a copy with the numerator scaled by `c`; the monic denominator
    /// is untouched.
    pub fn scaled_numerator(&self, c: f64) -> RationalFilter {
        RationalFilter {
            numerator: self.numerator.scaled(c),
            denominator: self.denominator.clone(),
        }
    }
}

/// Largest root magnitude of the monic polynomial `1 + d[1]z^-1 + ...`,
/// computed as the spectral radius of its companion matrix. Returns 0 for a
/// constant polynomial.
pub(crate) fn max_pole_radius(den: &[f64]) -> f64 {
    // Trailing zero coefficients only add roots at the origin.
    let order = den.iter().rposition(|c| *c != 0.0).unwrap_or(0);
    if order == 0 {
        return 0.0;
    }
    let mut companion = DMatrix::<f64>::zeros(order, order);
    for j in 0..order {
        companion[(0, j)] = -den[j + 1];
    }
    for i in 1..order {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max)
}

/// One causal tap sum `Σ_i coeffs[i]·data[k−i]`, treating `data[j<0]` as 0.
#[inline]
pub(crate) fn tap_dot(coeffs: &[f64], data: &[f64], k: usize) -> f64 {
    let mut acc = 0.0;
    let upper = coeffs.len().min(k + 1);
    for (i, &c) in coeffs[..upper].iter().enumerate() {
        acc += c * data[k - i];
    }
    acc
}

/// One direct-form IIR step: `Σ num[i]·x[k−i] − Σ_{j≥1} den[j]·y[k−j]` with
/// zero initial state. `y` only needs to be valid below index `k`.
#[inline]
pub(crate) fn iir_step(num: &[f64], den: &[f64], x: &[f64], y: &[f64], k: usize) -> f64 {
    let mut acc = tap_dot(num, x, k);
    let upper = den.len().min(k + 1);
    for (j, &d) in den[1..upper].iter().enumerate() {
        acc -= d * y[k - j - 1];
    }
    acc
}

/// Causal FIR filtering `y[k] = Σ_i f[i]·x[k−i]` with `x[k<0] = 0`; the
/// output has the length of the input.
pub fn fir_filter(f: &FirCoeffs, x: &Signal) -> Signal {
    let data = x.samples();
    let out: Vec<f64> = (0..data.len()).map(|k| tap_dot(f.taps(), data, k)).collect();
    Signal::from_parts_unchecked(out, x.sample_rate())
}

/// Rational filtering with zero initial state:
/// `y[k] = Σ num[i]·x[k−i] − Σ_{j≥1} den[j]·y[k−j]`.
pub fn iir_filter(g: &RationalFilter, x: &Signal) -> Signal {
    let data = x.samples();
    let num = g.numerator().taps();
    let den = g.denominator().taps();
    let mut out = Vec::with_capacity(data.len());
    for k in 0..data.len() {
        let y = iir_step(num, den, data, &out, k);
        out.push(y);
    }
    Signal::from_parts_unchecked(out, x.sample_rate())
}
