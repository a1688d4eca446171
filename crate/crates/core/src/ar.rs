//! Autoregressive modelling: all-pole synthesis and linear predictive coding.

use crate::error::{Error, Result};
use crate::filter::{iir_step, max_pole_radius, FirCoeffs};
use crate::signal::Signal;

/// Monic AR polynomial `D(q) = 1 + d[1]q^-1 + ...` whose inverse `1/D(q)` is
/// a stable all-pole synthesis filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    d: FirCoeffs,
}

impl ArModel {
    pub fn new(d: FirCoeffs) -> Result<Self> {
        if d.taps()[0] != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "AR polynomial must be monic, leading coefficient {}",
                d.taps()[0]
            )));
        }
        let radius = max_pole_radius(d.taps());
        if radius >= 1.0 {
            return Err(Error::Unstable(format!(
                "AR polynomial root radius {radius} >= 1"
            )));
        }
        Ok(ArModel { d })
    }

    pub fn coeffs(&self) -> &FirCoeffs {
        &self.d
    }

    /// Number of predictor coefficients beyond the leading 1.
    pub fn order(&self) -> usize {
        self.d.len() - 1
    }
}

/// Synthesizes `s[k] = w[k] − Σ_{j≥1} d[j]·s[k−j]`, i.e. drives the all-pole
/// filter `1/D(q)` with `w`, from zero initial state.
pub fn ar_generate(d: &ArModel, w: &Signal) -> Signal {
    let den = d.d.taps();
    let num = [1.0];
    let data = w.samples();
    let mut out = Vec::with_capacity(data.len());
    for k in 0..data.len() {
        let s = iir_step(&num, den, data, &out, k);
        out.push(s);
    }
    Signal::from_parts_unchecked(out, w.sample_rate())
}

/// Fits a monic forward predictor of the given order by the autocorrelation
/// method (Levinson–Durbin recursion). The result has `order + 1` taps and is
/// stable by construction.
pub fn lpc(x: &Signal, order: usize) -> Result<ArModel> {
    let data = x.samples();
    if data.len() <= order {
        return Err(Error::InvalidArgument(format!(
            "need more than {order} samples to fit order {order}, got {}",
            data.len()
        )));
    }
    // Biased autocorrelation estimates keep the normal equations positive
    // semidefinite, which is what guarantees |reflection| < 1 below.
    let mut r = vec![0.0; order + 1];
    for (lag, r_lag) in r.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in lag..data.len() {
            acc += data[k] * data[k - lag];
        }
        *r_lag = acc / data.len() as f64;
    }
    if r[0] <= 0.0 {
        return Err(Error::Degenerate("zero-energy input".into()));
    }

    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for m in 1..=order {
        let mut acc = r[m];
        for i in 1..m {
            acc += a[i] * r[m - i];
        }
        let k = -acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(Error::Degenerate(format!(
                "ill-conditioned autocorrelation at stage {m} (reflection {k})"
            )));
        }
        for i in 1..=m / 2 {
            let tmp = a[i] + k * a[m - i];
            a[m - i] += k * a[i];
            a[i] = tmp;
        }
        a[m] = k;
        err *= 1.0 - k * k;
    }
    ArModel::new(FirCoeffs::new(a)?)
}

/// Monic polynomial built from reflection coefficients by the step-up
/// recursion; stable whenever every |k| < 1.
pub(crate) fn from_reflection(ks: &[f64]) -> Result<ArModel> {
    for (i, k) in ks.iter().enumerate() {
        if !(k.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "reflection coefficient {i} has magnitude {} >= 1",
                k.abs()
            )));
        }
    }
    let mut a = vec![0.0; ks.len() + 1];
    a[0] = 1.0;
    for (m, &k) in ks.iter().enumerate() {
        let m = m + 1;
        for i in 1..=m / 2 {
            let tmp = a[i] + k * a[m - i];
            a[m - i] += k * a[i];
            a[i] = tmp;
        }
        a[m] = k;
    }
    ArModel::new(FirCoeffs::new(a)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::fir_filter;
    use crate::signal::white_noise;
    use proptest::prelude::*;

    fn sig(samples: &[f64]) -> Signal {
        Signal::new(samples.to_vec(), 16000.0).unwrap()
    }

    #[test]
    fn trivial_model_passes_white_noise_through() {
        let d = ArModel::new(FirCoeffs::new(vec![1.0]).unwrap()).unwrap();
        let w = white_noise(128, 3, 16000.0);
        assert_eq!(ar_generate(&d, &w).samples(), w.samples());
    }

    #[test]
    fn impulse_response_is_geometric() {
        let d = ArModel::new(FirCoeffs::new(vec![1.0, -0.9]).unwrap()).unwrap();
        let mut impulse = vec![0.0; 8];
        impulse[0] = 1.0;
        let s = ar_generate(&d, &sig(&impulse));
        for (k, v) in s.samples().iter().enumerate() {
            assert!((v - 0.9f64.powi(k as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn analysis_filter_inverts_synthesis() {
        let d = ArModel::new(FirCoeffs::new(vec![1.0, -0.9, 0.2]).unwrap()).unwrap();
        let w = white_noise(4096, 11, 16000.0);
        let s = ar_generate(&d, &w);
        let back = fir_filter(d.coeffs(), &s);
        for (got, want) in back.samples().iter().zip(w.samples()) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn lpc_on_white_noise_is_nearly_flat() {
        let w = white_noise(1_000_000, 5, 16000.0);
        let d = lpc(&w, 2).unwrap();
        let taps = d.coeffs().taps();
        assert_eq!(taps[0], 1.0);
        assert!(taps[1].abs() < 1e-2);
        assert!(taps[2].abs() < 1e-2);
    }

    #[test]
    fn lpc_order_zero_is_identity() {
        let w = white_noise(1024, 5, 16000.0);
        let d = lpc(&w, 0).unwrap();
        assert_eq!(d.coeffs().taps(), &[1.0]);
    }

    #[test]
    fn lpc_round_trip_recovers_model() {
        let truth = ArModel::new(FirCoeffs::new(vec![1.0, -0.9, 0.2]).unwrap()).unwrap();
        let w = white_noise(1_000_000, 17, 16000.0);
        let s = ar_generate(&truth, &w);
        // One order above the generator: the surplus tap should vanish.
        let fit = lpc(&s, truth.coeffs().len()).unwrap();
        let got = fit.coeffs().taps();
        let want = [1.0, -0.9, 0.2, 0.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-2, "got {got:?}");
        }
    }

    #[test]
    fn lpc_rejects_zero_energy_input() {
        let x = sig(&[0.0; 64]);
        assert!(matches!(lpc(&x, 4), Err(Error::Degenerate(_))));
    }

    #[test]
    fn rejects_unstable_polynomial() {
        assert!(ArModel::new(FirCoeffs::new(vec![1.0, -1.2]).unwrap()).is_err());
    }

    #[test]
    fn step_up_matches_direct_polynomial() {
        // Single reflection k produces [1, k].
        let m = from_reflection(&[-0.5]).unwrap();
        assert_eq!(m.coeffs().taps(), &[1.0, -0.5]);
        assert!(from_reflection(&[1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lpc_is_always_stable(seed in 0u64..1000, order in 1usize..12) {
            let d = from_reflection(&[0.6, -0.3, 0.2]).unwrap();
            let w = white_noise(8192, seed, 16000.0);
            let s = ar_generate(&d, &w);
            // ArModel::new re-validates stability; just require success.
            prop_assert!(lpc(&s, order).is_ok());
        }
    }
}
