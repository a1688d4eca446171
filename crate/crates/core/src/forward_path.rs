//! Forward-path filter families for the closed loop: random FIR, stationary
//! all-pass IIR, and pure delay, plus gain calibration to a prescribed
//! stability margin.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filter::{max_pole_radius, FirCoeffs, RationalFilter};
use crate::metrics::{loop_peak, FrequencyGrid};
use crate::rng::{derive_seed, rng_from_seed};

/// Seed retries before giving up on a stable random all-pass denominator.
const ALLPASS_MAX_ATTEMPTS: u64 = 32;

/// Unit-gain FIR forward path: `delay` leading zeros followed by
/// `len − delay` standard-normal coefficients.
pub fn random_fir(len: usize, delay: usize, seed: u64) -> Result<RationalFilter> {
    check_delay(len, delay)?;
    let mut rng = rng_from_seed(seed);
    let mut taps = vec![0.0; len];
    for t in taps.iter_mut().skip(delay) {
        *t = rng.sample(StandardNormal);
    }
    Ok(RationalFilter::fir(FirCoeffs::new(taps)?))
}

/// Unit-magnitude all-pass IIR forward path. The numerator is `delay`
/// leading zeros, `len − delay − 1` standard-normal coefficients and a final
/// 1; the denominator is the numerator reversed, which makes the magnitude
/// response frequency-independent.
///
/// Random denominators are not stable in general: an unstable draw has its
/// poles shrunk to radius 0.9 (coefficient `i` scaled by `ρ^i`) and the
/// numerator rebuilt as the reversal, preserving the all-pass structure. If
/// the result still fails validation the next derived seed is tried, up to a
/// bounded number of attempts.
pub fn random_allpass(len: usize, delay: usize, seed: u64) -> Result<RationalFilter> {
    check_delay(len, delay)?;
    for attempt in 0..ALLPASS_MAX_ATTEMPTS {
        let mut rng = rng_from_seed(derive_seed(seed, attempt));
        let mut den = vec![0.0; len];
        den[0] = 1.0;
        for d in den.iter_mut().take(len - delay).skip(1) {
            *d = rng.sample(StandardNormal);
        }
        let radius = max_pole_radius(&den);
        if radius >= 1.0 {
            let rho = 0.9 / radius;
            let mut scale = 1.0;
            for d in den.iter_mut().skip(1) {
                scale *= rho;
                *d *= scale;
            }
        }
        let num: Vec<f64> = den.iter().rev().copied().collect();
        match RationalFilter::new(FirCoeffs::new(num)?, FirCoeffs::new(den)?) {
            Ok(filter) => return Ok(filter),
            Err(_) => continue,
        }
    }
    Err(Error::Unstable(format!(
        "no stable all-pass denominator after {ALLPASS_MAX_ATTEMPTS} attempts from seed {seed}"
    )))
}

/// Pure delay-and-gain forward path of unit gain: `delay` zeros then 1,
/// length `delay + 1`.
///
/// `delay = 0` yields an identity filter, usable for test scaffolding only:
/// the closed-loop simulator rejects forward paths without at least one
/// sample of delay.
pub fn pure_delay(delay: usize) -> RationalFilter {
    let mut taps = vec![0.0; delay + 1];
    taps[delay] = 1.0;
    RationalFilter::fir(FirCoeffs::new(taps).expect("delay taps are valid"))
}

/// Scalar gain `g` such that the loop `g·g_unit·f` sits `margin_db` below
/// instability: `20·log10(g) = −margin_db − 20·log10(max_{ω∈𝒫}|G_unit(ω)F(ω)|)`
/// with 𝒫 the phase-crossing set of the unit loop (gain does not move it).
pub fn calibrate_gain(
    g_unit: &RationalFilter,
    f: &FirCoeffs,
    margin_db: f64,
    grid: &FrequencyGrid,
) -> Result<f64> {
    let peak = loop_peak(g_unit, f, grid)?;
    Ok(10f64.powf(-margin_db / 20.0) / peak)
}

fn check_delay(len: usize, delay: usize) -> Result<()> {
    if delay < 1 {
        return Err(Error::InvalidArgument(
            "forward path needs at least one sample of delay".into(),
        ));
    }
    if delay >= len {
        return Err(Error::InvalidArgument(format!(
            "delay {delay} must be smaller than filter length {len}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::iir_filter;
    use crate::metrics::FrequencyResponse;
    use crate::signal::white_noise;

    #[test]
    fn random_fir_shape_and_determinism() {
        let g = random_fir(5, 3, 42).unwrap();
        let taps = g.numerator().taps();
        assert_eq!(taps.len(), 5);
        assert_eq!(&taps[..3], &[0.0, 0.0, 0.0]);
        assert!(taps[3] != 0.0 && taps[4] != 0.0);
        assert_eq!(g.denominator().taps(), &[1.0]);
        assert_eq!(g, random_fir(5, 3, 42).unwrap());
        assert_ne!(g, random_fir(5, 3, 43).unwrap());
    }

    #[test]
    fn random_fir_minimal_and_invalid() {
        let g = random_fir(2, 1, 7).unwrap();
        assert_eq!(g.numerator().taps()[0], 0.0);
        assert_eq!(g.leading_delay(), 1);
        assert!(random_fir(5, 5, 7).is_err());
        assert!(random_fir(5, 0, 7).is_err());
    }

    #[test]
    fn allpass_minimal_case_is_pure_delay() {
        let g = random_allpass(2, 1, 3).unwrap();
        assert_eq!(g.numerator().taps(), &[0.0, 1.0]);
        assert_eq!(g.denominator().taps(), &[1.0, 0.0]);
    }

    #[test]
    fn allpass_denominator_is_reversed_numerator() {
        let g = random_allpass(9, 2, 5).unwrap();
        let num = g.numerator().taps();
        let den = g.denominator().taps();
        let reversed: Vec<f64> = num.iter().rev().copied().collect();
        assert_eq!(den, reversed.as_slice());
        assert_eq!(g.leading_delay(), 2);
        assert_eq!(num[num.len() - 1], 1.0);
    }

    #[test]
    fn allpass_magnitude_is_flat() {
        let grid = FrequencyGrid::default_grid();
        for seed in [1, 2, 3, 17] {
            let g = random_allpass(15, 1, seed).unwrap();
            let mags: Vec<f64> = grid.omegas().iter().map(|&w| g.response_at(w).norm()).collect();
            let max = mags.iter().fold(0.0f64, |a, &b| a.max(b));
            let min = mags.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            assert!((max - min) / max < 1e-9, "seed {seed}: {min}..{max}");
        }
    }

    #[test]
    fn pure_delay_shapes() {
        let g10 = pure_delay(10);
        assert_eq!(g10.numerator().len(), 11);
        assert_eq!(g10.leading_delay(), 10);
        assert_eq!(g10.numerator().taps()[10], 1.0);
        let g1 = pure_delay(1);
        assert_eq!(g1.numerator().taps(), &[0.0, 1.0]);
    }

    #[test]
    fn pure_delay_shifts_signals_exactly() {
        let x = white_noise(64, 9, 16000.0);
        let d = 7;
        let y = iir_filter(&pure_delay(d), &x);
        for k in 0..x.len() {
            let want = if k < d { 0.0 } else { x.samples()[k - d] };
            assert_eq!(y.samples()[k], want);
        }
    }

    #[test]
    fn calibrate_gain_flat_loop() {
        let grid = FrequencyGrid::default_grid();
        let f = FirCoeffs::new(vec![1.0]).unwrap();
        let g = calibrate_gain(&pure_delay(1), &f, 3.0, &grid).unwrap();
        assert!((g - 10f64.powf(-3.0 / 20.0)).abs() < 1e-6, "gain {g}");
    }

    #[test]
    fn calibrate_gain_is_homogeneous() {
        let grid = FrequencyGrid::default_grid();
        let g_unit = random_allpass(9, 1, 4).unwrap();
        let f = FirCoeffs::new(vec![0.2, -0.4, 0.1, 0.3]).unwrap();
        let g1 = calibrate_gain(&g_unit, &f, 3.0, &grid).unwrap();
        let g2 = calibrate_gain(&g_unit, &f.scaled(2.0), 3.0, &grid).unwrap();
        assert!((g2 - g1 / 2.0).abs() < 1e-10 * g1);
    }

    #[test]
    fn calibrate_gain_rejects_zero_path() {
        let grid = FrequencyGrid::default_grid();
        let f = FirCoeffs::zeros(8).unwrap();
        assert!(calibrate_gain(&pure_delay(1), &f, 3.0, &grid).is_err());
    }
}
