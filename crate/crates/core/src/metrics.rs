//! Frequency-domain evaluation: responses, maximum stable gain (MSG), added
//! stable gain (ASG) and coefficient misalignment.
//!
//! MSG follows the magnitude-at-phase-crossing criterion: the loop can only
//! become unstable at radial frequencies where the open-loop phase is a
//! multiple of 2π, so the stability margin is set by the largest loop
//! magnitude over that set.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::filter::{FirCoeffs, RationalFilter};

/// Sentinel for gains/misalignments whose exact value is ±infinity in dB.
pub const DB_CLAMP: f64 = 200.0;

/// Residual loop magnitudes below this count as perfect cancellation.
const RESIDUAL_FLOOR: f64 = 1e-10;

/// Uniform radial-frequency grid on [0, π], endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    omegas: Vec<f64>,
}

impl FrequencyGrid {
    pub const DEFAULT_POINTS: usize = 4096;

    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 64 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 64 points, got {n_points}"
            )));
        }
        let step = std::f64::consts::PI / (n_points - 1) as f64;
        Ok(FrequencyGrid {
            omegas: (0..n_points).map(|i| i as f64 * step).collect(),
        })
    }

    pub fn default_grid() -> Self {
        FrequencyGrid::new(Self::DEFAULT_POINTS).expect("default grid size is valid")
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }
}

/// Anything with a complex frequency response on the unit circle.
pub trait FrequencyResponse {
    /// Response at radial frequency `omega` (evaluation at `e^{jω}`).
    fn response_at(&self, omega: f64) -> Complex64;

    /// Response sampled over a grid.
    fn response(&self, grid: &FrequencyGrid) -> Vec<Complex64> {
        grid.omegas().iter().map(|&w| self.response_at(w)).collect()
    }
}

impl FrequencyResponse for FirCoeffs {
    fn response_at(&self, omega: f64) -> Complex64 {
        // Horner evaluation in z^-1 = e^{-jω}.
        let z = Complex64::from_polar(1.0, -omega);
        self.taps()
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &t| acc * z + t)
    }
}

impl FrequencyResponse for RationalFilter {
    fn response_at(&self, omega: f64) -> Complex64 {
        self.numerator().response_at(omega) / self.denominator().response_at(omega)
    }
}

/// Metrics of one identification run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub msg_db: f64,
    pub asg_db: f64,
    pub kappa: f64,
    pub misalignment_db: f64,
    /// Degeneracy markers (phase-set fallback, clamps, clipping, ...).
    pub flags: Vec<String>,
}

/// Radial frequencies where the open-loop phase of `G(ω)F(ω)` crosses a
/// multiple of 2π, located by linear interpolation of the wrapped phase
/// between grid points. Empty when the phase never crosses.
pub fn crossing_frequencies(
    g: &RationalFilter,
    f: &FirCoeffs,
    grid: &FrequencyGrid,
) -> Result<Vec<f64>> {
    let loop_resp = loop_response(g, f, grid)?;
    Ok(find_crossings(grid, &loop_resp))
}

/// Maximum stable gain in dB: `−20·log10` of the largest loop magnitude over
/// the phase-crossing set. Falls back to the full-grid maximum (a
/// conservative bound) when the set is empty.
pub fn msg(g: &RationalFilter, f: &FirCoeffs, grid: &FrequencyGrid) -> Result<f64> {
    let peak = loop_peak(g, f, grid)?;
    Ok(-20.0 * peak.log10())
}

/// Added stable gain in dB: the gain headroom recovered by cancelling the
/// feedback path estimate, `20·log10(max|GF| / max|G(F−F̂)|)` with both
/// maxima taken over the phase-crossing set of `GF`. Residual maxima below
/// 1e−10 are reported as the +200 dB sentinel.
pub fn asg(
    g: &RationalFilter,
    f: &FirCoeffs,
    f_hat: &FirCoeffs,
    grid: &FrequencyGrid,
) -> Result<f64> {
    let loop_resp = loop_response(g, f, grid)?;
    let crossings = find_crossings(grid, &loop_resp);
    let residual = residual_taps(f, f_hat);

    let (loop_max, residual_max) = if crossings.is_empty() {
        let loop_max = max_magnitude(&loop_resp);
        let residual_max = grid
            .omegas()
            .iter()
            .map(|&w| (g.response_at(w) * residual.response_at(w)).norm())
            .fold(0.0, f64::max);
        (loop_max, residual_max)
    } else {
        let at = |omega: f64, taps: &FirCoeffs| (g.response_at(omega) * taps.response_at(omega)).norm();
        let loop_max = crossings.iter().map(|&w| at(w, f)).fold(0.0, f64::max);
        let residual_max = crossings.iter().map(|&w| at(w, &residual)).fold(0.0, f64::max);
        (loop_max, residual_max)
    };

    if residual_max < RESIDUAL_FLOOR {
        return Ok(DB_CLAMP);
    }
    Ok(20.0 * (loop_max / residual_max).log10())
}

/// Normalized coefficient-domain error `20·log10(‖f − f̂‖₂ / ‖f‖₂)`; the
/// shorter vector is zero-padded. A perfect match reports the −200 dB
/// sentinel.
pub fn misalignment(f: &FirCoeffs, f_hat: &FirCoeffs) -> Result<f64> {
    let norm_f = f.norm();
    if norm_f == 0.0 {
        return Err(Error::Degenerate("reference path has zero norm".into()));
    }
    let diff = residual_taps(f, f_hat);
    let ratio = diff.norm() / norm_f;
    if ratio == 0.0 {
        return Ok(-DB_CLAMP);
    }
    Ok((20.0 * ratio.log10()).max(-DB_CLAMP))
}

/// Largest loop magnitude over the crossing set (or the whole grid when the
/// set is empty), shared by `msg` and gain calibration.
pub(crate) fn loop_peak(g: &RationalFilter, f: &FirCoeffs, grid: &FrequencyGrid) -> Result<f64> {
    let loop_resp = loop_response(g, f, grid)?;
    let crossings = find_crossings(grid, &loop_resp);
    if crossings.is_empty() {
        return Ok(max_magnitude(&loop_resp));
    }
    Ok(crossings
        .iter()
        .map(|&w| (g.response_at(w) * f.response_at(w)).norm())
        .fold(0.0, f64::max))
}

fn loop_response(
    g: &RationalFilter,
    f: &FirCoeffs,
    grid: &FrequencyGrid,
) -> Result<Vec<Complex64>> {
    let resp: Vec<Complex64> = grid
        .omegas()
        .iter()
        .map(|&w| g.response_at(w) * f.response_at(w))
        .collect();
    if max_magnitude(&resp) == 0.0 {
        return Err(Error::Degenerate("loop response is identically zero".into()));
    }
    Ok(resp)
}

fn max_magnitude(resp: &[Complex64]) -> f64 {
    resp.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn find_crossings(grid: &FrequencyGrid, resp: &[Complex64]) -> Vec<f64> {
    let omegas = grid.omegas();
    let phases: Vec<f64> = resp.iter().map(|c| c.arg()).collect();
    let mut crossings = Vec::new();
    for i in 0..phases.len() {
        if phases[i] == 0.0 {
            crossings.push(omegas[i]);
        } else if i + 1 < phases.len()
            && phases[i] * phases[i + 1] < 0.0
            && (phases[i + 1] - phases[i]).abs() < std::f64::consts::PI
        {
            // A genuine zero crossing; sign changes wider than π are wraps of
            // the principal value at ±π, i.e. crossings of π, not of 0.
            let t = phases[i] / (phases[i] - phases[i + 1]);
            crossings.push(omegas[i] + t * (omegas[i + 1] - omegas[i]));
        }
    }
    crossings
}

fn residual_taps(f: &FirCoeffs, f_hat: &FirCoeffs) -> FirCoeffs {
    let len = f.len().max(f_hat.len());
    let taps: Vec<f64> = (0..len)
        .map(|i| {
            f.taps().get(i).copied().unwrap_or(0.0) - f_hat.taps().get(i).copied().unwrap_or(0.0)
        })
        .collect();
    FirCoeffs::new(taps).expect("residual of finite taps is finite and non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn delay_filter(delay: usize, gain: f64) -> RationalFilter {
        let mut taps = vec![0.0; delay + 1];
        taps[delay] = gain;
        RationalFilter::fir(FirCoeffs::new(taps).unwrap())
    }

    #[test]
    fn grid_rejects_tiny_sizes() {
        assert!(FrequencyGrid::new(63).is_err());
        let g = FrequencyGrid::new(64).unwrap();
        assert_eq!(g.omegas()[0], 0.0);
        assert!((g.omegas()[63] - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn constant_and_delay_responses() {
        let grid = FrequencyGrid::new(256).unwrap();
        let unit = FirCoeffs::new(vec![1.0]).unwrap();
        for r in unit.response(&grid) {
            assert!((r - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let delay = FirCoeffs::new(vec![0.0, 1.0]).unwrap();
        for (&w, r) in grid.omegas().iter().zip(delay.response(&grid)) {
            assert!((r - Complex64::from_polar(1.0, -w)).norm() < 1e-12);
        }
    }

    #[test]
    fn fir_response_matches_dft_oracle() {
        // The grid frequencies iπ/(N−1) coincide with the bins of a DFT of
        // length 2(N−1), so a zero-padded brute-force DFT is an exact oracle.
        let n = 256;
        let grid = FrequencyGrid::new(n).unwrap();
        let mut rng = rng_from_seed(99);
        let taps: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
        let f = FirCoeffs::new(taps.clone()).unwrap();
        let m = 2 * (n - 1);
        for (k, resp) in f.response(&grid).iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &t) in taps.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (k * i) as f64 / m as f64;
                acc += t * Complex64::from_polar(1.0, angle);
            }
            assert!((resp - acc).norm() < 1e-10, "bin {k}");
        }
    }

    #[test]
    fn msg_of_flat_loop() {
        let grid = FrequencyGrid::default_grid();
        let g = delay_filter(1, 0.5);
        let f = FirCoeffs::new(vec![1.0]).unwrap();
        let db = msg(&g, &f, &grid).unwrap();
        assert!((db - 6.0206).abs() < 0.01, "msg {db}");
        // Doubling the loop gain costs 6.02 dB.
        let db2 = msg(&delay_filter(1, 1.0), &f, &grid).unwrap();
        assert!((db - db2 - 6.0206).abs() < 0.01);
    }

    #[test]
    fn msg_rejects_zero_loop() {
        let grid = FrequencyGrid::default_grid();
        let g = delay_filter(1, 0.5);
        let f = FirCoeffs::zeros(4).unwrap();
        assert!(matches!(msg(&g, &f, &grid), Err(Error::Degenerate(_))));
    }

    #[test]
    fn asg_anchors() {
        let grid = FrequencyGrid::default_grid();
        let g = delay_filter(1, 1.0);
        let f = FirCoeffs::new(vec![1.0]).unwrap();
        // No canceller: the two maxima coincide, ASG is exactly zero.
        let zero = FirCoeffs::zeros(1).unwrap();
        assert_eq!(asg(&g, &f, &zero, &grid).unwrap(), 0.0);
        // Perfect canceller: clamped sentinel.
        assert_eq!(asg(&g, &f, &f, &grid).unwrap(), DB_CLAMP);
        // Half the path cancelled on a flat loop: 6.02 dB.
        let half = f.scaled(0.5);
        let db = asg(&g, &f, &half, &grid).unwrap();
        assert!((db - 6.0206).abs() < 0.01, "asg {db}");
    }

    #[test]
    fn misalignment_anchors() {
        let f = FirCoeffs::new(vec![0.5, -0.25, 0.125]).unwrap();
        assert_eq!(misalignment(&f, &f).unwrap(), -DB_CLAMP);
        assert_eq!(misalignment(&f, &FirCoeffs::zeros(3).unwrap()).unwrap(), 0.0);
        let db = misalignment(&f, &f.scaled(0.5)).unwrap();
        assert!((db + 6.0206).abs() < 0.01, "misalignment {db}");
        assert!(misalignment(&FirCoeffs::zeros(2).unwrap(), &f).is_err());
    }

    #[test]
    fn misalignment_pads_shorter_vector() {
        let f = FirCoeffs::new(vec![1.0, 0.5]).unwrap();
        let f_hat = FirCoeffs::new(vec![1.0]).unwrap();
        let db = misalignment(&f, &f_hat).unwrap();
        // ‖[0, 0.5]‖ / ‖[1, 0.5]‖ = 0.5/√1.25
        let want = 20.0 * (0.5 / 1.25f64.sqrt()).log10();
        assert!((db - want).abs() < 1e-9);
    }

    #[test]
    fn loop_scale_invariance() {
        // Scaling f up and g down by the same constant leaves msg and asg
        // unchanged (the loop product is the same).
        let grid = FrequencyGrid::default_grid();
        let mut rng = rng_from_seed(5);
        let taps: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
        let f = FirCoeffs::new(taps).unwrap();
        let g = delay_filter(3, 0.4);
        let c = 7.5;
        let msg_a = msg(&g, &f, &grid).unwrap();
        let msg_b = msg(&g.scaled_numerator(1.0 / c), &f.scaled(c), &grid).unwrap();
        assert!((msg_a - msg_b).abs() < 1e-9);
        let f_hat = f.scaled(0.3);
        let asg_a = asg(&g, &f, &f_hat, &grid).unwrap();
        let asg_b = asg(
            &g.scaled_numerator(1.0 / c),
            &f.scaled(c),
            &f_hat.scaled(c),
            &grid,
        )
        .unwrap();
        assert!((asg_a - asg_b).abs() < 1e-9);
    }

    #[test]
    fn grid_refinement_is_stable_on_smooth_loops() {
        let mut rng = rng_from_seed(21);
        let taps: Vec<f64> = (0..24)
            .map(|i| {
                let x: f64 = rng.sample(StandardNormal);
                x * (-(i as f64) / 8.0).exp()
            })
            .collect();
        let f = FirCoeffs::new(taps).unwrap();
        let g = delay_filter(4, 0.3);
        let coarse = msg(&g, &f, &FrequencyGrid::new(4096).unwrap()).unwrap();
        let fine = msg(&g, &f, &FrequencyGrid::new(8192).unwrap()).unwrap();
        assert!((coarse - fine).abs() < 0.1, "coarse {coarse} fine {fine}");
    }
}
