//! Two-channel adaptive feedback canceller (2ch-AFC).
//!
//! The identifier works on the prediction error
//! `ε_p[k] = m[k] + ā·[m[k−1], …, m[k−Lₐ+1]] + b·[l[k], …, l[k−L_b+1]]`,
//! linear in the joint parameter vector `[ā; b]`. Minimizing its mean square
//! is a linear least-squares problem whose normal equations are built from
//! sample averages of the combined microphone/loudspeaker regressor; the
//! feedback path is then recovered from the auxiliary filter by inverse
//! filtering with the estimated AR polynomial.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::FirCoeffs;
use crate::signal::Signal;

/// Samples per accumulation chunk; fixed so that parallel and sequential
/// builds sum identical partials in identical order.
const CHUNK: usize = 1 << 16;

/// Condition numbers at or beyond this are reported as degenerate solves.
const KAPPA_DEGENERATE: f64 = 1e15;

/// The normal equations `R·[ā; b] = −r` of the 2ch-AFC least-squares
/// problem, accumulated as sample averages.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSystem {
    r_mat: DMatrix<f64>,
    r_vec: DVector<f64>,
    n_samples: usize,
    predictor_taps: usize,
    aux_taps: usize,
}

impl CorrelationSystem {
    /// Assembles a system from an explicit matrix and vector (mainly for
    /// tests and external tooling). The matrix must be square and match the
    /// dimension implied by the filter lengths.
    pub fn from_parts(
        r_mat: DMatrix<f64>,
        r_vec: DVector<f64>,
        n_samples: usize,
        predictor_taps: usize,
        aux_taps: usize,
    ) -> Result<Self> {
        let dim = predictor_taps - 1 + aux_taps;
        if r_mat.nrows() != dim || r_mat.ncols() != dim || r_vec.len() != dim {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch: matrix {}x{}, vector {}, expected {dim}",
                r_mat.nrows(),
                r_mat.ncols(),
                r_vec.len()
            )));
        }
        Ok(CorrelationSystem {
            r_mat,
            r_vec,
            n_samples,
            predictor_taps,
            aux_taps,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r_mat
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.r_vec
    }

    /// Regressor dimension `(Lₐ − 1) + L_b`.
    pub fn dim(&self) -> usize {
        self.predictor_taps - 1 + self.aux_taps
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn predictor_taps(&self) -> usize {
        self.predictor_taps
    }

    pub fn aux_taps(&self) -> usize {
        self.aux_taps
    }
}

/// Fills `out` with the combined regressor
/// `[m[k−1], …, m[k−Lₐ+1], l[k], …, l[k−L_b+1]]`, reading zeros before the
/// start of the signals.
pub fn combined_regressor(
    mic: &[f64],
    speaker: &[f64],
    k: usize,
    predictor_taps: usize,
    aux_taps: usize,
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), predictor_taps - 1 + aux_taps);
    for (j, slot) in out[..predictor_taps - 1].iter_mut().enumerate() {
        let lag = j + 1;
        *slot = if lag <= k { mic[k - lag] } else { 0.0 };
    }
    for (j, slot) in out[predictor_taps - 1..].iter_mut().enumerate() {
        *slot = if j <= k { speaker[k - j] } else { 0.0 };
    }
}

/// Prediction-error sequence `ε_p[k]` for fixed coefficients, with
/// zero-padded regressors from `k = 0`.
pub fn prediction_error_sequence(
    a_bar: &[f64],
    b: &[f64],
    mic: &[f64],
    speaker: &[f64],
) -> Vec<f64> {
    let predictor_taps = a_bar.len() + 1;
    let aux_taps = b.len();
    let dim = predictor_taps - 1 + aux_taps;
    let mut reg = vec![0.0; dim];
    (0..mic.len())
        .map(|k| {
            combined_regressor(mic, speaker, k, predictor_taps, aux_taps, &mut reg);
            let mut eps = mic[k];
            for (w, x) in a_bar.iter().chain(b.iter()).zip(&reg) {
                eps += w * x;
            }
            eps
        })
        .collect()
}

struct Accumulator {
    upper: Vec<f64>,
    rhs: Vec<f64>,
    count: usize,
}

fn accumulate_range(
    mic: &[f64],
    speaker: &[f64],
    predictor_taps: usize,
    aux_taps: usize,
    range: std::ops::Range<usize>,
) -> Accumulator {
    let dim = predictor_taps - 1 + aux_taps;
    let mut acc = Accumulator {
        upper: vec![0.0; dim * dim],
        rhs: vec![0.0; dim],
        count: 0,
    };
    let mut reg = vec![0.0; dim];
    for k in range {
        combined_regressor(mic, speaker, k, predictor_taps, aux_taps, &mut reg);
        for a in 0..dim {
            let va = reg[a];
            let row = &mut acc.upper[a * dim + a..(a + 1) * dim];
            for (slot, vb) in row.iter_mut().zip(&reg[a..]) {
                *slot += va * vb;
            }
        }
        let m_k = mic[k];
        for (slot, v) in acc.rhs.iter_mut().zip(&reg) {
            *slot += v * m_k;
        }
        acc.count += 1;
    }
    acc
}

fn chunk_ranges(start: usize, end: usize) -> Vec<std::ops::Range<usize>> {
    (start..end)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(end))
        .collect()
}

fn finish(
    partials: Vec<Accumulator>,
    n_samples: usize,
    predictor_taps: usize,
    aux_taps: usize,
) -> CorrelationSystem {
    let dim = predictor_taps - 1 + aux_taps;
    let mut upper = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    let mut count = 0usize;
    for part in partials {
        for (dst, src) in upper.iter_mut().zip(&part.upper) {
            *dst += src;
        }
        for (dst, src) in rhs.iter_mut().zip(&part.rhs) {
            *dst += src;
        }
        count += part.count;
    }
    let scale = 1.0 / count as f64;
    let mut r_mat = DMatrix::<f64>::zeros(dim, dim);
    for a in 0..dim {
        for b in a..dim {
            let v = upper[a * dim + b] * scale;
            r_mat[(a, b)] = v;
            r_mat[(b, a)] = v;
        }
    }
    let r_vec = DVector::from_iterator(dim, rhs.iter().map(|v| v * scale));
    CorrelationSystem {
        r_mat,
        r_vec,
        n_samples,
        predictor_taps,
        aux_taps,
    }
}

fn check_build_args(
    mic: &Signal,
    speaker: &Signal,
    predictor_taps: usize,
    aux_taps: usize,
) -> Result<usize> {
    if predictor_taps < 1 || aux_taps < 1 {
        return Err(Error::InvalidArgument(
            "filter lengths must be at least 1".into(),
        ));
    }
    if mic.len() != speaker.len() {
        return Err(Error::InvalidArgument(format!(
            "signal lengths differ: {} vs {}",
            mic.len(),
            speaker.len()
        )));
    }
    // Averaging starts past the zero-padding transient.
    let k0 = predictor_taps.max(aux_taps);
    if mic.len() <= k0 {
        return Err(Error::InvalidArgument(format!(
            "need more than {k0} samples, got {}",
            mic.len()
        )));
    }
    Ok(k0)
}

/// Builds the 2ch-AFC normal equations from sample averages over
/// `k = max(Lₐ, L_b) .. n`. With the `parallel` feature the sample range is
/// accumulated in fixed-size chunks on rayon and the partial sums combined
/// in chunk order, so the result is identical to the sequential build.
pub fn build_normal_equations(
    mic: &Signal,
    speaker: &Signal,
    predictor_taps: usize,
    aux_taps: usize,
) -> Result<CorrelationSystem> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let k0 = check_build_args(mic, speaker, predictor_taps, aux_taps)?;
        let partials: Vec<Accumulator> = chunk_ranges(k0, mic.len())
            .into_par_iter()
            .map(|range| {
                accumulate_range(mic.samples(), speaker.samples(), predictor_taps, aux_taps, range)
            })
            .collect();
        Ok(finish(partials, mic.len(), predictor_taps, aux_taps))
    }
    #[cfg(not(feature = "parallel"))]
    {
        build_normal_equations_seq(mic, speaker, predictor_taps, aux_taps)
    }
}

/// Single-threaded reference build; always available for comparison and
/// benchmarking against the parallel path.
pub fn build_normal_equations_seq(
    mic: &Signal,
    speaker: &Signal,
    predictor_taps: usize,
    aux_taps: usize,
) -> Result<CorrelationSystem> {
    let k0 = check_build_args(mic, speaker, predictor_taps, aux_taps)?;
    let partials: Vec<Accumulator> = chunk_ranges(k0, mic.len())
        .into_iter()
        .map(|range| {
            accumulate_range(mic.samples(), speaker.samples(), predictor_taps, aux_taps, range)
        })
        .collect();
    Ok(finish(partials, mic.len(), predictor_taps, aux_taps))
}

/// Result of a batch least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSolution {
    /// Predictor coefficients beyond the leading 1 of `A(q)`.
    pub a_bar: Vec<f64>,
    /// Auxiliary filter `B(q)` coefficients.
    pub b: Vec<f64>,
    /// Condition number of the correlation matrix before diagonal loading.
    pub kappa: f64,
    /// Set when the matrix was effectively singular; the (diagonally loaded)
    /// solution is still returned, never silently dropped.
    pub degenerate: bool,
}

/// Solves `[ā; b] = −(R + δI)⁻¹ r` with the default diagonal loading
/// `δ = 1e−10·trace(R)/dim`. The reported condition number is computed
/// before loading so ill-conditioning stays observable.
pub fn solve_batch(cs: &CorrelationSystem) -> Result<BatchSolution> {
    let dim = cs.dim() as f64;
    let delta = 1e-10 * cs.r_mat.trace() / dim;
    solve_batch_with_loading(cs, delta)
}

/// As [`solve_batch`] with an explicit loading δ; an RLS run whose inverse
/// correlation was initialized as `P = δ_P⁻¹·I` matches the batch solve with
/// `δ = δ_P / n_valid`.
pub fn solve_batch_with_loading(cs: &CorrelationSystem, delta: f64) -> Result<BatchSolution> {
    let kappa = condition_number(&cs.r_mat);
    let dim = cs.dim();
    let mut loaded = cs.r_mat.clone();
    for i in 0..dim {
        loaded[(i, i)] += delta;
    }
    let rhs = -&cs.r_vec;
    let solution = match loaded.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => match loaded.lu().solve(&rhs) {
            Some(sol) => sol,
            None => {
                // Last resort for a numerically singular loaded matrix.
                cs.r_mat
                    .clone()
                    .svd(true, true)
                    .solve(&rhs, 1e-12)
                    .map_err(|e| Error::Degenerate(format!("singular normal equations: {e}")))?
            }
        },
    };
    let split = cs.predictor_taps - 1;
    let a_bar = solution.as_slice()[..split].to_vec();
    let b = solution.as_slice()[split..].to_vec();
    Ok(BatchSolution {
        a_bar,
        b,
        kappa,
        degenerate: !(kappa < KAPPA_DEGENERATE),
    })
}

/// Recovers the feedback-path estimate by long division of `−B(q)/A(q)`,
/// truncated to `path_taps` coefficients. With `remove_dc` the mean of the
/// estimate is subtracted afterwards.
pub fn recover_feedback(
    a: &FirCoeffs,
    b: &FirCoeffs,
    path_taps: usize,
    remove_dc: bool,
) -> Result<FirCoeffs> {
    if a.taps()[0] != 1.0 {
        return Err(Error::InvalidArgument(format!(
            "A(q) must be monic, leading coefficient {}",
            a.taps()[0]
        )));
    }
    if path_taps == 0 {
        return Err(Error::InvalidArgument("path length must be positive".into()));
    }
    let mut out = vec![0.0; path_taps];
    recover_feedback_into(a.taps(), b.taps(), &mut out, remove_dc);
    FirCoeffs::new(out)
}

pub(crate) fn recover_feedback_into(a: &[f64], b: &[f64], out: &mut [f64], remove_dc: bool) {
    for k in 0..out.len() {
        let mut v = -b.get(k).copied().unwrap_or(0.0);
        for j in 1..a.len().min(k + 1) {
            v -= a[j] * out[k - j];
        }
        out[k] = v;
    }
    if remove_dc {
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        for v in out.iter_mut() {
            *v -= mean;
        }
    }
}

/// Growing-window recursive least squares over the joint parameter vector
/// `[ā; b]`, driven by the prediction error `ε_p[k] = m[k] + [ā; b]·i[k]`.
#[derive(Debug, Clone)]
pub struct RlsState {
    p: DMatrix<f64>,
    w: DVector<f64>,
    lambda: f64,
    updates: usize,
    faults: usize,
    // scratch
    pi: DVector<f64>,
    gain: DVector<f64>,
}

impl RlsState {
    /// `delta` is the inverse-correlation initialization `P = δ⁻¹·I`; a
    /// common choice is `1e−4` times the signal power. `lambda` is the
    /// forgetting factor in (0, 1]; 1 gives the growing-window estimate that
    /// matches the batch solve.
    pub fn new(dim: usize, delta: f64, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "initialization delta must be positive, got {delta}"
            )));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "forgetting factor must lie in (0, 1], got {lambda}"
            )));
        }
        Ok(RlsState {
            p: DMatrix::identity(dim, dim) / delta,
            w: DVector::zeros(dim),
            lambda,
            updates: 0,
            faults: 0,
            pi: DVector::zeros(dim),
            gain: DVector::zeros(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Joint weight vector `[ā; b]`.
    pub fn weights(&self) -> &[f64] {
        self.w.as_slice()
    }

    pub fn inverse_correlation(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Updates refused because they would have produced non-finite state.
    pub fn faults(&self) -> usize {
        self.faults
    }

    /// One recursion step. A step whose intermediate quantities come out
    /// non-finite is refused (state rolled back to the previous values) and
    /// counted as a fault.
    pub fn update(&mut self, m_k: f64, regressor: &[f64]) {
        debug_assert_eq!(regressor.len(), self.w.len());
        let reg = DVector::from_column_slice(regressor);
        self.pi.gemv(1.0, &self.p, &reg, 0.0);
        let denom = self.lambda + reg.dot(&self.pi);
        let eps = m_k + self.w.dot(&reg);
        if !denom.is_finite() || denom <= 0.0 || !eps.is_finite() || !m_k.is_finite() {
            self.faults += 1;
            return;
        }
        self.gain.copy_from(&self.pi);
        self.gain /= denom;
        self.w.axpy(-eps, &self.gain, 1.0);
        self.p.ger(-1.0, &self.gain, &self.pi, 1.0);
        if self.lambda != 1.0 {
            self.p /= self.lambda;
        }
        // Symmetry drifts under the rank-1 update; re-impose it.
        let n = self.p.nrows();
        for i in 0..n {
            for j in i + 1..n {
                let avg = 0.5 * (self.p[(i, j)] + self.p[(j, i)]);
                self.p[(i, j)] = avg;
                self.p[(j, i)] = avg;
            }
        }
        self.updates += 1;
    }
}

/// Condition number `σ_max/σ_min` by full singular-value decomposition;
/// a zero smallest singular value reports +∞.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let min = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min == 0.0 {
        return f64::INFINITY;
    }
    max / min
}
