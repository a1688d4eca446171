//! Scenario configuration and the offline / recursive identification
//! pipelines: synthetic feedback paths and inputs, loop simulation, 2ch-AFC
//! identification, and metric evaluation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::afc::{
    build_normal_equations, combined_regressor, condition_number, recover_feedback,
    recover_feedback_into, solve_batch, RlsState,
};
use crate::ar::{ar_generate, from_reflection, ArModel};
use crate::closed_loop::{simulate, LoopController, Safeguards, SimOptions, Trace};
use crate::error::{Error, Result};
use crate::filter::{FirCoeffs, RationalFilter};
use crate::forward_path::{calibrate_gain, pure_delay, random_allpass, random_fir};
use crate::metrics::{
    asg, crossing_frequencies, misalignment, msg, FrequencyGrid, FrequencyResponse, MetricsReport,
    DB_CLAMP,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::signal::{mix_at_snr, white_noise, Signal};
use crate::wav::load_wav;

/// Forward-path filter family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardPathKind {
    /// Random FIR with a leading delay.
    Fir,
    /// Stationary all-pass IIR with a leading delay.
    IirAllpass,
    /// Pure delay and gain; the delay is `numerator_taps − 1`.
    Delay,
}

impl ForwardPathKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ForwardPathKind::Fir => "fir",
            ForwardPathKind::IirAllpass => "iir-allpass",
            ForwardPathKind::Delay => "delay",
        }
    }
}

impl std::str::FromStr for ForwardPathKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fir" => Ok(ForwardPathKind::Fir),
            "iir-allpass" | "iir_allpass" | "allpass" => Ok(ForwardPathKind::IirAllpass),
            "delay" => Ok(ForwardPathKind::Delay),
            other => Err(Error::InvalidArgument(format!(
                "unknown forward path kind '{other}'"
            ))),
        }
    }
}

/// Description of the forward path to construct.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPathSpec {
    pub kind: ForwardPathKind,
    /// Feedforward (numerator) length.
    pub numerator_taps: usize,
    /// Leading delay in samples (ignored for `Delay`, whose delay is
    /// `numerator_taps − 1`).
    pub leading_delay: usize,
    pub seed: u64,
    /// Explicit gain; `None` calibrates to the scenario's margin below the
    /// maximum stable gain.
    pub gain: Option<f64>,
}

impl ForwardPathSpec {
    /// Builds the unit-gain filter for this spec.
    pub fn build_unit(&self) -> Result<RationalFilter> {
        match self.kind {
            ForwardPathKind::Fir => {
                random_fir(self.numerator_taps, self.leading_delay, self.seed)
            }
            ForwardPathKind::IirAllpass => {
                random_allpass(self.numerator_taps, self.leading_delay, self.seed)
            }
            ForwardPathKind::Delay => {
                if self.numerator_taps < 2 {
                    return Err(Error::InvalidArgument(
                        "delay forward path needs at least 2 taps".into(),
                    ));
                }
                Ok(pure_delay(self.numerator_taps - 1))
            }
        }
    }
}

/// Whether the canceller adapts inside the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// No canceller in the loop; identify from the recorded signals.
    Offline,
    /// Per-sample RLS; the current estimate replaces the in-loop canceller
    /// after warmup.
    Recursive,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Offline => "offline",
            Mode::Recursive => "recursive",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offline" => Ok(Mode::Offline),
            "recursive" => Ok(Mode::Recursive),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}'"))),
        }
    }
}

/// Input signal source.
#[derive(Debug, Clone, PartialEq)]
pub enum InputKind {
    /// Speech-shaped noise: white noise through a random stable AR model of
    /// `ar_taps` coefficients.
    ArSynthetic,
    /// Mono 16-bit 16 kHz WAV file.
    Wav(std::path::PathBuf),
}

/// Full description of one experiment run. Derived quantities: the auxiliary
/// filter length is `predictor_taps + path_taps − 1` and the canceller
/// length equals `path_taps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub sample_rate: u32,
    pub duration_secs: f64,
    /// Feedback-path length; the estimate uses the same length.
    pub path_taps: usize,
    /// AR model length (monic polynomial taps) of the synthetic input.
    pub ar_taps: usize,
    /// Predictor length Lₐ; must be at least `ar_taps`.
    pub predictor_taps: usize,
    pub forward: ForwardPathSpec,
    /// Margin below the maximum stable gain, in dB.
    pub gain_margin_db: f64,
    pub mode: Mode,
    pub input: InputKind,
    /// Mix an independent AR noise process at this SNR.
    pub snr_db: Option<f64>,
    /// Seed of the synthetic feedback path (one seed per "room").
    pub path_seed: u64,
    pub input_seed: u64,
    pub noise_seed: u64,
    /// Envelope time constant of the synthetic feedback path, in samples.
    pub decay_tau: f64,
    /// The input is normalized to this RMS before entering the loop.
    pub input_rms: f64,
    pub grid_points: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            sample_rate: 16_000,
            duration_secs: 45.0,
            path_taps: 64,
            ar_taps: 10,
            predictor_taps: 10,
            forward: ForwardPathSpec {
                kind: ForwardPathKind::Delay,
                numerator_taps: 15,
                leading_delay: 1,
                seed: 7,
                gain: None,
            },
            gain_margin_db: 3.0,
            mode: Mode::Offline,
            input: InputKind::ArSynthetic,
            snr_db: None,
            path_seed: 1,
            input_seed: 11,
            noise_seed: 22,
            decay_tau: 16.0,
            input_rms: 0.1,
            grid_points: FrequencyGrid::DEFAULT_POINTS,
        }
    }
}

impl ScenarioConfig {
    /// Auxiliary filter length `L_b = Lₐ + path_taps − 1`.
    pub fn aux_taps(&self) -> usize {
        self.predictor_taps + self.path_taps - 1
    }

    pub fn n_samples(&self) -> usize {
        (self.sample_rate as f64 * self.duration_secs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if !(self.duration_secs > 0.0) {
            return Err(Error::InvalidArgument("duration must be positive".into()));
        }
        if self.path_taps == 0 || self.ar_taps == 0 || self.predictor_taps == 0 {
            return Err(Error::InvalidArgument("filter lengths must be positive".into()));
        }
        if self.predictor_taps < self.ar_taps {
            return Err(Error::InvalidArgument(format!(
                "predictor length {} must cover the AR model length {}",
                self.predictor_taps, self.ar_taps
            )));
        }
        if !(self.input_rms > 0.0) {
            return Err(Error::InvalidArgument("input RMS must be positive".into()));
        }
        if !(self.decay_tau > 0.0) {
            return Err(Error::InvalidArgument("decay tau must be positive".into()));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidArgument("SNR must be finite".into()));
            }
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of the resolved configuration, embedded in
    /// CSV output for reproducibility audits.
    pub fn fingerprint(&self) -> u64 {
        let mut s = String::new();
        use std::fmt::Write;
        let _ = write!(
            s,
            "rate={};dur={:?};lf={};ld={};la={};fwd={}/{}/{}/{}/{:?};margin={:?};mode={};input={:?};snr={:?};seeds={}/{}/{};tau={:?};rms={:?};grid={}",
            self.sample_rate,
            self.duration_secs,
            self.path_taps,
            self.ar_taps,
            self.predictor_taps,
            self.forward.kind.as_str(),
            self.forward.numerator_taps,
            self.forward.leading_delay,
            self.forward.seed,
            self.forward.gain,
            self.gain_margin_db,
            self.mode.as_str(),
            self.input,
            self.snr_db,
            self.path_seed,
            self.input_seed,
            self.noise_seed,
            self.decay_tau,
            self.input_rms,
            self.grid_points,
        );
        fnv1a(s.as_bytes())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Synthetic feedback path: standard-normal taps under an exponential decay
/// envelope `e^{−i/τ}`, normalized so the peak frequency-response magnitude
/// over the default grid is 1. Deterministic per seed.
pub fn synthetic_feedback_path(path_taps: usize, seed: u64, decay_tau: f64) -> Result<FirCoeffs> {
    if path_taps == 0 {
        return Err(Error::InvalidArgument("path length must be positive".into()));
    }
    if !(decay_tau > 0.0) {
        return Err(Error::InvalidArgument("decay tau must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let taps: Vec<f64> = (0..path_taps)
        .map(|i| {
            let x: f64 = rng.sample(StandardNormal);
            x * (-(i as f64) / decay_tau).exp()
        })
        .collect();
    let raw = FirCoeffs::new(taps)?;
    let grid = FrequencyGrid::default_grid();
    let peak = grid
        .omegas()
        .iter()
        .map(|&w| raw.response_at(w).norm())
        .fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::Degenerate("feedback path has zero response".into()));
    }
    Ok(raw.scaled(1.0 / peak))
}

/// Random stable AR model of `ar_taps` monic-polynomial coefficients, built
/// from uniform reflection coefficients in (−0.9, 0.9).
pub fn random_ar_model(ar_taps: usize, seed: u64) -> Result<ArModel> {
    if ar_taps == 0 {
        return Err(Error::InvalidArgument("AR length must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let ks: Vec<f64> = (0..ar_taps - 1)
        .map(|_| rng.random_range(-0.9..0.9))
        .collect();
    from_reflection(&ks)
}

/// Result of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: MetricsReport,
    pub f_true: FirCoeffs,
    pub f_hat: FirCoeffs,
}

/// Identifiability probe: conditioning and loop-stability data without the
/// full identification step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub kappa: f64,
    pub msg_db: f64,
    pub forward_delay: usize,
    pub predictor_taps: usize,
    pub numerator_taps: usize,
    /// Forward-path delay reaches the predictor length.
    pub delay_condition: bool,
    /// Feedforward filter is longer than the predictor.
    pub invertibility_condition: bool,
}

struct Prepared {
    f: FirCoeffs,
    g: RationalFilter,
    s: Signal,
    grid: FrequencyGrid,
}

fn prepare(cfg: &ScenarioConfig) -> Result<Prepared> {
    cfg.validate()?;
    let f = synthetic_feedback_path(cfg.path_taps, cfg.path_seed, cfg.decay_tau)?;
    let g_unit = cfg.forward.build_unit()?;
    let grid = FrequencyGrid::new(cfg.grid_points)?;
    let gain = match cfg.forward.gain {
        Some(g) => g,
        None => calibrate_gain(&g_unit, &f, cfg.gain_margin_db, &grid)?,
    };
    let g = g_unit.scaled_numerator(gain);

    let n = cfg.n_samples();
    let raw = match &cfg.input {
        InputKind::ArSynthetic => {
            let model = random_ar_model(cfg.ar_taps, derive_seed(cfg.input_seed, 1))?;
            let drive = white_noise(n, derive_seed(cfg.input_seed, 2), cfg.sample_rate as f64);
            ar_generate(&model, &drive)
        }
        InputKind::Wav(path) => {
            let loaded = load_wav(path)?;
            if loaded.len() < n {
                return Err(Error::InvalidArgument(format!(
                    "wav file provides {} samples, scenario needs {n}",
                    loaded.len()
                )));
            }
            Signal::new(loaded.samples()[..n].to_vec(), loaded.sample_rate())?
        }
    };
    let rms = raw.rms();
    if rms == 0.0 {
        return Err(Error::Degenerate("input signal has zero power".into()));
    }
    let mut s = raw.scaled(cfg.input_rms / rms);

    if let Some(snr) = cfg.snr_db {
        let model = random_ar_model(cfg.ar_taps, derive_seed(cfg.noise_seed, 1))?;
        let drive = white_noise(n, derive_seed(cfg.noise_seed, 2), cfg.sample_rate as f64);
        let noise = ar_generate(&model, &drive);
        s = mix_at_snr(&s, &noise, snr)?;
    }

    Ok(Prepared { f, g, s, grid })
}

/// Per-sample RLS adaptation for the recursive scenario: growing-window RLS
/// on the combined regressor, feedback-path recovery with DC removal, and
/// coefficient clipping inside the adaptation.
struct RlsLoopController {
    rls: RlsState,
    predictor_taps: usize,
    aux_taps: usize,
    coeff_clip: f64,
    burn_in: usize,
    regressor: Vec<f64>,
    estimate: Vec<f64>,
    clip_events: usize,
}

impl RlsLoopController {
    fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let dim = cfg.predictor_taps - 1 + cfg.aux_taps();
        let delta = 1e-4 * cfg.input_rms * cfg.input_rms;
        Ok(RlsLoopController {
            rls: RlsState::new(dim, delta, 1.0)?,
            predictor_taps: cfg.predictor_taps,
            aux_taps: cfg.aux_taps(),
            coeff_clip: Safeguards::default().coeff_clip,
            burn_in: cfg.predictor_taps.max(cfg.aux_taps()),
            regressor: vec![0.0; dim],
            estimate: vec![0.0; cfg.path_taps],
            clip_events: 0,
        })
    }

    fn final_estimate(&self) -> Result<FirCoeffs> {
        FirCoeffs::new(self.estimate.clone())
    }
}

impl LoopController for RlsLoopController {
    fn observe(&mut self, k: usize, mic: &[f64], speaker: &[f64]) -> Option<&[f64]> {
        if k < self.burn_in {
            return None;
        }
        combined_regressor(
            mic,
            speaker,
            k,
            self.predictor_taps,
            self.aux_taps,
            &mut self.regressor,
        );
        self.rls.update(mic[k], &self.regressor);
        let (a_bar, b) = self.rls.weights().split_at(self.predictor_taps - 1);
        let mut a = Vec::with_capacity(self.predictor_taps);
        a.push(1.0);
        a.extend_from_slice(a_bar);
        recover_feedback_into(&a, b, &mut self.estimate, true);
        for v in self.estimate.iter_mut() {
            let clipped = v.clamp(-self.coeff_clip, self.coeff_clip);
            if clipped != *v {
                self.clip_events += 1;
                *v = clipped;
            }
        }
        Some(&self.estimate)
    }
}

fn trace_flags(trace: &Trace, flags: &mut Vec<String>) {
    if trace.amp_clips > 0 {
        flags.push(format!("amp_clipped:{}", trace.amp_clips));
    }
    if trace.coeff_clips > 0 {
        flags.push(format!("coeff_clipped:{}", trace.coeff_clips));
    }
}

/// Runs one scenario end to end and reports MSG/ASG/κ(R)/misalignment.
///
/// Offline mode records the loop with no canceller, builds the normal
/// equations by sample averages, solves in batch and recovers the path
/// (without DC removal, so exact recovery is observable). Recursive mode
/// adapts per sample with unit-forgetting RLS and DC removal, replacing the
/// in-loop canceller after warmup, and evaluates the final estimate; its κ
/// is that of the RLS correlation matrix (the inverse of P).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    let prepared = prepare(cfg)?;
    let Prepared { f, g, s, grid } = prepared;
    let mut flags = Vec::new();

    let (f_hat, kappa) = match cfg.mode {
        Mode::Offline => {
            let opts = SimOptions {
                safeguards: Some(Safeguards::default()),
                ..SimOptions::default()
            };
            let out = simulate(&f, &g, None, &s, &opts)?;
            trace_flags(&out.trace, &mut flags);
            let cs = build_normal_equations(
                &out.mic,
                &out.speaker,
                cfg.predictor_taps,
                cfg.aux_taps(),
            )?;
            let sol = solve_batch(&cs)?;
            if sol.degenerate {
                flags.push("degenerate_solve".into());
            }
            let mut a = Vec::with_capacity(cfg.predictor_taps);
            a.push(1.0);
            a.extend_from_slice(&sol.a_bar);
            let f_hat = recover_feedback(
                &FirCoeffs::new(a)?,
                &FirCoeffs::new(sol.b.clone())?,
                cfg.path_taps,
                false,
            )?;
            (f_hat, sol.kappa)
        }
        Mode::Recursive => {
            let mut controller = RlsLoopController::new(cfg)?;
            let opts = SimOptions {
                safeguards: Some(Safeguards::default()),
                canceller_init: Some(FirCoeffs::zeros(cfg.path_taps)?),
                ..SimOptions::default()
            };
            let out = simulate(&f, &g, Some(&mut controller), &s, &opts)?;
            trace_flags(&out.trace, &mut flags);
            if controller.clip_events > 0 {
                flags.push(format!("adapt_coeff_clipped:{}", controller.clip_events));
            }
            if controller.rls.faults() > 0 {
                flags.push(format!("rls_faults:{}", controller.rls.faults()));
            }
            let kappa = condition_number(controller.rls.inverse_correlation());
            (controller.final_estimate()?, kappa)
        }
    };

    if crossing_frequencies(&g, &f, &grid)?.is_empty() {
        flags.push("phase_set_fallback".into());
    }
    let msg_db = msg(&g, &f, &grid)?;
    let asg_db = asg(&g, &f, &f_hat, &grid)?;
    if asg_db >= DB_CLAMP {
        flags.push("asg_clamped".into());
    }
    let misalignment_db = misalignment(&f, &f_hat)?;
    if misalignment_db <= -DB_CLAMP {
        flags.push("misalignment_clamped".into());
    }

    Ok(RunOutcome {
        report: MetricsReport {
            msg_db,
            asg_db,
            kappa,
            misalignment_db,
            flags,
        },
        f_true: f,
        f_hat,
    })
}

/// Runs the simulation and normal-equation build only, reporting κ(R), the
/// loop MSG and the two identifiability conditions for the configured
/// forward path.
pub fn probe_scenario(cfg: &ScenarioConfig) -> Result<ProbeReport> {
    let prepared = prepare(cfg)?;
    let Prepared { f, g, s, grid } = prepared;
    let opts = SimOptions {
        safeguards: Some(Safeguards::default()),
        ..SimOptions::default()
    };
    let out = simulate(&f, &g, None, &s, &opts)?;
    let cs = build_normal_equations(&out.mic, &out.speaker, cfg.predictor_taps, cfg.aux_taps())?;
    let forward_delay = g.leading_delay();
    Ok(ProbeReport {
        kappa: condition_number(cs.matrix()),
        msg_db: msg(&g, &f, &grid)?,
        forward_delay,
        predictor_taps: cfg.predictor_taps,
        numerator_taps: g.numerator().len(),
        delay_condition: forward_delay >= cfg.predictor_taps,
        invertibility_condition: g.numerator().len() > cfg.predictor_taps,
    })
}
