//! Sample-accurate simulation of the closed microphone–loudspeaker loop
//! `m[k] = F(q)l[k] + s[k]`, `l[k] = G(q)(m[k] − F̂0(q)l[k])`, with optional
//! per-sample adaptation of the canceller F̂0 and clipping safeguards.

use crate::error::{Error, Result};
use crate::filter::{iir_step, tap_dot, FirCoeffs, RationalFilter};
use crate::signal::Signal;

/// Runaway protection used in adaptive runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Safeguards {
    /// Estimated feedback-path coefficients larger than this are clipped.
    pub coeff_clip: f64,
    /// Loudspeaker amplitudes larger than this are clipped (hard saturation).
    pub amp_clip: f64,
    /// Controller updates replace the in-loop canceller only after this much
    /// time, to allow initial convergence; the controller still adapts
    /// internally from the start.
    pub warmup_secs: f64,
}

impl Default for Safeguards {
    fn default() -> Self {
        Safeguards {
            coeff_clip: 10.0,
            amp_clip: 1.0,
            warmup_secs: 1.0,
        }
    }
}

/// Simulation options. `safeguards: None` disables clipping and warmup
/// gating entirely (the loop is then exactly linear time-invariant for a
/// fixed canceller).
#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub safeguards: Option<Safeguards>,
    /// Record a canceller snapshot every this many samples.
    pub snapshot_every: Option<usize>,
    /// Initial in-loop canceller; defaults to a single zero tap (no
    /// cancellation). Controller updates must keep this length.
    pub canceller_init: Option<FirCoeffs>,
}

/// Per-sample adaptation hook. Called once per sample after the microphone
/// sample is available, with the full signal histories up to and including
/// `k`; returning coefficients requests replacement of the in-loop canceller
/// (applied by the simulator only after warmup).
pub trait LoopController {
    fn observe(&mut self, k: usize, mic: &[f64], speaker: &[f64]) -> Option<&[f64]>;
}

/// In-memory record of one simulation run.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// (sample index, canceller coefficients) pairs.
    pub snapshots: Vec<(usize, Vec<f64>)>,
    /// Loudspeaker samples saturated at ±amp_clip.
    pub amp_clips: usize,
    /// Controller coefficients clipped at loop insertion.
    pub coeff_clips: usize,
}

/// Signals and trace of one closed-loop run.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub mic: Signal,
    pub speaker: Signal,
    /// Microphone signal after canceller subtraction, `m − F̂0(q)l`; this is
    /// what the forward path processes. With a perfect canceller it reduces
    /// to the input signal.
    pub compensated: Signal,
    pub trace: Trace,
}

/// Runs the loop for the length of `s`. Per sample, in fixed order: the
/// loudspeaker sample is formed from strictly past data (the forward path
/// carries at least one sample of delay) and clipped; the microphone sample
/// adds the feedback-path output to the input; then the controller observes
/// and may update the canceller.
pub fn simulate(
    f: &FirCoeffs,
    g: &RationalFilter,
    mut controller: Option<&mut dyn LoopController>,
    s: &Signal,
    opts: &SimOptions,
) -> Result<SimOutput> {
    if g.leading_delay() < 1 {
        return Err(Error::InvalidArgument(
            "forward path must carry at least one sample of delay".into(),
        ));
    }
    let n = s.len();
    let input = s.samples();
    let g_num = g.numerator().taps();
    let g_den = g.denominator().taps();

    let mut canceller: Vec<f64> = match &opts.canceller_init {
        Some(c) => c.taps().to_vec(),
        None => vec![0.0],
    };
    let (amp_clip, coeff_clip) = match &opts.safeguards {
        Some(sg) => (sg.amp_clip, sg.coeff_clip),
        None => (f64::INFINITY, f64::INFINITY),
    };
    let warmup_samples = match &opts.safeguards {
        Some(sg) => (sg.warmup_secs * s.sample_rate()).round() as usize,
        None => 0,
    };

    let mut speaker = vec![0.0; n];
    let mut mic = vec![0.0; n];
    // Forward-path input u[k] = m[k] − F̂0(q)l[k]; u[k] is written after
    // l[k] and m[k], which is sound because the numerator's leading delay
    // means l[k] never reads u[k].
    let mut fwd_in = vec![0.0; n];
    let mut trace = Trace::default();

    for k in 0..n {
        let raw = iir_step(g_num, g_den, &fwd_in, &speaker, k);
        if !raw.is_finite() {
            return Err(Error::NonFinite {
                sample: k,
                detail: "loudspeaker sample".into(),
            });
        }
        let clipped = raw.clamp(-amp_clip, amp_clip);
        if clipped != raw {
            trace.amp_clips += 1;
        }
        speaker[k] = clipped;

        let m_k = tap_dot(f.taps(), &speaker, k) + input[k];
        if !m_k.is_finite() {
            return Err(Error::NonFinite {
                sample: k,
                detail: "microphone sample".into(),
            });
        }
        mic[k] = m_k;
        fwd_in[k] = m_k - tap_dot(&canceller, &speaker, k);

        if let Some(ctrl) = controller.as_deref_mut() {
            if let Some(update) = ctrl.observe(k, &mic[..=k], &speaker[..=k]) {
                if k >= warmup_samples {
                    if update.len() != canceller.len() {
                        return Err(Error::InvalidArgument(format!(
                            "controller changed canceller length {} -> {}",
                            canceller.len(),
                            update.len()
                        )));
                    }
                    for (dst, &src) in canceller.iter_mut().zip(update) {
                        let clipped = src.clamp(-coeff_clip, coeff_clip);
                        if clipped != src {
                            trace.coeff_clips += 1;
                        }
                        *dst = clipped;
                    }
                }
            }
        }

        if let Some(every) = opts.snapshot_every {
            if every > 0 && k % every == 0 {
                trace.snapshots.push((k, canceller.clone()));
            }
        }
    }

    Ok(SimOutput {
        mic: Signal::from_parts_unchecked(mic, s.sample_rate()),
        speaker: Signal::from_parts_unchecked(speaker, s.sample_rate()),
        compensated: Signal::from_parts_unchecked(fwd_in, s.sample_rate()),
        trace,
    })
}
