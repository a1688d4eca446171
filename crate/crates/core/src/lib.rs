//! Closed-loop acoustic feedback laboratory.
//!
//! Simulates a microphone–loudspeaker system in which the loudspeaker signal
//! couples back into the microphone through an acoustic feedback path, and
//! identifies that path with the two-channel adaptive feedback canceller
//! (2ch-AFC): a prediction-error-method identifier that jointly estimates the
//! autoregressive model of the input signal and an auxiliary filter, then
//! recovers the feedback path by inverse filtering.
//!
//! The crate is organised around the experiment pipeline:
//!
//! - [`signal`], [`filter`], [`ar`] — signal generation, FIR/IIR filtering,
//!   AR synthesis and linear predictive coding;
//! - [`forward_path`] — the forward-path filter families (random FIR, all-pass
//!   IIR, pure delay) and gain calibration against the maximum stable gain;
//! - [`closed_loop`] — sample-accurate loop simulation with clipping
//!   safeguards and optional per-sample adaptation;
//! - [`afc`] — the 2ch-AFC identifier itself: normal equations from sample
//!   averages, batch and recursive least-squares solves, feedback-path
//!   recovery, and correlation-matrix conditioning;
//! - [`metrics`] — frequency responses, maximum/added stable gain and
//!   misalignment;
//! - [`scenario`], [`sweep`], [`wav`] — experiment orchestration, parameter
//!   sweeps with CSV output, and file I/O.
//!
//! With the default `parallel` feature, normal-equation accumulation and
//! sweep rows run on rayon; disabling it yields a fully sequential build with
//! identical numerical results.

pub mod afc;
pub mod ar;
pub mod closed_loop;
mod error;
pub mod filter;
pub mod forward_path;
pub mod metrics;
mod rng;
pub mod scenario;
pub mod signal;
pub mod sweep;
pub mod wav;

pub use error::{Error, Result};
pub use filter::{FirCoeffs, RationalFilter};
pub use signal::Signal;
