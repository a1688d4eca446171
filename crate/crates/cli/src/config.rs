//! TOML scenario configuration files. Every field is optional and defaults
//! to the built-in scenario; command-line flags override file values.
//!
//! ```toml
//! sample_rate = 16000
//! duration_secs = 45.0
//! path_taps = 64
//! ar_taps = 10
//! predictor_taps = 10
//! gain_margin_db = 3.0
//! mode = "offline"            # or "recursive"
//! input = "ar"                # or a WAV path
//! snr_db = 5.0
//! path_seed = 1
//! input_seed = 11
//! noise_seed = 22
//! decay_tau = 16.0
//! input_rms = 0.1
//! grid_points = 4096
//!
//! [forward]
//! kind = "iir-allpass"        # fir | iir-allpass | delay
//! numerator_taps = 15
//! leading_delay = 1
//! seed = 7
//! # gain = 0.5                # explicit gain instead of margin calibration
//! ```

use std::path::Path;
use std::str::FromStr;

use anyhow::Context;
use serde::Deserialize;

use afclab::scenario::{ForwardPathKind, InputKind, Mode, ScenarioConfig};

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    sample_rate: Option<u32>,
    duration_secs: Option<f64>,
    path_taps: Option<usize>,
    ar_taps: Option<usize>,
    predictor_taps: Option<usize>,
    gain_margin_db: Option<f64>,
    mode: Option<String>,
    input: Option<String>,
    snr_db: Option<f64>,
    path_seed: Option<u64>,
    input_seed: Option<u64>,
    noise_seed: Option<u64>,
    decay_tau: Option<f64>,
    input_rms: Option<f64>,
    grid_points: Option<usize>,
    forward: Option<ForwardFileConfig>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ForwardFileConfig {
    kind: Option<String>,
    numerator_taps: Option<usize>,
    leading_delay: Option<usize>,
    seed: Option<u64>,
    gain: Option<f64>,
}

/// An input spec is either the literal "ar" or a WAV path.
pub fn parse_input(spec: &str) -> InputKind {
    if spec == "ar" {
        InputKind::ArSynthetic
    } else {
        InputKind::Wav(spec.into())
    }
}

pub fn load_config_file(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn parse_config(text: &str) -> anyhow::Result<ScenarioConfig> {
    let file: FileConfig = toml::from_str(text).context("parsing TOML")?;
    let mut cfg = ScenarioConfig::default();
    if let Some(v) = file.sample_rate {
        cfg.sample_rate = v;
    }
    if let Some(v) = file.duration_secs {
        cfg.duration_secs = v;
    }
    if let Some(v) = file.path_taps {
        cfg.path_taps = v;
    }
    if let Some(v) = file.ar_taps {
        cfg.ar_taps = v;
    }
    if let Some(v) = file.predictor_taps {
        cfg.predictor_taps = v;
    }
    if let Some(v) = file.gain_margin_db {
        cfg.gain_margin_db = v;
    }
    if let Some(v) = &file.mode {
        cfg.mode = Mode::from_str(v)?;
    }
    if let Some(v) = &file.input {
        cfg.input = parse_input(v);
    }
    if let Some(v) = file.snr_db {
        cfg.snr_db = Some(v);
    }
    if let Some(v) = file.path_seed {
        cfg.path_seed = v;
    }
    if let Some(v) = file.input_seed {
        cfg.input_seed = v;
    }
    if let Some(v) = file.noise_seed {
        cfg.noise_seed = v;
    }
    if let Some(v) = file.decay_tau {
        cfg.decay_tau = v;
    }
    if let Some(v) = file.input_rms {
        cfg.input_rms = v;
    }
    if let Some(v) = file.grid_points {
        cfg.grid_points = v;
    }
    if let Some(fwd) = file.forward {
        if let Some(kind) = &fwd.kind {
            cfg.forward.kind = ForwardPathKind::from_str(kind)?;
        }
        if let Some(v) = fwd.numerator_taps {
            cfg.forward.numerator_taps = v;
        }
        if let Some(v) = fwd.leading_delay {
            cfg.forward.leading_delay = v;
        }
        if let Some(v) = fwd.seed {
            cfg.forward.seed = v;
        }
        if let Some(v) = fwd.gain {
            cfg.forward.gain = Some(v);
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_config_over_defaults() {
        let cfg = parse_config(
            "duration_secs = 2.0\nmode = \"recursive\"\nsnr_db = -5.0\n\n[forward]\nkind = \"fir\"\nnumerator_taps = 40\nleading_delay = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.duration_secs, 2.0);
        assert_eq!(cfg.mode, Mode::Recursive);
        assert_eq!(cfg.snr_db, Some(-5.0));
        assert_eq!(cfg.forward.kind, ForwardPathKind::Fir);
        assert_eq!(cfg.forward.numerator_taps, 40);
        assert_eq!(cfg.forward.leading_delay, 5);
        // Untouched fields keep their defaults.
        assert_eq!(cfg.sample_rate, 16_000);
        assert_eq!(cfg.path_taps, 64);
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(parse_config("durationsecs = 2.0\n").is_err());
    }

    #[test]
    fn input_spec_is_ar_or_wav_path() {
        assert_eq!(parse_input("ar"), InputKind::ArSynthetic);
        assert_eq!(
            parse_input("speech.wav"),
            InputKind::Wav("speech.wav".into())
        );
    }
}
