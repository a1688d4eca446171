//! File I/O: mono 16-bit PCM WAV at 16 kHz and plain-text coefficient files
//! (one coefficient per line).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::Signal;

/// The only sample rate accepted for WAV input; no resampling is performed.
pub const WAV_SAMPLE_RATE: u32 = 16_000;

/// Loads a mono 16-bit PCM WAV file at 16 kHz, scaling samples to [−1, 1).
pub fn load_wav<P: AsRef<Path>>(path: P) -> Result<Signal> {
    let mut reader =
        hound::WavReader::open(path.as_ref()).map_err(|e| Error::Format(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "expected mono input, found {} channels",
            spec.channels
        )));
    }
    if spec.sample_rate != WAV_SAMPLE_RATE {
        return Err(Error::Format(format!(
            "expected sample rate {WAV_SAMPLE_RATE} Hz, found {} Hz",
            spec.sample_rate
        )));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Format(format!(
            "expected 16-bit PCM, found {}-bit {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples: std::result::Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples.map_err(|e| Error::Format(e.to_string()))?;
    let scaled: Vec<f64> = samples.iter().map(|&s| s as f64 / 32768.0).collect();
    Ok(Signal::from_parts_unchecked(scaled, WAV_SAMPLE_RATE as f64))
}

/// Writes a signal as mono 16-bit PCM WAV, rounding and saturating samples
/// to the representable range.
pub fn write_wav<P: AsRef<Path>>(path: P, signal: &Signal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate().round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer =
        hound::WavWriter::create(path.as_ref(), spec).map_err(|e| Error::Format(e.to_string()))?;
    for &s in signal.samples() {
        let q = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer
            .write_sample(q)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    writer.finalize().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

/// Writes coefficients as plain text, one per line, in round-trippable form.
pub fn save_coeffs<P: AsRef<Path>>(path: P, coeffs: &[f64]) -> Result<()> {
    let mut file = std::fs::File::create(path.as_ref())?;
    for c in coeffs {
        writeln!(file, "{c:?}")?;
    }
    Ok(())
}

/// Reads a plain-text coefficient file (one coefficient per line; blank
/// lines and `#` comments ignored).
pub fn load_coeffs<P: AsRef<Path>>(path: P) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut coeffs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let value: f64 = trimmed.parse().map_err(|_| {
            Error::Format(format!("line {}: not a number: '{trimmed}'", lineno + 1))
        })?;
        coeffs.push(value);
    }
    Ok(coeffs)
}
