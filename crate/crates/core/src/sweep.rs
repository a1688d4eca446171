//! Parameter sweeps over scenario configurations with deterministic CSV
//! output. Rows are independent runs and execute in parallel with the
//! `parallel` feature; emission order is always (value, seed) order.

use std::io::Write;

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::scenario::{run_scenario, RunOutcome, ScenarioConfig};

/// The swept configuration axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Forward-path feedforward (numerator) length.
    NumeratorTaps,
    /// Forward-path leading delay.
    LeadingDelay,
    /// Input SNR in dB.
    SnrDb,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::NumeratorTaps => "numerator_taps",
            SweepAxis::LeadingDelay => "leading_delay",
            SweepAxis::SnrDb => "snr_db",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "numerator_taps" | "l_gn" => Ok(SweepAxis::NumeratorTaps),
            "leading_delay" | "alpha" => Ok(SweepAxis::LeadingDelay),
            "snr_db" | "snr" => Ok(SweepAxis::SnrDb),
            other => Err(Error::InvalidArgument(format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// One (axis value, seed) run; failures are recorded, not fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub outcome: std::result::Result<MetricsReport, String>,
}

/// Mean/std aggregate of the successful rows at one axis value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAggregate {
    pub value: f64,
    pub runs: usize,
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<SweepAggregate>,
    pub config_hash: u64,
}

/// Applies one axis value to a base configuration. Integer axes reject
/// fractional values.
pub fn apply_axis(base: &ScenarioConfig, axis: SweepAxis, value: f64) -> Result<ScenarioConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::NumeratorTaps => {
            cfg.forward.numerator_taps = as_count(value, "numerator_taps")?;
        }
        SweepAxis::LeadingDelay => {
            cfg.forward.leading_delay = as_count(value, "leading_delay")?;
        }
        SweepAxis::SnrDb => {
            cfg.snr_db = Some(value);
        }
    }
    Ok(cfg)
}

fn as_count(value: f64, what: &str) -> Result<usize> {
    if value.fract() != 0.0 || value < 0.0 || value > usize::MAX as f64 {
        return Err(Error::InvalidArgument(format!(
            "{what} must be a non-negative integer, got {value}"
        )));
    }
    Ok(value as usize)
}

/// Runs each configuration, in parallel with the `parallel` feature. Output
/// order always matches input order.
pub fn run_rows(configs: &[ScenarioConfig]) -> Vec<Result<RunOutcome>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        configs.par_iter().map(run_scenario).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_rows_seq(configs)
    }
}

/// Single-threaded reference row runner.
pub fn run_rows_seq(configs: &[ScenarioConfig]) -> Vec<Result<RunOutcome>> {
    configs.iter().map(run_scenario).collect()
}

/// One scenario per (value, seed) pair, seeds standing in for distinct
/// feedback paths; aggregates mean and (population) standard deviation of
/// the metrics per value over the successful seed rows.
pub fn sweep(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
) -> Result<SweepResult> {
    let mut keys = Vec::with_capacity(values.len() * seeds.len());
    let mut configs = Vec::with_capacity(values.len() * seeds.len());
    for &value in values {
        for &seed in seeds {
            let mut cfg = apply_axis(base, axis, value)?;
            cfg.path_seed = seed;
            keys.push((value, seed));
            configs.push(cfg);
        }
    }
    let outcomes = run_rows(&configs);
    let rows: Vec<SweepRow> = keys
        .into_iter()
        .zip(outcomes)
        .map(|((value, seed), outcome)| SweepRow {
            value,
            seed,
            outcome: outcome.map(|o| o.report).map_err(|e| e.to_string()),
        })
        .collect();

    let aggregates = values
        .iter()
        .map(|&value| aggregate(value, &rows))
        .collect();

    Ok(SweepResult {
        axis,
        rows,
        aggregates,
        config_hash: sweep_fingerprint(base, axis, values, seeds),
    })
}

fn sweep_fingerprint(base: &ScenarioConfig, axis: SweepAxis, values: &[f64], seeds: &[u64]) -> u64 {
    use std::fmt::Write;
    let mut s = format!("base={:016x};axis={};", base.fingerprint(), axis.as_str());
    for v in values {
        let _ = write!(s, "v={v:?};");
    }
    for seed in seeds {
        let _ = write!(s, "s={seed};");
    }
    fnv1a(s.as_bytes())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn metric_array(report: &MetricsReport) -> [f64; 4] {
    [
        report.msg_db,
        report.asg_db,
        report.kappa,
        report.misalignment_db,
    ]
}

fn aggregate(value: f64, rows: &[SweepRow]) -> SweepAggregate {
    let reports: Vec<[f64; 4]> = rows
        .iter()
        .filter(|r| r.value == value)
        .filter_map(|r| r.outcome.as_ref().ok().map(metric_array))
        .collect();
    let n = reports.len();
    if n == 0 {
        return SweepAggregate {
            value,
            runs: 0,
            mean: [f64::NAN; 4],
            std: [f64::NAN; 4],
        };
    }
    let mut mean = [0.0; 4];
    for report in &reports {
        for (m, v) in mean.iter_mut().zip(report) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = [0.0; 4];
    for report in &reports {
        for ((s, v), m) in var.iter_mut().zip(report).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.map(|s| (s / n as f64).sqrt());
    SweepAggregate {
        value,
        runs: n,
        mean,
        std,
    }
}

/// Six-significant-digit float formatting used in all CSV output.
pub fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.5e}")
    }
}

fn fmt_axis_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

fn sanitize_flag(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], " ")
}

/// Writes the sweep as CSV: a config-hash comment, one header row, one row
/// per (value, seed) run, then `mean`/`std` rows per value. Byte-identical
/// for identical configs and seeds.
pub fn write_csv<W: Write>(result: &SweepResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# config_hash={:016x}", result.config_hash)?;
    let axis = result.axis.as_str();
    writeln!(out, "{axis},seed,msg_db,asg_db,kappa,misalignment_db,flags")?;
    let mut values_in_order: Vec<f64> = Vec::new();
    for row in &result.rows {
        if !values_in_order.contains(&row.value) {
            values_in_order.push(row.value);
        }
    }
    for value in values_in_order {
        for row in result.rows.iter().filter(|r| r.value == value) {
            match &row.outcome {
                Ok(report) => writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt_axis_value(row.value),
                    row.seed,
                    fmt_metric(report.msg_db),
                    fmt_metric(report.asg_db),
                    fmt_metric(report.kappa),
                    fmt_metric(report.misalignment_db),
                    report.flags.join(";"),
                )?,
                Err(msg) => writeln!(
                    out,
                    "{},{},nan,nan,nan,nan,error:{}",
                    fmt_axis_value(row.value),
                    row.seed,
                    sanitize_flag(msg),
                )?,
            }
        }
        if let Some(agg) = result.aggregates.iter().find(|a| a.value == value) {
            for (label, stats) in [("mean", &agg.mean), ("std", &agg.std)] {
                writeln!(
                    out,
                    "{},{},{},{},{},{},",
                    fmt_axis_value(value),
                    label,
                    fmt_metric(stats[0]),
                    fmt_metric(stats[1]),
                    fmt_metric(stats[2]),
                    fmt_metric(stats[3]),
                )?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ForwardPathKind, ForwardPathSpec, InputKind};

    fn tiny_base() -> ScenarioConfig {
        ScenarioConfig {
            sample_rate: 8_000,
            duration_secs: 1.0,
            path_taps: 6,
            ar_taps: 3,
            predictor_taps: 3,
            forward: ForwardPathSpec {
                kind: ForwardPathKind::Delay,
                numerator_taps: 5,
                leading_delay: 1,
                seed: 7,
                gain: None,
            },
            decay_tau: 3.0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn empty_values_yield_empty_result() {
        let result = sweep(&tiny_base(), SweepAxis::NumeratorTaps, &[], &[1, 2]).unwrap();
        assert!(result.rows.is_empty());
        assert!(result.aggregates.is_empty());
    }

    #[test]
    fn axis_application() {
        let base = tiny_base();
        let cfg = apply_axis(&base, SweepAxis::NumeratorTaps, 9.0).unwrap();
        assert_eq!(cfg.forward.numerator_taps, 9);
        let cfg = apply_axis(&base, SweepAxis::LeadingDelay, 2.0).unwrap();
        assert_eq!(cfg.forward.leading_delay, 2);
        let cfg = apply_axis(&base, SweepAxis::SnrDb, -5.0).unwrap();
        assert_eq!(cfg.snr_db, Some(-5.0));
        assert!(apply_axis(&base, SweepAxis::NumeratorTaps, 2.5).is_err());
    }

    #[test]
    fn sweep_is_deterministic_to_the_byte() {
        let base = tiny_base();
        let a = sweep(&base, SweepAxis::NumeratorTaps, &[5.0, 6.0], &[1, 2]).unwrap();
        let b = sweep(&base, SweepAxis::NumeratorTaps, &[5.0, 6.0], &[1, 2]).unwrap();
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        write_csv(&a, &mut csv_a).unwrap();
        write_csv(&b, &mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
        assert_eq!(a, b);
    }

    #[test]
    fn failed_rows_are_recorded_and_sweep_continues() {
        let mut base = tiny_base();
        base.input = InputKind::Wav("/nonexistent/input.wav".into());
        let result = sweep(&base, SweepAxis::NumeratorTaps, &[5.0], &[1, 2]).unwrap();
        assert_eq!(result.rows.len(), 2);
        assert!(result.rows.iter().all(|r| r.outcome.is_err()));
        assert_eq!(result.aggregates[0].runs, 0);
        let mut csv = Vec::new();
        write_csv(&result, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.contains("error:"));
    }

    #[test]
    fn csv_shape() {
        let result = sweep(&tiny_base(), SweepAxis::NumeratorTaps, &[5.0], &[1, 2]).unwrap();
        let mut csv = Vec::new();
        write_csv(&result, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config_hash="));
        assert_eq!(
            lines[1],
            "numerator_taps,seed,msg_db,asg_db,kappa,misalignment_db,flags"
        );
        // 2 seed rows + mean + std.
        assert_eq!(lines.len(), 2 + 2 + 2);
        assert!(lines[4].starts_with("5,mean,"));
        assert!(lines[5].starts_with("5,std,"));
    }

    #[test]
    fn aggregates_average_over_seeds() {
        let result = sweep(&tiny_base(), SweepAxis::NumeratorTaps, &[5.0], &[1, 2, 3]).unwrap();
        let agg = &result.aggregates[0];
        assert_eq!(agg.runs, 3);
        let mean_by_hand: f64 = result
            .rows
            .iter()
            .map(|r| r.outcome.as_ref().unwrap().asg_db)
            .sum::<f64>()
            / 3.0;
        assert!((agg.mean[1] - mean_by_hand).abs() < 1e-12);
    }
}
