//! Command-line front end for the acoustic feedback laboratory.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use afclab::scenario::{probe_scenario, run_scenario, random_ar_model, synthetic_feedback_path, ScenarioConfig};
use afclab::sweep::{fmt_metric, sweep, write_csv, SweepAxis};
use afclab::wav::save_coeffs;

#[derive(Parser)]
#[command(
    name = "afclab",
    about = "Closed-loop acoustic feedback laboratory: simulation, 2ch-AFC identification, and stability metrics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario and report MSG/ASG/κ(R)/misalignment.
    Run(RunArgs),
    /// Sweep one configuration axis over a list of values and seeds.
    Sweep(SweepArgs),
    /// Report conditioning and identifiability conditions only.
    Probe(ProbeArgs),
    /// Emit synthetic filters to coefficient files.
    Gen(GenArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// TOML config file; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sample_rate: Option<u32>,
    /// Run length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Feedback-path length (the estimate uses the same length).
    #[arg(long)]
    path_taps: Option<usize>,
    /// AR model length of the synthetic input.
    #[arg(long)]
    ar_taps: Option<usize>,
    /// Predictor length; at least the AR model length.
    #[arg(long)]
    predictor_taps: Option<usize>,
    /// Forward-path family.
    #[arg(long)]
    forward: Option<ForwardKindArg>,
    /// Forward-path feedforward (numerator) length.
    #[arg(long)]
    numerator_taps: Option<usize>,
    /// Forward-path leading delay in samples.
    #[arg(long)]
    leading_delay: Option<usize>,
    /// Seed for the forward-path coefficients.
    #[arg(long)]
    forward_seed: Option<u64>,
    /// Explicit forward gain instead of margin calibration.
    #[arg(long)]
    forward_gain: Option<f64>,
    /// Margin below the maximum stable gain, in dB.
    #[arg(long)]
    margin_db: Option<f64>,
    #[arg(long)]
    mode: Option<ModeArg>,
    /// Input source: "ar" or a path to a mono 16-bit 16 kHz WAV file.
    #[arg(long)]
    input: Option<String>,
    /// Mix an independent AR noise process at this SNR (dB).
    #[arg(long)]
    snr_db: Option<f64>,
    /// Feedback-path seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    input_seed: Option<u64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Feedback-path envelope time constant, in samples.
    #[arg(long)]
    decay_tau: Option<f64>,
    /// Input level entering the loop.
    #[arg(long)]
    input_rms: Option<f64>,
    /// Frequency-grid resolution for MSG/ASG.
    #[arg(long)]
    grid_points: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ForwardKindArg {
    Fir,
    IirAllpass,
    Delay,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Offline,
    Recursive,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Write a one-row CSV report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Axis to sweep: numerator_taps | leading_delay | snr_db.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Comma-separated feedback-path seeds (default 1,2,3).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    what: GenCommand,
}

#[derive(Subcommand)]
enum GenCommand {
    /// Synthetic feedback path (decaying random FIR, unit peak response).
    FeedbackPath {
        #[arg(long, default_value_t = 64)]
        taps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 16.0)]
        decay_tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random stable AR model (monic polynomial coefficients).
    ArModel {
        #[arg(long, default_value_t = 10)]
        taps: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(args: &ScenarioArgs) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(path) => config::load_config_file(path)
            .with_context(|| format!("reading config file {}", path.display()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(v) = args.sample_rate {
        cfg.sample_rate = v;
    }
    if let Some(v) = args.duration {
        cfg.duration_secs = v;
    }
    if let Some(v) = args.path_taps {
        cfg.path_taps = v;
    }
    if let Some(v) = args.ar_taps {
        cfg.ar_taps = v;
    }
    if let Some(v) = args.predictor_taps {
        cfg.predictor_taps = v;
    }
    if let Some(kind) = args.forward {
        cfg.forward.kind = match kind {
            ForwardKindArg::Fir => afclab::scenario::ForwardPathKind::Fir,
            ForwardKindArg::IirAllpass => afclab::scenario::ForwardPathKind::IirAllpass,
            ForwardKindArg::Delay => afclab::scenario::ForwardPathKind::Delay,
        };
    }
    if let Some(v) = args.numerator_taps {
        cfg.forward.numerator_taps = v;
    }
    if let Some(v) = args.leading_delay {
        cfg.forward.leading_delay = v;
    }
    if let Some(v) = args.forward_seed {
        cfg.forward.seed = v;
    }
    if let Some(v) = args.forward_gain {
        cfg.forward.gain = Some(v);
    }
    if let Some(v) = args.margin_db {
        cfg.gain_margin_db = v;
    }
    if let Some(mode) = args.mode {
        cfg.mode = match mode {
            ModeArg::Offline => afclab::scenario::Mode::Offline,
            ModeArg::Recursive => afclab::scenario::Mode::Recursive,
        };
    }
    if let Some(input) = &args.input {
        cfg.input = config::parse_input(input);
    }
    if let Some(v) = args.snr_db {
        cfg.snr_db = Some(v);
    }
    if let Some(v) = args.seed {
        cfg.path_seed = v;
    }
    if let Some(v) = args.input_seed {
        cfg.input_seed = v;
    }
    if let Some(v) = args.noise_seed {
        cfg.noise_seed = v;
    }
    if let Some(v) = args.decay_tau {
        cfg.decay_tau = v;
    }
    if let Some(v) = args.input_rms {
        cfg.input_rms = v;
    }
    if let Some(v) = args.grid_points {
        cfg.grid_points = v;
    }
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let cfg = build_config(&args.scenario)?;
    let outcome = run_scenario(&cfg).context("running scenario")?;
    let report = &outcome.report;
    println!("config_hash    {:016x}", cfg.fingerprint());
    println!("msg_db         {:.4}", report.msg_db);
    println!("asg_db         {:.4}", report.asg_db);
    println!("kappa          {:.6e}", report.kappa);
    println!("misalignment   {:.4} dB", report.misalignment_db);
    if !report.flags.is_empty() {
        println!("flags          {}", report.flags.join(";"));
    }
    if let Some(path) = args.out {
        let mut file = std::fs::File::create(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        writeln!(file, "# config_hash={:016x}", cfg.fingerprint())?;
        writeln!(file, "msg_db,asg_db,kappa,misalignment_db,flags")?;
        writeln!(
            file,
            "{},{},{},{},{}",
            fmt_metric(report.msg_db),
            fmt_metric(report.asg_db),
            fmt_metric(report.kappa),
            fmt_metric(report.misalignment_db),
            report.flags.join(";"),
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let cfg = build_config(&args.scenario)?;
    let axis = SweepAxis::from_str(&args.axis).context("parsing sweep axis")?;
    if args.values.is_empty() {
        bail!("--values must list at least one axis value");
    }
    let result = sweep(&cfg, axis, &args.values, &args.seeds).context("running sweep")?;
    match args.out {
        Some(path) => {
            let file = std::fs::File::create(&path)
                .with_context(|| format!("creating {}", path.display()))?;
            write_csv(&result, file)?;
            let failures = result.rows.iter().filter(|r| r.outcome.is_err()).count();
            println!(
                "wrote {} ({} rows, {} failed)",
                path.display(),
                result.rows.len(),
                failures
            );
        }
        None => {
            let stdout = std::io::stdout();
            write_csv(&result, stdout.lock())?;
        }
    }
    Ok(())
}

fn cmd_probe(args: ProbeArgs) -> anyhow::Result<()> {
    let cfg = build_config(&args.scenario)?;
    let report = probe_scenario(&cfg).context("probing scenario")?;
    println!("config_hash            {:016x}", cfg.fingerprint());
    println!("kappa                  {:.6e}", report.kappa);
    println!("msg_db                 {:.4}", report.msg_db);
    println!(
        "delay_condition        {} (delay {} vs predictor {})",
        report.delay_condition, report.forward_delay, report.predictor_taps
    );
    println!(
        "invertibility_condition {} (numerator {} vs predictor {})",
        report.invertibility_condition, report.numerator_taps, report.predictor_taps
    );
    Ok(())
}

fn cmd_gen(args: GenArgs) -> anyhow::Result<()> {
    match args.what {
        GenCommand::FeedbackPath {
            taps,
            seed,
            decay_tau,
            out,
        } => {
            let f = synthetic_feedback_path(taps, seed, decay_tau)
                .context("building feedback path")?;
            save_coeffs(&out, f.taps()).context("writing coefficients")?;
            println!("wrote {} ({} taps)", out.display(), taps);
        }
        GenCommand::ArModel { taps, seed, out } => {
            let model = random_ar_model(taps, seed).context("building AR model")?;
            save_coeffs(&out, model.coeffs().taps()).context("writing coefficients")?;
            println!("wrote {} ({} taps)", out.display(), taps);
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Probe(args) => cmd_probe(args),
        Command::Gen(args) => cmd_gen(args),
    };
    if let Err(err) = result {
        eprintln!("afclab error: {err:#}");
        std::process::exit(1);
    }
}
