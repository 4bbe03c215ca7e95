//! Command-line surface. Every subcommand resolves its settings from an
//! optional TOML config file plus flag overrides, does its work through
//! the library modules, and writes a run manifest next to its primary
//! output (or to `<subcommand>-manifest.toml` when there is none).
//!
//! Failures exit nonzero with a single `error: ...` line on stderr.

use std::fs;
use std::fs::File;
use std::io::{BufWriter, Read as _, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::primitive_gradient_checks;
use crate::baselines::{
    baseline_grad_check, load_baseline, predict_baseline, save_baseline, train_baseline, Baseline,
    BaselineConfig, BaselineKind, BASELINE_MAGIC,
};
use crate::channel::{
    build_transition_matrix, corrupt, expected_loss_rate, mean_burst_period_length,
    mean_gap_period_length, sample_states, stationary_distribution, BasicChannelParams,
    ChannelError, ChannelParams, ChannelState, ExtendedChannelParams, LossMask,
};
use crate::data::{
    compute_stats, generate_synthetic_trial, make_windows, normalize_windows, parse_jigsaws,
    read_dataset, serialize_jigsaws, synthesize_network_features, write_dataset, Arm, DataError,
    NetworkConfig, NormStats, SequenceWindow, SyntheticConfig, Trial, WindowDataset, WindowSpec,
};
use crate::manifest::Manifest;
use crate::metrics::{
    evaluate_baseline_on, evaluate_closed_form_on, evaluate_model_on, report_text,
    write_metrics_csv, write_series_csv, EvalError, MetricsReport, SeriesRow,
};
use crate::model::{
    describe, load_model, predict, save_model, Model, ModelConfig, ModelError, Prediction,
    CHECKPOINT_MAGIC,
};
use crate::objective::ObjectiveWeights;
use crate::rng;
use crate::sweep::{run_sweep, write_sweep_csv, RowOutcome, SweepConfig, SEVERITY_GRID};
use crate::train::{full_loss_grad_check, train, write_history_csv, OptimizerConfig, TrainReport};

const DEFAULT_SEED: u64 = 7;
/// RNG stream ids for the data pipeline, shared with the sweep module's
/// row-0 convention.
const CHANNEL_STREAM: u64 = 200;
const NET_STREAM: u64 = 300;

const PRIMITIVE_TOL: f64 = 1e-4;
const FULL_LOSS_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn file_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::File {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| file_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| file_err(path, e))
}

#[derive(Parser, Debug)]
#[command(
    name = "teleop-informer",
    version,
    about = "Packet-loss channel simulation and tool-tip trajectory prediction for desk-scale teleoperation experiments"
)]
pub struct Cli {
    /// Write the run manifest here instead of next to the primary output.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a seeded synthetic trial as 76-column kinematics text.
    GenData(GenDataArgs),
    /// Read a kinematics file and report what one manipulator block holds.
    Parse(ParseArgs),
    /// Sample a loss channel and compare its statistics to the closed form.
    Channel(ChannelCmdArgs),
    /// Apply packet loss to a recording; optionally cut training windows.
    Corrupt(CorruptArgs),
    /// Train the predictor or a baseline on a corrupted recording.
    Train(TrainArgs),
    /// Run a checkpoint over a window dataset and write the series CSV.
    Predict(PredictArgs),
    /// Score a checkpoint (or closed-form baseline) on a window dataset.
    Evaluate(EvaluateArgs),
    /// Train/evaluate across the built-in channel severity grid.
    Sweep(SweepArgs),
    /// Verify analytic gradients against finite differences.
    GradCheck(GradCheckArgs),
}

/// Channel selection flags shared by the channel/corrupt/train commands.
/// `--basic` takes `--pb`/`--pg`; the four extended parameters imply
/// extended mode on their own.
#[derive(Args, Debug, Clone, Copy)]
pub struct ChannelArgs {
    /// Two-parameter cyclic channel.
    #[arg(long)]
    pub basic: bool,
    /// Four-parameter burst/gap channel.
    #[arg(long)]
    pub extended: bool,
    /// Gap-side switching probability (basic mode).
    #[arg(long)]
    pub pb: Option<f64>,
    /// Burst-side advance probability (basic mode).
    #[arg(long)]
    pub pg: Option<f64>,
    /// Per-slot loss probability inside bursts.
    #[arg(long)]
    pub burst_density: Option<f64>,
    /// Per-slot reception probability inside gaps.
    #[arg(long)]
    pub gap_density: Option<f64>,
    /// Mean burst period length, slots.
    #[arg(long)]
    pub burst_length: Option<f64>,
    /// Mean gap period length, slots.
    #[arg(long)]
    pub gap_length: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output kinematics text file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Recording length, seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ParseArgs {
    /// Kinematics text file (76 space-separated columns per line).
    #[arg(long)]
    pub input: PathBuf,
    /// Manipulator block: master-left, master-right, slave-left, slave-right.
    #[arg(long, default_value = "slave-left")]
    pub arm: String,
    /// Re-serialize the parsed block here (round-trip check).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ChannelCmdArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// Packet slots to simulate.
    #[arg(long, default_value_t = 100_000)]
    pub steps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the mask as a '1'(received)/'0'(lost) trace line.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CorruptArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Kinematics text file to corrupt.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "slave-left")]
    pub arm: String,
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// Replay a recorded mask trace instead of sampling a channel.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corrupted series CSV (time, flag, clean xyz, corrupted xyz).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cut raw training windows and write the binary dataset here.
    #[arg(long)]
    pub windows_out: Option<PathBuf>,
    /// Also save the sampled mask trace.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Kinematics text to train on; omitted = synthetic trial from [synth].
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "slave-left")]
    pub arm: String,
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// Replay a recorded mask trace instead of sampling a channel.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// informer (default), elman-rnn, lstm, or tcn.
    #[arg(long, default_value = "informer")]
    pub model: String,
    /// Baseline hidden width; default matches the informer's budget.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    /// Synthetic recording length override, seconds.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Raw window dataset (written by `corrupt --windows-out`).
    #[arg(long)]
    pub data: PathBuf,
    /// Series CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Mask trace for the `lost` column (dataset files don't store it).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Window stride used when the dataset was cut (for trace alignment).
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Trained checkpoint (model or baseline).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Closed-form alternative: hold or linear.
    #[arg(long)]
    pub model: Option<String>,
    /// Raw window dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Metrics CSV output (report always prints to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sweep CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Train a fresh model per grid row instead of sharing one.
    #[arg(long)]
    pub retrain: bool,
    /// Comma-separated grid row indices (0..=5), default all six.
    #[arg(long)]
    pub rows: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    /// Primitive operations only (fast).
    #[arg(long)]
    pub tiny: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    Basic,
    Extended,
}

/// `[channel]` config section; all keys optional so flags can fill them.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ChannelMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pb: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burst_density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burst_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_length: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSection {
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_frac: 0.6,
            val_frac: 0.2,
        }
    }
}

/// The whole config file. Every section is optional and partial; missing
/// keys take the library defaults. A top-level `seed` overrides the
/// per-section seeds and drives the data pipeline.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub weights: ObjectiveWeights,
    pub synth: SyntheticConfig,
    pub window: WindowSpec,
    pub network: NetworkConfig,
    pub channel: ChannelSection,
    pub split: SplitSection,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = read_text(p)?;
            toml::from_str(&text).map_err(|e| CliError::Config {
                path: p.to_path_buf(),
                reason: e.to_string().replace('\n', " "),
            })
        }
    }
}

/// Settle the effective seed: flag beats file, file beats the default.
/// An explicit top-level seed also overrides the section seeds.
fn settle_seed(cfg: &mut FileConfig, flag: Option<u64>) -> u64 {
    if let Some(s) = flag {
        cfg.seed = Some(s);
    }
    let master = cfg.seed.unwrap_or(DEFAULT_SEED);
    if cfg.seed.is_some() {
        cfg.model.seed = master;
        cfg.optimizer.seed = master;
    }
    cfg.seed = Some(master);
    master
}

fn apply_channel_args(section: &mut ChannelSection, args: &ChannelArgs) -> Result<(), CliError> {
    if args.basic && args.extended {
        return Err(usage("--basic and --extended are mutually exclusive"));
    }
    if args.basic {
        section.mode = Some(ChannelMode::Basic);
    }
    if args.extended {
        section.mode = Some(ChannelMode::Extended);
    }
    let pairs = [
        (&mut section.pb, args.pb),
        (&mut section.pg, args.pg),
        (&mut section.burst_density, args.burst_density),
        (&mut section.gap_density, args.gap_density),
        (&mut section.burst_length, args.burst_length),
        (&mut section.gap_length, args.gap_length),
    ];
    for (slot, flag) in pairs {
        if flag.is_some() {
            *slot = flag;
        }
    }
    Ok(())
}

/// Turn the merged section into channel parameters. `None` means no
/// channel was configured at all (lossless pipeline).
fn resolve_channel(section: &ChannelSection) -> Result<Option<ChannelParams>, CliError> {
    let basic_given = section.pb.is_some() || section.pg.is_some();
    let extended_given = section.burst_density.is_some()
        || section.gap_density.is_some()
        || section.burst_length.is_some()
        || section.gap_length.is_some();
    let mode = match section.mode {
        Some(m) => m,
        None => match (basic_given, extended_given) {
            (false, false) => return Ok(None),
            (true, false) => ChannelMode::Basic,
            (false, true) => ChannelMode::Extended,
            (true, true) => {
                return Err(usage(
                    "both basic (--pb/--pg) and extended channel parameters given; pick a mode with --basic or --extended",
                ))
            }
        },
    };
    match mode {
        ChannelMode::Basic => match (section.pb, section.pg) {
            (Some(p_b), Some(p_g)) => Ok(Some(ChannelParams::Basic(BasicChannelParams {
                p_b,
                p_g,
            }))),
            _ => Err(usage("basic channel needs both --pb and --pg")),
        },
        ChannelMode::Extended => match (
            section.burst_density,
            section.gap_density,
            section.burst_length,
            section.gap_length,
        ) {
            (Some(burst_density), Some(gap_density), Some(mean_burst_length), Some(mean_gap_length)) => {
                Ok(Some(ChannelParams::Extended(ExtendedChannelParams {
                    burst_density,
                    gap_density,
                    mean_burst_length,
                    mean_gap_length,
                })))
            }
            _ => Err(usage(
                "extended channel needs --burst-density, --gap-density, --burst-length, and --gap-length",
            )),
        },
    }
}

/// Resolve the loss process for a `n`-step recording: a replayed trace, a
/// sampled channel, or (with neither configured) no loss at all.
fn build_mask(
    cfg: &FileConfig,
    master: u64,
    n: usize,
    trace: Option<&Path>,
) -> Result<LossMask, CliError> {
    let params = resolve_channel(&cfg.channel)?;
    match (trace, params) {
        (Some(_), Some(_)) => Err(usage(
            "give either --trace or channel parameters, not both",
        )),
        (Some(p), None) => {
            let mask = LossMask::from_trace(&read_text(p)?)?;
            if mask.len() != n {
                return Err(usage(format!(
                    "trace {} has {} steps but the recording has {n} frames",
                    p.display(),
                    mask.len()
                )));
            }
            Ok(mask)
        }
        (None, Some(params)) => {
            let matrix = build_transition_matrix(&params)?;
            let mut r = rng::stream(master, CHANNEL_STREAM);
            Ok(LossMask::from_states(&sample_states(
                &matrix,
                n,
                ChannelState::S1,
                &mut r,
            )))
        }
        (None, None) => Ok(LossMask::new(vec![true; n])),
    }
}

fn read_trial(path: &Path, arm_name: &str) -> Result<Trial, CliError> {
    let arm = Arm::parse_name(arm_name).ok_or_else(|| {
        usage(format!(
            "unknown arm {arm_name:?}; expected master-left, master-right, slave-left, or slave-right"
        ))
    })?;
    let text = read_text(path)?;
    let outcome = parse_jigsaws(&text, arm)?;
    if !outcome.warnings.is_empty() {
        println!(
            "note: {} frames carry degenerate rotation blocks (first on line {})",
            outcome.warnings.len(),
            outcome.warnings[0].line
        );
    }
    Ok(outcome.trial)
}

/// Default manifest location: next to the primary output, or
/// `<subcommand>-manifest.toml` in the working directory.
fn finish_manifest(
    mut man: Manifest,
    cfg: &FileConfig,
    out: Option<&Path>,
    sub: &str,
    explicit: Option<&Path>,
) -> Result<(), CliError> {
    let text = toml::to_string(cfg)
        .map_err(|e| usage(format!("could not serialize the effective config: {e}")))?;
    man.set_config(&text);
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => match out {
            Some(o) => o.with_extension("manifest.toml"),
            None => PathBuf::from(format!("{sub}-manifest.toml")),
        },
    };
    man.write(&path).map_err(|e| file_err(&path, e))?;
    println!("manifest: {}", path.display());
    Ok(())
}

pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version requests land here too; clap routes the text.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " / "));
            ExitCode::FAILURE
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let manifest_to = cli.manifest.as_deref();
    match cli.command {
        Command::GenData(a) => cmd_gen_data(a, manifest_to),
        Command::Parse(a) => cmd_parse(a, manifest_to),
        Command::Channel(a) => cmd_channel(a, manifest_to),
        Command::Corrupt(a) => cmd_corrupt(a, manifest_to),
        Command::Train(a) => cmd_train(a, manifest_to),
        Command::Predict(a) => cmd_predict(a, manifest_to),
        Command::Evaluate(a) => cmd_evaluate(a, manifest_to),
        Command::Sweep(a) => cmd_sweep(a, manifest_to),
        Command::GradCheck(a) => cmd_grad_check(a, manifest_to),
    }
}

fn cmd_gen_data(args: GenDataArgs, manifest_to: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    let master = settle_seed(&mut cfg, args.seed);
    if let Some(d) = args.duration {
        cfg.synth.duration_s = d;
    }
    if let Some(r) = args.sample_rate {
        cfg.synth.sample_rate = r;
    }
    let trial = generate_synthetic_trial(&cfg.synth, master)?;
    write_text(&args.out, &serialize_jigsaws(&trial))?;
    println!(
        "wrote {} frames ({} s at {} Hz) to {}",
        trial.len(),
        cfg.synth.duration_s,
        cfg.synth.sample_rate,
        args.out.display()
    );

    let mut man = Manifest::new("teleop-informer gen-data", master);
    man.record("frames", trial.len());
    man.record("duration_s", cfg.synth.duration_s);
    man.record("sample_rate", cfg.synth.sample_rate);
    finish_manifest(man, &cfg, Some(&args.out), "gen-data", manifest_to)
}

fn cmd_parse(args: ParseArgs, manifest_to: Option<&Path>) -> Result<(), CliError> {
    let trial = read_trial(&args.input, &args.arm)?;
    trial.validate()?;
    let duration = trial.len() as f64 * trial.dt();
    println!(
        "{}: {} frames, {:.2} s at {} Hz, arm {}",
        args.input.display(),
        trial.len(),
        duration,
        trial.sample_rate,
        args.arm
    );
    if let Some(out) = &args.out {
        write_text(out, &serialize_jigsaws(&trial))?;
        println!("canonical copy: {}", out.display());
    }

    let mut man = Manifest::new("teleop-informer parse", DEFAULT_SEED);
    man.record("frames", trial.len());
    man.record("duration_s", duration);
    man.record("arm", &args.arm);
    finish_manifest(
        man,
        &FileConfig::default(),
        args.out.as_deref(),
        "parse",
        manifest_to,
    )
}

fn cmd_channel(args: ChannelCmdArgs, manifest_to: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    apply_channel_args(&mut cfg.channel, &args.channel)?;
    let master = settle_seed(&mut cfg, args.seed);
    let params = resolve_channel(&cfg.channel)?.ok_or_else(|| {
        usage("no channel given: pass --basic with --pb/--pg, or the four extended parameters")
    })?;

    let matrix = build_transition_matrix(&params)?;
    let mut r = rng::stream(master, CHANNEL_STREAM);
    let states = sample_states(&matrix, args.steps, ChannelState::S1, &mut r);
    let mask = LossMask::from_states(&states);
    let empirical = mask.loss_rate();
    let expected = expected_loss_rate(&params)?;
    let pi = stationary_distribution(&matrix)?;

    println!("steps: {}", args.steps);
    println!("empirical_loss_rate: {empirical}");
    println!("expected_loss_rate: {expected}");
    println!("stationary: [{}, {}, {}, {}]", pi[0], pi[1], pi[2], pi[3]);

    let mut man = Manifest::new("teleop-informer channel", master);
    man.record("steps", args.steps);
    man.record("empirical_loss_rate", empirical);
    man.record("expected_loss_rate", expected);
    for (i, p) in pi.iter().enumerate() {
        man.record(&format!("stationary_s{}", i + 1), p);
    }
    if let Some(b) = mean_burst_period_length(&states) {
        let expected_b = match &params {
            ChannelParams::Extended(p) => format!(" (expected {})", p.mean_burst_length),
            ChannelParams::Basic(_) => String::new(),
        };
        println!("mean_burst_period: {b}{expected_b}");
        man.record("mean_burst_period", b);
    }
    if let Some(g) = mean_gap_period_length(&states) {
        let expected_g = match &params {
            ChannelParams::Extended(p) => format!(" (expected {})", p.mean_gap_length),
            ChannelParams::Basic(_) => String::new(),
        };
        println!("mean_gap_period: {g}{expected_g}");
        man.record("mean_gap_period", g);
    }
    if let Some(p) = &args.trace_out {
        write_text(p, &mask.to_trace())?;
        println!("trace: {}", p.display());
    }
    finish_manifest(man, &cfg, args.trace_out.as_deref(), "channel", manifest_to)
}

fn write_corrupt_csv(
    path: &Path,
    trial: &Trial,
    clean: &crate::tensor::Tensor,
    bad: &crate::tensor::Tensor,
    mask: &LossMask,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "time_s,lost,clean_x,clean_y,clean_z,x,y,z")?;
    let dt = trial.dt();
    for t in 0..trial.len() {
        let c = &clean.data()[t * 3..t * 3 + 3];
        let b = &bad.data()[t * 3..t * 3 + 3];
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            t as f64 * dt,
            u8::from(!mask.is_received(t)),
            c[0],
            c[1],
            c[2],
            b[0],
            b[1],
            b[2],
        )?;
    }
    w.flush()
}

fn cmd_corrupt(args: CorruptArgs, manifest_to: Option<&Path>) -> Result<(), CliError> {
    if args.out.is_none() && args.windows_out.is_none() && args.trace_out.is_none() {
        return Err(usage(
            "corrupt would write nothing; pass --out, --windows-out, or --trace-out",
        ));
    }
    let mut cfg = load_config(args.config.as_deref())?;
    apply_channel_args(&mut cfg.channel, &args.channel)?;
    let master = settle_seed(&mut cfg, args.seed);

    let trial = read_trial(&args.input, &args.arm)?;
    let mask = build_mask(&cfg, master, trial.len(), args.trace.as_deref())?;
    println!(
        "frames: {}, loss rate {:.4}",
        trial.len(),
        mask.loss_rate()
    );

    let mut windows_len = None;
    if let Some(out) = &args.out {
        let clean = trial.positions();
        let bad = corrupt(&clean, &mask)?;
        write_corrupt_csv(out, &trial, &clean, &bad, &mask).map_err(|e| file_err(out, e))?;
        println!("series: {}", out.display());
    }
    if let Some(wout) = &args.windows_out {
        let net =
            synthesize_network_features(&mask, &cfg.network, &mut rng::stream(master, NET_STREAM))?;
        let windows = make_windows(&trial, &cfg.window, &mask, &net)?;
        if windows.is_empty() {
            return Err(usage(format!(
                "recording of {} frames is too short for {}+{}-step windows",
                trial.len(),
                cfg.window.l_x,
                cfg.window.l_y
            )));
        }
        let ds = WindowDataset::new(cfg.window, trial.dt(), windows);
        write_dataset(&ds, wout)?;
        println!("windows: {} -> {}", ds.len(), wout.display());
        windows_len = Some(ds.len());
    }
    if let Some(p) = &args.trace_out {
        write_text(p, &mask.to_trace())?;
        println!("trace: {}", p.display());
    }

    let mut man = Manifest::new("teleop-informer corrupt", master);
    man.record("frames", trial.len());
    man.record("loss_rate", mask.loss_rate());
    if let Some(n) = windows_len {
        man.record("windows", n);
    }
    let anchor = args.out.as_deref().or(args.windows_out.as_deref());
    finish_manifest(man, &cfg, anchor, "corrupt", manifest_to)
}

/// Contiguous train/val/test window split with train-fitted statistics;
/// train and val come back normalized, the test tail stays raw.
#[allow(clippy::type_complexity)]
fn split_windows(
    windows: Vec<SequenceWindow>,
    spec: WindowSpec,
    dt: f64,
    train_frac: f64,
    val_frac: f64,
) -> Result<(WindowDataset, WindowDataset, Vec<SequenceWindow>, NormStats), CliError> {
    let ok = |f: f64| f.is_finite() && f > 0.0 && f < 1.0;
    if !ok(train_frac) || !ok(val_frac) || train_frac + val_frac >= 1.0 {
        return Err(usage(format!(
            "split fractions {train_frac}/{val_frac} must be in (0,1) and leave room for a test set"
        )));
    }
    let n = windows.len();
    let n_train = (n as f64 * train_frac).floor() as usize;
    let n_val = (n as f64 * val_frac).floor() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(usage(format!(
            "recording yields {n} windows; split {train_frac}/{val_frac} leaves an empty set"
        )));
    }
    let stats = compute_stats(&windows[..n_train]);
    let mk = |wins: Vec<SequenceWindow>| WindowDataset {
        spec,
        dt,
        stats: Some(stats.clone()),
        windows: wins,
    };
    Ok((
        mk(normalize_windows(&windows[..n_train], &stats)),
        mk(normalize_windows(&windows[n_train..n_train + n_val], &stats)),
        windows[n_train + n_val..].to_vec(),
        stats,
    ))
}

fn cmd_train(args: TrainArgs, manifest_to: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    apply_channel_args(&mut cfg.channel, &args.channel)?;
    let master = settle_seed(&mut cfg, args.seed);
    if let Some(v) = args.epochs {
        cfg.optimizer.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.optimizer.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.optimizer.batch_size = v;
    }
    if let Some(v) = args.patience {
        cfg.optimizer.patience = v;
    }
    if let Some(v) = args.train_frac {
        cfg.split.train_frac = v;
    }
    if let Some(v) = args.val_frac {
        cfg.split.val_frac = v;
    }
    if let Some(v) = args.duration {
        cfg.synth.duration_s = v;
    }

    let w = cfg.window;
    let m = &cfg.model;
    if (w.l_x, w.l_token, w.l_y) != (m.l_x, m.l_token, m.l_y) {
        return Err(usage(format!(
            "window lengths {}/{}/{} do not match the model's {}/{}/{}; align [window] and [model]",
            w.l_x, w.l_token, w.l_y, m.l_x, m.l_token, m.l_y
        )));
    }

    let trial = match &args.data {
        Some(p) => read_trial(p, &args.arm)?,
        None => generate_synthetic_trial(&cfg.synth, master)?,
    };
    let mask = build_mask(&cfg, master, trial.len(), args.trace.as_deref())?;
    let net =
        synthesize_network_features(&mask, &cfg.network, &mut rng::stream(master, NET_STREAM))?;
    let windows = make_windows(&trial, &cfg.window, &mask, &net)?;
    let total = windows.len();
    let (train_ds, val_ds, test_raw, _stats) = split_windows(
        windows,
        cfg.window,
        trial.dt(),
        cfg.split.train_frac,
        cfg.split.val_frac,
    )?;
    println!(
        "windows: {} (train {} / val {} / test {}), loss rate {:.4}",
        total,
        train_ds.len(),
        val_ds.len(),
        test_raw.len(),
        mask.loss_rate()
    );

    let started = Instant::now();
    let (summary, report): (String, TrainReport) = if args.model == "informer" {
        if args.hidden.is_some() {
            return Err(usage("--hidden only applies to baseline models"));
        }
        let mut model = Model::new(cfg.model.clone())?;
        let report = train(
            &mut model,
            &train_ds,
            &val_ds,
            &cfg.weights,
            None,
            &cfg.optimizer,
        )?;
        save_model(&model, &args.out)?;
        (describe(&model), report)
    } else {
        let kind = BaselineKind::parse(&args.model).ok_or_else(|| {
            usage(format!(
                "unknown model {:?}; expected informer, elman-rnn, lstm, or tcn",
                args.model
            ))
        })?;
        if !kind.trainable() {
            return Err(usage(format!(
                "{} has no trainable parameters; use `evaluate --model {}` directly",
                kind.name(),
                args.model
            )));
        }
        let mut bc = match args.hidden {
            Some(hidden) => BaselineConfig {
                kind,
                hidden,
                input_channels: cfg.model.input_channels,
                l_x: cfg.model.l_x,
                l_token: cfg.model.l_token,
                l_y: cfg.model.l_y,
                seed: cfg.model.seed,
            },
            None => BaselineConfig::matched(kind, &cfg.model)?,
        };
        bc.seed = cfg.model.seed;
        let mut baseline = Baseline::new(bc)?;
        let report = train_baseline(&mut baseline, &train_ds, &val_ds, &cfg.optimizer)?;
        save_baseline(&baseline, &args.out)?;
        (baseline.describe(), report)
    };
    let hist_path = args.out.with_extension("history.csv");
    write_history_csv(&report.history, &hist_path).map_err(|e| file_err(&hist_path, e))?;

    println!("model: {summary}");
    println!(
        "epochs: {} (best {}, val mse {:.6e}{})",
        report.history.len(),
        report.best_epoch,
        report.best_val_mse,
        if report.stopped_early {
            ", stopped early"
        } else {
            ""
        }
    );
    println!("trained in {:.1} s", started.elapsed().as_secs_f64());
    println!("checkpoint: {}", args.out.display());
    println!("history: {}", hist_path.display());

    let mut man = Manifest::new("teleop-informer train", master);
    man.record("model", &summary);
    man.record("windows_train", train_ds.len());
    man.record("windows_val", val_ds.len());
    man.record("windows_test", test_raw.len());
    man.record("loss_rate", mask.loss_rate());
    man.record("epochs_run", report.history.len());
    man.record("best_epoch", report.best_epoch);
    man.record("best_val_mse", report.best_val_mse);
    man.record("stopped_early", report.stopped_early);
    finish_manifest(man, &cfg, Some(&args.out), "train", manifest_to)
}

enum Loaded {
    Informer(Box<Model>),
    Baseline(Box<Baseline>),
}

impl Loaded {
    fn lengths(&self) -> (usize, usize, usize) {
        match self {
            Loaded::Informer(m) => (m.config.l_x, m.config.l_token, m.config.l_y),
            Loaded::Baseline(b) => (b.config.l_x, b.config.l_token, b.config.l_y),
        }
    }

    fn summary(&self) -> String {
        match self {
            Loaded::Informer(m) => describe(m),
            Loaded::Baseline(b) => b.describe(),
        }
    }

    fn predict_window(&self, w: &SequenceWindow) -> Result<Prediction, ModelError> {
        match self {
            Loaded::Informer(m) => predict(m, w, None),
            Loaded::Baseline(b) => predict_baseline(b, w),
        }
    }
}

fn load_checkpoint(path: &Path) -> Result<Loaded, CliError> {
    let mut f = File::open(path).map_err(|e| file_err(path, e))?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(|e| file_err(path, e))?;
    drop(f);
    if &magic == CHECKPOINT_MAGIC {
        Ok(Loaded::Informer(Box::new(load_model(path)?)))
    } else if &magic == BASELINE_MAGIC {
        Ok(Loaded::Baseline(Box::new(load_baseline(path)?)))
    } else {
        Err(usage(format!(
            "{}: not a model or baseline checkpoint (magic {magic:?})",
            path.display()
        )))
    }
}

fn check_window_lengths(loaded: &Loaded, ds: &WindowDataset, what: &Path) -> Result<(), CliError> {
    let (lx, lt, ly) = loaded.lengths();
    let s = &ds.spec;
    if (lx, lt, ly) != (s.l_x, s.l_token, s.l_y) {
        return Err(usage(format!(
            "checkpoint expects windows {lx}/{lt}/{ly} but dataset {} has {}/{}/{}",
            what.display(),
            s.l_x,
            s.l_token,
            s.l_y
        )));
    }
    Ok(())
}

fn require_raw(ds: &WindowDataset, path: &Path) -> Result<(), CliError> {
    if ds.stats.is_some() {
        return Err(usage(format!(
            "dataset {} is normalized; prediction and scoring need raw windows (cut them with `corrupt --windows-out`)",
            path.display()
        )));
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs, manifest_to: Option<&Path>) -> Result<(), CliError> {
    let ds = read_dataset(&args.data)?;
    require_raw(&ds, &args.data)?;
    let loaded = load_checkpoint(&args.checkpoint)?;
    check_window_lengths(&loaded, &ds, &args.data)?;

    let stride = args.stride.unwrap_or(ds.spec.stride);
    if stride == 0 {
        return Err(usage("--stride must be at least 1"));
    }
    let trace = match &args.trace {
        Some(p) => {
            let mask = LossMask::from_trace(&read_text(p)?)?;
            let needed = (ds.len() - 1) * stride + ds.spec.l_x + ds.spec.l_y;
            if mask.len() < needed {
                return Err(usage(format!(
                    "trace {} has {} steps but {} windows at stride {stride} span {needed}",
                    p.display(),
                    mask.len(),
                    ds.len()
                )));
            }
            Some(mask)
        }
        None => None,
    };

    let mut rows = Vec::with_capacity(ds.len() * ds.spec.l_y);
    for (i, w) in ds.windows.iter().enumerate() {
        let pred = loaded.predict_window(w)?;
        for k in 0..ds.spec.l_y {
            let t_idx = i * stride + ds.spec.l_x + k;
            rows.push(SeriesRow {
                time_s: t_idx as f64 * ds.dt,
                truth: [w.target.at2(k, 0), w.target.at2(k, 1), w.target.at2(k, 2)],
                prediction: [
                    pred.positions.at2(k, 0),
                    pred.positions.at2(k, 1),
                    pred.positions.at2(k, 2),
                ],
                lost: trace.as_ref().is_some_and(|m| !m.is_received(t_idx)),
            });
        }
    }
    write_series_csv(&rows, &args.out).map_err(|e| file_err(&args.out, e))?;
    println!("model: {}", loaded.summary());
    println!("series: {} rows -> {}", rows.len(), args.out.display());

    let mut man = Manifest::new("teleop-informer predict", DEFAULT_SEED);
    man.record("model", loaded.summary());
    man.record("windows", ds.len());
    man.record("rows", rows.len());
    man.record("stride", stride);
    finish_manifest(
        man,
        &FileConfig::default(),
        Some(&args.out),
        "predict",
        manifest_to,
    )
}

fn record_metrics(man: &mut Manifest, r: &MetricsReport) {
    man.record("windows", r.windows);
    man.record("samples", r.samples);
    man.record("mse", r.meter.mse);
    man.record("mae", r.meter.mae);
    man.record("rmse", r.meter.rmse);
    man.record("mse_norm", r.normalized.mse);
    man.record("mae_norm", r.normalized.mae);
    man.record("rmse_norm", r.normalized.rmse);
    man.record("accuracy_x", r.accuracy[0]);
    man.record("accuracy_y", r.accuracy[1]);
    man.record("accuracy_z", r.accuracy[2]);
}

fn cmd_evaluate(args: EvaluateArgs, manifest_to: Option<&Path>) -> Result<(), CliError> {
    let ds = read_dataset(&args.data)?;
    require_raw(&ds, &args.data)?;

    let (summary, report) = match (&args.checkpoint, &args.model) {
        (Some(_), Some(_)) => {
            return Err(usage("give either --checkpoint or --model, not both"))
        }
        (None, None) => {
            return Err(usage(
                "nothing to evaluate: pass --checkpoint <file> or --model hold|linear",
            ))
        }
        (Some(ckpt), None) => {
            let loaded = load_checkpoint(ckpt)?;
            check_window_lengths(&loaded, &ds, &args.data)?;
            let report = match &loaded {
                Loaded::Informer(m) => evaluate_model_on(m, &ds.windows)?,
                Loaded::Baseline(b) => evaluate_baseline_on(b, &ds.windows)?,
            };
            (loaded.summary(), report)
        }
        (None, Some(name)) => {
            let kind = BaselineKind::parse(name)
                .ok_or_else(|| usage(format!("unknown model {name:?}; expected hold or linear")))?;
            if kind.trainable() {
                return Err(usage(format!(
                    "{} needs a trained checkpoint; pass --checkpoint",
                    kind.name()
                )));
            }
            // No training stats exist for the closed-form extrapolators;
            // the normalized-space columns use statistics fit on these
            // windows.
            let stats = compute_stats(&ds.windows);
            let report = evaluate_closed_form_on(kind, &ds.windows, &stats)?;
            (kind.name().to_string(), report)
        }
    };

    println!("model: {summary}");
    print!("{}", report_text(&report));
    if let Some(out) = &args.out {
        write_metrics_csv(&report, out).map_err(|e| file_err(out, e))?;
        println!("metrics: {}", out.display());
    }

    let mut man = Manifest::new("teleop-informer evaluate", DEFAULT_SEED);
    man.record("model", &summary);
    record_metrics(&mut man, &report);
    finish_manifest(
        man,
        &FileConfig::default(),
        args.out.as_deref(),
        "evaluate",
        manifest_to,
    )
}

fn parse_rows(spec: &str) -> Result<Vec<ExtendedChannelParams>, CliError> {
    let mut grid = Vec::new();
    for part in spec.split(',') {
        let i: usize = part
            .trim()
            .parse()
            .map_err(|_| usage(format!("bad row index {part:?} in --rows")))?;
        let row = SEVERITY_GRID
            .get(i)
            .ok_or_else(|| usage(format!("row {i} out of range; the grid has {} rows", SEVERITY_GRID.len())))?;
        grid.push(*row);
    }
    Ok(grid)
}

fn cmd_sweep(args: SweepArgs, manifest_to: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = load_config(args.config.as_deref())?;
    let master = settle_seed(&mut cfg, args.seed);
    if let Some(v) = args.epochs {
        cfg.optimizer.epochs = v;
    }
    if let Some(v) = args.train_frac {
        cfg.split.train_frac = v;
    }
    if let Some(v) = args.val_frac {
        cfg.split.val_frac = v;
    }
    let grid = match &args.rows {
        Some(s) => parse_rows(s)?,
        None => SEVERITY_GRID.to_vec(),
    };

    let sweep_cfg = SweepConfig {
        grid,
        synth: cfg.synth,
        window: cfg.window,
        model: cfg.model.clone(),
        weights: cfg.weights,
        opt: cfg.optimizer,
        train_frac: cfg.split.train_frac,
        val_frac: cfg.split.val_frac,
        retrain: args.retrain,
        seed: master,
    };
    let started = Instant::now();
    let report = run_sweep(&sweep_cfg)?;
    write_sweep_csv(&report, &args.out).map_err(|e| file_err(&args.out, e))?;

    let mut man = Manifest::new("teleop-informer sweep", master);
    man.record("retrain", report.retrain);
    if let Some(p) = &report.trained_on {
        man.record(
            "trained_on",
            format!(
                "{}/{}/{}/{}",
                p.burst_density, p.gap_density, p.mean_burst_length, p.mean_gap_length
            ),
        );
    }
    if let Some(s) = &report.model_summary {
        man.record("model", s);
    }
    for (i, outcome) in report.outcomes.iter().enumerate() {
        match outcome {
            RowOutcome::Done(row) => {
                let p = &row.channel;
                println!(
                    "row {i} ({}/{}/{}/{}): mse {:.6e}, accuracy {:.2}/{:.2}/{:.2}",
                    p.burst_density,
                    p.gap_density,
                    p.mean_burst_length,
                    p.mean_gap_length,
                    row.report.meter.mse,
                    row.report.accuracy[0],
                    row.report.accuracy[1],
                    row.report.accuracy[2],
                );
                man.record(&format!("row{i}_mse"), row.report.meter.mse);
                man.record(&format!("row{i}_rmse"), row.report.meter.rmse);
            }
            RowOutcome::Failed { channel, error } => {
                println!(
                    "row {i} ({}/{}/{}/{}): FAILED: {error}",
                    channel.burst_density,
                    channel.gap_density,
                    channel.mean_burst_length,
                    channel.mean_gap_length,
                );
                man.record(&format!("row{i}_error"), error);
            }
        }
    }
    println!("swept {} rows in {:.1} s", report.outcomes.len(), started.elapsed().as_secs_f64());
    println!("csv: {}", args.out.display());
    finish_manifest(man, &cfg, Some(&args.out), "sweep", manifest_to)
}

fn cmd_grad_check(args: GradCheckArgs, manifest_to: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = FileConfig::default();
    let seed = settle_seed(&mut cfg, args.seed);
    let mut man = Manifest::new("teleop-informer grad-check", seed);
    let mut failed: Vec<String> = Vec::new();

    let mut check = |label: String, err: f64, tol: f64, man: &mut Manifest| {
        let ok = err < tol;
        println!(
            "{label:<28} max_rel_err {err:.3e} {}",
            if ok { "ok" } else { "FAIL" }
        );
        man.record(&label.replace([' ', '-'], "_"), err);
        if !ok {
            failed.push(format!("{label} ({err:.3e})"));
        }
    };

    for (name, err) in primitive_gradient_checks(seed) {
        check(format!("primitive {name}"), err, PRIMITIVE_TOL, &mut man);
    }
    if !args.tiny {
        let err = full_loss_grad_check(seed)?;
        check("training loss".to_string(), err, FULL_LOSS_TOL, &mut man);
        for kind in BaselineKind::TRAINABLE {
            let err = baseline_grad_check(kind, seed)?;
            check(format!("baseline {}", kind.name()), err, FULL_LOSS_TOL, &mut man);
        }
    }

    finish_manifest(man, &cfg, None, "grad-check", manifest_to)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(format!(
            "{} checks above tolerance: {}",
            failed.len(),
            failed.join(", ")
        )))
    }
}
