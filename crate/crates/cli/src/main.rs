//! `edr`: command-line driver for the event data recorder.

/// `println!` that exits quietly when stdout is closed (e.g. piped to `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
        }
    }};
}

mod commands;
mod config;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clap::error::ErrorKind;
use edr_core::par::Execution;
use edr_core::pipeline::{PixelMode, ScoreSource};
use edr_core::storage::Policy;
use edr_core::value::NoiseConfig;

use config::CliConfig;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "edr", version, about = "Value-driven event data recorder", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic stream directory (sizes, labels, objects, scores).
    Synth(SynthArgs),
    /// Run the pipeline once; writes the report, tables and persisted store.
    Run(RunArgs),
    /// Priority vs FIFO retention over one stream at several memory limits.
    Compare(CompareArgs),
    /// Sweep hybrid value weights (alpha, beta) over one stream.
    Sweep(SweepArgs),
    /// Fit the quality-to-size model from a directory of sample images.
    CalibratePhi(CalibrateArgs),
    /// Re-derive report tables from a saved run report.
    Report(ReportArgs),
    /// List stored buffers whose tags satisfy a predicate.
    Query(QueryArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Priority,
    Fifo,
    Both,
}

/// A capacity in normalized cost units, or `unlimited`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Limit(Option<f64>);

fn parse_limit(s: &str) -> Result<Limit, String> {
    if s.eq_ignore_ascii_case("unlimited") || s.eq_ignore_ascii_case("none") {
        return Ok(Limit(None));
    }
    match s.parse::<f64>() {
        Ok(m) if m > 0.0 && m.is_finite() => Ok(Limit(Some(m))),
        _ => Err(format!("expected a positive number or 'unlimited', got '{s}'")),
    }
}

fn parse_scores(s: &str) -> Result<ScoreSource, String> {
    s.parse().map_err(|e: edr_core::Error| e.to_string())
}

#[derive(Debug, Args)]
struct StreamFlags {
    /// Structured config file (.toml or .json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Stream directory; a synthetic stream is generated when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the stream generator and synthetic scores.
    #[arg(long)]
    seed: Option<u64>,
    /// Synthetic stream length.
    #[arg(long)]
    frames: Option<usize>,
    /// Synthetic anomalous-frame fraction.
    #[arg(long)]
    anomaly_rate: Option<f64>,
    /// Detector noise level for synthetic scores.
    #[arg(long)]
    noise: Option<f64>,
    /// Storage budget in normalized cost units, or `unlimited`.
    #[arg(long, value_parser = parse_limit)]
    memory_limit: Option<Limit>,
    /// Retention policy.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Anomaly-score weight.
    #[arg(long)]
    alpha: Option<f64>,
    /// Class-score weight.
    #[arg(long)]
    beta: Option<f64>,
    /// Value weight of the quality tradeoff.
    #[arg(long)]
    eta: Option<f64>,
    /// Cost weight of the quality tradeoff.
    #[arg(long)]
    zeta: Option<f64>,
    /// Per-buffer aging rate.
    #[arg(long)]
    lambda: Option<f64>,
    /// Value smoothing width in frames (0 = off).
    #[arg(long)]
    sigma: Option<f64>,
    /// Model compressed sizes (default).
    #[arg(long, conflicts_with = "real_pixels")]
    modeled: bool,
    /// Encode image frames from `<input>/frames`.
    #[arg(long)]
    real_pixels: bool,
    /// gt | synthetic | trace | replay:<path>
    #[arg(long, value_parser = parse_scores)]
    scores: Option<ScoreSource>,
    /// One thread per pipeline stage.
    #[arg(long)]
    threaded: bool,
    /// Disable data parallelism in batch work.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    anomaly_rate: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    stream: StreamFlags,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    stream: StreamFlags,
    /// Comma-separated memory limits; defaults to fractions of the total
    /// compressed cost.
    #[arg(long, value_delimiter = ',')]
    limits: Vec<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    stream: StreamFlags,
    /// Semicolon-separated `alpha,beta` pairs, e.g. `1,0;0,1;0.5,0.5`.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of sample images.
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated codec qualities to measure.
    #[arg(long, value_delimiter = ',')]
    qualities: Vec<u8>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Saved `report.json`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// Persisted store directory.
    #[arg(long)]
    store: PathBuf,
    /// e.g. `class=OC & max_anomaly>0.8`
    predicate: String,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub trait Phase<T> {
    /// Failure caused by bad inputs or configuration.
    fn input(self) -> Result<T, Failure>;
    /// Failure while executing; library input errors still map to exit 2.
    fn runtime(self) -> Result<T, Failure>;
}

fn input_like(e: &anyhow::Error) -> bool {
    use edr_core::Error as E;
    e.chain().any(|c| {
        matches!(
            c.downcast_ref::<E>(),
            Some(
                E::Parse { .. }
                    | E::Io { .. }
                    | E::Misaligned { .. }
                    | E::InvalidFrame { .. }
                    | E::DegenerateScores(_)
                    | E::InvalidParam(_)
                    | E::CorruptManifest { .. }
                    | E::Json(_)
            )
        )
    })
}

impl<T, E: Into<anyhow::Error>> Phase<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: EXIT_INPUT,
            error: e.into(),
        })
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| {
            let error = e.into();
            let code = if input_like(&error) { EXIT_INPUT } else { EXIT_RUNTIME };
            Failure { code, error }
        })
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<CliConfig, Failure> {
    match path {
        Some(p) => CliConfig::load(p).input(),
        None => Ok(CliConfig::default()),
    }
}

fn apply_synth_overrides(cfg: &mut CliConfig, seed: Option<u64>, frames: Option<usize>, rate: Option<f64>, noise: Option<f64>) {
    if let Some(s) = seed {
        cfg.synth.seed = s;
        cfg.run.seed = s;
    }
    if let Some(n) = frames {
        cfg.synth.frames = n;
    }
    if let Some(r) = rate {
        cfg.synth.anomaly_rate = r;
    }
    if let Some(n) = noise {
        cfg.synth.noise = NoiseConfig::uniform(n);
        cfg.run.noise = NoiseConfig::uniform(n);
    }
}

/// Config file first, then command-line overrides.
fn effective_config(f: &StreamFlags) -> Result<CliConfig, Failure> {
    let mut cfg = load_config(f.config.as_ref())?;
    apply_synth_overrides(&mut cfg, f.seed, f.frames, f.anomaly_rate, f.noise);
    let run = &mut cfg.run;
    if let Some(Limit(m)) = f.memory_limit {
        run.capacity = m;
    }
    match f.mode {
        Some(Mode::Priority) => run.policy = Policy::Priority,
        Some(Mode::Fifo) => run.policy = Policy::Fifo,
        Some(Mode::Both) | None => {}
    }
    if let Some(a) = f.alpha {
        run.value.alpha = a;
    }
    if let Some(b) = f.beta {
        run.value.beta = b;
    }
    if let Some(e) = f.eta {
        run.lbo.eta = e;
    }
    if let Some(z) = f.zeta {
        run.lbo.zeta = z;
    }
    if let Some(l) = f.lambda {
        run.lambda = l;
    }
    if let Some(s) = f.sigma {
        run.sigma = s;
    }
    if f.modeled {
        run.pixels = PixelMode::Modeled;
    }
    if f.real_pixels {
        run.pixels = PixelMode::Real;
    }
    if let Some(s) = &f.scores {
        run.scores = s.clone();
    }
    if f.threaded {
        run.threaded = true;
    }
    if f.sequential {
        run.execution = Execution::Sequential;
    }
    cfg.validate().input()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(a) => {
            let mut cfg = load_config(a.config.as_ref())?;
            apply_synth_overrides(&mut cfg, a.seed, a.frames, a.anomaly_rate, a.noise);
            cfg.validate().input()?;
            commands::synth(&cfg, &a.out)
        }
        Command::Run(a) => {
            if a.stream.mode == Some(Mode::Both) {
                return Err(Failure {
                    code: EXIT_USAGE,
                    error: anyhow::anyhow!("--mode both is only meaningful for `compare`"),
                });
            }
            commands::run(&effective_config(&a.stream)?, a.stream.input.as_deref(), &a.stream.out)
        }
        Command::Compare(a) => {
            let cfg = effective_config(&a.stream)?;
            let policies = match a.stream.mode.unwrap_or(Mode::Both) {
                Mode::Both => (Policy::Priority, Policy::Fifo),
                Mode::Priority => (Policy::Priority, Policy::Priority),
                Mode::Fifo => (Policy::Fifo, Policy::Fifo),
            };
            let limits = (!a.limits.is_empty()).then_some(a.limits);
            commands::compare(&cfg, a.stream.input.as_deref(), &a.stream.out, policies, limits)
        }
        Command::Sweep(a) => {
            let mut cfg = effective_config(&a.stream)?;
            if let Some(g) = &a.grid {
                cfg.sweep.grid = commands::parse_grid(g).map_err(|error| Failure { code: EXIT_USAGE, error })?;
            }
            commands::sweep(&cfg, a.stream.input.as_deref(), &a.stream.out)
        }
        Command::CalibratePhi(a) => {
            let cfg = load_config(a.config.as_ref())?;
            commands::calibrate_phi(&cfg, &a.images, &a.out, &a.qualities)
        }
        Command::Report(a) => {
            let mut cfg = load_config(a.config.as_ref())?;
            if let Some(b) = a.bins {
                cfg.report.bins = b;
            }
            cfg.validate().input()?;
            commands::report(&cfg, &a.input, &a.out)
        }
        Command::Query(a) => commands::query(&a.store, &a.predicate),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("edr: error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
