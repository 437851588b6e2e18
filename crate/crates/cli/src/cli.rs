//! Argument parsing and dispatch. Flags override values from `--config`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sigverify_core::eval::ReportFormat;
use sigverify_core::render::ScaleMode;
use sigverify_core::vlm::{LiveConfig, MockScript};

use crate::commands;
use crate::config::{RunConfig, TransportConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sigverify", version, about = "Zero-shot online signature verification with vision-language models")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic signature dataset and protocol file
    Synth(SynthArgs),
    /// Render every referenced signature to PNG
    Render(RenderArgs),
    /// Query the model for every pair and write scores.csv
    Run(RunArgs),
    /// Score every pair with the DTW baseline
    Dtw(DtwArgs),
    /// Compute EER/DET reports from score files
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML run configuration
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Protocol file listing comparison pairs
    #[arg(long, value_name = "PATH")]
    pub protocol: Option<PathBuf>,
    /// Directory holding the signature files
    #[arg(long, value_name = "DIR")]
    pub signatures: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Genuine signatures per subject
    #[arg(long)]
    pub genuine: Option<usize>,
    /// Skilled forgeries per subject
    #[arg(long)]
    pub skilled: Option<usize>,
    /// Dataset directory to write
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    PerSignature,
    SharedPair,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Canvas side length in pixels
    #[arg(long)]
    pub canvas: Option<u32>,
    #[arg(long)]
    pub antialias: bool,
    #[arg(long, value_enum)]
    pub scale: Option<ScaleArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportKind {
    Mock,
    Replay,
    Live,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long, value_enum)]
    pub transport: Option<TransportKind>,
    /// Cassette to replay (with --transport replay) or record into (live)
    #[arg(long, value_name = "PATH")]
    pub cassette: Option<PathBuf>,
    /// Seed of the mock transport
    #[arg(long)]
    pub mock_seed: Option<u64>,
    /// Chat-completions endpoint for the live transport
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Concurrent comparisons
    #[arg(long)]
    pub workers: Option<usize>,
    /// Do not request token log-probabilities
    #[arg(long)]
    pub no_logprobs: bool,
}

#[derive(Debug, Args)]
pub struct DtwArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Sakoe-Chiba band half-width
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
    Md,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Score CSV file; repeat to merge channels from several files
    #[arg(long = "scores", value_name = "PATH")]
    pub scores: Vec<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub protocol: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Report formats to write (default: all)
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Vec<FormatArg>,
    /// Channels to report, comma separated
    #[arg(long, value_delimiter = ',')]
    pub channels: Vec<String>,
}

fn base_config(arg: &ConfigArg) -> Result<RunConfig, CliError> {
    match &arg.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

fn apply_dataset(cfg: &mut RunConfig, d: &DatasetArgs) {
    if let Some(p) = &d.protocol {
        cfg.dataset.protocol = p.clone();
    }
    if let Some(p) = &d.signatures {
        cfg.dataset.signatures = p.clone();
    }
    if let Some(p) = &d.out {
        cfg.output_dir = p.clone();
    }
}

fn apply_transport(cfg: &mut RunConfig, a: &RunArgs) -> Result<(), CliError> {
    let current = match &cfg.transport {
        TransportConfig::Mock { .. } => TransportKind::Mock,
        TransportConfig::Replay { .. } => TransportKind::Replay,
        TransportConfig::Live { .. } => TransportKind::Live,
    };
    let kind = a.transport.unwrap_or(current);
    if kind != current {
        cfg.transport = match kind {
            TransportKind::Mock => TransportConfig::default(),
            TransportKind::Replay => TransportConfig::Replay {
                cassette: a.cassette.clone().ok_or_else(|| CliError::usage("--transport replay needs --cassette"))?,
            },
            TransportKind::Live => TransportConfig::Live {
                api: LiveConfig::default(),
                record: None,
            },
        };
    }
    match &mut cfg.transport {
        TransportConfig::Mock { script, .. } => {
            if let Some(s) = a.mock_seed {
                match script {
                    MockScript::Seeded { seed, .. } => *seed = s,
                    MockScript::Fixed { .. } => return Err(CliError::usage("--mock-seed needs a seeded mock script")),
                }
            }
        }
        TransportConfig::Replay { cassette } => {
            if let Some(c) = &a.cassette {
                *cassette = c.clone();
            }
        }
        TransportConfig::Live { api, record } => {
            if let Some(e) = &a.endpoint {
                api.endpoint = e.clone();
            }
            if let Some(m) = &a.model {
                api.model = m.clone();
            }
            if a.cassette.is_some() {
                *record = a.cassette.clone();
            }
        }
    }
    Ok(())
}

fn ready(cfg: RunConfig) -> Result<RunConfig, CliError> {
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string(v).expect("summaries serialize"));
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => {
            let mut cfg = base_config(&a.config)?;
            let s = &mut cfg.synth;
            s.seed = a.seed.unwrap_or(s.seed);
            s.subjects = a.subjects.unwrap_or(s.subjects);
            s.genuine = a.genuine.unwrap_or(s.genuine);
            s.skilled = a.skilled.unwrap_or(s.skilled);
            if let Some(o) = a.out {
                s.out_dir = o;
            }
            let cfg = ready(cfg)?;
            print_json(&commands::synth::synth(&cfg.synth, &cfg.dataset.schema)?);
        }
        Command::Render(a) => {
            let mut cfg = base_config(&a.config)?;
            apply_dataset(&mut cfg, &a.dataset);
            if let Some(c) = a.canvas {
                cfg.render.canvas_px = c;
            }
            cfg.render.antialias |= a.antialias;
            match a.scale {
                Some(ScaleArg::PerSignature) => cfg.render.scale_mode = ScaleMode::PerSignature,
                Some(ScaleArg::SharedPair) => cfg.render.scale_mode = ScaleMode::SharedPair,
                None => {}
            }
            let cfg = ready(cfg)?;
            print_json(&commands::render::render(&cfg)?);
        }
        Command::Run(a) => {
            let mut cfg = base_config(&a.config)?;
            apply_dataset(&mut cfg, &a.dataset);
            apply_transport(&mut cfg, &a)?;
            if let Some(w) = a.workers {
                cfg.run.workers = w;
            }
            if a.no_logprobs {
                cfg.prompt.want_logprobs = false;
            }
            let cfg = ready(cfg)?;
            print_json(&commands::run::run(&cfg)?);
        }
        Command::Dtw(a) => {
            let mut cfg = base_config(&a.config)?;
            apply_dataset(&mut cfg, &a.dataset);
            if a.window.is_some() {
                cfg.dtw.window = a.window;
            }
            let cfg = ready(cfg)?;
            print_json(&commands::dtw::dtw(&cfg)?);
        }
        Command::Eval(a) => {
            let mut cfg = base_config(&a.config)?;
            if let Some(p) = a.protocol {
                cfg.dataset.protocol = p;
            }
            if let Some(o) = a.out {
                cfg.output_dir = o;
            }
            if !a.format.is_empty() {
                cfg.eval.formats = a
                    .format
                    .iter()
                    .map(|f| match f {
                        FormatArg::Csv => ReportFormat::Csv,
                        FormatArg::Json => ReportFormat::Json,
                        FormatArg::Md => ReportFormat::Markdown,
                    })
                    .collect();
            }
            if !a.channels.is_empty() {
                cfg.eval.channels = Some(a.channels);
            }
            let cfg = ready(cfg)?;
            let report = commands::eval::eval(&cfg, &a.scores)?;
            print!("{}", commands::eval::markdown(&report));
        }
    }
    Ok(())
}

/// Parse `args`, run the command and return the process exit status.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
