//! Command-line front end for the RRAM crossbar simulator.
//!
//! Every command returns a [`Report`]: plain text for the terminal and a
//! JSON value for `--report-json`. Failures map to fixed exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | other failure (including a failed self-check) |
//! | 2 | bad arguments or invalid input values |
//! | 3 | I/O error or malformed file |
//! | 4 | crossbar in the wrong mode, or missing entropy / enrollment / weights |
//! | 5 | integrity check failed (wrong device or tampered bundle) |

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rram_core::Error;

pub mod commands;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_MODE: i32 = 4;
pub const EXIT_INTEGRITY: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "rram", version, about = "RRAM crossbar simulator: VMM, TRNG, PUF and PUF-locked weights")]
pub struct Cli {
    /// Root seed for every random stream in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Calibration profile: `paper-2023`, `ideal`, or a TOML file.
    #[arg(long, global = true, default_value = "paper-2023")]
    pub profile: String,
    /// Relative read-noise sigma applied to every conductance read.
    #[arg(long, global = true, default_value_t = 0.0)]
    pub noise: f64,
    /// Also write the report as JSON to this path.
    #[arg(long, global = true, value_name = "PATH")]
    pub report_json: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Program the 4x4 worked example on ideal devices and check [5, 12, 3, 7].
    DemoEq1,
    /// Random bit generation.
    #[command(subcommand)]
    Trng(TrngCmd),
    /// Physical unclonable function enrollment, evaluation and metrics.
    #[command(subcommand)]
    Puf(PufCmd),
    /// Weight programming and vector-matrix multiplication.
    #[command(subcommand)]
    Vmm(VmmCmd),
    /// Encrypt a weight matrix under a key derived from a crossbar's PUF.
    Lock(LockArgs),
    /// Re-derive the key on a crossbar and program the decrypted weights.
    Unlock(UnlockArgs),
    /// Create and inspect crossbar files.
    #[command(subcommand)]
    Xbar(XbarCmd),
}

/// Where a changed crossbar goes. Without either flag nothing is written back.
#[derive(Debug, Clone, Default, Args)]
pub struct Persist {
    /// Write the updated crossbar to this file.
    #[arg(long, value_name = "PATH", conflicts_with = "in_place")]
    pub xbar_out: Option<PathBuf>,
    /// Overwrite the input crossbar file.
    #[arg(long)]
    pub in_place: bool,
}

#[derive(Debug, Subcommand)]
pub enum TrngCmd {
    /// Harvest bits; writes packed bytes to --out plus `<out>.txt` and `<out>.json` reports.
    Gen(TrngGenArgs),
}

#[derive(Debug, Args)]
pub struct TrngGenArgs {
    #[arg(long)]
    pub xbar: PathBuf,
    #[arg(long)]
    pub bits: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// XOR this many raw bits into each output bit.
    #[arg(long, default_value_t = 1)]
    pub fold: usize,
    #[command(flatten)]
    pub persist: Persist,
}

#[derive(Debug, Subcommand)]
pub enum PufCmd {
    /// Write the entropy pattern, calibrate references and record CRPs.
    Enroll(PufEnrollArgs),
    /// Evaluate challenges on an enrolled crossbar.
    Eval(PufEvalArgs),
    /// Reliability, uniqueness, uniformity and bit-aliasing over a population.
    Metrics(PufMetricsArgs),
}

#[derive(Debug, Args)]
pub struct PufEnrollArgs {
    #[arg(long)]
    pub xbar: PathBuf,
    #[arg(long, default_value = "device-0")]
    pub device_id: String,
    /// CRP store to append the enrollment to.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Number of random balanced challenges to record.
    #[arg(long, default_value_t = 16)]
    pub challenges: usize,
    #[arg(long, default_value_t = rram_core::puf::DEFAULT_REFERENCE_SAMPLES)]
    pub reference_samples: usize,
    /// Enrollment time in unix seconds; defaults to now.
    #[arg(long)]
    pub timestamp: Option<u64>,
    #[command(flatten)]
    pub persist: Persist,
}

#[derive(Debug, Args)]
pub struct PufEvalArgs {
    #[arg(long)]
    pub xbar: PathBuf,
    /// Challenge as a row bit string such as `1010`; repeatable.
    #[arg(long = "challenge")]
    pub challenges: Vec<String>,
    /// Evaluate every CRP stored for --device-id and count differing bits.
    #[arg(long, requires = "device_id")]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub device_id: Option<String>,
    /// Random balanced challenges to add.
    #[arg(long, default_value_t = 0)]
    pub random: usize,
    #[command(flatten)]
    pub persist: Persist,
}

#[derive(Debug, Args)]
pub struct PufMetricsArgs {
    /// Directory of enrolled `.xbar` files; otherwise a population is generated.
    #[arg(long)]
    pub population: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub size: usize,
    #[arg(long, default_value_t = 16)]
    pub rows: usize,
    #[arg(long, default_value_t = 16)]
    pub cols: usize,
    #[arg(long, default_value_t = 100)]
    pub challenges: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdcMode {
    /// Bits for the largest possible dot product.
    Exact,
    /// ceil(log2(w * rows)) bits.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReadoutArg {
    Ideal,
    /// Full resistive network with every row driven and every column grounded.
    NodalGrounded,
    /// Full resistive network with 0 V rows floating.
    NodalFloating,
}

#[derive(Debug, Subcommand)]
pub enum VmmCmd {
    /// Program a weight CSV onto the crossbar.
    Program(VmmProgramArgs),
    /// Apply an input vector and decode the column outputs.
    Run(VmmRunArgs),
}

#[derive(Debug, Args)]
pub struct VmmProgramArgs {
    #[arg(long)]
    pub xbar: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[command(flatten)]
    pub persist: Persist,
}

#[derive(Debug, Args)]
pub struct VmmRunArgs {
    #[arg(long)]
    pub xbar: PathBuf,
    /// Program these weights first; otherwise use the ones already on the crossbar.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Comma-separated input codes, one per row.
    #[arg(long)]
    pub input: String,
    #[arg(long, default_value_t = 2)]
    pub input_bits: u32,
    #[arg(long, value_enum, default_value_t = AdcMode::Exact)]
    pub adc: AdcMode,
    #[arg(long, value_enum, default_value_t = ReadoutArg::Ideal)]
    pub readout: ReadoutArg,
    #[command(flatten)]
    pub persist: Persist,
}

#[derive(Debug, Args)]
pub struct LockArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub xbar: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = rram_core::locking::DEFAULT_KEY_BITS)]
    pub key_bits: usize,
    #[arg(long, default_value_t = rram_core::puf::DEFAULT_REFERENCE_SAMPLES)]
    pub reference_samples: usize,
    #[arg(long, default_value = "device-0")]
    pub device_id: String,
    /// CRP store that receives the enrollment record.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub timestamp: Option<u64>,
    #[command(flatten)]
    pub persist: Persist,
}

#[derive(Debug, Args)]
pub struct UnlockArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub xbar: PathBuf,
    /// Write the recovered weights as CSV.
    #[arg(long)]
    pub weights_out: Option<PathBuf>,
    #[arg(long, default_value_t = rram_core::puf::DEFAULT_REFERENCE_SAMPLES)]
    pub reference_samples: usize,
    /// Compare the rewritten entropy pattern with the one enrolled in this store.
    #[arg(long, requires = "device_id")]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub device_id: Option<String>,
    #[command(flatten)]
    pub persist: Persist,
}

#[derive(Debug, Subcommand)]
pub enum XbarCmd {
    /// Sample a fresh crossbar from the profile under --seed.
    New(XbarNewArgs),
    /// Summarize a crossbar file.
    Inspect(XbarInspectArgs),
}

#[derive(Debug, Args)]
pub struct XbarNewArgs {
    #[arg(long)]
    pub rows: usize,
    #[arg(long)]
    pub cols: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = rram_core::crossbar::DEFAULT_LINE_RESISTANCE)]
    pub line_resistance: f64,
    /// Write the JSON form instead of the binary one.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct XbarInspectArgs {
    #[arg(long)]
    pub xbar: PathBuf,
    /// Also export the full state as JSON.
    #[arg(long)]
    pub export_json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub json: serde_json::Value,
    /// The command ran but its own check failed; exits with code 1.
    pub check_failed: bool,
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                Error::Io(_) | Error::Format(_) => EXIT_IO,
                Error::ModeMisuse { .. }
                | Error::DeviceModeMisuse(_)
                | Error::EntropyUninitialized
                | Error::NotEnrolled
                | Error::NotProgrammed
                | Error::NeedsSet { .. } => EXIT_MODE,
                Error::IntegrityFailure => EXIT_INTEGRITY,
                Error::InvalidArgument(_)
                | Error::DimensionMismatch { .. }
                | Error::CodeOutOfRange { .. }
                | Error::LevelOutOfRange { .. }
                | Error::InvalidCalibration(_)
                | Error::OverlappingRanges { .. }
                | Error::InsufficientPopulation(_)
                | Error::InsufficientEntropy { .. } => EXIT_USAGE,
                _ => EXIT_FAILURE,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Run one parsed command. Writes `--report-json` on success.
pub fn run(cli: &Cli) -> CliResult<Report> {
    let report = commands::dispatch(cli)?;
    if let Some(path) = &cli.report_json {
        std::fs::write(path, json_text(&report.json))?;
    }
    Ok(report)
}

pub fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Parse, run and print; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(r) => {
            print!("{}", r.text);
            if r.check_failed {
                EXIT_FAILURE
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
