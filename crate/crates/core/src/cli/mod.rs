//! The `cortexforge` command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 input format, 4 geometry or topology,
//! 5 internal error.

mod commands;
mod config;
mod provenance;

use std::ffi::OsString;
use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{morphometry, reconstruct, Reconstruction};
pub use config::{PipelineConfig, Side};
pub use provenance::{sha256_hex, FileDigest, Provenance};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_GEOMETRY: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

pub const THREADS_ENV: &str = "CORTEXFORGE_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e {
                Error::Argument(_) => EXIT_USAGE,
                Error::Io(_) | Error::Format(_) | Error::Capability(_) | Error::Range(_) | Error::Mapping(_) | Error::Json(_) => EXIT_FORMAT,
                Error::Topology(_) | Error::Geometry(_) | Error::EmptySurface | Error::CorrectionFailed { .. } => EXIT_GEOMETRY,
                Error::Undefined(_) => EXIT_INTERNAL,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches a stage name to core errors.
pub(crate) trait Context<T> {
    fn context(self, what: &str) -> CliResult<T>;
}

impl<T> Context<T> for crate::error::Result<T> {
    fn context(self, what: &str) -> CliResult<T> {
        self.map_err(|e| {
            let e = match e {
                Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{what}: {io}"))),
                Error::Format(m) => Error::Format(format!("{what}: {m}")),
                Error::Capability(m) => Error::Capability(format!("{what}: {m}")),
                Error::Range(m) => Error::Range(format!("{what}: {m}")),
                Error::Argument(m) => Error::Argument(format!("{what}: {m}")),
                Error::Topology(m) => Error::Topology(format!("{what}: {m}")),
                Error::Geometry(m) => Error::Geometry(format!("{what}: {m}")),
                Error::Mapping(m) => Error::Mapping(format!("{what}: {m}")),
                Error::Undefined(m) => Error::Undefined(format!("{what}: {m}")),
                other => other,
            };
            CliError::Core(e)
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "cortexforge", version, about = "SDF-based cortical surface reconstruction toolkit")]
pub struct Cli {
    /// Worker threads (default: $CORTEXFORGE_THREADS, else 1).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic image and ground-truth SDFs from a label volume and surfaces.
    Synth(SynthArgs),
    /// Reconstruct white and pial surfaces from SDFs, or from meshes in oracle mode.
    Recon(ReconArgs),
    /// Surface area, gray-matter volume and thickness per region.
    Morph(MorphArgs),
    /// Compare surfaces, labels and measurement series against references.
    Eval(EvalArgs),
    /// Reconstruction plus morphometry laid out as a subject directory.
    Pipeline(PipelineArgs),
    /// Write the deformed-sphere phantom: labels, schema, surfaces and SDFs.
    Phantom(PhantomArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Label volume (NIfTI).
    #[arg(long)]
    pub input: PathBuf,
    /// White surface (OFF) in world coordinates.
    #[arg(long)]
    pub white: PathBuf,
    /// Pial surface (OFF) in world coordinates.
    #[arg(long)]
    pub pial: PathBuf,
    /// Label schema (JSON).
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value = "subject")]
    pub subject: String,
}

#[derive(Debug, Args)]
pub struct ReconArgs {
    /// Prefix of `<prefix>.<hemi>.white.sdf.nii` and `<prefix>.<hemi>.pial.sdf.nii`
    /// (or `<prefix>.white.sdf.nii` for a single side).
    #[arg(long, conflicts_with_all = ["white_sdf", "pial_sdf", "white_mesh", "pial_mesh"])]
    pub input: Option<String>,
    #[arg(long)]
    pub white_sdf: Option<PathBuf>,
    #[arg(long)]
    pub pial_sdf: Option<PathBuf>,
    /// Oracle mode: ground-truth white surface (OFF).
    #[arg(long, conflicts_with_all = ["white_sdf", "pial_sdf"])]
    pub white_mesh: Option<PathBuf>,
    /// Oracle mode: ground-truth pial surface (OFF).
    #[arg(long)]
    pub pial_mesh: Option<PathBuf>,
    /// Oracle-mode voxel size (mm).
    #[arg(long, default_value_t = 1.0)]
    pub voxel_size: f64,
    /// Oracle-mode cubic lattice size, centred on the surfaces.
    #[arg(long)]
    pub grid_dims: Option<usize>,
    #[arg(long, value_enum)]
    pub side: Option<Side>,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value = "subject")]
    pub subject: String,
}

#[derive(Debug, Args)]
pub struct MorphArgs {
    #[arg(long)]
    pub white: PathBuf,
    #[arg(long)]
    pub pial: PathBuf,
    /// Vertex labels as a `vertex,label` CSV.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Label table (JSON) mapping labels to lobes; defaults to Desikan-Killiany.
    #[arg(long)]
    pub label_table: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub side: Option<Side>,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value = "subject")]
    pub subject: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, requires = "ref_white")]
    pub white: Option<PathBuf>,
    #[arg(long, requires = "white")]
    pub ref_white: Option<PathBuf>,
    #[arg(long, requires = "ref_pial")]
    pub pial: Option<PathBuf>,
    #[arg(long, requires = "pial")]
    pub ref_pial: Option<PathBuf>,
    /// Predicted labels: a `vertex,label` CSV or a NIfTI label volume.
    #[arg(long, requires = "ref_labels")]
    pub labels: Option<PathBuf>,
    #[arg(long, requires = "labels")]
    pub ref_labels: Option<PathBuf>,
    /// Paired measurements as a `measure,reference,estimate` CSV.
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "point-to-surface")]
    pub distance: DistanceArg,
    /// Also write a flattened `metric,key,value` CSV.
    #[arg(long)]
    pub csv: bool,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value = "subject")]
    pub subject: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DistanceArg {
    PointToSurface,
    VertexToVertex,
}

/// Flags follow the single-dash style of the original tool: `-i`, `-subjid`,
/// `-side`, `-threads`, `-sd`.
#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// SDF prefix: `<i>.<hemi>.{white,pial}.sdf.nii`.
    #[arg(short = 'i', long = "input")]
    pub input: String,
    #[arg(long)]
    pub subjid: String,
    #[arg(long, value_enum)]
    pub side: Option<Side>,
    /// Subjects directory.
    #[arg(long)]
    pub sd: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value_t = 1.0)]
    pub voxel_size: f64,
    /// Cubic lattice size; by default the phantom plus a margin.
    #[arg(long)]
    pub grid_dims: Option<usize>,
    /// Peak radial perturbation (mm).
    #[arg(long, default_value_t = 1.5)]
    pub amplitude: f64,
    /// Icosphere subdivision level of the written surfaces.
    #[arg(long, default_value_t = 6)]
    pub level: u32,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value = "phantom")]
    pub subject: String,
}

/// Rewrites the single-dash long flags accepted by `pipeline` to clap's double-dash form.
fn normalize_args<I, T>(args: I) -> Vec<OsString>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    args.into_iter()
        .map(|a| {
            let a: OsString = a.into();
            match a.to_str() {
                Some("-subjid" | "-side" | "-threads" | "-sd" | "-seed") => {
                    let mut s = OsString::from("-");
                    s.push(&a);
                    s
                }
                _ => a,
            }
        })
        .collect()
}

fn resolve_threads(flag: Option<usize>, config: Option<usize>) -> CliResult<usize> {
    let n = match flag.or(config) {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(CliError::Usage("thread count must be at least 1".into()));
    }
    Ok(n)
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cli = match Cli::try_parse_from(normalize_args(args)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| execute(cli))) {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            eprintln!("cortexforge: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("cortexforge: internal error");
            EXIT_INTERNAL
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => {
            commands::require_file(p, "config")?;
            PipelineConfig::load(p).context("config")?
        }
        None => PipelineConfig::default(),
    };
    let threads = resolve_threads(cli.threads, config.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Core(Error::Undefined(format!("thread pool: {e}"))))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => commands::synth(&a, &config),
        Command::Recon(a) => commands::recon(&a, &config),
        Command::Morph(a) => commands::morph(&a, &config),
        Command::Eval(a) => commands::eval(&a, &config),
        Command::Pipeline(a) => commands::pipeline(&a, &config),
        Command::Phantom(a) => commands::phantom(&a, &config),
    })
}
