//! Command-line experiment runner. Every subcommand is deterministic given
//! `--seed` and its flags, and every file it writes starts with a header
//! recording both.

mod commands;
mod output;
mod svg;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;

pub use output::Output;
pub use svg::curves_svg;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_INVALID_PARAMETER: i32 = 2;
pub const EXIT_MISSING_FILE: i32 = 3;
pub const EXIT_BAD_CHECKPOINT: i32 = 4;
pub const EXIT_ASSERTION: i32 = 5;
pub const EXIT_BAD_DATA: i32 = 6;

/// Environment variable consulted when `--data-dir` is absent.
pub const DATA_DIR_ENV: &str = "ATTRSTRESS_MNIST_DIR";

#[derive(Debug, Parser)]
#[command(name = "attrstress", version, about = "Stress tests for attribution evaluation metrics", args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Directory with the MNIST IDX files (plain or gzipped).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,

    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Added to every raw pixel before it reaches a model.
    #[arg(long, global = true, default_value_t = 0.1)]
    pub offset: f64,

    /// TOML file of flag defaults: top-level keys for every command, a
    /// `[command-name]` table for one command.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data/mnist"))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the L1-regularised linear classifier.
    TrainSparse(commands::TrainSparseArgs),
    /// Fit the small convolutional net.
    TrainConvnet(commands::TrainConvnetArgs),
    /// Write bounding boxes for a split.
    Annotate(commands::AnnotateArgs),
    /// Pointing Game ratios for a set of attribution methods.
    PointingGame(commands::PointingGameArgs),
    /// Shift the corner weight of a linear model and re-score.
    Manipulate(commands::ManipulateArgs),
    /// Pixel Flipping curves.
    Flipping(commands::FlippingArgs),
    /// Pixel Flipping restricted to random subsets of a reference top-N.
    ReferenceFlipping(commands::ReferenceFlippingArgs),
    /// Sign-gradient attack or enhancement.
    Pgd(commands::PgdArgs),
    /// Dice overlap statistics for random index subsets.
    Prop1(commands::Prop1Args),
    /// The two-feature linear counterexample for accuracy-based flipping.
    Counterexample(commands::CounterexampleArgs),
    /// Export one attribution map as CSV and PGM.
    Explain(commands::ExplainArgs),
}

impl Command {
    pub const NAMES: [&'static str; 11] = [
        "train-sparse",
        "train-convnet",
        "annotate",
        "pointing-game",
        "manipulate",
        "flipping",
        "reference-flipping",
        "pgd",
        "prop1",
        "counterexample",
        "explain",
    ];

    pub fn name(&self) -> &'static str {
        let i = match self {
            Command::TrainSparse(_) => 0,
            Command::TrainConvnet(_) => 1,
            Command::Annotate(_) => 2,
            Command::PointingGame(_) => 3,
            Command::Manipulate(_) => 4,
            Command::Flipping(_) => 5,
            Command::ReferenceFlipping(_) => 6,
            Command::Pgd(_) => 7,
            Command::Prop1(_) => 8,
            Command::Counterexample(_) => 9,
            Command::Explain(_) => 10,
        };
        Self::NAMES[i]
    }
}

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    /// A checked invariant did not hold.
    Assertion { invariant: String, detail: String },
    Config(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Assertion { invariant, detail } => write!(f, "invariant `{invariant}` violated: {detail}"),
            CliError::Config(m) => write!(f, "config: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Assertion { .. } => EXIT_ASSERTION,
            CliError::Config(_) => EXIT_INVALID_PARAMETER,
            CliError::Lib(e) => match e {
                Error::InvalidParameter { .. }
                | Error::ClassOutOfRange { .. }
                | Error::UnsupportedModel { .. }
                | Error::Overflow { .. }
                | Error::Dimension { .. } => EXIT_INVALID_PARAMETER,
                Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING_FILE,
                Error::Checkpoint(_) => EXIT_BAD_CHECKPOINT,
                Error::Parse { .. } | Error::Annotation(_) => EXIT_BAD_DATA,
                _ => EXIT_OTHER,
            },
        }
    }
}

pub(crate) fn assert_that(ok: bool, invariant: &str, detail: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Assertion {
            invariant: invariant.to_string(),
            detail: detail(),
        })
    }
}

fn toml_to_flags(table: &toml::Table, given: &[String], out: &mut Vec<OsString>) -> Result<(), CliError> {
    for (key, value) in table {
        if value.is_table() || given.iter().any(|g| g == key) {
            continue;
        }
        let flag = OsString::from(format!("--{key}"));
        let text = match value {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(true) => {
                out.push(flag);
                continue;
            }
            toml::Value::Boolean(false) => continue,
            toml::Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => return Err(CliError::Config(format!("unsupported value for `{key}`: {other}"))),
        };
        out.push(flag);
        out.push(OsString::from(text));
    }
    Ok(())
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Splices config-file flags in right after the subcommand name, skipping
/// any flag that also appears on the command line.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Lib(Error::io(&path, e)))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let Some(pos) = args
        .iter()
        .position(|a| Command::NAMES.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(args);
    };
    let command = args[pos].to_string_lossy().into_owned();
    let given: Vec<String> = args
        .iter()
        .filter_map(|a| {
            let a = a.to_string_lossy();
            a.strip_prefix("--").map(|f| f.split('=').next().unwrap_or_default().to_string())
        })
        .collect();
    let mut injected = Vec::new();
    toml_to_flags(&table, &given, &mut injected)?;
    if let Some(section) = table.get(&command) {
        let section = section
            .as_table()
            .ok_or_else(|| CliError::Config(format!("`{command}` must be a table")))?;
        toml_to_flags(section, &given, &mut injected)?;
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

/// Parses and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_PARAMETER } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Lib(Error::io(dir, e)))
}
