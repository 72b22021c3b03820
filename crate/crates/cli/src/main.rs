//! Command-line runner for reduced-precision Mondrian Forest experiments.
//!
//! `run` executes a sweep over instrumentation modes, formats, forest sizes,
//! memory budgets and stream orderings and writes one CSV row per checkpoint.
//! `compare` pairs a reduced-precision report with a baseline report and
//! writes the F1 differences.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use mondrian_vprec::eval::{read_report_csv, write_report_csv, F1Average, PrequentialOptions, Scoring};
use mondrian_vprec::stream::DEFAULT_WINDOW;
use mondrian_vprec::sweep::{
    compare, pivot_table, run_sweep, write_cell_deltas, write_summaries, CompareOptions, DataSource, Schema,
    SweepError, SweepSpec, DEFAULT_ORDERINGS,
};
use mondrian_vprec::{ModeKind, StorageModel, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "mondrian-vprec",
    version,
    about = "Reduced-precision Mondrian Forest experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write the per-checkpoint F1 report.
    Run(RunArgs),
    /// Compute F1 differences between a reduced-precision and a baseline report.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaArg {
    Raw,
    Featurized,
}

#[derive(Clone, Copy, ValueEnum)]
enum F1Arg {
    Macro,
    Micro,
}

#[derive(Clone, Copy, ValueEnum)]
enum StorageArg {
    Working,
    Packed,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset CSV with a `label` column.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    dataset: Option<PathBuf>,
    /// Use a synthetic Gaussian-blob stream instead of a dataset.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 10, requires = "synthetic")]
    classes: usize,
    #[arg(long, default_value_t = 12, requires = "synthetic")]
    features: usize,
    #[arg(long, default_value_t = 5_000, requires = "synthetic")]
    samples: usize,
    /// Distance between class means in units of the blob standard deviation.
    #[arg(long, default_value_t = 6.0, requires = "synthetic")]
    separation: f64,
    /// `raw` rows are sensor readings featurized per window; `featurized`
    /// rows are feature vectors.
    #[arg(long, value_enum, default_value = "featurized")]
    schema: SchemaArg,
    /// Readings per window for the raw schema.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    /// Raw columns to featurize (default: every non-label column).
    #[arg(long, value_delimiter = ',')]
    axes: Option<Vec<String>>,
    /// CSV `old_label,new_label` remapping labels before featurizing.
    #[arg(long)]
    relabel: Option<PathBuf>,
    /// Rescale every feature onto [-1, 1] before streaming.
    #[arg(long)]
    normalize: bool,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    trees: Vec<usize>,
    /// Forest memory budgets in MB (1 MB = 10^6 bytes).
    #[arg(long = "memory-mb", value_delimiter = ',', default_value = "3.0")]
    memory_mb: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "uninstrumented")]
    mode: Vec<ModeKind>,
    /// Explicit mantissa bits.
    #[arg(long, value_delimiter = ',', default_value = "52")]
    p: Vec<u32>,
    /// Exponent bits.
    #[arg(long, value_delimiter = ',', default_value = "11")]
    e: Vec<u32>,
    #[arg(long, default_value_t = DEFAULT_ORDERINGS)]
    orderings: usize,
    /// Base seed for stream orderings, forests and synthetic data.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replay a single ordering with the seed logged in a report row.
    #[arg(long)]
    cell_seed: Option<u64>,
    #[arg(long, default_value_t = 50)]
    report_interval: usize,
    #[arg(long, value_enum, default_value = "macro")]
    f1: F1Arg,
    #[arg(long = "include-class0", action = ArgAction::Set, default_value_t = true)]
    include_class0: bool,
    /// How node bytes are charged against the memory budget.
    #[arg(long, value_enum, default_value = "working")]
    storage: StorageArg,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// Report of the reference runs.
    #[arg(long)]
    baseline: PathBuf,
    /// Report of the reduced-precision runs.
    #[arg(long)]
    reduced: PathBuf,
    /// Per-run final differences (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mean and standard deviation across orderings, per cell.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Markdown table of mean±std differences, one column per mantissa width.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Reduced report with pointwise `delta_f1` filled in.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Dataset name shown in the table.
    #[arg(long, default_value = "dataset")]
    dataset_name: String,
    /// Pair runs of different memory budgets (same trees and ordering).
    #[arg(long)]
    ignore_memory: bool,
}

fn config(msg: impl Into<String>) -> SweepError {
    SweepError::Config(msg.into())
}

fn memory_bytes(mb: f64) -> Result<u64, SweepError> {
    let bytes = (mb * 1e6).round();
    if !(mb.is_finite() && bytes >= 1.0 && bytes < u64::MAX as f64) {
        return Err(config(format!("invalid memory budget {mb} MB")));
    }
    Ok(bytes as u64)
}

fn sweep_spec(args: &RunArgs) -> Result<SweepSpec, SweepError> {
    let source = match &args.dataset {
        Some(path) => DataSource::Csv {
            path: path.clone(),
            schema: match args.schema {
                SchemaArg::Raw => Schema::Raw,
                SchemaArg::Featurized => Schema::Featurized,
            },
            window: args.window,
            axes: args.axes.clone(),
            relabel: args.relabel.clone(),
        },
        None => {
            if !(args.separation.is_finite() && args.separation >= 0.0) {
                return Err(config(format!("invalid separation {}", args.separation)));
            }
            DataSource::Synthetic(SyntheticSpec {
                n_classes: args.classes,
                n_features: args.features,
                n_samples: args.samples,
                seed: args.seed,
                separation: args.separation,
            })
        }
    };
    let mut spec = SweepSpec::new(source);
    spec.normalize = args.normalize;
    spec.modes = args.mode.clone();
    spec.p = args.p.clone();
    spec.e = args.e.clone();
    spec.trees = args.trees.clone();
    spec.memory_bytes = args
        .memory_mb
        .iter()
        .map(|&mb| memory_bytes(mb))
        .collect::<Result<_, _>>()?;
    spec.orderings = args.orderings;
    spec.base_seed = args.seed;
    spec.cell_seed = args.cell_seed;
    spec.options = PrequentialOptions {
        report_interval: args.report_interval,
        scoring: Scoring {
            average: match args.f1 {
                F1Arg::Macro => F1Average::Macro,
                F1Arg::Micro => F1Average::Micro,
            },
            include_class0: args.include_class0,
        },
    };
    spec.storage = match args.storage {
        StorageArg::Working => StorageModel::Working,
        StorageArg::Packed => StorageModel::Packed,
    };
    spec.jobs = args.jobs;
    Ok(spec)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, SweepError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_report(path: &Path) -> Result<Vec<mondrian_vprec::eval::ReportRow>, SweepError> {
    let file = File::open(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_report_csv(file).map_err(|e| match e {
        mondrian_vprec::eval::EvalError::Io(io) => SweepError::Io(io),
        other => config(format!("{}: {other}", path.display())),
    })
}

fn run(args: &RunArgs) -> Result<(), SweepError> {
    let spec = sweep_spec(args)?;
    let rows = run_sweep(&spec)?;
    let mut out = output(args.out.as_deref())?;
    write_report_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(())
}

fn compare_reports(args: &CompareArgs) -> Result<(), SweepError> {
    let baseline = read_report(&args.baseline)?;
    let reduced = read_report(&args.reduced)?;
    let cmp = compare(
        &baseline,
        &reduced,
        CompareOptions {
            ignore_memory: args.ignore_memory,
        },
    )?;
    let mut out = output(args.out.as_deref())?;
    write_cell_deltas(&mut out, &cmp.cells)?;
    out.flush()?;
    if let Some(path) = &args.summary {
        write_summaries(File::create(path)?, &cmp.summaries)?;
    }
    if let Some(path) = &args.table {
        std::fs::write(path, pivot_table(&cmp.summaries, &args.dataset_name))?;
    }
    if let Some(path) = &args.curves {
        write_report_csv(BufWriter::new(File::create(path)?), &cmp.curves)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare_reports(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
