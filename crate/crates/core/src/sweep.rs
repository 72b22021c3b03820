//! Experiment grids: running every (mode, format, trees, memory, ordering)
//! cell of a sweep and comparing reduced-precision reports to a baseline.
//!
//! Every ordering `o` owns a cell seed derived from the base seed by a
//! stable hash. The seed drives both the stream permutation and the forest's
//! random generators, so all cells of one ordering see the same sample order
//! and the same random draws, and their F1 curves can be compared pointwise.
//! Adding grid points never perturbs existing cells.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::eval::{mean_std, prequential_run, EvalError, PrequentialOptions, ReportRow, RunInfo, RunStatus};
use crate::forest::{ForestConfig, MondrianForest, StorageModel};
use crate::instrument::{InstrumentationMode, ModeKind};
use crate::stream::{
    featurize_windows, normalize_features, read_featurized_csv, read_raw_csv, read_relabel_csv, relabel_rows,
    relabel_samples, shuffle_stream, synthesize, Dataset, StreamError, SyntheticSpec,
};
use crate::vprec::{PrecisionFormat, VprecError};

pub const DEFAULT_ORDERINGS: usize = 7;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Stream { path: String, source: StreamError },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("run {run_id}: {source}")]
    Run { run_id: String, source: EvalError },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<VprecError> for SweepError {
    fn from(e: VprecError) -> Self {
        SweepError::Config(e.to_string())
    }
}

impl SweepError {
    /// Process exit code: 3 for I/O failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        let io = match self {
            SweepError::Io(_) => true,
            SweepError::Stream { source, .. } => matches!(source, StreamError::Io(_)),
            SweepError::Eval(e) | SweepError::Run { source: e, .. } => matches!(e, EvalError::Io(_)),
            _ => false,
        };
        if io {
            3
        } else {
            2
        }
    }
}

/// Layout of a dataset CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schema {
    /// One row per sensor reading; windows are featurized on load.
    Raw,
    /// One row per feature vector.
    #[default]
    Featurized,
}

impl std::str::FromStr for Schema {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(Schema::Raw),
            "featurized" => Ok(Schema::Featurized),
            other => Err(format!("unknown schema `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        schema: Schema,
        window: usize,
        /// Raw columns to featurize; all non-label columns when `None`.
        axes: Option<Vec<String>>,
        /// Two-column CSV `old_label,new_label` applied before featurizing.
        relabel: Option<PathBuf>,
    },
    Synthetic(SyntheticSpec),
}

/// Full description of an experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub source: DataSource,
    /// Rescale every feature onto `[-1, 1]` before streaming.
    pub normalize: bool,
    pub modes: Vec<ModeKind>,
    pub p: Vec<u32>,
    pub e: Vec<u32>,
    pub trees: Vec<usize>,
    pub memory_bytes: Vec<u64>,
    pub orderings: usize,
    pub base_seed: u64,
    /// Overrides the derived per-ordering seed; forces a single ordering.
    pub cell_seed: Option<u64>,
    pub options: PrequentialOptions,
    pub storage: StorageModel,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
}

impl SweepSpec {
    pub fn new(source: DataSource) -> Self {
        Self {
            source,
            normalize: false,
            modes: vec![ModeKind::Uninstrumented],
            p: vec![52],
            e: vec![11],
            trees: vec![5],
            memory_bytes: vec![3_000_000],
            orderings: DEFAULT_ORDERINGS,
            base_seed: 0,
            cell_seed: None,
            options: PrequentialOptions::default(),
            storage: StorageModel::Working,
            jobs: 0,
        }
    }

    fn validate(&self) -> Result<(), SweepError> {
        let empty = |name: &str| Err(SweepError::Config(format!("empty {name} grid")));
        if self.modes.is_empty() {
            return empty("mode");
        }
        if self.trees.is_empty() {
            return empty("trees");
        }
        if self.memory_bytes.is_empty() {
            return empty("memory");
        }
        let instrumented = self.modes.iter().any(|&m| m != ModeKind::Uninstrumented);
        if instrumented && self.p.is_empty() {
            return empty("p");
        }
        if instrumented && self.e.is_empty() {
            return empty("e");
        }
        if self.orderings == 0 {
            return Err(SweepError::Config("at least one ordering is required".into()));
        }
        if self.options.report_interval == 0 {
            return Err(SweepError::Config("report interval must be positive".into()));
        }
        if let Some(&t) = self.trees.iter().find(|&&t| t == 0) {
            return Err(SweepError::Config(format!("invalid tree count {t}")));
        }
        for &p in &self.p {
            for &e in &self.e {
                PrecisionFormat::new(p, e)?;
            }
        }
        Ok(())
    }

    /// Orderings actually run.
    pub fn ordering_count(&self) -> usize {
        if self.cell_seed.is_some() {
            1
        } else {
            self.orderings
        }
    }

    /// Seed shared by every cell of ordering `ordering`.
    pub fn ordering_seed(&self, ordering: usize) -> u64 {
        self.cell_seed
            .unwrap_or_else(|| stable_hash(&[self.base_seed, ordering as u64]))
    }

    /// Every cell of the grid, in canonical order. The uninstrumented mode
    /// ignores the precision grid and appears once, at binary64.
    pub fn cells(&self) -> Result<Vec<Cell>, SweepError> {
        self.validate()?;
        let mut formats = BTreeSet::new();
        let mut modes: Vec<ModeKind> = self.modes.clone();
        modes.sort();
        modes.dedup();
        let mut cells = Vec::new();
        for &mode in &modes {
            formats.clear();
            if mode == ModeKind::Uninstrumented {
                formats.insert((52, 11));
            } else {
                for &p in &self.p {
                    for &e in &self.e {
                        formats.insert((p, e));
                    }
                }
            }
            for &(p, e) in &formats {
                for &trees in &dedup(&self.trees) {
                    for &memory_bytes in &dedup(&self.memory_bytes) {
                        for ordering in 0..self.ordering_count() {
                            cells.push(Cell {
                                mode,
                                format: PrecisionFormat::new(p, e)?,
                                trees,
                                memory_bytes,
                                ordering,
                                seed: self.ordering_seed(ordering),
                            });
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

fn dedup<T: Ord + Copy>(values: &[T]) -> Vec<T> {
    let mut v = values.to_vec();
    v.sort();
    v.dedup();
    v
}

/// SplitMix64 finalizer folded over `words`; stable across platforms and
/// releases.
pub fn stable_hash(words: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    words.iter().fold(0x9e37_79b9_7f4a_7c15, |h: u64, &w| {
        mix(h.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ mix(w))
    })
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub mode: ModeKind,
    pub format: PrecisionFormat,
    pub trees: usize,
    pub memory_bytes: u64,
    pub ordering: usize,
    pub seed: u64,
}

impl Cell {
    /// Whole instrumentation with a 2-bit exponent cannot represent the
    /// classifier's constants and is expected to overflow.
    pub fn expected_error(&self) -> bool {
        self.mode == ModeKind::Whole && self.format.exponent_bits() == 2
    }

    pub fn instrumentation(&self) -> InstrumentationMode {
        InstrumentationMode::from_kind(self.mode, self.format)
    }

    pub fn run_id(&self) -> String {
        format!(
            "{}-p{}-e{}-t{}-m{}-o{}",
            self.mode,
            self.format.mantissa_bits(),
            self.format.exponent_bits(),
            self.trees,
            self.memory_bytes,
            self.ordering
        )
    }

    pub fn info(&self) -> RunInfo {
        RunInfo {
            run_id: self.run_id(),
            mode: Some(self.mode),
            p: self.format.mantissa_bits(),
            e: self.format.exponent_bits(),
            trees: self.trees,
            memory_bytes: self.memory_bytes,
            seed: self.seed,
            ordering: self.ordering,
        }
    }

    pub fn forest_config(&self, dataset: &Dataset, storage: StorageModel) -> ForestConfig {
        ForestConfig::new(dataset.n_features, dataset.n_classes)
            .with_trees(self.trees)
            .with_memory_bytes(self.memory_bytes)
            .with_seed(self.seed)
            .with_mode(self.instrumentation())
            .with_storage(storage)
    }
}

/// Loads and prepares the samples of `source`.
pub fn load_dataset(source: &DataSource, normalize: bool) -> Result<Dataset, SweepError> {
    let mut samples = match source {
        DataSource::Synthetic(spec) => {
            if spec.n_classes == 0 || spec.n_features == 0 || spec.n_samples == 0 {
                return Err(SweepError::Config(
                    "synthetic stream needs classes, features and samples".into(),
                ));
            }
            synthesize(spec)
        }
        DataSource::Csv {
            path,
            schema,
            window,
            axes,
            relabel,
        } => {
            let at = |p: &PathBuf| {
                let name = p.display().to_string();
                move |source| SweepError::Stream {
                    path: name.clone(),
                    source,
                }
            };
            let open = |p: &PathBuf| File::open(p).map(BufReader::new).map_err(|e| at(p)(StreamError::Io(e)));
            let map = match relabel {
                Some(r) => Some(read_relabel_csv(open(r)?).map_err(at(r))?),
                None => None,
            };
            match schema {
                Schema::Raw => {
                    let mut rows = read_raw_csv(open(path)?, axes.as_deref()).map_err(at(path))?;
                    if let Some(m) = &map {
                        relabel_rows(&mut rows, m);
                    }
                    featurize_windows(&rows, *window).map_err(at(path))?
                }
                Schema::Featurized => {
                    let mut samples = read_featurized_csv(open(path)?).map_err(at(path))?;
                    if let Some(m) = &map {
                        relabel_samples(&mut samples, m);
                    }
                    samples
                }
            }
        }
    };
    if samples.is_empty() {
        return Err(SweepError::Config("dataset has no samples".into()));
    }
    if normalize {
        normalize_features(&mut samples);
    }
    let name = match source {
        DataSource::Csv { path, .. } => path.display().to_string(),
        DataSource::Synthetic(_) => "synthetic".into(),
    };
    Dataset::from_samples(samples).map_err(|source| SweepError::Stream { path: name, source })
}

/// Runs one cell. A non-finite value inside the classifier ends the run with
/// a single `overflow` row instead of an error.
pub fn run_cell(
    dataset: &Dataset,
    cell: &Cell,
    options: &PrequentialOptions,
    storage: StorageModel,
) -> Result<Vec<ReportRow>, SweepError> {
    let info = cell.info();
    let run_error = |source| SweepError::Run {
        run_id: info.run_id.clone(),
        source,
    };
    let stream = shuffle_stream(&dataset.samples, cell.seed);
    let mut forest = match MondrianForest::<f64>::new(cell.forest_config(dataset, storage)) {
        Ok(f) => f,
        Err(e) if e.is_overflow() => return Ok(vec![info.overflow_row(0)]),
        Err(e) => {
            return Err(run_error(EvalError::Model {
                elements_seen: 0,
                source: e,
            }))
        }
    };
    match prequential_run(&mut forest, &stream, options) {
        Ok(mut report) => {
            report.info = info;
            Ok(report.rows(None))
        }
        Err(EvalError::Model { elements_seen, source }) if source.is_overflow() => {
            Ok(vec![info.overflow_row(elements_seen)])
        }
        Err(e) => Err(run_error(e)),
    }
}

/// Canonical row order: mode, p, e, trees, memory, ordering, elements_seen.
pub fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| {
        let key = |r: &ReportRow| {
            (
                mode_rank(&r.instrumentation),
                r.p,
                r.e,
                r.trees,
                r.memory_bytes,
                r.ordering,
                r.elements_seen,
            )
        };
        key(a).cmp(&key(b)).then_with(|| a.run_id.cmp(&b.run_id))
    });
}

fn mode_rank(name: &str) -> (u8, String) {
    match name.parse::<ModeKind>() {
        Ok(m) => (m as u8, String::new()),
        Err(_) => (u8::MAX, name.to_string()),
    }
}

/// Runs every cell of `spec` on `jobs` threads and returns the rows in
/// canonical order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ReportRow>, SweepError> {
    let cells = spec.cells()?;
    let dataset = load_dataset(&spec.source, spec.normalize)?;
    run_cells(&dataset, &cells, spec)
}

/// Runs `cells` on a prepared dataset.
pub fn run_cells(dataset: &Dataset, cells: &[Cell], spec: &SweepSpec) -> Result<Vec<ReportRow>, SweepError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| SweepError::Config(format!("thread pool: {e}")))?;
    let groups: Vec<Vec<ReportRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| run_cell(dataset, cell, &spec.options, spec.storage))
            .collect::<Result<_, _>>()
    })?;
    let mut rows: Vec<ReportRow> = groups.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

/// Identity of a run group inside a report, without the ordering.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub instrumentation: String,
    pub p: u32,
    pub e: u32,
    pub trees: usize,
    pub memory_bytes: u64,
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "mode={} p={} e={} trees={} memory_bytes={}",
            self.instrumentation, self.p, self.e, self.trees, self.memory_bytes
        )
    }
}

/// Rows of one run, keyed by group and ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCurve {
    pub key: GroupKey,
    pub ordering: usize,
    pub rows: Vec<ReportRow>,
}

impl RunCurve {
    pub fn overflowed(&self) -> bool {
        self.rows.iter().any(|r| r.status == RunStatus::Overflow)
    }

    pub fn final_f1(&self) -> Option<f64> {
        if self.overflowed() {
            return None;
        }
        self.rows.last().and_then(|r| r.f1)
    }
}

/// Splits report rows into runs.
pub fn group_runs(rows: &[ReportRow]) -> Vec<RunCurve> {
    let mut map: BTreeMap<(GroupKey, usize), Vec<ReportRow>> = BTreeMap::new();
    for r in rows {
        let key = GroupKey {
            instrumentation: r.instrumentation.clone(),
            p: r.p,
            e: r.e,
            trees: r.trees,
            memory_bytes: r.memory_bytes,
        };
        map.entry((key, r.ordering)).or_default().push(r.clone());
    }
    map.into_iter()
        .map(|((key, ordering), mut rows)| {
            rows.sort_by_key(|r| r.elements_seen);
            RunCurve { key, ordering, rows }
        })
        .collect()
}

/// How reduced runs are matched to baseline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CompareOptions {
    /// Match on trees and ordering only, pairing runs of different memory
    /// budgets; the baseline must then hold one memory budget per tree count.
    pub ignore_memory: bool,
}

/// ΔF1 of one reduced run at its final checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDelta {
    pub key: GroupKey,
    pub ordering: usize,
    pub baseline_memory_bytes: u64,
    pub baseline_f1: Option<f64>,
    pub reduced_f1: Option<f64>,
    pub delta_f1: Option<f64>,
    /// `100 * delta / baseline`.
    pub percent_change: Option<f64>,
    pub status: RunStatus,
}

/// ΔF1 across orderings of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub key: GroupKey,
    pub orderings: usize,
    pub mean_delta: Option<f64>,
    pub std_delta: Option<f64>,
    pub mean_percent: Option<f64>,
    pub overflowed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub cells: Vec<CellDelta>,
    pub summaries: Vec<GroupSummary>,
    /// Reduced rows with `delta_f1` filled pointwise.
    pub curves: Vec<ReportRow>,
}

fn baseline_for<'a>(
    run: &RunCurve,
    exact: &HashMap<(GroupKey, usize), &'a RunCurve>,
    loose: &HashMap<(usize, Option<u64>, usize), Vec<&'a RunCurve>>,
    opts: CompareOptions,
) -> Result<&'a RunCurve, SweepError> {
    if let Some(b) = exact.get(&(run.key.clone(), run.ordering)) {
        return Ok(b);
    }
    let memory = (!opts.ignore_memory).then_some(run.key.memory_bytes);
    let describe = || format!("no baseline run for cell {} ordering {}", run.key, run.ordering);
    match loose.get(&(run.key.trees, memory, run.ordering)).map(Vec::as_slice) {
        Some([b]) => Ok(b),
        Some(many) if many.len() > 1 => Err(SweepError::GridMismatch(format!(
            "{} baseline runs match cell {} ordering {}",
            many.len(),
            run.key,
            run.ordering
        ))),
        _ => Err(SweepError::GridMismatch(describe())),
    }
}

/// Pairs every reduced run with its baseline run and computes ΔF1.
///
/// A reduced run pairs with the baseline run of identical mode and format
/// when one exists (so a file compared with itself yields zeros); otherwise
/// with the unique baseline run sharing its trees, memory and ordering.
pub fn compare(baseline: &[ReportRow], reduced: &[ReportRow], opts: CompareOptions) -> Result<Comparison, SweepError> {
    let base_runs = group_runs(baseline);
    let red_runs = group_runs(reduced);
    if red_runs.is_empty() {
        return Err(SweepError::GridMismatch("reduced report has no rows".into()));
    }
    let exact: HashMap<(GroupKey, usize), &RunCurve> =
        base_runs.iter().map(|r| ((r.key.clone(), r.ordering), r)).collect();
    let mut loose: HashMap<(usize, Option<u64>, usize), Vec<&RunCurve>> = HashMap::new();
    for r in &base_runs {
        let memory = (!opts.ignore_memory).then_some(r.key.memory_bytes);
        loose.entry((r.key.trees, memory, r.ordering)).or_default().push(r);
    }

    let mut cells = Vec::with_capacity(red_runs.len());
    let mut curves = Vec::new();
    for run in &red_runs {
        let base = baseline_for(run, &exact, &loose, opts)?;
        let (b, r) = (base.final_f1(), run.final_f1());
        let delta = b.zip(r).map(|(b, r)| r - b);
        let percent = b.zip(delta).and_then(|(b, d)| (b != 0.0).then(|| 100.0 * d / b));
        let status = if run.overflowed() {
            RunStatus::Overflow
        } else {
            RunStatus::Ok
        };
        cells.push(CellDelta {
            key: run.key.clone(),
            ordering: run.ordering,
            baseline_memory_bytes: base.key.memory_bytes,
            baseline_f1: b,
            reduced_f1: r,
            delta_f1: delta,
            percent_change: percent,
            status,
        });
        if !run.overflowed() && !base.overflowed() {
            let seen: Vec<usize> = run.rows.iter().map(|r| r.elements_seen).collect();
            let base_seen: Vec<usize> = base.rows.iter().map(|r| r.elements_seen).collect();
            if seen != base_seen {
                return Err(SweepError::GridMismatch(format!(
                    "checkpoints of cell {} ordering {} differ from its baseline",
                    run.key, run.ordering
                )));
            }
        }
        curves.extend(run.rows.iter().enumerate().map(|(i, row)| {
            let mut row = row.clone();
            row.delta_f1 = row.f1.zip(base.rows.get(i).and_then(|b| b.f1)).map(|(r, b)| r - b);
            row
        }));
    }

    let mut by_group: BTreeMap<GroupKey, Vec<&CellDelta>> = BTreeMap::new();
    for c in &cells {
        by_group.entry(c.key.clone()).or_default().push(c);
    }
    let summaries = by_group
        .into_iter()
        .map(|(key, cs)| {
            let deltas: Vec<f64> = cs.iter().filter_map(|c| c.delta_f1).collect();
            let percents: Vec<f64> = cs.iter().filter_map(|c| c.percent_change).collect();
            let (mean, std) = if deltas.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&deltas);
                (Some(m), Some(s))
            };
            GroupSummary {
                key,
                orderings: cs.len(),
                mean_delta: mean,
                std_delta: std,
                mean_percent: (!percents.is_empty()).then(|| mean_std(&percents).0),
                overflowed: cs.iter().filter(|c| c.status == RunStatus::Overflow).count(),
            }
        })
        .collect();
    sort_rows(&mut curves);
    Ok(Comparison {
        cells,
        summaries,
        curves,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// Writes per-cell final deltas as CSV.
pub fn write_cell_deltas<W: std::io::Write>(writer: W, cells: &[CellDelta]) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| SweepError::Io(std::io::Error::other(e));
    w.write_record([
        "instrumentation",
        "p",
        "e",
        "trees",
        "memory_bytes",
        "baseline_memory_bytes",
        "ordering",
        "baseline_f1",
        "reduced_f1",
        "delta_f1",
        "percent_change",
        "status",
    ])
    .map_err(io)?;
    for c in cells {
        w.write_record([
            c.key.instrumentation.clone(),
            c.key.p.to_string(),
            c.key.e.to_string(),
            c.key.trees.to_string(),
            c.key.memory_bytes.to_string(),
            c.baseline_memory_bytes.to_string(),
            c.ordering.to_string(),
            opt(c.baseline_f1),
            opt(c.reduced_f1),
            opt(c.delta_f1),
            opt(c.percent_change),
            c.status.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-group mean and standard deviation of ΔF1 as CSV.
pub fn write_summaries<W: std::io::Write>(writer: W, summaries: &[GroupSummary]) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| SweepError::Io(std::io::Error::other(e));
    w.write_record([
        "instrumentation",
        "p",
        "e",
        "trees",
        "memory_bytes",
        "orderings",
        "mean_delta_f1",
        "std_delta_f1",
        "mean_percent_change",
        "overflowed",
    ])
    .map_err(io)?;
    for s in summaries {
        w.write_record([
            s.key.instrumentation.clone(),
            s.key.p.to_string(),
            s.key.e.to_string(),
            s.key.trees.to_string(),
            s.key.memory_bytes.to_string(),
            s.orderings.to_string(),
            opt(s.mean_delta),
            opt(s.std_delta),
            opt(s.mean_percent),
            s.overflowed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Pivot of the summaries: one row per (mode, dataset, e, memory, trees),
/// one column per mantissa width, cells `mean±std` of ΔF1 (`overflow` when
/// every ordering overflowed). Rendered as a Markdown table.
pub fn pivot_table(summaries: &[GroupSummary], dataset: &str) -> String {
    let ps: BTreeSet<u32> = summaries.iter().map(|s| s.key.p).collect();
    let mut rows: BTreeMap<(String, u32, u64, usize), BTreeMap<u32, String>> = BTreeMap::new();
    for s in summaries {
        let cell = match (s.mean_delta, s.std_delta) {
            (Some(m), Some(sd)) => format!("{m:+.4}±{sd:.4}"),
            _ => "overflow".to_string(),
        };
        rows.entry((s.key.instrumentation.clone(), s.key.e, s.key.memory_bytes, s.key.trees))
            .or_default()
            .insert(s.key.p, cell);
    }
    let mut out = String::from("| mode | dataset | e | memory (MB) | trees |");
    for p in &ps {
        out.push_str(&format!(" p={p} |"));
    }
    out.push_str("\n|---|---|---|---|---|");
    out.push_str(&"---|".repeat(ps.len()));
    out.push('\n');
    for ((mode, e, mem, trees), cols) in rows {
        out.push_str(&format!(
            "| {mode} | {dataset} | {e} | {} | {trees} |",
            mem as f64 / 1e6
        ));
        for p in &ps {
            out.push_str(&format!(" {} |", cols.get(p).map_or("", String::as_str)));
        }
        out.push('\n');
    }
    out
}
