//! Data ingestion: raw sensor rows to windowed feature vectors, CSV readers,
//! a synthetic Gaussian stream and seeded reorderings.
//!
//! Two CSV schemas are accepted, both UTF-8, comma separated, with a header:
//!
//! * `raw`: one sensor reading per row, one column per axis plus `label`.
//!   Axis columns can be selected by name; by default every non-label column
//!   is an axis.
//! * `featurized`: one window per row, feature columns plus `label`.
//!
//! A relabeling file has the header `old_label,new_label`.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub const DEFAULT_WINDOW: usize = 50;
pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("window length must be at least 1")]
    InvalidWindow,
    #[error("stream has {rows} rows, fewer than one window of {window}")]
    EmptyStream { rows: usize, window: usize },
    #[error("line {line}: {message}")]
    Schema { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StreamError {
    fn schema(line: u64, message: impl Into<String>) -> Self {
        StreamError::Schema {
            line,
            message: message.into(),
        }
    }
}

fn csv_error(e: csv::Error) -> StreamError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => StreamError::Io(io),
        other => StreamError::schema(line, format!("{other:?}")),
    }
}

/// One reading of every selected sensor axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSensorRow {
    pub axes: Vec<f64>,
    pub label: usize,
}

/// Feature vector with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Samples with their feature and class counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<StreamSample>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Dataset {
    /// Infers the class count as `max(label) + 1`.
    pub fn from_samples(samples: Vec<StreamSample>) -> Result<Self, StreamError> {
        let n_features = samples.first().map_or(0, |s| s.features.len());
        if let Some(i) = samples.iter().position(|s| s.features.len() != n_features) {
            return Err(StreamError::schema(
                i as u64 + 1,
                format!(
                    "sample has {} features, expected {n_features}",
                    samples[i].features.len()
                ),
            ));
        }
        let n_classes = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
        Ok(Self {
            samples,
            n_features,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Per-axis mean and population standard deviation over consecutive,
/// non-overlapping windows. Features are all means followed by all standard
/// deviations; the label is the window's most frequent label (smallest id on
/// ties). A trailing partial window is dropped.
pub fn featurize_windows(rows: &[RawSensorRow], window: usize) -> Result<Vec<StreamSample>, StreamError> {
    if window == 0 {
        return Err(StreamError::InvalidWindow);
    }
    if rows.len() < window {
        return Err(StreamError::EmptyStream {
            rows: rows.len(),
            window,
        });
    }
    let n_axes = rows[0].axes.len();
    rows.chunks_exact(window)
        .enumerate()
        .map(|(w, block)| {
            if let Some(bad) = block.iter().position(|r| r.axes.len() != n_axes) {
                return Err(StreamError::schema(
                    (w * window + bad) as u64 + 1,
                    format!("row has {} axes, expected {n_axes}", block[bad].axes.len()),
                ));
            }
            let n = block.len() as f64;
            let mut features = vec![0.0; 2 * n_axes];
            for a in 0..n_axes {
                let mean = block.iter().map(|r| r.axes[a]).sum::<f64>() / n;
                let var = block.iter().map(|r| (r.axes[a] - mean).powi(2)).sum::<f64>() / n;
                features[a] = mean;
                features[n_axes + a] = var.sqrt();
            }
            Ok(StreamSample {
                features,
                label: modal_label(block),
            })
        })
        .collect()
}

fn modal_label(block: &[RawSensorRow]) -> usize {
    let mut counts = BTreeMap::new();
    for r in block {
        *counts.entry(r.label).or_insert(0usize) += 1;
    }
    // max_by_key keeps the last maximum, so iterate labels in descending order
    counts.into_iter().rev().max_by_key(|&(_, c)| c).map_or(0, |(l, _)| l)
}

/// Seeded Fisher-Yates permutation.
pub fn shuffle_stream(samples: &[StreamSample], ordering_seed: u64) -> Vec<StreamSample> {
    let mut out = samples.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(ordering_seed));
    out
}

/// Parameters of the synthetic Gaussian-blob stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_features: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Minimum distance between class means, in units of the blob std.
    pub separation: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 10,
            n_features: 12,
            n_samples: 5_000,
            seed: 0,
            separation: 6.0,
        }
    }
}

impl SyntheticSpec {
    /// Mean of class `c`: class `c` sits on axis `c mod n_features` at
    /// distance `separation * (1 + c / n_features)` from the origin. Means on
    /// the same axis are `separation` apart, means on different axes at least
    /// `sqrt(2) * separation`.
    pub fn class_mean(&self, class: usize) -> Vec<f64> {
        let mut mean = vec![0.0; self.n_features];
        if let Some(level) = class.checked_div(self.n_features) {
            mean[class % self.n_features] = self.separation * (1 + level) as f64;
        }
        mean
    }
}

/// Isotropic unit-variance Gaussian blobs, labels assigned round-robin.
pub fn synthesize(spec: &SyntheticSpec) -> Vec<StreamSample> {
    if spec.n_classes == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means: Vec<Vec<f64>> = (0..spec.n_classes).map(|c| spec.class_mean(c)).collect();
    (0..spec.n_samples)
        .map(|i| {
            let label = i % spec.n_classes;
            let features = means[label]
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + z
                })
                .collect();
            StreamSample { features, label }
        })
        .collect()
}

/// Rescales every feature linearly onto `[-1, 1]` using its observed range.
/// Constant features map to 0.
pub fn normalize_features(samples: &mut [StreamSample]) {
    let Some(first) = samples.first() else { return };
    let n = first.features.len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for s in samples.iter() {
        for (d, &v) in s.features.iter().enumerate() {
            lo[d] = lo[d].min(v);
            hi[d] = hi[d].max(v);
        }
    }
    for s in samples.iter_mut() {
        for (d, v) in s.features.iter_mut().enumerate() {
            let span = hi[d] - lo[d];
            *v = if span > 0.0 {
                (2.0 * (*v - lo[d]) / span - 1.0).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
    }
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn parse_label(field: &str, line: u64) -> Result<usize, StreamError> {
    let t = field.trim();
    t.parse::<usize>()
        .or_else(|_| match t.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < usize::MAX as f64 => Ok(v as usize),
            _ => Err(()),
        })
        .map_err(|_| StreamError::schema(line, format!("invalid label `{t}`")))
}

fn parse_value(field: &str, column: &str, line: u64) -> Result<f64, StreamError> {
    match field.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(StreamError::schema(
            line,
            format!("column `{column}`: invalid value `{}`", field.trim()),
        )),
    }
}

/// Column names and `(values, label)` rows.
type Table = (Vec<String>, Vec<(Vec<f64>, usize)>);

/// Reads rows with `columns` as values (all non-label columns when `None`).
fn read_table<R: Read>(reader: R, columns: Option<&[String]>) -> Result<Table, StreamError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let label_idx =
        header_index(&headers, LABEL_COLUMN).ok_or_else(|| StreamError::schema(1, "missing `label` column"))?;
    let (names, idx): (Vec<String>, Vec<usize>) = match columns {
        Some(cols) => cols
            .iter()
            .map(|c| {
                header_index(&headers, c)
                    .map(|i| (c.clone(), i))
                    .ok_or_else(|| StreamError::schema(1, format!("missing column `{c}`")))
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .unzip(),
        None => headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label_idx)
            .map(|(i, h)| (h.to_string(), i))
            .unzip(),
    };
    if idx.is_empty() {
        return Err(StreamError::schema(1, "no value columns"));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let values = idx
            .iter()
            .zip(&names)
            .map(|(&i, name)| parse_value(record.get(i).unwrap_or(""), name, line))
            .collect::<Result<Vec<_>, _>>()?;
        let label = parse_label(record.get(label_idx).unwrap_or(""), line)?;
        rows.push((values, label));
    }
    Ok((names, rows))
}

pub fn read_raw_csv<R: Read>(reader: R, axes: Option<&[String]>) -> Result<Vec<RawSensorRow>, StreamError> {
    let (_, rows) = read_table(reader, axes)?;
    Ok(rows
        .into_iter()
        .map(|(axes, label)| RawSensorRow { axes, label })
        .collect())
}

pub fn read_featurized_csv<R: Read>(reader: R) -> Result<Vec<StreamSample>, StreamError> {
    let (_, rows) = read_table(reader, None)?;
    Ok(rows
        .into_iter()
        .map(|(features, label)| StreamSample { features, label })
        .collect())
}

/// Writes samples in the `featurized` schema with columns `f0..fN,label`.
pub fn write_featurized_csv<W: Write>(writer: W, samples: &[StreamSample]) -> Result<(), StreamError> {
    let mut w = csv::Writer::from_writer(writer);
    let n = samples.first().map_or(0, |s| s.features.len());
    let mut header: Vec<String> = (0..n).map(|i| format!("f{i}")).collect();
    header.push(LABEL_COLUMN.into());
    w.write_record(&header).map_err(csv_error)?;
    for s in samples {
        let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        row.push(s.label.to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `old_label,new_label` mapping.
pub fn read_relabel_csv<R: Read>(reader: R) -> Result<HashMap<usize, usize>, StreamError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let old =
        header_index(&headers, "old_label").ok_or_else(|| StreamError::schema(1, "missing `old_label` column"))?;
    let new =
        header_index(&headers, "new_label").ok_or_else(|| StreamError::schema(1, "missing `new_label` column"))?;
    let mut map = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let from = parse_label(record.get(old).unwrap_or(""), line)?;
        let to = parse_label(record.get(new).unwrap_or(""), line)?;
        if map.insert(from, to).is_some() {
            return Err(StreamError::schema(line, format!("label {from} mapped twice")));
        }
    }
    Ok(map)
}

/// Applies a label mapping; unmapped labels are kept.
pub fn relabel_rows(rows: &mut [RawSensorRow], map: &HashMap<usize, usize>) {
    for r in rows {
        if let Some(&l) = map.get(&r.label) {
            r.label = l;
        }
    }
}

pub fn relabel_samples(samples: &mut [StreamSample], map: &HashMap<usize, usize>) {
    for s in samples {
        if let Some(&l) = map.get(&s.label) {
            s.label = l;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn row(v: f64, label: usize) -> RawSensorRow {
        RawSensorRow {
            axes: vec![v; 6],
            label,
        }
    }

    #[test]
    fn constant_window_has_zero_spread() {
        let rows = vec![row(3.25, 7); 50];
        let out = featurize_windows(&rows, 50).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].features[..6], [3.25; 6]);
        assert_eq!(out[0].features[6..], [0.0; 6]);
        assert_eq!(out[0].label, 7);
    }

    #[test]
    fn window_count_and_partial_tail() {
        let rows: Vec<_> = (0..100).map(|i| row(i as f64, 0)).collect();
        assert_eq!(featurize_windows(&rows, 50).unwrap().len(), 2);
        assert_eq!(featurize_windows(&rows[..99], 50).unwrap().len(), 1);
        assert!(matches!(
            featurize_windows(&rows[..49], 50),
            Err(StreamError::EmptyStream { rows: 49, window: 50 })
        ));
        assert!(matches!(featurize_windows(&rows, 0), Err(StreamError::InvalidWindow)));
    }

    #[test]
    fn mean_and_population_std_of_ramp() {
        let rows: Vec<_> = (1..=50)
            .map(|i| RawSensorRow {
                axes: vec![i as f64, 0.0],
                label: 1,
            })
            .collect();
        let s = &featurize_windows(&rows, 50).unwrap()[0];
        assert_eq!(s.features[0], 25.5);
        // sum i^2 / 50 - 25.5^2 = 858.5 - 650.25 = 208.25
        assert!((s.features[2] - 208.25f64.sqrt()).abs() < 1e-12);
        assert!((s.features[2] - 14.43087).abs() < 1e-5);
    }

    #[test]
    fn modal_label_ties_pick_smallest() {
        let mut rows: Vec<_> = (0..4).map(|_| row(0.0, 5)).collect();
        rows.extend((0..4).map(|_| row(0.0, 2)));
        rows.push(row(0.0, 9));
        rows.push(row(0.0, 9));
        assert_eq!(featurize_windows(&rows, 10).unwrap()[0].label, 2);
    }

    #[test]
    fn shuffle_covers_all_permutations_of_three() {
        let samples: Vec<_> = (0..3)
            .map(|i| StreamSample {
                features: vec![i as f64],
                label: i,
            })
            .collect();
        let mut seen = HashSet::new();
        for seed in 0..200 {
            let order: Vec<usize> = shuffle_stream(&samples, seed).iter().map(|s| s.label).collect();
            seen.insert(order);
        }
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn synthetic_stream_shape() {
        let spec = SyntheticSpec {
            n_classes: 3,
            n_features: 4,
            n_samples: 9,
            seed: 1,
            separation: 5.0,
        };
        let s = synthesize(&spec);
        assert_eq!(s.len(), 9);
        assert_eq!(
            s.iter().map(|x| x.label).collect::<Vec<_>>(),
            vec![0, 1, 2, 0, 1, 2, 0, 1, 2]
        );
        assert!(s.iter().all(|x| x.features.len() == 4));
        assert_eq!(synthesize(&spec), s);
        assert!(synthesize(&SyntheticSpec { n_samples: 0, ..spec }).is_empty());
        assert_eq!(spec.class_mean(1), vec![0.0, 5.0, 0.0, 0.0]);
        let wrapped = SyntheticSpec { n_classes: 6, ..spec };
        assert_eq!(wrapped.class_mean(5), vec![0.0, 10.0, 0.0, 0.0]);
    }

    #[test]
    fn normalization_maps_onto_unit_interval() {
        let mut s: Vec<_> = [(-3.0, 1.0), (1.0, 1.0), (5.0, 1.0)]
            .iter()
            .map(|&(a, b)| StreamSample {
                features: vec![a, b],
                label: 0,
            })
            .collect();
        normalize_features(&mut s);
        assert_eq!(
            s.iter().map(|x| x.features[0]).collect::<Vec<_>>(),
            vec![-1.0, 0.0, 1.0]
        );
        assert!(s.iter().all(|x| x.features[1] == 0.0));
    }

    #[test]
    fn raw_csv_with_axis_selection_and_relabel() {
        let data = "ax,ay,az,gx,gy,gz,quat,label\n1,2,3,4,5,6,9,0\n1,2,3,4,5,6,9,3\n";
        let rows = read_raw_csv(data.as_bytes(), None).unwrap();
        assert_eq!(rows[0].axes.len(), 7);
        let axes: Vec<String> = ["ax", "ay", "az", "gx", "gy", "gz"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = read_raw_csv(data.as_bytes(), Some(&axes)).unwrap();
        assert_eq!(
            rows[1],
            RawSensorRow {
                axes: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                label: 3
            }
        );
        let map = read_relabel_csv("old_label,new_label\n3,1\n".as_bytes()).unwrap();
        relabel_rows(&mut rows, &map);
        assert_eq!(rows[1].label, 1);
        assert_eq!(rows[0].label, 0);
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let err = read_raw_csv("a,label\n1,0\nx,1\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, StreamError::Schema { line: 3, .. }), "{err}");
        let err = read_raw_csv("a,b\n1,0\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, StreamError::Schema { line: 1, .. }));
        let err = read_featurized_csv("a,label\n1,-2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, StreamError::Schema { line: 2, .. }));
        let err = read_raw_csv("a,label\n1,0\n1\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, StreamError::Schema { line: 3, .. }), "{err}");
        let axes = vec!["gyro".to_string()];
        assert!(read_raw_csv("a,label\n1,0\n".as_bytes(), Some(&axes)).is_err());
    }

    #[test]
    fn featurized_csv_round_trip() {
        let spec = SyntheticSpec {
            n_classes: 4,
            n_features: 3,
            n_samples: 20,
            seed: 9,
            separation: 2.0,
        };
        let samples = synthesize(&spec);
        let mut buf = Vec::new();
        write_featurized_csv(&mut buf, &samples).unwrap();
        assert_eq!(read_featurized_csv(buf.as_slice()).unwrap(), samples);
    }

    #[test]
    fn dataset_infers_counts() {
        let d = Dataset::from_samples(synthesize(&SyntheticSpec {
            n_samples: 30,
            ..Default::default()
        }))
        .unwrap();
        assert_eq!((d.n_features, d.n_classes, d.len()), (12, 10, 30));
        let bad = vec![
            StreamSample {
                features: vec![0.0],
                label: 0,
            },
            StreamSample {
                features: vec![0.0, 1.0],
                label: 0,
            },
        ];
        assert!(Dataset::from_samples(bad).is_err());
    }

    proptest! {
        #[test]
        fn shuffle_is_a_seeded_permutation(n in 0usize..60, seed in any::<u64>()) {
            let samples: Vec<_> = (0..n).map(|i| StreamSample { features: vec![i as f64], label: i % 3 }).collect();
            let a = shuffle_stream(&samples, seed);
            prop_assert_eq!(&a, &shuffle_stream(&samples, seed));
            let mut ids: Vec<usize> = a.iter().map(|s| s.features[0] as usize).collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn window_count_is_floor(rows in 1usize..400, window in 1usize..60) {
            let data: Vec<_> = (0..rows).map(|i| row(i as f64, i % 4)).collect();
            match featurize_windows(&data, window) {
                Ok(out) => {
                    prop_assert_eq!(out.len(), rows / window);
                    prop_assert!(out.iter().all(|s| s.features[6..].iter().all(|&v| v >= 0.0)));
                }
                Err(StreamError::EmptyStream { .. }) => prop_assert!(rows < window),
                Err(e) => prop_assert!(false, "{}", e),
            }
        }
    }
}
