//! Datasets, min-max scaling, CSV ingestion and synthetic generators.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: expected {expected} columns, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {col}: cannot parse {cell:?} as a number")]
    NonNumeric { row: usize, col: usize, cell: String },
    #[error("row {row}, column {col}: non-finite value")]
    NonFinite { row: usize, col: usize },
    #[error("label {0:?} cannot be mapped to -1/+1")]
    UnmappableLabel(String),
    #[error("found {0} distinct labels; pass an explicit binarization rule")]
    NeedsBinarization(usize),
    #[error("label column {col} out of range for {width} columns")]
    LabelColumn { col: usize, width: usize },
    #[error("labels must be -1 or +1, found {0}")]
    InvalidLabel(f64),
    #[error("dataset must contain both classes")]
    SingleClass,
    #[error("dataset needs at least {needed} samples, has {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("unknown synthetic kind {0:?} (expected line, parabola, circle or hyperbola)")]
    UnknownKind(String),
    #[error("margin must be positive and finite, got {0}")]
    InvalidMargin(f64),
    #[error("could not place a sample after {0} attempts; margin too large for the sampling box")]
    RejectionExhausted(usize),
    #[error("requested {requested} noisy samples but the dataset has {available}")]
    NoiseCount { requested: usize, available: usize },
    #[error("outlier injection needs a synthetic dataset with a known surface")]
    OutliersNeedSurface,
    #[error("dimension mismatch: expected {expected} features, got {found}")]
    Dimension { expected: usize, found: usize },
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Unspecified,
    Csv { path: String, label_mapping: String },
    Synthetic {
        kind: SyntheticKind,
        margin: f64,
        seed: u64,
    },
}

/// Indices touched by [`inject_noise`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub flipped: Vec<usize>,
    pub outliers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<f64>,
    pub name: String,
    pub feature_names: Option<Vec<String>>,
    pub provenance: Provenance,
    pub noise: Option<NoiseRecord>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<f64>, name: impl Into<String>) -> Result<Self, DataError> {
        if features.rows() != labels.len() {
            return Err(DataError::TooFewSamples {
                needed: features.rows(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(DataError::InvalidLabel(bad));
        }
        for (r, row) in features.row_iter().enumerate() {
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { row: r, col: c });
            }
        }
        Ok(Self {
            features,
            labels,
            name: name.into(),
            feature_names: None,
            provenance: Provenance::Unspecified,
            noise: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.iter().any(|&y| y > 0.0) && self.labels.iter().any(|&y| y < 0.0)
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let cols = self.n_features();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Dataset {
            features: Matrix::from_row_major(indices.len(), cols, data),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            provenance: self.provenance.clone(),
            noise: None,
        }
    }

    /// Indices not flipped and not injected as outliers.
    pub fn clean_indices(&self) -> Vec<usize> {
        let Some(noise) = &self.noise else {
            return (0..self.len()).collect();
        };
        let dirty: BTreeSet<usize> = noise.flipped.iter().chain(&noise.outliers).copied().collect();
        (0..self.len()).filter(|i| !dirty.contains(i)).collect()
    }

    /// Writes `x1,...,xn,label` rows with a header.
    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(sink);
        let n = self.n_features();
        let mut header: Vec<String> = match &self.feature_names {
            Some(names) if names.len() == n => names.clone(),
            _ => (1..=n).map(|j| format!("x{j}")).collect(),
        };
        header.push("label".into());
        w.write_record(&header)?;
        for (row, &y) in self.features.row_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
            rec.push(format!("{}", y as i32));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Stable digest of features and labels, used to tie models to their training data.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.n_features() as u64).to_le_bytes());
        for v in self.features.as_slice() {
            h.update(v.to_le_bytes());
        }
        for y in &self.labels {
            h.update(y.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    let s = format!("{v}");
    debug_assert_eq!(s.parse::<f64>().ok(), Some(v));
    s
}

/// Per-feature min-max map onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity(n: usize) -> Self {
        Self {
            min: vec![-1.0; n],
            max: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Constant features map to 0; values outside the fitted range are not clamped.
    pub fn apply_row(&self, x: &[f64]) -> Result<Vec<f64>, DataError> {
        if x.len() != self.dim() {
            return Err(DataError::Dimension {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(x
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                if hi > lo {
                    2.0 * (v - lo) / (hi - lo) - 1.0
                } else {
                    0.0
                }
            })
            .collect())
    }
}

pub fn fit_scaler(x: &Matrix) -> FeatureScaler {
    let n = x.cols();
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    for row in x.row_iter() {
        for (j, &v) in row.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    if x.rows() == 0 {
        min.fill(0.0);
        max.fill(0.0);
    }
    FeatureScaler { min, max }
}

pub fn apply_scaler(s: &FeatureScaler, x: &Matrix) -> Result<Matrix, DataError> {
    let mut data = Vec::with_capacity(x.rows() * x.cols());
    for row in x.row_iter() {
        data.extend(s.apply_row(row)?);
    }
    Ok(Matrix::from_row_major(x.rows(), x.cols(), data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// Header present iff the first record has a non-numeric feature cell.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    First,
    Index(usize),
}

/// How raw label cells become -1/+1.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelRule {
    /// `{-1, 1}` pass through; any other two values map smaller to -1.
    #[default]
    Auto,
    /// This value becomes -1; exactly one other value is allowed and becomes +1.
    Negative(String),
    /// This value becomes +1, every other value -1 ("class k vs rest").
    OneVsRest(String),
}

impl FromStr for LabelRule {
    type Err = String;

    /// `auto`, `neg:<value>` or `ovr:<value>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            Ok(LabelRule::Auto)
        } else if let Some(v) = s.strip_prefix("neg:") {
            Ok(LabelRule::Negative(canonical_label(v)))
        } else if let Some(v) = s.strip_prefix("ovr:") {
            Ok(LabelRule::OneVsRest(canonical_label(v)))
        } else {
            Err(format!("invalid label rule {s:?}; use auto, neg:<value> or ovr:<value>"))
        }
    }
}

impl fmt::Display for LabelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelRule::Auto => write!(f, "auto"),
            LabelRule::Negative(v) => write!(f, "neg:{v}"),
            LabelRule::OneVsRest(v) => write!(f, "ovr:{v}"),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub header: HeaderMode,
    pub label_column: LabelColumn,
    pub label_rule: LabelRule,
}

fn canonical_label(cell: &str) -> String {
    let t = cell.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => format_float(if v == 0.0 { 0.0 } else { v }),
        _ => t.to_string(),
    }
}

fn compare_labels(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut ds = read_csv(file, options)?;
    ds.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if let Provenance::Csv { path: p, .. } = &mut ds.provenance {
        *p = path.display().to_string();
    }
    Ok(ds)
}

/// Parses a labelled CSV. An input with no data rows yields an empty dataset.
pub fn read_csv<R: Read>(source: R, options: &CsvOptions) -> Result<Dataset, DataError> {
    let (header, rows) = read_records(source, options.header)?;
    let width = header
        .as_ref()
        .map(Vec::len)
        .or_else(|| rows.first().map(Vec::len))
        .unwrap_or(0);
    if rows.is_empty() {
        let n = width.saturating_sub(1);
        return Ok(Dataset {
            features: Matrix::zeros(0, n),
            labels: vec![],
            name: String::new(),
            feature_names: None,
            provenance: Provenance::Csv {
                path: String::new(),
                label_mapping: options.label_rule.to_string(),
            },
            noise: None,
        });
    }
    let label_col = match options.label_column {
        LabelColumn::Last => width - 1,
        LabelColumn::First => 0,
        LabelColumn::Index(i) => i,
    };
    if label_col >= width || width < 2 {
        return Err(DataError::LabelColumn {
            col: label_col,
            width,
        });
    }
    let n = width - 1;
    let mut data = Vec::with_capacity(rows.len() * n);
    let mut raw_labels = Vec::with_capacity(rows.len());
    for (r, rec) in rows.iter().enumerate() {
        if rec.len() != width {
            return Err(DataError::Ragged {
                row: r,
                expected: width,
                found: rec.len(),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            if c == label_col {
                raw_labels.push(canonical_label(cell));
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| DataError::NonNumeric {
                row: r,
                col: c,
                cell: cell.clone(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite { row: r, col: c });
            }
            data.push(v);
        }
    }
    let (labels, mapping) = map_labels(&raw_labels, &options.label_rule)?;
    let feature_names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(c, _)| *c != label_col)
            .map(|(_, s)| s.trim().to_string())
            .collect()
    });
    Ok(Dataset {
        features: Matrix::from_row_major(rows.len(), n, data),
        labels,
        name: String::new(),
        feature_names,
        provenance: Provenance::Csv {
            path: String::new(),
            label_mapping: mapping,
        },
        noise: None,
    })
}

/// Parses an all-numeric CSV (features, optionally followed by labels) into a
/// matrix. An input with no data rows yields a `0 x width` matrix.
pub fn read_numeric_csv<R: Read>(source: R, header: HeaderMode) -> Result<Matrix, DataError> {
    let (head, rows) = read_records(source, header)?;
    let width = head
        .as_ref()
        .map(Vec::len)
        .or_else(|| rows.first().map(Vec::len))
        .unwrap_or(0);
    let mut data = Vec::with_capacity(rows.len() * width);
    for (r, rec) in rows.iter().enumerate() {
        if rec.len() != width {
            return Err(DataError::Ragged {
                row: r,
                expected: width,
                found: rec.len(),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                row: r,
                col: c,
                cell: cell.clone(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite { row: r, col: c });
            }
            data.push(v);
        }
    }
    Ok(Matrix::from_row_major(rows.len(), width, data))
}

type Records = (Option<Vec<String>>, Vec<Vec<String>>);

fn read_records<R: Read>(source: R, header: HeaderMode) -> Result<Records, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    let has_header = match header {
        HeaderMode::Present => !rows.is_empty(),
        HeaderMode::Absent => false,
        HeaderMode::Auto => rows.first().is_some_and(|first| {
            // labels may legitimately be text, so only feature-like cells decide
            let numeric = first.iter().filter(|c| c.parse::<f64>().is_ok()).count();
            numeric + 1 < first.len() || (first.len() == 1 && numeric == 0)
        }),
    };
    if has_header {
        let h = rows.remove(0);
        Ok((Some(h), rows))
    } else {
        Ok((None, rows))
    }
}

fn map_labels(raw: &[String], rule: &LabelRule) -> Result<(Vec<f64>, String), DataError> {
    let mut distinct: Vec<&str> = raw
        .iter()
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    distinct.sort_by(|a, b| compare_labels(a, b));
    match rule {
        LabelRule::OneVsRest(pos) => {
            let labels = raw.iter().map(|l| if l == pos { 1.0 } else { -1.0 }).collect();
            Ok((labels, format!("{pos}->+1, rest->-1")))
        }
        LabelRule::Negative(neg) => {
            let others: Vec<&&str> = distinct.iter().filter(|d| **d != neg).collect();
            if others.len() > 1 {
                return Err(DataError::NeedsBinarization(distinct.len()));
            }
            if distinct.len() == 1 && distinct[0] != neg {
                return Err(DataError::UnmappableLabel(distinct[0].to_string()));
            }
            let labels = raw.iter().map(|l| if l == neg { -1.0 } else { 1.0 }).collect();
            let pos = others.first().map_or_else(String::new, |s| s.to_string());
            Ok((labels, format!("{neg}->-1, {pos}->+1")))
        }
        LabelRule::Auto => {
            if distinct.iter().all(|d| *d == "-1" || *d == "1") {
                let labels = raw.iter().map(|l| if l == "1" { 1.0 } else { -1.0 }).collect();
                return Ok((labels, "-1->-1, 1->+1".into()));
            }
            match distinct.as_slice() {
                [neg, pos] => {
                    let labels = raw.iter().map(|l| if l == neg { -1.0 } else { 1.0 }).collect();
                    Ok((labels, format!("{neg}->-1, {pos}->+1")))
                }
                [single] => Err(DataError::UnmappableLabel(single.to_string())),
                _ => Err(DataError::NeedsBinarization(distinct.len())),
            }
        }
    }
}

/// Canonical 2-D surfaces used by the synthetic generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Line,
    Parabola,
    Circle,
    Hyperbola,
}

pub const CIRCLE_RADIUS_SQ: f64 = 0.5;
pub const HYPERBOLA_OFFSET: f64 = 0.1;

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 4] = [
        SyntheticKind::Line,
        SyntheticKind::Parabola,
        SyntheticKind::Circle,
        SyntheticKind::Hyperbola,
    ];

    /// Signed surface value; the sign is the class.
    pub fn surface(self, x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        match self {
            SyntheticKind::Line => b - a,
            SyntheticKind::Parabola => b - a * a,
            SyntheticKind::Circle => a * a + b * b - CIRCLE_RADIUS_SQ,
            SyntheticKind::Hyperbola => a * a - b * b - HYPERBOLA_OFFSET,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Line => "line",
            SyntheticKind::Parabola => "parabola",
            SyntheticKind::Circle => "circle",
            SyntheticKind::Hyperbola => "hyperbola",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "line" => Ok(SyntheticKind::Line),
            "parabola" => Ok(SyntheticKind::Parabola),
            "circle" => Ok(SyntheticKind::Circle),
            "hyperbola" => Ok(SyntheticKind::Hyperbola),
            other => Err(DataError::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const SAMPLING_HALF_WIDTH: f64 = 1.0;
const MAX_ATTEMPTS: usize = 1_000_000;

/// Draws a point uniformly in the sampling box whose signed surface value,
/// multiplied by `label`, is at least `min_signed`.
fn draw_point(
    rng: &mut ChaCha8Rng,
    kind: SyntheticKind,
    label: f64,
    min_signed: f64,
) -> Result<[f64; 2], DataError> {
    for _ in 0..MAX_ATTEMPTS {
        let p = [
            rng.gen_range(-SAMPLING_HALF_WIDTH..SAMPLING_HALF_WIDTH),
            rng.gen_range(-SAMPLING_HALF_WIDTH..SAMPLING_HALF_WIDTH),
        ];
        if label * kind.surface(&p) >= min_signed {
            return Ok(p);
        }
    }
    Err(DataError::RejectionExhausted(MAX_ATTEMPTS))
}

/// 2-D points in `[-1, 1]^2`, alternating `+1`/`-1` labels, each at least
/// `margin` away (in surface value) from the class boundary.
pub fn gen_synthetic(
    kind: SyntheticKind,
    n_samples: usize,
    margin: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if n_samples < 4 {
        return Err(DataError::TooFewSamples {
            needed: 4,
            found: n_samples,
        });
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(DataError::InvalidMargin(margin));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        let p = draw_point(&mut rng, kind, y, margin)?;
        data.extend_from_slice(&p);
        labels.push(y);
    }
    Ok(Dataset {
        features: Matrix::from_row_major(n_samples, 2, data),
        labels,
        name: kind.name().to_string(),
        feature_names: Some(vec!["x1".into(), "x2".into()]),
        provenance: Provenance::Synthetic { kind, margin, seed },
        noise: None,
    })
}

/// Flips `label_flips` labels and appends `outliers` mislabelled points lying
/// at least three margins deep inside the opposite class.
pub fn inject_noise(
    data: &Dataset,
    label_flips: usize,
    outliers: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    let n = data.len();
    for requested in [label_flips, outliers] {
        if requested > n {
            return Err(DataError::NoiseCount {
                requested,
                available: n,
            });
        }
    }
    let mut out = data.clone();
    let mut record = data.noise.clone().unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if label_flips > 0 {
        let mut picked = sample(&mut rng, n, label_flips).into_vec();
        picked.sort_unstable();
        for &i in &picked {
            out.labels[i] = -out.labels[i];
        }
        record.flipped.extend(picked);
    }
    if outliers > 0 {
        let Provenance::Synthetic { kind, margin, .. } = data.provenance else {
            return Err(DataError::OutliersNeedSurface);
        };
        let cols = data.n_features();
        let mut feats = out.features.as_slice().to_vec();
        for j in 0..outliers {
            let y = if j % 2 == 0 { 1.0 } else { -1.0 };
            // lies on the -y side, labelled y
            let p = draw_point(&mut rng, kind, -y, 3.0 * margin)?;
            feats.extend_from_slice(&p[..cols.min(2)]);
            record.outliers.push(out.labels.len());
            out.labels.push(y);
        }
        out.features = Matrix::from_row_major(out.labels.len(), cols, feats);
    }
    if label_flips > 0 || outliers > 0 {
        out.noise = Some(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_csv_reader() {
        let m = read_numeric_csv("x1,x2\n1,2\n3,4\n".as_bytes(), HeaderMode::Auto).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let empty = read_numeric_csv("".as_bytes(), HeaderMode::Auto).unwrap();
        assert_eq!(empty.rows(), 0);
        assert!(matches!(
            read_numeric_csv("1,2\n3\n".as_bytes(), HeaderMode::Auto),
            Err(DataError::Ragged { row: 1, .. })
        ));
    }

    #[test]
    fn scaler_examples() {
        let x = Matrix::from_rows(&[vec![0.0, 7.0], vec![5.0, 7.0], vec![10.0, 7.0]]);
        let s = fit_scaler(&x);
        let scaled = apply_scaler(&s, &x).unwrap();
        assert_eq!(scaled.as_slice(), &[-1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.apply_row(&[20.0, 7.0]).unwrap(), vec![3.0, 0.0]);
        assert!(matches!(s.apply_row(&[1.0]), Err(DataError::Dimension { .. })));
    }

    #[test]
    fn csv_basic() {
        let ds = read_csv("1,2,1\n3,4,-1".as_bytes(), &CsvOptions::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.labels, vec![1.0, -1.0]);
        assert_eq!(ds.features.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn csv_zero_one_labels() {
        let opts = CsvOptions {
            label_rule: LabelRule::Negative("0".into()),
            ..Default::default()
        };
        let ds = read_csv("# comment\na,b,y\n1,2,0\n3,4,1\n5,6,0\n".as_bytes(), &opts).unwrap();
        assert_eq!(ds.labels, vec![-1.0, 1.0, -1.0]);
        assert_eq!(ds.feature_names, Some(vec!["a".to_string(), "b".to_string()]));
        let auto = read_csv("1,2,0\n3,4,1.0\n".as_bytes(), &CsvOptions::default()).unwrap();
        assert_eq!(auto.labels, vec![-1.0, 1.0]);
    }

    #[test]
    fn csv_label_first_column() {
        let opts = CsvOptions {
            label_column: LabelColumn::First,
            ..Default::default()
        };
        let ds = read_csv("1,2,3\n-1,4,5\n".as_bytes(), &opts).unwrap();
        assert_eq!(ds.labels, vec![1.0, -1.0]);
        assert_eq!(ds.features.as_slice(), &[2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn csv_errors() {
        let opts = CsvOptions::default();
        assert!(matches!(
            read_csv("1,2,1\n3,-1\n".as_bytes(), &opts),
            Err(DataError::Ragged { row: 1, .. })
        ));
        assert!(matches!(
            read_csv("1,2,1\n3,x,-1\n".as_bytes(), &opts),
            Err(DataError::NonNumeric { row: 1, col: 1, .. })
        ));
        assert!(matches!(
            read_csv("1,1\n2,2\n3,3\n".as_bytes(), &opts),
            Err(DataError::NeedsBinarization(3))
        ));
        assert!(matches!(
            read_csv("1,5\n2,5\n".as_bytes(), &opts),
            Err(DataError::UnmappableLabel(_))
        ));
        let ovr = CsvOptions {
            label_rule: LabelRule::OneVsRest("3".into()),
            ..Default::default()
        };
        let ds = read_csv("1,1\n2,2\n3,3\n".as_bytes(), &ovr).unwrap();
        assert_eq!(ds.labels, vec![-1.0, -1.0, 1.0]);
    }

    #[test]
    fn csv_empty_input() {
        let ds = read_csv("".as_bytes(), &CsvOptions::default()).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn label_rule_parsing() {
        assert_eq!("auto".parse::<LabelRule>().unwrap(), LabelRule::Auto);
        assert_eq!("neg:0".parse::<LabelRule>().unwrap(), LabelRule::Negative("0".into()));
        assert_eq!("ovr:2.0".parse::<LabelRule>().unwrap(), LabelRule::OneVsRest("2".into()));
        assert!("bogus".parse::<LabelRule>().is_err());
    }

    #[test]
    fn generator_certificate_and_determinism() {
        for kind in SyntheticKind::ALL {
            let a = gen_synthetic(kind, 300, 0.1, 7).unwrap();
            assert_eq!(a.len(), 300);
            assert!(a.has_both_classes());
            for (x, &y) in a.features.row_iter().zip(&a.labels) {
                assert!(y * kind.surface(x) >= 0.1);
            }
            let b = gen_synthetic(kind, 300, 0.1, 7).unwrap();
            assert_eq!(a, b);
        }
        assert!(matches!("ellipse".parse::<SyntheticKind>(), Err(DataError::UnknownKind(_))));
        assert!(gen_synthetic(SyntheticKind::Line, 3, 0.1, 1).is_err());
        assert!(matches!(
            gen_synthetic(SyntheticKind::Circle, 10, 50.0, 1),
            Err(DataError::RejectionExhausted(_))
        ));
    }

    #[test]
    fn noise_injection() {
        let base = gen_synthetic(SyntheticKind::Circle, 100, 0.1, 3).unwrap();
        let same = inject_noise(&base, 0, 0, 9).unwrap();
        assert_eq!(same, base);

        let noisy = inject_noise(&base, 2, 2, 9).unwrap();
        assert_eq!(noisy.len(), 102);
        let differing = (0..100).filter(|&i| noisy.labels[i] != base.labels[i]).count();
        assert_eq!(differing, 2);
        let rec = noisy.noise.as_ref().unwrap();
        assert_eq!(rec.outliers, vec![100, 101]);
        for &i in &rec.outliers {
            let y = noisy.labels[i];
            assert!(-y * SyntheticKind::Circle.surface(noisy.sample(i)) >= 0.3);
        }
        assert_eq!(noisy.clean_indices().len(), 98);
        assert_eq!(inject_noise(&base, 2, 2, 9).unwrap(), noisy);
        assert!(matches!(
            inject_noise(&base, 101, 0, 1),
            Err(DataError::NoiseCount { .. })
        ));
        let plain = Dataset::new(base.features.clone(), base.labels.clone(), "plain").unwrap();
        assert!(matches!(
            inject_noise(&plain, 0, 1, 1),
            Err(DataError::OutliersNeedSurface)
        ));
    }
}
