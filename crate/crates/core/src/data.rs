//! Labeled datasets: CSV and IDX ingestion, Gaussian blobs, splits, standardization and
//! pairwise label-swap noise.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::numerics::{Matrix, NumericsError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("csv line {line}, column '{column}': cannot parse '{cell}' as a number")]
    BadCell {
        line: u64,
        column: String,
        cell: String,
    },
    #[error("label column '{0}' not found in header")]
    MissingLabelColumn(String),
    #[error("empty dataset: {0}")]
    Empty(String),
    #[error("idx format error at byte offset {offset}: {message}")]
    Idx { offset: usize, message: String },
    #[error("label {label} at row {row} is not below the class count {k}")]
    LabelOutOfRange { row: usize, label: usize, k: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("class {0} appears in more than one noise pair")]
    OverlappingPairs(usize),
    #[error("split {name} would receive zero samples")]
    EmptySplit { name: &'static str },
    #[error("class {0} has no samples in the training split")]
    MissingTrainClass(usize),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Feature matrix (one row per sample) with integer labels in `0..num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub feature_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(DataError::InvalidArgument(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if num_classes == 0 {
            return Err(DataError::InvalidArgument("num_classes must be at least 1".into()));
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(DataError::LabelOutOfRange {
                row,
                label,
                k: num_classes,
            });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.feature_names = Some(names);
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows `idx` in the given order. Panics on an empty selection.
    pub fn select(&self, idx: &[usize]) -> LabeledDataset {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(self.sample(i));
        }
        LabeledDataset {
            features: Matrix::new(idx.len(), d, data).expect("non-empty selection"),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Relabels every sample `y -> perm[y]`.
    pub fn relabel(&self, perm: &[usize]) -> LabeledDataset {
        let mut out = self.clone();
        for l in &mut out.labels {
            *l = perm[*l];
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let io_err = |source| DataError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
        let names: Vec<String> = match &self.feature_names {
            Some(n) => n.clone(),
            None => (0..self.dim()).map(|j| format!("x{j}")).collect(),
        };
        writeln!(out, "{},label", names.join(",")).map_err(io_err)?;
        for i in 0..self.len() {
            let row: Vec<String> = self.sample(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{}", row.join(","), self.labels[i]).map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

/// How CSV label strings were turned into class indices.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelMapping {
    /// Labels were non-negative integers and are used as-is.
    Integer,
    /// Class `i` is the `i`-th distinct label string seen in the file.
    FirstAppearance(Vec<String>),
}

/// Loads a headed CSV file; every column except `label_column` is a numeric feature.
///
/// If every label parses as a non-negative integer the values are used directly and
/// `k = max + 1`; otherwise labels are mapped by first appearance.
pub fn load_csv(path: &Path, label_column: &str) -> Result<(LabeledDataset, LabelMapping)> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text, label_column)
}

pub fn parse_csv(text: &str, label_column: &str) -> Result<(LabeledDataset, LabelMapping)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| DataError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.is_empty() {
        return Err(DataError::Empty("csv has no header".into()));
    }
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    if feature_names.is_empty() {
        return Err(DataError::Empty("csv has no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        for (i, cell) in record.iter().enumerate() {
            if i == label_idx {
                if cell.is_empty() {
                    return Err(DataError::BadCell {
                        line,
                        column: header[i].to_string(),
                        cell: cell.to_string(),
                    });
                }
                raw_labels.push(cell.to_string());
                continue;
            }
            let value: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                DataError::BadCell {
                    line,
                    column: header[i].to_string(),
                    cell: cell.to_string(),
                }
            })?;
            features.push(value);
        }
    }
    if raw_labels.is_empty() {
        return Err(DataError::Empty("csv has a header but no data rows".into()));
    }

    let integer: Option<Vec<usize>> = raw_labels.iter().map(|l| l.parse().ok()).collect();
    let (labels, mapping, k) = match integer {
        Some(labels) => {
            let k = labels.iter().max().map_or(0, |m| m + 1);
            (labels, LabelMapping::Integer, k)
        }
        None => {
            let mut names: Vec<String> = Vec::new();
            let mut index: HashMap<&str, usize> = HashMap::new();
            let mut labels = Vec::with_capacity(raw_labels.len());
            for l in &raw_labels {
                let next = index.len();
                let id = *index.entry(l.as_str()).or_insert_with(|| {
                    names.push(l.clone());
                    next
                });
                labels.push(id);
            }
            let k = names.len();
            (labels, LabelMapping::FirstAppearance(names), k)
        }
    };
    let n = labels.len();
    let matrix = Matrix::new(n, feature_names.len(), features)?;
    let data = LabeledDataset::new(matrix, labels, k)?.with_feature_names(feature_names);
    Ok((data, mapping))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Idx {
            offset,
            message: "truncated header".into(),
        })
}

/// Loads an IDX image/label pair (MNIST layout). Pixels are scaled to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let read = |p: &Path| {
        fs::read(p).map_err(|source| DataError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    parse_idx(&read(images_path)?, &read(labels_path)?)
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let magic = read_be_u32(images, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::Idx {
            offset: 0,
            message: format!("image file magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let lmagic = read_be_u32(labels, 0)?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(DataError::Idx {
            offset: 0,
            message: format!("label file magic {lmagic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let n = read_be_u32(images, 4)? as usize;
    let rows = read_be_u32(images, 8)? as usize;
    let cols = read_be_u32(images, 12)? as usize;
    let n_labels = read_be_u32(labels, 4)? as usize;
    if n != n_labels {
        return Err(DataError::Idx {
            offset: 4,
            message: format!("{n} images but {n_labels} labels"),
        });
    }
    if n == 0 || rows == 0 || cols == 0 {
        return Err(DataError::Idx {
            offset: 4,
            message: "zero-sized dimension".into(),
        });
    }
    let pixels = rows * cols;
    let need = 16 + n * pixels;
    if images.len() < need {
        return Err(DataError::Idx {
            offset: images.len(),
            message: format!("image file truncated, expected {need} bytes"),
        });
    }
    if labels.len() < 8 + n {
        return Err(DataError::Idx {
            offset: labels.len(),
            message: format!("label file truncated, expected {} bytes", 8 + n),
        });
    }
    let features: Vec<f64> = images[16..need].iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = labels[8..8 + n].iter().map(|&b| usize::from(b)).collect();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(Matrix::new(n, pixels, features)?, labels, k)
}

/// Parameters for isotropic Gaussian class clusters.
#[derive(Debug, Clone)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// One center per class; drawn uniformly from `[-10, 10]^dim` when absent.
    pub centers: Option<Vec<Vec<f64>>>,
    pub spread: f64,
    pub seed: u64,
}

/// Samples `per_class` points around each center, class by class.
pub fn gen_blobs(spec: &BlobSpec) -> Result<LabeledDataset> {
    let BlobSpec {
        num_classes: k,
        per_class,
        dim,
        spread,
        seed,
        ..
    } = *spec;
    if k < 2 || per_class == 0 || dim == 0 {
        return Err(DataError::InvalidArgument(format!(
            "blobs need k >= 2, per_class >= 1, dim >= 1 (got {k}, {per_class}, {dim})"
        )));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(DataError::InvalidArgument(format!("spread must be positive, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = match &spec.centers {
        Some(c) => {
            if c.len() != k {
                return Err(DataError::InvalidArgument(format!(
                    "{} centers supplied for {k} classes",
                    c.len()
                )));
            }
            if let Some(bad) = c.iter().position(|v| v.len() != dim) {
                return Err(DataError::InvalidArgument(format!(
                    "center {bad} has dimension {}, expected {dim}",
                    c[bad].len()
                )));
            }
            c.clone()
        }
        None => (0..k)
            .map(|_| (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect(),
    };
    let noise = Normal::new(0.0, spread).expect("positive spread");
    let mut data = Vec::with_capacity(k * per_class * dim);
    let mut labels = Vec::with_capacity(k * per_class);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            data.extend(center.iter().map(|c| c + noise.sample(&mut rng)));
            labels.push(class);
        }
    }
    LabeledDataset::new(Matrix::new(k * per_class, dim, data)?, labels, k)
}

/// Disjoint class pairs whose labels get exchanged with probability `swap_fraction`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub pairs: Vec<(usize, usize)>,
    pub swap_fraction: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.swap_fraction) {
            return Err(DataError::InvalidArgument(format!(
                "swap fraction {} outside [0, 1]",
                self.swap_fraction
            )));
        }
        let mut seen = vec![false; k];
        for &(a, b) in &self.pairs {
            for c in [a, b] {
                if c >= k {
                    return Err(DataError::InvalidArgument(format!(
                        "noise pair names class {c} but k = {k}"
                    )));
                }
                if seen[c] {
                    return Err(DataError::OverlappingPairs(c));
                }
                seen[c] = true;
            }
        }
        Ok(())
    }
}

/// Randomly groups classes into `k / 2` disjoint pairs (one class left out when `k` is odd).
pub fn random_pairing(k: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut classes: Vec<usize> = (0..k).collect();
    classes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    classes
        .chunks_exact(2)
        .map(|p| (p[0].min(p[1]), p[0].max(p[1])))
        .collect()
}

/// Swaps labels within each pair: every sample of class `a` independently becomes `b` with
/// probability `swap_fraction`, and vice versa. Returns the noisy copy and the sorted row
/// indices whose label changed.
pub fn inject_pairwise_noise(
    data: &LabeledDataset,
    spec: &NoiseSpec,
) -> Result<(LabeledDataset, Vec<usize>)> {
    spec.validate(data.num_classes)?;
    let mut partner = vec![None; data.num_classes];
    for &(a, b) in &spec.pairs {
        partner[a] = Some(b);
        partner[b] = Some(a);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noisy = data.clone();
    let mut mask = Vec::new();
    for (row, label) in noisy.labels.iter_mut().enumerate() {
        let Some(other) = partner[*label] else {
            continue;
        };
        // one draw per paired row keeps the stream independent of the fraction
        let u: f64 = rng.random();
        if u < spec.swap_fraction {
            *label = other;
            mask.push(row);
        }
    }
    Ok((noisy, mask))
}

/// Train/validation/test partition plus the source row of every member.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledDataset,
    pub val: Option<LabeledDataset>,
    pub test: Option<LabeledDataset>,
    pub train_rows: Vec<usize>,
    pub val_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Seeded shuffle followed by contiguous slicing (train, then validation, then test).
/// A fraction of exactly zero produces no split; a positive fraction that rounds to zero
/// rows is an error.
pub fn split(data: &LabeledDataset, fractions: [f64; 3], seed: u64) -> Result<Split> {
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(DataError::InvalidArgument(format!(
            "split fractions must be non-negative, got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidArgument(format!(
            "split fractions sum to {total}, expected 1"
        )));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // train absorbs rounding leftovers
    let n_val = (fractions[1] * n as f64).round() as usize;
    let n_test = (fractions[2] * n as f64).round() as usize;
    let n_train = n.saturating_sub(n_val + n_test);
    let sizes = [(n_train, "train"), (n_val, "validation"), (n_test, "test")];
    for (f, (size, name)) in fractions.iter().zip(sizes) {
        if *f > 0.0 && size == 0 {
            return Err(DataError::EmptySplit { name });
        }
    }
    if n_train == 0 {
        return Err(DataError::EmptySplit { name: "train" });
    }

    let train_rows = order[..n_train].to_vec();
    let val_rows = order[n_train..n_train + n_val].to_vec();
    let test_rows = order[n_train + n_val..n_train + n_val + n_test].to_vec();
    let train = data.select(&train_rows);
    if let Some(missing) = train.class_counts().iter().position(|&c| c == 0) {
        return Err(DataError::MissingTrainClass(missing));
    }
    let nonempty = |rows: &[usize]| (!rows.is_empty()).then(|| data.select(rows));
    Ok(Split {
        val: nonempty(&val_rows),
        test: nonempty(&test_rows),
        train,
        train_rows,
        val_rows,
        test_rows,
    })
}

/// Per-feature mean and standard deviation taken from a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics; zero-variance features get a divisor of 1.
    pub fn fit(train: &LabeledDataset) -> Self {
        let n = train.len() as f64;
        let d = train.dim();
        let mut mean = vec![0.0; d];
        for i in 0..train.len() {
            for (m, x) in mean.iter_mut().zip(train.sample(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..train.len() {
            for ((v, x), m) in var.iter_mut().zip(train.sample(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, data: &LabeledDataset) -> LabeledDataset {
        let mut out = data.clone();
        let d = data.dim();
        for (idx, v) in out.features.as_mut_slice().iter_mut().enumerate() {
            let j = idx % d;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        out
    }
}

/// Standardizes `train` and every dataset in `others` with statistics from `train` alone.
pub fn standardize(
    train: &LabeledDataset,
    others: &[&LabeledDataset],
) -> (LabeledDataset, Vec<LabeledDataset>, Standardizer) {
    let s = Standardizer::fit(train);
    let rest = others.iter().map(|d| s.apply(d)).collect();
    (s.apply(train), rest, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledDataset {
        let m = Matrix::from_rows(&[
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![2.0, 0.0],
            vec![3.0, 0.0],
        ])
        .unwrap();
        LabeledDataset::new(m, vec![0, 0, 1, 1], 2).unwrap()
    }

    #[test]
    fn csv_hand_file() {
        let text = "a,b,label\n1.5,2,cat\n-3,4e1,dog\n0,0,cat\n";
        let (d, mapping) = parse_csv(text, "label").unwrap();
        assert_eq!(d.features.as_slice(), &[1.5, 2.0, -3.0, 40.0, 0.0, 0.0]);
        assert_eq!(d.labels, vec![0, 1, 0]);
        assert_eq!(d.num_classes, 2);
        assert_eq!(
            mapping,
            LabelMapping::FirstAppearance(vec!["cat".into(), "dog".into()])
        );
        assert_eq!(d.feature_names.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));
    }

    #[test]
    fn csv_integer_labels_used_directly() {
        let (d, mapping) = parse_csv("label,x\n2,1\n0,2\n", "label").unwrap();
        assert_eq!(mapping, LabelMapping::Integer);
        assert_eq!(d.labels, vec![2, 0]);
        assert_eq!(d.num_classes, 3);
    }

    #[test]
    fn csv_missing_cell_names_row_and_column() {
        let err = parse_csv("a,b,label\n1,2,x\n3,,y\n", "label").unwrap_err();
        match err {
            DataError::BadCell { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_and_empty() {
        let err = parse_csv("a,b,label\n1,2,x\n3,y\n", "label").unwrap_err();
        assert!(matches!(err, DataError::Csv { line: 3, .. }), "{err:?}");
        assert!(matches!(parse_csv("a,label\n", "label"), Err(DataError::Empty(_))));
        assert!(matches!(
            parse_csv("a,b\n1,2\n", "label"),
            Err(DataError::MissingLabelColumn(_))
        ));
    }

    fn idx_pair() -> (Vec<u8>, Vec<u8>) {
        let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        images.extend_from_slice(&[0, 255, 51, 102, 255, 0, 0, 255]);
        let labels = vec![0, 0, 8, 1, 0, 0, 0, 2, 1, 0];
        (images, labels)
    }

    #[test]
    fn idx_minimal_pair() {
        let (images, labels) = idx_pair();
        let d = parse_idx(&images, &labels).unwrap();
        assert_eq!(d.features.shape(), (2, 4));
        assert_eq!(d.features.as_slice(), &[0.0, 1.0, 0.2, 0.4, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.labels, vec![1, 0]);
        assert_eq!(d.num_classes, 2);
    }

    #[test]
    fn idx_errors() {
        let (images, labels) = idx_pair();
        let mut bad_labels = labels.clone();
        bad_labels[3] = 3;
        assert!(matches!(parse_idx(&images, &bad_labels), Err(DataError::Idx { offset: 0, .. })));
        let mut short_count = labels.clone();
        short_count[7] = 1;
        assert!(matches!(parse_idx(&images, &short_count), Err(DataError::Idx { offset: 4, .. })));
        let truncated = &images[..images.len() - 1];
        assert!(matches!(parse_idx(truncated, &labels), Err(DataError::Idx { offset: 23, .. })));
    }

    #[test]
    fn blobs_degenerate_spread_hits_centers() {
        let centers = vec![vec![1.0, 2.0], vec![-3.0, 0.5]];
        let d = gen_blobs(&BlobSpec {
            num_classes: 2,
            per_class: 5,
            dim: 2,
            centers: Some(centers.clone()),
            spread: 1e-9,
            seed: 3,
        })
        .unwrap();
        for i in 0..d.len() {
            for (x, c) in d.sample(i).iter().zip(&centers[d.labels[i]]) {
                assert!((x - c).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn blobs_reject_wrong_center_count() {
        let err = gen_blobs(&BlobSpec {
            num_classes: 3,
            per_class: 5,
            dim: 1,
            centers: Some(vec![vec![0.0], vec![1.0]]),
            spread: 1.0,
            seed: 0,
        });
        assert!(matches!(err, Err(DataError::InvalidArgument(_))));
    }

    #[test]
    fn noise_no_op_and_total_swap() {
        let d = tiny();
        let zero = NoiseSpec { pairs: vec![(0, 1)], swap_fraction: 0.0, seed: 1 };
        let (same, mask) = inject_pairwise_noise(&d, &zero).unwrap();
        assert_eq!(same, d);
        assert!(mask.is_empty());
        let all = NoiseSpec { pairs: vec![(0, 1)], swap_fraction: 1.0, seed: 1 };
        let (swapped, mask) = inject_pairwise_noise(&d, &all).unwrap();
        assert_eq!(swapped.labels, vec![1, 1, 0, 0]);
        assert_eq!(mask, vec![0, 1, 2, 3]);
        assert_eq!(swapped.features, d.features);
    }

    #[test]
    fn noise_rejects_overlapping_pairs() {
        let d = gen_blobs(&BlobSpec {
            num_classes: 3,
            per_class: 2,
            dim: 1,
            centers: None,
            spread: 1.0,
            seed: 0,
        })
        .unwrap();
        let spec = NoiseSpec { pairs: vec![(0, 1), (1, 2)], swap_fraction: 0.5, seed: 0 };
        assert!(matches!(inject_pairwise_noise(&d, &spec), Err(DataError::OverlappingPairs(1))));
    }

    #[test]
    fn random_pairing_is_disjoint() {
        let pairs = random_pairing(10, 42);
        assert_eq!(pairs.len(), 5);
        let mut seen: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert_eq!(pairs, random_pairing(10, 42));
    }

    #[test]
    fn split_sizes_and_degenerate() {
        let d = gen_blobs(&BlobSpec {
            num_classes: 4,
            per_class: 250,
            dim: 2,
            centers: None,
            spread: 1.0,
            seed: 9,
        })
        .unwrap();
        let s = split(&d, [0.8, 0.1, 0.1], 5).unwrap();
        assert_eq!(s.train.len(), 800);
        assert_eq!(s.val.as_ref().unwrap().len(), 100);
        assert_eq!(s.test.as_ref().unwrap().len(), 100);
        let again = split(&d, [0.8, 0.1, 0.1], 5).unwrap();
        assert_eq!(s.train_rows, again.train_rows);
        assert_eq!(s.test_rows, again.test_rows);

        let all = split(&d, [1.0, 0.0, 0.0], 5).unwrap();
        assert_eq!(all.train.len(), 1000);
        assert!(all.val.is_none() && all.test.is_none());
    }

    #[test]
    fn split_rejects_starved_partition() {
        let d = tiny();
        assert!(matches!(split(&d, [0.9, 0.05, 0.05], 0), Err(DataError::EmptySplit { .. })));
        assert!(split(&d, [0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn standardize_constant_feature_and_stats() {
        let m = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0], vec![8.0, 5.0]]).unwrap();
        let d = LabeledDataset::new(m, vec![0, 1, 0], 2).unwrap();
        let (z, _, s) = standardize(&d, &[]);
        assert_eq!(s.std[1], 1.0);
        assert!(z.features.column(1).iter().all(|v| *v == 0.0));
        let col = z.features.column(0);
        let mean: f64 = col.iter().sum::<f64>() / 3.0;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!(mean.abs() <= 1e-12);
        assert!((sd - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn standardize_uses_train_only() {
        let d = tiny();
        let other = tiny();
        let (_, _, s1) = standardize(&d, &[&other]);
        let mut mutated = other.clone();
        mutated.features.as_mut_slice()[0] = 1e6;
        let (_, _, s2) = standardize(&d, &[&mutated]);
        assert_eq!(s1, s2);
    }
}
