//! Linear discriminant analysis and the class-similarity matrix built from projected
//! class means.
//!
//! The pipeline is: scatter matrices, generalized eigenproblem, keep the leading
//! `num_components` directions, project each class mean, then turn pairwise cosine
//! distances into a row-stochastic matrix with a zero diagonal:
//!
//! ```text
//! d(i, j) = 1 - <v_i, v_j> / (|v_i| |v_j|)
//! s(i, j) = 1 / (1 + exp(d(i, j)))
//! A[i][j] = s(i, j) / sum_{l != i} s(i, l)     (i != j),   A[i][i] = 0
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::data::LabeledDataset;
use crate::numerics::{self, dot, norm2, Matrix, NumericsError};

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("class {0} has no samples")]
    MissingClass(usize),
    #[error("{requested} discriminant components requested, at most {max} (k - 1) available")]
    InvalidComponentCount { requested: usize, max: usize },
    #[error("LDA needs more samples ({samples}) than classes ({classes})")]
    TooFewSamples { samples: usize, classes: usize },
    #[error("projected mean of class {0} is the zero vector; cosine similarity undefined")]
    DegenerateMean(usize),
    #[error("similarity matrix needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("invalid similarity matrix: {0}")]
    InvalidSimilarity(String),
    #[error("similarity file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, LdaError>;

/// Row-sum tolerance accepted when loading a similarity file.
pub const LOAD_ROW_SUM_TOL: f64 = 1e-9;

/// How much regularization to add to the within-class scatter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `1e-6 · trace(Sw) / d`
    Auto,
    Fixed(f64),
}

/// Mean feature vector of each class, in class-index order.
pub fn class_means(data: &LabeledDataset) -> Result<Vec<Vec<f64>>> {
    let d = data.dim();
    let mut sums = vec![vec![0.0; d]; data.num_classes];
    let mut counts = vec![0usize; data.num_classes];
    for i in 0..data.len() {
        let c = data.labels[i];
        counts[c] += 1;
        for (s, x) in sums[c].iter_mut().zip(data.sample(i)) {
            *s += x;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(LdaError::MissingClass(missing));
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(sums)
}

/// Within-class and between-class scatter matrices.
pub fn scatter_matrices(data: &LabeledDataset, means: &[Vec<f64>]) -> (Matrix, Matrix) {
    let d = data.dim();
    let n = data.len() as f64;
    let counts = data.class_counts();

    let mut overall = vec![0.0; d];
    for (mean, &c) in means.iter().zip(&counts) {
        for (o, m) in overall.iter_mut().zip(mean) {
            *o += c as f64 * m;
        }
    }
    overall.iter_mut().for_each(|o| *o /= n);

    let mut within = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for i in 0..data.len() {
        let mean = &means[data.labels[i]];
        for ((c, x), m) in centered.iter_mut().zip(data.sample(i)).zip(mean) {
            *c = x - m;
        }
        within.add_outer(&centered, 1.0);
    }

    let mut between = Matrix::zeros(d, d);
    for (mean, &c) in means.iter().zip(&counts) {
        for ((dst, m), o) in centered.iter_mut().zip(mean).zip(&overall) {
            *dst = m - o;
        }
        between.add_outer(&centered, c as f64);
    }
    (within, between)
}

/// Fitted discriminant subspace with the class means projected into it.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// `num_components × d`; each row is a unit-length discriminant direction.
    pub projection: Matrix,
    /// Non-increasing, one per kept component.
    pub eigenvalues: Vec<f64>,
    /// `v_i = L μ_i` for every class.
    pub class_means: Vec<Vec<f64>>,
    pub num_components: usize,
    pub num_classes: usize,
    pub ridge: f64,
}

impl LdaModel {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.projection.mul_vec(x).expect("feature dimension checked at fit time")
    }

    /// Copy with the chosen projection rows negated (and the projected means with them).
    pub fn flip_components(&self, flip: &[bool]) -> LdaModel {
        let mut out = self.clone();
        for (r, &f) in flip.iter().enumerate().take(self.num_components) {
            if f {
                out.projection.row_mut(r).iter_mut().for_each(|v| *v = -*v);
                for mean in &mut out.class_means {
                    mean[r] = -mean[r];
                }
            }
        }
        out
    }
}

/// Fits LDA with `num_components` directions (`None` means `k - 1`).
pub fn fit_lda(data: &LabeledDataset, num_components: Option<usize>, ridge: Ridge) -> Result<LdaModel> {
    let k = data.num_classes;
    let max = k.saturating_sub(1);
    let lambda = num_components.unwrap_or(max);
    if lambda > max || lambda == 0 {
        return Err(LdaError::InvalidComponentCount { requested: lambda, max });
    }
    if data.len() <= k {
        return Err(LdaError::TooFewSamples {
            samples: data.len(),
            classes: k,
        });
    }
    let means = class_means(data)?;
    let (within, between) = scatter_matrices(data, &means);
    let ridge = match ridge {
        Ridge::Auto => numerics::default_ridge(&within),
        Ridge::Fixed(r) => r,
    };
    let eig = numerics::solve_generalized_symmetric_eig(&between, &within, ridge)?;
    // more components than the feature dimension cannot exist
    let lambda = lambda.min(data.dim());

    let d = data.dim();
    let mut rows = Vec::with_capacity(lambda * d);
    for c in 0..lambda {
        rows.extend(eig.vector(c));
    }
    let projection = Matrix::new(lambda, d, rows)?;
    let projected = means
        .iter()
        .map(|m| projection.mul_vec(m))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(LdaModel {
        projection,
        eigenvalues: eig.values[..lambda].to_vec(),
        class_means: projected,
        num_components: lambda,
        num_classes: k,
        ridge,
    })
}

/// `1 - cos(v_i, v_j)`
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - dot(a, b) / (norm2(a) * norm2(b))
}

/// Strictly decreasing map from distance to similarity.
pub fn similarity_from_distance(d: f64) -> f64 {
    1.0 / (1.0 + d.exp())
}

/// Row-stochastic `k × k` matrix with zero diagonal and positive off-diagonal entries.
/// Row `y` is the similarity distribution of class `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    entries: Matrix,
}

impl SimilarityMatrix {
    /// Validates the invariants with a row-sum tolerance of `row_sum_tol`.
    pub fn new(entries: Matrix, row_sum_tol: f64) -> Result<Self> {
        Self::validate(&entries, row_sum_tol).map_err(LdaError::InvalidSimilarity)?;
        Ok(Self { entries })
    }

    fn validate(m: &Matrix, tol: f64) -> std::result::Result<(), String> {
        if !m.is_square() {
            return Err(format!("{}x{} is not square", m.rows(), m.cols()));
        }
        if m.rows() < 2 {
            return Err("needs at least 2 classes".into());
        }
        for i in 0..m.rows() {
            validate_row(i, m.row(i), tol)?;
        }
        Ok(())
    }

    /// Off-diagonal entries `1 / (k - 1)`; MCEL with this matrix is label smoothing.
    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(LdaError::TooFewClasses(k));
        }
        let off = 1.0 / (k - 1) as f64;
        let mut m = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    m[(i, j)] = off;
                }
            }
        }
        Ok(Self { entries: m })
    }

    pub fn num_classes(&self) -> usize {
        self.entries.rows()
    }

    pub fn row(&self, y: usize) -> &[f64] {
        self.entries.row(y)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.entries
    }

    /// `max |A - Aᵀ|`. Row normalization keeps `A` symmetric only when every row of the
    /// raw similarity matrix has the same sum, so this is usually small but nonzero.
    pub fn asymmetry(&self) -> f64 {
        self.entries.asymmetry().unwrap_or(0.0)
    }

    /// `A'[perm[i]][perm[j]] = A[i][j]`
    pub fn permuted(&self, perm: &[usize]) -> SimilarityMatrix {
        let k = self.num_classes();
        let mut m = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                m[(perm[i], perm[j])] = self.entries[(i, j)];
            }
        }
        SimilarityMatrix { entries: m }
    }

    /// Plain-text form: optional `#` comments, a line with `k`, then `k` rows of `k`
    /// numbers written with 17 significant digits.
    pub fn to_text(&self) -> String {
        let k = self.num_classes();
        let mut out = format!("{k}\n");
        for i in 0..k {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (header_line, header) = lines
            .by_ref()
            .find(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .ok_or(LdaError::Format {
                line: 1,
                message: "missing class count".into(),
            })?;
        let k: usize = header.parse().map_err(|_| LdaError::Format {
            line: header_line,
            message: format!("expected class count, found '{header}'"),
        })?;
        if k < 2 {
            return Err(LdaError::Format {
                line: header_line,
                message: format!("class count {k} < 2"),
            });
        }
        let mut data = Vec::with_capacity(k * k);
        let mut last_line = header_line;
        for i in 0..k {
            let (line_no, line) = lines
                .by_ref()
                .find(|(_, l)| !l.is_empty())
                .ok_or(LdaError::Format {
                    line: last_line + 1,
                    message: format!("expected {k} rows, found {i}"),
                })?;
            last_line = line_no;
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| LdaError::Format {
                        line: line_no,
                        message: format!("cannot parse '{t}'"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != k {
                return Err(LdaError::Format {
                    line: line_no,
                    message: format!("row has {} entries, expected {k}", row.len()),
                });
            }
            validate_row(i, &row, LOAD_ROW_SUM_TOL).map_err(|message| LdaError::Format {
                line: line_no,
                message,
            })?;
            data.extend(row);
        }
        if let Some((line_no, extra)) = lines.find(|(_, l)| !l.is_empty()) {
            return Err(LdaError::Format {
                line: line_no,
                message: format!("unexpected trailing content '{extra}'"),
            });
        }
        Ok(Self {
            entries: Matrix::new(k, k, data)?,
        })
    }
}

fn validate_row(i: usize, row: &[f64], tol: f64) -> std::result::Result<(), String> {
    if row[i] != 0.0 {
        return Err(format!("diagonal entry A[{i}][{i}] = {} must be 0", row[i]));
    }
    if let Some((j, v)) = row.iter().enumerate().find(|&(j, v)| j != i && !(*v > 0.0)) {
        return Err(format!("off-diagonal entry A[{i}][{j}] = {v} must be positive"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(format!("row {i} sums to {sum}, expected 1"));
    }
    Ok(())
}

/// Similarity matrix from explicit class vectors (the projected means).
pub fn similarity_from_vectors(vectors: &[Vec<f64>]) -> Result<SimilarityMatrix> {
    let k = vectors.len();
    if k < 2 {
        return Err(LdaError::TooFewClasses(k));
    }
    if let Some(zero) = vectors.iter().position(|v| norm2(v) == 0.0) {
        return Err(LdaError::DegenerateMean(zero));
    }
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        let mut total = 0.0;
        for j in 0..k {
            if i != j {
                let s = similarity_from_distance(cosine_distance(&vectors[i], &vectors[j]));
                m[(i, j)] = s;
                total += s;
            }
        }
        m.row_mut(i).iter_mut().for_each(|v| *v /= total);
    }
    Ok(SimilarityMatrix { entries: m })
}

pub fn build_similarity_matrix(model: &LdaModel) -> Result<SimilarityMatrix> {
    similarity_from_vectors(&model.class_means)
}

pub fn save_similarity(a: &SimilarityMatrix, path: &Path) -> Result<()> {
    fs::write(path, a.to_text()).map_err(|source| LdaError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_similarity(path: &Path) -> Result<SimilarityMatrix> {
    let text = fs::read_to_string(path).map_err(|source| LdaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SimilarityMatrix::from_text(&text)
}
