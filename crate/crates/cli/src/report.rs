//! Report payloads and the files they are written to.
//!
//! Payload files never contain timing; wall-clock goes to a separate `meta.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mcel::net::{EpochRecord, Evaluation};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Appends one JSON object per line, flushing after each record so interrupted runs keep
/// what they produced.
pub struct JsonLines {
    out: BufWriter<File>,
    path: PathBuf,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn push<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        self.out.flush().with_context(|| format!("writing {}", self.path.display()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub command: String,
    pub wall_clock_seconds: f64,
}

/// Everything a single training run reports.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub num_classes: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub test: Option<Evaluation>,
    pub similarity_sha256: Option<String>,
    /// Per-class weights after training (soft per-class runs).
    pub learned_epsilons: Option<Vec<f64>>,
    /// Mixture rows after training (soft matrix runs).
    pub learned_mixture: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRun {
    pub epsilon: f64,
    pub seed: u64,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub epsilon: f64,
    pub mean_val_accuracy: f64,
    /// Sample standard deviation over seeds; zero for a single seed.
    pub std_val_accuracy: f64,
    pub mean_test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridResult {
    pub note: &'static str,
    pub points: Vec<GridPoint>,
    pub selected_epsilon: f64,
    pub runs: Vec<GridRun>,
}

pub const GRID_NOTE: &str = "epsilon grid over [0, 0.5): 0.5 itself is excluded; the default grid is \
0, 0.1, 0.2, 0.3, 0.4 plus a 0.45 guard point. Selection maximizes mean validation accuracy, ties go \
to the smaller epsilon.";

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// First index attaining the maximum, so earlier (smaller-ε) entries win ties.
pub fn argmax_first(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > values[best] { i } else { best })
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseRun {
    pub fraction: f64,
    pub seed: u64,
    pub variant: &'static str,
    pub epsilon: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub paired_test_accuracy: f64,
    pub flipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseSummary {
    pub fraction: f64,
    pub median_ce: f64,
    pub median_mcel: f64,
    /// Seeds where the selected MCEL run beats cross-entropy on test accuracy.
    pub mcel_wins: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseReport {
    pub config: ExperimentConfig,
    pub pairs: Vec<(usize, usize)>,
    pub summary: Vec<NoiseSummary>,
    pub runs: Vec<NoiseRun>,
    /// Every MCEL run the selection chose from.
    pub candidates: Vec<NoiseRun>,
}

pub fn write_noise_csv(path: &Path, runs: &[NoiseRun]) -> Result<()> {
    let mut out = String::from("fraction,seed,variant,epsilon,val_acc,test_acc,paired_test_acc,flipped\n");
    for r in runs {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.fraction, r.seed, r.variant, r.epsilon, r.val_accuracy, r.test_accuracy, r.paired_test_accuracy, r.flipped
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_grid_csv(path: &Path, runs: &[GridRun]) -> Result<()> {
    let mut out = String::from("epsilon,seed,best_epoch,val_acc,test_acc\n");
    for r in runs {
        let test = r.test_accuracy.map(|t| t.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{}\n", r.epsilon, r.seed, r.best_epoch, r.val_accuracy, test));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}
