//! The five subcommands, usable as library calls so tests can drive them directly.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mcel::data::{self, gen_blobs, inject_pairwise_noise, random_pairing, BlobSpec, NoiseSpec};
use mcel::gradcheck::{self, CheckReport, GradcheckConfig};
use mcel::lda::{self, build_similarity_matrix, fit_lda, Ridge};
use mcel::loss::{MixingSpec, Mixture};
use mcel::net::{evaluate, fit, EpochRecord, LossConfig, MlpModel, TrainConfig};
use mcel::{Exec, LabeledDataset, SimilarityMatrix};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, SimilaritySource, Variant};
use crate::report::{self, GridPoint, GridResult, GridRun, JsonLines, Meta, NoiseReport, NoiseRun, NoiseSummary, RunReport};

/// Bad flags or flag combinations (exit status 1, like configuration errors).
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// At least one gradient check exceeded its tolerance (exit status 3).
#[derive(Debug, Error)]
#[error("{failed} gradient check(s) exceeded the tolerance")]
pub struct GradcheckFailed {
    pub failed: usize,
}

/// Where the dataset comes from; exactly one source must be set.
#[derive(Debug, Clone, Default)]
pub struct DataArgs {
    pub csv: Option<PathBuf>,
    pub label_col: Option<String>,
    pub idx: Option<(PathBuf, PathBuf)>,
    /// `k,per_class,dim,spread`
    pub blobs: Option<String>,
}

fn parse_blobs(spec: &str, cfg: &ExperimentConfig) -> Result<BlobSpec> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let usage = || UsageError(format!("--blobs expects k,per_class,dim,spread, got `{spec}`"));
    if parts.len() != 4 {
        return Err(usage().into());
    }
    Ok(BlobSpec {
        num_classes: parts[0].parse().map_err(|_| usage())?,
        per_class: parts[1].parse().map_err(|_| usage())?,
        dim: parts[2].parse().map_err(|_| usage())?,
        spread: parts[3].parse().map_err(|_| usage())?,
        centers: cfg.data.centers.clone(),
        seed: cfg.data.seed,
    })
}

pub fn load_data(args: &DataArgs, cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    let given = usize::from(args.csv.is_some()) + usize::from(args.idx.is_some()) + usize::from(args.blobs.is_some());
    if given != 1 {
        return Err(UsageError("give exactly one of --data-csv, --data-idx or --blobs".into()).into());
    }
    if let Some(path) = &args.csv {
        let col = args
            .label_col
            .as_deref()
            .ok_or_else(|| UsageError("--data-csv needs --label-col".into()))?;
        let (data, _) = data::load_csv(path, col)?;
        return Ok(data);
    }
    if let Some((images, labels)) = &args.idx {
        return Ok(data::load_idx(images, labels)?);
    }
    let spec = parse_blobs(args.blobs.as_deref().expect("one source"), cfg)?;
    gen_blobs(&spec).map_err(|e| UsageError(format!("--blobs: {e}")).into())
}

/// Train/validation/test sets after splitting, standardization and optional train noise.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: Option<LabeledDataset>,
    /// Source row of every training sample.
    pub train_rows: Vec<usize>,
}

pub fn noise_pairs(cfg: &ExperimentConfig, k: usize) -> Vec<(usize, usize)> {
    cfg.noise.pairs.clone().unwrap_or_else(|| random_pairing(k, cfg.data.seed))
}

/// Splits with the data seed and standardizes with training statistics. Applies the
/// configured training-set noise unless `clean` is set.
pub fn prepare(data: &LabeledDataset, cfg: &ExperimentConfig, clean: bool) -> Result<Prepared> {
    let s = data::split(data, cfg.data.split, cfg.data.seed)?;
    let val = s.val.expect("validation fraction is positive");
    let (mut train, val, test) = if cfg.data.standardize {
        let mut others = vec![&val];
        others.extend(s.test.as_ref());
        let (train, rest, _) = data::standardize(&s.train, &others);
        let mut rest = rest.into_iter();
        let val = rest.next().expect("validation set");
        (train, val, rest.next())
    } else {
        (s.train, val, s.test)
    };
    if !clean && cfg.noise.train_fraction > 0.0 {
        let spec = NoiseSpec {
            pairs: noise_pairs(cfg, data.num_classes),
            swap_fraction: cfg.noise.train_fraction,
            seed: cfg.data.seed,
        };
        train = inject_pairwise_noise(&train, &spec)?.0;
    }
    Ok(Prepared {
        train,
        val,
        test,
        train_rows: s.train_rows,
    })
}

fn lda_ridge(cfg: &ExperimentConfig) -> Ridge {
    cfg.lda.ridge.map_or(Ridge::Auto, Ridge::Fixed)
}

pub fn lda_similarity(train: &LabeledDataset, cfg: &ExperimentConfig) -> Result<SimilarityMatrix> {
    let model = fit_lda(train, cfg.lda.components, lda_ridge(cfg))?;
    Ok(build_similarity_matrix(&model)?)
}

/// The similarity matrix the configured loss needs, if any.
pub fn resolve_similarity(cfg: &ExperimentConfig, train: &LabeledDataset) -> Result<Option<SimilarityMatrix>> {
    if !cfg.needs_similarity() {
        return Ok(None);
    }
    let a = match &cfg.loss.similarity {
        None => {
            return Err(ConfigError::Invalid(format!(
                "loss variant {:?} with nonzero epsilon needs `similarity = lda` or a similarity file in [loss]",
                cfg.loss.variant
            ))
            .into())
        }
        Some(SimilaritySource::Lda) => lda_similarity(train, cfg)?,
        Some(SimilaritySource::File(path)) => lda::load_similarity(path)
            .map_err(|e| ConfigError::Invalid(format!("similarity file {}: {e}", path.display())))?,
    };
    if a.num_classes() != train.num_classes {
        return Err(ConfigError::Invalid(format!(
            "similarity matrix has {} classes, dataset has {}",
            a.num_classes(),
            train.num_classes
        ))
        .into());
    }
    Ok(Some(a))
}

pub fn loss_config(cfg: &ExperimentConfig, a: Option<&SimilarityMatrix>, k: usize) -> Result<LossConfig> {
    let per_class = || -> Result<Vec<f64>> {
        match &cfg.loss.epsilons {
            Some(e) if e.len() != k => {
                Err(ConfigError::Invalid(format!("[loss] epsilons has {} entries for {k} classes", e.len())).into())
            }
            Some(e) => Ok(e.clone()),
            None => Ok(vec![cfg.loss.epsilon; k]),
        }
    };
    let penalties = cfg.loss.soft.then_some(cfg.loss.penalties);
    let mixing = match cfg.loss.variant {
        Variant::CrossEntropy => return Ok(LossConfig::cross_entropy()),
        Variant::Mcel => return Ok(LossConfig::mcel(cfg.loss.epsilon)),
        Variant::SgMcel => MixingSpec::PerClass { epsilons: per_class()? },
        Variant::Gmcel => {
            let a = a.expect("similarity resolved for gmcel");
            MixingSpec::Matrix(Mixture::from_similarity(a, &per_class()?)?)
        }
    };
    Ok(LossConfig { mixing, penalties })
}

fn layer_sizes(cfg: &ExperimentConfig, dim: usize, k: usize) -> Vec<usize> {
    let mut sizes = vec![dim];
    sizes.extend(&cfg.train.hidden);
    sizes.push(k);
    sizes
}

fn train_config(cfg: &ExperimentConfig, loss: LossConfig, exec: Exec) -> TrainConfig {
    TrainConfig {
        learning_rate: cfg.train.learning_rate,
        momentum: cfg.train.momentum,
        weight_decay: cfg.train.weight_decay,
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        lr_decay: cfg.train.lr_decay,
        seed: cfg.train.seed,
        loss,
        exec,
    }
}

pub struct RunOutcome {
    pub report: RunReport,
    pub model: MlpModel,
}

/// One training run on prepared data: fit, restore the best-validation snapshot, test.
pub fn train_run(
    prepared: &Prepared,
    cfg: &ExperimentConfig,
    a: Option<&SimilarityMatrix>,
    exec: Exec,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunOutcome> {
    let train = &prepared.train;
    let k = train.num_classes;
    let loss = loss_config(cfg, a, k)?;
    let model = MlpModel::init(&layer_sizes(cfg, train.dim(), k), cfg.train.seed)?;
    let out = fit(model, train_config(cfg, loss, exec), train, &prepared.val, a, on_epoch)?;
    let k_prime = cfg.train.top_k.min(k);
    let test = prepared.test.as_ref().map(|t| evaluate(&out.best_model, t, k_prime, exec));
    let (learned_epsilons, learned_mixture) = match (&out.best_mixing, cfg.loss.soft) {
        (MixingSpec::PerClass { epsilons }, true) => (Some(epsilons.clone()), None),
        (MixingSpec::Matrix(m), true) => (None, Some(m.e.to_rows())),
        _ => (None, None),
    };
    let report = RunReport {
        config: cfg.clone(),
        num_classes: k,
        train_size: train.len(),
        val_size: prepared.val.len(),
        test_size: prepared.test.as_ref().map_or(0, LabeledDataset::len),
        epochs: out.history,
        best_epoch: out.best_epoch,
        best_val_accuracy: out.best_val_accuracy,
        test,
        similarity_sha256: a.map(|a| report::sha256_hex(a.to_text().as_bytes())),
        learned_epsilons,
        learned_mixture,
    };
    Ok(RunOutcome {
        report,
        model: out.best_model,
    })
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn write_meta(out: &Path, command: &str, started: Instant) -> Result<()> {
    report::write_json(
        &out.join("meta.json"),
        &Meta {
            command: command.to_string(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    )
}

pub fn cmd_train(cfg: &ExperimentConfig, data: &DataArgs, out: &Path, exec: Exec) -> Result<RunReport> {
    let started = Instant::now();
    let dataset = load_data(data, cfg)?;
    let prepared = prepare(&dataset, cfg, false)?;
    let a = resolve_similarity(cfg, &prepared.train)?;
    create_out(out)?;
    if let Some(a) = &a {
        lda::save_similarity(a, &out.join("similarity.txt"))?;
    }
    let mut stream = JsonLines::create(&out.join("epochs.jsonl"))?;
    let mut stream_err = None;
    let outcome = train_run(&prepared, cfg, a.as_ref(), exec, |r| {
        if let Err(e) = stream.push(r) {
            stream_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = stream_err {
        return Err(e);
    }
    outcome.model.save(&out.join("model.bin"))?;
    report::write_json(&out.join("report.json"), &outcome.report)?;
    write_meta(out, "train", started)?;
    Ok(outcome.report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimilarityReport {
    pub num_classes: usize,
    pub num_components: usize,
    pub ridge: f64,
    pub eigenvalues: Vec<f64>,
    pub asymmetry: f64,
    pub sha256: String,
}

/// Fits LDA on the whole dataset and writes the similarity matrix plus a long-form
/// `i,j,a_ij` table for heatmaps.
pub fn cmd_similarity(
    cfg: &ExperimentConfig,
    data: &DataArgs,
    out: &Path,
    components: Option<usize>,
    ridge: Option<f64>,
) -> Result<SimilarityReport> {
    let started = Instant::now();
    let dataset = load_data(data, cfg)?;
    let components = components.or(cfg.lda.components);
    let ridge = ridge.or(cfg.lda.ridge).map_or(Ridge::Auto, Ridge::Fixed);
    let model = fit_lda(&dataset, components, ridge)?;
    let a = build_similarity_matrix(&model)?;
    create_out(out)?;
    let text = a.to_text();
    fs::write(out.join("similarity.txt"), &text).context("writing similarity.txt")?;
    let k = a.num_classes();
    let mut heat = String::from("i,j,a_ij\n");
    for i in 0..k {
        for j in 0..k {
            heat.push_str(&format!("{i},{j},{:e}\n", a.get(i, j)));
        }
    }
    fs::write(out.join("heatmap.csv"), heat).context("writing heatmap.csv")?;
    let rep = SimilarityReport {
        num_classes: k,
        num_components: model.num_components,
        ridge: model.ridge,
        eigenvalues: model.eigenvalues.clone(),
        asymmetry: a.asymmetry(),
        sha256: report::sha256_hex(text.as_bytes()),
    };
    report::write_json(&out.join("similarity.json"), &rep)?;
    write_meta(out, "similarity", started)?;
    Ok(rep)
}

/// Runs `jobs` (possibly in parallel), keeping results in job order. On any failure the
/// successful results go to `partial` and the first error in job order is returned.
fn run_children<J: Sync, R: Send>(
    jobs: &[J],
    exec: Exec,
    run: impl Fn(&J) -> Result<R> + Sync + Send,
    partial: impl FnOnce(&[R]) -> Result<()>,
) -> Result<Vec<R>> {
    let results = exec.map(jobs, |j| run(j).map_err(|e| format!("{e:#}")));
    let mut ok = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        partial(&ok)?;
        bail!("child run failed: {e}");
    }
    Ok(ok)
}

/// Scalar-ε grid over `(ε, seed)` pairs with MCEL; ε = 0 is plain cross-entropy.
pub fn cmd_gridsearch(cfg: &ExperimentConfig, data: &DataArgs, out: &Path, exec: Exec) -> Result<GridResult> {
    let started = Instant::now();
    let dataset = load_data(data, cfg)?;
    let prepared = prepare(&dataset, cfg, false)?;
    let needs_a = cfg.grid.epsilons.iter().any(|e| *e > 0.0);
    let a = if needs_a {
        let mut probe = cfg.clone();
        probe.loss.variant = Variant::Mcel;
        probe.loss.epsilon = 0.25;
        resolve_similarity(&probe, &prepared.train)?
    } else {
        None
    };
    create_out(out)?;
    let jobs: Vec<(f64, u64)> = cfg
        .grid
        .epsilons
        .iter()
        .flat_map(|&e| cfg.grid.seeds.iter().map(move |&s| (e, s)))
        .collect();
    let runs = run_children(
        &jobs,
        exec,
        |&(epsilon, seed)| {
            let mut child = cfg.clone();
            child.loss.variant = Variant::Mcel;
            child.loss.epsilon = epsilon;
            child.loss.soft = false;
            child.train.seed = seed;
            let r = train_run(&prepared, &child, a.as_ref().filter(|_| epsilon > 0.0), exec, |_| {})?.report;
            Ok(GridRun {
                epsilon,
                seed,
                best_epoch: r.best_epoch,
                val_accuracy: r.best_val_accuracy,
                test_accuracy: r.test.map(|t| t.top1),
            })
        },
        |partial| report::write_grid_csv(&out.join("grid_partial.csv"), partial),
    )?;

    let points: Vec<GridPoint> = cfg
        .grid
        .epsilons
        .iter()
        .map(|&e| {
            let mine: Vec<&GridRun> = runs.iter().filter(|r| r.epsilon == e).collect();
            let vals: Vec<f64> = mine.iter().map(|r| r.val_accuracy).collect();
            let (mean, std) = report::mean_std(&vals);
            let tests: Option<Vec<f64>> = mine.iter().map(|r| r.test_accuracy).collect();
            GridPoint {
                epsilon: e,
                mean_val_accuracy: mean,
                std_val_accuracy: std,
                mean_test_accuracy: tests.map(|t| report::mean_std(&t).0),
            }
        })
        .collect();
    // smallest ε first so ties resolve toward it
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| points[i].epsilon.total_cmp(&points[j].epsilon));
    let means: Vec<f64> = order.iter().map(|&i| points[i].mean_val_accuracy).collect();
    let selected_epsilon = points[order[report::argmax_first(&means)]].epsilon;
    let result = GridResult {
        note: report::GRID_NOTE,
        points,
        selected_epsilon,
        runs,
    };
    report::write_grid_csv(&out.join("grid.csv"), &result.runs)?;
    report::write_json(&out.join("grid.json"), &result)?;
    write_meta(out, "gridsearch", started)?;
    Ok(result)
}

struct NoiseCell {
    runs: Vec<NoiseRun>,
    candidates: Vec<NoiseRun>,
    mask: Vec<usize>,
}

fn paired_accuracy(model: &MlpModel, test: &LabeledDataset, pairs: &[(usize, usize)], exec: Exec) -> f64 {
    let paired = |c: usize| pairs.iter().any(|&(a, b)| a == c || b == c);
    let rows: Vec<usize> = (0..test.len()).filter(|&i| paired(test.labels[i])).collect();
    if rows.is_empty() {
        return 0.0;
    }
    evaluate(model, &test.select(&rows), 1, exec).top1
}

/// Cross-entropy versus MCEL under pairwise label noise on the training split. MCEL's ε is
/// chosen per cell on the clean validation split; the similarity matrix comes from LDA on
/// the noisy training split.
pub fn cmd_noise(cfg: &ExperimentConfig, data: &DataArgs, out: &Path, exec: Exec) -> Result<NoiseReport> {
    let started = Instant::now();
    let dataset = load_data(data, cfg)?;
    let prepared = prepare(&dataset, cfg, true)?;
    let test = prepared
        .test
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("noise-exp needs a test fraction in [data] split".into()))?;
    let k = dataset.num_classes;
    let pairs = noise_pairs(cfg, k);
    NoiseSpec {
        pairs: pairs.clone(),
        swap_fraction: 0.0,
        seed: 0,
    }
    .validate(k)
    .map_err(|e| ConfigError::Invalid(format!("[noise] pairs: {e}")))?;
    create_out(out)?;
    let masks = out.join("masks");
    create_out(&masks)?;

    let jobs: Vec<(f64, u64)> = cfg
        .noise
        .fractions
        .iter()
        .flat_map(|&f| cfg.noise.seeds.iter().map(move |&s| (f, s)))
        .collect();
    let cells = run_children(
        &jobs,
        exec,
        |&(fraction, seed)| {
            let spec = NoiseSpec {
                pairs: pairs.clone(),
                swap_fraction: fraction,
                seed,
            };
            let (noisy, flipped) = inject_pairwise_noise(&prepared.train, &spec)?;
            let noisy_prep = Prepared {
                train: noisy,
                ..prepared.clone()
            };
            let a = lda_similarity(&noisy_prep.train, cfg)?;
            let record = |variant: &'static str, epsilon: f64, o: &RunOutcome| NoiseRun {
                fraction,
                seed,
                variant,
                epsilon,
                val_accuracy: o.report.best_val_accuracy,
                test_accuracy: o.report.test.as_ref().map_or(0.0, |t| t.top1),
                paired_test_accuracy: paired_accuracy(&o.model, test, &pairs, exec),
                flipped: flipped.len(),
            };
            let mut child = cfg.clone();
            child.train.seed = seed;
            child.loss.soft = false;
            child.loss.variant = Variant::CrossEntropy;
            let ce = train_run(&noisy_prep, &child, None, exec, |_| {})?;
            child.loss.variant = Variant::Mcel;
            let mut candidates = Vec::new();
            let mut outcomes = Vec::new();
            for &epsilon in &cfg.noise.epsilons {
                child.loss.epsilon = epsilon;
                let o = train_run(&noisy_prep, &child, Some(&a), exec, |_| {})?;
                candidates.push(record("mcel-candidate", epsilon, &o));
                outcomes.push((epsilon, o));
            }
            // candidates are tried in ascending ε, so the first maximum is the smallest ε
            let mut by_eps: Vec<usize> = (0..outcomes.len()).collect();
            by_eps.sort_by(|&i, &j| outcomes[i].0.total_cmp(&outcomes[j].0));
            let vals: Vec<f64> = by_eps.iter().map(|&i| outcomes[i].1.report.best_val_accuracy).collect();
            let (best_eps, best) = &outcomes[by_eps[report::argmax_first(&vals)]];
            Ok(NoiseCell {
                runs: vec![record("ce", 0.0, &ce), record("mcel", *best_eps, best)],
                candidates,
                mask: flipped.iter().map(|&i| prepared.train_rows[i]).collect(),
            })
        },
        |partial| {
            let runs: Vec<NoiseRun> = partial.iter().flat_map(|c| c.runs.clone()).collect();
            report::write_noise_csv(&out.join("noise_partial.csv"), &runs)
        },
    )?;

    for (cell, (fraction, seed)) in cells.iter().zip(&jobs) {
        let mut rows = cell.mask.clone();
        rows.sort_unstable();
        let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
        fs::write(masks.join(format!("mask_f{fraction}_s{seed}.txt")), text).context("writing noise mask")?;
    }
    let runs: Vec<NoiseRun> = cells.iter().flat_map(|c| c.runs.clone()).collect();
    let summary = cfg
        .noise
        .fractions
        .iter()
        .map(|&f| {
            let acc = |variant: &str| -> Vec<f64> {
                runs.iter()
                    .filter(|r| r.fraction == f && r.variant == variant)
                    .map(|r| r.test_accuracy)
                    .collect()
            };
            let (ce, mc) = (acc("ce"), acc("mcel"));
            NoiseSummary {
                fraction: f,
                median_ce: report::median(&ce),
                median_mcel: report::median(&mc),
                mcel_wins: ce.iter().zip(&mc).filter(|(c, m)| m > c).count(),
                seeds: ce.len(),
            }
        })
        .collect();
    let rep = NoiseReport {
        config: cfg.clone(),
        pairs,
        summary,
        runs,
        candidates: cells.into_iter().flat_map(|c| c.candidates).collect(),
    };
    report::write_noise_csv(&out.join("noise.csv"), &rep.runs)?;
    report::write_json(&out.join("noise.json"), &rep)?;
    write_meta(out, "noise-exp", started)?;
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub checks: Vec<CheckReport>,
}

/// Runs every finite-difference check; fails with [`GradcheckFailed`] when any exceeds
/// the tolerance (the report is written and printed first).
pub fn cmd_gradcheck(
    k: usize,
    trials: usize,
    seed: u64,
    corrupt: bool,
    out: Option<&Path>,
    exec: Exec,
) -> Result<GradcheckReport> {
    if !(2..=100).contains(&k) {
        return Err(UsageError(format!("--k must be between 2 and 100, got {k}")).into());
    }
    if trials == 0 {
        return Err(UsageError("--trials must be at least 1".into()).into());
    }
    let cfg = GradcheckConfig {
        k,
        trials,
        seed,
        corrupt,
        ..GradcheckConfig::default()
    };
    let checks = gradcheck::run_all(&cfg, exec);
    for c in &checks {
        println!(
            "{:<24} max rel err {:.3e}  {}",
            c.name,
            c.max_rel_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    let rep = GradcheckReport {
        k,
        trials,
        seed,
        tolerance: cfg.tolerance,
        checks,
    };
    if let Some(out) = out {
        create_out(out)?;
        report::write_json(&out.join("gradcheck.json"), &rep)?;
    }
    let failed = rep.checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(GradcheckFailed { failed }.into());
    }
    Ok(rep)
}

/// Exit status for an error returned by one of the commands.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<GradcheckFailed>().is_some() {
        3
    } else if err.downcast_ref::<ConfigError>().is_some() || err.downcast_ref::<UsageError>().is_some() {
        1
    } else {
        2
    }
}

