//! Experiment configuration: `[section]` headers and `key = value` lines, `#` comments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mcel::loss::PenaltyWeights;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}:{line}: {msg}")]
    Syntax { origin: String, line: usize, msg: String },
    #[error("[{section}] {key}: {msg}")]
    Value { section: String, key: String, msg: String },
    #[error("unknown key `{key}` in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Raw sections as parsed, each key mapped to its value and source line.
#[derive(Debug, Clone, Default)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut current: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |msg: &str| ConfigError::Syntax {
                origin: origin.to_string(),
                line: n + 1,
                msg: msg.to_string(),
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| syntax("unterminated section header"))?;
                let name = name.trim().to_ascii_lowercase();
                if name.is_empty() {
                    return Err(syntax("empty section name"));
                }
                ini.sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| syntax("expected `key = value`"))?;
            let section = current.clone().ok_or_else(|| syntax("key outside of any section"))?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(syntax("empty key"));
            }
            let entries = ini.sections.entry(section).or_default();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(syntax(&format!("duplicate key `{key}`")));
            }
        }
        Ok(ini)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }
}

/// Which member of the loss family a run trains with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    CrossEntropy,
    Mcel,
    SgMcel,
    Gmcel,
}

impl Variant {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ce" | "cross-entropy" => Variant::CrossEntropy,
            "mcel" => Variant::Mcel,
            "sg-mcel" => Variant::SgMcel,
            "gmcel" => Variant::Gmcel,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilaritySource {
    /// Fit LDA on the training split.
    Lda,
    File(PathBuf),
}

#[derive(Debug, Clone, Serialize)]
pub struct DataConfig {
    pub split: [f64; 3],
    /// Seeds blob generation, the split and any training-set noise.
    pub seed: u64,
    pub standardize: bool,
    /// Explicit blob centers, one per class.
    pub centers: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSection {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_decay: f64,
    /// Seeds weight initialization and batch shuffling.
    pub seed: u64,
    pub top_k: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LossSection {
    pub variant: Variant,
    pub epsilon: f64,
    /// Per-class weights for `sg-mcel` and `gmcel`; defaults to `epsilon` for every class.
    pub epsilons: Option<Vec<f64>>,
    pub soft: bool,
    pub penalties: PenaltyWeights,
    pub similarity: Option<SimilaritySource>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LdaSection {
    pub components: Option<usize>,
    /// `None` means the automatic ridge.
    pub ridge: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSection {
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseSection {
    /// Class pairs; drawn from the data seed when absent.
    pub pairs: Option<Vec<(usize, usize)>>,
    /// Swap fraction applied to the training split of `train` and `gridsearch` runs.
    pub train_fraction: f64,
    pub fractions: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// Everything a run needs besides the dataset; echoed verbatim into reports.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub train: TrainSection,
    pub loss: LossSection,
    pub lda: LdaSection,
    pub grid: GridSection,
    pub noise: NoiseSection,
}

/// Grid used when none is configured: the open interval `[0, 0.5)` in steps of 0.1 plus
/// a guard point at 0.45.
pub const DEFAULT_GRID: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.45];

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig {
                split: [0.6, 0.2, 0.2],
                seed: 0,
                standardize: true,
                centers: None,
            },
            train: TrainSection {
                hidden: vec![16],
                learning_rate: 0.05,
                momentum: 0.1,
                weight_decay: 1e-3,
                epochs: 200,
                batch_size: 64,
                lr_decay: 0.0,
                seed: 0,
                top_k: 5,
            },
            loss: LossSection {
                variant: Variant::CrossEntropy,
                epsilon: 0.0,
                epsilons: None,
                soft: false,
                penalties: PenaltyWeights::default(),
                similarity: None,
            },
            lda: LdaSection {
                components: None,
                ridge: None,
            },
            grid: GridSection {
                epsilons: DEFAULT_GRID.to_vec(),
                seeds: vec![0],
            },
            noise: NoiseSection {
                pairs: None,
                train_fraction: 0.0,
                fractions: vec![0.0, 0.1, 0.2, 0.3, 0.4],
                epsilons: vec![0.2, 0.3, 0.4],
                seeds: vec![0, 1, 2, 3, 4],
            },
        }
    }
}

const KNOWN: &[(&str, &[&str])] = &[
    ("data", &["split", "seed", "standardize", "centers"]),
    (
        "train",
        &[
            "hidden",
            "learning_rate",
            "momentum",
            "weight_decay",
            "epochs",
            "batch_size",
            "lr_decay",
            "seed",
            "top_k",
        ],
    ),
    (
        "loss",
        &["variant", "epsilon", "epsilons", "soft", "alpha", "beta", "gamma", "eta", "p", "similarity"],
    ),
    ("lda", &["components", "ridge"]),
    ("grid", &["epsilons", "seeds"]),
    ("noise", &["pairs", "train_fraction", "fractions", "epsilons", "seeds"]),
];

struct Reader<'a> {
    ini: &'a Ini,
    section: &'static str,
}

impl Reader<'_> {
    fn err(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            section: self.section.to_string(),
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.ini.get(self.section, key)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| v.parse().map_err(|_| self.err(key, format!("expected {what}, got `{v}`"))))
            .transpose()
    }

    fn f64(&self, key: &str, into: &mut f64) -> Result<()> {
        if let Some(v) = self.parsed::<f64>(key, "a number")? {
            if !v.is_finite() {
                return Err(self.err(key, "must be finite"));
            }
            *into = v;
        }
        Ok(())
    }

    fn usize(&self, key: &str, into: &mut usize) -> Result<()> {
        if let Some(v) = self.parsed(key, "a non-negative integer")? {
            *into = v;
        }
        Ok(())
    }

    fn u64(&self, key: &str, into: &mut u64) -> Result<()> {
        if let Some(v) = self.parsed(key, "a non-negative integer")? {
            *into = v;
        }
        Ok(())
    }

    fn bool(&self, key: &str, into: &mut bool) -> Result<()> {
        if let Some(v) = self.parsed(key, "true or false")? {
            *into = v;
        }
        Ok(())
    }

    fn list<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        parse_list(v)
            .map(Some)
            .map_err(|bad| self.err(key, format!("expected a comma-separated list of {what}, bad item `{bad}`")))
    }
}

/// Comma-separated values; an empty string is an empty list.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|item| item.trim().parse().map_err(|_| item.trim().to_string()))
        .collect()
}

fn parse_pairs(s: &str) -> std::result::Result<Vec<(usize, usize)>, String> {
    s.split(',')
        .map(|item| {
            let (a, b) = item.trim().split_once('-').ok_or_else(|| item.trim().to_string())?;
            let a = a.trim().parse().map_err(|_| item.trim().to_string())?;
            let b = b.trim().parse().map_err(|_| item.trim().to_string())?;
            Ok((a, b))
        })
        .collect()
}

fn parse_centers(s: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    s.split(';').map(parse_list).collect()
}

impl ExperimentConfig {
    pub fn from_ini(ini: &Ini) -> Result<Self> {
        for (section, keys) in &ini.sections {
            let known = KNOWN
                .iter()
                .find(|(name, _)| name == section)
                .ok_or_else(|| ConfigError::UnknownSection(section.clone()))?;
            if let Some(key) = keys.keys().find(|k| !known.1.contains(&k.as_str())) {
                return Err(ConfigError::UnknownKey {
                    section: section.clone(),
                    key: key.clone(),
                });
            }
        }
        let mut cfg = ExperimentConfig::default();

        let r = Reader { ini, section: "data" };
        if let Some(split) = r.list::<f64>("split", "numbers")? {
            cfg.data.split = split
                .try_into()
                .map_err(|_| r.err("split", "expected three fractions: train, validation, test"))?;
        }
        r.u64("seed", &mut cfg.data.seed)?;
        r.bool("standardize", &mut cfg.data.standardize)?;
        if let Some(v) = r.raw("centers") {
            cfg.data.centers = Some(
                parse_centers(v).map_err(|bad| r.err("centers", format!("bad coordinate `{bad}`")))?,
            );
        }

        let r = Reader { ini, section: "train" };
        if let Some(h) = r.list("hidden", "layer widths")? {
            cfg.train.hidden = h;
        }
        r.f64("learning_rate", &mut cfg.train.learning_rate)?;
        r.f64("momentum", &mut cfg.train.momentum)?;
        r.f64("weight_decay", &mut cfg.train.weight_decay)?;
        r.usize("epochs", &mut cfg.train.epochs)?;
        r.usize("batch_size", &mut cfg.train.batch_size)?;
        r.f64("lr_decay", &mut cfg.train.lr_decay)?;
        r.u64("seed", &mut cfg.train.seed)?;
        r.usize("top_k", &mut cfg.train.top_k)?;

        let r = Reader { ini, section: "loss" };
        if let Some(v) = r.raw("variant") {
            cfg.loss.variant = Variant::parse(v)
                .ok_or_else(|| r.err("variant", format!("expected ce, mcel, sg-mcel or gmcel, got `{v}`")))?;
        }
        r.f64("epsilon", &mut cfg.loss.epsilon)?;
        cfg.loss.epsilons = r.list("epsilons", "numbers")?;
        r.bool("soft", &mut cfg.loss.soft)?;
        let w = &mut cfg.loss.penalties;
        r.f64("alpha", &mut w.alpha)?;
        r.f64("beta", &mut w.beta)?;
        r.f64("gamma", &mut w.gamma)?;
        r.f64("eta", &mut w.eta)?;
        r.f64("p", &mut w.p)?;
        cfg.loss.similarity = r.raw("similarity").map(|v| match v {
            "lda" => SimilaritySource::Lda,
            path => SimilaritySource::File(PathBuf::from(path)),
        });

        let r = Reader { ini, section: "lda" };
        cfg.lda.components = r.parsed("components", "a positive integer")?;
        if let Some(v) = r.raw("ridge") {
            cfg.lda.ridge = match v {
                "auto" => None,
                _ => Some(r.parsed("ridge", "`auto` or a non-negative number")?.expect("present")),
            };
        }

        let r = Reader { ini, section: "grid" };
        if let Some(e) = r.list("epsilons", "numbers")? {
            cfg.grid.epsilons = e;
        }
        if let Some(s) = r.list("seeds", "seeds")? {
            cfg.grid.seeds = s;
        }

        let r = Reader { ini, section: "noise" };
        if let Some(v) = r.raw("pairs") {
            cfg.noise.pairs =
                Some(parse_pairs(v).map_err(|bad| r.err("pairs", format!("expected `a-b` pairs, bad item `{bad}`")))?);
        }
        r.f64("train_fraction", &mut cfg.noise.train_fraction)?;
        if let Some(f) = r.list("fractions", "numbers")? {
            cfg.noise.fractions = f;
        }
        if let Some(e) = r.list("epsilons", "numbers")? {
            cfg.noise.epsilons = e;
        }
        if let Some(s) = r.list("seeds", "seeds")? {
            cfg.noise.seeds = s;
        }

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_ini(&Ini::load(path)?)
    }

    /// Checks that do not depend on the dataset.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.data.split.iter().any(|f| !(*f >= 0.0)) || (self.data.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("[data] split {:?} must be non-negative and sum to 1", self.data.split));
        }
        if self.data.split[1] == 0.0 {
            return bad("[data] split needs a validation fraction for best-epoch selection".into());
        }
        if self.train.hidden.contains(&0) {
            return bad("[train] hidden widths must be positive".into());
        }
        if !(self.train.learning_rate > 0.0) {
            return bad(format!("[train] learning_rate {} must be positive", self.train.learning_rate));
        }
        if !(0.0..1.0).contains(&self.train.momentum) {
            return bad(format!("[train] momentum {} must be in [0, 1)", self.train.momentum));
        }
        if self.train.weight_decay < 0.0 || self.train.lr_decay < 0.0 {
            return bad("[train] weight_decay and lr_decay must be non-negative".into());
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 || self.train.top_k == 0 {
            return bad("[train] epochs, batch_size and top_k must be at least 1".into());
        }
        let eps_ok = |e: &f64| (0.0..0.5).contains(e);
        if !eps_ok(&self.loss.epsilon) {
            return bad(format!("[loss] epsilon {} must be in [0, 0.5)", self.loss.epsilon));
        }
        if let Some(e) = &self.loss.epsilons {
            if !e.iter().all(eps_ok) {
                return bad("[loss] epsilons must all be in [0, 0.5)".into());
            }
        }
        if self.loss.soft && !matches!(self.loss.variant, Variant::SgMcel | Variant::Gmcel) {
            return bad("[loss] soft = true needs variant sg-mcel or gmcel".into());
        }
        if self.loss.soft {
            self.loss.penalties.validate().map_err(|e| ConfigError::Invalid(format!("[loss] {e}")))?;
        }
        if self.grid.epsilons.is_empty() || !self.grid.epsilons.iter().all(eps_ok) {
            return bad("[grid] epsilons must be a non-empty list within [0, 0.5)".into());
        }
        if self.noise.epsilons.is_empty() || !self.noise.epsilons.iter().all(eps_ok) {
            return bad("[noise] epsilons must be a non-empty list within [0, 0.5)".into());
        }
        if self.grid.seeds.is_empty() || self.noise.seeds.is_empty() {
            return bad("seed lists must not be empty".into());
        }
        if !self.noise.fractions.iter().chain([&self.noise.train_fraction]).all(|f| (0.0..=1.0).contains(f)) {
            return bad("[noise] fractions must be within [0, 1]".into());
        }
        Ok(())
    }

    /// Whether the configured loss reads a similarity matrix.
    pub fn needs_similarity(&self) -> bool {
        match self.loss.variant {
            Variant::CrossEntropy => false,
            Variant::Mcel => self.loss.epsilon > 0.0,
            Variant::SgMcel | Variant::Gmcel => true,
        }
    }
}
