//! Fully connected ReLU network with a softmax head, trained by SGD with momentum on any
//! member of the mixed cross-entropy family.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabeledDataset;
use crate::exec::Exec;
use crate::lda::SimilarityMatrix;
use crate::loss::{
    self, weighted_logit_gradient, LossError, MixingGrad, MixingSpec, Mixture, PenaltyWeights, Sample,
};
use crate::numerics::{Matrix, NumericsError};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("input has length {got}, model expects {expected}")]
    InputSize { got: usize, expected: usize },
    #[error("non-finite input at position {0}")]
    NonFiniteInput(usize),
    #[error("dataset has {data} classes but the model outputs {model}")]
    ClassMismatch { data: usize, model: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("network output is not finite")]
    NonFiniteOutput,
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, NetError>;

/// Affine layer `W x + b`, `W` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            biases: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.weights.rows())
            .map(|r| crate::numerics::dot(self.weights.row(r), x) + self.biases[r])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
}

/// Activations kept by [`MlpModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (the network input first, then post-ReLU hidden activations).
    inputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// Parameter gradients laid out exactly like the model.
pub type Gradients = MlpModel;

impl MlpModel {
    fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 {
            return Err(NetError::Architecture("need at least an input and an output layer".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(NetError::Architecture(format!("zero-sized layer in {layer_sizes:?}")));
        }
        Ok(())
    }

    /// All parameters zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        Ok(Self {
            layers: layer_sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    /// Weights drawn from `N(0, 1/fan_in)` with a seeded ChaCha stream; biases zero.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let fan_in = layer.weights.cols() as f64;
            let dist = Normal::new(0.0, 1.0 / fan_in.sqrt()).expect("positive scale");
            for w in layer.weights.as_mut_slice() {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(model)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weights.cols()];
        sizes.extend(self.layers.iter().map(|l| l.weights.rows()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("at least one layer").weights.rows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.biases.len()).sum()
    }

    /// Every parameter, layer by layer, weights (row-major) before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.biases);
        }
        out
    }

    /// Mutable references in the same order as [`MlpModel::params`].
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.biases.iter().all(|b| b.is_finite()))
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward_unchecked(x).logits
    }

    fn forward_unchecked(&self, x: &[f64]) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(&current);
            inputs.push(current);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            current = z;
        }
        ForwardCache {
            inputs,
            logits: current,
        }
    }

    /// Softmax probabilities plus the activations needed by [`MlpModel::backward`].
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.input_dim() {
            return Err(NetError::InputSize {
                got: x.len(),
                expected: self.input_dim(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(NetError::NonFiniteInput(i));
        }
        let cache = self.forward_unchecked(x);
        Ok((loss::softmax(&cache.logits), cache))
    }

    /// Parameter gradients given `∂l/∂logits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64]) -> Gradients {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dlogits.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            let mut g = Dense::zeros(input.len(), delta.len());
            for (r, d) in delta.iter().enumerate() {
                g.biases[r] = *d;
                for (dst, x) in g.weights.row_mut(r).iter_mut().zip(input) {
                    *dst = d * x;
                }
            }
            grads.push(g);
            if i > 0 {
                // through Wᵀ, then the ReLU that produced `input`
                let mut prev = vec![0.0; input.len()];
                for (r, d) in delta.iter().enumerate() {
                    for (p, w) in prev.iter_mut().zip(layer.weights.row(r)) {
                        *p += d * w;
                    }
                }
                for (p, x) in prev.iter_mut().zip(input) {
                    if *x <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        grads.reverse();
        MlpModel { layers: grads }
    }

    /// `self += s · other` over all parameters.
    pub fn add_scaled(&mut self, other: &MlpModel, s: f64) {
        for (dst, src) in self.params_mut().zip(other.params()) {
            *dst += s * src;
        }
    }

    /// Serialized checkpoint: `MCEL`, version, layer count, then per layer the row and
    /// column counts, row-major weights and biases. Integers are little-endian `u32`,
    /// values little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.num_params() + 8 * self.layers.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.weights.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(l.weights.cols() as u32).to_le_bytes());
            for v in l.weights.as_slice().iter().chain(&l.biases) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        if cursor.take(4)? != CHECKPOINT_MAGIC {
            return Err(NetError::Checkpoint("bad magic".into()));
        }
        let version = cursor.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(NetError::Checkpoint(format!("unsupported version {version}")));
        }
        let n_layers = cursor.u32()? as usize;
        if n_layers == 0 {
            return Err(NetError::Checkpoint("no layers".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = cursor.u32()? as usize;
            let cols = cursor.u32()? as usize;
            let weights = (0..rows * cols).map(|_| cursor.f64()).collect::<Result<Vec<_>>>()?;
            let biases = (0..rows).map(|_| cursor.f64()).collect::<Result<Vec<_>>>()?;
            layers.push(Dense {
                weights: Matrix::new(rows, cols, weights)?,
                biases,
            });
        }
        if cursor.pos != bytes.len() {
            return Err(NetError::Checkpoint(format!("{} trailing bytes", bytes.len() - cursor.pos)));
        }
        if layers.windows(2).any(|w| w[0].weights.rows() != w[1].weights.cols()) {
            return Err(NetError::Checkpoint("layer shapes do not chain".into()));
        }
        Ok(Self { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|source| NetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| NetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"MCEL";
const CHECKPOINT_VERSION: u32 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| NetError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(chunk)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Loss variant and mixing parameters. `penalties` turns the per-class and matrix
/// variants into their soft-constrained, trainable forms.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub mixing: MixingSpec,
    pub penalties: Option<PenaltyWeights>,
}

impl LossConfig {
    pub fn cross_entropy() -> Self {
        Self {
            mixing: MixingSpec::Simple { epsilon: 0.0 },
            penalties: None,
        }
    }

    pub fn mcel(epsilon: f64) -> Self {
        Self {
            mixing: MixingSpec::Simple { epsilon },
            penalties: None,
        }
    }

    pub fn is_soft(&self) -> bool {
        self.penalties.is_some()
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if let Some(w) = &self.penalties {
            w.validate()?;
            match &self.mixing {
                MixingSpec::Simple { .. } => {
                    return Err(NetError::Config(
                        "soft constraints apply to per-class or matrix mixing only".into(),
                    ))
                }
                MixingSpec::PerClass { epsilons } if epsilons.len() != k => {
                    return Err(NetError::Config(format!("{} epsilons for {k} classes", epsilons.len())))
                }
                MixingSpec::Matrix(m) if m.num_classes() != k || m.margins.len() != k => {
                    return Err(NetError::Config(format!("mixture does not have {k} classes")))
                }
                _ => {}
            }
            return Ok(());
        }
        self.mixing.validate(k).map_err(NetError::from)
    }
}

/// Range the learned per-class weights are projected back into after each step.
pub const SOFT_EPS_RANGE: (f64, f64) = (1e-6, 0.5 - 1e-6);
/// Range the learned mixture entries are projected back into after each step.
pub const SOFT_MIXTURE_RANGE: (f64, f64) = (1e-6, 1.0 - 1e-6);

fn project_mixing(spec: &mut MixingSpec) {
    match spec {
        MixingSpec::PerClass { epsilons } => {
            epsilons.iter_mut().for_each(|e| *e = e.clamp(SOFT_EPS_RANGE.0, SOFT_EPS_RANGE.1));
        }
        MixingSpec::Matrix(m) => {
            m.e.as_mut_slice()
                .iter_mut()
                .for_each(|e| *e = e.clamp(SOFT_MIXTURE_RANGE.0, SOFT_MIXTURE_RANGE.1));
        }
        MixingSpec::Simple { .. } => {}
    }
}

/// Summed loss over a batch, the target row of every sample, and the mixing gradient
/// for soft variants.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub value: f64,
    pub targets: Vec<Vec<f64>>,
    pub grad_mixing: Option<MixingGrad>,
}

/// Evaluates the configured loss on a batch of predicted distributions.
pub fn evaluate_objective(
    mixing: &MixingSpec,
    penalties: Option<&PenaltyWeights>,
    similarity: Option<&SimilarityMatrix>,
    batch: &[Sample<'_>],
) -> Result<ObjectiveEval> {
    let need_a = || {
        similarity.ok_or_else(|| NetError::Config("this loss variant needs a similarity matrix".into()))
    };
    let target_for = |y: usize, k: usize| -> Result<Vec<f64>> {
        Ok(match mixing {
            MixingSpec::Simple { epsilon } if *epsilon == 0.0 && similarity.is_none() => loss::one_hot(k, y),
            MixingSpec::Simple { epsilon } => loss::mcel_target(need_a()?, y, *epsilon),
            MixingSpec::PerClass { epsilons } => loss::mcel_target(need_a()?, y, epsilons[y]),
            MixingSpec::Matrix(m) => m.e.row(y).to_vec(),
        })
    };
    let targets = batch
        .iter()
        .map(|s| target_for(s.label, s.probs.len()))
        .collect::<Result<Vec<_>>>()?;

    if let Some(w) = penalties {
        let result = match mixing {
            MixingSpec::PerClass { epsilons } => loss::sg_mcel_soft_loss(batch, need_a()?, epsilons, w)?,
            MixingSpec::Matrix(m) => loss::gmcel_soft_loss(batch, m, w)?,
            MixingSpec::Simple { .. } => {
                return Err(NetError::Config("soft constraints need per-class or matrix mixing".into()))
            }
        };
        return Ok(ObjectiveEval {
            value: result.value,
            targets,
            grad_mixing: Some(result.grad_mixing),
        });
    }

    let mut value = 0.0;
    for s in batch {
        let r = match mixing {
            MixingSpec::Simple { epsilon } if *epsilon == 0.0 && similarity.is_none() => {
                loss::cross_entropy(s.probs, s.label)?
            }
            MixingSpec::Simple { epsilon } => loss::mcel_loss(s.probs, s.label, need_a()?, *epsilon)?,
            MixingSpec::PerClass { epsilons } => loss::sg_mcel_loss(s.probs, s.label, need_a()?, epsilons)?,
            MixingSpec::Matrix(m) => loss::gmcel_loss(s.probs, s.label, m)?,
        };
        value += r.value;
    }
    Ok(ObjectiveEval {
        value,
        targets,
        grad_mixing: None,
    })
}

/// Loss summed over `rows` of `data`, with parameter gradients (also summed).
#[derive(Debug, Clone)]
pub struct BatchGradient {
    pub value: f64,
    pub grads: Gradients,
    pub grad_mixing: Option<MixingGrad>,
    pub correct: usize,
}

const GRAD_CHUNK: usize = 32;

pub fn batch_gradient(
    model: &MlpModel,
    data: &LabeledDataset,
    rows: &[usize],
    loss_cfg: &LossConfig,
    similarity: Option<&SimilarityMatrix>,
    exec: Exec,
) -> Result<BatchGradient> {
    let forwards = exec.map(rows, |&i| model.forward(data.sample(i)));
    let forwards = forwards.into_iter().collect::<Result<Vec<_>>>()?;
    if forwards.iter().any(|(p, _)| p.iter().any(|v| !v.is_finite())) {
        return Err(NetError::NonFiniteOutput);
    }
    let samples: Vec<Sample<'_>> = forwards
        .iter()
        .zip(rows)
        .map(|((probs, _), &i)| Sample::new(probs, data.labels[i]))
        .collect();
    let objective = evaluate_objective(
        &loss_cfg.mixing,
        loss_cfg.penalties.as_ref(),
        similarity,
        &samples,
    )?;
    let correct = samples.iter().filter(|s| argmax(s.probs) == s.label).count();

    let jobs: Vec<(&ForwardCache, &Vec<f64>)> =
        forwards.iter().map(|(_, c)| c).zip(&objective.targets).collect();
    let partials = exec.map_chunks(&jobs, GRAD_CHUNK, |chunk| {
        let mut acc = MlpModel::zeros(&model.layer_sizes()).expect("valid sizes");
        for (cache, target) in chunk {
            let dlogits = weighted_logit_gradient(&cache.logits, target);
            acc.add_scaled(&model.backward(cache, &dlogits), 1.0);
        }
        acc
    });
    let mut grads = MlpModel::zeros(&model.layer_sizes())?;
    for p in &partials {
        grads.add_scaled(p, 1.0);
    }
    Ok(BatchGradient {
        value: objective.value,
        grads,
        grad_mixing: objective.grad_mixing,
        correct,
    })
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (i, x)| if *x > v[best] { i } else { best })
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// `lr_t = lr_0 / (1 + lr_decay · t)`, `t` counting completed epochs.
    pub lr_decay: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.1,
            weight_decay: 1e-3,
            epochs: 200,
            batch_size: 250,
            lr_decay: 0.0,
            seed: 0,
            loss: LossConfig::cross_entropy(),
            exec: Exec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::Config(format!("learning_rate {} must be >= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NetError::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(NetError::Config(format!("weight_decay {} must be >= 0", self.weight_decay)));
        }
        if !(self.lr_decay >= 0.0 && self.lr_decay.is_finite()) {
            return Err(NetError::Config(format!("lr_decay {} must be >= 0", self.lr_decay)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NetError::Config("epochs and batch_size must be at least 1".into()));
        }
        self.loss.validate(k)
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate / (1.0 + self.lr_decay * epoch as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub learning_rate: f64,
}

/// Model, momentum buffers and (for soft variants) the learned mixing parameters.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: MlpModel,
    pub config: TrainConfig,
    /// Current mixing parameters; updated every step for soft variants.
    pub mixing: MixingSpec,
    velocity: MlpModel,
    mixing_velocity: Vec<f64>,
    epoch: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: MlpModel, config: TrainConfig) -> Result<Self> {
        config.validate(model.num_classes())?;
        let velocity = MlpModel::zeros(&model.layer_sizes())?;
        let mut mixing = config.loss.mixing.clone();
        if config.loss.is_soft() {
            project_mixing(&mut mixing);
        }
        let mixing_len = match &mixing {
            MixingSpec::PerClass { epsilons } => epsilons.len(),
            MixingSpec::Matrix(m) => m.e.as_slice().len(),
            MixingSpec::Simple { .. } => 0,
        };
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
        Ok(Self {
            model,
            mixing,
            velocity,
            mixing_velocity: vec![0.0; mixing_len],
            epoch: 0,
            rng,
            config,
        })
    }

    pub fn epochs_completed(&self) -> usize {
        self.epoch
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            mixing: self.mixing.clone(),
            penalties: self.config.loss.penalties,
        }
    }

    /// One pass over `data` in shuffled mini-batches.
    pub fn train_epoch(
        &mut self,
        data: &LabeledDataset,
        similarity: Option<&SimilarityMatrix>,
    ) -> Result<EpochMetrics> {
        if data.is_empty() {
            return Err(NetError::Config("empty training set".into()));
        }
        if data.num_classes != self.model.num_classes() {
            return Err(NetError::ClassMismatch {
                data: data.num_classes,
                model: self.model.num_classes(),
            });
        }
        let lr = self.config.learning_rate_at(self.epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);

        let mut total_loss = 0.0;
        let mut correct = 0;
        for (b, rows) in order.chunks(self.config.batch_size).enumerate() {
            let loss_cfg = self.loss_config();
            let step = match batch_gradient(&self.model, data, rows, &loss_cfg, similarity, self.config.exec) {
                Err(NetError::NonFiniteOutput) => return Err(NetError::Diverged { epoch: self.epoch, batch: b }),
                other => other?,
            };
            if !step.value.is_finite() {
                return Err(NetError::Diverged { epoch: self.epoch, batch: b });
            }
            total_loss += step.value;
            correct += step.correct;
            let scale = 1.0 / rows.len() as f64;
            self.apply_update(&step.grads, scale, lr);
            if let Some(g) = &step.grad_mixing {
                self.apply_mixing_update(g, scale, lr);
            }
            if !self.model.is_finite() {
                return Err(NetError::Diverged { epoch: self.epoch, batch: b });
            }
        }
        let metrics = EpochMetrics {
            epoch: self.epoch,
            mean_loss: total_loss / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
            learning_rate: lr,
        };
        self.epoch += 1;
        Ok(metrics)
    }

    /// `v ← μ v − lr (g + wd · w)`, `w ← w + v`. Weight decay skips biases.
    fn apply_update(&mut self, grads: &Gradients, scale: f64, lr: f64) {
        let mu = self.config.momentum;
        let wd = self.config.weight_decay;
        for ((layer, vel), g) in self
            .model
            .layers
            .iter_mut()
            .zip(self.velocity.layers.iter_mut())
            .zip(&grads.layers)
        {
            for ((w, v), gw) in layer
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(vel.weights.as_mut_slice())
                .zip(g.weights.as_slice())
            {
                *v = mu * *v - lr * (gw * scale + wd * *w);
                *w += *v;
            }
            for ((b, v), gb) in layer.biases.iter_mut().zip(vel.biases.iter_mut()).zip(&g.biases) {
                *v = mu * *v - lr * gb * scale;
                *b += *v;
            }
        }
    }

    fn apply_mixing_update(&mut self, grad: &MixingGrad, scale: f64, lr: f64) {
        let mu = self.config.momentum;
        let (params, g): (&mut [f64], &[f64]) = match (&mut self.mixing, grad) {
            (MixingSpec::PerClass { epsilons }, MixingGrad::PerClass(g)) => (epsilons.as_mut_slice(), g),
            (MixingSpec::Matrix(m), MixingGrad::Matrix(g)) => (m.e.as_mut_slice(), g.as_slice()),
            _ => return,
        };
        for ((p, v), gi) in params.iter_mut().zip(self.mixing_velocity.iter_mut()).zip(g) {
            *v = mu * *v - lr * gi * scale;
            *p += *v;
        }
        project_mixing(&mut self.mixing);
    }
}

/// Top-1 / top-k' accuracy and the confusion matrix (`confusion[true][predicted]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub top1: f64,
    pub topk: f64,
    pub k_prime: usize,
    pub confusion: Vec<Vec<usize>>,
}

/// Position of `label` when classes are ranked by probability, ties by class index.
pub fn rank_of(probs: &[f64], label: usize) -> usize {
    let p = probs[label];
    probs
        .iter()
        .enumerate()
        .filter(|&(j, &q)| q > p || (q == p && j < label))
        .count()
}

/// Scores `(probs, label)` pairs directly.
pub fn evaluate_predictions(predictions: &[(Vec<f64>, usize)], k: usize, k_prime: usize) -> Evaluation {
    let k_prime = k_prime.clamp(1, k);
    let mut confusion = vec![vec![0; k]; k];
    let mut top1 = 0;
    let mut topk = 0;
    for (probs, y) in predictions {
        let rank = rank_of(probs, *y);
        top1 += usize::from(rank == 0);
        topk += usize::from(rank < k_prime);
        confusion[*y][argmax(probs)] += 1;
    }
    let n = predictions.len().max(1) as f64;
    Evaluation {
        top1: top1 as f64 / n,
        topk: topk as f64 / n,
        k_prime,
        confusion,
    }
}

pub fn predict(model: &MlpModel, data: &LabeledDataset, exec: Exec) -> Vec<Vec<f64>> {
    exec.map_range(data.len(), |i| loss::softmax(&model.logits(data.sample(i))))
}

pub fn evaluate(model: &MlpModel, data: &LabeledDataset, k_prime: usize, exec: Exec) -> Evaluation {
    let preds: Vec<(Vec<f64>, usize)> = predict(model, data, exec)
        .into_iter()
        .zip(data.labels.iter().copied())
        .collect();
    evaluate_predictions(&preds, model.num_classes(), k_prime)
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

/// Result of [`fit`]: the best-validation snapshot and the full history.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub best_model: MlpModel,
    pub best_mixing: MixingSpec,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub history: Vec<EpochRecord>,
}

/// Trains for `config.epochs` epochs and keeps the parameters of the epoch with the
/// highest validation top-1 (earliest epoch on ties). `on_epoch` sees every record as
/// it is produced.
pub fn fit(
    model: MlpModel,
    config: TrainConfig,
    train: &LabeledDataset,
    val: &LabeledDataset,
    similarity: Option<&SimilarityMatrix>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome> {
    let exec = config.exec;
    let epochs = config.epochs;
    let mut trainer = Trainer::new(model, config)?;
    let mut best: Option<(usize, f64, MlpModel, MixingSpec)> = None;
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let m = trainer.train_epoch(train, similarity)?;
        let val_accuracy = evaluate(&trainer.model, val, 1, exec).top1;
        let record = EpochRecord {
            epoch: m.epoch,
            train_loss: m.mean_loss,
            train_accuracy: m.train_accuracy,
            val_accuracy,
        };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().is_none_or(|(_, acc, _, _)| val_accuracy > *acc) {
            best = Some((m.epoch, val_accuracy, trainer.model.clone(), trainer.mixing.clone()));
        }
    }
    let (best_epoch, best_val_accuracy, best_model, best_mixing) = best.expect("at least one epoch");
    Ok(FitOutcome {
        best_model,
        best_mixing,
        best_epoch,
        best_val_accuracy,
        history,
    })
}

/// Mixture rows built from a similarity matrix and one scalar weight, for GMCEL configs.
pub fn default_mixture(a: &SimilarityMatrix, epsilon: f64) -> Result<Mixture> {
    Ok(Mixture::from_similarity(a, &vec![epsilon; a.num_classes()])?)
}
