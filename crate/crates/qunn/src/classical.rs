//! Classical baseline (fixed random conv filters + ReLU), the shared
//! trainable softmax head, cross-entropy loss, Adam training, and
//! backpropagation of the loss to input pixels for both feature backends.

use crate::quanv::{
    patch_grid, quanv_features, quanv_patch_jacobian, FeatureTensor, Image, QuanvConfig,
    QuanvError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("feature/label count mismatch: {features} vs {labels}")]
    CountMismatch { features: usize, labels: usize },
    #[error("feature length {got} does not match head input {expected}")]
    FeatureLength { got: usize, expected: usize },
    #[error("label {0} out of range 0..{N_CLASSES}")]
    LabelOutOfRange(usize),
    #[error(transparent)]
    Quanv(#[from] QuanvError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
}

/// Fixed (non-trainable) classical convolution: 4 filters, 2x2 kernel,
/// stride 2, ReLU.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvConfig {
    pub n_filters: usize,
    pub kernel: usize,
    pub stride: usize,
    /// weights[f][dr * kernel + dc]
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl ConvConfig {
    /// Glorot-uniform filters, zero biases, from the experiment seed.
    pub fn glorot(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n_filters, kernel) = (4, 2);
        let fan = (kernel * kernel) as f64;
        let limit = (6.0 / (fan + fan)).sqrt();
        let weights = (0..n_filters)
            .map(|_| (0..kernel * kernel).map(|_| rng.gen_range(-limit..limit)).collect())
            .collect();
        Self { n_filters, kernel, stride: 2, weights, biases: vec![0.0; n_filters] }
    }
}

/// F[r, c, f] = ReLU(sum patch . K_f + b_f), stride 2, no padding.
pub fn conv_features(image: &Image, cfg: &ConvConfig) -> Result<FeatureTensor, ModelError> {
    let (gh, gw) = patch_grid(image, cfg.kernel, cfg.stride)?;
    let mut out = FeatureTensor::zeros(gh, gw, cfg.n_filters);
    for r in 0..gh {
        for c in 0..gw {
            for f in 0..cfg.n_filters {
                let mut s = cfg.biases[f];
                for dr in 0..cfg.kernel {
                    for dc in 0..cfg.kernel {
                        s += image.pixel(r * cfg.stride + dr, c * cfg.stride + dc)
                            * cfg.weights[f][dr * cfg.kernel + dc];
                    }
                }
                out.set(r, c, f, s.max(0.0));
            }
        }
    }
    Ok(out)
}

/// A fixed feature extractor: the quanvolutional filter or the classical
/// convolution.
#[derive(Debug, Clone)]
pub enum Backend {
    Quanv(QuanvConfig),
    Conv(ConvConfig),
}

impl Backend {
    pub fn features(&self, image: &Image) -> Result<FeatureTensor, ModelError> {
        match self {
            Backend::Quanv(cfg) => Ok(quanv_features(image, cfg)?),
            Backend::Conv(cfg) => conv_features(image, cfg),
        }
    }

    /// Chain rule through the backend: given dJ/dF, produce dJ/dpixel.
    pub fn input_gradient(
        &self,
        image: &Image,
        dj_dfeat: &FeatureTensor,
    ) -> Result<Vec<f64>, ModelError> {
        let mut grad = vec![0.0; image.height * image.width];
        match self {
            Backend::Conv(cfg) => {
                for r in 0..dj_dfeat.h {
                    for c in 0..dj_dfeat.w {
                        for f in 0..cfg.n_filters {
                            let mut pre = cfg.biases[f];
                            for dr in 0..cfg.kernel {
                                for dc in 0..cfg.kernel {
                                    pre += image.pixel(r * cfg.stride + dr, c * cfg.stride + dc)
                                        * cfg.weights[f][dr * cfg.kernel + dc];
                                }
                            }
                            if pre <= 0.0 {
                                continue; // ReLU mask
                            }
                            let g = dj_dfeat.get(r, c, f);
                            for dr in 0..cfg.kernel {
                                for dc in 0..cfg.kernel {
                                    grad[(r * cfg.stride + dr) * image.width
                                        + (c * cfg.stride + dc)] +=
                                        g * cfg.weights[f][dr * cfg.kernel + dc];
                                }
                            }
                        }
                    }
                }
            }
            Backend::Quanv(cfg) => {
                for r in 0..dj_dfeat.h {
                    for c in 0..dj_dfeat.w {
                        let patch =
                            crate::quanv::extract_patch(image, cfg.kernel, cfg.stride, r, c);
                        let jac = quanv_patch_jacobian(&patch, cfg)?;
                        let n = cfg.kernel * cfg.kernel;
                        for p in 0..n {
                            let mut g = 0.0;
                            for k in 0..n {
                                g += dj_dfeat.get(r, c, k) * jac[k][p];
                            }
                            let (dr, dc) = (p / cfg.kernel, p % cfg.kernel);
                            grad[(r * cfg.stride + dr) * image.width + (c * cfg.stride + dc)] +=
                                g;
                        }
                    }
                }
            }
        }
        Ok(grad)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub n_train: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 4, learning_rate: 0.001, seed: 0, n_train: 1000 }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-7;
const PROB_FLOOR: f64 = 1e-12;

/// Dense softmax head with its Adam optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHead {
    pub in_dim: usize,
    /// w[f * N_CLASSES + c]
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
    step: u64,
}

impl ModelHead {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot(in_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (in_dim + N_CLASSES) as f64).sqrt();
        Self {
            in_dim,
            w: (0..in_dim * N_CLASSES).map(|_| rng.gen_range(-limit..limit)).collect(),
            b: vec![0.0; N_CLASSES],
            m_w: vec![0.0; in_dim * N_CLASSES],
            v_w: vec![0.0; in_dim * N_CLASSES],
            m_b: vec![0.0; N_CLASSES],
            v_b: vec![0.0; N_CLASSES],
            step: 0,
        }
    }

    pub fn zeros(in_dim: usize) -> Self {
        let mut h = Self::glorot(in_dim, 0);
        h.w.iter_mut().for_each(|x| *x = 0.0);
        h
    }

    /// Class probabilities; softmax with max-subtraction for stability.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>, ModelError> {
        if features.len() != self.in_dim {
            return Err(ModelError::FeatureLength { got: features.len(), expected: self.in_dim });
        }
        let mut logits = self.b.clone();
        for (f, &x) in features.iter().enumerate() {
            for c in 0..N_CLASSES {
                logits[c] += x * self.w[f * N_CLASSES + c];
            }
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        Ok(probs)
    }

    fn adam_step(&mut self, grad_w: &[f64], grad_b: &[f64], lr: f64) {
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - ADAM_BETA1.powf(t);
        let bias2 = 1.0 - ADAM_BETA2.powf(t);
        for (i, &g) in grad_w.iter().enumerate() {
            self.m_w[i] = ADAM_BETA1 * self.m_w[i] + (1.0 - ADAM_BETA1) * g;
            self.v_w[i] = ADAM_BETA2 * self.v_w[i] + (1.0 - ADAM_BETA2) * g * g;
            self.w[i] -=
                lr * (self.m_w[i] / bias1) / ((self.v_w[i] / bias2).sqrt() + ADAM_EPSILON);
        }
        for (i, &g) in grad_b.iter().enumerate() {
            self.m_b[i] = ADAM_BETA1 * self.m_b[i] + (1.0 - ADAM_BETA1) * g;
            self.v_b[i] = ADAM_BETA2 * self.v_b[i] + (1.0 - ADAM_BETA2) * g * g;
            self.b[i] -=
                lr * (self.m_b[i] / bias1) / ((self.v_b[i] / bias2).sqrt() + ADAM_EPSILON);
        }
    }
}

/// -log(probs[label]), probability floored at 1e-12.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64, ModelError> {
    if label >= N_CLASSES {
        return Err(ModelError::LabelOutOfRange(label));
    }
    Ok(-probs[label].max(PROB_FLOOR).ln())
}

/// Train the head on precomputed (frozen-backend) features: Adam over
/// shuffled mini-batches, shuffle re-seeded per epoch. Deterministic given
/// the config.
pub fn train_head(
    features: &[FeatureTensor],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<ModelHead, ModelError> {
    if features.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(ModelError::CountMismatch { features: features.len(), labels: labels.len() });
    }
    for &l in labels {
        if l >= N_CLASSES {
            return Err(ModelError::LabelOutOfRange(l));
        }
    }
    let in_dim = features[0].len();
    let mut head = ModelHead::glorot(in_dim, cfg.seed);
    let n = features.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64 + 1));
        // Fisher-Yates
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_w = vec![0.0; in_dim * N_CLASSES];
            let mut grad_b = vec![0.0; N_CLASSES];
            for &idx in batch {
                let x = &features[idx].values;
                let probs = head.forward(x)?;
                let scale = 1.0 / batch.len() as f64;
                for c in 0..N_CLASSES {
                    let d = (probs[c] - if c == labels[idx] { 1.0 } else { 0.0 }) * scale;
                    grad_b[c] += d;
                    for (f, &xf) in x.iter().enumerate() {
                        grad_w[f * N_CLASSES + c] += d * xf;
                    }
                }
            }
            head.adam_step(&grad_w, &grad_b, cfg.learning_rate);
        }
    }
    Ok(head)
}

/// A fixed feature backend plus a trained head.
#[derive(Debug, Clone)]
pub struct Model {
    pub backend: Backend,
    pub head: ModelHead,
}

impl Model {
    pub fn forward(&self, image: &Image) -> Result<Vec<f64>, ModelError> {
        let feat = self.backend.features(image)?;
        self.head.forward(&feat.values)
    }

    pub fn predict(&self, image: &Image) -> Result<usize, ModelError> {
        let probs = self.forward(image)?;
        Ok(argmax(&probs))
    }

    pub fn loss(&self, image: &Image, label: usize) -> Result<f64, ModelError> {
        cross_entropy(&self.forward(image)?, label)
    }

    /// dJ/dpixel for the full model: the analytic softmax/cross-entropy
    /// gradient (probs - onehot) pushed through the head, then through the
    /// backend Jacobian.
    pub fn loss_input_gradient(
        &self,
        image: &Image,
        label: usize,
    ) -> Result<Vec<f64>, ModelError> {
        if label >= N_CLASSES {
            return Err(ModelError::LabelOutOfRange(label));
        }
        let feat = self.backend.features(image)?;
        let probs = self.head.forward(&feat.values)?;
        let mut dj_dfeat = FeatureTensor::zeros(feat.h, feat.w, feat.channels);
        for f in 0..feat.len() {
            let mut g = 0.0;
            for c in 0..N_CLASSES {
                let d = probs[c] - if c == label { 1.0 } else { 0.0 };
                g += d * self.head.w[f * N_CLASSES + c];
            }
            dj_dfeat.values[f] = g;
        }
        self.backend.input_gradient(image, &dj_dfeat)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Serializable model checkpoint; round-trips exactly (f64 values survive
/// JSON via full-precision printing).
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub backend: BackendDescriptor,
    pub backend_digest: String,
    pub head: ModelHead,
    pub train_config: TrainConfig,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendDescriptor {
    Quanv {
        ansatz_document: String,
        ansatz_params: Vec<f64>,
        kernel: usize,
        stride: usize,
        encode_scale: f64,
        layers: usize,
    },
    Conv(ConvConfig),
}

impl Checkpoint {
    pub fn from_model(model: &Model, train_config: TrainConfig, seed: u64) -> Self {
        let backend = match &model.backend {
            Backend::Quanv(cfg) => BackendDescriptor::Quanv {
                ansatz_document: cfg.ansatz.to_document(),
                ansatz_params: cfg.ansatz_params.clone(),
                kernel: cfg.kernel,
                stride: cfg.stride,
                encode_scale: cfg.encode_scale,
                layers: cfg.layers,
            },
            Backend::Conv(cfg) => BackendDescriptor::Conv(cfg.clone()),
        };
        let backend_digest = match &model.backend {
            Backend::Quanv(cfg) => hex(&cfg.digest("checkpoint")),
            Backend::Conv(cfg) => {
                use sha2::{Digest, Sha256};
                let mut h = Sha256::new();
                h.update(serde_json::to_vec(cfg).expect("conv cfg serializes"));
                hex(&h.finalize())
            }
        };
        Self { backend, backend_digest, head: model.head.clone(), train_config, seed }
    }

    pub fn into_model(self) -> Result<Model, ModelError> {
        let backend = match self.backend {
            BackendDescriptor::Quanv {
                ansatz_document,
                ansatz_params,
                kernel,
                stride,
                encode_scale,
                layers,
            } => {
                let ansatz = crate::circuits::CircuitSpec::parse(&ansatz_document)
                    .map_err(QuanvError::from)?;
                let mut cfg = QuanvConfig::new(ansatz, ansatz_params)?;
                cfg.kernel = kernel;
                cfg.stride = stride;
                cfg.encode_scale = encode_scale;
                cfg.layers = layers;
                Backend::Quanv(cfg)
            }
            BackendDescriptor::Conv(cfg) => Backend::Conv(cfg),
        };
        Ok(Model { backend, head: self.head })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)?)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
