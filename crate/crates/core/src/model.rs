//! A small differentiable network mapping one image to a matrix of
//! viewpoint-conditioned class probabilities, with analytic gradients that are
//! tight enough for finite-difference checking, plus momentum SGD and a
//! versioned checkpoint format.
//!
//! All math is in double precision. The backbone is deliberately tiny:
//! optional single 3x3 convolution, then flatten -> dense -> ReLU -> dense ->
//! ReLU -> dense head producing `rows * cols` raw scores, with an independent
//! softmax per row.

use crate::geometry::RotationCandidate;
use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

/// Classical momentum SGD defaults used throughout the crate.
pub const DEFAULT_LEARNING_RATE: f64 = 0.0005;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Probabilities are clamped at this floor inside logarithms only; stored
/// prediction matrices are left untouched.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("image is {got_h}x{got_w} but the network expects {want_h}x{want_w}")]
    ImageDimensionMismatch {
        got_h: usize,
        got_w: usize,
        want_h: usize,
        want_w: usize,
    },
    #[error("class {y} out of range for {n_classes} classes")]
    ClassOutOfRange { y: usize, n_classes: usize },
    #[error("expected {expected} {what}, got {got}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("gradients contain non-finite values; step refused")]
    NonFiniteGradient,
    #[error("image contains values outside [0, 1] or non-finite values")]
    InvalidImage,
    #[error("checkpoint config hash mismatch: stored {stored}, expected {expected}")]
    ConfigHashMismatch { stored: String, expected: String },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A grayscale image with intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub pixels: Array2<f64>,
}

impl Image {
    pub fn new(pixels: Array2<f64>) -> Result<Self, ModelError> {
        let img = Image { pixels };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.pixels.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            Ok(())
        } else {
            Err(ModelError::InvalidImage)
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }
}

/// Network hyperparameters. The config is hashed into checkpoints so that
/// loads against a different architecture are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub image_h: usize,
    pub image_w: usize,
    /// Output channels of the single 3x3 convolution front; 0 disables it.
    pub conv_channels: usize,
    pub hidden: usize,
    /// Rows of the output head (one per viewpoint hypothesis).
    pub rows: usize,
    /// Columns of the output head (classes, plus one "incorrect view" column
    /// for the latent-viewpoint model).
    pub cols: usize,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn flat_inputs(&self) -> usize {
        if self.conv_channels > 0 {
            self.conv_channels * (self.image_h - 2) * (self.image_w - 2)
        } else {
            self.image_h * self.image_w
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One tensor of parameters (or of gradients / velocities, which share shapes).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub conv_w: Array3<f64>,
    pub conv_b: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_head: Array2<f64>,
    pub b_head: Array1<f64>,
}

impl ParamSet {
    fn zeros(cfg: &NetworkConfig) -> Self {
        let flat = cfg.flat_inputs();
        ParamSet {
            conv_w: Array3::zeros((cfg.conv_channels, 3, 3)),
            conv_b: Array1::zeros(cfg.conv_channels),
            w1: Array2::zeros((flat, cfg.hidden)),
            b1: Array1::zeros(cfg.hidden),
            w2: Array2::zeros((cfg.hidden, cfg.hidden)),
            b2: Array1::zeros(cfg.hidden),
            w_head: Array2::zeros((cfg.hidden, cfg.rows * cfg.cols)),
            b_head: Array1::zeros(cfg.rows * cfg.cols),
        }
    }

    /// Tensors in a fixed order, as named flat slices.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("conv_w", self.conv_w.as_slice().expect("contiguous")),
            ("conv_b", self.conv_b.as_slice().expect("contiguous")),
            ("w1", self.w1.as_slice().expect("contiguous")),
            ("b1", self.b1.as_slice().expect("contiguous")),
            ("w2", self.w2.as_slice().expect("contiguous")),
            ("b2", self.b2.as_slice().expect("contiguous")),
            ("w_head", self.w_head.as_slice().expect("contiguous")),
            ("b_head", self.b_head.as_slice().expect("contiguous")),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("conv_w", self.conv_w.as_slice_mut().expect("contiguous")),
            ("conv_b", self.conv_b.as_slice_mut().expect("contiguous")),
            ("w1", self.w1.as_slice_mut().expect("contiguous")),
            ("b1", self.b1.as_slice_mut().expect("contiguous")),
            ("w2", self.w2.as_slice_mut().expect("contiguous")),
            ("b2", self.b2.as_slice_mut().expect("contiguous")),
            ("w_head", self.w_head.as_slice_mut().expect("contiguous")),
            ("b_head", self.b_head.as_slice_mut().expect("contiguous")),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, s)| s.len()).sum()
    }

    /// Flat indexing across all tensors, in `tensors()` order.
    pub fn get(&self, mut idx: usize) -> f64 {
        for (_, s) in self.tensors() {
            if idx < s.len() {
                return s[idx];
            }
            idx -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn add_at(&mut self, mut idx: usize, delta: f64) {
        for (_, s) in self.tensors_mut() {
            if idx < s.len() {
                s[idx] += delta;
                return;
            }
            idx -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, s)| s.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

pub type Gradients = ParamSet;

/// Per-image output: `rows x cols` probabilities, each row an independent
/// softmax distribution. For the latent-viewpoint model, row j conditions on
/// "this image was taken from viewpoint j" and the last column is the
/// incorrect-view class.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    values: Array2<f64>,
}

impl PredictionMatrix {
    pub fn from_values(values: Array2<f64>) -> Self {
        PredictionMatrix { values }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    /// Index of the incorrect-view column.
    pub fn incorrect_col(&self) -> usize {
        self.values.ncols() - 1
    }

    pub fn prob(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)]
    }

    /// Log probability with the numerical floor applied.
    pub fn log_prob(&self, row: usize, col: usize) -> f64 {
        self.values[(row, col)].max(PROB_FLOOR).ln()
    }
}

struct ForwardCache {
    conv_pre: Array3<f64>,
    flat: Array1<f64>,
    h1_pre: Array1<f64>,
    h1: Array1<f64>,
    h2_pre: Array1<f64>,
    h2: Array1<f64>,
    probs: Array2<f64>,
}

/// The network: configuration plus parameters.
#[derive(Debug, Clone)]
pub struct Network {
    cfg: NetworkConfig,
    pub params: ParamSet,
}

impl Network {
    /// Fresh network with uniform(-s, s) weights, s = sqrt(6 / (fan_in + fan_out)),
    /// and zero biases, drawn from a ChaCha stream seeded by `cfg.seed`.
    pub fn new(cfg: NetworkConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = ParamSet::zeros(&cfg);
        if cfg.conv_channels > 0 {
            let s = (6.0 / (9.0 + 9.0 * cfg.conv_channels as f64)).sqrt();
            params.conv_w.mapv_inplace(|_| rng.random_range(-s..s));
        }
        let flat = cfg.flat_inputs();
        let s1 = (6.0 / (flat + cfg.hidden) as f64).sqrt();
        params.w1.mapv_inplace(|_| rng.random_range(-s1..s1));
        let s2 = (6.0 / (2 * cfg.hidden) as f64).sqrt();
        params.w2.mapv_inplace(|_| rng.random_range(-s2..s2));
        let sh = (6.0 / (cfg.hidden + cfg.rows * cfg.cols) as f64).sqrt();
        params.w_head.mapv_inplace(|_| rng.random_range(-sh..sh));
        Network { cfg, params }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    fn check_image(&self, image: &Image) -> Result<(), ModelError> {
        if image.height() != self.cfg.image_h || image.width() != self.cfg.image_w {
            return Err(ModelError::ImageDimensionMismatch {
                got_h: image.height(),
                got_w: image.width(),
                want_h: self.cfg.image_h,
                want_w: self.cfg.image_w,
            });
        }
        Ok(())
    }

    fn run_forward(&self, image: &Image) -> ForwardCache {
        let cfg = &self.cfg;
        let (conv_pre, flat) = if cfg.conv_channels > 0 {
            let oh = cfg.image_h - 2;
            let ow = cfg.image_w - 2;
            let mut pre = Array3::zeros((cfg.conv_channels, oh, ow));
            for c in 0..cfg.conv_channels {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = self.params.conv_b[c];
                        for u in 0..3 {
                            for v in 0..3 {
                                acc += self.params.conv_w[(c, u, v)]
                                    * image.pixels[(i + u, j + v)];
                            }
                        }
                        pre[(c, i, j)] = acc;
                    }
                }
            }
            let flat = Array1::from_iter(pre.iter().map(|&x| x.max(0.0)));
            (pre, flat)
        } else {
            let flat = Array1::from_iter(image.pixels.iter().copied());
            (Array3::zeros((0, 0, 0)), flat)
        };

        let h1_pre = flat.dot(&self.params.w1) + &self.params.b1;
        let h1 = h1_pre.mapv(|x| x.max(0.0));
        let h2_pre = h1.dot(&self.params.w2) + &self.params.b2;
        let h2 = h2_pre.mapv(|x| x.max(0.0));
        let scores = h2.dot(&self.params.w_head) + &self.params.b_head;

        let mut probs = scores
            .into_shape_with_order((cfg.rows, cfg.cols))
            .expect("head reshapes to rows x cols");
        for mut row in probs.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|x| x / sum);
        }

        ForwardCache {
            conv_pre,
            flat,
            h1_pre,
            h1,
            h2_pre,
            h2,
            probs,
        }
    }

    /// Evaluates the network on one image. Deterministic given (network, image);
    /// every row of the result sums to one.
    pub fn forward(&self, image: &Image) -> Result<PredictionMatrix, ModelError> {
        self.check_image(image)?;
        Ok(PredictionMatrix {
            values: self.run_forward(image).probs,
        })
    }

    /// Smallest absolute ReLU pre-activation over all layers for this input.
    ///
    /// The loss is non-differentiable where this reaches zero; finite-difference
    /// probes must keep clear of the kinks (margin well above `h * |activation|`).
    pub fn activation_kink_margin(&self, image: &Image) -> Result<f64, ModelError> {
        self.check_image(image)?;
        let cache = self.run_forward(image);
        let margin = cache
            .conv_pre
            .iter()
            .chain(cache.h1_pre.iter())
            .chain(cache.h2_pre.iter())
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min);
        Ok(margin)
    }

    fn check_labels(&self, row_labels: &[usize]) -> Result<(), ModelError> {
        if row_labels.len() != self.cfg.rows {
            return Err(ModelError::CountMismatch {
                what: "row labels",
                expected: self.cfg.rows,
                got: row_labels.len(),
            });
        }
        for &t in row_labels {
            if t >= self.cfg.cols {
                return Err(ModelError::ClassOutOfRange {
                    y: t,
                    n_classes: self.cfg.cols,
                });
            }
        }
        Ok(())
    }

    /// Summed cross-entropy of all head rows against per-row target classes.
    pub fn row_ce_loss(&self, image: &Image, row_labels: &[usize]) -> Result<f64, ModelError> {
        self.check_image(image)?;
        self.check_labels(row_labels)?;
        let cache = self.run_forward(image);
        let loss = row_labels
            .iter()
            .enumerate()
            .map(|(r, &t)| -cache.probs[(r, t)].max(PROB_FLOOR).ln())
            .sum();
        Ok(loss)
    }

    /// Gradients of [`Network::row_ce_loss`] with respect to every parameter.
    pub fn backward(&self, image: &Image, row_labels: &[usize]) -> Result<Gradients, ModelError> {
        self.check_image(image)?;
        self.check_labels(row_labels)?;
        let cfg = &self.cfg;
        let cache = self.run_forward(image);
        let mut grads = ParamSet::zeros(cfg);

        // dL/dscore = p - t per row (softmax + cross entropy)
        let mut ds = cache.probs.clone();
        for (r, &t) in row_labels.iter().enumerate() {
            ds[(r, t)] -= 1.0;
        }
        let ds = ds
            .into_shape_with_order(cfg.rows * cfg.cols)
            .expect("flattens back");

        for h in 0..cfg.hidden {
            let h2v = cache.h2[h];
            for o in 0..cfg.rows * cfg.cols {
                grads.w_head[(h, o)] = h2v * ds[o];
            }
        }
        grads.b_head.assign(&ds);
        let dh2 = self.params.w_head.dot(&ds);
        let dh2_pre =
            Array1::from_iter(dh2.iter().zip(&cache.h2_pre).map(|(&g, &p)| if p > 0.0 { g } else { 0.0 }));

        for h in 0..cfg.hidden {
            let h1v = cache.h1[h];
            for o in 0..cfg.hidden {
                grads.w2[(h, o)] = h1v * dh2_pre[o];
            }
        }
        grads.b2.assign(&dh2_pre);
        let dh1 = self.params.w2.dot(&dh2_pre);
        let dh1_pre =
            Array1::from_iter(dh1.iter().zip(&cache.h1_pre).map(|(&g, &p)| if p > 0.0 { g } else { 0.0 }));

        let flat_n = cfg.flat_inputs();
        for f in 0..flat_n {
            let fv = cache.flat[f];
            for o in 0..cfg.hidden {
                grads.w1[(f, o)] = fv * dh1_pre[o];
            }
        }
        grads.b1.assign(&dh1_pre);

        if cfg.conv_channels > 0 {
            let dflat = self.params.w1.dot(&dh1_pre);
            let oh = cfg.image_h - 2;
            let ow = cfg.image_w - 2;
            for c in 0..cfg.conv_channels {
                for i in 0..oh {
                    for j in 0..ow {
                        let idx = (c * oh + i) * ow + j;
                        if cache.conv_pre[(c, i, j)] > 0.0 {
                            let g = dflat[idx];
                            grads.conv_b[c] += g;
                            for u in 0..3 {
                                for v in 0..3 {
                                    grads.conv_w[(c, u, v)] += g * image.pixels[(i + u, j + v)];
                                }
                            }
                        }
                    }
                }
            }
        }

        Ok(grads)
    }
}

/// Negative joint log-likelihood of a multi-view sample under a fixed
/// assignment: the selected row of each image must carry the object class and
/// every other row the incorrect-view class.
pub fn loss_fixed_assignment(
    predictions: &[PredictionMatrix],
    candidate: &RotationCandidate,
    y: usize,
) -> Result<f64, ModelError> {
    if predictions.len() != candidate.perm.len() {
        return Err(ModelError::CountMismatch {
            what: "prediction matrices",
            expected: candidate.perm.len(),
            got: predictions.len(),
        });
    }
    let mut loss = 0.0;
    for (p, &v) in predictions.iter().zip(&candidate.perm) {
        let n_classes = p.cols() - 1;
        if y >= n_classes {
            return Err(ModelError::ClassOutOfRange { y, n_classes });
        }
        let incorrect = p.incorrect_col();
        for j in 0..p.rows() {
            loss -= if j == v {
                p.log_prob(j, y)
            } else {
                p.log_prob(j, incorrect)
            };
        }
    }
    Ok(loss)
}

/// Classical momentum SGD: `v <- momentum * v - lr * g; p <- p + v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    pub velocity: ParamSet,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, net: &Network) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        assert!((0.0..1.0).contains(&momentum), "momentum must be in [0, 1)");
        SgdMomentum {
            lr,
            momentum,
            velocity: ParamSet::zeros(net.config()),
        }
    }

    pub fn with_defaults(net: &Network) -> Self {
        Self::new(DEFAULT_LEARNING_RATE, DEFAULT_MOMENTUM, net)
    }

    /// Applies one update. Refuses the step if any gradient is non-finite.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<(), ModelError> {
        if !grads.is_finite() {
            return Err(ModelError::NonFiniteGradient);
        }
        for (((_, v), (_, g)), (_, p)) in self
            .velocity
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(net.params.tensors_mut())
        {
            for ((vi, &gi), pi) in v.iter_mut().zip(g).zip(p.iter_mut()) {
                *vi = self.momentum * *vi - self.lr * gi;
                *pi += *vi;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerRecord {
    lr: f64,
    momentum: f64,
    velocity: Vec<TensorRecord>,
}

/// On-disk checkpoint: JSON container with the config, its hash, all parameter
/// tensors and the optimizer velocity.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: NetworkConfig,
    pub config_hash: String,
    tensors: Vec<TensorRecord>,
    optimizer: OptimizerRecord,
}

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

fn records_of(set: &ParamSet, cfg: &NetworkConfig) -> Vec<TensorRecord> {
    let shapes: Vec<(&str, Vec<usize>)> = vec![
        ("conv_w", vec![cfg.conv_channels, 3, 3]),
        ("conv_b", vec![cfg.conv_channels]),
        ("w1", vec![cfg.flat_inputs(), cfg.hidden]),
        ("b1", vec![cfg.hidden]),
        ("w2", vec![cfg.hidden, cfg.hidden]),
        ("b2", vec![cfg.hidden]),
        ("w_head", vec![cfg.hidden, cfg.rows * cfg.cols]),
        ("b_head", vec![cfg.rows * cfg.cols]),
    ];
    set.tensors()
        .into_iter()
        .zip(shapes)
        .map(|((name, data), (_, shape))| TensorRecord {
            name: name.to_string(),
            shape,
            data: data.to_vec(),
        })
        .collect()
}

fn restore_set(records: &[TensorRecord], cfg: &NetworkConfig) -> Result<ParamSet, ModelError> {
    let mut set = ParamSet::zeros(cfg);
    {
        let mut targets = set.tensors_mut();
        if records.len() != targets.len() {
            return Err(ModelError::MalformedCheckpoint(format!(
                "expected {} tensors, found {}",
                targets.len(),
                records.len()
            )));
        }
        for (rec, (name, slot)) in records.iter().zip(targets.iter_mut()) {
            if rec.name != *name {
                return Err(ModelError::MalformedCheckpoint(format!(
                    "tensor order mismatch: expected {name}, found {}",
                    rec.name
                )));
            }
            if rec.data.len() != slot.len() {
                return Err(ModelError::MalformedCheckpoint(format!(
                    "tensor {name} has {} values, expected {}",
                    rec.data.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(&rec.data);
        }
    }
    Ok(set)
}

impl Checkpoint {
    pub fn capture(net: &Network, opt: &SgdMomentum) -> Self {
        let cfg = net.config().clone();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_hash: cfg.hash(),
            tensors: records_of(&net.params, &cfg),
            optimizer: OptimizerRecord {
                lr: opt.lr,
                momentum: opt.momentum,
                velocity: records_of(&opt.velocity, &cfg),
            },
            config: cfg,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, ModelError> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::MalformedCheckpoint(format!(
                "unsupported format version {}",
                ckpt.format_version
            )));
        }
        let expected = ckpt.config.hash();
        if ckpt.config_hash != expected {
            return Err(ModelError::ConfigHashMismatch {
                stored: ckpt.config_hash.clone(),
                expected,
            });
        }
        Ok(ckpt)
    }

    /// Rebuilds the network and optimizer. If `expected` is given, its hash
    /// must match the stored config hash.
    pub fn restore(
        &self,
        expected: Option<&NetworkConfig>,
    ) -> Result<(Network, SgdMomentum), ModelError> {
        if let Some(want) = expected {
            let want_hash = want.hash();
            if want_hash != self.config_hash {
                return Err(ModelError::ConfigHashMismatch {
                    stored: self.config_hash.clone(),
                    expected: want_hash,
                });
            }
        }
        let params = restore_set(&self.tensors, &self.config)?;
        let velocity = restore_set(&self.optimizer.velocity, &self.config)?;
        let net = Network {
            cfg: self.config.clone(),
            params,
        };
        let opt = SgdMomentum {
            lr: self.optimizer.lr,
            momentum: self.optimizer.momentum,
            velocity,
        };
        Ok((net, opt))
    }
}
