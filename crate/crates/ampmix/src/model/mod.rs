//! Desk-scale differentiable encoder pair and the training objective.
//!
//! The vision encoder is deliberately small: non-overlapping patch averages
//! feed a two-layer tanh projection, per-frame activations are mean-pooled
//! over the clip, projected to the embedding dimension, and unit-normalized.
//! The text encoder is a learnable per-class embedding table. Gradients are
//! hand-derived reverse-mode rules for this fixed architecture, validated
//! against central finite differences (see [`gradcheck`]).

mod checkpoint;
mod gradcheck;
mod train;

pub use checkpoint::Checkpoint;
pub use gradcheck::{gradient_check, ComponentReport, GradCheckReport};
pub use train::{format_loss_log, train, AdamWState, EpochLog, TrainOutcome};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_frames, Batch, DomainFilter};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::losses::{
    clip_loss, clip_loss_grads, suppression_loss, suppression_loss_grads, total_loss, Embedding,
    LossBundle, LossWeights,
};
use crate::rng::{child_seed, stream, substream};
use crate::spectral::augment_clip;

/// Maximum inverse temperature; the learnable log-scale is clamped so that
/// `1/tau <= LOGIT_SCALE_MAX` after every update.
pub const LOGIT_SCALE_MAX: f64 = 100.0;
/// Initial inverse temperature (`tau ~ 0.07`).
pub const LOGIT_SCALE_INIT: f64 = 14.285;

/// Architecture descriptor for the vision encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderArch {
    pub frame_height: usize,
    pub frame_width: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
}

impl EncoderArch {
    pub fn validate(&self) -> Result<()> {
        if self.frame_height == 0
            || self.frame_width == 0
            || self.channels == 0
            || self.patch_size == 0
            || self.hidden_dim == 0
            || self.embed_dim == 0
        {
            return Err(Error::validation(
                "encoder dimensions must be positive".to_string(),
            ));
        }
        if !self.frame_height.is_multiple_of(self.patch_size)
            || !self.frame_width.is_multiple_of(self.patch_size)
        {
            return Err(Error::validation(format!(
                "patch size {} must divide frame size {}x{}",
                self.patch_size, self.frame_height, self.frame_width
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (
            self.frame_height / self.patch_size,
            self.frame_width / self.patch_size,
        )
    }

    /// Flattened per-frame feature dimension after patch averaging.
    pub fn feature_dim(&self) -> usize {
        let (gh, gw) = self.grid();
        gh * gw * self.channels
    }
}

/// Patch-average + two-layer projection from frames to embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionEncoder {
    pub arch: EncoderArch,
    /// hidden_dim x feature_dim, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// embed_dim x hidden_dim, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl VisionEncoder {
    pub fn init(arch: EncoderArch, rng: &mut impl Rng) -> Result<Self> {
        arch.validate()?;
        let feat = arch.feature_dim();
        let s1 = 1.0 / (feat as f64).sqrt();
        let s2 = 1.0 / (arch.hidden_dim as f64).sqrt();
        Ok(Self {
            arch,
            w1: (0..arch.hidden_dim * feat)
                .map(|_| rng.gen_range(-s1..s1))
                .collect(),
            b1: vec![0.0; arch.hidden_dim],
            w2: (0..arch.embed_dim * arch.hidden_dim)
                .map(|_| rng.gen_range(-s2..s2))
                .collect(),
            b2: vec![0.0; arch.embed_dim],
        })
    }

    /// Patch-averaged, flattened features of one frame (plane-major).
    fn patch_features(&self, frame: &ImageTensor) -> Result<Vec<f64>> {
        let a = &self.arch;
        if frame.shape() != (a.frame_height, a.frame_width, a.channels) {
            return Err(Error::validation(format!(
                "frame shape {:?} does not match encoder input {}x{}x{}",
                frame.shape(),
                a.frame_height,
                a.frame_width,
                a.channels
            )));
        }
        let (gh, gw) = a.grid();
        let p = a.patch_size;
        let inv = 1.0 / (p * p) as f64;
        let mut features = vec![0.0; a.feature_dim()];
        for c in 0..a.channels {
            let plane = frame.plane(c);
            for gy in 0..gh {
                for gx in 0..gw {
                    let mut acc = 0.0;
                    for dy in 0..p {
                        let row = (gy * p + dy) * a.frame_width + gx * p;
                        for dx in 0..p {
                            acc += plane[row + dx];
                        }
                    }
                    features[c * gh * gw + gy * gw + gx] = acc * inv;
                }
            }
        }
        Ok(features)
    }
}

/// Cached activations of one clip's forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct ClipCache {
    features: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    norm: f64,
    embedding: Vec<f64>,
}

impl ClipCache {
    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }
}

/// Learnable per-class text embedding table, unit-normalized on read.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub n_classes: usize,
    pub dim: usize,
    /// n_classes x dim, row-major raw (unnormalized) vectors.
    pub table: Vec<f64>,
}

impl TextEncoder {
    pub fn init(n_classes: usize, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        if n_classes == 0 || dim == 0 {
            return Err(Error::validation(
                "text table dimensions must be positive".to_string(),
            ));
        }
        Ok(Self {
            n_classes,
            dim,
            table: (0..n_classes * dim)
                .map(|_| rng.gen_range(-0.5..0.5))
                .collect(),
        })
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.table[c * self.dim..(c + 1) * self.dim]
    }

    /// Raw rows wrapped as embeddings; losses renormalize internally.
    pub fn embeddings(&self) -> Vec<Embedding> {
        (0..self.n_classes)
            .map(|c| Embedding(self.row(c).to_vec()))
            .collect()
    }
}

/// Full trainable model: vision encoder, text table, and the log of the
/// inverse temperature (`logit_scale = ln(1/tau)`).
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub vision: VisionEncoder,
    pub text: TextEncoder,
    pub logit_scale: f64,
}

impl Model {
    pub fn init(arch: EncoderArch, n_classes: usize, seed: u64) -> Result<Self> {
        let mut rng = substream(seed, &[stream::MODEL_INIT]);
        let vision = VisionEncoder::init(arch, &mut rng)?;
        let text = TextEncoder::init(n_classes, arch.embed_dim, &mut rng)?;
        Ok(Self {
            vision,
            text,
            logit_scale: LOGIT_SCALE_INIT.ln(),
        })
    }

    /// Current softmax temperature `tau = exp(-logit_scale)`.
    pub fn temperature(&self) -> f64 {
        (-self.logit_scale).exp()
    }

    /// Encode a clip: per-frame features through the first layer, tanh,
    /// mean-pool over frames, project, unit-normalize.
    pub fn encode_clip_cached(&self, frames: &[ImageTensor]) -> Result<ClipCache> {
        if frames.is_empty() {
            return Err(Error::validation("empty clip".to_string()));
        }
        let enc = &self.vision;
        let feat_dim = enc.arch.feature_dim();
        let hid = enc.arch.hidden_dim;
        let emb = enc.arch.embed_dim;

        let mut features = Vec::with_capacity(frames.len());
        let mut hidden = Vec::with_capacity(frames.len());
        let mut pooled = vec![0.0; hid];
        for frame in frames {
            let x = enc.patch_features(frame)?;
            let mut h = vec![0.0; hid];
            for (i, hv) in h.iter_mut().enumerate() {
                let row = &enc.w1[i * feat_dim..(i + 1) * feat_dim];
                let a: f64 = row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + enc.b1[i];
                *hv = a.tanh();
            }
            for (p, hv) in pooled.iter_mut().zip(&h) {
                *p += hv / frames.len() as f64;
            }
            features.push(x);
            hidden.push(h);
        }

        let mut out = vec![0.0; emb];
        for (i, ov) in out.iter_mut().enumerate() {
            let row = &enc.w2[i * hid..(i + 1) * hid];
            *ov = row.iter().zip(&pooled).map(|(w, v)| w * v).sum::<f64>() + enc.b2[i];
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::validation(
                "encoder produced a zero embedding".to_string(),
            ));
        }
        let embedding = out.iter().map(|v| v / norm).collect();
        Ok(ClipCache {
            features,
            hidden,
            pooled,
            norm,
            embedding,
        })
    }

    pub fn encode_clip(&self, frames: &[ImageTensor]) -> Result<Embedding> {
        Ok(Embedding(self.encode_clip_cached(frames)?.embedding))
    }

    /// Accumulate parameter gradients for one clip given the gradient of the
    /// loss with respect to its unit-norm embedding.
    fn backprop_clip(&self, cache: &ClipCache, d_embedding: &[f64], grads: &mut Gradients) {
        let enc = &self.vision;
        let feat_dim = enc.arch.feature_dim();
        let hid = enc.arch.hidden_dim;
        let emb = enc.arch.embed_dim;
        let k = cache.features.len() as f64;

        // Through the normalization: d/du (u/||u||) projects onto the
        // tangent space and rescales by 1/||u||.
        let z = &cache.embedding;
        let inner: f64 = d_embedding.iter().zip(z).map(|(g, u)| g * u).sum();
        let d_out: Vec<f64> = d_embedding
            .iter()
            .zip(z)
            .map(|(g, u)| (g - inner * u) / cache.norm)
            .collect();

        let mut d_pooled = vec![0.0; hid];
        for (i, &g_out) in d_out.iter().enumerate().take(emb) {
            grads.b2[i] += g_out;
            let w_row = &enc.w2[i * hid..(i + 1) * hid];
            let g_row = &mut grads.w2[i * hid..(i + 1) * hid];
            for (j, d_p) in d_pooled.iter_mut().enumerate() {
                g_row[j] += g_out * cache.pooled[j];
                *d_p += w_row[j] * g_out;
            }
        }

        for (x, h) in cache.features.iter().zip(&cache.hidden) {
            for j in 0..hid {
                // Mean pooling spreads 1/k to each frame; tanh' = 1 - h^2.
                let d_a = d_pooled[j] / k * (1.0 - h[j] * h[j]);
                grads.b1[j] += d_a;
                let row = &mut grads.w1[j * feat_dim..(j + 1) * feat_dim];
                for (g, xv) in row.iter_mut().zip(x) {
                    *g += d_a * xv;
                }
            }
        }
    }
}

/// Parameter-space gradients, shaped like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub text: Vec<f64>,
    pub logit_scale: f64,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            w1: vec![0.0; model.vision.w1.len()],
            b1: vec![0.0; model.vision.b1.len()],
            w2: vec![0.0; model.vision.w2.len()],
            b2: vec![0.0; model.vision.b2.len()],
            text: vec![0.0; model.text.table.len()],
            logit_scale: 0.0,
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Gradients) {
        let pairs = [
            (&mut self.w1, &other.w1),
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
            (&mut self.b2, &other.b2),
            (&mut self.text, &other.text),
        ];
        for (dst, src) in pairs {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
        self.logit_scale += a * other.logit_scale;
    }

    /// Largest absolute difference across all coordinates.
    pub fn max_abs_diff(&self, other: &Gradients) -> f64 {
        let flat = |g: &Gradients| -> Vec<f64> {
            g.w1.iter()
                .chain(&g.b1)
                .chain(&g.w2)
                .chain(&g.b2)
                .chain(&g.text)
                .chain(std::iter::once(&g.logit_scale))
                .cloned()
                .collect()
        };
        flat(self)
            .iter()
            .zip(flat(other).iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A batch after frame sampling and augmentation, ready for the encoders.
/// `augmented` is `None` for runs that train without augmented views.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub clips: Vec<Vec<ImageTensor>>,
    pub augmented: Option<Vec<Vec<ImageTensor>>>,
    pub labels: Vec<usize>,
}

/// How a batch is turned into encoder inputs.
#[derive(Debug, Clone, Copy)]
pub struct PrepareOptions {
    pub frames_per_clip: usize,
    /// Upper bound of the amplitude-mixing ratio distribution.
    pub alpha: f64,
    /// Build frequency-augmented views at all.
    pub augment: bool,
    /// Apply the standard training transforms (random horizontal flip,
    /// brightness jitter) to every view.
    pub standard_augmentation: bool,
    pub parallel: bool,
}

/// Half-range of the uniform brightness jitter in the standard transforms.
const BRIGHTNESS_JITTER: f64 = 0.05;

/// Flip/jitter one clip, one draw per clip so frames stay consistent.
fn standard_augment(frames: Vec<ImageTensor>, rng: &mut impl Rng) -> Vec<ImageTensor> {
    let flip = rng.gen_bool(0.5);
    let delta = rng.gen_range(-BRIGHTNESS_JITTER..=BRIGHTNESS_JITTER);
    frames
        .into_iter()
        .map(|f| {
            let f = if flip { f.flip_horizontal() } else { f };
            f.shift_brightness(delta)
        })
        .collect()
}

/// Sample frames, apply the standard transforms, and build the
/// frequency-augmented views. Each item draws from its own substreams of
/// `aug_seed`, so results do not depend on processing order; with
/// `parallel` set (requires the `parallel` feature) items are augmented
/// across threads.
pub fn prepare_batch(
    batch: &Batch,
    options: &PrepareOptions,
    aug_seed: u64,
) -> Result<PreparedBatch> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch".to_string()));
    }
    let clips: Vec<Vec<ImageTensor>> = batch
        .clips
        .iter()
        .enumerate()
        .map(|(i, frames)| {
            let sampled = sample_frames(frames, options.frames_per_clip);
            if options.standard_augmentation {
                let mut rng = substream(aug_seed, &[stream::STANDARD_AUG, i as u64]);
                standard_augment(sampled, &mut rng)
            } else {
                sampled
            }
        })
        .collect();

    let augmented = if options.augment {
        let augment_one = |i: usize| -> Result<Vec<ImageTensor>> {
            let style = &clips[batch.style_partner[i]];
            let mut rng = substream(aug_seed, &[stream::AUGMENT, i as u64]);
            augment_clip(&clips[i], style, options.alpha, &mut rng)
        };
        let views: Result<Vec<_>> = if options.parallel {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..clips.len()).into_par_iter().map(augment_one).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                return Err(Error::validation(
                    "parallel augmentation requires the `parallel` feature".to_string(),
                ));
            }
        } else {
            (0..clips.len()).map(augment_one).collect()
        };
        Some(views?)
    } else {
        None
    };

    Ok(PreparedBatch {
        clips,
        augmented,
        labels: batch.labels.clone(),
    })
}

/// Per-component parameter gradients of one batch, plus the loss bundle.
/// `total` is the exact weighted combination of the components.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub bundle: LossBundle,
    pub total: Gradients,
    pub orig: Gradients,
    pub aug: Option<Gradients>,
    pub sup: Option<Gradients>,
}

impl Model {
    /// Evaluate all loss components and their exact parameter gradients for
    /// one prepared batch.
    pub fn forward_backward(
        &self,
        prepared: &PreparedBatch,
        lambda_aug: f64,
        lambda_sup: f64,
    ) -> Result<BatchGradients> {
        let tau = self.temperature();
        let text_emb = self.text.embeddings();

        let caches_o: Vec<ClipCache> = prepared
            .clips
            .iter()
            .map(|frames| self.encode_clip_cached(frames))
            .collect::<Result<_>>()?;
        let z_o: Vec<Embedding> = caches_o
            .iter()
            .map(|c| Embedding(c.embedding.clone()))
            .collect();

        let orig_lg = clip_loss_grads(&z_o, &text_emb, &prepared.labels, tau)?;
        let mut orig = Gradients::zeros_like(self);
        for (cache, d) in caches_o.iter().zip(&orig_lg.d_visual) {
            self.backprop_clip(cache, d, &mut orig);
        }
        accumulate_text_and_tau(&mut orig, &orig_lg.d_text, orig_lg.d_tau, tau);

        let mut l_aug = 0.0;
        let mut l_sup = 0.0;
        let mut aug = None;
        let mut sup = None;
        if let Some(aug_clips) = &prepared.augmented {
            let caches_a: Vec<ClipCache> = aug_clips
                .iter()
                .map(|frames| self.encode_clip_cached(frames))
                .collect::<Result<_>>()?;
            let z_a: Vec<Embedding> = caches_a
                .iter()
                .map(|c| Embedding(c.embedding.clone()))
                .collect();

            let aug_lg = clip_loss_grads(&z_a, &text_emb, &prepared.labels, tau)?;
            let mut g = Gradients::zeros_like(self);
            for (cache, d) in caches_a.iter().zip(&aug_lg.d_visual) {
                self.backprop_clip(cache, d, &mut g);
            }
            accumulate_text_and_tau(&mut g, &aug_lg.d_text, aug_lg.d_tau, tau);
            l_aug = aug_lg.loss;
            aug = Some(g);

            let sup_lg = suppression_loss_grads(&z_o, &z_a)?;
            let mut g = Gradients::zeros_like(self);
            for (cache, d) in caches_o.iter().zip(&sup_lg.d_original) {
                self.backprop_clip(cache, d, &mut g);
            }
            for (cache, d) in caches_a.iter().zip(&sup_lg.d_augmented) {
                self.backprop_clip(cache, d, &mut g);
            }
            l_sup = sup_lg.loss;
            sup = Some(g);
        }

        let weights = LossWeights::new(lambda_aug, lambda_sup, tau)?;
        let bundle = total_loss(orig_lg.loss, l_aug, l_sup, &weights)?;

        let mut total = orig.clone();
        if let Some(g) = &aug {
            total.axpy(lambda_aug, g);
        }
        if let Some(g) = &sup {
            total.axpy(lambda_sup, g);
        }

        Ok(BatchGradients {
            bundle,
            total,
            orig,
            aug,
            sup,
        })
    }

    /// Loss values only, via the value-path of the loss functions. Used as
    /// the finite-difference oracle in gradient checking.
    pub fn forward_only(
        &self,
        prepared: &PreparedBatch,
        lambda_aug: f64,
        lambda_sup: f64,
    ) -> Result<LossBundle> {
        let tau = self.temperature();
        let text_emb = self.text.embeddings();
        let z_o: Vec<Embedding> = prepared
            .clips
            .iter()
            .map(|frames| self.encode_clip(frames))
            .collect::<Result<_>>()?;
        let l_orig = clip_loss(&z_o, &text_emb, &prepared.labels, tau)?;
        let (mut l_aug, mut l_sup) = (0.0, 0.0);
        if let Some(aug_clips) = &prepared.augmented {
            let z_a: Vec<Embedding> = aug_clips
                .iter()
                .map(|frames| self.encode_clip(frames))
                .collect::<Result<_>>()?;
            l_aug = clip_loss(&z_a, &text_emb, &prepared.labels, tau)?;
            l_sup = suppression_loss(&z_o, &z_a)?;
        }
        total_loss(
            l_orig,
            l_aug,
            l_sup,
            &LossWeights::new(lambda_aug, lambda_sup, tau)?,
        )
    }

    /// Cosine similarity of one clip against every class anchor.
    fn class_similarities(&self, frames: &[ImageTensor]) -> Result<Vec<f64>> {
        if self.text.n_classes == 0 {
            return Err(Error::validation("empty class table".to_string()));
        }
        let z = self.encode_clip(frames)?;
        self.text
            .embeddings()
            .iter()
            .map(|t| Ok(z.dot(&t.normalized()?)))
            .collect()
    }

    /// Class probabilities for one or more frame sequences of a clip.
    /// Similarities (logits) are averaged across sequences before the
    /// softmax.
    pub fn predict_sequences(&self, sequences: &[Vec<ImageTensor>]) -> Result<Vec<f64>> {
        if sequences.is_empty() {
            return Err(Error::validation("no sequences to predict".to_string()));
        }
        let mut sims = vec![0.0; self.text.n_classes];
        for frames in sequences {
            for (acc, s) in sims.iter_mut().zip(self.class_similarities(frames)?) {
                *acc += s / sequences.len() as f64;
            }
        }
        crate::losses::similarity_softmax(&sims, self.temperature())
    }

    /// Single-sequence convenience wrapper around [`predict_sequences`].
    pub fn predict(&self, frames: &[ImageTensor]) -> Result<Vec<f64>> {
        let sims = self.class_similarities(frames)?;
        crate::losses::similarity_softmax(&sims, self.temperature())
    }
}

/// Fold the text-table and temperature gradients into parameter space.
/// The stored parameter is `t = ln(1/tau)`, so `d/dt = -tau * d/dtau`.
fn accumulate_text_and_tau(grads: &mut Gradients, d_text: &[Vec<f64>], d_tau: f64, tau: f64) {
    let dim = if d_text.is_empty() {
        0
    } else {
        d_text[0].len()
    };
    for (c, row) in d_text.iter().enumerate() {
        for (k, g) in row.iter().enumerate() {
            grads.text[c * dim + k] += g;
        }
    }
    grads.logit_scale += -tau * d_tau;
}

/// Training hyperparameters. Defaults mirror the usual contrastive recipe
/// at desk scale: `alpha = 0.5`, `lambda_aug = 0.8`, `lambda_sup = 0.4`.
/// The learning rate defaults to 1e-3 for the small randomly initialized
/// encoder (fine-tuning a large pretrained backbone would use ~1e-5), and
/// the batch size to 6, which keeps the unnormalized suppression loss on
/// the same footing as the alignment terms and gives a 30-clip corpus
/// several updates per epoch (32 is the usual full-scale choice).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lambda_aug: f64,
    pub lambda_sup: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub frames_per_clip: usize,
    pub patch_size: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub weight_decay: f64,
    /// Random horizontal flip + brightness jitter on training views.
    pub standard_augmentation: bool,
    /// Which domain to train on; hard domain adaptation trains on source only.
    pub train_domain: String,
    /// Augment batch items across threads. Outputs still match the serial
    /// path because every item owns an index-keyed substream, but the flag
    /// is excluded from the determinism guarantees.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            lambda_aug: 0.8,
            lambda_sup: 0.4,
            learning_rate: 1e-3,
            batch_size: 6,
            epochs: 120,
            seed: 7,
            frames_per_clip: 4,
            patch_size: 4,
            hidden_dim: 64,
            embed_dim: 32,
            weight_decay: 0.01,
            standard_augmentation: true,
            train_domain: "source".to_string(),
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut problems = Vec::new();
        if !(0.0..=1.0).contains(&self.alpha) {
            problems.push(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.lambda_aug < 0.0 || self.lambda_sup < 0.0 {
            problems.push(format!(
                "lambda_aug and lambda_sup must be non-negative, got ({}, {})",
                self.lambda_aug, self.lambda_sup
            ));
        }
        if self.learning_rate <= 0.0 {
            problems.push(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.weight_decay < 0.0 {
            problems.push(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("frames_per_clip", self.frames_per_clip),
            ("patch_size", self.patch_size),
            ("hidden_dim", self.hidden_dim),
            ("embed_dim", self.embed_dim),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        if self.train_domain.parse::<DomainFilter>().is_err() {
            problems.push(format!(
                "train_domain must be \"all\", \"source\" or \"target\", got {:?}",
                self.train_domain
            ));
        }
        Ok(problems)
    }

    pub fn train_filter(&self) -> DomainFilter {
        self.train_domain.parse().unwrap_or(DomainFilter::Source)
    }

    /// True when the objective needs augmented views at all.
    pub fn needs_augmentation(&self) -> bool {
        self.lambda_aug > 0.0 || self.lambda_sup > 0.0
    }

    pub fn prepare_options(&self) -> PrepareOptions {
        PrepareOptions {
            frames_per_clip: self.frames_per_clip,
            alpha: self.alpha,
            augment: self.needs_augmentation(),
            standard_augmentation: self.standard_augmentation,
            parallel: self.parallel,
        }
    }
}

/// Derive the augmentation seed for `(epoch, batch_index)` from the run seed.
pub fn augment_seed(seed: u64, epoch: usize, batch_index: usize) -> u64 {
    child_seed(seed, &[stream::AUGMENT, epoch as u64, batch_index as u64])
}

/// Predict every clip matching `filter` and collect (true, predicted) pairs.
/// Frames are subsampled to `frames_per_clip` the same way training does.
pub fn evaluate(
    model: &Model,
    set: &crate::data::ClipSet,
    filter: DomainFilter,
    frames_per_clip: usize,
) -> Result<crate::metrics::PredictionSet> {
    let clips: Vec<&crate::data::Clip> = set
        .clips()
        .iter()
        .filter(|c| filter.matches(c.domain))
        .collect();
    if clips.is_empty() {
        return Err(Error::validation(format!(
            "domain filter {filter:?} matches no clips"
        )));
    }
    if set.n_classes() != model.text.n_classes {
        return Err(Error::validation(format!(
            "checkpoint has {} classes but the manifest declares {}",
            model.text.n_classes,
            set.n_classes()
        )));
    }
    let mut pairs = Vec::with_capacity(clips.len());
    let mut ids = Vec::with_capacity(clips.len());
    for clip in clips {
        let frames = sample_frames(&clip.frames, frames_per_clip);
        let probs = model.predict(&frames)?;
        let predicted = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
            .map(|(i, _)| i)
            .expect("nonempty class table");
        pairs.push((clip.label, predicted));
        ids.push(clip.clip_id.clone());
    }
    crate::metrics::PredictionSet::with_ids(set.n_classes(), pairs, ids)
}
