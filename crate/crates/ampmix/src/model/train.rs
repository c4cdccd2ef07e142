//! Optimizer and training loop.

use serde::{Deserialize, Serialize};

use crate::data::{make_batches, ClipSet};
use crate::error::{Error, Result};
use crate::losses::LossBundle;
use crate::rng::{stream, substream};

use super::{
    augment_seed, prepare_batch, Checkpoint, EncoderArch, Gradients, Model, TrainConfig,
    LOGIT_SCALE_MAX,
};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Adaptive-moment optimizer state with decoupled weight decay. Decay is
/// applied to the weight matrices and the text table, not to biases or the
/// temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: Gradients,
    pub v: Gradients,
    pub step: u64,
}

impl AdamWState {
    pub fn new(model: &Model) -> Self {
        Self {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            step: 0,
        }
    }

    /// One update of every parameter group.
    pub fn update(&mut self, model: &mut Model, grads: &Gradients, lr: f64, weight_decay: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);

        let update_array =
            |param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], decay: bool| {
                for i in 0..param.len() {
                    if decay {
                        param[i] *= 1.0 - lr * weight_decay;
                    }
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    param[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                }
            };

        update_array(
            &mut model.vision.w1,
            &grads.w1,
            &mut self.m.w1,
            &mut self.v.w1,
            true,
        );
        update_array(
            &mut model.vision.b1,
            &grads.b1,
            &mut self.m.b1,
            &mut self.v.b1,
            false,
        );
        update_array(
            &mut model.vision.w2,
            &grads.w2,
            &mut self.m.w2,
            &mut self.v.w2,
            true,
        );
        update_array(
            &mut model.vision.b2,
            &grads.b2,
            &mut self.m.b2,
            &mut self.v.b2,
            false,
        );
        update_array(
            &mut model.text.table,
            &grads.text,
            &mut self.m.text,
            &mut self.v.text,
            true,
        );

        // Temperature parameter: scalar Adam step, no decay, then clamp so
        // 1/tau stays at or below LOGIT_SCALE_MAX.
        self.m.logit_scale = BETA1 * self.m.logit_scale + (1.0 - BETA1) * grads.logit_scale;
        self.v.logit_scale =
            BETA2 * self.v.logit_scale + (1.0 - BETA2) * grads.logit_scale * grads.logit_scale;
        let m_hat = self.m.logit_scale / bc1;
        let v_hat = self.v.logit_scale / bc2;
        model.logit_scale -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        model.logit_scale = model.logit_scale.min(LOGIT_SCALE_MAX.ln());
    }
}

/// Mean loss components of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub bundle: LossBundle,
}

/// Trained model plus the per-epoch loss log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Train on the configured domain of `set` for `config.epochs` epochs of
/// shuffled mini-batches. Deterministic given `config.seed`.
pub fn train(config: &TrainConfig, set: &ClipSet) -> Result<TrainOutcome> {
    let problems = config.validate()?;
    if !problems.is_empty() {
        return Err(Error::validation(problems.join("; ")));
    }
    if set.is_empty() {
        return Err(Error::validation("empty dataset".to_string()));
    }
    let filter = config.train_filter();
    for (label, name) in set.class_names().iter().enumerate() {
        let present = set
            .clips()
            .iter()
            .any(|c| c.label == label && filter.matches(c.domain));
        if !present {
            return Err(Error::validation(format!(
                "class {name:?} has no clips in the {:?} training domain",
                config.train_domain
            )));
        }
    }
    let first = &set.clips()[0].frames[0];
    if set
        .clips()
        .iter()
        .any(|c| c.frames.iter().any(|f| f.shape() != first.shape()))
    {
        return Err(Error::validation(
            "all clips must share one frame shape".to_string(),
        ));
    }
    let (h, w, ch) = first.shape();
    let arch = EncoderArch {
        frame_height: h,
        frame_width: w,
        channels: ch,
        patch_size: config.patch_size,
        hidden_dim: config.hidden_dim,
        embed_dim: config.embed_dim,
    };
    let mut model = Model::init(arch, set.n_classes(), config.seed)?;
    let mut optimizer = AdamWState::new(&model);
    let mut log = Vec::with_capacity(config.epochs);
    let prepare = config.prepare_options();

    for epoch in 0..config.epochs {
        let mut shuffle_rng = substream(config.seed, &[stream::BATCH_SHUFFLE, epoch as u64]);
        let batches = make_batches(
            set,
            config.batch_size,
            &mut shuffle_rng,
            config.train_filter(),
        )?;

        let mut sums = [0.0f64; 3];
        for (bi, batch) in batches.iter().enumerate() {
            let prepared =
                prepare_batch(batch, &prepare, augment_seed(config.seed, epoch, bi))?;
            let fb = model.forward_backward(&prepared, config.lambda_aug, config.lambda_sup)?;
            optimizer.update(
                &mut model,
                &fb.total,
                config.learning_rate,
                config.weight_decay,
            );
            sums[0] += fb.bundle.l_orig;
            sums[1] += fb.bundle.l_aug;
            sums[2] += fb.bundle.l_sup;
        }
        let n = batches.len() as f64;
        let (l_orig, l_aug, l_sup) = (sums[0] / n, sums[1] / n, sums[2] / n);
        log.push(EpochLog {
            epoch,
            bundle: LossBundle {
                l_orig,
                l_aug,
                l_sup,
                l_total: l_orig + config.lambda_aug * l_aug + config.lambda_sup * l_sup,
            },
        });
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model,
            optimizer,
            epoch: config.epochs,
            config: config.clone(),
            class_names: set.class_names().to_vec(),
        },
        log,
    })
}

/// Render the per-epoch log as the CSV loss log.
pub fn format_loss_log(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,l_orig,l_aug,l_sup,l_total\n");
    for e in log {
        out.push_str(&format!(
            "{},{:.12},{:.12},{:.12},{:.12}\n",
            e.epoch, e.bundle.l_orig, e.bundle.l_aug, e.bundle.l_sup, e.bundle.l_total
        ));
    }
    out
}
