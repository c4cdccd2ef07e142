//! Finite-difference validation of the hand-derived gradients.
//!
//! For randomized small instances, every parameter coordinate of every loss
//! component is compared against a central difference of the value-only
//! forward pass. A coordinate passes when the relative error is at or below
//! 1e-4, with an absolute floor of 1e-6 for near-zero gradients.

use rand::Rng;

use crate::data::Batch;
use crate::error::Result;
use crate::image::ImageTensor;
use crate::rng::{child_seed, stream, substream};

use super::{prepare_batch, EncoderArch, Gradients, Model, PrepareOptions, PreparedBatch};

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-6;

/// Worst relative error of one loss component across all instances.
#[derive(Debug, Clone)]
pub struct ComponentReport {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Outcome of a full gradient-check run.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub instances: usize,
    pub components: Vec<ComponentReport>,
    pub passed: bool,
}

/// Parameter groups in a fixed order, shared by the model and its gradients.
const GROUPS: [&str; 6] = ["w1", "b1", "w2", "b2", "text", "logit_scale"];

fn group_len(model: &Model, group: usize) -> usize {
    match group {
        0 => model.vision.w1.len(),
        1 => model.vision.b1.len(),
        2 => model.vision.w2.len(),
        3 => model.vision.b2.len(),
        4 => model.text.table.len(),
        _ => 1,
    }
}

fn param_mut(model: &mut Model, group: usize, idx: usize) -> &mut f64 {
    match group {
        0 => &mut model.vision.w1[idx],
        1 => &mut model.vision.b1[idx],
        2 => &mut model.vision.w2[idx],
        3 => &mut model.vision.b2[idx],
        4 => &mut model.text.table[idx],
        _ => &mut model.logit_scale,
    }
}

fn grad_at(grads: &Gradients, group: usize, idx: usize) -> f64 {
    match group {
        0 => grads.w1[idx],
        1 => grads.b1[idx],
        2 => grads.w2[idx],
        3 => grads.b2[idx],
        4 => grads.text[idx],
        _ => grads.logit_scale,
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom <= ABS_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

fn random_instance(seed: u64) -> Result<(Model, PreparedBatch)> {
    let mut rng = substream(seed, &[stream::GRADCHECK]);
    let n_items = rng.gen_range(2..=4);
    let n_classes = rng.gen_range(2..=3);
    let arch = EncoderArch {
        frame_height: 8,
        frame_width: 8,
        channels: 3,
        patch_size: 4,
        hidden_dim: rng.gen_range(4..=8),
        embed_dim: rng.gen_range(4..=8),
    };
    let model = Model::init(arch, n_classes, child_seed(seed, &[1]))?;

    let frame = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<ImageTensor> {
        let data: Vec<f64> = (0..8 * 8 * 3).map(|_| rng.gen_range(0.1..0.9)).collect();
        ImageTensor::new(8, 8, 3, data)
    };
    let mut clips = Vec::with_capacity(n_items);
    let mut labels = Vec::with_capacity(n_items);
    for _ in 0..n_items {
        clips.push(vec![frame(&mut rng)?, frame(&mut rng)?]);
        labels.push(rng.gen_range(0..n_classes));
    }
    let style_partner = (0..n_items).map(|i| (i + 1) % n_items).collect();
    let batch = Batch {
        clip_ids: (0..n_items).map(|i| format!("g{i}")).collect(),
        clips,
        labels,
        style_partner,
        self_paired: false,
    };
    let options = PrepareOptions {
        frames_per_clip: 2,
        alpha: 0.5,
        augment: true,
        standard_augmentation: false,
        parallel: false,
    };
    let prepared = prepare_batch(&batch, &options, child_seed(seed, &[2]))?;
    Ok((model, prepared))
}

/// Run the finite-difference comparison on `instances` random instances.
/// `corrupt` is a test hook that perturbs one analytic gradient entry and
/// must make the check fail.
pub fn gradient_check(seed: u64, instances: usize, corrupt: bool) -> Result<GradCheckReport> {
    const LAMBDA_AUG: f64 = 0.8;
    const LAMBDA_SUP: f64 = 0.4;
    let names = ["l_orig", "l_aug", "l_sup", "l_total"];
    let mut max_err = [0.0f64; 4];

    for instance in 0..instances {
        let (model, prepared) = random_instance(child_seed(seed, &[instance as u64]))?;
        let fb = model.forward_backward(&prepared, LAMBDA_AUG, LAMBDA_SUP)?;
        let mut analytic = [
            fb.orig.clone(),
            fb.aug.clone().expect("augmented views present"),
            fb.sup.clone().expect("augmented views present"),
            fb.total.clone(),
        ];
        if corrupt {
            analytic[0].w1[0] += 0.05;
            analytic[3].w1[0] += 0.05;
        }

        for group in 0..GROUPS.len() {
            for idx in 0..group_len(&model, group) {
                let probe = |delta: f64| -> Result<[f64; 4]> {
                    let mut m = model.clone();
                    *param_mut(&mut m, group, idx) += delta;
                    let bundle = m.forward_only(&prepared, LAMBDA_AUG, LAMBDA_SUP)?;
                    Ok([bundle.l_orig, bundle.l_aug, bundle.l_sup, bundle.l_total])
                };
                let plus = probe(FD_STEP)?;
                let minus = probe(-FD_STEP)?;
                for comp in 0..4 {
                    let numeric = (plus[comp] - minus[comp]) / (2.0 * FD_STEP);
                    let a = grad_at(&analytic[comp], group, idx);
                    max_err[comp] = max_err[comp].max(rel_err(a, numeric));
                }
            }
        }
    }

    let components: Vec<ComponentReport> = names
        .iter()
        .zip(max_err)
        .map(|(&name, max_rel_err)| ComponentReport {
            name,
            max_rel_err,
            passed: max_rel_err <= REL_TOL,
        })
        .collect();
    let passed = components.iter().all(|c| c.passed);
    Ok(GradCheckReport {
        instances,
        components,
        passed,
    })
}
