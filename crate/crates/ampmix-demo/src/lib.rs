//! Browser demo: renders the synthetic benchmark, explores amplitude-mixing
//! augmentation interactively, and runs a small training loop in-page.
//!
//! All exports return plain buffers or JSON strings so the static page can
//! stay framework-free: RGBA bytes go straight into `ImageData`, training
//! results are parsed with `JSON.parse`. Everything is seeded; no entropy
//! is drawn in the browser.

use wasm_bindgen::prelude::*;

use ampmix::data::{render_clip, Clip, ClipSet, Domain, DomainFilter, StyleParams, SynthSpec};
use ampmix::error::Error;
use ampmix::image::ImageTensor;
use ampmix::metrics::compute_metrics;
use ampmix::model::{evaluate, train, TrainConfig};
use ampmix::spectral::{augment_with_ratio, fft2, MixRatio};

fn js_err(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn demo_spec(seed: u32, size: u32) -> SynthSpec {
    SynthSpec {
        num_classes: 3,
        clips_per_class: 4,
        frames_per_clip: 2,
        image_size: size as usize,
        seed: seed as u64,
        source_style: StyleParams::default_source(),
        target_style: StyleParams::default_target(),
    }
}

fn domain_of(target: bool) -> Domain {
    if target {
        Domain::Target
    } else {
        Domain::Source
    }
}

fn rendered_frame(
    spec: &SynthSpec,
    class: u32,
    clip: u32,
    frame: u32,
    domain: Domain,
) -> Result<ImageTensor, JsValue> {
    let rendered = render_clip(spec, class as usize, clip as usize, domain).map_err(js_err)?;
    let idx = (frame as usize).min(rendered.frames.len() - 1);
    Ok(rendered.frames[idx].clone())
}

/// One frame of the synthetic benchmark as RGBA bytes (row-major,
/// `size * size * 4`).
#[wasm_bindgen]
pub fn synth_frame(
    seed: u32,
    class: u32,
    clip: u32,
    frame: u32,
    target_domain: bool,
    size: u32,
) -> Result<Vec<u8>, JsValue> {
    let spec = demo_spec(seed, size);
    let img = rendered_frame(&spec, class, clip, frame, domain_of(target_domain))?;
    Ok(img.to_rgba8())
}

/// Centered log-amplitude view of an image's spectrum, as grayscale RGBA.
fn amplitude_view(img: &ImageTensor) -> Result<Vec<u8>, JsValue> {
    let spec = fft2(img).map_err(js_err)?;
    let (h, w) = (spec.height(), spec.width());
    let n = h * w;
    // Mean log-amplitude over channels, quadrant-shifted so DC sits in the
    // middle of the view.
    let mut values = vec![0.0f64; n];
    for c in 0..spec.channels() {
        let plane = &spec.amplitude()[c * n..(c + 1) * n];
        for (v, a) in values.iter_mut().zip(plane) {
            *v += (1.0 + a).ln() / spec.channels() as f64;
        }
    }
    let max = values.iter().cloned().fold(f64::MIN, f64::max).max(1e-12);
    let mut out = vec![0u8; n * 4];
    for y in 0..h {
        for x in 0..w {
            let sy = (y + h / 2) % h;
            let sx = (x + w / 2) % w;
            let v = (values[sy * w + sx] / max * 255.0).round() as u8;
            let o = (y * w + x) * 4;
            out[o] = v;
            out[o + 1] = v;
            out[o + 2] = v;
            out[o + 3] = 255;
        }
    }
    Ok(out)
}

/// Augmentation explorer: mixes a source frame's amplitude toward a style
/// frame at the given `beta`, keeping the source phase. Returns four RGBA
/// planes concatenated (source, style, augmented, then the augmented
/// image's centered log-amplitude spectrum), each `size * size * 4` bytes.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn augment_panel(
    seed: u32,
    src_class: u32,
    src_clip: u32,
    style_class: u32,
    style_clip: u32,
    frame: u32,
    beta: f64,
    size: u32,
) -> Result<Vec<u8>, JsValue> {
    let spec = demo_spec(seed, size);
    let source = rendered_frame(&spec, src_class, src_clip, frame, Domain::Source)?;
    let style = rendered_frame(&spec, style_class, style_clip, frame, Domain::Source)?;
    let ratio = MixRatio::new(beta, 1.0).map_err(js_err)?;
    let augmented = augment_with_ratio(&source, &style, ratio).map_err(js_err)?;

    let mut out = source.to_rgba8();
    out.extend(style.to_rgba8());
    out.extend(augmented.to_rgba8());
    out.extend(amplitude_view(&augmented)?);
    Ok(out)
}

fn in_memory_set(spec: &SynthSpec) -> Result<ClipSet, JsValue> {
    let mut clips = Vec::new();
    for domain in [Domain::Source, Domain::Target] {
        for class in 0..spec.num_classes {
            for k in 0..spec.clips_per_class {
                let rendered = render_clip(spec, class, k, domain).map_err(js_err)?;
                clips.push(Clip {
                    clip_id: format!("{domain}_{class}_{k}"),
                    label: class,
                    domain,
                    frames: rendered.frames,
                });
            }
        }
    }
    Ok(ClipSet::from_clips(spec.class_names(), clips))
}

/// Train a small model on an in-memory rendition of the benchmark and
/// report the loss trajectory plus source/target balanced accuracy, as a
/// JSON string. `use_aug` / `use_sup` toggle the extra loss terms.
#[wasm_bindgen]
pub fn train_demo(seed: u32, epochs: u32, use_aug: bool, use_sup: bool) -> Result<String, JsValue> {
    let spec = demo_spec(7, 32);
    let set = in_memory_set(&spec)?;
    let config = TrainConfig {
        lambda_aug: if use_aug { 0.8 } else { 0.0 },
        lambda_sup: if use_sup { 0.4 } else { 0.0 },
        epochs: epochs as usize,
        seed: seed as u64,
        frames_per_clip: 2,
        hidden_dim: 32,
        embed_dim: 16,
        ..TrainConfig::default()
    };
    let outcome = train(&config, &set).map_err(js_err)?;

    let balanced = |filter: DomainFilter| -> Result<f64, JsValue> {
        let preds = evaluate(
            &outcome.checkpoint.model,
            &set,
            filter,
            config.frames_per_clip,
        )
        .map_err(js_err)?;
        Ok(compute_metrics(&preds).map_err(js_err)?.balanced_accuracy)
    };

    let log: Vec<serde_json::Value> = outcome
        .log
        .iter()
        .map(|e| {
            serde_json::json!({
                "epoch": e.epoch,
                "l_orig": e.bundle.l_orig,
                "l_aug": e.bundle.l_aug,
                "l_sup": e.bundle.l_sup,
                "l_total": e.bundle.l_total,
            })
        })
        .collect();
    let result = serde_json::json!({
        "log": log,
        "source_balanced_accuracy": balanced(DomainFilter::Source)?,
        "target_balanced_accuracy": balanced(DomainFilter::Target)?,
    });
    Ok(result.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_frame_has_rgba_layout() {
        let bytes = synth_frame(7, 0, 0, 0, false, 32).unwrap();
        assert_eq!(bytes.len(), 32 * 32 * 4);
        assert!(bytes.iter().skip(3).step_by(4).all(|&a| a == 255));
    }

    #[test]
    fn augment_panel_returns_four_planes() {
        let bytes = augment_panel(7, 0, 0, 1, 0, 0, 0.5, 32).unwrap();
        assert_eq!(bytes.len(), 4 * 32 * 32 * 4);
        // beta = 0 leaves the augmented plane equal to the source plane.
        let identity = augment_panel(7, 0, 0, 1, 0, 0, 0.0, 32).unwrap();
        let plane = 32 * 32 * 4;
        assert_eq!(identity[..plane], identity[2 * plane..3 * plane]);
    }

    #[test]
    fn train_demo_reports_losses_and_accuracy() {
        let json = train_demo(1, 3, true, true).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["log"].as_array().unwrap().len(), 3);
        let balanced = value["source_balanced_accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&balanced));
    }
}
