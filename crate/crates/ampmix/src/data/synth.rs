//! Synthetic domain-shift benchmark generator.
//!
//! Class identity is carried by causal content: a colored shape (disc,
//! square, cross) moving through a class-specific horizontal band. Domain
//! identity is carried by non-causal style: background brightness and the
//! amplitude-spectrum profile of the background texture. Both domains render
//! the same geometry for the same clip id, so source and target differ only
//! in background statistics — exactly the nuisance that amplitude mixing
//! perturbs.
//!
//! In the source domain each class additionally gets its own background
//! brightness and texture slope, making style a tempting shortcut that does
//! not survive the domain shift.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Domain, Manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::image::{save_png, ImageTensor};
use crate::rng::{stream, substream};
use crate::spectral::{ifft2_raw, Spectrum};

/// Background style of one domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StyleParams {
    /// Base background level in `[0, 1]`.
    pub brightness_bias: f64,
    /// Half-range of per-class brightness offsets (0 disables them).
    pub class_brightness_spread: f64,
    /// Maximum absolute deviation of the background texture.
    pub texture_strength: f64,
    /// Spectral falloff exponent: bin amplitude ~ 1 / (1 + |k|)^slope.
    pub texture_slope: f64,
    /// Per-class increment added to the slope (0 disables it).
    pub class_slope_spread: f64,
    /// Half-range of per-pixel uniform noise.
    pub noise_level: f64,
}

impl Default for StyleParams {
    fn default() -> Self {
        StyleParams {
            brightness_bias: 0.5,
            class_brightness_spread: 0.0,
            texture_strength: 0.1,
            texture_slope: 1.5,
            class_slope_spread: 0.0,
            noise_level: 0.02,
        }
    }
}

impl StyleParams {
    /// Source-domain default: strongly class-correlated brightness and
    /// texture, wide enough that amplitude mixing between classes spans a
    /// broad style range.
    pub fn default_source() -> Self {
        StyleParams {
            brightness_bias: 0.55,
            class_brightness_spread: 0.30,
            texture_strength: 0.12,
            texture_slope: 1.2,
            class_slope_spread: 1.2,
            noise_level: 0.02,
        }
    }

    /// Target-domain default: one shared style, darker and smoother.
    pub fn default_target() -> Self {
        StyleParams {
            brightness_bias: 0.48,
            class_brightness_spread: 0.0,
            texture_strength: 0.13,
            texture_slope: 1.8,
            class_slope_spread: 0.0,
            noise_level: 0.02,
        }
    }

    fn problems(&self, which: &str, out: &mut Vec<String>) {
        if !(0.0..=1.0).contains(&self.brightness_bias) {
            out.push(format!("{which}.brightness_bias must lie in [0, 1]"));
        }
        for (name, v) in [
            ("class_brightness_spread", self.class_brightness_spread),
            ("texture_strength", self.texture_strength),
            ("texture_slope", self.texture_slope),
            ("class_slope_spread", self.class_slope_spread),
            ("noise_level", self.noise_level),
        ] {
            if !v.is_finite() || v < 0.0 {
                out.push(format!(
                    "{which}.{name} must be finite and non-negative, got {v}"
                ));
            }
        }
    }

    /// Brightness level of class `c`'s background; offsets are symmetric
    /// around `brightness_bias` so their mean over classes is zero.
    fn class_brightness(&self, class: usize, n_classes: usize) -> f64 {
        self.brightness_bias + self.class_brightness_spread * centered(class, n_classes)
    }

    fn class_slope(&self, class: usize, n_classes: usize) -> f64 {
        let t = if n_classes <= 1 {
            0.0
        } else {
            class as f64 / (n_classes - 1) as f64
        };
        self.texture_slope + self.class_slope_spread * t
    }
}

/// Map class index to `[-1, 1]`, symmetric around 0.
fn centered(class: usize, n_classes: usize) -> f64 {
    if n_classes <= 1 {
        0.0
    } else {
        2.0 * class as f64 / (n_classes - 1) as f64 - 1.0
    }
}

/// Full description of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub num_classes: usize,
    /// Clips per class, per domain.
    pub clips_per_class: usize,
    pub frames_per_clip: usize,
    /// Square frame side in pixels.
    pub image_size: usize,
    pub seed: u64,
    pub source_style: StyleParams,
    pub target_style: StyleParams,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_classes: 3,
            clips_per_class: 10,
            frames_per_clip: 4,
            image_size: 32,
            seed: 7,
            source_style: StyleParams::default_source(),
            target_style: StyleParams::default_target(),
        }
    }
}

impl SynthSpec {
    /// Every validation problem, for exhaustive config error reporting.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.num_classes == 0 || self.clips_per_class == 0 || self.frames_per_clip == 0 {
            out.push(
                "num_classes, clips_per_class, and frames_per_clip must be positive".to_string(),
            );
        }
        if self.image_size < 8 {
            out.push(format!(
                "image_size must be at least 8, got {}",
                self.image_size
            ));
        }
        self.source_style.problems("source_style", &mut out);
        self.target_style.problems("target_style", &mut out);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::validation(problems.join("; ")))
        }
    }

    /// Class names derived from the shape cycle.
    pub fn class_names(&self) -> Vec<String> {
        (0..self.num_classes)
            .map(|c| {
                let base = SHAPE_NAMES[c % SHAPE_NAMES.len()];
                if c < SHAPE_NAMES.len() {
                    base.to_string()
                } else {
                    format!("{base}{}", c / SHAPE_NAMES.len() + 1)
                }
            })
            .collect()
    }

    /// The minimum cross-domain brightness gap the generator guarantees.
    pub fn configured_brightness_gap(&self) -> f64 {
        self.source_style.brightness_bias - self.target_style.brightness_bias
    }
}

const SHAPE_NAMES: [&str; 3] = ["disc", "square", "cross"];

/// Shared foreground color; identical for every class and domain so that
/// color itself carries no class or domain information.
const FOREGROUND: [f64; 3] = [0.88, 0.16, 0.20];

/// Per-channel tint of the background texture.
const TEXTURE_TINT: [f64; 3] = [1.0, 0.92, 0.84];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ShapeKind {
    Disc,
    Square,
    Cross,
}

/// Geometry of one clip: shape kind/size and the per-frame centers.
#[derive(Debug, Clone)]
struct ClipGeometry {
    kind: ShapeKind,
    radius: f64,
    centers: Vec<(f64, f64)>,
}

fn shape_of(class: usize) -> ShapeKind {
    match class % 3 {
        0 => ShapeKind::Disc,
        1 => ShapeKind::Square,
        _ => ShapeKind::Cross,
    }
}

/// Sample the trajectory for `(class, clip_idx)`. Independent of domain so
/// both renditions share geometry exactly.
fn clip_geometry(spec: &SynthSpec, class: usize, clip_idx: usize) -> ClipGeometry {
    let size = spec.image_size as f64;
    let radius = 0.16 * size * (1.0 + 0.25 * (class / 3) as f64);
    let speed = 0.06 * size;
    // Even classes drift right, odd classes left.
    let vx = if class.is_multiple_of(2) {
        speed
    } else {
        -speed
    };
    let total_dx = vx * (spec.frames_per_clip.saturating_sub(1)) as f64;

    let mut rng = substream(
        spec.seed,
        &[stream::SYNTH_GEOMETRY, class as u64, clip_idx as u64],
    );

    let margin = radius + 1.0;
    let lo_x = margin + (-total_dx).max(0.0);
    let hi_x = size - margin - total_dx.max(0.0);
    let x0 = if lo_x < hi_x {
        rng.gen_range(lo_x..hi_x)
    } else {
        size / 2.0
    };

    // Vertical band per class; the center stays inside its band.
    let band = size / spec.num_classes as f64;
    let band_lo = (class as f64 * band).max(margin);
    let band_hi = ((class as f64 + 1.0) * band).min(size - margin);
    let y0 = if band_lo < band_hi {
        rng.gen_range(band_lo..band_hi)
    } else {
        (class as f64 + 0.5) * band
    };

    let centers = (0..spec.frames_per_clip)
        .map(|t| (x0 + vx * t as f64, y0))
        .collect();
    ClipGeometry {
        kind: shape_of(class),
        radius,
        centers,
    }
}

fn shape_mask(kind: ShapeKind, radius: f64, cx: f64, cy: f64, size: usize) -> Vec<bool> {
    let mut mask = vec![false; size * size];
    for y in 0..size {
        for x in 0..size {
            let dx = (x as f64 + 0.5) - cx;
            let dy = (y as f64 + 0.5) - cy;
            let inside = match kind {
                ShapeKind::Disc => dx * dx + dy * dy <= radius * radius,
                ShapeKind::Square => dx.abs() <= 0.9 * radius && dy.abs() <= 0.9 * radius,
                ShapeKind::Cross => {
                    (dx.abs() <= 0.45 * radius && dy.abs() <= radius)
                        || (dy.abs() <= 0.45 * radius && dx.abs() <= radius)
                }
            };
            mask[y * size + x] = inside;
        }
    }
    mask
}

/// Zero-mean texture field with amplitude spectrum `~ 1/(1+|k|)^slope` and
/// random phases, normalized to unit maximum absolute value.
fn texture_field(size: usize, slope: f64, rng: &mut impl Rng) -> Vec<f64> {
    let n = size * size;
    let mut amplitude = vec![0.0; n];
    let mut phase = vec![0.0; n];
    for ky in 0..size {
        for kx in 0..size {
            if ky == 0 && kx == 0 {
                continue; // zero DC keeps the field exactly zero-mean
            }
            let fy = ky.min(size - ky) as f64;
            let fx = kx.min(size - kx) as f64;
            let dist = (fy * fy + fx * fx).sqrt();
            amplitude[ky * size + kx] = (1.0 + dist).powf(-slope);
            phase[ky * size + kx] = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        }
    }
    let spec = Spectrum::new(size, size, 1, amplitude, phase).expect("texture spectrum is valid");
    let mut field = ifft2_raw(&spec).expect("texture inverse transform");
    let max_abs = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs > 0.0 {
        for v in &mut field {
            *v /= max_abs;
        }
    }
    field
}

/// Rendered clip: frames plus the boolean foreground mask of each frame.
#[derive(Debug, Clone)]
pub struct RenderedClip {
    pub frames: Vec<ImageTensor>,
    pub masks: Vec<Vec<bool>>,
}

/// Render one clip of the synthetic benchmark. Pure: no filesystem access,
/// deterministic in `(spec, class, clip_idx, domain)`.
pub fn render_clip(
    spec: &SynthSpec,
    class: usize,
    clip_idx: usize,
    domain: Domain,
) -> Result<RenderedClip> {
    spec.validate()?;
    if class >= spec.num_classes {
        return Err(Error::validation(format!(
            "class {class} out of range for {} classes",
            spec.num_classes
        )));
    }
    let size = spec.image_size;
    let geometry = clip_geometry(spec, class, clip_idx);
    let masks: Vec<Vec<bool>> = geometry
        .centers
        .iter()
        .map(|&(cx, cy)| shape_mask(geometry.kind, geometry.radius, cx, cy, size))
        .collect();

    let style = match domain {
        Domain::Source => &spec.source_style,
        Domain::Target => &spec.target_style,
    };
    let brightness = match domain {
        Domain::Source => style.class_brightness(class, spec.num_classes),
        Domain::Target => {
            compensated_target_base(spec)
                + style.class_brightness_spread * centered(class, spec.num_classes)
        }
    };
    let slope = style.class_slope(class, spec.num_classes);

    let domain_id = match domain {
        Domain::Source => 0u64,
        Domain::Target => 1u64,
    };
    let mut rng = substream(
        spec.seed,
        &[
            stream::SYNTH_BACKGROUND,
            domain_id,
            class as u64,
            clip_idx as u64,
        ],
    );
    // Background texture is static per clip; per-pixel noise varies per frame.
    let texture = texture_field(size, slope, &mut rng);

    let n = size * size;
    let mut frames = Vec::with_capacity(spec.frames_per_clip);
    for mask in &masks {
        let mut data = vec![0.0; n * 3];
        for c in 0..3 {
            let mut noise: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(-style.noise_level..=style.noise_level))
                .collect();
            let mean = noise.iter().sum::<f64>() / n as f64;
            for v in &mut noise {
                *v -= mean;
            }
            for i in 0..n {
                let v = if mask[i] {
                    FOREGROUND[c]
                } else {
                    brightness + TEXTURE_TINT[c] * style.texture_strength * texture[i] + noise[i]
                };
                data[c * n + i] = v.clamp(0.0, 1.0);
            }
        }
        frames.push(ImageTensor::new(size, size, 3, data)?);
    }
    Ok(RenderedClip { frames, masks })
}

/// Reference foreground area fraction of class `c`: the mask pixel count of
/// its shape centered in the frame.
fn reference_fraction(spec: &SynthSpec, class: usize) -> f64 {
    let size = spec.image_size;
    let radius = 0.16 * size as f64 * (1.0 + 0.25 * (class / 3) as f64);
    let center = size as f64 / 2.0;
    let mask = shape_mask(shape_of(class), radius, center, center, size);
    mask.iter().filter(|&&m| m).count() as f64 / (size * size) as f64
}

/// Target-domain base brightness, adjusted so the realized corpus-level mean
/// brightness gap between domains is at least the configured
/// `|source.brightness_bias - target.brightness_bias|`. The foreground is
/// identical in both domains and so cancels out of the gap; the adjustment
/// rescales the background delta by the visible-background fraction, with
/// 3% headroom for subpixel variation of shape areas.
fn compensated_target_base(spec: &SynthSpec) -> f64 {
    let c = spec.num_classes as f64;
    let goal = 1.03 * spec.configured_brightness_gap();
    let mut weighted_src = 0.0;
    let mut visible = 0.0;
    for class in 0..spec.num_classes {
        let f = reference_fraction(spec, class);
        let src = spec.source_style.class_brightness(class, spec.num_classes);
        let tgt_off = spec.target_style.class_brightness_spread * centered(class, spec.num_classes);
        weighted_src += (src - tgt_off) * (1.0 - f) / c;
        visible += (1.0 - f) / c;
    }
    (weighted_src - goal) / visible
}

/// Render the full corpus to `out_dir` (PNG frames plus `manifest.tsv`) and
/// return the manifest. Byte-for-byte deterministic in `spec`.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let class_names = spec.class_names();

    let mut entries = Vec::new();
    for domain in [Domain::Source, Domain::Target] {
        for (class, class_name) in class_names.iter().enumerate() {
            for clip_idx in 0..spec.clips_per_class {
                let clip_id = format!("{domain}_{class_name}_{clip_idx:03}");
                let rel_dir = Path::new(match domain {
                    Domain::Source => "source",
                    Domain::Target => "target",
                })
                .join(&clip_id);
                let abs_dir = out_dir.join(&rel_dir);
                std::fs::create_dir_all(&abs_dir).map_err(|e| Error::io(&abs_dir, e))?;

                let rendered = render_clip(spec, class, clip_idx, domain)?;
                let mut frame_paths = Vec::with_capacity(rendered.frames.len());
                for (t, frame) in rendered.frames.iter().enumerate() {
                    let rel = rel_dir.join(format!("f{t}.png"));
                    save_png(frame, &out_dir.join(&rel))?;
                    frame_paths.push(rel);
                }
                entries.push(ManifestEntry {
                    clip_id,
                    frames: frame_paths,
                    label: class,
                    domain,
                });
            }
        }
    }

    let manifest = Manifest::new(class_names, entries, out_dir.to_path_buf())?;
    super::write_manifest(&manifest, &out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_manifest, ClipSet};

    fn small_spec() -> SynthSpec {
        SynthSpec {
            clips_per_class: 2,
            frames_per_clip: 3,
            image_size: 16,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn corpus_counts_match_spec() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            clips_per_class: 10,
            frames_per_clip: 4,
            ..SynthSpec::default()
        };
        let manifest = generate_synthetic(&spec, dir.path()).unwrap();
        let (mut src, mut tgt) = (0, 0);
        for e in manifest.entries() {
            assert_eq!(e.frames.len(), 4);
            match e.domain {
                Domain::Source => src += 1,
                Domain::Target => tgt += 1,
            }
        }
        assert_eq!(src, 30);
        assert_eq!(tgt, 30);
        let png_count = walk_png_count(dir.path().join("source"));
        assert_eq!(png_count, 120);
    }

    fn walk_png_count(dir: std::path::PathBuf) -> usize {
        let mut count = 0;
        let mut stack = vec![dir];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(d).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.extension().map(|e| e == "png").unwrap_or(false) {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn generated_manifest_loads_and_clips_load() {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic(&small_spec(), dir.path()).unwrap();
        let manifest = load_manifest(&dir.path().join("manifest.tsv")).unwrap();
        let set = ClipSet::load(&manifest).unwrap();
        assert_eq!(set.len(), 12);
    }

    #[test]
    fn same_seed_same_bytes() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let spec = small_spec();
        generate_synthetic(&spec, d1.path()).unwrap();
        generate_synthetic(&spec, d2.path()).unwrap();
        let a = std::fs::read(d1.path().join("source/source_disc_000/f0.png")).unwrap();
        let b = std::fs::read(d2.path().join("source/source_disc_000/f0.png")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn masks_identical_across_domains() {
        let spec = small_spec();
        for class in 0..spec.num_classes {
            for clip in 0..spec.clips_per_class {
                let src = render_clip(&spec, class, clip, Domain::Source).unwrap();
                let tgt = render_clip(&spec, class, clip, Domain::Target).unwrap();
                assert_eq!(src.masks, tgt.masks);
                // Foreground pixels are byte-identical across domains.
                for (fs, ft, mask) in itertools_zip3(&src.frames, &tgt.frames, &src.masks) {
                    let n = spec.image_size * spec.image_size;
                    for c in 0..3 {
                        for (i, &fg) in mask.iter().enumerate() {
                            if fg {
                                assert_eq!(fs.data()[c * n + i], ft.data()[c * n + i]);
                            }
                        }
                    }
                }
            }
        }
    }

    fn itertools_zip3<'a>(
        a: &'a [ImageTensor],
        b: &'a [ImageTensor],
        m: &'a [Vec<bool>],
    ) -> impl Iterator<Item = (&'a ImageTensor, &'a ImageTensor, &'a Vec<bool>)> {
        a.iter().zip(b).zip(m).map(|((x, y), z)| (x, y, z))
    }

    #[test]
    fn brightness_gap_meets_configuration() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            clips_per_class: 4,
            ..SynthSpec::default()
        };
        let manifest = generate_synthetic(&spec, dir.path()).unwrap();
        let set = ClipSet::load(&manifest).unwrap();
        let mean_of = |domain: Domain| {
            let mut sum = 0.0;
            let mut count = 0;
            for clip in set.clips().iter().filter(|c| c.domain == domain) {
                for frame in &clip.frames {
                    sum += frame.mean();
                    count += 1;
                }
            }
            sum / count as f64
        };
        let gap = mean_of(Domain::Source) - mean_of(Domain::Target);
        let configured = spec.configured_brightness_gap();
        assert!(
            gap >= configured,
            "corpus gap {gap} below configured bias {configured}"
        );
        assert!(
            gap <= configured + 0.02,
            "gap {gap} overshoots configuration"
        );
    }

    #[test]
    fn class_bands_separate_shapes() {
        let spec = SynthSpec::default();
        for class in 0..3 {
            let rendered = render_clip(&spec, class, 0, Domain::Source).unwrap();
            let size = spec.image_size;
            let band = size as f64 / 3.0;
            for mask in &rendered.masks {
                let ys: Vec<usize> = (0..size * size)
                    .filter(|&i| mask[i])
                    .map(|i| i / size)
                    .collect();
                assert!(!ys.is_empty());
                let mean_y = ys.iter().sum::<usize>() as f64 / ys.len() as f64;
                assert!(
                    mean_y >= class as f64 * band - 2.0
                        && mean_y <= (class as f64 + 1.0) * band + 2.0,
                    "class {class} centroid {mean_y} outside its band"
                );
            }
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let spec = SynthSpec {
            image_size: 4,
            ..SynthSpec::default()
        };
        assert!(spec.validate().is_err());
        let spec = SynthSpec {
            num_classes: 0,
            ..SynthSpec::default()
        };
        assert!(spec.validate().is_err());
        let mut spec = SynthSpec::default();
        spec.source_style.brightness_bias = 1.5;
        assert!(spec.validate().is_err());
        assert!(render_clip(&SynthSpec::default(), 9, 0, Domain::Source).is_err());
    }
}
