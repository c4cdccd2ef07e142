//! 2D Fourier analysis of images and frequency-domain style augmentation.
//!
//! Amplitude carries style (texture, brightness statistics); phase carries
//! structure. The augmentation mixes a source image's amplitude spectrum with
//! a style image's, keeps the source phase, and reconstructs. The mixing
//! ratio is drawn uniformly from `[0, alpha]` per call.

use num_complex::Complex;
use rand::Rng;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Per-channel amplitude/phase decomposition of an image's 2D DFT.
/// The DC term sits at index (0, 0); no quadrant shift is applied.
#[derive(Debug, Clone)]
pub struct Spectrum {
    height: usize,
    width: usize,
    channels: usize,
    /// Modulus per bin, plane-major like `ImageTensor`.
    amplitude: Vec<f64>,
    /// Argument per bin in `(-pi, pi]`.
    phase: Vec<f64>,
}

impl Spectrum {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        amplitude: Vec<f64>,
        phase: Vec<f64>,
    ) -> Result<Self> {
        let n = height * width * channels;
        if amplitude.len() != n || phase.len() != n {
            return Err(Error::validation(format!(
                "amplitude/phase lengths ({}, {}) do not match {height}x{width}x{channels}",
                amplitude.len(),
                phase.len()
            )));
        }
        if amplitude.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::validation(
                "amplitude must be finite and non-negative".to_string(),
            ));
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("phase must be finite".to_string()));
        }
        Ok(Self {
            height,
            width,
            channels,
            amplitude,
            phase,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn amplitude(&self) -> &[f64] {
        &self.amplitude
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn amplitude_mut(&mut self) -> &mut [f64] {
        &mut self.amplitude
    }

    /// Replace the amplitude array, keeping phase. Shape-checked.
    pub fn with_amplitude(&self, amplitude: Vec<f64>) -> Result<Self> {
        Spectrum::new(
            self.height,
            self.width,
            self.channels,
            amplitude,
            self.phase.clone(),
        )
    }
}

/// Amplitude mixing ratio `beta` together with its sampling bound `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixRatio {
    beta: f64,
    alpha: f64,
}

impl MixRatio {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !beta.is_finite() {
            return Err(Error::validation(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        if !(0.0..=alpha.max(0.0)).contains(&beta) {
            return Err(Error::validation(format!(
                "beta must lie in [0, alpha], got beta={beta}, alpha={alpha}"
            )));
        }
        Ok(Self { beta, alpha })
    }

    /// Sample `beta ~ U(0, alpha)`.
    pub fn sample(alpha: f64, rng: &mut impl Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::validation(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        let beta = if alpha == 0.0 {
            0.0
        } else {
            rng.gen_range(0.0..alpha)
        };
        Ok(Self { beta, alpha })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// In-place 2D FFT over one complex plane (rows then columns).
fn fft2_plane(buf: &mut [Complex<f64>], height: usize, width: usize, dir: FftDirection) {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(width, dir);
    let mut scratch = vec![Complex::default(); row_fft.get_inplace_scratch_len()];
    for row in buf.chunks_exact_mut(width) {
        row_fft.process_with_scratch(row, &mut scratch);
    }

    let col_fft = planner.plan_fft(height, dir);
    scratch.resize(col_fft.get_inplace_scratch_len(), Complex::default());
    let mut col = vec![Complex::default(); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = buf[y * width + x];
        }
        col_fft.process_with_scratch(&mut col, &mut scratch);
        for y in 0..height {
            buf[y * width + x] = col[y];
        }
    }
}

/// Per-channel 2D DFT of an image, split into amplitude and phase.
/// Unnormalized forward transform: a constant image `c` has DC amplitude
/// `c * H * W` and zero elsewhere.
pub fn fft2(image: &ImageTensor) -> Result<Spectrum> {
    let (h, w, ch) = image.shape();
    let n = h * w;
    let mut amplitude = vec![0.0; n * ch];
    let mut phase = vec![0.0; n * ch];
    let mut buf = vec![Complex::default(); n];
    for c in 0..ch {
        for (dst, &src) in buf.iter_mut().zip(image.plane(c)) {
            *dst = Complex::new(src, 0.0);
        }
        fft2_plane(&mut buf, h, w, FftDirection::Forward);
        for (i, v) in buf.iter().enumerate() {
            amplitude[c * n + i] = v.norm();
            phase[c * n + i] = v.arg();
        }
    }
    Spectrum::new(h, w, ch, amplitude, phase)
}

/// Inverse transform without the final `[0, 1]` clamp. The imaginary residue
/// is discarded; for spectra of real images it stays below 1e-6.
pub fn ifft2_raw(spectrum: &Spectrum) -> Result<Vec<f64>> {
    let (h, w, ch) = (spectrum.height, spectrum.width, spectrum.channels);
    let n = h * w;
    let scale = 1.0 / n as f64;
    let mut out = vec![0.0; n * ch];
    let mut buf = vec![Complex::default(); n];
    for c in 0..ch {
        for (i, slot) in buf.iter_mut().enumerate() {
            let (a, p) = (spectrum.amplitude[c * n + i], spectrum.phase[c * n + i]);
            *slot = Complex::from_polar(a, p);
        }
        fft2_plane(&mut buf, h, w, FftDirection::Inverse);
        for (i, v) in buf.iter().enumerate() {
            out[c * n + i] = v.re * scale;
        }
    }
    Ok(out)
}

/// Inverse 2D transform back to an image; output is clamped to `[0, 1]`.
pub fn ifft2(spectrum: &Spectrum) -> Result<ImageTensor> {
    let mut out = ifft2_raw(spectrum)?;
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    ImageTensor::new(spectrum.height, spectrum.width, spectrum.channels, out)
}

/// Elementwise convex mix `(1 - beta) * a_src + beta * a_style`.
pub fn mix_amplitude(a_src: &[f64], a_style: &[f64], ratio: MixRatio) -> Result<Vec<f64>> {
    if a_src.len() != a_style.len() {
        return Err(Error::validation(format!(
            "amplitude shape mismatch: {} vs {}",
            a_src.len(),
            a_style.len()
        )));
    }
    let beta = ratio.beta();
    Ok(a_src
        .iter()
        .zip(a_style)
        .map(|(&s, &t)| (1.0 - beta) * s + beta * t)
        .collect())
}

/// Amplitude-mix `source` toward `style` with `beta ~ U(0, alpha)`, keeping
/// the source phase. Returns the augmented image and the sampled `beta`.
pub fn augment(
    source: &ImageTensor,
    style: &ImageTensor,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<(ImageTensor, f64)> {
    let ratio = MixRatio::sample(alpha, rng)?;
    let out = augment_with_ratio(source, style, ratio)?;
    Ok((out, ratio.beta()))
}

/// Deterministic variant of [`augment`] with a caller-supplied ratio.
pub fn augment_with_ratio(
    source: &ImageTensor,
    style: &ImageTensor,
    ratio: MixRatio,
) -> Result<ImageTensor> {
    if source.shape() != style.shape() {
        return Err(Error::validation(format!(
            "source shape {:?} does not match style shape {:?}",
            source.shape(),
            style.shape()
        )));
    }
    let src_spec = fft2(source)?;
    let style_spec = fft2(style)?;
    let mixed = mix_amplitude(src_spec.amplitude(), style_spec.amplitude(), ratio)?;
    ifft2(&src_spec.with_amplitude(mixed)?)
}

/// Augment a clip frame-by-frame against aligned style frames. One `beta`
/// is drawn per clip so every frame shares the same mixing ratio.
pub fn augment_clip(
    frames: &[ImageTensor],
    style_frames: &[ImageTensor],
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<Vec<ImageTensor>> {
    if frames.len() != style_frames.len() {
        return Err(Error::validation(format!(
            "clip length {} does not match style clip length {}",
            frames.len(),
            style_frames.len()
        )));
    }
    let ratio = MixRatio::sample(alpha, rng)?;
    frames
        .iter()
        .zip(style_frames)
        .map(|(f, s)| augment_with_ratio(f, s, ratio))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    /// Naive O(N^4) DFT of one plane; the independent oracle for fft2.
    fn naive_dft_plane(plane: &[f64], h: usize, w: usize) -> Vec<Complex<f64>> {
        let mut out = vec![Complex::default(); h * w];
        for ky in 0..h {
            for kx in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let angle = -2.0
                            * std::f64::consts::PI
                            * (ky as f64 * y as f64 / h as f64 + kx as f64 * x as f64 / w as f64);
                        acc += Complex::from_polar(plane[y * w + x], angle);
                    }
                }
                out[ky * w + kx] = acc;
            }
        }
        out
    }

    fn random_image(h: usize, w: usize, ch: usize, seed: u64) -> ImageTensor {
        // Mid-range values keep the inverse-transform clamp inactive so the
        // phase-preservation checks see the unclipped reconstruction.
        let mut rng = substream(seed, &[99]);
        let data: Vec<f64> = (0..h * w * ch).map(|_| rng.gen_range(0.25..0.75)).collect();
        ImageTensor::new(h, w, ch, data).unwrap()
    }

    #[test]
    fn constant_image_has_dc_only() {
        let c = 0.3;
        let img = ImageTensor::filled(2, 2, 1, c).unwrap();
        let spec = fft2(&img).unwrap();
        assert!((spec.amplitude()[0] - 4.0 * c).abs() < 1e-12);
        for &a in &spec.amplitude()[1..] {
            assert!(a < 1e-12);
        }
    }

    #[test]
    fn dc_only_spectrum_reconstructs_constant() {
        let c = 0.3;
        let mut amp = vec![0.0; 4];
        amp[0] = 4.0 * c;
        let spec = Spectrum::new(2, 2, 1, amp, vec![0.0; 4]).unwrap();
        let img = ifft2(&spec).unwrap();
        for &v in img.data() {
            assert!((v - c).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_within_1e9() {
        for &(h, w) in &[(4, 4), (5, 7), (8, 8), (3, 2)] {
            let img = random_image(h, w, 3, h as u64 * 31 + w as u64);
            let raw = ifft2_raw(&fft2(&img).unwrap()).unwrap();
            let max_err = raw
                .iter()
                .zip(img.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_err < 1e-9, "round trip error {max_err} at {h}x{w}");
        }
    }

    #[test]
    fn matches_naive_dft_and_parseval() {
        let img = random_image(4, 4, 1, 7);
        let spec = fft2(&img).unwrap();
        let oracle = naive_dft_plane(img.plane(0), 4, 4);
        for (i, v) in oracle.iter().enumerate() {
            assert!((spec.amplitude()[i] - v.norm()).abs() < 1e-9);
        }
        // Parseval: sum |x|^2 = (1/(H*W)) sum A^2, amplitudes from the oracle.
        let pixel_energy: f64 = img.plane(0).iter().map(|v| v * v).sum();
        let spectral_energy: f64 = oracle.iter().map(|v| v.norm_sqr()).sum::<f64>() / 16.0;
        assert!((pixel_energy - spectral_energy).abs() / pixel_energy < 1e-6);
    }

    #[test]
    fn real_image_spectrum_has_tiny_imaginary_residue() {
        let img = random_image(6, 6, 1, 11);
        let spec = fft2(&img).unwrap();
        let n = 36;
        let scale = 1.0 / n as f64;
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|i| Complex::from_polar(spec.amplitude()[i], spec.phase()[i]))
            .collect();
        fft2_plane(&mut buf, 6, 6, FftDirection::Inverse);
        let max_im = buf.iter().map(|v| (v.im * scale).abs()).fold(0.0, f64::max);
        assert!(max_im < 1e-9);
    }

    #[test]
    fn mix_amplitude_endpoints_and_midpoint() {
        let a = vec![2.0, 1.0];
        let b = vec![4.0, 5.0];
        let at = |beta| mix_amplitude(&a, &b, MixRatio::new(beta, 1.0).unwrap()).unwrap();
        assert_eq!(at(0.0), a);
        assert_eq!(at(1.0), b);
        assert_eq!(at(0.5), vec![3.0, 3.0]);
        assert!(mix_amplitude(&a, &b[..1], MixRatio::new(0.5, 1.0).unwrap()).is_err());
    }

    #[test]
    fn identity_when_style_equals_source() {
        let img = random_image(8, 8, 3, 13);
        let mut rng = substream(13, &[1]);
        let (out, _) = augment(&img, &img, 0.9, &mut rng).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn phase_preservation_sweep() {
        // Fixed-seed sweep over image pairs and mixing ratios; mid-range
        // pixels keep the clamp inactive so preservation is exact up to
        // floating-point noise.
        let mut rng = substream(1234, &[8]);
        for case in 0..50u64 {
            let src = random_image(8, 8, 3, 5000 + case);
            let style = random_image(8, 8, 3, 6000 + case);
            let beta: f64 = rng.gen_range(0.0..=0.5);
            let out = augment_with_ratio(&src, &style, MixRatio::new(beta, 0.5).unwrap()).unwrap();
            let src_spec = fft2(&src).unwrap();
            let out_spec = fft2(&out).unwrap();
            for i in 0..src_spec.phase().len() {
                if out_spec.amplitude()[i] > 1e-8 {
                    let mut d = (out_spec.phase()[i] - src_spec.phase()[i]).abs();
                    d = d.min(2.0 * std::f64::consts::PI - d);
                    assert!(d < 1e-5, "case {case}: phase drift {d} at bin {i}");
                }
            }
        }
    }

    #[test]
    fn identity_when_alpha_zero() {
        let src = random_image(8, 8, 3, 17);
        let style = random_image(8, 8, 3, 19);
        let mut rng = substream(17, &[2]);
        let (out, beta) = augment(&src, &style, 0.0, &mut rng).unwrap();
        assert_eq!(beta, 0.0);
        assert!(out.max_abs_diff(&src) < 1e-6);
    }

    #[test]
    fn phase_preserved_where_amplitude_nonzero() {
        let src = random_image(8, 8, 3, 23);
        let style = random_image(8, 8, 3, 29);
        let out = augment_with_ratio(&src, &style, MixRatio::new(0.5, 0.5).unwrap()).unwrap();
        let src_spec = fft2(&src).unwrap();
        let out_spec = fft2(&out).unwrap();
        for i in 0..src_spec.phase().len() {
            if out_spec.amplitude()[i] > 1e-8 {
                let mut d = (out_spec.phase()[i] - src_spec.phase()[i]).abs();
                d = d.min((2.0 * std::f64::consts::PI - d).abs());
                assert!(d < 1e-5, "phase drift {d} at bin {i}");
            }
        }
    }

    #[test]
    fn augment_rejects_bad_inputs() {
        let a = random_image(4, 4, 3, 1);
        let b = random_image(4, 8, 3, 2);
        let mut rng = substream(0, &[]);
        assert!(augment(&a, &b, 0.5, &mut rng).is_err());
        assert!(augment(&a, &a, 1.5, &mut rng).is_err());
    }

    #[test]
    fn clip_single_frame_matches_image_augment() {
        let src = random_image(8, 8, 3, 31);
        let style = random_image(8, 8, 3, 37);
        let clip = augment_clip(
            std::slice::from_ref(&src),
            std::slice::from_ref(&style),
            0.5,
            &mut substream(5, &[7]),
        )
        .unwrap();
        let (single, _) = augment(&src, &style, 0.5, &mut substream(5, &[7])).unwrap();
        assert!(clip[0].max_abs_diff(&single) < 1e-12);
    }

    #[test]
    fn clip_alpha_zero_is_identity_and_lengths_checked() {
        let frames: Vec<_> = (0..3).map(|i| random_image(8, 8, 3, 41 + i)).collect();
        let styles: Vec<_> = (0..3).map(|i| random_image(8, 8, 3, 51 + i)).collect();
        let out = augment_clip(&frames, &styles, 0.0, &mut substream(1, &[1])).unwrap();
        for (o, f) in out.iter().zip(&frames) {
            assert!(o.max_abs_diff(f) < 1e-6);
        }
        assert!(augment_clip(&frames, &styles[..2], 0.5, &mut substream(1, &[1])).is_err());
    }

    #[test]
    fn clip_augment_is_deterministic_per_seed() {
        let frames: Vec<_> = (0..3).map(|i| random_image(8, 8, 3, 61 + i)).collect();
        let styles: Vec<_> = (0..3).map(|i| random_image(8, 8, 3, 71 + i)).collect();
        let a = augment_clip(&frames, &styles, 0.5, &mut substream(9, &[3])).unwrap();
        let b = augment_clip(&frames, &styles, 0.5, &mut substream(9, &[3])).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.data(), y.data());
        }
    }

    proptest! {
        #[test]
        fn mixed_amplitude_is_convex(beta in 0.0f64..=1.0, len in 1usize..32) {
            let a: Vec<f64> = (0..len).map(|i| (i as f64 * 0.37).sin().abs() * 5.0).collect();
            let b: Vec<f64> = (0..len).map(|i| (i as f64 * 0.91).cos().abs() * 3.0).collect();
            let mixed = mix_amplitude(&a, &b, MixRatio::new(beta, 1.0).unwrap()).unwrap();
            for i in 0..len {
                let (lo, hi) = (a[i].min(b[i]), a[i].max(b[i]));
                prop_assert!(mixed[i] >= lo - 1e-12 && mixed[i] <= hi + 1e-12);
            }
        }

        #[test]
        fn round_trip_property(h in 1usize..7, w in 1usize..7, seed in 0u64..1000) {
            let img = random_image(h, w, 1, seed);
            let raw = ifft2_raw(&fft2(&img).unwrap()).unwrap();
            for (a, b) in raw.iter().zip(img.data()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
