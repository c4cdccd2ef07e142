//! Image tensors and PNG I/O.
//!
//! Pixels are `f64` in `[0, 1]`, stored channel-plane-major: plane `c` is a
//! contiguous `height * width` row-major block. PNG files map linearly
//! between `[0, 255]` and `[0, 1]`.

use std::path::Path;

use crate::error::{Error, Result};

/// Real-valued H x W x C image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Build from raw plane-major data. Rejects empty dimensions,
    /// non-finite values, and values outside `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::validation(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::validation(format!(
                "image data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite pixel value {v}")));
        }
        if data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::validation(
                "pixel values must lie in [0, 1]".to_string(),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `(height, width, channels)` triple, handy for shape checks.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Contiguous row-major plane for channel `c`.
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[c * self.height * self.width + y * self.width + x]
    }

    /// Mean pixel value over all planes.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Maximum absolute pixel difference against another image of the same shape.
    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> ImageTensor {
        let (h, w, ch) = self.shape();
        let n = h * w;
        let mut data = vec![0.0; n * ch];
        for c in 0..ch {
            for y in 0..h {
                for x in 0..w {
                    data[c * n + y * w + x] = self.data[c * n + y * w + (w - 1 - x)];
                }
            }
        }
        ImageTensor {
            height: h,
            width: w,
            channels: ch,
            data,
        }
    }

    /// Add a uniform brightness offset, clamped back to `[0, 1]`.
    pub fn shift_brightness(&self, delta: f64) -> ImageTensor {
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| (v + delta).clamp(0.0, 1.0)).collect(),
        }
    }

    /// Encode as interleaved 8-bit RGBA for canvas-style consumers.
    /// Single-channel images are broadcast to gray.
    pub fn to_rgba8(&self) -> Vec<u8> {
        let n = self.height * self.width;
        let mut out = Vec::with_capacity(n * 4);
        for i in 0..n {
            for c in 0..3 {
                let plane = if self.channels == 1 {
                    0
                } else {
                    c.min(self.channels - 1)
                };
                out.push(quantize(self.data[plane * n + i]));
            }
            out.push(255);
        }
        out
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write an image as 8-bit PNG (RGB for 3 channels, grayscale for 1).
pub fn save_png(image: &ImageTensor, path: &Path) -> Result<()> {
    let (h, w, _) = image.shape();
    let err = |e: image::ImageError| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    match image.channels() {
        1 => {
            let buf: Vec<u8> = image.plane(0).iter().map(|&v| quantize(v)).collect();
            image::GrayImage::from_raw(w as u32, h as u32, buf)
                .expect("buffer sized from image shape")
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(err)
        }
        3 => {
            let n = h * w;
            let mut buf = Vec::with_capacity(n * 3);
            for i in 0..n {
                for c in 0..3 {
                    buf.push(quantize(image.data[c * n + i]));
                }
            }
            image::RgbImage::from_raw(w as u32, h as u32, buf)
                .expect("buffer sized from image shape")
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(err)
        }
        c => Err(Error::validation(format!(
            "PNG output supports 1 or 3 channels, got {c}"
        ))),
    }
}

/// Load an 8-bit PNG as a 3-channel image tensor.
pub fn load_png(path: &Path) -> Result<ImageTensor> {
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let n = h * w;
    let mut data = vec![0.0; n * 3];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * n + i] = px.0[c] as f64 / 255.0;
        }
    }
    ImageTensor::new(h, w, 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_non_finite() {
        assert!(ImageTensor::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageTensor::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(ImageTensor::new(0, 1, 1, vec![]).is_err());
        assert!(ImageTensor::new(1, 1, 1, vec![0.25]).is_ok());
    }

    #[test]
    fn png_round_trip_is_exact_on_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        // Values on the 1/255 grid survive the 8-bit round trip exactly.
        let data: Vec<f64> = (0..2 * 3 * 3).map(|i| (i % 256) as f64 / 255.0).collect();
        let img = ImageTensor::new(2, 3, 3, data).unwrap();
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.shape(), (2, 3, 3));
        assert!(img.max_abs_diff(&back) < 1e-12);
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_png(Path::new("/nonexistent/nope.png")).unwrap_err();
        assert!(err.to_string().contains("nope.png"));
    }

    #[test]
    fn flip_mirrors_columns_and_is_involutive() {
        let img = ImageTensor::new(1, 3, 1, vec![0.1, 0.2, 0.3]).unwrap();
        let flipped = img.flip_horizontal();
        assert_eq!(flipped.data(), &[0.3, 0.2, 0.1]);
        assert_eq!(flipped.flip_horizontal(), img);
    }

    #[test]
    fn brightness_shift_clamps() {
        let img = ImageTensor::new(1, 2, 1, vec![0.2, 0.95]).unwrap();
        let up = img.shift_brightness(0.1);
        assert!((up.data()[0] - 0.3).abs() < 1e-12);
        assert_eq!(up.data()[1], 1.0);
        let down = img.shift_brightness(-0.5);
        assert_eq!(down.data()[0], 0.0);
    }
}
