//! Floating-point image buffers, decoding and bilinear resampling.
//!
//! All intensities live in `[0, 1]`. Noise is applied in this domain, before
//! any classifier-specific normalization.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer as RawBuffer, ImageReader, Luma, Rgb};
use thiserror::Error;

/// Side length the sweep resizes every image to unless configured otherwise.
pub const CANONICAL_SIZE: usize = 180;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("target dimensions must be at least 1x1, got {height}x{width}")]
    ZeroDimension { height: usize, width: usize },
    #[error("invalid buffer: {0}")]
    InvalidBuffer(String),
    #[error("failed to write {path}: {reason}")]
    Write { path: PathBuf, reason: String },
}

/// Row-major `height x width x channels` grid of intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::InvalidBuffer(format!("channels must be 1 or 3, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(ImageError::InvalidBuffer(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self, ImageError> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds a buffer from 8-bit samples, scaling each byte `v` to `v / 255`.
    pub fn from_bytes(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self, ImageError> {
        Self::new(height, width, channels, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Same shape, new samples. Used by the noise operators.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self { height: self.height, width: self.width, channels: self.channels, data }
    }

    pub fn clip(&self) -> Self {
        self.with_data(self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    /// Averages the color channels into one. Single-channel buffers are cloned.
    pub fn to_grayscale(&self) -> Self {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() / self.channels as f64)
            .collect();
        Self { height: self.height, width: self.width, channels: 1, data }
    }

    /// Quantizes to 8-bit samples with round-half-up after clipping.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    /// Round trip through 8-bit storage; equals what decoding the saved PNG yields.
    pub fn quantized(&self) -> Self {
        let bytes = self.to_bytes();
        self.with_data(bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Writes the buffer as an 8-bit PNG (grayscale or RGB).
    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let write_err = |e: &dyn std::fmt::Display| ImageError::Write { path: path.to_path_buf(), reason: e.to_string() };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| write_err(&e))?;
        }
        let (w, h) = (self.width as u32, self.height as u32);
        let bytes = self.to_bytes();
        let result = if self.channels == 1 {
            RawBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).map(|b| b.save_with_format(path, image::ImageFormat::Png))
        } else {
            RawBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).map(|b| b.save_with_format(path, image::ImageFormat::Png))
        };
        match result {
            Some(Ok(())) => Ok(()),
            Some(Err(e)) => Err(write_err(&e)),
            None => Err(write_err(&"buffer size mismatch")),
        }
    }
}

/// Decodes an 8-bit grayscale or RGB PNG/JPEG. Alpha channels are dropped.
pub fn load_image(path: &Path) -> Result<ImageBuffer, ImageError> {
    if !path.exists() {
        return Err(ImageError::FileNotFound(path.to_path_buf()));
    }
    let unsupported = |reason: String| ImageError::UnsupportedFormat { path: path.to_path_buf(), reason };
    let reader = ImageReader::open(path)
        .map_err(|e| unsupported(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| unsupported(e.to_string()))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Jpeg) => {}
        other => return Err(unsupported(format!("expected PNG or JPEG, found {other:?}"))),
    }
    let decoded = reader.decode().map_err(|e| unsupported(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        DynamicImage::ImageLuma8(b) => ImageBuffer::from_bytes(h, w, 1, b.as_raw()),
        DynamicImage::ImageLumaA8(_) => ImageBuffer::from_bytes(h, w, 1, decoded.to_luma8().as_raw()),
        DynamicImage::ImageRgb8(b) => ImageBuffer::from_bytes(h, w, 3, b.as_raw()),
        DynamicImage::ImageRgba8(_) => ImageBuffer::from_bytes(h, w, 3, decoded.to_rgb8().as_raw()),
        other => Err(unsupported(format!("only 8-bit grayscale or RGB is supported, found {:?}", other.color()))),
    }
}

/// Bilinear resampling with half-pixel-center alignment.
///
/// Output pixel `(i, j)` samples the source at
/// `((i + 0.5) * in_h / out_h - 0.5, (j + 0.5) * in_w / out_w - 0.5)`,
/// with coordinates clamped to the source edges.
pub fn resize_bilinear(img: &ImageBuffer, out_h: usize, out_w: usize) -> Result<ImageBuffer, ImageError> {
    if out_h == 0 || out_w == 0 {
        return Err(ImageError::ZeroDimension { height: out_h, width: out_w });
    }
    if out_h == img.height && out_w == img.width {
        return Ok(img.clone());
    }
    let rows = axis_taps(img.height, out_h);
    let cols = axis_taps(img.width, out_w);
    let c = img.channels;
    let mut data = Vec::with_capacity(out_h * out_w * c);
    for &(r0, r1, fy) in &rows {
        for &(c0, c1, fx) in &cols {
            for ch in 0..c {
                let top = img.get(r0, c0, ch) * (1.0 - fx) + img.get(r0, c1, ch) * fx;
                let bottom = img.get(r1, c0, ch) * (1.0 - fx) + img.get(r1, c1, ch) * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    ImageBuffer::new(out_h, out_w, c, data)
}

/// For each output coordinate: (lower source index, upper source index, weight of upper).
fn axis_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    let last = in_len - 1;
    (0..out_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(last);
            (lo, hi, src - lo as f64)
        })
        .collect()
}
