//! Synthetic "fracture" dataset: faint centered blobs on a textured background.
//!
//! Class 1 images carry a Gaussian bump in the middle, class 0 images do not.
//! The bump is weak enough that heavy acquisition noise hides it, which makes
//! the set useful for exercising the degradation pipeline end to end.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::image::{ImageBuffer, ImageError};
use crate::manifest::{Label, Split};
use crate::stream::{derive_stream, RandomStream};

// Level index reserved for dataset generation streams.
const SYNTH_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobStyle {
    pub background: f64,
    /// Half-width of the uniform per-image brightness offset.
    pub brightness_jitter: f64,
    /// Standard deviation of per-pixel texture.
    pub texture: f64,
    pub blob_amplitude: f64,
    /// Blob standard deviation as a fraction of the image side.
    pub blob_radius: f64,
}

impl Default for BlobStyle {
    fn default() -> Self {
        Self { background: 0.4, brightness_jitter: 0.02, texture: 0.01, blob_amplitude: 0.02, blob_radius: 0.15 }
    }
}

pub fn blob_image(size: usize, label: Label, style: &BlobStyle, stream: &mut RandomStream) -> ImageBuffer {
    let offset = style.brightness_jitter * (2.0 * stream.uniform() - 1.0);
    let center = (size as f64 - 1.0) / 2.0;
    let sigma = style.blob_radius * size as f64;
    let mut data = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let mut v = style.background + offset + style.texture * stream.normal();
            if label.is_positive() {
                let d2 = (r as f64 - center).powi(2) + (c as f64 - center).powi(2);
                v += style.blob_amplitude * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            data.push(v.clamp(0.0, 1.0));
        }
    }
    ImageBuffer::new(size, size, 1, data).expect("square grayscale buffer")
}

/// Writes `root/<split>/{fractured,not_fractured}/img_NNNNN.png`, alternating
/// labels within each split. Quantized to 8 bits like any real PNG input.
pub fn write_blob_dataset(
    root: &Path,
    counts: &[(Split, usize)],
    size: usize,
    seed: u64,
    style: &BlobStyle,
) -> Result<usize, ImageError> {
    let mut index = 0u64;
    for &(split, n) in counts {
        for i in 0..n {
            let label = if i % 2 == 0 { Label::Fractured } else { Label::NotFractured };
            let class = if label.is_positive() { "fractured" } else { "not_fractured" };
            let img = blob_image(size, label, style, &mut derive_stream(seed, index, SYNTH_STREAM));
            img.save_png(&root.join(split.as_str()).join(class).join(format!("img_{index:05}.png")))?;
            index += 1;
        }
    }
    Ok(index as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positives_are_brighter_in_the_middle() {
        let style = BlobStyle::default();
        let pos = blob_image(32, Label::Fractured, &style, &mut derive_stream(0, 0, 0));
        let neg = blob_image(32, Label::NotFractured, &style, &mut derive_stream(0, 0, 0));
        let mid = |img: &ImageBuffer| img.get(16, 16, 0);
        assert!(mid(&pos) - mid(&neg) > 0.8 * style.blob_amplitude);
        assert!((pos.get(0, 0, 0) - neg.get(0, 0, 0)).abs() < 0.01);
    }

    #[test]
    fn dataset_layout() {
        let dir = tempfile::tempdir().unwrap();
        let n = write_blob_dataset(dir.path(), &[(Split::Train, 4), (Split::Valid, 2), (Split::Test, 2)], 16, 1, &BlobStyle::default())
            .unwrap();
        assert_eq!(n, 8);
        let m = crate::manifest::build_manifest(dir.path()).unwrap();
        assert_eq!(m.len(), 8);
        assert_eq!(m.split(Split::Test).filter(|e| e.label.is_positive()).count(), 1);
    }
}
