//! Logistic regression on 16x16 grayscale thumbnails.
//!
//! Deliberately weak; it exists so the whole pipeline can run and be tested
//! without any deep-learning runtime.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::AdapterError;
use crate::image::{load_image, resize_bilinear, ImageBuffer};
use crate::manifest::{Label, Manifest, Split};
use crate::stream::derive_stream;

pub const FEATURE_SIDE: usize = 16;
pub const FEATURE_COUNT: usize = FEATURE_SIDE * FEATURE_SIDE;

// Image index reserved for the shuffling stream; never used by the sweep.
const SHUFFLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { epochs: 60, learning_rate: 0.5, batch_size: 16, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub samples: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    /// 256 pixel weights followed by the bias.
    weights: Vec<f64>,
    meta: Option<TrainingMeta>,
}

impl ReferenceModel {
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, AdapterError> {
        if weights.len() != FEATURE_COUNT + 1 {
            return Err(AdapterError::Model(format!("expected {} weights, got {}", FEATURE_COUNT + 1, weights.len())));
        }
        Ok(Self { weights, meta: None })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.weights[FEATURE_COUNT]
    }

    pub fn meta(&self) -> Option<&TrainingMeta> {
        self.meta.as_ref()
    }

    pub fn save(&self, path: &Path) -> Result<(), AdapterError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| AdapterError::Model(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| AdapterError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, AdapterError> {
        let text = std::fs::read_to_string(path).map_err(|e| AdapterError::io(path, e))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| AdapterError::Model(e.to_string()))?;
        if model.weights.len() != FEATURE_COUNT + 1 {
            return Err(AdapterError::Model(format!("expected {} weights, got {}", FEATURE_COUNT + 1, model.weights.len())));
        }
        Ok(model)
    }

    fn logit(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias()
    }
}

/// Offset subtracted from every thumbnail intensity so features are centered.
pub const FEATURE_OFFSET: f64 = 0.5;

/// Channel-averaged, bilinearly downsampled 16x16 thumbnail, minus [`FEATURE_OFFSET`].
pub fn features(img: &ImageBuffer) -> Vec<f64> {
    let mut x = resize_bilinear(&img.to_grayscale(), FEATURE_SIDE, FEATURE_SIDE)
        .expect("feature size is non-zero")
        .into_data();
    x.iter_mut().for_each(|v| *v -= FEATURE_OFFSET);
    x
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn reference_predict(model: &ReferenceModel, img: &ImageBuffer) -> f64 {
    sigmoid(model.logit(&features(img)))
}

fn mean_loss(model: &ReferenceModel, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let eps = 1e-12;
    xs.iter()
        .zip(ys)
        .map(|(x, &y)| {
            let p = sigmoid(model.logit(x)).clamp(eps, 1.0 - eps);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / xs.len() as f64
}

/// Mini-batch gradient descent on mean binary cross-entropy from zero weights.
/// Sample order per epoch comes from `derive_stream(seed, u64::MAX, epoch)`.
pub fn reference_train_images(samples: &[(ImageBuffer, Label)], params: &TrainParams) -> Result<ReferenceModel, AdapterError> {
    if params.epochs == 0 || params.batch_size == 0 || params.learning_rate.is_nan() || params.learning_rate <= 0.0 {
        return Err(AdapterError::InvalidParams(format!("{params:?}")));
    }
    let first = samples.first().ok_or(AdapterError::EmptyTrainingSet)?.1;
    if samples.iter().all(|(_, l)| *l == first) {
        return Err(AdapterError::SingleClassTrainingSet(first));
    }
    let xs: Vec<Vec<f64>> = samples.iter().map(|(img, _)| features(img)).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, l)| if l.is_positive() { 1.0 } else { 0.0 }).collect();

    let mut model = ReferenceModel { weights: vec![0.0; FEATURE_COUNT + 1], meta: None };
    let initial_loss = mean_loss(&model, &xs, &ys);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut grad = vec![0.0; FEATURE_COUNT + 1];
    for epoch in 0..params.epochs {
        order.shuffle(&mut derive_stream(params.seed, SHUFFLE_STREAM, epoch as u64));
        for batch in order.chunks(params.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let err = sigmoid(model.logit(&xs[i])) - ys[i];
                for (g, x) in grad.iter_mut().zip(&xs[i]) {
                    *g += err * x;
                }
                grad[FEATURE_COUNT] += err;
            }
            let step = params.learning_rate / batch.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= step * g;
            }
        }
    }
    let final_loss = mean_loss(&model, &xs, &ys);
    model.meta = Some(TrainingMeta {
        epochs: params.epochs,
        learning_rate: params.learning_rate,
        batch_size: params.batch_size,
        seed: params.seed,
        samples: xs.len(),
        initial_loss,
        final_loss,
    });
    Ok(model)
}

/// Trains on the manifest's train split. Images are resized to
/// `image_size x image_size` first when given, matching the sweep's preprocessing.
pub fn reference_train(manifest: &Manifest, params: &TrainParams, image_size: Option<usize>) -> Result<ReferenceModel, AdapterError> {
    let samples = manifest
        .split(Split::Train)
        .map(|e| {
            let img = load_image(Path::new(&e.path))?;
            let img = match image_size {
                Some(s) => resize_bilinear(&img, s, s)?,
                None => img,
            };
            Ok((img, e.label))
        })
        .collect::<Result<Vec<_>, AdapterError>>()?;
    reference_train_images(&samples, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{blob_image, BlobStyle};

    fn strong() -> BlobStyle {
        BlobStyle { blob_amplitude: 0.05, ..BlobStyle::default() }
    }

    fn blob_set(n: usize, seed: u64) -> Vec<(ImageBuffer, Label)> {
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Fractured } else { Label::NotFractured };
                (blob_image(48, label, &strong(), &mut derive_stream(seed, i as u64, 0)), label)
            })
            .collect()
    }

    #[test]
    fn zero_model_scores_half() {
        let m = ReferenceModel::from_weights(vec![0.0; FEATURE_COUNT + 1]).unwrap();
        let img = ImageBuffer::filled(30, 20, 3, 0.8).unwrap();
        assert_eq!(reference_predict(&m, &img), 0.5);
    }

    #[test]
    fn positive_bias_saturates() {
        let mut w = vec![0.0; FEATURE_COUNT + 1];
        w[FEATURE_COUNT] = 10.0;
        let m = ReferenceModel::from_weights(w).unwrap();
        assert!(reference_predict(&m, &ImageBuffer::filled(8, 8, 1, 0.1).unwrap()) > 0.999);
    }

    #[test]
    fn weight_length_is_checked() {
        assert!(ReferenceModel::from_weights(vec![0.0; 256]).is_err());
    }

    #[test]
    fn separable_blobs_are_learned() {
        let train = blob_set(200, 1);
        let model = reference_train_images(&train, &TrainParams::default()).unwrap();
        let meta = model.meta().unwrap();
        assert!(meta.final_loss < meta.initial_loss);
        let correct = train
            .iter()
            .filter(|(img, l)| (reference_predict(&model, img) >= 0.5) == l.is_positive())
            .count();
        assert!(correct as f64 / train.len() as f64 >= 0.95, "train accuracy {correct}/200");

        // held-out blob image falls on the positive side of the separator
        let held_out = blob_image(48, Label::Fractured, &strong(), &mut derive_stream(99, 0, 0));
        assert!(reference_predict(&model, &held_out) > 0.5);
    }

    #[test]
    fn training_is_deterministic() {
        let train = blob_set(40, 2);
        let params = TrainParams { epochs: 5, ..TrainParams::default() };
        let a = reference_train_images(&train, &params).unwrap();
        let b = reference_train_images(&train, &params).unwrap();
        assert_eq!(a.weights(), b.weights());
        let c = reference_train_images(&train, &TrainParams { seed: 1, ..params }).unwrap();
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn single_class_rejected() {
        let train: Vec<_> = blob_set(10, 3).into_iter().filter(|(_, l)| *l == Label::NotFractured).collect();
        assert!(matches!(
            reference_train_images(&train, &TrainParams::default()),
            Err(AdapterError::SingleClassTrainingSet(Label::NotFractured))
        ));
        assert!(matches!(reference_train_images(&[], &TrainParams::default()), Err(AdapterError::EmptyTrainingSet)));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = reference_train_images(&blob_set(20, 4), &TrainParams { epochs: 2, ..Default::default() }).unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        assert_eq!(ReferenceModel::load(&path).unwrap(), model);
    }
}
