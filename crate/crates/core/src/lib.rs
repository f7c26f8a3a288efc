//! Noise robustness benchmarking for binary X-ray classifiers.
//!
//! The crate simulates acquisition noise (electronic/Gaussian, quantum/Poisson
//! and mixed Poisson-Gaussian) at increasing intensities, scores the corrupted
//! images with a pluggable classifier, and turns the per-level metrics into
//! degradation verdicts.
//!
//! Pipeline: [`manifest`] inventories a `split/class/image` dataset,
//! [`noise`] corrupts images drawn through [`image`] using per-cell
//! [`stream`]s, [`adapters`] produce [`adapters::PredictionSet`]s,
//! [`metrics`] summarises them and [`analysis`] finds critical failure points.
//! [`sweep`] drives the whole thing and [`report`] writes CSV/SVG output.

pub mod adapters;
pub mod analysis;
pub mod image;
pub mod manifest;
pub mod metrics;
pub mod noise;
pub mod report;
pub mod stream;
pub mod sweep;
pub mod synthetic;

pub use adapters::{PredictionRecord, PredictionSet, ReferenceModel, TrainParams};
pub use analysis::{DegradationCurve, Pattern, RobustnessVerdict};
pub use image::ImageBuffer;
pub use manifest::{Label, Manifest, Split};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use noise::{NoiseFamily, NoiseSpec};
pub use stream::{derive_stream, RandomStream};
pub use sweep::{run_sweep, SweepConfig, SweepResult};
