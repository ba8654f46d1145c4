//! Action recognition in still images from body-part and object detections.
//!
//! Detections are reduced to a 90-dim head-relative geometric descriptor,
//! then classified with a deep belief net (a Gaussian RBM and a binary RBM
//! pre-trained greedily, then fine-tuned with a softmax head).
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which is what the CLI and file formats use.

pub mod augment;
pub mod catalog;
pub mod cli;
pub mod dbn;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod pipeline;
pub mod rbm;
pub mod scalar;
pub mod seed;
pub mod synth;

pub use catalog::{ActionClass, EntityKind};
pub use geometry::{encode_annotation, CentralLine, DetectionRecord, FeatureVector, ImageAnnotation, FEATURE_DIM};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type GaussianRbm = rbm::GaussianRbm<f64>;
pub type BinaryRbm = rbm::BinaryRbm<f64>;
pub type Dbn = dbn::DbnModel<f64>;
pub type Dbn32 = dbn::DbnModel<f32>;
pub type Baseline = synth::SoftmaxRegression<f64>;
