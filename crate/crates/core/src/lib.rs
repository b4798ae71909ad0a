//! RL2: an image-set quality metric built on a normalizing flow over image features.
//!
//! A real-NVP style flow is fitted by maximum likelihood to feature vectors of
//! real (high quality) images. An evaluated set is then scored by the Euclidean
//! distance between its mean latent vector and the mean latent vector of the
//! real set. Per-sample negative log-likelihood under the same flow doubles as
//! an artifact score for patch filtering.
//!
//! Module map:
//!
//! - [`flow`]: affine coupling flow, exact log-likelihood, `RL2M` checkpoints.
//! - [`train`]: maximum-likelihood training with hand-written reverse mode and Adam.
//! - [`features`]: built-in feature extractor, patch cropping, `RL2F` feature files.
//! - [`metrics`]: RL2, per-sample NLL and the FID baseline.
//! - [`degrade`]: blur, salt-and-pepper, rectangular patch and forward diffusion noise.
//! - [`harness`]: monotonicity sweeps, ROC/AUC filtering and sample-size stability.
//! - [`synth`]: seeded procedural texture corpora used by tests and the CLI.

mod codec;
pub mod degrade;
pub mod error;
pub mod features;
pub mod flow;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, FormatError, Result};
pub use features::{BuiltinExtractor, FeatureSet};
pub use flow::{FlowArch, FlowModel, LatentVector};
pub use image::Image;
pub use metrics::{MetricKind, MetricValue};
pub use train::{TrainConfig, TrainReport};
