//! Two-stage commentary modelling over paired gameplay frames and utterances:
//! cluster the paired data with k-medoids, then learn frame-to-comment
//! predictors per cluster, and evaluate both stages on held-out data.

pub mod cluster;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod metric;
pub mod predict;
pub mod rng;
pub mod synth;
pub mod transcript;
pub mod vision;
pub mod vocab;

pub use error::{Error, Result};
