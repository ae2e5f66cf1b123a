//! Cosine distance on bags and the weighted text/frame distance between examples.

use serde::{Deserialize, Serialize};

use crate::corpus::PairedExample;
use crate::error::{Error, Result};
use crate::vocab::SparseBag;

/// Weights of the utterance and frame components of [`paired_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    pub text_weight: f64,
    pub frame_weight: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig { text_weight: 0.75, frame_weight: 0.25 }
    }
}

impl DistanceConfig {
    /// Both weights nonnegative and summing to one (within 1e-9).
    pub fn new(text_weight: f64, frame_weight: f64) -> Result<Self> {
        let ok = text_weight >= 0.0 && frame_weight >= 0.0 && ((text_weight + frame_weight) - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "distance weights must be nonnegative and sum to 1, got text={text_weight} frame={frame_weight}"
            )));
        }
        Ok(DistanceConfig { text_weight, frame_weight })
    }

    pub fn from_text_weight(text_weight: f64) -> Result<Self> {
        Self::new(text_weight, 1.0 - text_weight)
    }
}

/// `1 - cos(a, b)`, clamped to `[0, 1]`.
///
/// One all-zero bag gives 1; two all-zero bags give 0.
pub fn cosine_distance(a: &SparseBag, b: &SparseBag) -> Result<f64> {
    let dot = a.dot(b)?;
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(1.0),
        _ => {}
    }
    // sqrt(x * x) == x exactly, so identical bags land on 0.
    let sim = dot / (a.dot(a)? * b.dot(b)?).sqrt();
    Ok((1.0 - sim).clamp(0.0, 1.0))
}

/// Weighted sum of comment-bag and sprite-bag cosine distances.
pub fn paired_distance(x: &PairedExample, y: &PairedExample, cfg: &DistanceConfig) -> Result<f64> {
    let text = cosine_distance(&x.comment_bag, &y.comment_bag)?;
    let frame = cosine_distance(&x.sprite_bag, &y.sprite_bag)?;
    Ok(cfg.text_weight * text + cfg.frame_weight * frame)
}

/// Cosine distance between sprite bags only.
pub fn frame_distance(x: &PairedExample, y: &PairedExample) -> Result<f64> {
    cosine_distance(&x.sprite_bag, &y.sprite_bag)
}
