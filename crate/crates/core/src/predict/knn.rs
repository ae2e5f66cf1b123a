//! Nearest-neighbour prediction by sprite-bag cosine distance.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::PairedExample;
use crate::error::{Error, Result};
use crate::metric::cosine_distance;
use crate::vocab::{combine_bags, SparseBag};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    /// k as requested.
    pub requested_k: usize,
    /// k after clamping to the training size.
    pub k: usize,
    sprites: Vec<SparseBag>,
    words: Vec<SparseBag>,
    comments: Vec<String>,
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

impl KnnModel {
    pub fn train(examples: &[&PairedExample], k: usize) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Empty("knn predictor needs at least one training example"));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("knn k must be at least 1".into()));
        }
        Ok(KnnModel {
            requested_k: k,
            k: k.min(examples.len()),
            sprites: examples.iter().map(|e| e.sprite_bag.clone()).collect(),
            words: examples.iter().map(|e| e.comment_bag.clone()).collect(),
            comments: examples.iter().map(|e| e.comment_text.clone()).collect(),
        })
    }

    pub fn was_clamped(&self) -> bool {
        self.k < self.requested_k
    }

    /// Indices of the `k` training examples closest to `sprite_bag`, nearest
    /// first; equal distances go to the lower training index.
    pub fn neighbors(&self, sprite_bag: &SparseBag, k: usize) -> Result<Vec<usize>> {
        let k = k.min(self.sprites.len());
        let mut scored = self
            .sprites
            .iter()
            .enumerate()
            .map(|(i, s)| Ok((cosine_distance(sprite_bag, s)?, i)))
            .collect::<Result<Vec<_>>>()?;
        if k < scored.len() {
            scored.select_nth_unstable_by(k, by_distance_then_index);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_distance_then_index);
        Ok(scored.into_iter().map(|(_, i)| i).collect())
    }

    /// Set union of the neighbours' words, each present word valued 1.
    pub fn predict(&self, sprite_bag: &SparseBag) -> Result<SparseBag> {
        let idx = self.neighbors(sprite_bag, self.k)?;
        let dim = self.words[0].dim();
        Ok(combine_bags(dim, idx.iter().map(|&i| &self.words[i]))?.binarized())
    }

    /// Raw comment text of the single nearest training example.
    pub fn retrieve_comment(&self, sprite_bag: &SparseBag) -> Result<&str> {
        let idx = self.neighbors(sprite_bag, 1)?;
        Ok(&self.comments[idx[0]])
    }
}
