use serde::{Deserialize, Serialize};

use crate::corpus::PairedExample;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::vocab::SparseBag;

use rand::Rng as _;

/// Returns the comment bag of a uniformly drawn training example, ignoring the input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomModel {
    bags: Vec<SparseBag>,
    seed: u64,
    #[serde(skip)]
    state: Option<Rng>,
}

impl RandomModel {
    pub fn train(examples: &[&PairedExample], seed: u64) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Empty("random predictor needs at least one training example"));
        }
        Ok(RandomModel { bags: examples.iter().map(|e| e.comment_bag.clone()).collect(), seed, state: None })
    }

    /// Index of the next stored bag to emit.
    pub fn draw(&mut self) -> usize {
        let seed = self.seed;
        let n = self.bags.len();
        self.state.get_or_insert_with(|| rng::seeded(seed)).gen_range(0..n)
    }

    pub fn predict(&mut self) -> SparseBag {
        let i = self.draw();
        self.bags[i].clone()
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(word: usize) -> PairedExample {
        PairedExample {
            id: format!("e{word}"),
            frame_timestamps: vec![0],
            sprite_bag: SparseBag::empty(1),
            comment_text: String::new(),
            comment_bag: SparseBag::from_pairs(4, [(word, 1.0)]).unwrap(),
            topic_label: None,
        }
    }

    #[test]
    fn single_example_always_returned() {
        let e = example(2);
        let mut m = RandomModel::train(&[&e], 3).unwrap();
        for _ in 0..20 {
            assert_eq!(m.predict(), e.comment_bag);
        }
    }

    #[test]
    fn empty_training_set() {
        assert!(RandomModel::train(&[], 0).is_err());
    }

    #[test]
    fn same_seed_same_draws() {
        let ex: Vec<PairedExample> = (0..4).map(example).collect();
        let refs: Vec<&PairedExample> = ex.iter().collect();
        let mut a = RandomModel::train(&refs, 9).unwrap();
        let mut b = RandomModel::train(&refs, 9).unwrap();
        let da: Vec<usize> = (0..50).map(|_| a.draw()).collect();
        let db: Vec<usize> = (0..50).map(|_| b.draw()).collect();
        assert_eq!(da, db);
    }

    #[test]
    fn draws_are_uniform() {
        // Binomial(10000, 1/4): mean 2500, sigma = sqrt(10000 * 0.25 * 0.75) ~ 43.3.
        let ex: Vec<PairedExample> = (0..4).map(example).collect();
        let refs: Vec<&PairedExample> = ex.iter().collect();
        let mut m = RandomModel::train(&refs, 1234).unwrap();
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[m.draw()] += 1;
        }
        let sigma = (10_000.0f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 2500.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }
}
