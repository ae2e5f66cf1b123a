//! Random forest regression from sprite counts to word counts.
//!
//! Trees are multi-output CART regressors. A node's impurity is the sum over
//! word dimensions of the within-node sum of squared deviations, which is the
//! child-size-weighted variance. Splits are axis-aligned, `x[f] <= threshold`,
//! with thresholds at midpoints between consecutive distinct feature values.
//!
//! Per node, features are visited in a random order and the best split is
//! taken over the first `ceil(sqrt(p))` features that are not constant on the
//! node (or over all non-constant ones if fewer exist).

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::PairedExample;
use crate::error::{Error, Result};
use crate::rng;
use crate::vocab::SparseBag;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: usize,
    /// Resample the training rows with replacement for each tree. Turning
    /// this off makes every tree see the rows exactly once.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { trees: 10, max_depth: 200, bootstrap: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: SparseBag, samples: usize },
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, x: &SparseBag) -> &SparseBag {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if x.get(*feature) <= *threshold { *left } else { *right }
                }
                Node::Leaf { value, .. } => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub n_features: usize,
    pub n_outputs: usize,
    pub trees: Vec<Tree>,
}

/// Training matrix: features column-major, outputs as sparse rows.
struct Data<'a> {
    columns: Vec<Vec<f64>>,
    outputs: Vec<&'a SparseBag>,
    n_outputs: usize,
}

impl ForestModel {
    pub fn train(examples: &[&PairedExample], params: &ForestParams) -> Result<Self> {
        let first = examples.first().ok_or(Error::Empty("forest needs at least one training example"))?;
        if params.trees == 0 || params.max_depth == 0 {
            return Err(Error::InvalidParameter("trees and max_depth must be at least 1".into()));
        }
        let n_features = first.sprite_bag.dim();
        let n_outputs = first.comment_bag.dim();
        let mut columns = vec![vec![0.0; examples.len()]; n_features];
        for (i, e) in examples.iter().enumerate() {
            first.sprite_bag.check_dim(&e.sprite_bag)?;
            first.comment_bag.check_dim(&e.comment_bag)?;
            for (f, v) in e.sprite_bag.iter() {
                columns[f][i] = v;
            }
        }
        let data = Data { columns, outputs: examples.iter().map(|e| &e.comment_bag).collect(), n_outputs };
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|t| grow_tree(&data, params, rng::derive(params.seed, t as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForestModel { params: *params, n_features, n_outputs, trees })
    }

    /// Mean of the per-tree leaf vectors.
    ///
    /// Values are summed per word in sorted order, so the result does not
    /// depend on tree order.
    pub fn predict(&self, sprite_bag: &SparseBag) -> Result<SparseBag> {
        if sprite_bag.dim() != self.n_features {
            return Err(Error::VocabularyMismatch { left: self.n_features, right: sprite_bag.dim() });
        }
        let mut pairs: Vec<(usize, f64)> = self.trees.iter().flat_map(|t| t.leaf_for(sprite_bag).iter()).collect();
        pairs.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let n = self.trees.len() as f64;
        let mut averaged: Vec<(usize, f64)> = Vec::new();
        for (i, v) in pairs {
            match averaged.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => averaged.push((i, v)),
            }
        }
        SparseBag::from_pairs(self.n_outputs, averaged.into_iter().map(|(i, s)| (i, s / n)))
    }
}

fn grow_tree(data: &Data<'_>, params: &ForestParams, seed: u64) -> Result<Tree> {
    let mut rng = rng::seeded(seed);
    let n = data.outputs.len();
    let rows: Vec<usize> =
        if params.bootstrap { (0..n).map(|_| rng.gen_range(0..n)).collect() } else { (0..n).collect() };
    let mut nodes = Vec::new();
    grow(data, params, &mut rng, rows, 0, &mut nodes)?;
    Ok(Tree { nodes })
}

fn grow(
    data: &Data<'_>,
    params: &ForestParams,
    rng: &mut rng::Rng,
    rows: Vec<usize>,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> Result<usize> {
    let at = nodes.len();
    let pure = rows.iter().all(|&r| data.outputs[r] == data.outputs[rows[0]]);
    let split = if depth >= params.max_depth || rows.len() < 2 || pure { None } else { best_split(data, rng, &rows) };
    match split {
        None => {
            nodes.push(Node::Leaf { value: mean_output(data, &rows)?, samples: rows.len() });
        }
        Some((feature, threshold)) => {
            nodes.push(Node::Leaf { value: SparseBag::empty(0), samples: 0 });
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data.columns[feature][i] <= threshold);
            let left = grow(data, params, rng, l, depth + 1, nodes)?;
            let right = grow(data, params, rng, r, depth + 1, nodes)?;
            nodes[at] = Node::Split { feature, threshold, left, right };
        }
    }
    Ok(at)
}

fn mean_output(data: &Data<'_>, rows: &[usize]) -> Result<SparseBag> {
    let mut sums = vec![0.0; data.n_outputs];
    for &r in rows {
        for (i, v) in data.outputs[r].iter() {
            sums[i] += v;
        }
    }
    let n = rows.len() as f64;
    SparseBag::from_pairs(
        data.n_outputs,
        sums.into_iter().enumerate().filter(|&(_, s)| s != 0.0).map(|(i, s)| (i, s / n)),
    )
}

/// Best `(feature, threshold)` on the node, or `None` if every feature is constant.
fn best_split(data: &Data<'_>, rng: &mut rng::Rng, rows: &[usize]) -> Option<(usize, f64)> {
    let p = data.columns.len();
    let wanted = (p as f64).sqrt().ceil() as usize;
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(rng);

    // Sum of each output over the node, and sum of squares of those sums.
    let mut total = vec![0.0; data.n_outputs];
    for &r in rows {
        for (i, v) in data.outputs[r].iter() {
            total[i] += v;
        }
    }
    let total_sq: f64 = total.iter().map(|s| s * s).sum();
    let n = rows.len();

    let mut best: Option<(f64, usize, f64)> = None;
    let mut visited = 0;
    let mut left = vec![0.0; data.n_outputs];
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in &order {
        if visited == wanted {
            break;
        }
        let col = &data.columns[f];
        sorted.clear();
        sorted.extend(rows.iter().map(|&r| (col[r], r)));
        sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if sorted[0].0 == sorted[n - 1].0 {
            continue;
        }
        visited += 1;

        // Minimizing SSE_L + SSE_R is maximizing sum(sL^2)/nL + sum(sR^2)/nR.
        left.iter_mut().for_each(|v| *v = 0.0);
        let (mut left_sq, mut right_sq) = (0.0, total_sq);
        for pos in 0..n - 1 {
            let (x, r) = sorted[pos];
            for (i, v) in data.outputs[r].iter() {
                let before_l = left[i];
                let before_r = total[i] - before_l;
                left[i] += v;
                let after_r = total[i] - left[i];
                left_sq += left[i] * left[i] - before_l * before_l;
                right_sq += after_r * after_r - before_r * before_r;
            }
            let next = sorted[pos + 1].0;
            if x == next {
                continue;
            }
            let nl = (pos + 1) as f64;
            let nr = (n - pos - 1) as f64;
            let score = left_sq / nl + right_sq / nr;
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, f, x + (next - x) / 2.0));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::cosine_distance;

    fn example(sprites: &[(usize, f64)], words: &[(usize, f64)]) -> PairedExample {
        PairedExample {
            id: String::new(),
            frame_timestamps: vec![0],
            sprite_bag: SparseBag::from_pairs(3, sprites.iter().copied()).unwrap(),
            comment_text: String::new(),
            comment_bag: SparseBag::from_pairs(4, words.iter().copied()).unwrap(),
            topic_label: None,
        }
    }

    fn exact(trees: usize) -> ForestParams {
        ForestParams { trees, max_depth: 200, bootstrap: false, seed: 5 }
    }

    #[test]
    fn constant_comment_predicted_everywhere() {
        let ex =
            [example(&[(0, 1.0)], &[(1, 2.0)]), example(&[(1, 3.0)], &[(1, 2.0)]), example(&[(2, 1.0)], &[(1, 2.0)])];
        let refs: Vec<&PairedExample> = ex.iter().collect();
        let m = ForestModel::train(&refs, &ForestParams::default()).unwrap();
        for probe in [SparseBag::empty(3), SparseBag::from_pairs(3, [(2, 9.0)]).unwrap()] {
            assert_eq!(m.predict(&probe).unwrap(), ex[0].comment_bag);
        }
    }

    #[test]
    fn two_rows_one_tree_reproduce_comments() {
        let a = example(&[(0, 1.0)], &[(0, 1.0)]);
        let b = example(&[(0, 3.0)], &[(2, 1.0), (3, 1.0)]);
        let m = ForestModel::train(&[&a, &b], &exact(1)).unwrap();
        // Single split on feature 0 at the midpoint 2.
        match &m.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.0);
            }
            other => panic!("expected a split, got {other:?}"),
        }
        assert_eq!(m.predict(&a.sprite_bag).unwrap(), a.comment_bag);
        assert_eq!(m.predict(&b.sprite_bag).unwrap(), b.comment_bag);
    }

    #[test]
    fn leaves_are_means() {
        let ex = [example(&[(0, 1.0)], &[(0, 1.0)]), example(&[(0, 1.0)], &[(0, 3.0), (1, 2.0)])];
        let refs: Vec<&PairedExample> = ex.iter().collect();
        let m = ForestModel::train(&refs, &exact(1)).unwrap();
        // Identical inputs cannot be split: one leaf holding the mean.
        assert_eq!(m.trees[0].nodes.len(), 1);
        assert_eq!(m.predict(&ex[0].sprite_bag).unwrap(), SparseBag::from_pairs(4, [(0, 2.0), (1, 1.0)]).unwrap());
    }

    #[test]
    fn depth_limit() {
        let ex: Vec<PairedExample> = (0..16).map(|i| example(&[(0, i as f64 + 1.0)], &[(i % 4, 1.0)])).collect();
        let refs: Vec<&PairedExample> = ex.iter().collect();
        let params = ForestParams { max_depth: 2, ..exact(3) };
        let m = ForestModel::train(&refs, &params).unwrap();
        assert!(m.trees.iter().all(|t| t.depth() <= 2));
    }

    #[test]
    fn binary_feature_learned() {
        // Output is a deterministic function of whether sprite 1 is present.
        let mut ex = Vec::new();
        for i in 0..20 {
            let on = i % 2 == 0;
            let sprites: Vec<(usize, f64)> =
                if on { vec![(1, 1.0), (0, 1.0)] } else { vec![(0, 1.0 + (i % 3) as f64)] };
            let words: Vec<(usize, f64)> = if on { vec![(0, 1.0), (1, 1.0)] } else { vec![(2, 1.0), (3, 1.0)] };
            ex.push(example(&sprites, &words));
        }
        let refs: Vec<&PairedExample> = ex.iter().collect();
        let m = ForestModel::train(&refs, &ForestParams { seed: 1, ..Default::default() }).unwrap();
        let mean: f64 = ex
            .iter()
            .map(|e| cosine_distance(&m.predict(&e.sprite_bag).unwrap(), &e.comment_bag).unwrap())
            .sum::<f64>()
            / ex.len() as f64;
        assert!(mean < 0.05, "mean training distance {mean}");
    }

    #[test]
    fn tree_order_does_not_matter() {
        let ex: Vec<PairedExample> = (0..30)
            .map(|i| example(&[((i * 7) % 3, 1.0 + (i % 5) as f64)], &[((i * 3) % 4, 1.0), (i % 4, 0.5)]))
            .collect();
        let refs: Vec<&PairedExample> = ex.iter().collect();
        let m = ForestModel::train(&refs, &ForestParams { seed: 3, ..Default::default() }).unwrap();
        let mut rev = m.clone();
        rev.trees.reverse();
        for e in &ex {
            assert_eq!(m.predict(&e.sprite_bag).unwrap(), rev.predict(&e.sprite_bag).unwrap());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let ex: Vec<PairedExample> =
            (0..25).map(|i| example(&[(i % 3, (i % 4) as f64 + 1.0)], &[(i % 4, 1.0)])).collect();
        let refs: Vec<&PairedExample> = ex.iter().collect();
        let p = ForestParams { seed: 77, ..Default::default() };
        assert_eq!(ForestModel::train(&refs, &p).unwrap(), ForestModel::train(&refs, &p).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ForestModel::train(&[], &ForestParams::default()).is_err());
        let e = example(&[(0, 1.0)], &[(0, 1.0)]);
        assert!(ForestModel::train(&[&e], &ForestParams { trees: 0, ..Default::default() }).is_err());
        let m = ForestModel::train(&[&e], &ForestParams::default()).unwrap();
        assert!(m.predict(&SparseBag::empty(7)).is_err());
    }
}
