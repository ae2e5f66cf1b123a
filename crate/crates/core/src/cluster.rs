//! K-medoids clustering of paired examples.
//!
//! [`pam`] runs the classic BUILD + SWAP procedure on a precomputed distance
//! matrix. Swap deltas are evaluated for all medoids of one candidate at once
//! from cached nearest/second-nearest distances, so a SWAP pass costs O(n²)
//! rather than O(k n²); the swap it picks is the same best swap PAM would.
//!
//! [`select_k`] picks the number of clusters with the distortion ratio
//!
//! ```text
//! f(1) = 1
//! f(k) = S_k / (a_k * S_{k-1})     (f(k) = 1 when S_{k-1} = 0)
//! a_2  = 1 - 3 / (4 D)
//! a_k  = a_{k-1} + (1 - a_{k-1}) / 6
//! ```
//!
//! where `S_k` is the within-cluster sum of squared distances to the medoid
//! and `D` the combined vocabulary size. The chosen k is the argmin of `f`
//! among values below the threshold, or 1 if none is.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PairedExample};
use crate::error::{Error, Result};
use crate::metric::{cosine_distance, paired_distance, DistanceConfig};
use crate::vocab::SparseBag;

pub const DEFAULT_THRESHOLD: f64 = 0.85;

/// Improvements smaller than this are treated as rounding noise.
const SWAP_EPS: f64 = 1e-12;

/// Dense symmetric distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let data = (0..n).into_par_iter().flat_map_iter(|i| (0..n).map(|j| f(i, j)).collect::<Vec<_>>()).collect();
        DistanceMatrix { n, data }
    }

    pub fn paired(examples: &[PairedExample], cfg: &DistanceConfig) -> Result<Self> {
        if let Some(first) = examples.first() {
            for e in examples {
                first.comment_bag.check_dim(&e.comment_bag)?;
                first.sprite_bag.check_dim(&e.sprite_bag)?;
            }
        }
        Ok(Self::from_fn(examples.len(), |i, j| {
            paired_distance(&examples[i], &examples[j], cfg).expect("dimensions checked")
        }))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PamResult {
    /// Medoid example indices, ascending. Cluster `c` is the one around `medoids[c]`.
    pub medoids: Vec<usize>,
    /// Cluster index per example.
    pub labels: Vec<usize>,
    /// Sum of distances to the assigned medoid.
    pub cost: f64,
    pub swaps: usize,
}

impl PamResult {
    /// Within-cluster sum of squared distances to the medoid.
    pub fn squared_distortion(&self, dm: &DistanceMatrix) -> f64 {
        self.labels
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let d = dm.get(j, self.medoids[c]);
                d * d
            })
            .sum()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.medoids.len()];
        for &c in &self.labels {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Nearest-medoid labels (ties to the lowest cluster index; a medoid always
/// labels itself) and the summed distance.
pub fn assign_to_medoids(dm: &DistanceMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut labels = Vec::with_capacity(dm.len());
    let mut cost = 0.0;
    for j in 0..dm.len() {
        let (c, d) = match medoids.iter().position(|&m| m == j) {
            Some(c) => (c, 0.0),
            None => {
                let mut best = (0, dm.get(j, medoids[0]));
                for (c, &m) in medoids.iter().enumerate().skip(1) {
                    let d = dm.get(j, m);
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best
            }
        };
        labels.push(c);
        cost += d;
    }
    (labels, cost)
}

/// Total distance of every point to its nearest medoid, summed in index order.
pub fn total_cost(dm: &DistanceMatrix, medoids: &[usize]) -> f64 {
    assign_to_medoids(dm, medoids).1
}

struct Nearest {
    slot: usize,
    near: f64,
    second: f64,
}

fn nearest_table(dm: &DistanceMatrix, medoids: &[usize]) -> Vec<Nearest> {
    (0..dm.len())
        .map(|j| {
            let mut rec = Nearest { slot: 0, near: f64::INFINITY, second: f64::INFINITY };
            for (s, &m) in medoids.iter().enumerate() {
                let d = dm.get(j, m);
                if d < rec.near {
                    rec.second = rec.near;
                    rec.near = d;
                    rec.slot = s;
                } else if d < rec.second {
                    rec.second = d;
                }
            }
            rec
        })
        .collect()
}

/// Greedy BUILD: the 1-medoid first, then repeatedly the point with the
/// largest total distance reduction. Ties go to the lowest index.
fn build(dm: &DistanceMatrix, k: usize) -> Vec<usize> {
    let n = dm.len();
    let mut first = (0, f64::INFINITY);
    for i in 0..n {
        let s: f64 = (0..n).map(|j| dm.get(i, j)).sum();
        if s < first.1 {
            first = (i, s);
        }
    }
    let mut medoids = vec![first.0];
    let mut is_medoid = vec![false; n];
    is_medoid[first.0] = true;
    let mut nearest: Vec<f64> = (0..n).map(|j| dm.get(j, first.0)).collect();
    while medoids.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..n).filter(|&c| !is_medoid[c]) {
            let gain: f64 = (0..n).map(|j| (nearest[j] - dm.get(j, c)).max(0.0)).sum();
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((c, gain));
            }
        }
        let (c, _) = best.expect("k <= n leaves a candidate");
        medoids.push(c);
        is_medoid[c] = true;
        for (j, near) in nearest.iter_mut().enumerate() {
            *near = near.min(dm.get(j, c));
        }
    }
    medoids
}

/// Partitioning Around Medoids.
pub fn pam(dm: &DistanceMatrix, k: usize) -> Result<PamResult> {
    let n = dm.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k must be in 1..={n}, got {k}")));
    }
    let mut medoids = build(dm, k);
    let mut is_medoid = vec![false; n];
    for &m in &medoids {
        is_medoid[m] = true;
    }
    let mut swaps = 0;
    let mut deltas = vec![0.0; k];
    loop {
        let table = nearest_table(dm, &medoids);
        // (delta, slot, candidate)
        let mut best: Option<(f64, usize, usize)> = None;
        for h in (0..n).filter(|&h| !is_medoid[h]) {
            let mut shared = 0.0;
            deltas.iter_mut().for_each(|d| *d = 0.0);
            for (j, rec) in table.iter().enumerate() {
                let dh = dm.get(j, h);
                let gain = (dh - rec.near).min(0.0);
                shared += gain;
                // If j's own medoid is removed it goes to h or its second medoid.
                deltas[rec.slot] += dh.min(rec.second) - rec.near - gain;
            }
            for (slot, &d) in deltas.iter().enumerate() {
                let delta = shared + d;
                if best.is_none_or(|(b, _, _)| delta < b) {
                    best = Some((delta, slot, h));
                }
            }
        }
        match best {
            Some((delta, slot, h)) if delta < -SWAP_EPS => {
                is_medoid[medoids[slot]] = false;
                is_medoid[h] = true;
                medoids[slot] = h;
                swaps += 1;
            }
            _ => break,
        }
    }
    medoids.sort_unstable();
    let (labels, cost) = assign_to_medoids(dm, &medoids);
    Ok(PamResult { medoids, labels, cost, swaps })
}

/// One row of the k-selection trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub k: usize,
    /// Within-cluster sum of squared distances to the medoid.
    pub distortion: f64,
    /// Dimension correction; absent for k = 1.
    pub alpha: Option<f64>,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub dimensionality: usize,
    pub threshold: f64,
    pub steps: Vec<SelectionStep>,
}

#[derive(Debug, Clone)]
pub struct KSelection {
    pub k: usize,
    pub trace: SelectionTrace,
    /// PAM result for every candidate k, index `k - 1`.
    pub runs: Vec<PamResult>,
}

impl KSelection {
    pub fn chosen(&self) -> &PamResult {
        &self.runs[self.k - 1]
    }
}

/// Evaluate k = 1..=k_max on a precomputed matrix.
pub fn select_k_on(dm: &DistanceMatrix, dimensionality: usize, k_max: usize, threshold: f64) -> Result<KSelection> {
    if k_max == 0 || k_max > dm.len() {
        return Err(Error::InvalidParameter(format!("k_max must be in 1..={}, got {k_max}", dm.len())));
    }
    if dimensionality == 0 && k_max > 1 {
        return Err(Error::InvalidParameter("distortion ratio needs a nonzero dimensionality".into()));
    }
    let runs = (1..=k_max).map(|k| pam(dm, k)).collect::<Result<Vec<_>>>()?;
    let mut steps: Vec<SelectionStep> = Vec::with_capacity(k_max);
    let mut alpha = 0.0;
    for (i, run) in runs.iter().enumerate() {
        let k = i + 1;
        let distortion = run.squared_distortion(dm);
        let step = if k == 1 {
            SelectionStep { k, distortion, alpha: None, ratio: 1.0 }
        } else {
            alpha = if k == 2 { 1.0 - 3.0 / (4.0 * dimensionality as f64) } else { alpha + (1.0 - alpha) / 6.0 };
            let prev = steps[i - 1].distortion;
            let ratio = if prev == 0.0 { 1.0 } else { distortion / (alpha * prev) };
            SelectionStep { k, distortion, alpha: Some(alpha), ratio }
        };
        steps.push(step);
    }
    let mut chosen = 1;
    let mut best = f64::INFINITY;
    for s in &steps {
        if s.ratio < threshold && s.ratio < best {
            best = s.ratio;
            chosen = s.k;
        }
    }
    Ok(KSelection { k: chosen, trace: SelectionTrace { dimensionality, threshold, steps }, runs })
}

/// Choose k for a corpus under the paired distance.
pub fn select_k(corpus: &Corpus, k_max: usize, cfg: &DistanceConfig, threshold: f64) -> Result<KSelection> {
    let dm = DistanceMatrix::paired(&corpus.examples, cfg)?;
    select_k_on(&dm, corpus.dimensionality(), k_max, threshold)
}

/// A fitted clustering of a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub medoid_ids: Vec<String>,
    /// Positions of the medoids in the training corpus.
    pub medoid_indices: Vec<usize>,
    pub assignment: BTreeMap<String, usize>,
    pub cost: f64,
    pub distance: DistanceConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionTrace>,
}

impl ClusterModel {
    fn from_pam(
        corpus: &Corpus,
        run: &PamResult,
        cfg: &DistanceConfig,
        seed: u64,
        selection: Option<SelectionTrace>,
    ) -> Self {
        let ids = |i: usize| corpus.examples[i].id.clone();
        ClusterModel {
            k: run.medoids.len(),
            medoid_ids: run.medoids.iter().map(|&m| ids(m)).collect(),
            medoid_indices: run.medoids.clone(),
            assignment: run.labels.iter().enumerate().map(|(i, &c)| (ids(i), c)).collect(),
            cost: run.cost,
            distance: *cfg,
            seed,
            selection,
        }
    }

    /// Cluster label of each corpus example, in corpus order.
    pub fn labels_for(&self, corpus: &Corpus) -> Result<Vec<usize>> {
        corpus
            .examples
            .iter()
            .enumerate()
            .map(|(n, e)| {
                self.assignment
                    .get(&e.id)
                    .copied()
                    .ok_or_else(|| Error::schema("cluster model", n + 1, format!("example {:?} is not assigned", e.id)))
            })
            .collect()
    }

    /// Check that the model was fitted on `corpus`.
    pub fn validate_against(&self, corpus: &Corpus) -> Result<()> {
        let labels = self.labels_for(corpus)?;
        let bad = |m: String| Err(Error::schema("cluster model", 0, m));
        if self.medoid_ids.len() != self.k || self.medoid_indices.len() != self.k || self.k == 0 {
            return bad(format!("model lists {} medoids for k={}", self.medoid_ids.len(), self.k));
        }
        if labels.iter().any(|&c| c >= self.k) {
            return bad("cluster label out of range".into());
        }
        for (c, (&i, id)) in self.medoid_indices.iter().zip(&self.medoid_ids).enumerate() {
            match corpus.examples.get(i) {
                Some(e) if &e.id == id && labels[i] == c => {}
                _ => return bad(format!("medoid {id:?} does not match the corpus")),
            }
        }
        Ok(())
    }

    pub fn medoid_sprite_bags(&self, train: &Corpus) -> Vec<SparseBag> {
        self.medoid_indices.iter().map(|&i| train.examples[i].sprite_bag.clone()).collect()
    }
}

/// PAM with a fixed k. PAM itself draws no random numbers; `seed` is recorded
/// in the model for provenance.
pub fn kmedoids(corpus: &Corpus, k: usize, cfg: &DistanceConfig, seed: u64) -> Result<ClusterModel> {
    let dm = DistanceMatrix::paired(&corpus.examples, cfg)?;
    let run = pam(&dm, k)?;
    Ok(ClusterModel::from_pam(corpus, &run, cfg, seed, None))
}

/// Select k by the distortion ratio and return the clustering at that k.
pub fn cluster_corpus(
    corpus: &Corpus,
    k_max: usize,
    cfg: &DistanceConfig,
    threshold: f64,
    seed: u64,
) -> Result<ClusterModel> {
    let sel = select_k(corpus, k_max, cfg, threshold)?;
    Ok(ClusterModel::from_pam(corpus, sel.chosen(), cfg, seed, Some(sel.trace.clone())))
}

/// Index of the medoid closest in sprite-bag cosine distance; ties to the lowest index.
pub fn assign_by_frame(sprite_bag: &SparseBag, medoid_sprites: &[SparseBag]) -> Result<usize> {
    if medoid_sprites.is_empty() {
        return Err(Error::Empty("cluster model has no medoids"));
    }
    let mut best = (0, f64::INFINITY);
    for (c, m) in medoid_sprites.iter().enumerate() {
        let d = cosine_distance(sprite_bag, m)?;
        if d < best.1 {
            best = (c, d);
        }
    }
    Ok(best.0)
}

/// Cluster of a held-out example, judged by its frames only.
pub fn assign_test(test: &PairedExample, model: &ClusterModel, train: &Corpus) -> Result<usize> {
    assign_by_frame(&test.sprite_bag, &model.medoid_sprite_bags(train))
}
