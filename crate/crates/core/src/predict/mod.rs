//! Frame-to-comment predictors and their standard / per-cluster suites.

pub mod forest;
pub mod knn;
pub mod random;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{assign_by_frame, ClusterModel};
use crate::corpus::{Corpus, PairedExample};
use crate::error::{Error, Result};
use crate::rng;
use crate::vocab::{SparseBag, Vocabulary};

pub use forest::{ForestModel, ForestParams};
pub use knn::KnnModel;
pub use random::RandomModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Random,
    Forest,
    Knn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    pub knn_k: usize,
    pub trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl PredictorSpec {
    pub fn new(kind: PredictorKind, seed: u64) -> Self {
        PredictorSpec { kind, knn_k: 5, trees: 10, max_depth: 200, seed }
    }

    pub fn knn(k: usize, seed: u64) -> Self {
        PredictorSpec { knn_k: k, ..Self::new(PredictorKind::Knn, seed) }
    }

    /// Random, Forest, KNN-5, KNN-10.
    pub fn standard_set(seed: u64) -> Vec<PredictorSpec> {
        vec![
            Self::new(PredictorKind::Random, seed),
            Self::new(PredictorKind::Forest, seed),
            Self::knn(5, seed),
            Self::knn(10, seed),
        ]
    }

    pub fn with_seed(self, seed: u64) -> Self {
        PredictorSpec { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knn_k == 0 || self.trees == 0 || self.max_depth == 0 {
            return Err(Error::InvalidParameter(format!(
                "knn_k, trees and max_depth must be at least 1 (got {}, {}, {})",
                self.knn_k, self.trees, self.max_depth
            )));
        }
        Ok(())
    }

    /// Short name used in reports: `random`, `forest`, `knn5`, ...
    pub fn name(&self) -> String {
        match self.kind {
            PredictorKind::Random => "random".into(),
            PredictorKind::Forest => "forest".into(),
            PredictorKind::Knn => format!("knn{}", self.knn_k),
        }
    }

    fn forest_params(&self, seed: u64) -> ForestParams {
        ForestParams { trees: self.trees, max_depth: self.max_depth, bootstrap: true, seed }
    }
}

impl FromStr for PredictorSpec {
    type Err = Error;

    /// Parses a report name back into a spec with default settings and seed 0.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::new(PredictorKind::Random, 0)),
            "forest" => Ok(Self::new(PredictorKind::Forest, 0)),
            _ => match s.strip_prefix("knn").map(str::parse::<usize>) {
                Some(Ok(k)) if k > 0 => Ok(Self::knn(k, 0)),
                _ => Err(Error::InvalidParameter(format!("unknown predictor {s:?}"))),
            },
        }
    }
}

/// A trained frame-to-comment model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Random(RandomModel),
    Forest(ForestModel),
    Knn(KnnModel),
}

impl Model {
    pub fn train(examples: &[&PairedExample], spec: &PredictorSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        Ok(match spec.kind {
            PredictorKind::Random => Model::Random(RandomModel::train(examples, seed)?),
            PredictorKind::Forest => Model::Forest(ForestModel::train(examples, &spec.forest_params(seed))?),
            PredictorKind::Knn => Model::Knn(KnnModel::train(examples, spec.knn_k)?),
        })
    }

    /// Predicted comment bag. Only the random model consumes state.
    pub fn predict(&mut self, sprite_bag: &SparseBag) -> Result<SparseBag> {
        match self {
            Model::Random(m) => Ok(m.predict()),
            Model::Forest(m) => m.predict(sprite_bag),
            Model::Knn(m) => m.predict(sprite_bag),
        }
    }

    pub fn is_stateless(&self) -> bool {
        !matches!(self, Model::Random(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    Standard,
    PerCluster,
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainingMode::Standard => "standard",
            TrainingMode::PerCluster => "per-cluster",
        })
    }
}

impl FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(TrainingMode::Standard),
            "per-cluster" => Ok(TrainingMode::PerCluster),
            _ => Err(Error::InvalidParameter(format!("unknown training mode {s:?}"))),
        }
    }
}

/// One predictor per cluster (or a single one in standard mode) plus what is
/// needed to route a test example to its cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorSuite {
    pub spec: PredictorSpec,
    pub mode: TrainingMode,
    pub sprite_vocab: Vocabulary,
    pub word_vocab: Vocabulary,
    /// Sprite bags of the cluster medoids; empty in standard mode.
    pub medoid_sprites: Vec<SparseBag>,
    pub models: Vec<Model>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub cluster: usize,
    pub bag: SparseBag,
}

/// Train one predictor on the whole corpus (`clusters = None`) or one per cluster.
///
/// Model `c` is seeded with `derive(spec.seed, c)`; the standard model uses
/// stream 0, so a one-cluster suite reproduces the standard one exactly.
pub fn train_suite(train: &Corpus, clusters: Option<&ClusterModel>, spec: &PredictorSpec) -> Result<PredictorSuite> {
    spec.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let (mode, groups, medoid_sprites) = match clusters {
        None => (TrainingMode::Standard, vec![train.examples.iter().collect::<Vec<_>>()], Vec::new()),
        Some(model) => {
            model.validate_against(train)?;
            let labels = model.labels_for(train)?;
            let mut groups: Vec<Vec<&PairedExample>> = vec![Vec::new(); model.k];
            for (e, &c) in train.examples.iter().zip(&labels) {
                groups[c].push(e);
            }
            (TrainingMode::PerCluster, groups, model.medoid_sprite_bags(train))
        }
    };
    let models = groups
        .iter()
        .enumerate()
        .map(|(c, members)| {
            if members.is_empty() {
                return Err(Error::InvalidParameter(format!("cluster {c} has no members")));
            }
            Model::train(members, spec, rng::derive(spec.seed, c as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictorSuite {
        spec: *spec,
        mode,
        sprite_vocab: train.sprite_vocab.clone(),
        word_vocab: train.word_vocab.clone(),
        medoid_sprites,
        models,
    })
}

impl PredictorSuite {
    pub fn clusters(&self) -> usize {
        self.models.len()
    }

    /// Cluster that would handle `sprite_bag`; always 0 in standard mode.
    pub fn route(&self, sprite_bag: &SparseBag) -> Result<usize> {
        match self.mode {
            TrainingMode::Standard => Ok(0),
            TrainingMode::PerCluster => assign_by_frame(sprite_bag, &self.medoid_sprites),
        }
    }

    pub fn predict(&mut self, sprite_bag: &SparseBag) -> Result<Prediction> {
        let cluster = self.route(sprite_bag)?;
        self.predict_in_cluster(cluster, sprite_bag)
    }

    /// Predict with a chosen cluster's model, bypassing routing.
    pub fn predict_in_cluster(&mut self, cluster: usize, sprite_bag: &SparseBag) -> Result<Prediction> {
        let n = self.models.len();
        let model = self
            .models
            .get_mut(cluster)
            .ok_or_else(|| Error::InvalidParameter(format!("cluster {cluster} out of range (suite has {n})")))?;
        Ok(Prediction { cluster, bag: model.predict(sprite_bag)? })
    }

    /// Predictions for many inputs with explicit clusters. Stateless models
    /// run in parallel; the random model draws sequentially in input order.
    pub fn predict_batch(&mut self, requests: &[(usize, &SparseBag)]) -> Result<Vec<SparseBag>> {
        use rayon::prelude::*;
        if self.models.iter().all(Model::is_stateless) {
            let models = &self.models;
            requests
                .par_iter()
                .map(|&(c, bag)| {
                    let model =
                        models.get(c).ok_or_else(|| Error::InvalidParameter(format!("cluster {c} out of range")))?;
                    match model {
                        Model::Forest(m) => m.predict(bag),
                        Model::Knn(m) => m.predict(bag),
                        Model::Random(_) => unreachable!("filtered above"),
                    }
                })
                .collect()
        } else {
            requests.iter().map(|&(c, bag)| self.predict_in_cluster(c, bag).map(|p| p.bag)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::kmedoids;
    use crate::corpus::{align, ExampleRecord};
    use crate::metric::DistanceConfig;

    fn record(id: &str, sprite: &str, comment: &str) -> ExampleRecord {
        ExampleRecord {
            id: id.into(),
            frames: vec![0],
            sprites: [(sprite.to_string(), 1)].into(),
            comment: comment.into(),
            topic: None,
        }
    }

    fn toy() -> Corpus {
        let mut recs = Vec::new();
        for i in 0..6 {
            recs.push(record(&format!("a{i}"), "goomba", &format!("stomp goomba now{i}")));
            recs.push(record(&format!("b{i}"), "castle", &format!("bowser castle fire{i}")));
        }
        align(&recs, &[]).unwrap().train
    }

    #[test]
    fn spec_names_round_trip() {
        for spec in PredictorSpec::standard_set(0) {
            assert_eq!(spec.name().parse::<PredictorSpec>().unwrap(), spec);
        }
        assert!("knn0".parse::<PredictorSpec>().is_err());
        assert!("svm".parse::<PredictorSpec>().is_err());
    }

    #[test]
    fn per_cluster_trains_one_model_per_cluster() {
        let corpus = toy();
        let model = kmedoids(&corpus, 2, &DistanceConfig::default(), 0).unwrap();
        for spec in PredictorSpec::standard_set(4) {
            let suite = train_suite(&corpus, Some(&model), &spec).unwrap();
            assert_eq!(suite.clusters(), 2);
            assert_eq!(suite.mode, TrainingMode::PerCluster);
        }
        let standard = train_suite(&corpus, None, &PredictorSpec::new(PredictorKind::Forest, 4)).unwrap();
        assert_eq!(standard.clusters(), 1);
    }

    #[test]
    fn single_cluster_matches_standard() {
        let corpus = toy();
        let model = kmedoids(&corpus, 1, &DistanceConfig::default(), 0).unwrap();
        for spec in PredictorSpec::standard_set(11) {
            let mut per = train_suite(&corpus, Some(&model), &spec).unwrap();
            let mut std = train_suite(&corpus, None, &spec).unwrap();
            for e in &corpus.examples {
                assert_eq!(per.predict(&e.sprite_bag).unwrap().bag, std.predict(&e.sprite_bag).unwrap().bag);
            }
        }
    }

    #[test]
    fn per_cluster_random_samples_within_cluster() {
        let corpus = toy();
        let model = kmedoids(&corpus, 2, &DistanceConfig::default(), 0).unwrap();
        let labels = model.labels_for(&corpus).unwrap();
        let mut suite = train_suite(&corpus, Some(&model), &PredictorSpec::new(PredictorKind::Random, 2)).unwrap();
        let probe = &corpus.examples[0];
        let cluster = suite.route(&probe.sprite_bag).unwrap();
        let members: Vec<&SparseBag> =
            corpus.examples.iter().zip(&labels).filter(|(_, &c)| c == cluster).map(|(e, _)| &e.comment_bag).collect();
        let mut counts = vec![0usize; members.len()];
        let draws = 6000;
        for _ in 0..draws {
            let p = suite.predict(&probe.sprite_bag).unwrap().bag;
            let i = members.iter().position(|m| **m == p).expect("drawn bag belongs to the cluster");
            counts[i] += 1;
        }
        let q = 1.0 / members.len() as f64;
        let sigma = (draws as f64 * q * (1.0 - q)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * q).abs() <= 3.0 * sigma);
        }
    }

    #[test]
    fn batch_matches_single_predictions() {
        let corpus = toy();
        let model = kmedoids(&corpus, 2, &DistanceConfig::default(), 0).unwrap();
        for spec in PredictorSpec::standard_set(8) {
            let suite = train_suite(&corpus, Some(&model), &spec).unwrap();
            let mut a = suite.clone();
            let mut b = suite.clone();
            let reqs: Vec<(usize, &SparseBag)> =
                corpus.examples.iter().map(|e| (a.route(&e.sprite_bag).unwrap(), &e.sprite_bag)).collect();
            let batch = a.predict_batch(&reqs).unwrap();
            let single: Vec<SparseBag> = reqs.iter().map(|&(c, s)| b.predict_in_cluster(c, s).unwrap().bag).collect();
            assert_eq!(batch, single);
        }
    }

    #[test]
    fn suite_json_round_trip() {
        let corpus = toy();
        let model = kmedoids(&corpus, 2, &DistanceConfig::default(), 0).unwrap();
        let suite = train_suite(&corpus, Some(&model), &PredictorSpec::new(PredictorKind::Forest, 1)).unwrap();
        let json = serde_json::to_string(&suite).unwrap();
        let mut back: PredictorSuite = serde_json::from_str(&json).unwrap();
        let mut orig = suite.clone();
        for e in &corpus.examples {
            assert_eq!(orig.predict(&e.sprite_bag).unwrap(), back.predict(&e.sprite_bag).unwrap());
        }
    }
}
