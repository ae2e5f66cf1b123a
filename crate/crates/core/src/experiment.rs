//! Evaluation harness: standard vs per-cluster training, true vs random
//! cluster routing, and the medoid-comment baseline.
//!
//! Every number reported is a cosine distance between a predicted comment bag
//! and the true one, so lower is better. Summaries use the population
//! standard deviation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cluster::{assign_by_frame, cluster_corpus, ClusterModel, DEFAULT_THRESHOLD};
use crate::corpus::{align, fingerprint, tokenize, AlignedCorpora, Corpus, ExampleRecord};
use crate::error::{Error, Result};
use crate::metric::{cosine_distance, DistanceConfig};
use crate::predict::{train_suite, PredictorSpec, PredictorSuite};
use crate::rng;
use crate::vocab::SparseBag;

pub const CSV_HEADER: [&str; 6] = ["approach", "mode", "mean", "std", "n", "seed"];

// Seed streams derived from the experiment seed.
const STREAM_PREDICTORS: u64 = 1;
const STREAM_RANDOM_CLUSTER: u64 = 2;
const STREAM_RANDOM_MEDOID: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { mean: 0.0, std: 0.0, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Summary { mean, std: var.sqrt(), n }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub approach: String,
    pub mode: String,
    pub example_ids: Vec<String>,
    pub distances: Vec<f64>,
}

impl EvalRow {
    pub fn summary(&self) -> Summary {
        summarize(&self.distances)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprints {
    pub train: String,
    pub test: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment: String,
    pub seed: u64,
    pub std_kind: String,
    pub clusters: Option<usize>,
    pub fingerprints: Option<Fingerprints>,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn new(experiment: &str, seed: u64) -> Self {
        EvalReport {
            experiment: experiment.into(),
            seed,
            std_kind: "population".into(),
            clusters: None,
            fingerprints: None,
            rows: Vec::new(),
        }
    }

    pub fn row(&self, approach: &str, mode: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.approach == approach && r.mode == mode)
    }

    pub fn mean(&self, approach: &str, mode: &str) -> Option<f64> {
        self.row(approach, mode).map(|r| r.summary().mean)
    }

    /// `approach,mode,mean,std,n,seed`, one line per row.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            let s = row.summary();
            w.write_record([
                row.approach.clone(),
                row.mode.clone(),
                format!("{:.6}", s.mean),
                format!("{:.6}", s.std),
                s.n.to_string(),
                self.seed.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io { path: "report.csv".into(), source: e.into_error() })
    }

    /// One JSON object per (row, example) with the full-precision distance.
    pub fn distances_jsonl(&self) -> Result<Vec<u8>> {
        #[derive(Serialize)]
        struct Line<'a> {
            approach: &'a str,
            mode: &'a str,
            id: &'a str,
            distance: f64,
        }
        let mut out = Vec::new();
        for row in &self.rows {
            for (id, &distance) in row.example_ids.iter().zip(&row.distances) {
                serde_json::to_writer(&mut out, &Line { approach: &row.approach, mode: &row.mode, id, distance })?;
                out.push(b'\n');
            }
        }
        Ok(out)
    }

    /// Report metadata without the per-example rows.
    pub fn metadata_json(&self) -> Result<Vec<u8>> {
        #[derive(Serialize)]
        struct Meta<'a> {
            experiment: &'a str,
            seed: u64,
            std_kind: &'a str,
            clusters: Option<usize>,
            fingerprints: &'a Option<Fingerprints>,
            rows: Vec<(String, String, Summary)>,
        }
        let meta = Meta {
            experiment: &self.experiment,
            seed: self.seed,
            std_kind: &self.std_kind,
            clusters: self.clusters,
            fingerprints: &self.fingerprints,
            rows: self.rows.iter().map(|r| (r.approach.clone(), r.mode.clone(), r.summary())).collect(),
        };
        let mut out = serde_json::to_vec_pretty(&meta)?;
        out.push(b'\n');
        Ok(out)
    }
}

/// `pred` widened to the truth's dimension; the suite's word vocabulary is a
/// prefix of the test corpus's.
fn comparable(pred: &SparseBag, truth: &SparseBag) -> Result<SparseBag> {
    pred.with_dim(truth.dim())
}

fn check_vocab_prefix(suite: &PredictorSuite, test: &Corpus) -> Result<()> {
    let s = suite.word_vocab.tokens();
    let t = test.word_vocab.tokens();
    if s.len() > t.len() || s != &t[..s.len()] {
        return Err(Error::VocabularyMismatch { left: s.len(), right: t.len() });
    }
    if suite.sprite_vocab != test.sprite_vocab {
        return Err(Error::VocabularyMismatch { left: suite.sprite_vocab.len(), right: test.sprite_vocab.len() });
    }
    Ok(())
}

/// Distances for every test example, routing each through `clusters[i]`.
pub fn evaluate_routed(suite: &mut PredictorSuite, test: &Corpus, clusters: &[usize]) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(Error::Empty("test corpus"));
    }
    check_vocab_prefix(suite, test)?;
    let requests: Vec<(usize, &SparseBag)> =
        clusters.iter().copied().zip(test.examples.iter().map(|e| &e.sprite_bag)).collect();
    let predictions = suite.predict_batch(&requests)?;
    predictions
        .iter()
        .zip(&test.examples)
        .map(|(p, e)| cosine_distance(&comparable(p, &e.comment_bag)?, &e.comment_bag))
        .collect()
}

/// Distances for every test example under the suite's own routing.
pub fn evaluate(suite: &mut PredictorSuite, test: &Corpus) -> Result<Vec<f64>> {
    let clusters = test.examples.iter().map(|e| suite.route(&e.sprite_bag)).collect::<Result<Vec<_>>>()?;
    evaluate_routed(suite, test, &clusters)
}

/// Vectorize test records for a trained suite: the suite's sprite vocabulary,
/// and its word vocabulary extended by test-only words.
pub fn test_corpus_for(suite: &PredictorSuite, test: &[ExampleRecord]) -> Result<Corpus> {
    let mut words = suite.word_vocab.clone();
    for r in test {
        for w in tokenize(&r.comment) {
            words.insert(&w);
        }
    }
    Corpus::vectorize(test, &suite.sprite_vocab, &words)
}

/// Single-row report for a trained suite on raw test records.
pub fn evaluate_suite(suite: &PredictorSuite, test: &[ExampleRecord]) -> Result<EvalReport> {
    let corpus = test_corpus_for(suite, test)?;
    let mut fresh = suite.clone();
    let distances = evaluate(&mut fresh, &corpus)?;
    let mut report = EvalReport::new("evaluate", suite.spec.seed);
    report.clusters = Some(suite.clusters());
    report.rows.push(EvalRow {
        approach: suite.spec.name(),
        mode: suite.mode.to_string(),
        example_ids: corpus.examples.iter().map(|e| e.id.clone()).collect(),
        distances,
    });
    Ok(report)
}

/// Aligned corpora plus the clustering fitted on the training side.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: AlignedCorpora,
    pub clusters: ClusterModel,
    pub fingerprints: Fingerprints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub k_max: usize,
    pub threshold: f64,
    pub distance: DistanceConfig,
    pub specs: Vec<PredictorSpec>,
}

impl ExperimentConfig {
    pub fn new(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            k_max: 10,
            threshold: DEFAULT_THRESHOLD,
            distance: DistanceConfig::default(),
            specs: PredictorSpec::standard_set(0),
        }
    }

    fn predictor_specs(&self) -> Vec<PredictorSpec> {
        let seed = rng::derive(self.seed, STREAM_PREDICTORS);
        self.specs.iter().map(|s| s.with_seed(seed)).collect()
    }
}

/// Align vocabularies and cluster the training records.
pub fn prepare(train: &[ExampleRecord], test: &[ExampleRecord], cfg: &ExperimentConfig) -> Result<Prepared> {
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if test.is_empty() {
        return Err(Error::Empty("test corpus"));
    }
    let data = align(train, test)?;
    // Cluster over the training vocabulary only: test words must not change
    // the dimensionality seen by k selection.
    let train_only = Corpus::from_records(train)?;
    let k_max = cfg.k_max.min(train_only.len());
    let clusters = cluster_corpus(&train_only, k_max, &cfg.distance, cfg.threshold, cfg.seed)?;
    Ok(Prepared { data, clusters, fingerprints: Fingerprints { train: fingerprint(train)?, test: fingerprint(test)? } })
}

/// Use an existing clustering instead of fitting one.
pub fn prepare_with_clusters(
    train: &[ExampleRecord],
    test: &[ExampleRecord],
    clusters: ClusterModel,
) -> Result<Prepared> {
    let data = align(train, test)?;
    clusters.validate_against(&data.train)?;
    if clusters.k == 0 {
        return Err(Error::Empty("cluster model has no medoids"));
    }
    Ok(Prepared { data, clusters, fingerprints: Fingerprints { train: fingerprint(train)?, test: fingerprint(test)? } })
}

fn report_for(prep: &Prepared, name: &str, seed: u64) -> EvalReport {
    EvalReport {
        clusters: Some(prep.clusters.k),
        fingerprints: Some(prep.fingerprints.clone()),
        ..EvalReport::new(name, seed)
    }
}

fn test_ids(prep: &Prepared) -> Vec<String> {
    prep.data.test.examples.iter().map(|e| e.id.clone()).collect()
}

/// Each predictor trained on the whole corpus and per cluster: rows
/// `(name, standard)`, `(name, per-cluster)` for every spec, in spec order.
pub fn standard_vs_per_cluster(prep: &Prepared, cfg: &ExperimentConfig) -> Result<EvalReport> {
    let mut report = report_for(prep, "table1", cfg.seed);
    let ids = test_ids(prep);
    for spec in cfg.predictor_specs() {
        for clusters in [None, Some(&prep.clusters)] {
            let mut suite = train_suite(&prep.data.train, clusters, &spec)?;
            let distances = evaluate(&mut suite, &prep.data.test)?;
            report.rows.push(EvalRow {
                approach: spec.name(),
                mode: suite.mode.to_string(),
                example_ids: ids.clone(),
                distances,
            });
        }
    }
    Ok(report)
}

/// Per-cluster suites routed by frame-nearest medoid vs a uniformly random
/// cluster drawn independently per test example.
pub fn true_vs_random_cluster(prep: &Prepared, cfg: &ExperimentConfig) -> Result<EvalReport> {
    let mut report = report_for(prep, "table2", cfg.seed);
    let ids = test_ids(prep);
    let k = prep.clusters.k;
    let mut draw = rng::seeded(rng::derive(cfg.seed, STREAM_RANDOM_CLUSTER));
    let random_clusters: Vec<usize> = (0..prep.data.test.len()).map(|_| draw.gen_range(0..k)).collect();
    for spec in cfg.predictor_specs() {
        let suite = train_suite(&prep.data.train, Some(&prep.clusters), &spec)?;
        let true_clusters =
            prep.data.test.examples.iter().map(|e| suite.route(&e.sprite_bag)).collect::<Result<Vec<_>>>()?;
        for (mode, routing) in [("true-cluster", &true_clusters), ("random-cluster", &random_clusters)] {
            let mut fresh = suite.clone();
            report.rows.push(EvalRow {
                approach: spec.name(),
                mode: mode.into(),
                example_ids: ids.clone(),
                distances: evaluate_routed(&mut fresh, &prep.data.test, routing)?,
            });
        }
    }
    Ok(report)
}

/// Distance from each test comment to the comment of (a) the medoid nearest
/// by frame and (b) a uniformly random medoid.
pub fn medoid_comment_baseline(prep: &Prepared, seed: u64) -> Result<EvalReport> {
    let train = &prep.data.train;
    let model = &prep.clusters;
    if model.k == 0 {
        return Err(Error::Empty("cluster model has no medoids"));
    }
    let medoid_sprites = model.medoid_sprite_bags(train);
    let medoid_words: Vec<&SparseBag> = model.medoid_indices.iter().map(|&i| &train.examples[i].comment_bag).collect();
    let mut draw = rng::seeded(rng::derive(seed, STREAM_RANDOM_MEDOID));
    let (mut nearest, mut random) = (Vec::new(), Vec::new());
    for e in &prep.data.test.examples {
        let c = assign_by_frame(&e.sprite_bag, &medoid_sprites)?;
        nearest.push(cosine_distance(medoid_words[c], &e.comment_bag)?);
        let r = draw.gen_range(0..model.k);
        random.push(cosine_distance(medoid_words[r], &e.comment_bag)?);
    }
    let mut report = report_for(prep, "medoid", seed);
    let ids = test_ids(prep);
    report.rows.push(EvalRow {
        approach: "medoid".into(),
        mode: "nearest".into(),
        example_ids: ids.clone(),
        distances: nearest,
    });
    report.rows.push(EvalRow { approach: "medoid".into(), mode: "random".into(), example_ids: ids, distances: random });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_corpus, SynthParams};

    #[test]
    fn population_std() {
        let s = summarize(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(summarize(&[0.5; 4]).std, 0.0);
    }

    fn small_prep(topics: usize, noise: f64, seed: u64) -> Prepared {
        let c = generate_synthetic_corpus(&SynthParams { topics, train_n: 60, test_n: 40, seed, noise }).unwrap();
        prepare(&c.train, &c.test, &ExperimentConfig::new(seed)).unwrap()
    }

    #[test]
    fn echo_predictor_scores_zero() {
        let prep = small_prep(3, 0.0, 5);
        let test = &prep.data.test;
        let echo: Vec<f64> =
            test.examples.iter().map(|e| cosine_distance(&e.comment_bag, &e.comment_bag).unwrap()).collect();
        assert_eq!(summarize(&echo), Summary { mean: 0.0, std: 0.0, n: test.len() });
    }

    #[test]
    fn orthogonal_predictor_scores_one() {
        let prep = small_prep(3, 0.0, 6);
        let dim = prep.data.test.word_vocab.len();
        let orth: Vec<f64> = prep
            .data
            .test
            .examples
            .iter()
            .map(|e| {
                let used: Vec<usize> = e.comment_bag.indices().collect();
                let other = (0..dim).find(|i| !used.contains(i)).unwrap();
                cosine_distance(&SparseBag::from_pairs(dim, [(other, 1.0)]).unwrap(), &e.comment_bag).unwrap()
            })
            .collect();
        let s = summarize(&orth);
        assert_eq!((s.mean, s.std), (1.0, 0.0));
    }

    #[test]
    fn table_row_counts_and_order() {
        let prep = small_prep(3, 0.1, 2);
        let cfg = ExperimentConfig::new(2);
        let t1 = standard_vs_per_cluster(&prep, &cfg).unwrap();
        let keys: Vec<(String, String)> = t1.rows.iter().map(|r| (r.approach.clone(), r.mode.clone())).collect();
        let expected: Vec<(String, String)> = ["random", "forest", "knn5", "knn10"]
            .iter()
            .flat_map(|a| [(a.to_string(), "standard".to_string()), (a.to_string(), "per-cluster".to_string())])
            .collect();
        assert_eq!(keys, expected);
        let t2 = true_vs_random_cluster(&prep, &cfg).unwrap();
        assert_eq!(t2.rows.len(), 8);
        for r in t1.rows.iter().chain(&t2.rows) {
            let s = r.summary();
            assert!((0.0..=1.0).contains(&s.mean));
            assert!(s.std >= 0.0);
            assert_eq!(s.n, 40);
        }
    }

    #[test]
    fn single_cluster_makes_modes_identical() {
        let c = generate_synthetic_corpus(&SynthParams { topics: 2, train_n: 30, test_n: 20, seed: 1, noise: 0.5 })
            .unwrap();
        let cfg = ExperimentConfig { k_max: 1, ..ExperimentConfig::new(1) };
        let prep = prepare(&c.train, &c.test, &cfg).unwrap();
        assert_eq!(prep.clusters.k, 1);
        let t1 = standard_vs_per_cluster(&prep, &cfg).unwrap();
        for pair in t1.rows.chunks(2) {
            assert_eq!(pair[0].distances, pair[1].distances, "{}", pair[0].approach);
        }
        let m = medoid_comment_baseline(&prep, 1).unwrap();
        assert_eq!(m.rows[0].distances, m.rows[1].distances);
    }

    #[test]
    fn reports_are_reproducible() {
        let cfg = ExperimentConfig::new(4);
        let a = standard_vs_per_cluster(&small_prep(3, 0.1, 4), &cfg).unwrap();
        let b = standard_vs_per_cluster(&small_prep(3, 0.1, 4), &cfg).unwrap();
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        assert_eq!(a.distances_jsonl().unwrap(), b.distances_jsonl().unwrap());
    }

    #[test]
    fn csv_layout() {
        let mut r = EvalReport::new("x", 9);
        r.rows.push(EvalRow {
            approach: "knn5".into(),
            mode: "standard".into(),
            example_ids: vec!["a".into(), "b".into()],
            distances: vec![0.25, 0.75],
        });
        let csv = String::from_utf8(r.to_csv().unwrap()).unwrap();
        assert_eq!(csv, "approach,mode,mean,std,n,seed\nknn5,standard,0.500000,0.250000,2,9\n");
        let jsonl = String::from_utf8(r.distances_jsonl().unwrap()).unwrap();
        assert_eq!(jsonl.lines().count(), 2);
        assert!(jsonl.starts_with("{\"approach\":\"knn5\",\"mode\":\"standard\",\"id\":\"a\",\"distance\":0.25}"));
    }

    #[test]
    fn saved_suite_matches_in_process_row() {
        let c = generate_synthetic_corpus(&SynthParams { topics: 3, train_n: 60, test_n: 40, seed: 8, noise: 0.1 })
            .unwrap();
        let cfg = ExperimentConfig::new(8);
        let prep = prepare(&c.train, &c.test, &cfg).unwrap();
        let t1 = standard_vs_per_cluster(&prep, &cfg).unwrap();
        let train_only = Corpus::from_records(&c.train).unwrap();
        let spec = cfg.predictor_specs()[1];
        let suite = train_suite(&train_only, Some(&prep.clusters), &spec).unwrap();
        let json = serde_json::to_string(&suite).unwrap();
        let loaded: PredictorSuite = serde_json::from_str(&json).unwrap();
        let report = evaluate_suite(&loaded, &c.test).unwrap();
        assert_eq!(report.rows[0].distances, t1.row("forest", "per-cluster").unwrap().distances);
    }

    #[test]
    fn empty_test_corpus_rejected() {
        let c = generate_synthetic_corpus(&SynthParams { topics: 2, train_n: 10, test_n: 10, seed: 0, noise: 0.1 })
            .unwrap();
        assert!(prepare(&c.train, &[], &ExperimentConfig::new(0)).is_err());
    }
}
