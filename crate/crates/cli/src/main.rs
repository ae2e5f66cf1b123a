//! `commentary`: ingest, detect, cluster, train, evaluate, synth, experiment.

mod config;
mod failure;
mod files;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commentary_core::cluster::{cluster_corpus, kmedoids, ClusterModel, DEFAULT_THRESHOLD};
use commentary_core::corpus::{
    align, corpus_to_jsonl, frames_to_jsonl, pair_frames, parse_corpus_jsonl, parse_frames_jsonl,
    records_from_pairings, Corpus, ExampleRecord,
};
use commentary_core::experiment::{
    evaluate_suite, medoid_comment_baseline, prepare, prepare_with_clusters, standard_vs_per_cluster,
    true_vs_random_cluster, EvalReport, ExperimentConfig,
};
use commentary_core::metric::DistanceConfig;
use commentary_core::predict::{train_suite, PredictorSpec, PredictorSuite, TrainingMode};
use commentary_core::synth::{generate_synthetic_corpus, SynthParams};
use commentary_core::transcript::{parse_transcript, TranscriptFormat};
use commentary_core::vision::{detect_frames_dir, Spritesheet};

use failure::{Failure, EXIT_CODES_HELP, EXIT_USAGE};
use files::{companion, read_bytes, read_json, read_text, write_atomic};

#[derive(Parser, Debug)]
#[command(name = "commentary", version, about = "Cluster paired gameplay frames and utterances, then predict comments from frames", after_help = EXIT_CODES_HELP)]
struct Cli {
    /// Cap on worker threads; outputs are identical for every value.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// File of `key = value` lines mirroring long flags; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pair a transcript with symbolic frames into a corpus JSONL.
    Ingest(IngestArgs),
    /// Detect sprites in a directory of PNG frames; writes symbolic frames JSONL.
    Detect(DetectArgs),
    /// Choose k and cluster a corpus; writes a cluster model JSON.
    Cluster(ClusterArgs),
    /// Train a predictor suite (standard or per-cluster); writes suite JSON.
    Train(TrainArgs),
    /// Score a trained suite on a test corpus; writes a report CSV.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic corpus with planted topics.
    Synth(SynthArgs),
    /// Run an experiment end to end; writes a report CSV.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// SRT or WebVTT transcript.
    #[arg(long)]
    transcript: PathBuf,
    /// Transcript format; guessed from the extension when omitted.
    #[arg(long, value_name = "srt|vtt")]
    format: Option<TranscriptFormat>,
    /// Symbolic frames JSONL: {"t": seconds, "sprites": {name: count}} per line.
    #[arg(long)]
    frames: PathBuf,
    /// Prefix of generated example ids.
    #[arg(long, default_value = "ex")]
    id_prefix: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Directory of PNG frames named by integer second (`12.png`).
    #[arg(long)]
    frames_dir: PathBuf,
    /// Directory of PNG sprite templates named by sprite; alpha 0 is a wildcard.
    #[arg(long)]
    sheet_dir: PathBuf,
    /// Largest per-channel difference still counted as a match.
    #[arg(long, default_value_t = 0)]
    tolerance: u8,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DistanceArgs {
    /// Weight of the comment distance; the frame distance gets the rest.
    #[arg(long, default_value_t = 0.75)]
    text_weight: f64,
}

impl DistanceArgs {
    fn config(&self) -> Result<DistanceConfig, Failure> {
        Ok(DistanceConfig::from_text_weight(self.text_weight)?)
    }
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Largest k considered during selection.
    #[arg(long, default_value_t = 10)]
    kmax: usize,
    /// Use exactly this many clusters instead of selecting k.
    #[arg(long, conflicts_with = "kmax")]
    k: Option<usize>,
    /// Distortion-ratio threshold below which a k counts as structure.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    distance: DistanceArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Cluster model from `cluster`; required for per-cluster mode.
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// random, forest, or knnN (e.g. knn5, knn10).
    #[arg(long)]
    predictor: PredictorSpec,
    #[arg(long, default_value = "standard", value_name = "standard|per-cluster")]
    mode: TrainingMode,
    /// Forest size.
    #[arg(long)]
    trees: Option<usize>,
    /// Forest depth limit.
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Report CSV; `<stem>.distances.jsonl` and `<stem>.meta.json` are written beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    topics: usize,
    #[arg(long)]
    train_n: usize,
    #[arg(long)]
    test_n: usize,
    #[arg(long)]
    seed: u64,
    /// Probability of drawing a sprite or word from the shared pool.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Receives train.jsonl, test.jsonl, sprites.vocab, words.vocab.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Experiment {
    /// Standard vs per-cluster training, all predictors.
    Table1,
    /// True vs random cluster routing of per-cluster suites.
    Table2,
    /// Comment of the frame-nearest medoid vs a random medoid.
    Medoid,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    which: Experiment,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Reuse a cluster model instead of clustering the training corpus.
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    kmax: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[command(flatten)]
    distance: DistanceArgs,
    /// Report CSV; `<stem>.distances.jsonl` and `<stem>.meta.json` are written beside it.
    #[arg(long)]
    out: PathBuf,
}

fn load_corpus(path: &Path) -> Result<Vec<ExampleRecord>, Failure> {
    let text = read_text(path)?;
    Ok(parse_corpus_jsonl(&text, &path.display().to_string())?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| Failure::new(failure::EXIT_INTERNAL, e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn write_report(report: &EvalReport, out: &Path) -> Result<(), Failure> {
    write_atomic(out, &report.to_csv()?)?;
    write_atomic(&companion(out, "distances.jsonl"), &report.distances_jsonl()?)?;
    write_atomic(&companion(out, "meta.json"), &report.metadata_json()?)?;
    for row in &report.rows {
        let s = row.summary();
        eprintln!("{:>8} {:<14} {:.3} ± {:.3} (n={})", row.approach, row.mode, s.mean, s.std, s.n);
    }
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<(), Failure> {
    let format = match a.format {
        Some(f) => f,
        None => {
            let ext = a.transcript.extension().and_then(|e| e.to_str()).unwrap_or_default();
            ext.parse().map_err(|_| {
                Failure::invalid(format!(
                    "{}: cannot tell the format from the extension; pass --format",
                    a.transcript.display()
                ))
            })?
        }
    };
    let cues =
        parse_transcript(&read_bytes(&a.transcript)?, format).map_err(|e| Failure::from(e).in_file(&a.transcript))?;
    let frames = parse_frames_jsonl(&read_text(&a.frames)?, &a.frames.display().to_string())?;
    let times: Vec<u32> = frames.iter().map(|f| f.t).collect();
    let summary = pair_frames(&cues, &times);
    let records = records_from_pairings(&summary.pairs, &frames, &a.id_prefix);
    write_atomic(&a.out, &corpus_to_jsonl(&records)?)?;
    eprintln!("ingest: {} examples, {} cues without frames dropped", records.len(), summary.dropped);
    Ok(())
}

fn detect(a: &DetectArgs) -> Result<(), Failure> {
    let sheet = Spritesheet::load_dir(&a.sheet_dir)?;
    let frames = detect_frames_dir(&a.frames_dir, &sheet, a.tolerance)?;
    write_atomic(&a.out, &frames_to_jsonl(&frames)?)?;
    eprintln!("detect: {} frames, {} sprite templates", frames.len(), sheet.templates().len());
    Ok(())
}

fn cluster(a: &ClusterArgs) -> Result<(), Failure> {
    let corpus = Corpus::from_records(&load_corpus(&a.corpus)?)?;
    let cfg = a.distance.config()?;
    let model = match a.k {
        Some(k) => kmedoids(&corpus, k, &cfg, a.seed)?,
        None => cluster_corpus(&corpus, a.kmax.min(corpus.len()), &cfg, a.threshold, a.seed)?,
    };
    write_json(&a.out, &model)?;
    eprintln!("cluster: {} examples, k = {}, cost {:.6}", corpus.len(), model.k, model.cost);
    Ok(())
}

fn train(a: &TrainArgs) -> Result<(), Failure> {
    let corpus = Corpus::from_records(&load_corpus(&a.corpus)?)?;
    let mut spec = a.predictor.with_seed(a.seed);
    if let Some(t) = a.trees {
        spec.trees = t;
    }
    if let Some(d) = a.max_depth {
        spec.max_depth = d;
    }
    spec.validate()?;
    let model: Option<ClusterModel> = match (a.mode, &a.clusters) {
        (TrainingMode::PerCluster, None) => return Err(Failure::invalid("per-cluster mode needs --clusters")),
        (TrainingMode::PerCluster, Some(p)) => {
            let m: ClusterModel = read_json(p)?;
            m.validate_against(&corpus).map_err(|e| Failure::from(e).in_file(p))?;
            Some(m)
        }
        (TrainingMode::Standard, _) => None,
    };
    let suite = train_suite(&corpus, model.as_ref(), &spec)?;
    write_json(&a.out, &suite)?;
    eprintln!("train: {} {} model(s) on {} examples", suite.models.len(), spec.name(), corpus.len());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<(), Failure> {
    let suite: PredictorSuite = read_json(&a.suite)?;
    let test = load_corpus(&a.test)?;
    write_report(&evaluate_suite(&suite, &test)?, &a.out)
}

fn synth(a: &SynthArgs) -> Result<(), Failure> {
    let corpus = generate_synthetic_corpus(&SynthParams {
        topics: a.topics,
        train_n: a.train_n,
        test_n: a.test_n,
        seed: a.seed,
        noise: a.noise,
    })?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Failure::io(&a.out_dir, e))?;
    let aligned = align(&corpus.train, &corpus.test)?;
    write_atomic(&a.out_dir.join("train.jsonl"), &corpus_to_jsonl(&corpus.train)?)?;
    write_atomic(&a.out_dir.join("test.jsonl"), &corpus_to_jsonl(&corpus.test)?)?;
    write_atomic(&a.out_dir.join("sprites.vocab"), aligned.train.sprite_vocab.to_lines().as_bytes())?;
    write_atomic(&a.out_dir.join("words.vocab"), aligned.train.word_vocab.to_lines().as_bytes())?;
    eprintln!("synth: {} train / {} test examples in {}", corpus.train.len(), corpus.test.len(), a.out_dir.display());
    Ok(())
}

fn experiment(a: &ExperimentArgs) -> Result<(), Failure> {
    let train = load_corpus(&a.train)?;
    let test = load_corpus(&a.test)?;
    let cfg = ExperimentConfig {
        k_max: a.kmax,
        threshold: a.threshold,
        distance: a.distance.config()?,
        ..ExperimentConfig::new(a.seed)
    };
    let prep = match &a.clusters {
        Some(p) => prepare_with_clusters(&train, &test, read_json(p)?).map_err(|e| Failure::from(e).in_file(p))?,
        None => prepare(&train, &test, &cfg)?,
    };
    let report = match a.which {
        Experiment::Table1 => standard_vs_per_cluster(&prep, &cfg)?,
        Experiment::Table2 => true_vs_random_cluster(&prep, &cfg)?,
        Experiment::Medoid => medoid_comment_baseline(&prep, a.seed)?,
    };
    eprintln!("experiment: k = {}", prep.clusters.k);
    write_report(&report, &a.out)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::new(EXIT_USAGE, "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(failure::EXIT_INTERNAL, e.to_string()))?;
    }
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Detect(a) => detect(a),
        Command::Cluster(a) => cluster(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Synth(a) => synth(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {f}");
            return ExitCode::from(f.code);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
