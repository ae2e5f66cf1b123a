//! Seeded synthetic corpora with planted topic structure.
//!
//! Every topic owns a disjoint core of sprite types and word types. Each
//! example picks a topic uniformly, then draws every sprite occurrence and
//! every word from the topic core with probability `1 - noise`, or from a pool
//! shared by all topics with probability `noise`. Core draws are Zipf-weighted
//! (weight `1 / (rank + 1)`) so each topic has a few signature sprites and words.
//!
//! Topic labels reuse the four commentary types (reaction, storytelling,
//! roleplay, asmr) suffixed with the topic index.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;

use crate::corpus::{ExampleRecord, SpriteCounts};
use crate::error::{Error, Result};
use crate::rng;

const COMMENTARY_TYPES: [&str; 4] = ["reaction", "storytelling", "roleplay", "asmr"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub topics: usize,
    pub train_n: usize,
    pub test_n: usize,
    pub seed: u64,
    pub noise: f64,
}

/// Size knobs of the generator. The defaults are what the CLI and the
/// experiment harness use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthShape {
    pub sprite_core: usize,
    pub sprite_pool: usize,
    pub word_core: usize,
    pub word_pool: usize,
    pub frames_per_example: (u32, u32),
    pub sprites_per_frame: (u32, u32),
    pub words_per_comment: (u32, u32),
}

impl Default for SynthShape {
    fn default() -> Self {
        SynthShape {
            sprite_core: 6,
            sprite_pool: 10,
            word_core: 12,
            word_pool: 30,
            frames_per_example: (2, 4),
            sprites_per_frame: (1, 3),
            words_per_comment: (4, 9),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<ExampleRecord>,
    pub test: Vec<ExampleRecord>,
}

pub fn topic_label(topic: usize) -> String {
    format!("{}-{}", COMMENTARY_TYPES[topic % COMMENTARY_TYPES.len()], topic)
}

pub fn core_sprite_name(topic: usize, j: usize) -> String {
    format!("t{topic}sprite{j}")
}

pub fn core_word(topic: usize, j: usize) -> String {
    format!("t{topic}word{j}")
}

fn pool_sprite_name(j: usize) -> String {
    format!("pool_sprite{j}")
}

fn pool_word(j: usize) -> String {
    format!("poolword{j}")
}

pub fn generate_synthetic_corpus(params: &SynthParams) -> Result<SyntheticCorpus> {
    generate_with_shape(params, &SynthShape::default())
}

pub fn generate_with_shape(params: &SynthParams, shape: &SynthShape) -> Result<SyntheticCorpus> {
    validate(params, shape)?;
    let gen = Generator::new(params, shape);
    let train = gen.examples(rng::derive(params.seed, 0), params.train_n, "train");
    let test = gen.examples(rng::derive(params.seed, 1), params.test_n, "test");
    Ok(SyntheticCorpus { train, test })
}

fn validate(p: &SynthParams, s: &SynthShape) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidParameter(m));
    if p.topics < 2 {
        return bad(format!("topics must be at least 2, got {}", p.topics));
    }
    if p.topics > p.train_n.min(p.test_n) {
        return bad(format!("topics ({}) exceeds the smaller split size ({})", p.topics, p.train_n.min(p.test_n)));
    }
    if !(0.0..=1.0).contains(&p.noise) {
        return bad(format!("noise must be in [0, 1], got {}", p.noise));
    }
    let ranges = [s.frames_per_example, s.sprites_per_frame, s.words_per_comment];
    if ranges.iter().any(|&(lo, hi)| lo == 0 || lo > hi) {
        return bad("shape ranges must satisfy 1 <= lo <= hi".into());
    }
    if s.sprite_core == 0 || s.word_core == 0 || s.sprite_pool == 0 || s.word_pool == 0 {
        return bad("core and pool sizes must be positive".into());
    }
    Ok(())
}

struct Generator<'a> {
    params: &'a SynthParams,
    shape: &'a SynthShape,
    sprite_weights: WeightedIndex<f64>,
    word_weights: WeightedIndex<f64>,
}

impl<'a> Generator<'a> {
    fn new(params: &'a SynthParams, shape: &'a SynthShape) -> Self {
        let zipf =
            |n: usize| WeightedIndex::new((0..n).map(|j| 1.0 / (j as f64 + 1.0))).expect("nonempty positive weights");
        Generator { params, shape, sprite_weights: zipf(shape.sprite_core), word_weights: zipf(shape.word_core) }
    }

    fn examples(&self, seed: u64, n: usize, prefix: &str) -> Vec<ExampleRecord> {
        let mut rng = rng::seeded(seed);
        let mut clock: u32 = 0;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let topic = rng.gen_range(0..self.params.topics);
            let (lo, hi) = self.shape.words_per_comment;
            let n_words = rng.gen_range(lo..=hi);
            let (lo, hi) = self.shape.frames_per_example;
            let n_frames = rng.gen_range(lo..=hi);
            let mut frames = Vec::with_capacity(n_frames as usize);
            let mut sprites = SpriteCounts::new();
            for _ in 0..n_frames {
                frames.push(clock);
                clock += 1;
                let (lo, hi) = self.shape.sprites_per_frame;
                for _ in 0..rng.gen_range(lo..=hi) {
                    let name = if rng.gen_bool(self.params.noise) {
                        pool_sprite_name(rng.gen_range(0..self.shape.sprite_pool))
                    } else {
                        core_sprite_name(topic, self.sprite_weights.sample(&mut rng))
                    };
                    *sprites.entry(name).or_default() += 1;
                }
            }
            // Silent gap between utterances.
            clock += rng.gen_range(0..3);

            let words: Vec<String> = (0..n_words)
                .map(|_| {
                    if rng.gen_bool(self.params.noise) {
                        pool_word(rng.gen_range(0..self.shape.word_pool))
                    } else {
                        core_word(topic, self.word_weights.sample(&mut rng))
                    }
                })
                .collect();
            out.push(ExampleRecord {
                id: format!("{prefix}{i:05}"),
                frames,
                sprites,
                comment: words.join(" "),
                topic: Some(topic_label(topic)),
            });
        }
        out
    }
}
