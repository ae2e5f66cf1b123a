//! Paired frame/utterance examples and their on-disk JSONL forms.
//!
//! Two line-oriented formats are handled here:
//!
//! * symbolic frames, `{"t": 12, "sprites": {"goomba": 2}}`, one frame per line;
//! * corpus records, `{"id": .., "frames": [..], "sprites": {..}, "comment": ".."}`,
//!   one paired example per line (an optional `"topic"` carries synthetic labels).
//!
//! Records hold names; [`Corpus`] holds the vectorized examples and the
//! vocabularies they index into.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::transcript::TranscriptCue;
use crate::vocab::{bag_of, bag_of_counts, combine_bags, OovPolicy, SparseBag, Vocabulary};

pub type SpriteCounts = BTreeMap<String, u32>;

/// Lowercase, split on anything that is not a letter, digit or apostrophe.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// One frame sampled on the 1 FPS grid, as symbolic sprite counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: u32,
    pub sprites: SpriteCounts,
}

/// A cue and the frame timestamps it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct CuePairing {
    pub cue: TranscriptCue,
    pub frame_timestamps: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingSummary {
    pub pairs: Vec<CuePairing>,
    /// Cues that covered no existing frame.
    pub dropped: usize,
}

/// Pair each cue `[s, e]` with every existing frame `t` where `floor(s) <= t <= ceil(e)`.
pub fn pair_frames(cues: &[TranscriptCue], frame_times: &[u32]) -> PairingSummary {
    let mut times: Vec<u32> = frame_times.to_vec();
    times.sort_unstable();
    times.dedup();
    let mut pairs = Vec::new();
    let mut dropped = 0;
    for cue in cues {
        let lo = cue.start_ms / 1000;
        let hi = cue.end_ms.div_ceil(1000);
        let from = times.partition_point(|&t| u64::from(t) < lo);
        let to = times.partition_point(|&t| u64::from(t) <= hi);
        if from >= to {
            dropped += 1;
            continue;
        }
        pairs.push(CuePairing { cue: cue.clone(), frame_timestamps: times[from..to].to_vec() });
    }
    PairingSummary { pairs, dropped }
}

/// Serialized form of one paired example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub frames: Vec<u32>,
    pub sprites: SpriteCounts,
    pub comment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

impl ExampleRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.frames.is_empty() {
            return Err(format!("example {:?} has no frames", self.id));
        }
        if self.frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(format!("example {:?} frame timestamps are not strictly increasing", self.id));
        }
        Ok(())
    }
}

/// Turn paired cues into example records, summing per-frame sprite counts.
pub fn records_from_pairings(pairs: &[CuePairing], frames: &[FrameRecord], id_prefix: &str) -> Vec<ExampleRecord> {
    let by_time: HashMap<u32, &FrameRecord> = frames.iter().map(|f| (f.t, f)).collect();
    pairs
        .iter()
        .enumerate()
        .map(|(n, p)| {
            let mut sprites = SpriteCounts::new();
            for t in &p.frame_timestamps {
                if let Some(frame) = by_time.get(t) {
                    for (name, &count) in &frame.sprites {
                        if count > 0 {
                            *sprites.entry(name.clone()).or_default() += count;
                        }
                    }
                }
            }
            ExampleRecord {
                id: format!("{id_prefix}{n:05}"),
                frames: p.frame_timestamps.clone(),
                sprites,
                comment: p.cue.text.clone(),
                topic: None,
            }
        })
        .collect()
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str, source_name: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| Error::schema(source_name, n + 1, e.to_string()))?;
        out.push(value);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Parse symbolic-frame JSONL. Timestamps must be unique.
pub fn parse_frames_jsonl(text: &str, source_name: &str) -> Result<Vec<FrameRecord>> {
    let frames: Vec<FrameRecord> = parse_jsonl(text, source_name)?;
    let mut seen = HashMap::new();
    for (n, f) in frames.iter().enumerate() {
        if let Some(prev) = seen.insert(f.t, n) {
            return Err(Error::schema(
                source_name,
                n + 1,
                format!("frame timestamp {} repeats record {}", f.t, prev + 1),
            ));
        }
    }
    Ok(frames)
}

pub fn frames_to_jsonl(frames: &[FrameRecord]) -> Result<Vec<u8>> {
    write_jsonl(frames)
}

pub fn parse_corpus_jsonl(text: &str, source_name: &str) -> Result<Vec<ExampleRecord>> {
    let records: Vec<ExampleRecord> = parse_jsonl(text, source_name)?;
    let mut ids = HashMap::new();
    for (n, r) in records.iter().enumerate() {
        r.validate().map_err(|m| Error::schema(source_name, n + 1, m))?;
        if ids.insert(r.id.as_str(), n).is_some() {
            return Err(Error::schema(source_name, n + 1, format!("duplicate example id {:?}", r.id)));
        }
    }
    Ok(records)
}

pub fn corpus_to_jsonl(records: &[ExampleRecord]) -> Result<Vec<u8>> {
    write_jsonl(records)
}

/// SHA-256 of the canonical JSONL serialization.
pub fn fingerprint(records: &[ExampleRecord]) -> Result<String> {
    let bytes = corpus_to_jsonl(records)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// One utterance with its frames, vectorized.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedExample {
    pub id: String,
    pub frame_timestamps: Vec<u32>,
    pub sprite_bag: SparseBag,
    pub comment_text: String,
    pub comment_bag: SparseBag,
    pub topic_label: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub examples: Vec<PairedExample>,
    pub sprite_vocab: Vocabulary,
    pub word_vocab: Vocabulary,
    /// Out-of-vocabulary sprite and word occurrences dropped while vectorizing.
    pub dropped_sprites: usize,
    pub dropped_words: usize,
}

impl Corpus {
    /// Vectorize records against fixed vocabularies; unknown tokens are dropped.
    pub fn vectorize(records: &[ExampleRecord], sprite_vocab: &Vocabulary, word_vocab: &Vocabulary) -> Result<Corpus> {
        let mut examples = Vec::with_capacity(records.len());
        let (mut dropped_sprites, mut dropped_words) = (0, 0);
        for r in records {
            let sprites = bag_of_counts(r.sprites.iter().map(|(k, &v)| (k, v)), sprite_vocab, OovPolicy::Drop)?;
            let words = bag_of(tokenize(&r.comment), word_vocab, OovPolicy::Drop)?;
            dropped_sprites += sprites.dropped;
            dropped_words += words.dropped;
            examples.push(PairedExample {
                id: r.id.clone(),
                frame_timestamps: r.frames.clone(),
                sprite_bag: sprites.bag,
                comment_text: r.comment.clone(),
                comment_bag: words.bag,
                topic_label: r.topic.clone(),
            });
        }
        Ok(Corpus {
            examples,
            sprite_vocab: sprite_vocab.clone(),
            word_vocab: word_vocab.clone(),
            dropped_sprites,
            dropped_words,
        })
    }

    /// Vectorize with vocabularies built from the records themselves.
    pub fn from_records(records: &[ExampleRecord]) -> Result<Corpus> {
        let sprite_vocab = sprite_vocab_of(records);
        let word_vocab = word_vocab_of([records]);
        Self::vectorize(records, &sprite_vocab, &word_vocab)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Combined dimensionality of the two vocabularies.
    pub fn dimensionality(&self) -> usize {
        self.sprite_vocab.len() + self.word_vocab.len()
    }
}

/// Sprite names in first-appearance order (names sorted within each record).
pub fn sprite_vocab_of(records: &[ExampleRecord]) -> Vocabulary {
    crate::vocab::build_vocab(records.iter().map(|r| r.sprites.keys()))
}

/// Comment tokens in first-appearance order across all record sets.
pub fn word_vocab_of<'a, I>(sets: I) -> Vocabulary
where
    I: IntoIterator<Item = &'a [ExampleRecord]>,
{
    crate::vocab::build_vocab(sets.into_iter().flat_map(|s| s.iter().map(|r| tokenize(&r.comment))))
}

/// Train and test corpora sharing vocabularies.
///
/// The sprite vocabulary comes from the training records only; test-only
/// sprites are dropped. The word vocabulary lists every training word first,
/// then test-only words, so a model trained on the prefix is still scored
/// against words it could never emit.
#[derive(Debug, Clone)]
pub struct AlignedCorpora {
    pub train: Corpus,
    pub test: Corpus,
}

pub fn align(train: &[ExampleRecord], test: &[ExampleRecord]) -> Result<AlignedCorpora> {
    let sprite_vocab = sprite_vocab_of(train);
    let word_vocab = word_vocab_of([train, test]);
    Ok(AlignedCorpora {
        train: Corpus::vectorize(train, &sprite_vocab, &word_vocab)?,
        test: Corpus::vectorize(test, &sprite_vocab, &word_vocab)?,
    })
}

/// Build an example whose sprite bag is the sum of its per-frame bags.
pub fn example_from_frames(
    id: &str,
    frames: &[(u32, SparseBag)],
    comment: &str,
    sprite_vocab: &Vocabulary,
    word_vocab: &Vocabulary,
) -> Result<PairedExample> {
    let sprite_bag = combine_bags(sprite_vocab.len(), frames.iter().map(|(_, b)| b))?;
    let comment_bag = bag_of(tokenize(comment), word_vocab, OovPolicy::Drop)?.bag;
    Ok(PairedExample {
        id: id.to_owned(),
        frame_timestamps: frames.iter().map(|(t, _)| *t).collect(),
        sprite_bag,
        comment_text: comment.to_owned(),
        comment_bag,
        topic_label: None,
    })
}
