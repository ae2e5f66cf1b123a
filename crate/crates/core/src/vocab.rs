//! Vocabularies and sparse count vectors ("bags") over them.
//!
//! Both frames (bags of sprites) and utterances (bags of words) use the same
//! representation: a [`SparseBag`] whose indices point into a [`Vocabulary`].

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of unique tokens. A token's index is its position.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let mut vocab = Vocabulary::default();
        for t in tokens {
            vocab.insert(&t);
        }
        vocab
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of `token`, appending it if unseen.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), i);
        i
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; line number is the index.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let mut vocab = Vocabulary::new();
        for (n, line) in text.lines().enumerate() {
            if vocab.lookup(line).is_some() {
                return Err(Error::schema("vocabulary", n + 1, format!("duplicate token {line:?}")));
            }
            vocab.insert(line);
        }
        Ok(vocab)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_lines(&text)
    }
}

/// Build a vocabulary from one or more token streams, in first-appearance order.
pub fn build_vocab<S, I, T>(streams: S) -> Vocabulary
where
    S: IntoIterator<Item = I>,
    I: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    let mut vocab = Vocabulary::new();
    for stream in streams {
        for token in stream {
            vocab.insert(token.as_ref());
        }
    }
    vocab
}

/// Nonnegative sparse vector over a vocabulary of size `dim`.
///
/// Entries are kept sorted by index and zero values are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseBag {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl SparseBag {
    pub fn empty(dim: usize) -> Self {
        SparseBag { dim, entries: Vec::new() }
    }

    /// Accumulate `(index, value)` pairs. Repeated indices are summed.
    pub fn from_pairs<I>(dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for (i, v) in pairs {
            if i >= dim {
                return Err(Error::InvalidParameter(format!("bag index {i} out of range for dimension {dim}")));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "bag value {v} at index {i} is not a finite nonnegative number"
                )));
            }
            entries.push((i as u32, v));
        }
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        Ok(SparseBag { dim, entries: merged })
    }

    /// Build from a dense slice, dropping zeros.
    pub fn from_dense(values: &[f64]) -> Result<Self> {
        Self::from_pairs(values.len(), values.iter().copied().enumerate().filter(|&(_, v)| v != 0.0))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored (nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&(index as u32), |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|&(i, v)| (i as usize, v))
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(i, _)| i as usize)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// Dot product. Fails if the dimensions differ.
    pub fn dot(&self, other: &SparseBag) -> Result<f64> {
        self.check_dim(other)?;
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        let mut acc = 0.0;
        while let (Some(&&(i, x)), Some(&&(j, y))) = (a.peek(), b.peek()) {
            match i.cmp(&j) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    acc += x * y;
                    a.next();
                    b.next();
                }
            }
        }
        Ok(acc)
    }

    pub fn scaled(&self, factor: f64) -> Result<SparseBag> {
        SparseBag::from_pairs(self.dim, self.iter().map(|(i, v)| (i, v * factor)))
    }

    /// Set semantics: every present index gets value 1.
    pub fn binarized(&self) -> SparseBag {
        SparseBag { dim: self.dim, entries: self.entries.iter().map(|&(i, _)| (i, 1.0)).collect() }
    }

    /// Re-express the bag over a vocabulary that extends the current one.
    pub fn with_dim(&self, dim: usize) -> Result<SparseBag> {
        if let Some(&(last, _)) = self.entries.last() {
            if last as usize >= dim {
                return Err(Error::VocabularyMismatch { left: self.dim, right: dim });
            }
        }
        Ok(SparseBag { dim, entries: self.entries.clone() })
    }

    pub(crate) fn check_dim(&self, other: &SparseBag) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::VocabularyMismatch { left: self.dim, right: other.dim });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    #[default]
    Drop,
    Error,
}

/// A bag together with the number of out-of-vocabulary occurrences dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Bagged {
    pub bag: SparseBag,
    pub dropped: usize,
}

/// Count tokens into a bag over `vocab`.
pub fn bag_of<I, T>(tokens: I, vocab: &Vocabulary, oov: OovPolicy) -> Result<Bagged>
where
    I: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    bag_of_counts(tokens.into_iter().map(|t| (t, 1u32)), vocab, oov)
}

/// Accumulate a name→count map (e.g. a sprite-count record) into a bag over `vocab`.
pub fn bag_of_counts<I, T>(counts: I, vocab: &Vocabulary, oov: OovPolicy) -> Result<Bagged>
where
    I: IntoIterator<Item = (T, u32)>,
    T: AsRef<str>,
{
    let mut pairs = Vec::new();
    let mut dropped = 0usize;
    for (token, count) in counts {
        let token = token.as_ref();
        match vocab.lookup(token) {
            Some(i) => pairs.push((i, f64::from(count))),
            None => match oov {
                OovPolicy::Drop => dropped += count as usize,
                OovPolicy::Error => return Err(Error::OutOfVocabulary(token.to_owned())),
            },
        }
    }
    Ok(Bagged { bag: SparseBag::from_pairs(vocab.len(), pairs)?, dropped })
}

/// Element-wise sum of bags over a vocabulary of size `dim`.
pub fn combine_bags<'a, I>(dim: usize, bags: I) -> Result<SparseBag>
where
    I: IntoIterator<Item = &'a SparseBag>,
{
    let mut pairs = Vec::new();
    for bag in bags {
        if bag.dim() != dim {
            return Err(Error::VocabularyMismatch { left: dim, right: bag.dim() });
        }
        pairs.extend(bag.iter());
    }
    SparseBag::from_pairs(dim, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bag(dim: usize, pairs: &[(usize, f64)]) -> SparseBag {
        SparseBag::from_pairs(dim, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn build_vocab_first_appearance() {
        assert_eq!(build_vocab([["a", "b", "a"]]).tokens(), ["a", "b"]);
        let v = build_vocab(vec![vec!["x"], vec!["y", "x"]]);
        assert_eq!(v.tokens(), ["x", "y"]);
        assert!(build_vocab(Vec::<Vec<&str>>::new()).is_empty());
    }

    #[test]
    fn lookup_and_name_are_inverse() {
        let v = build_vocab([["mario", "goomba", "koopa"]]);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.lookup(t), Some(i));
            assert_eq!(v.name(i), Some(t.as_str()));
        }
        assert_eq!(v.lookup("luigi"), None);
    }

    #[test]
    fn vocab_file_round_trip_and_duplicates() {
        let v = build_vocab([["a", "it's", "b"]]);
        assert_eq!(Vocabulary::from_lines(&v.to_lines()).unwrap(), v);
        assert!(matches!(Vocabulary::from_lines("a\nb\na\n"), Err(Error::Schema { line: 3, .. })));
    }

    #[test]
    fn bag_of_counts_tokens() {
        let v = build_vocab([["mario", "goomba"]]);
        let b = bag_of(["mario", "mario", "goomba"], &v, OovPolicy::Drop).unwrap();
        assert_eq!(b.bag, bag(2, &[(0, 2.0), (1, 1.0)]));
        assert_eq!(b.dropped, 0);

        let b = bag_of(Vec::<&str>::new(), &v, OovPolicy::Drop).unwrap();
        assert!(b.bag.is_empty());
    }

    #[test]
    fn bag_of_oov() {
        let v = build_vocab([["mario"]]);
        let b = bag_of(["luigi"], &v, OovPolicy::Drop).unwrap();
        assert!(b.bag.is_empty());
        assert_eq!(b.dropped, 1);
        assert!(matches!(
            bag_of(["luigi"], &v, OovPolicy::Error),
            Err(Error::OutOfVocabulary(t)) if t == "luigi"
        ));
    }

    #[test]
    fn combine_examples() {
        let combined = combine_bags(4, [&bag(4, &[(0, 1.0)]), &bag(4, &[(0, 2.0), (3, 1.0)])]).unwrap();
        assert_eq!(combined, bag(4, &[(0, 3.0), (3, 1.0)]));
        let b = bag(4, &[(1, 2.0)]);
        assert_eq!(combine_bags(4, [&b]).unwrap(), b);
        assert!(combine_bags(4, []).unwrap().is_empty());
        assert!(matches!(combine_bags(4, [&bag(3, &[(0, 1.0)])]), Err(Error::VocabularyMismatch { .. })));
    }

    #[test]
    fn zero_entries_are_not_stored() {
        let b = bag(3, &[(0, 0.0), (2, 1.0)]);
        assert_eq!(b.nnz(), 1);
        assert!(SparseBag::from_pairs(3, [(3, 1.0)]).is_err());
        assert!(SparseBag::from_pairs(3, [(0, -1.0)]).is_err());
    }

    #[test]
    fn with_dim_extends_only() {
        let b = bag(3, &[(2, 1.0)]);
        assert_eq!(b.with_dim(5).unwrap().dim(), 5);
        assert!(b.with_dim(2).is_err());
    }

    fn arb_bag(dim: usize) -> impl Strategy<Value = SparseBag> {
        proptest::collection::vec((0..dim, 1u32..5), 0..8)
            .prop_map(move |p| SparseBag::from_pairs(dim, p.into_iter().map(|(i, c)| (i, f64::from(c)))).unwrap())
    }

    proptest! {
        #[test]
        fn combine_is_commutative_and_associative(a in arb_bag(6), b in arb_bag(6), c in arb_bag(6)) {
            let ab = combine_bags(6, [&a, &b]).unwrap();
            let ba = combine_bags(6, [&b, &a]).unwrap();
            prop_assert_eq!(&ab, &ba);
            let left = combine_bags(6, [&ab, &c]).unwrap();
            let bc = combine_bags(6, [&b, &c]).unwrap();
            let right = combine_bags(6, [&a, &bc]).unwrap();
            prop_assert_eq!(&left, &right);
            let with_empty = combine_bags(6, [&a, &SparseBag::empty(6)]).unwrap();
            prop_assert_eq!(&with_empty, &a);
        }

        #[test]
        fn bag_of_preserves_total(tokens in proptest::collection::vec(0usize..5, 0..30)) {
            let names: Vec<String> = tokens.iter().map(|i| format!("t{i}")).collect();
            let vocab = build_vocab([names.iter()]);
            let b = bag_of(names.iter(), &vocab, OovPolicy::Error).unwrap();
            prop_assert_eq!(b.bag.total() as usize, names.len());
        }
    }
}
