//! Character-level corpus ingestion.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::hmm::SequenceDataset;
use crate::rng;

/// Character vocabulary with contiguous ids in code-point order.
#[derive(Debug, Clone, PartialEq)]
pub struct CharVocab {
    glyphs: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharVocab {
    /// Vocabulary from an explicit glyph list; duplicates are rejected.
    pub fn from_glyphs(glyphs: Vec<char>) -> Result<Self> {
        if glyphs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let index: HashMap<char, usize> = glyphs.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        if index.len() != glyphs.len() {
            return Err(Error::InvalidDataset("duplicate glyph in vocabulary".into()));
        }
        Ok(CharVocab { glyphs, index })
    }

    pub fn glyphs(&self) -> &[char] {
        &self.glyphs
    }

    pub fn m(&self) -> usize {
        self.glyphs.len()
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars().map(|c| self.id(c).ok_or(Error::UnknownGlyph(c))).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        ids.iter()
            .map(|&i| {
                self.glyphs
                    .get(i)
                    .copied()
                    .ok_or(Error::ObservationOutOfRange { obs: i, m: self.m() })
            })
            .collect()
    }

    pub fn metadata(&self) -> BTreeMap<usize, String> {
        self.glyphs
            .iter()
            .enumerate()
            .map(|(i, g)| (i, g.to_string()))
            .collect()
    }
}

pub fn build_vocab(corpus: &str) -> Result<CharVocab> {
    let set: BTreeSet<char> = corpus.chars().collect();
    CharVocab::from_glyphs(set.into_iter().collect())
}

/// Windows of `t` characters starting every `stride` characters; a trailing
/// partial window is dropped.
pub fn chunk(corpus: &str, vocab: &CharVocab, t: usize, stride: usize) -> Result<SequenceDataset> {
    if t < 2 || stride == 0 {
        return Err(Error::InvalidConfig(format!(
            "need t >= 2 and stride >= 1, got t={t} stride={stride}"
        )));
    }
    let ids = vocab.encode(corpus)?;
    if ids.len() < t {
        return Err(Error::CorpusTooShort { len: ids.len(), t });
    }
    let count = (ids.len() - t) / stride + 1;
    let sequences = (0..count).map(|i| ids[i * stride..i * stride + t].to_vec()).collect();
    Ok(SequenceDataset::new(vocab.m(), sequences)?.with_metadata(vocab.metadata()))
}

/// Number of validation sequences: `ceil(fraction * n)`, kept within `[1, n-1]`.
pub fn val_count(n: usize, fraction: f64) -> usize {
    // Guard against 0.1 * 4000 landing a hair above 400.
    let raw = (fraction * n as f64 - 1e-9).ceil() as usize;
    raw.clamp(1, n - 1)
}

/// Seeded shuffle of sequence indices; the last `ceil(fraction * N)` go to validation.
pub fn split(ds: &SequenceDataset, val_fraction: f64, seed: u64) -> Result<(SequenceDataset, SequenceDataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "val_fraction must be in (0,1), got {val_fraction}"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::TooFewSequences(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0));
    let cut = n - val_count(n, val_fraction);
    let pick = |idx: &[usize]| -> Result<SequenceDataset> {
        let seqs = idx.iter().map(|&i| ds.sequences()[i].clone()).collect();
        let out = SequenceDataset::new(ds.m(), seqs)?;
        Ok(match ds.metadata() {
            Some(meta) => out.with_metadata(meta.clone()),
            None => out,
        })
    };
    Ok((pick(&order[..cut])?, pick(&order[cut..])?))
}
