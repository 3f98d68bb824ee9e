//! Word-level tokenizer with fixed special ids and a sorted open vocabulary.

use serde::{Deserialize, Serialize};

use crate::scenegen::normalize_words;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const EOS: u32 = 2;
pub const MASK: u32 = 3;
const N_SPECIALS: usize = 4;

/// Token table: four fixed specials, then the corpus words sorted
/// lexicographically, so the same word set always yields the same ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
}

/// A text encoded to a fixed length: `n_real` word tokens, an end marker,
/// then padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<u32>,
    /// Index of the end marker (== `n_real`, both capped by the length).
    pub eos_pos: usize,
    pub n_real: usize,
}

impl Vocabulary {
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Vocabulary {
        let mut w: Vec<String> = words.into_iter().collect();
        w.sort();
        w.dedup();
        let mut all = vec![
            "<pad>".to_string(),
            "<unk>".to_string(),
            "<eos>".to_string(),
            "<mask>".to_string(),
        ];
        all.extend(w);
        Vocabulary { words: all }
    }

    pub fn size(&self) -> usize {
        self.words.len()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn id_of(&self, word: &str) -> Option<u32> {
        self.words[N_SPECIALS..]
            .binary_search_by(|w| w.as_str().cmp(word))
            .ok()
            .map(|i| (i + N_SPECIALS) as u32)
    }

    /// Ids of the non-special words, for sampling replacement tokens.
    pub fn word_id_range(&self) -> std::ops::Range<u32> {
        N_SPECIALS as u32..self.size() as u32
    }

    /// Encodes to exactly `max_len` ids: words (unknowns become `<unk>`),
    /// an `<eos>`, then `<pad>`. Texts longer than `max_len - 1` words are
    /// truncated so the end marker always fits.
    pub fn encode(&self, text: &str, max_len: usize) -> Encoded {
        assert!(max_len >= 2, "need room for at least one word and the end marker");
        let mut ids: Vec<u32> = normalize_words(text)
            .iter()
            .take(max_len - 1)
            .map(|w| self.id_of(w).unwrap_or(UNK))
            .collect();
        let n_real = ids.len();
        ids.push(EOS);
        ids.resize(max_len, PAD);
        Encoded {
            ids,
            eos_pos: n_real,
            n_real,
        }
    }
}
