//! Byte-pair-encoding subword vocabulary with a word-start marker.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const NUM_SPECIALS: usize = 4;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Marks the first piece of every word.
pub const WORD_START: char = '\u{2581}';

#[derive(Serialize, Deserialize)]
struct BpeData {
    tokens: Vec<String>,
    merges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "BpeData", into = "BpeData")]
pub struct BpeVocab {
    tokens: Vec<String>,
    merges: Vec<(String, String)>,
    ids: HashMap<String, usize>,
    ranks: HashMap<(String, String), usize>,
}

impl From<BpeData> for BpeVocab {
    fn from(d: BpeData) -> Self {
        BpeVocab::from_parts(d.tokens, d.merges)
    }
}

impl From<BpeVocab> for BpeData {
    fn from(v: BpeVocab) -> Self {
        BpeData { tokens: v.tokens, merges: v.merges }
    }
}

fn word_symbols(word: &str) -> Vec<String> {
    std::iter::once(WORD_START)
        .chain(word.chars())
        .map(|c| c.to_string())
        .collect()
}

impl BpeVocab {
    fn from_parts(tokens: Vec<String>, merges: Vec<(String, String)>) -> Self {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let ranks = merges.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        BpeVocab { tokens, merges, ids, ranks }
    }

    /// Standard merge-count training over whitespace-separated words. The
    /// most frequent adjacent pair is merged first; ties go to the
    /// lexicographically smallest pair. Training stops at `vocab_size` tokens
    /// or when no pair occurs at least twice.
    pub fn train<S: AsRef<str>>(corpus: &[S], vocab_size: usize) -> Result<Self> {
        let mut word_freq: BTreeMap<&str, u64> = BTreeMap::new();
        for line in corpus {
            for w in line.as_ref().split_whitespace() {
                *word_freq.entry(w).or_insert(0) += 1;
            }
        }
        if word_freq.is_empty() {
            return Err(Error::Data("cannot train BPE on an empty corpus".into()));
        }
        let mut alphabet = BTreeSet::new();
        alphabet.insert(WORD_START.to_string());
        for w in word_freq.keys() {
            for c in w.chars() {
                alphabet.insert(c.to_string());
            }
        }
        let base = NUM_SPECIALS + alphabet.len();
        if vocab_size < base {
            return Err(Error::Config(format!(
                "BPE vocabulary size {vocab_size} is smaller than specials plus alphabet ({base})"
            )));
        }
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(alphabet);
        let mut words: Vec<(Vec<String>, u64)> =
            word_freq.into_iter().map(|(w, f)| (word_symbols(w), f)).collect();
        let mut merges = Vec::new();
        while tokens.len() < vocab_size {
            let mut counts: HashMap<(&str, &str), u64> = HashMap::new();
            for (syms, f) in &words {
                for p in syms.windows(2) {
                    *counts.entry((p[0].as_str(), p[1].as_str())).or_insert(0) += f;
                }
            }
            let best = counts
                .into_iter()
                .filter(|&(_, c)| c >= 2)
                .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
            let Some(((a, b), _)) = best else { break };
            let pair = (a.to_string(), b.to_string());
            let joined = format!("{}{}", pair.0, pair.1);
            for (syms, _) in words.iter_mut() {
                merge_in_place(syms, &pair.0, &pair.1, &joined);
            }
            if !tokens.contains(&joined) {
                tokens.push(joined);
            }
            merges.push(pair);
        }
        Ok(BpeVocab::from_parts(tokens, merges))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(|s| s.as_str())
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    /// Segment one word (no whitespace) into piece strings.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut syms = word_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0].clone(), p[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (a, b) = &self.merges[rank];
            let joined = format!("{a}{b}");
            merge_in_place(&mut syms, a, b, &joined);
        }
        syms
    }

    pub fn encode_word(&self, word: &str) -> Vec<usize> {
        self.segment_word(word)
            .iter()
            .map(|p| self.id(p).unwrap_or(UNK))
            .collect()
    }

    /// Encode a whitespace-tokenized line. Characters never seen in training
    /// map to UNK.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.split_whitespace().flat_map(|w| self.encode_word(w)).collect()
    }

    /// Inverse of `encode`; specials other than UNK are dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        let mut s = String::new();
        for &id in ids {
            match id {
                PAD | BOS | EOS => {}
                UNK => s.push('?'),
                _ => {
                    if let Some(t) = self.tokens.get(id) {
                        s.push_str(t);
                    }
                }
            }
        }
        s.replace(WORD_START, " ").trim_start().to_string()
    }
}

fn merge_in_place(syms: &mut Vec<String>, a: &str, b: &str, joined: &str) {
    let mut i = 0;
    while i + 1 < syms.len() {
        if syms[i] == a && syms[i + 1] == b {
            syms[i] = joined.to_string();
            syms.remove(i + 1);
        }
        i += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_merge_on_repeated_char() {
        // Alphabet {WORD_START, a} plus four specials; one merge allowed.
        let v = BpeVocab::train(&["aaaa"], NUM_SPECIALS + 2 + 1).unwrap();
        assert_eq!(v.merges(), &[("a".to_string(), "a".to_string())]);
        assert_eq!(v.segment_word("aaaa"), vec!["\u{2581}", "aa", "aa"].iter().map(|s| s.to_string()).collect::<Vec<_>>());
    }

    #[test]
    fn hand_simulated_merge_sequence() {
        // words: "ab" x2, "abc" x1 -> pairs (_,a):3 (a,b):3 (b,c):1.
        // Tie between (_,a) and (a,b) -> lexicographically smaller first:
        // "\u{2581}" sorts after "a", so (a,b) wins. Then (_,ab):3.
        let v = BpeVocab::train(&["ab ab abc"], 100).unwrap();
        let m: Vec<(String, String)> = v.merges().to_vec();
        assert_eq!(m[0], ("a".into(), "b".into()));
        assert_eq!(m[1], ("\u{2581}".into(), "ab".into()));
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn vocab_smaller_than_alphabet_is_error() {
        assert!(BpeVocab::train(&["abc"], 5).is_err());
        assert!(BpeVocab::train::<&str>(&[], 50).is_err());
    }

    #[test]
    fn round_trip_and_unknown() {
        let v = BpeVocab::train(&["the cat sat on the mat", "a cat"], 40).unwrap();
        for s in ["the cat", "mat on a cat", "tat"] {
            let ids = v.encode(s);
            assert_eq!(v.decode(&ids), s);
            assert_eq!(v.encode(&v.decode(&ids)), ids);
        }
        assert!(v.encode("xyz").contains(&UNK));
    }

    #[test]
    fn serde_round_trip() {
        let v = BpeVocab::train(&["hello hello world"], 30).unwrap();
        let js = serde_json::to_string(&v).unwrap();
        let back: BpeVocab = serde_json::from_str(&js).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.encode("hello"), v.encode("hello"));
    }
}
