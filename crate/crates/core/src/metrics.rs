//! ChrF++: character n-gram F-score extended with word n-grams.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChrfParams {
    pub char_n: usize,
    pub word_n: usize,
    pub beta: f64,
    /// Keep whitespace inside character n-grams. Off by default.
    pub whitespace: bool,
}

impl Default for ChrfParams {
    fn default() -> Self {
        ChrfParams { char_n: 6, word_n: 2, beta: 2.0, whitespace: false }
    }
}

impl ChrfParams {
    pub fn validate(&self) -> Result<()> {
        if self.char_n == 0 && self.word_n == 0 {
            return Err(Error::Config("chrF needs at least one n-gram order".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("chrF beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    fn orders(&self) -> usize {
        self.char_n + self.word_n
    }
}

/// Per-order n-gram counts: hypothesis total, reference total, clipped matches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OrderStats {
    pub hyp: u64,
    pub reference: u64,
    pub matched: u64,
}

impl OrderStats {
    fn add(&mut self, other: &OrderStats) {
        self.hyp += other.hyp;
        self.reference += other.reference;
        self.matched += other.matched;
    }
}

fn ngram_counts<T: Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut counts = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn order_stats<T: Hash + Eq + Clone>(hyp: &[T], reference: &[T], n: usize) -> OrderStats {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matched = h
        .iter()
        .map(|(k, &c)| r.get(k).map_or(0, |&rc| c.min(rc)))
        .sum();
    OrderStats {
        hyp: h.values().sum(),
        reference: r.values().sum(),
        matched,
    }
}

/// N-gram statistics for one sentence pair: char orders 1..=char_n, then word
/// orders 1..=word_n.
pub fn sentence_stats(hypothesis: &str, reference: &str, params: &ChrfParams) -> Vec<OrderStats> {
    let chars = |s: &str| -> Vec<char> {
        if params.whitespace {
            s.chars().collect()
        } else {
            s.chars().filter(|c| !c.is_whitespace()).collect()
        }
    };
    let (hc, rc) = (chars(hypothesis), chars(reference));
    let hw: Vec<&str> = hypothesis.split_whitespace().collect();
    let rw: Vec<&str> = reference.split_whitespace().collect();
    let mut out = Vec::with_capacity(params.orders());
    for n in 1..=params.char_n {
        out.push(order_stats(&hc, &rc, n));
    }
    for n in 1..=params.word_n {
        out.push(order_stats(&hw, &rw, n));
    }
    out
}

/// Macro-averaged F-beta over orders, scaled to [0, 100]. Orders with no
/// n-grams on either side are skipped; if every order is skipped the strings
/// are both empty and count as a perfect match.
pub fn score_from_stats(stats: &[OrderStats], beta: f64) -> f64 {
    let b2 = beta * beta;
    let mut total = 0.0;
    let mut used = 0usize;
    for s in stats {
        if s.hyp == 0 && s.reference == 0 {
            continue;
        }
        used += 1;
        let p = if s.hyp > 0 { s.matched as f64 / s.hyp as f64 } else { 0.0 };
        let r = if s.reference > 0 { s.matched as f64 / s.reference as f64 } else { 0.0 };
        let denom = b2 * p + r;
        if denom > 0.0 {
            total += (1.0 + b2) * p * r / denom;
        }
    }
    if used == 0 {
        100.0
    } else {
        100.0 * total / used as f64
    }
}

pub fn chrf_pp(hypothesis: &str, reference: &str, params: &ChrfParams) -> f64 {
    score_from_stats(&sentence_stats(hypothesis, reference, params), params.beta)
}

/// Corpus-level ChrF++: counts are pooled over all pairs before computing F.
pub fn corpus_chrf_pp(
    hypotheses: &[String],
    references: &[String],
    params: &ChrfParams,
    exec: Execution,
) -> Result<f64> {
    params.validate()?;
    if hypotheses.len() != references.len() {
        return Err(Error::Data(format!(
            "corpus length mismatch: {} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let per: Vec<Vec<OrderStats>> = par::map_indexed(exec, hypotheses, |i, h| {
        sentence_stats(h, &references[i], params)
    });
    let mut pooled = vec![OrderStats::default(); params.orders()];
    for s in &per {
        for (acc, x) in pooled.iter_mut().zip(s) {
            acc.add(x);
        }
    }
    Ok(score_from_stats(&pooled, params.beta))
}
