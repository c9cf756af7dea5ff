use std::collections::HashMap;

use morphmt::metrics::{chrf_pp, corpus_chrf_pp, sentence_stats, ChrfParams, OrderStats};
use morphmt::par::Execution;

use crate::Outcome;

const HYP: [&str; 3] = ["the cat sat on the mat", "a quick brown fox", "kibazo cyane"];
const REF: [&str; 3] = ["the cat is on the mat", "the quick brown dog jumps", "ikibazo gikomeye cyane"];

/// Pooled (hypothesis, reference, matched) counts per order, counted by hand:
/// char orders 1..=6, then word orders 1..=2.
const POOLED: [(u64, u64, u64); 8] = [
    (42, 57, 37),
    (39, 54, 30),
    (36, 51, 25),
    (33, 48, 20),
    (30, 45, 15),
    (27, 42, 10),
    (12, 14, 8),
    (9, 11, 4),
];

/// Exactly 100 * 3380712575 / 70840224 from the counts above. TorchMetrics'
/// CHRFScore (float32) gives 0.4772307 on the same fixture.
const EXPECTED: f64 = 47.723064441467606;

fn grams<T: std::hash::Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<Vec<T>, u64> {
    let mut out = HashMap::new();
    for i in 0..(items.len() + 1).saturating_sub(n) {
        *out.entry(items[i..i + n].to_vec()).or_insert(0) += 1;
    }
    out
}

fn tally<K: std::hash::Hash + Eq>(hg: HashMap<K, u64>, rg: HashMap<K, u64>) -> (u64, u64, u64) {
    let matched = hg.iter().map(|(k, c)| (*c).min(*rg.get(k).unwrap_or(&0))).sum();
    (hg.values().sum(), rg.values().sum(), matched)
}

fn brute_counts(h: &str, r: &str) -> Vec<(u64, u64, u64)> {
    let hc: Vec<char> = h.chars().filter(|c| *c != ' ').collect();
    let rc: Vec<char> = r.chars().filter(|c| *c != ' ').collect();
    let hw: Vec<&str> = h.split(' ').filter(|w| !w.is_empty()).collect();
    let rw: Vec<&str> = r.split(' ').filter(|w| !w.is_empty()).collect();
    let mut out = Vec::new();
    for n in 1..=6 {
        out.push(tally(grams(&hc, n), grams(&rc, n)));
    }
    for n in 1..=2 {
        out.push(tally(grams(&hw, n), grams(&rw, n)));
    }
    out
}

fn f_beta(counts: &[(u64, u64, u64)]) -> f64 {
    let mut sum = 0.0;
    for &(h, r, m) in counts {
        let p = m as f64 / h as f64;
        let rec = m as f64 / r as f64;
        sum += 5.0 * p * rec / (4.0 * p + rec);
    }
    100.0 * sum / counts.len() as f64
}

pub fn check() -> Outcome {
    let params = ChrfParams::default();
    let hyp: Vec<String> = HYP.iter().map(|s| s.to_string()).collect();
    let reference: Vec<String> = REF.iter().map(|s| s.to_string()).collect();

    let mut pooled = vec![(0u64, 0u64, 0u64); 8];
    for (h, r) in HYP.iter().zip(REF) {
        for (acc, c) in pooled.iter_mut().zip(brute_counts(h, r)) {
            acc.0 += c.0;
            acc.1 += c.1;
            acc.2 += c.2;
        }
    }
    let counts_ok = pooled == POOLED;

    let mut library = vec![OrderStats::default(); 8];
    for (h, r) in HYP.iter().zip(REF) {
        for (acc, s) in library.iter_mut().zip(sentence_stats(h, r, &params)) {
            acc.hyp += s.hyp;
            acc.reference += s.reference;
            acc.matched += s.matched;
        }
    }
    let library_counts_ok = library.iter().zip(&POOLED).all(|(s, p)| (s.hyp, s.reference, s.matched) == *p);

    let brute = f_beta(&POOLED);
    let score = corpus_chrf_pp(&hyp, &reference, &params, Execution::Parallel).expect("aligned corpus");
    let sequential = corpus_chrf_pp(&hyp, &reference, &params, Execution::Sequential).expect("aligned corpus");
    let identical = corpus_chrf_pp(&reference, &reference, &params, Execution::Parallel).expect("aligned corpus");
    let single = chrf_pp(HYP[0], REF[0], &params);
    let single_brute = f_beta(&brute_counts(HYP[0], REF[0]));

    let pass = counts_ok
        && library_counts_ok
        && (brute - EXPECTED).abs() <= 1e-9
        && (score - EXPECTED).abs() <= 1e-6
        && score == sequential
        && (single - single_brute).abs() <= 1e-6
        && identical == 100.0;
    Outcome::new(
        pass,
        format!(
            "fixture {score:.9} vs expected {EXPECTED:.9} (|diff| {:.1e}), pooled counts match {}, sentence {single:.6} vs {single_brute:.6}, identical corpus {identical}",
            (score - EXPECTED).abs(),
            counts_ok && library_counts_ok
        ),
    )
}
