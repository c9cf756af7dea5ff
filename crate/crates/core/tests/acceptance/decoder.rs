use std::collections::BTreeMap;

use morphmt::decoding::{
    generate_inflections_traced, inflection_group_probabilities, DecoderParams, GroupScoring, Morphology,
};
use morphmt::seq2seq::HeadProbabilities;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

/// A small random morphology: every list has at most four entries.
struct Micro {
    groups: usize,
    stem_group: Vec<usize>,
    pos_group: Vec<usize>,
    set_group: Vec<usize>,
    set_members: Vec<Vec<usize>>,
    affix_group: Vec<usize>,
    affix_slot: Vec<usize>,
    rho: Vec<Vec<f64>>,
    salt: u64,
}

impl Micro {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let groups = rng.gen_range(1..=3);
        let lens: [usize; 4] = std::array::from_fn(|_| rng.gen_range(1..=4));
        let mut draw = |n: usize| -> Vec<usize> { (0..n).map(|_| rng.gen_range(0..groups)).collect() };
        let stem_group = draw(lens[0]);
        let pos_group = draw(lens[1]);
        let set_group = draw(lens[2]);
        let affix_group = draw(lens[3]);
        let affix_slot: Vec<usize> = affix_group.iter().map(|_| rng.gen_range(0..2)).collect();
        let set_members = set_group
            .iter()
            .map(|&g| {
                let mut used = Vec::new();
                let mut members = Vec::new();
                for (f, &fg) in affix_group.iter().enumerate() {
                    if fg == g && !used.contains(&affix_slot[f]) && rng.gen_bool(0.5) {
                        used.push(affix_slot[f]);
                        members.push(f);
                    }
                }
                members
            })
            .collect();
        let rho = stem_group.iter().map(|_| set_group.iter().map(|_| rng.gen_range(0.05..1.0)).collect()).collect();
        Micro { groups, stem_group, pos_group, set_group, set_members, affix_group, affix_slot, rho, salt: rng.gen() }
    }
}

impl Morphology for Micro {
    fn num_groups(&self) -> usize {
        self.groups
    }
    fn stem_group(&self, stem: usize) -> usize {
        self.stem_group[stem]
    }
    fn pos_group(&self, pos: usize) -> usize {
        self.pos_group[pos]
    }
    fn set_group(&self, set: usize) -> usize {
        self.set_group[set]
    }
    fn set_affixes(&self, set: usize) -> &[usize] {
        &self.set_members[set]
    }
    fn affix_group(&self, affix: usize) -> usize {
        self.affix_group[affix]
    }
    fn affix_slot(&self, affix: usize) -> usize {
        self.affix_slot[affix]
    }
    fn rho(&self, stem: usize, set: usize) -> f64 {
        self.rho[stem][set]
    }
    /// About one combination in five has no surface form.
    fn synthesize(&self, stem: usize, affixes: &[usize]) -> Option<String> {
        let mut h = self.salt ^ 0xcbf2_9ce4_8422_2325;
        for x in std::iter::once(stem).chain(affixes.iter().map(|a| a + 100)) {
            h = (h ^ x as u64).wrapping_mul(0x1000_0000_01b3);
        }
        (h % 5 != 0).then(|| format!("w{stem}-{affixes:?}"))
    }
}

/// `rank[i]`: number of entries ranked before `i` (higher probability, or
/// equal probability and lower index).
fn ranks(p: &[f64]) -> Vec<usize> {
    (0..p.len())
        .map(|i| (0..p.len()).filter(|&j| p[j] > p[i] || (p[j] == p[i] && j < i)).count())
        .collect()
}

fn with_rank(rank: &[usize], r: usize) -> Option<usize> {
    rank.iter().position(|&x| x == r)
}

/// Entries among the top `limit` of group `g` with probability at least
/// `floor`, in rank order, ending at the first entry that falls more than
/// `delta` below its predecessor.
fn kept(p: &[f64], limit: usize, group: impl Fn(usize) -> usize, g: usize, delta: f64, floor: f64) -> Vec<usize> {
    let rank = ranks(p);
    let seq: Vec<usize> = (0..limit.min(p.len()))
        .filter_map(|r| with_rank(&rank, r))
        .filter(|&i| group(i) == g && p[i] >= floor)
        .collect();
    let end = (1..seq.len()).find(|&k| p[seq[k - 1]] - p[seq[k]] > delta).map_or(seq.len(), |k| k + 1);
    seq[..end].to_vec()
}

#[derive(Debug, Clone, PartialEq)]
struct Expected {
    surface: String,
    stem: usize,
    pos: usize,
    set: usize,
    affixes: Vec<usize>,
    score: f64,
}

fn oracle_groups(m: &Micro, probs: &HeadProbabilities, top_m: usize) -> Vec<f64> {
    let lists: [(&[f64], &dyn Fn(usize) -> usize); 3] = [
        (&probs.stem, &|i| m.stem_group[i]),
        (&probs.pos, &|i| m.pos_group[i]),
        (&probs.set, &|i| m.set_group[i]),
    ];
    let ranked: Vec<Vec<usize>> = lists.iter().map(|(p, _)| ranks(p)).collect();
    let v: Vec<f64> = (0..m.groups)
        .map(|g| {
            (0..top_m)
                .map(|r| {
                    let best = lists
                        .iter()
                        .zip(&ranked)
                        .filter_map(|((p, group), rank)| with_rank(rank, r).filter(|&i| group(i) == g).map(|i| p[i]))
                        .fold(0.0f64, f64::max);
                    best.max((-100.0f64).exp()).ln()
                })
                .sum()
        })
        .collect();
    let z: f64 = v.iter().map(|x| x.exp()).sum();
    v.iter().map(|x| x.exp() / z).collect()
}

fn oracle(m: &Micro, probs: &HeadProbabilities, params: &DecoderParams) -> (Vec<f64>, Vec<Expected>) {
    let pg = oracle_groups(m, probs, params.top_m);
    let group_rank = ranks(&pg);
    let order: Vec<usize> = (0..m.groups).map(|r| with_rank(&group_rank, r).unwrap()).collect();
    let (rs, rp, ra) = (ranks(&probs.stem), ranks(&probs.pos), ranks(&probs.set));
    let mut out = Vec::new();
    for (k, &g) in order.iter().enumerate() {
        let stems = kept(&probs.stem, params.top_m, |i| m.stem_group[i], g, params.delta, 0.0);
        let pos = kept(&probs.pos, params.top_m, |i| m.pos_group[i], g, params.delta, 0.0);
        let sets = kept(&probs.set, params.top_m, |i| m.set_group[i], g, params.delta, 0.0);
        let extras = kept(&probs.affix, params.top_n, |i| m.affix_group[i], g, params.delta, params.gamma);
        let mut triples = Vec::new();
        for s in 0..probs.stem.len() {
            for p in 0..probs.pos.len() {
                for a in 0..probs.set.len() {
                    if stems.contains(&s) && pos.contains(&p) && sets.contains(&a) {
                        let raw = m.rho[s][a].powf(params.alpha) * probs.stem[s] * probs.pos[p] * probs.set[a];
                        triples.push((s, p, a, raw));
                    }
                }
            }
        }
        let z: f64 = triples.iter().map(|t| t.3).sum();
        let weight = match params.group_scoring {
            GroupScoring::Raw => 1.0,
            GroupScoring::Weighted => pg[g],
        };
        triples.sort_by(|x, y| {
            if (x.3 - y.3).abs() > 1e-12 * z {
                y.3.total_cmp(&x.3)
            } else {
                (rs[x.0], rp[x.1], ra[x.2]).cmp(&(rs[y.0], rp[y.1], ra[y.2]))
            }
        });
        for (s, p, a, raw) in triples {
            let mut slots: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            for &f in &m.set_members[a] {
                slots.insert((m.affix_group[f], m.affix_slot[f]), f);
            }
            for &f in &extras {
                slots.entry((m.affix_group[f], m.affix_slot[f])).or_insert(f);
            }
            let mut affixes: Vec<usize> = slots.into_values().collect();
            affixes.sort_unstable();
            if let Some(surface) = m.synthesize(s, &affixes) {
                out.push(Expected { surface, stem: s, pos: p, set: a, affixes, score: raw / z * weight });
            }
        }
        if k >= 1 && pg[order[k - 1]].ln() - pg[g].ln() > params.log_beta {
            break;
        }
    }
    (pg, out)
}

fn distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.5..2.5)).collect();
    let z: f64 = logits.iter().map(|x| x.exp()).sum();
    logits.iter().map(|x| x.exp() / z).collect()
}

/// Independent affix probabilities (one sigmoid each).
fn affix_probabilities(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
}

fn hand_traced() -> (bool, Vec<f64>) {
    let m = Micro {
        groups: 2,
        stem_group: vec![0, 1],
        pos_group: vec![0, 1],
        set_group: vec![0, 1],
        set_members: vec![vec![], vec![]],
        affix_group: vec![],
        affix_slot: vec![],
        rho: vec![vec![1.0; 2]; 2],
        salt: 0,
    };
    let pg = inflection_group_probabilities(&m, &[0, 1], &[0, 1], &[0, 1], &[0.6, 0.3], &[0.7, 0.2], &[0.8, 0.1], 2)
        .expect("non-empty lists");
    let ok = pg.len() == 2 && (pg[0] - 0.727).abs() <= 1e-3 && (pg[1] - 0.273).abs() <= 1e-3;
    (ok, pg)
}

pub fn check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut mismatches = Vec::new();
    let (mut candidates, mut multi_group, mut weighted) = (0usize, 0usize, 0usize);
    let mut worst: f64 = 0.0;
    for case in 0..500 {
        let m = Micro::random(&mut rng);
        let probs = HeadProbabilities {
            stem: distribution(&mut rng, m.stem_group.len()),
            pos: distribution(&mut rng, m.pos_group.len()),
            set: distribution(&mut rng, m.set_group.len()),
            affix: affix_probabilities(&mut rng, m.affix_group.len()),
        };
        let params = DecoderParams {
            beam: 1,
            top_m: rng.gen_range(1..=4),
            top_n: rng.gen_range(1..=4),
            alpha: rng.gen_range(0.0..1.0),
            log_beta: rng.gen_range(0.05..3.0),
            gamma: rng.gen_range(0.0..0.5),
            delta: rng.gen_range(0.0..0.6),
            group_scoring: if rng.gen_bool(0.3) { GroupScoring::Weighted } else { GroupScoring::Raw },
        };
        let trace = generate_inflections_traced(&m, &probs, &params).expect("valid instance");
        let (pg, expected) = oracle(&m, &probs, &params);
        candidates += expected.len();
        multi_group += usize::from(trace.groups.len() > 1);
        weighted += usize::from(params.group_scoring == GroupScoring::Weighted);
        let pg_err = pg.iter().zip(&trace.group_probabilities).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(pg_err);
        let got = &trace.candidates;
        let same = got.len() == expected.len()
            && got.iter().zip(&expected).all(|(c, e)| {
                worst = worst.max((c.score - e.score).abs());
                c.surface == e.surface
                    && c.stem == e.stem
                    && c.pos == e.pos
                    && c.set == e.set
                    && c.affixes == e.affixes
                    && (c.score - e.score).abs() <= 1e-9
            });
        if !same || pg_err > 1e-9 || pg.len() != trace.group_probabilities.len() {
            mismatches.push(case);
        }
    }
    let (hand_ok, hand) = hand_traced();
    let pass = mismatches.is_empty() && hand_ok && candidates > 500 && multi_group > 50;
    Outcome::new(
        pass,
        format!(
            "500 instances ({candidates} candidates, {multi_group} with several groups, {weighted} weighted), {} mismatches, max |diff| {worst:.1e}; hand trace P_g = [{:.4}, {:.4}]",
            mismatches.len(),
            hand[0],
            hand[1]
        ),
    )
}
