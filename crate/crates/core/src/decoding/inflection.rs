//! Inflection generation from the four head distributions: pick the likely
//! inflection groups, filter each ranked list, score stem/POS/affix-set
//! triples, merge affixes and synthesize surface forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq2seq::HeadProbabilities;

/// Initial cell value of the group evidence matrix.
pub const GROUP_FLOOR: f64 = -100.0;

/// Everything the generator needs to know about the target morphology.
pub trait Morphology {
    fn num_groups(&self) -> usize;
    fn stem_group(&self, stem: usize) -> usize;
    fn pos_group(&self, pos: usize) -> usize;
    fn set_group(&self, set: usize) -> usize;
    fn set_affixes(&self, set: usize) -> &[usize];
    fn affix_group(&self, affix: usize) -> usize;
    fn affix_slot(&self, affix: usize) -> usize;
    /// Smoothed stem/affix-set correlation; must be positive.
    fn rho(&self, stem: usize, set: usize) -> f64;
    /// Surface form, or `None` when stem and affixes are incompatible.
    fn synthesize(&self, stem: usize, affixes: &[usize]) -> Option<String>;
}

/// How candidate scores from different groups are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GroupScoring {
    /// Scores as normalised within each group.
    #[default]
    Raw,
    /// Within-group scores multiplied by the group probability.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub beam: usize,
    pub top_m: usize,
    pub top_n: usize,
    pub alpha: f64,
    pub log_beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub group_scoring: GroupScoring,
}

impl Default for DecoderParams {
    fn default() -> Self {
        DecoderParams {
            beam: 4,
            top_m: 8,
            top_n: 16,
            alpha: 0.08,
            log_beta: 2.0,
            gamma: 0.3,
            delta: 0.3,
            group_scoring: GroupScoring::Raw,
        }
    }
}

impl DecoderParams {
    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 || self.top_m == 0 {
            return Err(Error::Config("beam width and top-M must be positive".into()));
        }
        if self.alpha < 0.0 || self.delta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("alpha, delta and gamma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInflection {
    pub surface: String,
    pub stem: usize,
    pub pos: usize,
    pub set: usize,
    pub affixes: Vec<usize>,
    pub score: f64,
}

/// Indices of `p` in decreasing order of probability (stable for ties),
/// truncated to `k`.
pub fn arg_sort_desc(p: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    idx.truncate(k);
    idx
}

/// Group distribution from the top stems, POS tags and affix sets.
#[allow(clippy::too_many_arguments)]
pub fn inflection_group_probabilities(
    morph: &dyn Morphology,
    top_stems: &[usize],
    top_pos: &[usize],
    top_sets: &[usize],
    stem_p: &[f64],
    pos_p: &[f64],
    set_p: &[f64],
    m: usize,
) -> Result<Vec<f64>> {
    if top_stems.is_empty() || top_pos.is_empty() || top_sets.is_empty() {
        return Err(Error::Data("ranked stem/POS/affix-set lists must not be empty".into()));
    }
    let groups = morph.num_groups();
    let mut w = vec![vec![GROUP_FLOOR; groups]; m];
    for (i, row) in w.iter_mut().enumerate() {
        if let Some(&s) = top_stems.get(i) {
            let g = morph.stem_group(s);
            row[g] = row[g].max(stem_p[s].ln());
        }
        if let Some(&p) = top_pos.get(i) {
            let g = morph.pos_group(p);
            row[g] = row[g].max(pos_p[p].ln());
        }
        if let Some(&a) = top_sets.get(i) {
            let g = morph.set_group(a);
            row[g] = row[g].max(set_p[a].ln());
        }
    }
    let v: Vec<f64> = (0..groups).map(|g| w.iter().map(|row| row[g]).sum()).collect();
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| x / z).collect())
}

/// Items of group `g` with probability at least `gamma`, stopping after the
/// first item whose drop from the previously kept item exceeds `delta`.
pub fn filter_and_cutoff(ranked: &[usize], p: &[f64], group_of: impl Fn(usize) -> usize, g: usize, delta: f64, gamma: f64) -> Vec<usize> {
    let mut kept = Vec::new();
    let mut pp = 0.0;
    for &i in ranked {
        if group_of(i) == g && p[i] >= gamma {
            kept.push(i);
            if pp - p[i] > delta {
                break;
            }
            pp = p[i];
        }
    }
    kept
}

/// Normalised triple scores, s-major then POS then affix set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub stems: Vec<usize>,
    pub pos: Vec<usize>,
    pub sets: Vec<usize>,
    pub scores: Vec<f64>,
}

impl ScoreGrid {
    pub fn triple(&self, flat: usize) -> (usize, usize, usize) {
        let (np, na) = (self.pos.len(), self.sets.len());
        (self.stems[flat / (np * na)], self.pos[(flat / na) % np], self.sets[flat % na])
    }
}

#[allow(clippy::too_many_arguments)]
pub fn compute_score(
    morph: &dyn Morphology,
    stems: &[usize],
    pos: &[usize],
    sets: &[usize],
    stem_p: &[f64],
    pos_p: &[f64],
    set_p: &[f64],
    alpha: f64,
) -> Result<ScoreGrid> {
    let mut scores = Vec::with_capacity(stems.len() * pos.len() * sets.len());
    let mut total = 0.0;
    for &s in stems {
        for &p in pos {
            for &a in sets {
                let rho = morph.rho(s, a);
                if !(rho > 0.0) {
                    return Err(Error::Numeric(format!("correlation for stem {s}, set {a} is not positive")));
                }
                let c = (alpha * rho.ln() + stem_p[s].ln() + pos_p[p].ln() + set_p[a].ln()).exp();
                scores.push(c);
                total += c;
            }
        }
    }
    if total > 0.0 {
        for c in &mut scores {
            *c /= total;
        }
    }
    Ok(ScoreGrid { stems: stems.to_vec(), pos: pos.to_vec(), sets: sets.to_vec(), scores })
}

/// The affix set's own members plus every extra affix whose slot is still
/// free; set members win slot collisions, earlier extras win over later ones.
pub fn affix_merge(morph: &dyn Morphology, set: usize, extra: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = morph.set_affixes(set).to_vec();
    let mut taken: Vec<(usize, usize)> = out.iter().map(|&f| (morph.affix_group(f), morph.affix_slot(f))).collect();
    for &f in extra {
        let key = (morph.affix_group(f), morph.affix_slot(f));
        if !out.contains(&f) && !taken.contains(&key) {
            out.push(f);
            taken.push(key);
        }
    }
    out.sort_unstable();
    out
}

/// Intermediate values of one generation call, for tracing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTrace {
    pub group: usize,
    pub probability: f64,
    pub stems: Vec<usize>,
    pub pos: Vec<usize>,
    pub sets: Vec<usize>,
    pub affixes: Vec<usize>,
    pub grid: ScoreGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    /// Top-M stems, POS tags and affix sets and top-N affixes, each with its
    /// head probability.
    pub top_stems: Vec<(usize, f64)>,
    pub top_pos: Vec<(usize, f64)>,
    pub top_sets: Vec<(usize, f64)>,
    pub top_affixes: Vec<(usize, f64)>,
    pub group_probabilities: Vec<f64>,
    pub groups: Vec<GroupTrace>,
    pub candidates: Vec<CandidateInflection>,
}

pub fn generate_inflections(morph: &dyn Morphology, probs: &HeadProbabilities, params: &DecoderParams) -> Result<Vec<CandidateInflection>> {
    Ok(generate_inflections_traced(morph, probs, params)?.candidates)
}

pub fn generate_inflections_traced(morph: &dyn Morphology, probs: &HeadProbabilities, params: &DecoderParams) -> Result<GenerationTrace> {
    let m = params.top_m;
    let top_stems = arg_sort_desc(&probs.stem, m);
    let top_pos = arg_sort_desc(&probs.pos, m);
    let top_sets = arg_sort_desc(&probs.set, m);
    let top_affixes = arg_sort_desc(&probs.affix, params.top_n);
    let pg = inflection_group_probabilities(morph, &top_stems, &top_pos, &top_sets, &probs.stem, &probs.pos, &probs.set, m)?;
    let order = arg_sort_desc(&pg, pg.len());
    let mut pp: f64 = 0.0;
    let mut candidates = Vec::new();
    let mut groups = Vec::new();
    for g in order {
        let stems = filter_and_cutoff(&top_stems, &probs.stem, |i| morph.stem_group(i), g, params.delta, 0.0);
        let pos = filter_and_cutoff(&top_pos, &probs.pos, |i| morph.pos_group(i), g, params.delta, 0.0);
        let sets = filter_and_cutoff(&top_sets, &probs.set, |i| morph.set_group(i), g, params.delta, 0.0);
        let affixes = filter_and_cutoff(&top_affixes, &probs.affix, |i| morph.affix_group(i), g, params.delta, params.gamma);
        let grid = compute_score(morph, &stems, &pos, &sets, &probs.stem, &probs.pos, &probs.set, params.alpha)?;
        let weight = match params.group_scoring {
            GroupScoring::Raw => 1.0,
            GroupScoring::Weighted => pg[g],
        };
        for flat in arg_sort_desc(&grid.scores, grid.scores.len()) {
            let (s, p, a) = grid.triple(flat);
            let f = affix_merge(morph, a, &affixes);
            if let Some(surface) = morph.synthesize(s, &f) {
                candidates.push(CandidateInflection { surface, stem: s, pos: p, set: a, affixes: f, score: grid.scores[flat] * weight });
            }
        }
        groups.push(GroupTrace { group: g, probability: pg[g], stems, pos, sets, affixes, grid });
        if pp.ln() - pg[g].ln() > params.log_beta {
            break;
        }
        pp = pg[g];
    }
    let with_p = |ids: &[usize], p: &[f64]| ids.iter().map(|&i| (i, p[i])).collect::<Vec<_>>();
    Ok(GenerationTrace {
        top_stems: with_p(&top_stems, &probs.stem),
        top_pos: with_p(&top_pos, &probs.pos),
        top_sets: with_p(&top_sets, &probs.set),
        top_affixes: with_p(&top_affixes, &probs.affix),
        group_probabilities: pg,
        groups,
        candidates,
    })
}
