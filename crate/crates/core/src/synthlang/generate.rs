use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Affix, AffixId, Grammar, InflectionGroup, MorphRule, NumeralTemplate, PosTag, Slot, SlotSide, Stem,
    StemId, StemKind, NOUN, PARTICLE, VERB, VOWELS,
};
use crate::error::{Error, Result};

const CONSONANTS: &str = "bdgkmnprstvz";

/// Sizes for a generated grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarSpec {
    pub verbs: usize,
    pub nouns: usize,
    pub particles: usize,
    pub names: usize,
}

impl Default for GrammarSpec {
    fn default() -> Self {
        GrammarSpec { verbs: 50, nouns: 90, particles: 40, names: 40 }
    }
}

// (slot name, side, gloss rank, [(surface, gloss)])
type SlotTable = (&'static str, SlotSide, i32, &'static [(&'static str, &'static str)]);

const VERB_SLOTS: &[SlotTable] = &[
    ("subject", SlotSide::Prefix, -3, &[("ba", "they"), ("tu", "we"), ("mu", "you"), ("ki", "it"), ("ni", "i")]),
    ("tense", SlotSide::Prefix, -2, &[("ra", "will"), ("za", "did"), ("ka", "can")]),
    ("aspect", SlotSide::Suffix, 1, &[("ye", "again"), ("na", "together"), ("ga", "often"), ("ira", "for")]),
];

const NOUN_SLOTS: &[SlotTable] = &[
    ("class", SlotSide::Prefix, -1, &[("mu", "a"), ("ba", "some"), ("in", "the"), ("ki", "this"), ("ma", "many"), ("un", "that")]),
    ("locative", SlotSide::Suffix, -2, &[("ni", "in"), ("ho", "at"), ("mo", "inside"), ("eza", "near")]),
];

const DIGIT_GLOSSES: [&str; 10] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"];
const POWER_GLOSSES: [&str; 11] = [
    "ten",
    "hundred",
    "thousand",
    "ten-thousand",
    "hundred-thousand",
    "million",
    "ten-million",
    "hundred-million",
    "billion",
    "ten-billion",
    "hundred-billion",
];

const EN_ONSETS: &[&str] = &[
    "b", "bl", "br", "c", "ch", "cl", "d", "dr", "f", "fl", "g", "gr", "h", "j", "l", "m", "n", "p", "pl", "r", "s",
    "sh", "sl", "st", "t", "th", "tr", "v", "w",
];
const EN_VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ee", "oo", "ai"];
const EN_CODAS: &[&str] = &["", "n", "t", "ck", "ll", "nd", "st", "m", "r", "sh"];

fn pick(rng: &mut ChaCha8Rng, s: &str) -> char {
    let chars: Vec<char> = s.chars().collect();
    chars[rng.gen_range(0..chars.len())]
}

fn toy_word(rng: &mut ChaCha8Rng, patterns: &[&str]) -> String {
    let pattern = patterns[rng.gen_range(0..patterns.len())];
    pattern
        .chars()
        .map(|p| if p == 'C' { pick(rng, CONSONANTS) } else { pick(rng, VOWELS) })
        .collect()
}

fn english_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = if rng.gen_bool(0.6) { 1 } else { 2 };
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(EN_ONSETS.choose(rng).expect("non-empty"));
        w.push_str(EN_VOWELS.choose(rng).expect("non-empty"));
        w.push_str(EN_CODAS.choose(rng).expect("non-empty"));
    }
    w
}

/// A capitalized name built from toy syllables, e.g. "Kamali".
pub(crate) fn toy_name(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(pick(rng, CONSONANTS));
        w.push(pick(rng, VOWELS));
    }
    let mut c = w.chars();
    let first = c.next().expect("non-empty").to_ascii_uppercase();
    std::iter::once(first).chain(c).collect()
}

struct StemBuilder<'a> {
    grammar: &'a mut Grammar,
    surfaces: HashSet<String>,
    glosses: HashSet<String>,
}

impl StemBuilder<'_> {
    /// Try to add a stem; rejected if any of its forms collides with an
    /// existing form or its gloss is taken.
    fn try_add(&mut self, surface: String, group: usize, pos: usize, gloss: String, kind: StemKind) -> Result<Option<StemId>> {
        if self.glosses.contains(&gloss) {
            return Ok(None);
        }
        let id = self.grammar.stems.len();
        self.grammar.stems.push(Stem { id, surface, group, pos, gloss: gloss.clone(), kind });
        let mut forms = Vec::new();
        for combo in self.grammar.combinations(group) {
            let f = self
                .grammar
                .synthesize(id, &combo)?
                .ok_or_else(|| Error::Data("slot combination rejected".into()))?;
            forms.push(f);
        }
        let mut unique: HashSet<&String> = HashSet::new();
        let clash = forms.iter().any(|f| self.surfaces.contains(f) || !unique.insert(f));
        if clash {
            self.grammar.stems.pop();
            return Ok(None);
        }
        self.surfaces.extend(forms);
        self.glosses.insert(gloss);
        Ok(Some(id))
    }
}

fn build_slots(group: usize, table: &[SlotTable], affixes: &mut Vec<Affix>) -> Vec<Slot> {
    table
        .iter()
        .enumerate()
        .map(|(si, (name, side, rank, entries))| {
            let ids: Vec<AffixId> = entries
                .iter()
                .map(|(surface, gloss)| {
                    let id = affixes.len();
                    affixes.push(Affix { id, group, slot: si, surface: surface.to_string(), gloss: gloss.to_string() });
                    id
                })
                .collect();
            Slot { name: name.to_string(), side: *side, affixes: ids, gloss_rank: *rank }
        })
        .collect()
}

impl Grammar {
    /// Generate a toy grammar: fixed affix and rule tables, random stems,
    /// glosses and names, with every stem whose forms would collide rejected
    /// so that the resulting language is unambiguous.
    pub fn generate(spec: &GrammarSpec, seed: u64) -> Result<Grammar> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut affixes = Vec::new();
        let verb_slots = build_slots(VERB, VERB_SLOTS, &mut affixes);
        let noun_slots = build_slots(NOUN, NOUN_SLOTS, &mut affixes);
        let groups = vec![
            InflectionGroup { id: PARTICLE, name: "PARTICLE".into(), slots: Vec::new() },
            InflectionGroup { id: VERB, name: "VERB".into(), slots: verb_slots },
            InflectionGroup { id: NOUN, name: "NOUN".into(), slots: noun_slots },
        ];
        let pos_tags = vec![
            PosTag { id: 0, name: "PART".into(), group: PARTICLE },
            PosTag { id: 1, name: "X".into(), group: PARTICLE },
            PosTag { id: 2, name: "NUM".into(), group: PARTICLE },
            PosTag { id: 3, name: "V".into(), group: VERB },
            PosTag { id: 4, name: "N".into(), group: NOUN },
        ];
        let rules = vec![
            MorphRule::VowelElision { vowels: VOWELS.into() },
            MorphRule::Assimilation { from: 'n', to: 'm', before: "bp".into() },
            MorphRule::Degemination { consonants: CONSONANTS.into() },
        ];
        let mut grammar = Grammar {
            groups,
            affixes,
            pos_tags,
            stems: Vec::new(),
            rules,
            numerals: NumeralTemplate { digits: Vec::new(), powers: Vec::new() },
            names: Vec::new(),
        };
        let mut reserved: HashSet<String> = grammar.affixes.iter().map(|a| a.gloss.clone()).collect();
        reserved.extend(["x", "num"].iter().map(|s| s.to_string()));
        let mut builder = StemBuilder { grammar: &mut grammar, surfaces: HashSet::new(), glosses: reserved };

        let mut numeral_ids = Vec::new();
        for gloss in DIGIT_GLOSSES.iter().chain(POWER_GLOSSES.iter()) {
            let mut tries = 0;
            loop {
                tries += 1;
                if tries > 10_000 {
                    return Err(Error::Data("could not place numeral stems".into()));
                }
                let s = toy_word(&mut rng, &["CVCV", "CVCVC"]);
                if let Some(id) = builder.try_add(s, PARTICLE, 2, gloss.to_string(), StemKind::Numeral)? {
                    numeral_ids.push(id);
                    break;
                }
            }
        }
        let plan: [(usize, usize, usize, &[&str]); 3] = [
            (spec.verbs, VERB, 3, &["CVC", "CVCV", "VCVC", "CVCVC", "VCV", "CVCCV"]),
            (spec.nouns, NOUN, 4, &["CVC", "CVCV", "VCVC", "CVCVC", "VCV", "CVCCV"]),
            (spec.particles, PARTICLE, 0, &["CV", "CVC", "VCV"]),
        ];
        for (count, group, pos, patterns) in plan {
            let mut added = 0;
            let mut tries = 0;
            while added < count {
                tries += 1;
                if tries > 200_000 {
                    return Err(Error::Data(format!("could not place {count} stems in group {group}")));
                }
                let s = toy_word(&mut rng, patterns);
                let g = english_word(&mut rng);
                if builder.try_add(s, group, pos, g, StemKind::Content)?.is_some() {
                    added += 1;
                }
            }
        }
        let mut names = Vec::new();
        let mut seen = HashSet::new();
        while names.len() < spec.names {
            let n = toy_name(&mut rng);
            if seen.insert(n.clone()) {
                names.push(n);
            }
        }
        grammar.numerals = NumeralTemplate {
            digits: numeral_ids[..10].to_vec(),
            powers: numeral_ids[10..].to_vec(),
        };
        grammar.names = names;
        grammar.validate()?;
        Ok(grammar)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum WordSpec {
    Word { stem: StemId, affixes: Vec<AffixId> },
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedSentence {
    /// Toy-language words in toy order: subject, object?, verb, particle?.
    pub toy: Vec<WordSpec>,
    /// English tokens in English order: subject, verb, object?, particle?.
    pub english: Vec<String>,
}

impl GeneratedSentence {
    pub fn toy_text(&self, grammar: &Grammar) -> Result<String> {
        let words = self
            .toy
            .iter()
            .map(|w| match w {
                WordSpec::Word { stem, affixes } => grammar
                    .synthesize(*stem, affixes)?
                    .ok_or_else(|| Error::Data("generated an incompatible word".into())),
                WordSpec::Name(n) => Ok(n.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(words.join(" "))
    }

    pub fn english_text(&self) -> String {
        self.english.join(" ")
    }
}

fn sample_affixes(grammar: &Grammar, group: usize, rng: &mut ChaCha8Rng) -> Vec<AffixId> {
    let mut out = Vec::new();
    for slot in &grammar.groups[group].slots {
        if rng.gen_bool(0.5) {
            let weights: Vec<f64> = (0..slot.affixes.len()).map(|i| 1.0 / (i as f64 + 1.0)).collect();
            let total: f64 = weights.iter().sum();
            let mut x = rng.gen::<f64>() * total;
            let mut chosen = slot.affixes.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if x < *w {
                    chosen = i;
                    break;
                }
                x -= w;
            }
            out.push(slot.affixes[chosen]);
        }
    }
    out
}

fn english_of(grammar: &Grammar, w: &WordSpec) -> Result<Vec<String>> {
    match w {
        WordSpec::Word { stem, affixes } => grammar.gloss_word(*stem, affixes),
        WordSpec::Name(n) => Ok(vec![n.clone()]),
    }
}

/// Random sentences over the grammar's content stems and names.
pub fn generate_sentences(grammar: &Grammar, n: usize, seed: u64) -> Result<Vec<GeneratedSentence>> {
    let by_group = |g: usize| -> Vec<StemId> {
        grammar
            .stems
            .iter()
            .filter(|s| s.group == g && s.kind == StemKind::Content)
            .map(|s| s.id)
            .collect()
    };
    let (verbs, nouns, particles) = (by_group(VERB), by_group(NOUN), by_group(PARTICLE));
    if verbs.is_empty() || nouns.is_empty() {
        return Err(Error::Data("grammar needs verb and noun stems to generate sentences".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let noun_phrase = |rng: &mut ChaCha8Rng, name_p: f64| -> WordSpec {
            if !grammar.names.is_empty() && rng.gen_bool(name_p) {
                WordSpec::Name(grammar.names.choose(rng).expect("non-empty").clone())
            } else {
                let stem = *nouns.choose(rng).expect("non-empty");
                WordSpec::Word { stem, affixes: sample_affixes(grammar, NOUN, rng) }
            }
        };
        let subject = noun_phrase(&mut rng, 0.25);
        let object = rng.gen_bool(0.6).then(|| noun_phrase(&mut rng, 0.1));
        let vstem = *verbs.choose(&mut rng).expect("non-empty");
        let verb = WordSpec::Word { stem: vstem, affixes: sample_affixes(grammar, VERB, &mut rng) };
        let particle = (!particles.is_empty() && rng.gen_bool(0.4)).then(|| WordSpec::Word {
            stem: *particles.choose(&mut rng).expect("non-empty"),
            affixes: Vec::new(),
        });
        let mut toy = vec![subject.clone()];
        toy.extend(object.clone());
        toy.push(verb.clone());
        toy.extend(particle.clone());
        let mut english = english_of(grammar, &subject)?;
        english.extend(english_of(grammar, &verb)?);
        if let Some(o) = &object {
            english.extend(english_of(grammar, o)?);
        }
        if let Some(p) = &particle {
            english.extend(english_of(grammar, p)?);
        }
        out.push(GeneratedSentence { toy, english });
    }
    Ok(out)
}
