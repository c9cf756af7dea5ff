//! A small synthetic language with rich, slot-based morphology. Words are a
//! stem plus at most one affix per slot of the stem's inflection group;
//! boundary rules make the surface differ from plain concatenation. The
//! language is built to be unambiguous, so analysis is an exact inverse of
//! synthesis.

pub(crate) mod generate;
mod inventory;
mod language;

pub use generate::{generate_sentences, GeneratedSentence, GrammarSpec, WordSpec};
pub use inventory::{AffixSet, AffixSetInventory, StemSetCorrelation};
pub use language::{Analysis, AnalyzedToken, Language};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type GroupId = usize;
pub type AffixId = usize;
pub type StemId = usize;
pub type PosId = usize;
pub type SetId = usize;

pub const PARTICLE: GroupId = 0;
pub const VERB: GroupId = 1;
pub const NOUN: GroupId = 2;

pub const VOWELS: &str = "aeiou";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotSide {
    Prefix,
    Suffix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub side: SlotSide,
    pub affixes: Vec<AffixId>,
    /// Where the affix gloss goes in the English rendering: negative ranks
    /// precede the stem gloss (ascending), positive ranks follow it.
    pub gloss_rank: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflectionGroup {
    pub id: GroupId,
    pub name: String,
    pub slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affix {
    pub id: AffixId,
    pub group: GroupId,
    pub slot: usize,
    pub surface: String,
    pub gloss: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosTag {
    pub id: PosId,
    pub name: String,
    pub group: GroupId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StemKind {
    Content,
    Numeral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stem {
    pub id: StemId,
    pub surface: String,
    pub group: GroupId,
    pub pos: PosId,
    pub gloss: String,
    pub kind: StemKind,
}

/// Boundary rewrite rules. Each inspects the last character of the left
/// morpheme and the first character of the right one, and only ever rewrites
/// the left morpheme's last character.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MorphRule {
    /// vowel + vowel: the left vowel is dropped.
    VowelElision { vowels: String },
    /// `from` before any of `before` becomes `to`.
    Assimilation { from: char, to: char, before: String },
    /// identical consonants across the boundary: the left one is dropped.
    Degemination { consonants: String },
}

/// Outcome of a rule at one boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rewrite {
    Delete,
    Replace(char),
}

impl MorphRule {
    pub fn apply(&self, left: char, right: char) -> Option<Rewrite> {
        match self {
            MorphRule::VowelElision { vowels } => {
                (vowels.contains(left) && vowels.contains(right)).then_some(Rewrite::Delete)
            }
            MorphRule::Assimilation { from, to, before } => {
                (left == *from && before.contains(right)).then_some(Rewrite::Replace(*to))
            }
            MorphRule::Degemination { consonants } => {
                (left == right && consonants.contains(left)).then_some(Rewrite::Delete)
            }
        }
    }
}

/// Base-10 positional numeral template: a digit word, optionally followed by
/// the word for its power of ten, for each non-zero digit from high to low.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumeralTemplate {
    /// Stems for the digits 0..=9.
    pub digits: Vec<StemId>,
    /// Stems for 10^1 ..= 10^11.
    pub powers: Vec<StemId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub groups: Vec<InflectionGroup>,
    pub affixes: Vec<Affix>,
    pub pos_tags: Vec<PosTag>,
    pub stems: Vec<Stem>,
    pub rules: Vec<MorphRule>,
    pub numerals: NumeralTemplate,
    /// Proper names used when generating sentences.
    pub names: Vec<String>,
}

impl Grammar {
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn stem(&self, id: StemId) -> Result<&Stem> {
        self.stems
            .get(id)
            .ok_or_else(|| Error::Lookup(format!("unknown stem id {id}")))
    }

    pub fn affix(&self, id: AffixId) -> Result<&Affix> {
        self.affixes
            .get(id)
            .ok_or_else(|| Error::Lookup(format!("unknown affix id {id}")))
    }

    pub fn pos_by_name(&self, name: &str) -> Option<PosId> {
        self.pos_tags.iter().find(|p| p.name == name).map(|p| p.id)
    }

    /// Check internal consistency of ids, slots and morpheme shapes.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Data(format!("invalid grammar: {m}")));
        for (i, g) in self.groups.iter().enumerate() {
            if g.id != i {
                return bad(format!("group {} has id {}", i, g.id));
            }
            let mut seen_suffix = false;
            for (si, slot) in g.slots.iter().enumerate() {
                if slot.side == SlotSide::Suffix {
                    seen_suffix = true;
                } else if seen_suffix {
                    return bad(format!("group {} lists a prefix slot after a suffix slot", g.name));
                }
                for &a in &slot.affixes {
                    let affix = self.affix(a)?;
                    if affix.group != i || affix.slot != si {
                        return bad(format!("affix {a} is listed in the wrong slot"));
                    }
                }
            }
        }
        if self.groups.get(PARTICLE).is_some_and(|g| !g.slots.is_empty()) {
            return bad("the particle group must have no slots".into());
        }
        for (i, a) in self.affixes.iter().enumerate() {
            if a.id != i {
                return bad(format!("affix {} has id {}", i, a.id));
            }
            let slot = self
                .groups
                .get(a.group)
                .and_then(|g| g.slots.get(a.slot))
                .ok_or_else(|| Error::Data(format!("affix {i} refers to a missing slot")))?;
            if !slot.affixes.contains(&i) {
                return bad(format!("affix {i} missing from its slot list"));
            }
            if a.surface.chars().count() < 2 {
                return bad(format!("affix {i} surface is shorter than two characters"));
            }
        }
        for (i, p) in self.pos_tags.iter().enumerate() {
            if p.id != i || p.group >= self.groups.len() {
                return bad(format!("pos tag {i} is malformed"));
            }
        }
        for (i, s) in self.stems.iter().enumerate() {
            if s.id != i || s.group >= self.groups.len() {
                return bad(format!("stem {i} is malformed"));
            }
            match self.pos_tags.get(s.pos) {
                Some(p) if p.group == s.group => {}
                _ => return bad(format!("stem {i} has a POS from another group")),
            }
            if s.surface.chars().count() < 2 {
                return bad(format!("stem {i} surface is shorter than two characters"));
            }
        }
        if self.numerals.digits.len() != 10 || self.numerals.powers.len() != 11 {
            return bad("numeral template needs 10 digits and 11 powers".into());
        }
        for &s in self.numerals.digits.iter().chain(&self.numerals.powers) {
            self.stem(s)?;
        }
        Ok(())
    }

    /// Morphemes of a word in surface order, or `None` if the affixes do not
    /// fit the stem (wrong group, or two affixes in one slot).
    pub fn morphemes(&self, stem: StemId, affixes: &[AffixId]) -> Result<Option<Vec<&str>>> {
        let stem = self.stem(stem)?;
        let group = &self.groups[stem.group];
        let mut filled: Vec<Option<AffixId>> = vec![None; group.slots.len()];
        let mut compatible = true;
        for &a in affixes {
            let affix = self.affix(a)?;
            if affix.group != stem.group || filled[affix.slot].is_some() {
                compatible = false;
                continue;
            }
            filled[affix.slot] = Some(a);
        }
        if !compatible {
            return Ok(None);
        }
        let mut out = Vec::with_capacity(affixes.len() + 1);
        let mut stem_placed = false;
        for (slot, fill) in group.slots.iter().zip(&filled) {
            if slot.side == SlotSide::Suffix && !stem_placed {
                out.push(stem.surface.as_str());
                stem_placed = true;
            }
            if let Some(a) = fill {
                out.push(self.affixes[*a].surface.as_str());
            }
        }
        if !stem_placed {
            out.push(stem.surface.as_str());
        }
        Ok(Some(out))
    }

    /// Surface form of a stem with affixes; `None` means incompatible.
    pub fn synthesize(&self, stem: StemId, affixes: &[AffixId]) -> Result<Option<String>> {
        Ok(self.morphemes(stem, affixes)?.map(|m| self.join(&m)))
    }

    /// Concatenate morphemes, applying boundary rules at every boundary.
    pub fn join(&self, morphemes: &[&str]) -> String {
        let order: Vec<usize> = (0..morphemes.len().saturating_sub(1)).collect();
        self.join_in_order(morphemes, &order)
    }

    /// Like [`Grammar::join`] but visits boundaries in the given order; used to
    /// check that rule application is order independent.
    pub fn join_in_order(&self, morphemes: &[&str], boundary_order: &[usize]) -> String {
        let mut pieces: Vec<Vec<char>> = morphemes.iter().map(|m| m.chars().collect()).collect();
        for &b in boundary_order {
            if b + 1 >= pieces.len() {
                continue;
            }
            let (Some(&left), Some(&right)) = (pieces[b].last(), pieces[b + 1].first()) else {
                continue;
            };
            if let Some(rw) = self.rules.iter().find_map(|r| r.apply(left, right)) {
                let piece = &mut pieces[b];
                match rw {
                    Rewrite::Delete => {
                        piece.pop();
                    }
                    Rewrite::Replace(c) => {
                        *piece.last_mut().expect("non-empty") = c;
                    }
                }
            }
        }
        pieces.into_iter().flatten().collect()
    }

    /// Every affix combination a stem of this group can take, one optional
    /// affix per slot, in a fixed order.
    pub fn combinations(&self, group: GroupId) -> Vec<Vec<AffixId>> {
        let mut combos: Vec<Vec<AffixId>> = vec![Vec::new()];
        for slot in &self.groups[group].slots {
            let mut next = Vec::with_capacity(combos.len() * (slot.affixes.len() + 1));
            for c in &combos {
                next.push(c.clone());
                for &a in &slot.affixes {
                    let mut e = c.clone();
                    e.push(a);
                    next.push(e);
                }
            }
            combos = next;
        }
        combos
    }

    /// English rendering of one word: affix glosses ordered by slot rank
    /// around the stem gloss.
    pub fn gloss_word(&self, stem: StemId, affixes: &[AffixId]) -> Result<Vec<String>> {
        let s = self.stem(stem)?;
        let mut parts: Vec<(i32, &str)> = vec![(0, s.gloss.as_str())];
        for &a in affixes {
            let affix = self.affix(a)?;
            let rank = self.groups[affix.group].slots[affix.slot].gloss_rank;
            parts.push((rank, affix.gloss.as_str()));
        }
        parts.sort_by_key(|p| p.0);
        Ok(parts.into_iter().map(|(_, g)| g.to_string()).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: Grammar = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }
}
