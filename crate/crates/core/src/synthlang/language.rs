use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::generate::{generate_sentences, WordSpec};
use super::{AffixId, AffixSetInventory, Grammar, PosId, SetId, StemId, StemSetCorrelation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzedToken {
    pub stem_id: StemId,
    /// Affixes in slot order.
    pub affix_ids: Vec<AffixId>,
    pub pos_id: PosId,
    pub affixset_id: SetId,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Analysis {
    Word(AnalyzedToken),
    /// Not produced by the grammar (names, foreign terms, digits).
    Unanalyzed { surface: String },
}

impl Analysis {
    pub fn surface(&self) -> &str {
        match self {
            Analysis::Word(t) => &t.surface,
            Analysis::Unanalyzed { surface } => surface,
        }
    }
}

/// Every surface form of the grammar mapped to its (stem, affixes). Fails if
/// two analyses share a surface.
pub(crate) fn surface_table(grammar: &Grammar) -> Result<HashMap<String, (StemId, Vec<AffixId>)>> {
    let combos: Vec<Vec<Vec<AffixId>>> = (0..grammar.num_groups()).map(|g| grammar.combinations(g)).collect();
    let mut table = HashMap::new();
    for stem in &grammar.stems {
        for c in &combos[stem.group] {
            let surface = grammar
                .synthesize(stem.id, c)?
                .ok_or_else(|| Error::Data("slot combination rejected by synthesizer".into()))?;
            if let Some((other, _)) = table.insert(surface.clone(), (stem.id, c.clone())) {
                return Err(Error::Data(format!(
                    "grammar is ambiguous: '{surface}' is produced by stems {other} and {}",
                    stem.id
                )));
            }
        }
    }
    Ok(table)
}

#[derive(Serialize, Deserialize)]
struct LanguageData {
    grammar: Grammar,
    inventory: AffixSetInventory,
    correlation: StemSetCorrelation,
}

/// A grammar together with corpus statistics (affix-set inventory and
/// stem/affix-set correlation) and an exhaustive analysis table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LanguageData", into = "LanguageData")]
pub struct Language {
    grammar: Grammar,
    inventory: AffixSetInventory,
    correlation: StemSetCorrelation,
    forms: HashMap<String, (StemId, Vec<AffixId>)>,
}

impl TryFrom<LanguageData> for Language {
    type Error = Error;
    fn try_from(d: LanguageData) -> Result<Self> {
        Language::new(d.grammar, d.inventory, d.correlation)
    }
}

impl From<Language> for LanguageData {
    fn from(l: Language) -> Self {
        LanguageData { grammar: l.grammar, inventory: l.inventory, correlation: l.correlation }
    }
}

impl Language {
    pub fn new(grammar: Grammar, inventory: AffixSetInventory, correlation: StemSetCorrelation) -> Result<Self> {
        grammar.validate()?;
        let forms = surface_table(&grammar)?;
        Ok(Language { grammar, inventory, correlation, forms })
    }

    /// Gather statistics from `stats_sentences` generated sentences and
    /// build a `k`-set inventory plus correlation table.
    pub fn build(grammar: Grammar, stats_sentences: usize, k: usize, seed: u64) -> Result<Self> {
        grammar.validate()?;
        let sentences = generate_sentences(&grammar, stats_sentences, seed)?;
        let words: Vec<(StemId, Vec<AffixId>)> = sentences
            .iter()
            .flat_map(|s| s.toy.iter())
            .filter_map(|w| match w {
                WordSpec::Word { stem, affixes } => Some((*stem, affixes.clone())),
                WordSpec::Name(_) => None,
            })
            .collect();
        let obs: Vec<_> = words
            .iter()
            .map(|(s, a)| (grammar.stems[*s].group, a.clone()))
            .collect();
        let inventory = AffixSetInventory::build(&obs, grammar.num_groups(), k)?;
        let pairs: Vec<(StemId, SetId)> = words
            .iter()
            .map(|(s, a)| (*s, inventory.reduce(grammar.stems[*s].group, a)))
            .collect();
        let correlation = StemSetCorrelation::build(&pairs, grammar.stems.len(), inventory.len())?;
        Language::new(grammar, inventory, correlation)
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn inventory(&self) -> &AffixSetInventory {
        &self.inventory
    }

    pub fn correlation(&self) -> &StemSetCorrelation {
        &self.correlation
    }

    pub fn num_forms(&self) -> usize {
        self.forms.len()
    }

    /// All surface forms with their analyses, sorted by surface.
    pub fn forms(&self) -> Vec<(&str, StemId, &[AffixId])> {
        let mut v: Vec<_> = self
            .forms
            .iter()
            .map(|(s, (st, a))| (s.as_str(), *st, a.as_slice()))
            .collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }

    pub fn synthesize(&self, stem: StemId, affixes: &[AffixId]) -> Result<Option<String>> {
        self.grammar.synthesize(stem, affixes)
    }

    /// Build the analyzed token for a stem and affixes, or `None` if they are
    /// incompatible.
    pub fn token(&self, stem: StemId, affixes: &[AffixId]) -> Result<Option<AnalyzedToken>> {
        let Some(surface) = self.synthesize(stem, affixes)? else { return Ok(None) };
        let s = self.grammar.stem(stem)?;
        let mut ordered = affixes.to_vec();
        ordered.sort_by_key(|&a| self.grammar.affixes[a].slot);
        Ok(Some(AnalyzedToken {
            stem_id: stem,
            affixset_id: self.inventory.reduce(s.group, affixes),
            affix_ids: ordered,
            pos_id: s.pos,
            surface,
        }))
    }

    /// Total: in-grammar words get their unique analysis, anything else is
    /// returned unanalyzed.
    pub fn analyze(&self, surface: &str) -> Analysis {
        match self.forms.get(surface) {
            Some((stem, affixes)) => {
                let s = &self.grammar.stems[*stem];
                Analysis::Word(AnalyzedToken {
                    stem_id: *stem,
                    affix_ids: affixes.clone(),
                    pos_id: s.pos,
                    affixset_id: self.inventory.reduce(s.group, affixes),
                    surface: surface.to_string(),
                })
            }
            None => Analysis::Unanalyzed { surface: surface.to_string() },
        }
    }

    pub fn analyze_sentence(&self, text: &str) -> Vec<Analysis> {
        text.split_whitespace().map(|w| self.analyze(w)).collect()
    }

    pub fn rho(&self, stem: StemId, set: SetId) -> f64 {
        self.correlation.rho(stem, set)
    }

    /// Default toy language used throughout the crate.
    pub fn toy(seed: u64) -> Result<Self> {
        let grammar = Grammar::generate(&super::GrammarSpec::default(), seed)?;
        Language::build(grammar, 4000, 64, seed ^ 0x5eed)
    }
}
