//! Mapping between text and model inputs for each side of a translation
//! model: morphological word compositions or flat subword tokens.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bpe::{self, BpeVocab, WORD_START};
use crate::error::{Error, Result};
use crate::synthlang::{Analysis, GroupId, Language, StemId, PARTICLE};

/// Stem ids reserved before grammar stems; they coincide with the BPE
/// special token ids.
pub const NUM_STEM_SPECIALS: usize = bpe::NUM_SPECIALS;
pub const MAX_AFFIXES: usize = 28;

/// One word as the morpho-encoder sees it. Affixes are kept sorted so that
/// input order never matters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WordComposition {
    pub stem: usize,
    pub affixes: Vec<usize>,
    pub pos: usize,
    pub set: usize,
}

impl WordComposition {
    pub fn new(stem: usize, mut affixes: Vec<usize>, pos: usize, set: usize) -> Self {
        affixes.sort_unstable();
        affixes.dedup();
        WordComposition { stem, affixes, pos, set }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VocabSizes {
    pub stems: usize,
    pub affixes: usize,
    pub pos: usize,
    pub sets: usize,
    pub tokens: usize,
}

/// Model input for one side of one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SideInput {
    Morpho(Vec<WordComposition>),
    Surface(Vec<usize>),
}

impl SideInput {
    pub fn len(&self) -> usize {
        match self {
            SideInput::Morpho(w) => w.len(),
            SideInput::Surface(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ids used for LM-provider lookup: stems in morpho mode, tokens otherwise.
    pub fn token_ids(&self) -> Vec<usize> {
        match self {
            SideInput::Morpho(w) => w.iter().map(|c| c.stem).collect(),
            SideInput::Surface(t) => t.clone(),
        }
    }

    pub fn prefix(&self, len: usize) -> SideInput {
        match self {
            SideInput::Morpho(w) => SideInput::Morpho(w[..len].to_vec()),
            SideInput::Surface(t) => SideInput::Surface(t[..len].to_vec()),
        }
    }
}

/// Morphological side codec: grammar stems come from the analyzer, anything
/// else is split by BPE into pieces that act as special stems without
/// affixes (POS "X", the particle group's empty affix set).
#[derive(Debug, Clone)]
pub struct MorphoCodec {
    lang: Arc<Language>,
    bpe: Arc<BpeVocab>,
    pos_x: usize,
}

impl MorphoCodec {
    pub fn new(lang: Arc<Language>, bpe: Arc<BpeVocab>) -> Result<Self> {
        let pos_x = lang
            .grammar()
            .pos_by_name("X")
            .ok_or_else(|| Error::Config("grammar needs an 'X' POS tag for subword stems".into()))?;
        Ok(MorphoCodec { lang, bpe, pos_x })
    }

    pub fn language(&self) -> &Language {
        &self.lang
    }

    pub fn bpe(&self) -> &BpeVocab {
        &self.bpe
    }

    pub fn pos_x(&self) -> usize {
        self.pos_x
    }

    fn num_grammar_stems(&self) -> usize {
        self.lang.grammar().stems.len()
    }

    pub fn sizes(&self) -> VocabSizes {
        let g = self.lang.grammar();
        VocabSizes {
            stems: NUM_STEM_SPECIALS + g.stems.len() + self.bpe.len(),
            affixes: g.affixes.len(),
            pos: g.pos_tags.len(),
            sets: self.lang.inventory().len(),
            tokens: 0,
        }
    }

    pub fn grammar_stem_id(&self, stem: StemId) -> usize {
        NUM_STEM_SPECIALS + stem
    }

    pub fn piece_stem_id(&self, piece: usize) -> usize {
        NUM_STEM_SPECIALS + self.num_grammar_stems() + piece
    }

    pub fn as_grammar_stem(&self, model_stem: usize) -> Option<StemId> {
        let s = model_stem.checked_sub(NUM_STEM_SPECIALS)?;
        (s < self.num_grammar_stems()).then_some(s)
    }

    pub fn as_piece(&self, model_stem: usize) -> Option<usize> {
        let p = model_stem.checked_sub(NUM_STEM_SPECIALS + self.num_grammar_stems())?;
        (p < self.bpe.len()).then_some(p)
    }

    pub fn stem_group(&self, model_stem: usize) -> GroupId {
        match self.as_grammar_stem(model_stem) {
            Some(s) => self.lang.grammar().stems[s].group,
            None => PARTICLE,
        }
    }

    /// Composition for a special stem (BOS, EOS, ...).
    pub fn special(&self, stem: usize) -> WordComposition {
        WordComposition::new(stem, Vec::new(), self.pos_x, self.lang.inventory().empty_set(PARTICLE))
    }

    pub fn compose(&self, analysis: &Analysis) -> Vec<WordComposition> {
        match analysis {
            Analysis::Word(t) => vec![WordComposition::new(
                self.grammar_stem_id(t.stem_id),
                t.affix_ids.clone(),
                t.pos_id,
                t.affixset_id,
            )],
            Analysis::Unanalyzed { surface } => self
                .bpe
                .encode_word(surface)
                .into_iter()
                .map(|p| self.special(self.piece_stem_id(p)))
                .collect(),
        }
    }

    pub fn encode(&self, text: &str) -> Vec<WordComposition> {
        self.lang.analyze_sentence(text).iter().flat_map(|a| self.compose(a)).collect()
    }

    /// Surface string of one emitted unit: a synthesized word, or a subword
    /// piece (which keeps its word-start marker).
    pub fn unit_surface(&self, unit: &WordComposition) -> Option<String> {
        if let Some(s) = self.as_grammar_stem(unit.stem) {
            return self.lang.synthesize(s, &unit.affixes).ok().flatten();
        }
        self.as_piece(unit.stem).and_then(|p| self.bpe.token(p)).map(str::to_string)
    }

    /// Join emitted units back into text.
    pub fn decode(&self, units: &[WordComposition]) -> String {
        let mut words: Vec<String> = Vec::new();
        for u in units {
            if u.stem < NUM_STEM_SPECIALS {
                continue;
            }
            let Some(s) = self.unit_surface(u) else { continue };
            if self.as_grammar_stem(u.stem).is_some() {
                words.push(s);
            } else if let Some(rest) = s.strip_prefix(WORD_START) {
                words.push(rest.to_string());
            } else if let Some(last) = words.last_mut() {
                last.push_str(&s);
            } else {
                words.push(s);
            }
        }
        words.retain(|w| !w.is_empty());
        words.join(" ")
    }
}

/// How one side of the model represents text.
#[derive(Debug, Clone)]
pub enum SideCodec {
    Morpho(MorphoCodec),
    Surface(Arc<BpeVocab>),
}

impl SideCodec {
    pub fn sizes(&self) -> VocabSizes {
        match self {
            SideCodec::Morpho(m) => m.sizes(),
            SideCodec::Surface(b) => VocabSizes { stems: 0, affixes: 0, pos: 0, sets: 0, tokens: b.len() },
        }
    }

    pub fn is_morpho(&self) -> bool {
        matches!(self, SideCodec::Morpho(_))
    }

    pub fn encode(&self, text: &str) -> SideInput {
        match self {
            SideCodec::Morpho(m) => SideInput::Morpho(m.encode(text)),
            SideCodec::Surface(b) => SideInput::Surface(b.encode(text)),
        }
    }

    pub fn bos(&self) -> SideInput {
        match self {
            SideCodec::Morpho(m) => SideInput::Morpho(vec![m.special(bpe::BOS)]),
            SideCodec::Surface(_) => SideInput::Surface(vec![bpe::BOS]),
        }
    }

    /// Decoder input (BOS + text) and per-position targets (text + EOS).
    pub fn teacher_forcing(&self, text: &str) -> (SideInput, SideInput) {
        match self {
            SideCodec::Morpho(m) => {
                let words = m.encode(text);
                let mut input = vec![m.special(bpe::BOS)];
                input.extend(words.iter().cloned());
                let mut target = words;
                target.push(m.special(bpe::EOS));
                (SideInput::Morpho(input), SideInput::Morpho(target))
            }
            SideCodec::Surface(b) => {
                let ids = b.encode(text);
                let mut input = vec![bpe::BOS];
                input.extend(&ids);
                let mut target = ids;
                target.push(bpe::EOS);
                (SideInput::Surface(input), SideInput::Surface(target))
            }
        }
    }

    pub fn decode(&self, units: &SideInput) -> String {
        match (self, units) {
            (SideCodec::Morpho(m), SideInput::Morpho(u)) => m.decode(u),
            (SideCodec::Surface(b), SideInput::Surface(t)) => b.decode(t),
            _ => String::new(),
        }
    }
}
