//! Beam search over the decoder. In morpho mode each step's candidates come
//! from inflection generation; in surface mode from the top tokens.

pub mod inflection;

use morphmt_tensor::{softmax_slice, Graph, ParamStore, Real};
use serde::{Deserialize, Serialize};

use crate::bpe;
use crate::error::{Error, Result};
use crate::nn::Ctx;
use crate::par::{self, Execution};
use crate::seq2seq::{head_probabilities, Encoded, Seq2Seq, StepOutput};
use crate::synthlang::Language;
use crate::vocab::{MorphoCodec, SideCodec, SideInput, WordComposition};

pub use inflection::{
    affix_merge, arg_sort_desc, compute_score, filter_and_cutoff, generate_inflections, generate_inflections_traced,
    inflection_group_probabilities, CandidateInflection, DecoderParams, GenerationTrace, GroupScoring, Morphology,
};

/// The target language's morphology as seen through a morpho codec.
pub struct TargetMorphology<'a> {
    codec: &'a MorphoCodec,
    lang: &'a Language,
}

impl<'a> TargetMorphology<'a> {
    pub fn new(codec: &'a MorphoCodec) -> Self {
        TargetMorphology { codec, lang: codec.language() }
    }
}

impl Morphology for TargetMorphology<'_> {
    fn num_groups(&self) -> usize {
        self.lang.grammar().groups.len()
    }

    fn stem_group(&self, stem: usize) -> usize {
        self.codec.stem_group(stem)
    }

    fn pos_group(&self, pos: usize) -> usize {
        self.lang.grammar().pos_tags[pos].group
    }

    fn set_group(&self, set: usize) -> usize {
        self.lang.inventory().sets()[set].group
    }

    fn set_affixes(&self, set: usize) -> &[usize] {
        &self.lang.inventory().sets()[set].affixes
    }

    fn affix_group(&self, affix: usize) -> usize {
        self.lang.grammar().affixes[affix].group
    }

    fn affix_slot(&self, affix: usize) -> usize {
        self.lang.grammar().affixes[affix].slot
    }

    fn rho(&self, stem: usize, set: usize) -> f64 {
        match self.codec.as_grammar_stem(stem) {
            Some(s) => self.lang.rho(s, set),
            None => 1.0 / self.lang.inventory().len() as f64,
        }
    }

    /// Grammar stems go through the synthesizer; EOS and subword pieces
    /// only exist without affixes.
    fn synthesize(&self, stem: usize, affixes: &[usize]) -> Option<String> {
        if let Some(s) = self.codec.as_grammar_stem(stem) {
            return self.lang.synthesize(s, affixes).ok().flatten();
        }
        if !affixes.is_empty() {
            return None;
        }
        if stem == bpe::EOS {
            return Some(String::new());
        }
        self.codec.as_piece(stem).and_then(|p| self.codec.bpe().token(p)).map(str::to_string)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub text: String,
    /// Cumulative log score divided by the number of emitted units.
    pub score: f64,
    pub log_score: f64,
    pub length: usize,
    /// False when no hypothesis emitted EOS within the length budget.
    pub finished: bool,
}

#[derive(Debug, Clone)]
struct Hypothesis {
    prefix: SideInput,
    log_score: f64,
    finished: bool,
}

impl Hypothesis {
    fn emitted(&self) -> usize {
        self.prefix.len() - 1
    }

    fn normalized(&self) -> f64 {
        self.log_score / self.emitted().max(1) as f64
    }
}

/// Highest length-normalised score; the earliest wins ties.
fn best_of(hyps: &[Hypothesis]) -> Option<&Hypothesis> {
    let mut best: Option<&Hypothesis> = None;
    for h in hyps {
        if best.map_or(true, |b| h.normalized() > b.normalized()) {
            best = Some(h);
        }
    }
    best
}

/// One expansion option: the unit to append and its probability-like score.
struct Expansion {
    unit: Unit,
    score: f64,
    eos: bool,
}

enum Unit {
    Word(WordComposition),
    Token(usize),
}

/// One decoding step of the debug trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugStep {
    pub step: usize,
    pub prefix: String,
    pub trace: Option<GenerationTrace>,
    pub chosen: String,
    pub score: f64,
}

pub struct Translator<'a, F: Real> {
    pub model: &'a Seq2Seq,
    pub store: &'a ParamStore<F>,
    pub src: &'a SideCodec,
    pub tgt: &'a SideCodec,
    pub params: DecoderParams,
}

impl<'a, F: Real> Translator<'a, F> {
    pub fn new(model: &'a Seq2Seq, store: &'a ParamStore<F>, src: &'a SideCodec, tgt: &'a SideCodec, params: DecoderParams) -> Result<Self> {
        params.validate()?;
        if src.is_morpho() != (model.config.src_mode == crate::seq2seq::SideMode::Morpho)
            || tgt.is_morpho() != (model.config.tgt_mode == crate::seq2seq::SideMode::Morpho)
            || src.sizes() != model.config.src_vocab
            || tgt.sizes() != model.config.tgt_vocab
        {
            return Err(Error::Config("codec vocabularies do not match the model".into()));
        }
        Ok(Translator { model, store, src, tgt, params })
    }

    fn step_budget(&self, src_len: usize) -> usize {
        (2 * src_len + 10).min(self.model.config.max_len - 1)
    }

    fn expansions(&self, out: StepOutput) -> Result<Vec<Expansion>> {
        match (out, self.tgt) {
            (StepOutput::Morpho(o), SideCodec::Morpho(codec)) => {
                let probs = head_probabilities(&o);
                let morph = TargetMorphology::new(codec);
                let cands = generate_inflections(&morph, &probs, &self.params)?;
                Ok(cands
                    .into_iter()
                    .filter(|c| c.score > 0.0)
                    .map(|c| Expansion {
                        eos: c.stem == bpe::EOS,
                        score: c.score,
                        unit: Unit::Word(WordComposition::new(c.stem, c.affixes, c.pos, c.set)),
                    })
                    .collect())
            }
            (StepOutput::Surface(logits), SideCodec::Surface(_)) => {
                let p = softmax_slice(&logits);
                Ok(arg_sort_desc(&p, p.len())
                    .into_iter()
                    .filter(|&t| t != bpe::PAD && t != bpe::BOS && t != bpe::UNK && p[t] > 0.0)
                    .take(self.params.beam)
                    .map(|t| Expansion { unit: Unit::Token(t), score: p[t], eos: t == bpe::EOS })
                    .collect())
            }
            _ => Err(Error::Config("decoder output does not match the target codec".into())),
        }
    }

    fn extend(prefix: &SideInput, unit: Unit) -> SideInput {
        match (prefix, unit) {
            (SideInput::Morpho(w), Unit::Word(u)) => {
                let mut w = w.clone();
                w.push(u);
                SideInput::Morpho(w)
            }
            (SideInput::Surface(t), Unit::Token(u)) => {
                let mut t = t.clone();
                t.push(u);
                SideInput::Surface(t)
            }
            _ => unreachable!("unit kind always follows the target codec"),
        }
    }

    fn render(&self, prefix: &SideInput) -> String {
        let body = match prefix {
            SideInput::Morpho(w) => SideInput::Morpho(w[1..].to_vec()),
            SideInput::Surface(t) => SideInput::Surface(t[1..].to_vec()),
        };
        self.tgt.decode(&body)
    }

    pub fn translate(&self, text: &str) -> Result<Translation> {
        let src = self.src.encode(text);
        if src.is_empty() {
            return Ok(Translation { text: String::new(), score: 0.0, log_score: 0.0, length: 0, finished: true });
        }
        self.translate_input(&src)
    }

    pub fn translate_input(&self, src: &SideInput) -> Result<Translation> {
        let g = Graph::new();
        let cx = Ctx::eval(&g, self.store);
        let enc = self.model.encode(&cx, src)?;
        self.beam_search(&cx, &enc, self.step_budget(src.len()))
    }

    fn beam_search(&self, cx: &Ctx<F>, enc: &Encoded, budget: usize) -> Result<Translation> {
        let beam = self.params.beam;
        let mut live = vec![Hypothesis { prefix: self.tgt.bos(), log_score: 0.0, finished: false }];
        let mut finished: Vec<Hypothesis> = Vec::new();
        let mut last_live = live.clone();
        for _ in 0..budget {
            let mut pool = Vec::new();
            for h in &live {
                let out = self.model.decode_step(cx, enc, &h.prefix)?;
                for e in self.expansions(out)? {
                    pool.push(Hypothesis {
                        prefix: Self::extend(&h.prefix, e.unit),
                        log_score: h.log_score + e.score.ln(),
                        finished: e.eos,
                    });
                }
            }
            if pool.is_empty() {
                break;
            }
            pool.sort_by(|a, b| b.normalized().total_cmp(&a.normalized()));
            pool.truncate(beam);
            live = Vec::new();
            for h in pool {
                if h.finished {
                    finished.push(h);
                } else {
                    live.push(h);
                }
            }
            if !live.is_empty() {
                last_live = live.clone();
            }
            if live.is_empty() || finished.len() >= beam {
                break;
            }
        }
        let (best, done) = match best_of(&finished) {
            Some(h) => (h.clone(), true),
            None => {
                log::warn!("no hypothesis finished within {budget} steps");
                (best_of(&last_live).expect("root hypothesis").clone(), false)
            }
        };
        Ok(Translation {
            text: self.render(&best.prefix),
            score: best.normalized(),
            log_score: best.log_score,
            length: best.emitted(),
            finished: done,
        })
    }

    /// Translates every line; sentences are independent, so they may run in
    /// parallel.
    pub fn translate_all(&self, texts: &[String], exec: Execution) -> Result<Vec<Translation>>
    where
        F: Sync,
    {
        par::try_map(exec, texts, |t| self.translate(t))
    }

    /// Greedy decode that records the full inflection-generation trace of
    /// every step.
    pub fn debug_trace(&self, text: &str) -> Result<Vec<DebugStep>> {
        let src = self.src.encode(text);
        if src.is_empty() {
            return Ok(Vec::new());
        }
        let g = Graph::new();
        let cx = Ctx::eval(&g, self.store);
        let enc = self.model.encode(&cx, &src)?;
        let mut prefix = self.tgt.bos();
        let mut steps = Vec::new();
        for step in 0..self.step_budget(src.len()) {
            let out = self.model.decode_step(&cx, &enc, &prefix)?;
            let trace = match (&out, self.tgt) {
                (StepOutput::Morpho(o), SideCodec::Morpho(codec)) => {
                    Some(generate_inflections_traced(&TargetMorphology::new(codec), &head_probabilities(o), &self.params)?)
                }
                _ => None,
            };
            let mut best: Option<Expansion> = None;
            for e in self.expansions(out)? {
                if best.as_ref().map_or(true, |b| e.score > b.score) {
                    best = Some(e);
                }
            }
            let Some(best) = best else { break };
            let (eos, score) = (best.eos, best.score);
            let before = self.render(&prefix);
            prefix = Self::extend(&prefix, best.unit);
            steps.push(DebugStep { step, prefix: before, trace, chosen: self.render(&prefix), score });
            if eos {
                break;
            }
        }
        Ok(steps)
    }
}
