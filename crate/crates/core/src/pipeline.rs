//! End-to-end workflow shared by the command-line tool and the integration
//! tests: data synthesis, training runs, and checkpoint-backed translation.

use std::collections::HashSet;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use morphmt_tensor::{Checkpoint, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::bpe::BpeVocab;
use crate::corpus::{generate_parallel_corpus, ParallelExample};
use crate::dataaug::{self, CopyCategory};
use crate::decoding::{DebugStep, DecoderParams, Translation, Translator};
use crate::error::{Error, Result};
use crate::metrics::{corpus_chrf_pp, ChrfParams};
use crate::par::Execution;
use crate::seq2seq::{ModelConfig, Seq2Seq, SideMode, LM_PROVIDER_PARAM};
use crate::synthlang::Language;
use crate::training::{prepare_examples, pretrain_lm_embeddings, EpochMetrics, LmPretrainConfig, TrainConfig, Trainer};
use crate::vocab::{MorphoCodec, SideCodec, VocabSizes};

/// Translation direction relative to the stored corpus, whose source side is
/// always the toy language and whose target side is always English.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    ToyToEnglish,
    EnglishToToy,
}

impl Direction {
    pub fn orient(self, ex: &ParallelExample) -> ParallelExample {
        match self {
            Direction::ToyToEnglish => ex.clone(),
            Direction::EnglishToToy => ex.reversed(),
        }
    }
}

/// Attention terms or representations switched off for an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablations {
    pub xpos: bool,
    pub lm_bias: bool,
    /// Replace the morphological representation with plain subword tokens.
    pub morpho: bool,
}

impl FromStr for Ablations {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut a = Ablations::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "xpos" => a.xpos = true,
                "lm_bias" | "lm" => a.lm_bias = true,
                "morpho" => a.morpho = true,
                other => return Err(Error::Config(format!("unknown ablation '{other}'"))),
            }
        }
        Ok(a)
    }
}

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub direction: Direction,
    /// Architecture; side modes and vocabulary sizes are filled in from the
    /// data when the run starts.
    pub model: ModelConfig,
    pub decoder: DecoderParams,
    pub train: TrainConfig,
    pub lm: LmPretrainConfig,
    pub bpe_vocab: usize,
    pub model_seed: u64,
    /// Beam width used when scoring the dev set after each epoch.
    pub dev_beam: usize,
    /// At most this many dev pairs are scored per epoch.
    pub dev_limit: usize,
    pub ablations: Ablations,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::desk()
    }
}

impl RunConfig {
    /// Small profile that trains on a laptop CPU.
    pub fn desk() -> Self {
        let model = ModelConfig::desk(VocabSizes::default(), VocabSizes::default());
        let lm = LmPretrainConfig { dim: model.lm_dim, ..LmPretrainConfig::default() };
        RunConfig {
            direction: Direction::ToyToEnglish,
            model,
            decoder: DecoderParams::default(),
            train: TrainConfig {
                epochs: 8,
                batch_size: 32,
                schedule: crate::training::LrSchedule { peak: 2e-3, warmup: 400 },
                clip_norm: Some(1.0),
                ..TrainConfig::default()
            },
            lm,
            bpe_vocab: 400,
            model_seed: 7,
            dev_beam: 1,
            dev_limit: 200,
            ablations: Ablations::default(),
        }
    }

    /// Published full-scale hyper-parameters.
    pub fn full() -> Self {
        let model = ModelConfig::full(VocabSizes::default(), VocabSizes::default());
        let lm = LmPretrainConfig { dim: model.lm_dim, ..LmPretrainConfig::default() };
        RunConfig {
            model,
            train: TrainConfig::default(),
            lm,
            bpe_vocab: 24_000,
            ..RunConfig::desk()
        }
    }

    pub fn with_ablations(mut self, a: Ablations) -> Self {
        self.ablations.xpos |= a.xpos;
        self.ablations.lm_bias |= a.lm_bias;
        self.ablations.morpho |= a.morpho;
        self
    }

    /// Side modes implied by direction and ablations: English is always
    /// subword tokens, the toy side is morphological unless ablated.
    fn side_modes(&self) -> (SideMode, SideMode) {
        let toy = if self.ablations.morpho { SideMode::Surface } else { SideMode::Morpho };
        match self.direction {
            Direction::ToyToEnglish => (toy, SideMode::Surface),
            Direction::EnglishToToy => (SideMode::Surface, toy),
        }
    }

    /// The model configuration for the given vocabularies.
    pub fn resolve_model(&self, src: &SideCodec, tgt: &SideCodec) -> Result<ModelConfig> {
        let mut m = self.model.clone();
        let (src_mode, tgt_mode) = self.side_modes();
        m.src_mode = src_mode;
        m.tgt_mode = tgt_mode;
        m.src_vocab = src.sizes();
        m.tgt_vocab = tgt.sizes();
        if self.ablations.xpos {
            m.cross_attn.xpos = false;
        }
        if self.ablations.lm_bias {
            m.encoder_attn.lm_bias = false;
            m.cross_attn.lm_bias = false;
        }
        m.validate()?;
        Ok(m)
    }

    fn codecs(&self, lang: &Arc<Language>, bpe: &Arc<BpeVocab>) -> Result<(SideCodec, SideCodec)> {
        let (src_mode, tgt_mode) = self.side_modes();
        let make = |mode: SideMode| -> Result<SideCodec> {
            Ok(match mode {
                SideMode::Morpho => SideCodec::Morpho(MorphoCodec::new(lang.clone(), bpe.clone())?),
                SideMode::Surface => SideCodec::Surface(bpe.clone()),
            })
        };
        Ok((make(src_mode)?, make(tgt_mode)?))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.decoder.validate()?;
        if self.dev_beam == 0 {
            return Err(Error::Config("dev_beam must be at least 1".into()));
        }
        Ok(())
    }
}

/// Options for synthesizing a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub n: usize,
    pub seed: u64,
    pub copy_pairs: usize,
    pub numbers: usize,
    pub codeswitch: Option<f64>,
    /// Held-out pairs whose source sentences do not occur in the corpus.
    pub held_out: usize,
}

impl SynthOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        SynthOptions { n, seed, copy_pairs: 0, numbers: 0, codeswitch: None, held_out: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub language: Arc<Language>,
    pub corpus: Vec<ParallelExample>,
    pub held_out: Vec<ParallelExample>,
}

/// Seed offsets keeping the independent random streams apart.
const CORPUS_STREAM: u64 = 1;
const HELD_OUT_STREAM: u64 = 2;
const COPY_STREAM: u64 = 3;
const NUMBER_STREAM: u64 = 4;
const CODESWITCH_STREAM: u64 = 5;

/// Builds (or reuses) a toy language and samples a corpus from it.
pub fn synthesize_data(opts: &SynthOptions, language: Option<Arc<Language>>) -> Result<SynthData> {
    let language = match language {
        Some(l) => l,
        None => Arc::new(Language::toy(opts.seed)?),
    };
    let stream = |k: u64| opts.seed.wrapping_mul(0x9e37_79b9).wrapping_add(k);
    let mut corpus = generate_parallel_corpus(&language, opts.n, stream(CORPUS_STREAM))?;
    let held_out = if opts.held_out > 0 {
        let seen: HashSet<&str> = corpus.iter().map(|e| e.src.as_str()).collect();
        let mut out = Vec::with_capacity(opts.held_out);
        let mut round = 0;
        while out.len() < opts.held_out && round < 16 {
            let extra = generate_parallel_corpus(&language, 2 * opts.held_out, stream(HELD_OUT_STREAM + 100 * round))?;
            for e in extra {
                if out.len() < opts.held_out && !seen.contains(e.src.as_str()) {
                    out.push(e);
                }
            }
            round += 1;
        }
        out
    } else {
        Vec::new()
    };
    if let Some(rate) = opts.codeswitch {
        let table = dataaug::generate_foreign_terms(&language, 20, stream(CODESWITCH_STREAM));
        corpus = dataaug::inject_codeswitch(&corpus, &language, &table, rate, stream(CODESWITCH_STREAM))?;
    }
    if opts.copy_pairs > 0 {
        let exclude: HashSet<String> = language.grammar().names.iter().cloned().collect();
        let k = opts.copy_pairs;
        let lexicon = dataaug::generate_copy_lexicon(k, k / 5, k / 5, stream(COPY_STREAM), &exclude);
        corpus.extend(dataaug::gen_copy_pairs(&lexicon, k, stream(COPY_STREAM))?.iter().map(|p| p.to_example()));
    }
    if opts.numbers > 0 {
        corpus.extend(dataaug::number_pairs(language.grammar(), opts.numbers, stream(NUMBER_STREAM))?);
    }
    Ok(SynthData { language, corpus, held_out })
}

/// Unseen capitalised names, disjoint from `exclude`.
pub fn unseen_names(n: usize, seed: u64, exclude: &HashSet<String>) -> Vec<String> {
    dataaug::generate_copy_lexicon(n, 0, 0, seed, exclude)
        .into_iter()
        .filter(|(_, c)| *c == CopyCategory::Name)
        .map(|(t, _)| t)
        .collect()
}

/// Held-out probes for copying: each pair whose source contains one of
/// `known` names gets that name replaced, on both sides, by the next unseen
/// name. Returns the rewritten pairs with the name each must reproduce.
pub fn name_copy_probes(pairs: &[ParallelExample], known: &[String], unseen: &[String]) -> Vec<(ParallelExample, String)> {
    let known: HashSet<&str> = known.iter().map(String::as_str).collect();
    let mut fresh = unseen.iter();
    let mut out = Vec::new();
    for ex in pairs {
        let Some(old) = ex.src.split_whitespace().find(|w| known.contains(w)) else { continue };
        let Some(new) = fresh.next() else { break };
        let swap = |text: &str| text.split_whitespace().map(|w| if w == old { new.as_str() } else { w }).collect::<Vec<_>>().join(" ");
        out.push((ParallelExample::new(swap(&ex.src), swap(&ex.tgt)).tagged("name-probe"), new.clone()));
    }
    out
}

/// Probes that translate each unseen name on its own.
pub fn isolated_name_probes(unseen: &[String]) -> Vec<(ParallelExample, String)> {
    unseen.iter().map(|u| (ParallelExample::new(u.clone(), u.clone()).tagged("name-probe"), u.clone())).collect()
}

/// Fraction of probes whose translation contains the expected name as a
/// whole word. Probes are in stored orientation; names are copied in
/// either direction.
pub fn copy_rate(model: &TrainedModel, probes: &[(ParallelExample, String)], exec: Execution) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::Data("no copy probes".into()));
    }
    let src: Vec<String> = probes.iter().map(|(e, _)| model.run.direction.orient(e).src).collect();
    let out = model.translate_all(&src, model.run.decoder, exec)?;
    let hits = out
        .iter()
        .zip(probes)
        .filter(|(t, (_, name))| t.text.split_whitespace().any(|w| w == name))
        .count();
    Ok(hits as f64 / probes.len() as f64)
}

/// Checkpoint metadata describing how to rebuild a trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelMetadata {
    format: String,
    run: RunConfig,
    model: ModelConfig,
    language: Language,
    bpe: BpeVocab,
}

const FORMAT_TAG: &str = "morphmt-model-1";

/// A model together with its vocabularies.
pub struct TrainedModel {
    pub run: RunConfig,
    pub language: Arc<Language>,
    pub bpe: Arc<BpeVocab>,
    pub model: Seq2Seq,
    pub store: ParamStore<f32>,
    pub src: SideCodec,
    pub tgt: SideCodec,
}

impl TrainedModel {
    /// Fresh, untrained model for a run over `texts` (used to train the
    /// joint subword vocabulary).
    pub fn init(run: &RunConfig, language: Arc<Language>, texts: &[&str]) -> Result<Self> {
        run.validate()?;
        let bpe = Arc::new(BpeVocab::train(texts, run.bpe_vocab)?);
        let (src, tgt) = run.codecs(&language, &bpe)?;
        let config = run.resolve_model(&src, &tgt)?;
        let mut store = ParamStore::new();
        let model = Seq2Seq::new(config, &mut store, run.model_seed)?;
        Ok(TrainedModel { run: run.clone(), language, bpe, model, store, src, tgt })
    }

    fn metadata(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(ModelMetadata {
            format: FORMAT_TAG.into(),
            run: self.run.clone(),
            model: self.model.config.clone(),
            language: (*self.language).clone(),
            bpe: (*self.bpe).clone(),
        })?)
    }

    /// Rebuilds a model from a checkpoint written by [`train_run`].
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: ModelMetadata = serde_json::from_str(&ck.metadata)
            .map_err(|e| Error::Data(format!("checkpoint metadata is not a model description: {e}")))?;
        if meta.format != FORMAT_TAG {
            return Err(Error::Data(format!("unsupported checkpoint format '{}'", meta.format)));
        }
        let language = Arc::new(meta.language);
        let bpe = Arc::new(meta.bpe);
        let (src, tgt) = meta.run.codecs(&language, &bpe)?;
        if src.sizes() != meta.model.src_vocab || tgt.sizes() != meta.model.tgt_vocab {
            return Err(Error::Config("checkpoint vocabularies do not match its model".into()));
        }
        let mut store = ParamStore::new();
        let model = Seq2Seq::new(meta.model, &mut store, meta.run.model_seed)?;
        ck.load_into(&mut store)?;
        Ok(TrainedModel { run: meta.run, language, bpe, model, store, src, tgt })
    }

    pub fn translator(&self, params: DecoderParams) -> Result<Translator<'_, f32>> {
        Translator::new(&self.model, &self.store, &self.src, &self.tgt, params)
    }

    pub fn translate_all(&self, texts: &[String], params: DecoderParams, exec: Execution) -> Result<Vec<Translation>> {
        self.translator(params)?.translate_all(texts, exec)
    }

    pub fn debug_trace(&self, sentence: &str) -> Result<Vec<DebugStep>> {
        self.translator(self.run.decoder)?.debug_trace(sentence)
    }

    /// Installs pretrained frozen embeddings for the LM bias term.
    fn pretrain_lm(&mut self, sources: &[String]) -> Result<Vec<f64>> {
        let Some(id) = self.store.id(LM_PROVIDER_PARAM) else {
            return Ok(Vec::new());
        };
        let sentences: Vec<Vec<usize>> = sources.iter().map(|s| self.src.encode(s).token_ids()).collect();
        let cfg = LmPretrainConfig { dim: self.model.config.lm_dim, ..self.run.lm };
        let pre = pretrain_lm_embeddings::<f64>(&sentences, self.model.config.lm_vocab(), &cfg)?;
        let table: Tensor<f32> = pre.table.cast();
        self.store.set(id, table)?;
        Ok(pre.epoch_losses)
    }
}

/// Result of a training run.
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub metrics: Vec<EpochMetrics>,
    pub checkpoint: Checkpoint,
    /// Training pairs dropped for exceeding the maximum length.
    pub dropped: usize,
}

/// Corpus ChrF++ of `model` translating `pairs` (already oriented).
pub fn score_pairs(model: &TrainedModel, pairs: &[ParallelExample], params: DecoderParams, exec: Execution) -> Result<f64> {
    let src: Vec<String> = pairs.iter().map(|e| e.src.clone()).collect();
    let refs: Vec<String> = pairs.iter().map(|e| e.tgt.clone()).collect();
    let hyps: Vec<String> = model.translate_all(&src, params, exec)?.into_iter().map(|t| t.text).collect();
    corpus_chrf_pp(&hyps, &refs, &ChrfParams::default(), exec)
}

/// Trains a model on `corpus` (stored orientation), scoring `dev` after
/// every epoch. One JSON line per epoch goes to `metrics`.
pub fn train_run(
    run: &RunConfig,
    language: Arc<Language>,
    corpus: &[ParallelExample],
    dev: &[ParallelExample],
    exec: Execution,
    metrics: &mut dyn Write,
) -> Result<TrainOutcome> {
    if corpus.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    let oriented: Vec<ParallelExample> = corpus.iter().map(|e| run.direction.orient(e)).collect();
    let dev: Vec<ParallelExample> = dev.iter().take(run.dev_limit).map(|e| run.direction.orient(e)).collect();
    let texts: Vec<&str> = oriented.iter().flat_map(|e| [e.src.as_str(), e.tgt.as_str()]).collect();
    let mut tm = TrainedModel::init(run, language, &texts)?;
    if tm.model.config.uses_lm_bias() {
        let sources: Vec<String> = oriented.iter().map(|e| e.src.clone()).collect();
        let losses = tm.pretrain_lm(&sources)?;
        log::info!("LM provider pretrained, losses {losses:?}");
    }
    let (data, dropped) = prepare_examples(&oriented, &tm.src, &tm.tgt, tm.model.config.max_len);
    if data.is_empty() {
        return Err(Error::Data("no training pair fits within max_len".into()));
    }
    let mut trainer = Trainer::new(run.train.clone(), &tm.model, &tm.store, exec)?;
    let dev_params = DecoderParams { beam: run.dev_beam, ..run.decoder };
    let events = {
        let TrainedModel { model, store, src, tgt, .. } = &mut tm;
        let score = |s: &ParamStore<f32>| -> Result<f64> {
            let t = Translator::new(model, s, src, tgt, dev_params)?;
            let srcs: Vec<String> = dev.iter().map(|e| e.src.clone()).collect();
            let refs: Vec<String> = dev.iter().map(|e| e.tgt.clone()).collect();
            let hyps: Vec<String> = t.translate_all(&srcs, exec)?.into_iter().map(|t| t.text).collect();
            corpus_chrf_pp(&hyps, &refs, &ChrfParams::default(), exec)
        };
        let dev_fn: Option<&dyn Fn(&ParamStore<f32>) -> Result<f64>> = if dev.is_empty() { None } else { Some(&score) };
        trainer.fit(model, store, &data, dev_fn, metrics)?
    };
    let checkpoint = trainer.checkpoint(&tm.store, tm.metadata()?)?;
    Ok(TrainOutcome { model: tm, metrics: events, checkpoint, dropped })
}

/// Back-translates monolingual lines with a trained model. The synthetic
/// pairs are returned in stored orientation (toy source, English target)
/// and tagged "backtranslated".
pub fn backtranslate(model: &TrainedModel, lines: &[String], exec: Execution) -> Result<Vec<ParallelExample>> {
    let out = model.translate_all(lines, model.run.decoder, exec)?;
    Ok(lines
        .iter()
        .zip(out)
        .map(|(line, t)| {
            let ex = match model.run.direction {
                Direction::ToyToEnglish => ParallelExample::new(line.clone(), t.text),
                Direction::EnglishToToy => ParallelExample::new(t.text, line.clone()),
            };
            ex.tagged("backtranslated")
        })
        .collect())
}
