//! Pre-LayerNorm encoder-decoder. Each side runs in morpho mode (word
//! compositions through a morpho-encoder, multi-task heads on the target) or
//! surface mode (flat subword tokens, one softmax head).

use morphmt_tensor::{sigmoid, softmax_slice, ParamId, ParamStore, Real, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::bpe;
use crate::error::{Error, Result};
use crate::morpho_encoder::{MorphoEncoder, MorphoEncoderConfig};
use crate::nn::attention::{
    causal_mask, key_padding_mask, AttentionLayer, LmBiasProvider, LogitBiasConfig, PositionTables,
};
use crate::nn::{Ctx, EncoderBlock, FeedForward, Init, LayerNorm, Linear};
use crate::vocab::{SideInput, VocabSizes, WordComposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideMode {
    Morpho,
    Surface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphoSettings {
    pub d_m: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub src_mode: SideMode,
    pub tgt_mode: SideMode,
    pub d: usize,
    pub ffn: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub morpho: MorphoSettings,
    pub encoder_attn: LogitBiasConfig,
    pub decoder_attn: LogitBiasConfig,
    pub cross_attn: LogitBiasConfig,
    /// Width of the frozen LM embeddings used by the LM bias term.
    pub lm_dim: usize,
    pub src_vocab: VocabSizes,
    pub tgt_vocab: VocabSizes,
}

fn default_sites(lm: bool) -> (LogitBiasConfig, LogitBiasConfig, LogitBiasConfig) {
    let encoder = LogitBiasConfig { untied_pos: true, relative: true, lm_bias: lm, ..LogitBiasConfig::default() };
    let decoder = LogitBiasConfig { untied_pos: true, relative: true, ..LogitBiasConfig::default() };
    let cross = LogitBiasConfig { xpos: true, lm_bias: lm, ..LogitBiasConfig::default() };
    (encoder, decoder, cross)
}

impl ModelConfig {
    /// Published full-scale hyper-parameters (with pretrained LM bias).
    pub fn full(src_vocab: VocabSizes, tgt_vocab: VocabSizes) -> Self {
        let (encoder_attn, decoder_attn, cross_attn) = default_sites(true);
        ModelConfig {
            src_mode: SideMode::Morpho,
            tgt_mode: SideMode::Morpho,
            d: 768,
            ffn: 3072,
            heads: 12,
            enc_layers: 5,
            dec_layers: 7,
            dropout: 0.1,
            max_len: 512,
            morpho: MorphoSettings { d_m: 128, layers: 3, heads: 4, ffn: 512 },
            encoder_attn,
            decoder_attn,
            cross_attn,
            lm_dim: 768,
            src_vocab,
            tgt_vocab,
        }
    }

    /// Small profile that trains on a CPU in minutes.
    pub fn desk(src_vocab: VocabSizes, tgt_vocab: VocabSizes) -> Self {
        let (encoder_attn, decoder_attn, cross_attn) = default_sites(false);
        ModelConfig {
            src_mode: SideMode::Morpho,
            tgt_mode: SideMode::Morpho,
            d: 64,
            ffn: 256,
            heads: 4,
            enc_layers: 2,
            dec_layers: 2,
            dropout: 0.1,
            max_len: 64,
            morpho: MorphoSettings { d_m: 16, layers: 1, heads: 4, ffn: 64 },
            encoder_attn,
            decoder_attn,
            cross_attn,
            lm_dim: 32,
            src_vocab,
            tgt_vocab,
        }
    }

    pub fn uses_lm_bias(&self) -> bool {
        self.encoder_attn.lm_bias || self.cross_attn.lm_bias
    }

    fn side_ok(mode: SideMode, v: &VocabSizes) -> bool {
        match mode {
            SideMode::Morpho => v.stems > bpe::NUM_SPECIALS && v.pos > 0 && v.sets > 0,
            SideMode::Surface => v.tokens > bpe::NUM_SPECIALS,
        }
    }

    pub fn morpho_config(&self) -> MorphoEncoderConfig {
        let m = &self.morpho;
        MorphoEncoderConfig::for_width(self.d, m.d_m, m.layers, m.heads, m.ffn)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Config(format!("width {} not divisible by {} heads", self.d, self.heads)));
        }
        if self.max_len == 0 || self.enc_layers == 0 || self.dec_layers == 0 {
            return Err(Error::Config("max_len and layer counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.decoder_attn.lm_bias || self.decoder_attn.xpos || self.encoder_attn.xpos {
            return Err(Error::Config("LM bias is for source keys and XPOS for cross-attention only".into()));
        }
        if self.cross_attn.untied_pos || self.cross_attn.relative {
            return Err(Error::Config("cross-attention positions are configured through xpos".into()));
        }
        for c in [&self.encoder_attn, &self.decoder_attn, &self.cross_attn] {
            c.validate()?;
        }
        if self.uses_lm_bias() && self.lm_dim == 0 {
            return Err(Error::Config("LM bias needs lm_dim > 0".into()));
        }
        if !Self::side_ok(self.src_mode, &self.src_vocab) || !Self::side_ok(self.tgt_mode, &self.tgt_vocab) {
            return Err(Error::Config("vocabulary sizes do not match the side modes".into()));
        }
        if self.src_mode == SideMode::Morpho || self.tgt_mode == SideMode::Morpho {
            self.morpho_config().validate()?;
        }
        Ok(())
    }

    /// Vocabulary of the LM provider: the encoder's stems or tokens.
    pub fn lm_vocab(&self) -> usize {
        match self.src_mode {
            SideMode::Morpho => self.src_vocab.stems,
            SideMode::Surface => self.src_vocab.tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SideEmbedding {
    Morpho(MorphoEncoder),
    Surface(ParamId),
}

impl SideEmbedding {
    fn new<F: Real>(init: &mut Init<F>, prefix: &str, mode: SideMode, cfg: &ModelConfig, sizes: VocabSizes) -> Result<Self> {
        Ok(match mode {
            SideMode::Morpho => SideEmbedding::Morpho(MorphoEncoder::new(init, &format!("morpho.{prefix}"), cfg.morpho_config(), sizes)?),
            SideMode::Surface => SideEmbedding::Surface(init.normal(&format!("emb.{prefix}"), &[sizes.tokens, cfg.d])?),
        })
    }

    pub fn forward<F: Real>(&self, cx: &Ctx<F>, input: &SideInput) -> Result<Var> {
        match (self, input) {
            (SideEmbedding::Morpho(m), SideInput::Morpho(words)) => m.encode_sequence(cx, words),
            (SideEmbedding::Surface(t), SideInput::Surface(ids)) => {
                if ids.is_empty() {
                    return Err(Error::Data("cannot embed an empty token sequence".into()));
                }
                Ok(cx.g.gather_rows(cx.p(*t), ids)?)
            }
            _ => Err(Error::Config("input representation does not match the model side mode".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderBlock {
    pub ln_self: LayerNorm,
    pub self_attn: AttentionLayer,
    pub ln_cross: LayerNorm,
    pub cross_attn: AttentionLayer,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHeads {
    Morpho { stem: Linear, affix: Linear, pos: Linear, set: Linear },
    Surface { token: Linear },
}

/// Head outputs over all decoder positions (graph nodes).
#[derive(Debug, Clone, Copy)]
pub enum HeadLogits {
    Morpho { stem: Var, affix: Var, pos: Var, set: Var },
    Surface { token: Var },
}

/// Multi-task head outputs at one decoder position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtmlOutput {
    pub stem: Vec<f64>,
    pub affix: Vec<f64>,
    pub pos: Vec<f64>,
    pub set: Vec<f64>,
}

/// Head probabilities: categorical over stems, POS tags and affix sets;
/// independent per-affix probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadProbabilities {
    pub stem: Vec<f64>,
    pub pos: Vec<f64>,
    pub set: Vec<f64>,
    pub affix: Vec<f64>,
}

pub fn head_probabilities(out: &MtmlOutput) -> HeadProbabilities {
    HeadProbabilities {
        stem: softmax_slice(&out.stem),
        pos: softmax_slice(&out.pos),
        set: softmax_slice(&out.set),
        affix: out.affix.iter().map(|&z| sigmoid(z)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepOutput {
    Morpho(MtmlOutput),
    Surface(Vec<f64>),
}

/// Final encoder states plus what cross-attention needs to read them.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub hidden: Var,
    /// Rows of `hidden`, including padding.
    pub len: usize,
    /// Leading rows that hold real tokens.
    pub valid: usize,
    pub lm_keys: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct DecoderOutput {
    pub hidden: Var,
    /// Cross-attention weights per layer and head (m×n each).
    pub cross_weights: Vec<Vec<Var>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq {
    pub config: ModelConfig,
    pub src_embed: SideEmbedding,
    pub tgt_embed: SideEmbedding,
    pub enc_pos: PositionTables,
    pub dec_pos: PositionTables,
    pub cross_pos: PositionTables,
    pub encoder: Vec<EncoderBlock>,
    pub enc_ln: LayerNorm,
    pub decoder: Vec<DecoderBlock>,
    pub dec_ln: LayerNorm,
    pub heads: OutputHeads,
    pub lm: Option<LmBiasProvider>,
}

pub const LM_PROVIDER_PARAM: &str = "lm.provider.emb";

impl Seq2Seq {
    /// Registers all parameters in `store` (which should be empty) with a
    /// seeded initialisation.
    pub fn new<F: Real>(config: ModelConfig, store: &mut ParamStore<F>, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut init = Init::new(store, seed);
        let src_embed = SideEmbedding::new(&mut init, "src", c.src_mode, c, c.src_vocab)?;
        let tgt_embed = SideEmbedding::new(&mut init, "tgt", c.tgt_mode, c, c.tgt_vocab)?;
        let enc_pos = PositionTables::new_self(&mut init, "enc.pos", &c.encoder_attn, c.d, c.heads, c.max_len)?;
        let dec_pos = PositionTables::new_self(&mut init, "dec.pos", &c.decoder_attn, c.d, c.heads, c.max_len)?;
        let cross_pos = PositionTables::new_cross(&mut init, "cross.pos", &c.cross_attn, c.d, c.heads, c.max_len)?;
        let enc_lm = c.encoder_attn.lm_bias.then_some(c.lm_dim);
        let cross_lm = c.cross_attn.lm_bias.then_some(c.lm_dim);
        let encoder = (0..c.enc_layers)
            .map(|l| EncoderBlock::new(&mut init, &format!("enc.{l}"), c.d, c.heads, c.ffn, enc_lm))
            .collect::<Result<Vec<_>>>()?;
        let enc_ln = LayerNorm::new(&mut init, "enc.ln_final", c.d)?;
        let decoder = (0..c.dec_layers)
            .map(|l| {
                let p = format!("dec.{l}");
                Ok(DecoderBlock {
                    ln_self: LayerNorm::new(&mut init, &format!("{p}.ln_self"), c.d)?,
                    self_attn: AttentionLayer::new(&mut init, &format!("{p}.self_attn"), c.d, c.heads, None)?,
                    ln_cross: LayerNorm::new(&mut init, &format!("{p}.ln_cross"), c.d)?,
                    cross_attn: AttentionLayer::new(&mut init, &format!("{p}.cross_attn"), c.d, c.heads, cross_lm)?,
                    ln_ffn: LayerNorm::new(&mut init, &format!("{p}.ln_ffn"), c.d)?,
                    ffn: FeedForward::new(&mut init, &format!("{p}.ffn"), c.d, c.ffn)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let dec_ln = LayerNorm::new(&mut init, "dec.ln_final", c.d)?;
        let t = &c.tgt_vocab;
        let heads = match c.tgt_mode {
            SideMode::Morpho => OutputHeads::Morpho {
                stem: Linear::new(&mut init, "head.stem", c.d, t.stems, true)?,
                affix: Linear::new(&mut init, "head.affix", c.d, t.affixes.max(1), true)?,
                pos: Linear::new(&mut init, "head.pos", c.d, t.pos, true)?,
                set: Linear::new(&mut init, "head.set", c.d, t.sets, true)?,
            },
            SideMode::Surface => OutputHeads::Surface { token: Linear::new(&mut init, "head.token", c.d, t.tokens, true)? },
        };
        let lm = if c.uses_lm_bias() {
            let vocab = c.lm_vocab();
            let table = init.store.add(LM_PROVIDER_PARAM, Tensor::zeros(&[vocab, c.lm_dim]), false)?;
            Some(LmBiasProvider { table, vocab, dim: c.lm_dim })
        } else {
            None
        };
        Ok(Seq2Seq { config, src_embed, tgt_embed, enc_pos, dec_pos, cross_pos, encoder, enc_ln, decoder, dec_ln, heads, lm })
    }

    fn d_head(&self) -> usize {
        self.config.d / self.config.heads
    }

    fn check_len(&self, n: usize, what: &str) -> Result<()> {
        if n > self.config.max_len {
            return Err(Error::Data(format!("{what} of {n} positions exceeds max_len {}", self.config.max_len)));
        }
        Ok(())
    }

    /// Source input padded with PAD units/tokens up to `len`.
    pub fn pad_source(&self, src: &SideInput, len: usize) -> SideInput {
        match src {
            SideInput::Morpho(w) => {
                let pad = WordComposition::new(bpe::PAD, Vec::new(), w[0].pos, w[0].set);
                let mut w = w.clone();
                w.resize(len.max(w.len()), pad);
                SideInput::Morpho(w)
            }
            SideInput::Surface(t) => {
                let mut t = t.clone();
                t.resize(len.max(t.len()), bpe::PAD);
                SideInput::Surface(t)
            }
        }
    }

    pub fn encode<F: Real>(&self, cx: &Ctx<F>, src: &SideInput) -> Result<Encoded> {
        let n = src.len();
        self.encode_padded(cx, src, n)
    }

    /// Encodes `src` padded to `len` positions; padded keys are masked out.
    pub fn encode_padded<F: Real>(&self, cx: &Ctx<F>, src: &SideInput, len: usize) -> Result<Encoded> {
        let valid = src.len();
        if valid == 0 {
            return Err(Error::Data("empty source sequence".into()));
        }
        let padded;
        let input = if len > valid {
            padded = self.pad_source(src, len);
            &padded
        } else {
            src
        };
        let n = input.len();
        self.check_len(n, "source")?;
        let g = cx.g;
        let mut x = self.src_embed.forward(cx, input)?;
        let lm_keys = match &self.lm {
            Some(p) => Some(p.lookup(cx, &input.token_ids())?),
            None => None,
        };
        let pos = self.enc_pos.terms(cx, n, n)?;
        let mask = (valid < n).then(|| g.constant(key_padding_mask::<F>(n, n, valid)));
        let scale = self.config.encoder_attn.scale(self.d_head());
        let enc_lm = if self.config.encoder_attn.lm_bias { lm_keys } else { None };
        for b in &self.encoder {
            x = b.forward(cx, x, &pos, enc_lm, scale, mask)?;
        }
        let hidden = self.enc_ln.forward(cx, x)?;
        let lm_keys = if self.config.cross_attn.lm_bias { lm_keys } else { None };
        Ok(Encoded { hidden, len: n, valid, lm_keys })
    }

    fn check_prefix(prefix: &SideInput) -> Result<()> {
        let first = match prefix {
            SideInput::Morpho(w) => w.first().map(|c| c.stem),
            SideInput::Surface(t) => t.first().copied(),
        };
        if first != Some(bpe::BOS) {
            return Err(Error::Data("decoder prefix must start with BOS".into()));
        }
        Ok(())
    }

    /// Final decoder states for every prefix position.
    pub fn decode<F: Real>(&self, cx: &Ctx<F>, enc: &Encoded, prefix: &SideInput) -> Result<DecoderOutput> {
        Self::check_prefix(prefix)?;
        let m = prefix.len();
        self.check_len(m, "target prefix")?;
        let g = cx.g;
        let mut x = self.tgt_embed.forward(cx, prefix)?;
        let self_pos = self.dec_pos.terms(cx, m, m)?;
        let cross_pos = self.cross_pos.terms(cx, m, enc.len)?;
        let causal = g.constant(causal_mask::<F>(m));
        let cross_mask = (enc.valid < enc.len).then(|| g.constant(key_padding_mask::<F>(m, enc.len, enc.valid)));
        let self_scale = self.config.decoder_attn.scale(self.d_head());
        let cross_scale = self.config.cross_attn.scale(self.d_head());
        let mut cross_weights = Vec::with_capacity(self.decoder.len());
        for b in &self.decoder {
            let a = b.ln_self.forward(cx, x)?;
            let (sa, _) = b.self_attn.forward(cx, a, a, &self_pos, None, self_scale, Some(causal))?;
            x = g.add(x, cx.dropout(sa)?)?;
            let c = b.ln_cross.forward(cx, x)?;
            let (ca, w) = b.cross_attn.forward(cx, c, enc.hidden, &cross_pos, enc.lm_keys, cross_scale, cross_mask)?;
            cross_weights.push(w);
            x = g.add(x, cx.dropout(ca)?)?;
            let f = b.ffn.forward(cx, b.ln_ffn.forward(cx, x)?)?;
            x = g.add(x, cx.dropout(f)?)?;
        }
        Ok(DecoderOutput { hidden: self.dec_ln.forward(cx, x)?, cross_weights })
    }

    pub fn head_logits<F: Real>(&self, cx: &Ctx<F>, hidden: Var) -> Result<HeadLogits> {
        Ok(match &self.heads {
            OutputHeads::Morpho { stem, affix, pos, set } => HeadLogits::Morpho {
                stem: stem.forward(cx, hidden)?,
                affix: affix.forward(cx, hidden)?,
                pos: pos.forward(cx, hidden)?,
                set: set.forward(cx, hidden)?,
            },
            OutputHeads::Surface { token } => HeadLogits::Surface { token: token.forward(cx, hidden)? },
        })
    }

    /// Head outputs at the last prefix position.
    pub fn decode_step<F: Real>(&self, cx: &Ctx<F>, enc: &Encoded, prefix: &SideInput) -> Result<StepOutput> {
        let out = self.decode(cx, enc, prefix)?;
        let last = prefix.len() - 1;
        let row = |v: Var| -> Result<Vec<f64>> {
            let t = cx.g.value(v);
            let vals: Vec<f64> = t.row(last).iter().map(|x| x.to_f64()).collect();
            if vals.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric("non-finite decoder output".into()));
            }
            Ok(vals)
        };
        Ok(match self.head_logits(cx, out.hidden)? {
            HeadLogits::Morpho { stem, affix, pos, set } => {
                StepOutput::Morpho(MtmlOutput { stem: row(stem)?, affix: row(affix)?, pos: row(pos)?, set: row(set)? })
            }
            HeadLogits::Surface { token } => StepOutput::Surface(row(token)?),
        })
    }

    /// Every parameter except the frozen LM provider.
    pub fn num_trainable<F: Real>(store: &ParamStore<F>) -> usize {
        store.ids().filter(|&id| store.is_trainable(id)).map(|id| store.get(id).len()).sum()
    }
}
