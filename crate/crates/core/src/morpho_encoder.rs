//! Word-composition encoder: a small transformer over the unordered set of
//! a word's units (stem, affixes, POS tag, affix set). The outputs at the
//! stem, POS and affix-set units are concatenated with a sequence-level stem
//! embedding to give one vector per word.

use morphmt_tensor::{ParamId, Real, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::attention::{block_mask, PositionalTerms};
use crate::nn::{Ctx, EncoderBlock, Init, LayerNorm};
use crate::vocab::{VocabSizes, WordComposition, MAX_AFFIXES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphoEncoderConfig {
    pub d_m: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub d_seq: usize,
    pub d: usize,
}

impl MorphoEncoderConfig {
    /// Widths for a main model of width `d`: the sequence-level stem
    /// embedding takes whatever the three pooled vectors leave.
    pub fn for_width(d: usize, d_m: usize, layers: usize, heads: usize, ffn: usize) -> Self {
        MorphoEncoderConfig { d_m, layers, heads, ffn, d_seq: d.saturating_sub(3 * d_m), d }
    }

    pub fn validate(&self) -> Result<()> {
        if 3 * self.d_m + self.d_seq != self.d {
            return Err(Error::Config(format!(
                "morpho widths do not add up: 3*{} + {} != {}",
                self.d_m, self.d_seq, self.d
            )));
        }
        if self.heads == 0 || self.d_m % self.heads != 0 {
            return Err(Error::Config(format!("morpho width {} not divisible by {} heads", self.d_m, self.heads)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorphoEncoder {
    pub config: MorphoEncoderConfig,
    pub sizes: VocabSizes,
    pub stem_emb: ParamId,
    pub affix_emb: ParamId,
    pub pos_emb: ParamId,
    pub set_emb: ParamId,
    pub seq_stem_emb: Option<ParamId>,
    pub blocks: Vec<EncoderBlock>,
    pub final_ln: LayerNorm,
}

impl MorphoEncoder {
    pub fn new<F: Real>(init: &mut Init<F>, prefix: &str, config: MorphoEncoderConfig, sizes: VocabSizes) -> Result<Self> {
        config.validate()?;
        let d_m = config.d_m;
        let stem_emb = init.normal(&format!("{prefix}.stem_emb"), &[sizes.stems, d_m])?;
        let affix_emb = init.normal(&format!("{prefix}.affix_emb"), &[sizes.affixes.max(1), d_m])?;
        let pos_emb = init.normal(&format!("{prefix}.pos_emb"), &[sizes.pos, d_m])?;
        let set_emb = init.normal(&format!("{prefix}.set_emb"), &[sizes.sets, d_m])?;
        let seq_stem_emb = if config.d_seq > 0 {
            Some(init.normal(&format!("{prefix}.seq_stem_emb"), &[sizes.stems, config.d_seq])?)
        } else {
            None
        };
        let blocks = (0..config.layers)
            .map(|l| EncoderBlock::new(init, &format!("{prefix}.{l}"), d_m, config.heads, config.ffn, None))
            .collect::<Result<Vec<_>>>()?;
        let final_ln = LayerNorm::new(init, &format!("{prefix}.ln_final"), d_m)?;
        Ok(MorphoEncoder { config, sizes, stem_emb, affix_emb, pos_emb, set_emb, seq_stem_emb, blocks, final_ln })
    }

    fn check(&self, w: &WordComposition) -> Result<()> {
        let s = &self.sizes;
        let bad = w.stem >= s.stems
            || w.pos >= s.pos
            || w.set >= s.sets
            || w.affixes.len() > MAX_AFFIXES
            || w.affixes.iter().any(|&a| a >= s.affixes)
            || w.affixes.windows(2).any(|p| p[0] >= p[1]);
        if bad {
            return Err(Error::Data(format!("invalid word composition {w:?}")));
        }
        Ok(())
    }

    /// One row of width `d` per word. Words never attend to each other: all
    /// units share one attention call under a block-diagonal mask.
    pub fn encode_sequence<F: Real>(&self, cx: &Ctx<F>, words: &[WordComposition]) -> Result<Var> {
        if words.is_empty() {
            return Err(Error::Data("cannot encode an empty word sequence".into()));
        }
        for w in words {
            self.check(w)?;
        }
        let g = cx.g;
        let n = words.len();
        let stems: Vec<usize> = words.iter().map(|w| w.stem).collect();
        let pos: Vec<usize> = words.iter().map(|w| w.pos).collect();
        let sets: Vec<usize> = words.iter().map(|w| w.set).collect();
        let affixes: Vec<usize> = words.iter().flat_map(|w| w.affixes.iter().copied()).collect();
        let mut parts = vec![
            g.gather_rows(cx.p(self.stem_emb), &stems)?,
            g.gather_rows(cx.p(self.pos_emb), &pos)?,
            g.gather_rows(cx.p(self.set_emb), &sets)?,
        ];
        let mut owner: Vec<usize> = (0..n).chain(0..n).chain(0..n).collect();
        if !affixes.is_empty() {
            parts.push(g.gather_rows(cx.p(self.affix_emb), &affixes)?);
            for (i, w) in words.iter().enumerate() {
                owner.extend(std::iter::repeat(i).take(w.affixes.len()));
            }
        }
        let mut h = g.concat_rows(&parts)?;
        let mask = g.constant(block_mask::<F>(&owner));
        let scale = 1.0 / ((self.config.d_m / self.config.heads) as f64).sqrt();
        let none = PositionalTerms::default();
        for b in &self.blocks {
            h = b.forward(cx, h, &none, None, scale, Some(mask))?;
        }
        let out = self.final_ln.forward(cx, h)?;
        let rows = |offset: usize| -> Vec<usize> { (offset..offset + n).collect() };
        let mut pooled = vec![
            g.gather_rows(out, &rows(0))?,
            g.gather_rows(out, &rows(n))?,
            g.gather_rows(out, &rows(2 * n))?,
        ];
        if let Some(seq) = self.seq_stem_emb {
            pooled.push(g.gather_rows(cx.p(seq), &stems)?);
        }
        Ok(g.concat_cols(&pooled)?)
    }

    pub fn encode_word<F: Real>(&self, cx: &Ctx<F>, word: &WordComposition) -> Result<Var> {
        self.encode_sequence(cx, std::slice::from_ref(word))
    }
}
