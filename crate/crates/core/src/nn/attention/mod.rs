//! Multi-head attention whose logits are a sum of independently computed
//! terms: content, untied absolute-position, clipped relative-position and a
//! frozen language-model embedding bias. The cross-attention variant uses
//! separate target/source position tables.

use morphmt_tensor::{ParamId, Real, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::{Ctx, Init, Linear};
use crate::error::{Error, Result};

/// Additive value for masked logits.
pub const MASK_VALUE: f64 = -1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogitBiasConfig {
    pub untied_pos: bool,
    pub relative: bool,
    pub lm_bias: bool,
    /// Cross-attention only: target/source absolute tables plus a relative
    /// table between target and source positions.
    pub xpos: bool,
    pub r_clip: usize,
}

impl Default for LogitBiasConfig {
    fn default() -> Self {
        LogitBiasConfig::content_only()
    }
}

impl LogitBiasConfig {
    pub fn content_only() -> Self {
        LogitBiasConfig { untied_pos: false, relative: false, lm_bias: false, xpos: false, r_clip: 64 }
    }

    pub fn any_augmentation(&self) -> bool {
        self.untied_pos || self.relative || self.lm_bias || self.xpos
    }

    /// 1/sqrt(3 d) when any bias term is active, 1/sqrt(d) otherwise, with
    /// `d` the per-head width.
    pub fn scale(&self, d_head: usize) -> f64 {
        let k = if self.any_augmentation() { 3.0 } else { 1.0 };
        1.0 / (k * d_head as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_clip == 0 {
            return Err(Error::Config("relative clip distance must be at least 1".into()));
        }
        Ok(())
    }
}

/// Index into a relative table of `2 r_clip + 1` entries for query `i`, key `j`.
pub fn relative_index(i: usize, j: usize, r_clip: usize) -> usize {
    let r = r_clip as i64;
    ((j as i64 - i as i64).clamp(-r, r) + r) as usize
}

pub fn causal_mask<F: Real>(m: usize) -> Tensor<F> {
    let mut data = vec![F::ZERO; m * m];
    for i in 0..m {
        for j in i + 1..m {
            data[i * m + j] = F::from_f64(MASK_VALUE);
        }
    }
    Tensor::new(vec![m, m], data).expect("square")
}

/// Masks keys at positions `>= valid`.
pub fn key_padding_mask<F: Real>(m: usize, n: usize, valid: usize) -> Tensor<F> {
    let mut data = vec![F::ZERO; m * n];
    for i in 0..m {
        for j in valid..n {
            data[i * n + j] = F::from_f64(MASK_VALUE);
        }
    }
    Tensor::new(vec![m, n], data).expect("shape")
}

/// Block-diagonal mask: units may only attend within their own block.
pub fn block_mask<F: Real>(block_of: &[usize]) -> Tensor<F> {
    let n = block_of.len();
    let mut data = vec![F::ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            if block_of[i] != block_of[j] {
                data[i * n + j] = F::from_f64(MASK_VALUE);
            }
        }
    }
    Tensor::new(vec![n, n], data).expect("square")
}

/// Positional tables of one attention site, shared by every layer of the
/// stack. For self-attention the query and key tables coincide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionTables {
    pub query_abs: Option<ParamId>,
    pub key_abs: Option<ParamId>,
    pub proj_q: Option<ParamId>,
    pub proj_k: Option<ParamId>,
    pub relative: Option<ParamId>,
    pub heads: usize,
    pub d: usize,
    pub r_clip: usize,
    pub max_len: usize,
}

/// Per-head positional logit terms (unscaled).
#[derive(Debug, Clone, Default)]
pub struct PositionalTerms {
    pub absolute: Option<Vec<Var>>,
    pub relative: Option<Vec<Var>>,
}

impl PositionTables {
    fn build<F: Real>(
        init: &mut Init<F>,
        prefix: &str,
        absolute: bool,
        relative: bool,
        separate_tables: bool,
        d: usize,
        heads: usize,
        max_len: usize,
        r_clip: usize,
    ) -> Result<Self> {
        let (mut query_abs, mut key_abs, mut proj_q, mut proj_k) = (None, None, None, None);
        if absolute {
            if separate_tables {
                query_abs = Some(init.normal(&format!("{prefix}.abs_tgt"), &[max_len, d])?);
                key_abs = Some(init.normal(&format!("{prefix}.abs_src"), &[max_len, d])?);
            } else {
                let t = init.normal(&format!("{prefix}.abs"), &[max_len, d])?;
                query_abs = Some(t);
                key_abs = Some(t);
            }
            proj_q = Some(init.normal(&format!("{prefix}.proj_q"), &[d, d])?);
            proj_k = Some(init.normal(&format!("{prefix}.proj_k"), &[d, d])?);
        }
        let relative = if relative {
            Some(init.normal(&format!("{prefix}.rel"), &[heads, 2 * r_clip + 1])?)
        } else {
            None
        };
        Ok(PositionTables { query_abs, key_abs, proj_q, proj_k, relative, heads, d, r_clip, max_len })
    }

    /// Tables for a self-attention stack (untied absolute and/or relative).
    pub fn new_self<F: Real>(init: &mut Init<F>, prefix: &str, cfg: &LogitBiasConfig, d: usize, heads: usize, max_len: usize) -> Result<Self> {
        cfg.validate()?;
        Self::build(init, prefix, cfg.untied_pos, cfg.relative, false, d, heads, max_len, cfg.r_clip)
    }

    /// Cross-positional tables for a cross-attention stack.
    pub fn new_cross<F: Real>(init: &mut Init<F>, prefix: &str, cfg: &LogitBiasConfig, d: usize, heads: usize, max_len: usize) -> Result<Self> {
        cfg.validate()?;
        Self::build(init, prefix, cfg.xpos, cfg.xpos, true, d, heads, max_len, cfg.r_clip)
    }

    pub fn is_empty(&self) -> bool {
        self.query_abs.is_none() && self.relative.is_none()
    }

    /// Positional terms for `m` queries against `n` keys.
    pub fn terms<F: Real>(&self, cx: &Ctx<F>, m: usize, n: usize) -> Result<PositionalTerms> {
        if m > self.max_len || n > self.max_len {
            return Err(Error::Config(format!(
                "sequence of {} positions exceeds max_len {}",
                m.max(n),
                self.max_len
            )));
        }
        let g = cx.g;
        let dh = self.d / self.heads;
        let mut out = PositionalTerms::default();
        if let (Some(qa), Some(ka), Some(pq), Some(pk)) = (self.query_abs, self.key_abs, self.proj_q, self.proj_k) {
            let qpos: Vec<usize> = (0..m).collect();
            let kpos: Vec<usize> = (0..n).collect();
            let q = g.matmul(g.gather_rows(cx.p(qa), &qpos)?, cx.p(pq))?;
            let k = g.matmul(g.gather_rows(cx.p(ka), &kpos)?, cx.p(pk))?;
            let mut terms = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let qh = g.slice_cols(q, h * dh, dh)?;
                let kh = g.slice_cols(k, h * dh, dh)?;
                terms.push(g.matmul_t(qh, kh)?);
            }
            out.absolute = Some(terms);
        }
        if let Some(rel) = self.relative {
            let width = 2 * self.r_clip + 1;
            let table = cx.p(rel);
            let mut terms = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let idx: Vec<usize> = (0..m)
                    .flat_map(|i| (0..n).map(move |j| h * width + relative_index(i, j, self.r_clip)))
                    .collect();
                terms.push(g.gather_elems(table, idx, &[m, n])?);
            }
            out.relative = Some(terms);
        }
        Ok(out)
    }
}

/// The separately computed, unscaled logit terms of one attention layer.
#[derive(Debug, Clone)]
pub struct LogitTerms {
    pub content: Vec<Var>,
    pub absolute: Option<Vec<Var>>,
    pub relative: Option<Vec<Var>>,
    pub lm: Option<Vec<Var>>,
}

impl LogitTerms {
    /// scale * (content + absolute + relative + lm) + mask, per head.
    pub fn combine<F: Real>(&self, cx: &Ctx<F>, scale: f64, mask: Option<Var>) -> Result<Vec<Var>> {
        let g = cx.g;
        let mut out = Vec::with_capacity(self.content.len());
        for h in 0..self.content.len() {
            let mut s = self.content[h];
            for extra in [&self.absolute, &self.relative, &self.lm].into_iter().flatten() {
                s = g.add(s, extra[h])?;
            }
            let mut s = g.scale(s, scale);
            if let Some(m) = mask {
                s = g.add(s, m)?;
            }
            out.push(s);
        }
        Ok(out)
    }
}

/// Per-layer attention weights. Projections have no bias except the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionLayer {
    pub q: ParamId,
    pub k: ParamId,
    pub v: ParamId,
    pub out: Linear,
    pub lm_q: Option<ParamId>,
    pub lm_k: Option<ParamId>,
    pub heads: usize,
    pub d: usize,
}

impl AttentionLayer {
    pub fn new<F: Real>(init: &mut Init<F>, prefix: &str, d: usize, heads: usize, lm_dim: Option<usize>) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
        }
        let q = init.normal(&format!("{prefix}.q"), &[d, d])?;
        let k = init.normal(&format!("{prefix}.k"), &[d, d])?;
        let v = init.normal(&format!("{prefix}.v"), &[d, d])?;
        let out = Linear::new(init, &format!("{prefix}.o"), d, d, true)?;
        let (lm_q, lm_k) = match lm_dim {
            Some(dl) => (
                Some(init.normal(&format!("{prefix}.lm_q"), &[d, d])?),
                Some(init.normal(&format!("{prefix}.lm_k"), &[dl, d])?),
            ),
            None => (None, None),
        };
        Ok(AttentionLayer { q, k, v, out, lm_q, lm_k, heads, d })
    }

    pub fn d_head(&self) -> usize {
        self.d / self.heads
    }

    fn per_head<F: Real>(&self, cx: &Ctx<F>, a: Var, b: Var) -> Result<Vec<Var>> {
        let dh = self.d_head();
        (0..self.heads)
            .map(|h| {
                let ah = cx.g.slice_cols(a, h * dh, dh)?;
                let bh = cx.g.slice_cols(b, h * dh, dh)?;
                Ok(cx.g.matmul_t(ah, bh)?)
            })
            .collect()
    }

    /// Logit terms for queries `x_q` (m×d) against keys `x_kv` (n×d).
    /// `lm_keys` holds frozen LM embeddings of the key tokens (n×d_lm).
    pub fn logit_terms<F: Real>(
        &self,
        cx: &Ctx<F>,
        x_q: Var,
        x_kv: Var,
        pos: &PositionalTerms,
        lm_keys: Option<Var>,
    ) -> Result<LogitTerms> {
        let g = cx.g;
        let q = g.matmul(x_q, cx.p(self.q))?;
        let k = g.matmul(x_kv, cx.p(self.k))?;
        let content = self.per_head(cx, q, k)?;
        let lm = match (self.lm_q, self.lm_k, lm_keys) {
            (Some(lq), Some(lk), Some(b)) => {
                let a = g.matmul(x_q, cx.p(lq))?;
                let bk = g.matmul(b, cx.p(lk))?;
                Some(self.per_head(cx, a, bk)?)
            }
            (None, None, None) => None,
            _ => {
                return Err(Error::Config(
                    "LM bias projections and provider embeddings must be supplied together".into(),
                ))
            }
        };
        Ok(LogitTerms { content, absolute: pos.absolute.clone(), relative: pos.relative.clone(), lm })
    }

    /// Softmax over each head's logits, weighted sum of value rows, heads
    /// concatenated, output projection. Returns the output and the per-head
    /// attention weights.
    pub fn attend<F: Real>(&self, cx: &Ctx<F>, logits: &[Var], x_kv: Var) -> Result<(Var, Vec<Var>)> {
        let g = cx.g;
        let v = g.matmul(x_kv, cx.p(self.v))?;
        let dh = self.d_head();
        let mut heads = Vec::with_capacity(self.heads);
        let mut probs = Vec::with_capacity(self.heads);
        for (h, &l) in logits.iter().enumerate() {
            let p = g.softmax(l, 1)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            heads.push(g.matmul(p, vh)?);
            probs.push(p);
        }
        let cat = g.concat_cols(&heads)?;
        Ok((self.out.forward(cx, cat)?, probs))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward<F: Real>(
        &self,
        cx: &Ctx<F>,
        x_q: Var,
        x_kv: Var,
        pos: &PositionalTerms,
        lm_keys: Option<Var>,
        scale: f64,
        mask: Option<Var>,
    ) -> Result<(Var, Vec<Var>)> {
        let terms = self.logit_terms(cx, x_q, x_kv, pos, lm_keys)?;
        let logits = terms.combine(cx, scale, mask)?;
        self.attend(cx, &logits, x_kv)
    }
}

/// Frozen per-token embeddings from a pretrained masked LM, used as keys of
/// the LM bias term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LmBiasProvider {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl LmBiasProvider {
    pub fn lookup<F: Real>(&self, cx: &Ctx<F>, ids: &[usize]) -> Result<Var> {
        if let Some(bad) = ids.iter().find(|&&i| i >= self.vocab) {
            return Err(Error::Config(format!("token {bad} is outside the LM provider vocabulary of {}", self.vocab)));
        }
        Ok(cx.g.gather_rows(cx.p(self.table), ids)?)
    }
}
