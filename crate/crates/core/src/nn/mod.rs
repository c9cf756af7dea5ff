//! Layers built on the autodiff graph. Modules only hold parameter ids; the
//! values live in a `ParamStore` passed through [`Ctx`].

pub mod attention;

use std::cell::RefCell;

use morphmt_tensor::{Graph, ParamId, ParamStore, Real, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Everything a forward pass needs: the tape, the parameters and the dropout
/// source (absent at inference).
pub struct Ctx<'a, F: Real> {
    pub g: &'a Graph<F>,
    pub store: &'a ParamStore<F>,
    dropout: f64,
    rng: Option<RefCell<ChaCha8Rng>>,
}

impl<'a, F: Real> Ctx<'a, F> {
    pub fn eval(g: &'a Graph<F>, store: &'a ParamStore<F>) -> Self {
        Ctx { g, store, dropout: 0.0, rng: None }
    }

    pub fn train(g: &'a Graph<F>, store: &'a ParamStore<F>, dropout: f64, seed: u64) -> Self {
        let rng = (dropout > 0.0).then(|| RefCell::new(ChaCha8Rng::seed_from_u64(seed)));
        Ctx { g, store, dropout, rng }
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.g.param(self.store, id)
    }

    /// Inverted dropout; identity at inference.
    pub fn dropout(&self, x: Var) -> Result<Var> {
        let Some(rng) = &self.rng else { return Ok(x) };
        let shape = self.g.shape(x);
        let n: usize = shape.iter().product();
        let keep = 1.0 - self.dropout;
        let scale = F::from_f64(1.0 / keep);
        let mut rng = rng.borrow_mut();
        let mask: Vec<F> = (0..n)
            .map(|_| if rng.gen::<f64>() < keep { scale } else { F::ZERO })
            .collect();
        let m = self.g.constant(Tensor::new(shape, mask)?);
        Ok(self.g.mul(x, m)?)
    }
}

/// Parameter registration with a shared RNG.
pub struct Init<'a, F: Real> {
    pub store: &'a mut ParamStore<F>,
    pub rng: ChaCha8Rng,
}

impl<'a, F: Real> Init<'a, F> {
    pub fn new(store: &'a mut ParamStore<F>, seed: u64) -> Self {
        Init { store, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn normal(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        Ok(self.store.normal(name, shape, &mut self.rng)?)
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        Ok(self.store.ones(name, shape)?)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        Ok(self.store.zeros(name, shape)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<F: Real>(init: &mut Init<F>, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Result<Self> {
        let w = init.normal(&format!("{name}.w"), &[fan_in, fan_out])?;
        let b = if bias { Some(init.zeros(&format!("{name}.b"), &[fan_out])?) } else { None };
        Ok(Linear { w, b })
    }

    pub fn forward<F: Real>(&self, cx: &Ctx<F>, x: Var) -> Result<Var> {
        let y = cx.g.matmul(x, cx.p(self.w))?;
        match self.b {
            Some(b) => Ok(cx.g.add_row(y, cx.p(b))?),
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<F: Real>(init: &mut Init<F>, name: &str, width: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: init.ones(&format!("{name}.gain"), &[width])?,
            bias: init.zeros(&format!("{name}.bias"), &[width])?,
        })
    }

    pub fn forward<F: Real>(&self, cx: &Ctx<F>, x: Var) -> Result<Var> {
        Ok(cx.g.layer_norm(x, cx.p(self.gain), cx.p(self.bias))?)
    }
}

/// Two-layer GELU feed-forward block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<F: Real>(init: &mut Init<F>, name: &str, width: usize, hidden: usize) -> Result<Self> {
        Ok(FeedForward {
            up: Linear::new(init, &format!("{name}.up"), width, hidden, true)?,
            down: Linear::new(init, &format!("{name}.down"), hidden, width, true)?,
        })
    }

    pub fn forward<F: Real>(&self, cx: &Ctx<F>, x: Var) -> Result<Var> {
        let h = self.up.forward(cx, x)?;
        let h = cx.g.gelu(h);
        self.down.forward(cx, h)
    }
}

/// Pre-LayerNorm transformer encoder block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderBlock {
    pub ln_attn: LayerNorm,
    pub attn: attention::AttentionLayer,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderBlock {
    pub fn new<F: Real>(init: &mut Init<F>, prefix: &str, d: usize, heads: usize, ffn: usize, lm_dim: Option<usize>) -> Result<Self> {
        Ok(EncoderBlock {
            ln_attn: LayerNorm::new(init, &format!("{prefix}.ln_attn"), d)?,
            attn: attention::AttentionLayer::new(init, &format!("{prefix}.attn"), d, heads, lm_dim)?,
            ln_ffn: LayerNorm::new(init, &format!("{prefix}.ln_ffn"), d)?,
            ffn: FeedForward::new(init, &format!("{prefix}.ffn"), d, ffn)?,
        })
    }

    pub fn forward<F: Real>(
        &self,
        cx: &Ctx<F>,
        x: Var,
        pos: &attention::PositionalTerms,
        lm_keys: Option<Var>,
        scale: f64,
        mask: Option<Var>,
    ) -> Result<Var> {
        let a = self.ln_attn.forward(cx, x)?;
        let (att, _) = self.attn.forward(cx, a, a, pos, lm_keys, scale, mask)?;
        let x = cx.g.add(x, cx.dropout(att)?)?;
        let f = self.ffn.forward(cx, self.ln_ffn.forward(cx, x)?)?;
        Ok(cx.g.add(x, cx.dropout(f)?)?)
    }
}
