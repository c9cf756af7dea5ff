//! Pretraining of the frozen embeddings behind the LM bias term: a small
//! continuous-bag-of-words masked LM over source-side token ids.

use morphmt_tensor::{Adam, AdamConfig, Graph, ParamGrads, ParamStore, Real, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Ctx, Init, Linear};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmPretrainConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for LmPretrainConfig {
    fn default() -> Self {
        LmPretrainConfig { dim: 32, window: 2, epochs: 2, lr: 3e-3, seed: 17 }
    }
}

/// Row-averaging matrix: row i averages the positions within `window` of i,
/// excluding i itself (the masked token).
fn context_matrix(n: usize, window: usize) -> Tensor<f64> {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(n - 1);
        let ctx: Vec<usize> = (lo..=hi).filter(|&j| j != i).collect();
        for &j in &ctx {
            data[i * n + j] = 1.0 / ctx.len() as f64;
        }
    }
    Tensor::new(vec![n, n], data).expect("square")
}

#[derive(Debug, Clone)]
pub struct LmPretrained<F: Real> {
    /// `vocab × dim` embedding table.
    pub table: Tensor<F>,
    /// Mean masked-token loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains token embeddings that predict each token from its neighbours.
/// Sentences shorter than 2 are skipped.
pub fn pretrain_lm_embeddings<F: Real>(sentences: &[Vec<usize>], vocab: usize, cfg: &LmPretrainConfig) -> Result<LmPretrained<F>> {
    if sentences.iter().flatten().any(|&t| t >= vocab) {
        return Err(Error::Config("token outside the LM vocabulary".into()));
    }
    let usable: Vec<&Vec<usize>> = sentences.iter().filter(|s| s.len() >= 2).collect();
    if usable.is_empty() {
        return Err(Error::Data("no sentence long enough for LM pretraining".into()));
    }
    let mut store = ParamStore::<F>::new();
    let (emb, out) = {
        let mut init = Init::new(&mut store, cfg.seed);
        let emb = init.normal("lm.emb", &[vocab, cfg.dim])?;
        let out = Linear::new(&mut init, "lm.out", cfg.dim, vocab, true)?;
        (emb, out)
    };
    for v in store.get_mut(emb).data_mut() {
        *v = F::from_f64(v.to_f64() * 10.0);
    }
    let mut adam = Adam::new(&store, AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let ids = usable[i];
            let g = Graph::new();
            let cx = Ctx::eval(&g, &store);
            let e = g.gather_rows(cx.p(emb), ids)?;
            let avg = g.constant(context_matrix(ids.len(), cfg.window).cast::<F>());
            let ctx = g.matmul(avg, e)?;
            let logits = out.forward(&cx, ctx)?;
            let targets: Vec<Option<usize>> = ids.iter().map(|&t| Some(t)).collect();
            let loss = g.cross_entropy(logits, &targets)?;
            let value = g.value(loss).item().to_f64();
            if !value.is_finite() {
                return Err(Error::Numeric("LM pretraining diverged".into()));
            }
            total += value;
            let grads = g.backward(loss)?;
            let mut acc = ParamGrads::for_store(&store);
            g.accumulate_param_grads(&grads, &mut acc);
            drop(g);
            adam.update(&mut store, &acc, cfg.lr);
        }
        epoch_losses.push(total / order.len() as f64);
    }
    Ok(LmPretrained { table: store.get(emb).clone(), epoch_losses })
}
