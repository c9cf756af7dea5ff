//! Shared fixtures for unit tests.

use std::sync::Arc;

use morphmt_tensor::ParamStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bpe::BpeVocab;
use crate::corpus::{generate_parallel_corpus, ParallelExample};
use crate::seq2seq::{ModelConfig, MorphoSettings, Seq2Seq};
use crate::synthlang::Language;
use crate::vocab::{MorphoCodec, SideCodec};

pub struct Toy {
    pub morpho: SideCodec,
    pub surface: SideCodec,
    pub corpus: Vec<ParallelExample>,
}

pub fn toy(n: usize) -> Toy {
    let lang = Arc::new(Language::toy(3).unwrap());
    let corpus = generate_parallel_corpus(&lang, n.max(50), 2).unwrap();
    let text: Vec<&str> = corpus.iter().flat_map(|e| [e.src.as_str(), e.tgt.as_str()]).collect();
    let bpe = Arc::new(BpeVocab::train(&text, 200).unwrap());
    let morpho = SideCodec::Morpho(MorphoCodec::new(lang.clone(), bpe.clone()).unwrap());
    let surface = SideCodec::Surface(bpe.clone());
    Toy { morpho, surface, corpus: corpus.into_iter().take(n).collect() }
}

/// d = 16, one layer on each side, no dropout.
pub fn tiny_config(src: &SideCodec, tgt: &SideCodec) -> ModelConfig {
    let mut c = ModelConfig::desk(src.sizes(), tgt.sizes());
    c.d = 16;
    c.ffn = 32;
    c.heads = 2;
    c.enc_layers = 1;
    c.dec_layers = 1;
    c.dropout = 0.0;
    c.morpho = MorphoSettings { d_m: 4, layers: 1, heads: 1, ffn: 8 };
    c.lm_dim = 4;
    for a in [&mut c.encoder_attn, &mut c.decoder_attn, &mut c.cross_attn] {
        a.r_clip = 4;
    }
    if !src.is_morpho() {
        c.src_mode = crate::seq2seq::SideMode::Surface;
    }
    if !tgt.is_morpho() {
        c.tgt_mode = crate::seq2seq::SideMode::Surface;
    }
    c
}

pub fn build(cfg: ModelConfig, seed: u64) -> (ParamStore<f64>, Seq2Seq) {
    let mut store = ParamStore::new();
    let model = Seq2Seq::new(cfg, &mut store, seed).unwrap();
    (store, model)
}

/// Overwrites every trainable parameter with U(-scale, scale) noise.
pub fn randomize(store: &mut ParamStore<f64>, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
    }
}
