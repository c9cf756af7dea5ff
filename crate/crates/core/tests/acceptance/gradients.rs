use std::sync::Arc;

use morphmt::bpe::BpeVocab;
use morphmt::corpus::generate_parallel_corpus;
use morphmt::seq2seq::{ModelConfig, MorphoSettings, Seq2Seq};
use morphmt::synthlang::{Grammar, GrammarSpec, Language};
use morphmt::training::{example_losses, prepare_examples, sum_losses};
use morphmt::vocab::{MorphoCodec, SideCodec};
use morphmt::nn::Ctx;
use morphmt_tensor::{grad_check_params, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

/// Micro model: d = 16, one encoder and one decoder layer, morphological
/// input and output, every attention bias term switched on.
pub fn check() -> Outcome {
    let spec = GrammarSpec { verbs: 3, nouns: 3, particles: 2, names: 2 };
    let grammar = Grammar::generate(&spec, 3).expect("grammar");
    let lang = Arc::new(Language::build(grammar, 200, 6, 3).expect("language"));
    let corpus = generate_parallel_corpus(&lang, 40, 3).expect("corpus");
    let text: Vec<&str> = corpus.iter().flat_map(|e| [e.src.as_str(), e.tgt.as_str()]).collect();
    let bpe = Arc::new(BpeVocab::train(&text, 60).expect("bpe"));
    let codec = SideCodec::Morpho(MorphoCodec::new(lang, bpe).expect("codec"));

    let mut cfg = ModelConfig::desk(codec.sizes(), codec.sizes());
    cfg.d = 16;
    cfg.ffn = 24;
    cfg.heads = 2;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.dropout = 0.0;
    cfg.max_len = 16;
    cfg.lm_dim = 3;
    cfg.morpho = MorphoSettings { d_m: 4, layers: 1, heads: 1, ffn: 6 };
    cfg.encoder_attn.lm_bias = true;
    cfg.cross_attn.lm_bias = true;
    cfg.cross_attn.xpos = true;
    for site in [&mut cfg.encoder_attn, &mut cfg.decoder_attn, &mut cfg.cross_attn] {
        site.r_clip = 2;
    }
    let mut store = ParamStore::<f64>::new();
    let model = Seq2Seq::new(cfg.clone(), &mut store, 11).expect("model");
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v = rng.gen_range(-0.6..0.6);
        }
    }

    let (examples, _) = prepare_examples(&corpus, &codec, &codec, cfg.max_len);
    let mut batch = examples;
    batch.sort_by_key(|e| e.src.len() + e.tgt_in.len());
    batch.truncate(2);

    let trainable = Seq2Seq::num_trainable(&store);
    let report = grad_check_params(
        &store,
        |g, s| {
            let cx = Ctx::eval(g, s);
            let mut total = None;
            for ex in &batch {
                let losses = example_losses(&model, &cx, ex).expect("forward pass");
                let l = sum_losses(&cx, &losses).expect("loss sum");
                total = Some(match total {
                    Some(t) => g.add(t, l)?,
                    None => l,
                });
            }
            Ok(total.expect("non-empty batch"))
        },
        1e-4,
    )
    .expect("gradient check");
    let pass = report.max_relative_error <= 1e-3 && report.checked == trainable && report.flagged.is_empty();
    Outcome::new(
        pass,
        format!(
            "{} of {trainable} trainable coordinates checked, {} flagged as kinks, max relative error {:.2e}",
            report.checked,
            report.flagged.len(),
            report.max_relative_error
        ),
    )
}
