use std::sync::Arc;

use morphmt::bpe::BpeVocab;
use morphmt::corpus::generate_parallel_corpus;
use morphmt::decoding::{generate_inflections, DecoderParams, TargetMorphology};
use morphmt::seq2seq::HeadProbabilities;
use morphmt::synthlang::{Analysis, Language};
use morphmt::vocab::MorphoCodec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

fn peaked(rng: &mut ChaCha8Rng, n: usize, sharpness: f64) -> Vec<f64> {
    let logits: Vec<f64> = (0..n).map(|_| sharpness * rng.gen_range(-1.0..1.0)).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|x| (x - max).exp()).sum();
    logits.iter().map(|x| (x - max).exp() / z).collect()
}

pub fn check() -> Outcome {
    let lang = Arc::new(Language::toy(5).expect("toy language"));
    let grammar = lang.grammar();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let combos: Vec<Vec<Vec<usize>>> = (0..grammar.num_groups()).map(|g| grammar.combinations(g)).collect();

    let mut round_trips = 0;
    let mut failures = 0;
    for _ in 0..10_000 {
        let stem = &grammar.stems[rng.gen_range(0..grammar.stems.len())];
        let choices = &combos[stem.group];
        let affixes = &choices[rng.gen_range(0..choices.len())];
        let token = lang.token(stem.id, affixes).expect("known stem").expect("grammatical combination");
        match lang.analyze(&token.surface) {
            Analysis::Word(t) if t == token && t.stem_id == stem.id && &t.affix_ids == affixes => round_trips += 1,
            _ => failures += 1,
        }
    }

    let corpus = generate_parallel_corpus(&lang, 300, 5).expect("corpus");
    let text: Vec<&str> = corpus.iter().flat_map(|e| [e.src.as_str(), e.tgt.as_str()]).collect();
    let bpe = Arc::new(BpeVocab::train(&text, 300).expect("bpe"));
    let codec = MorphoCodec::new(lang.clone(), bpe).expect("codec");
    let morph = TargetMorphology::new(&codec);
    let sizes = codec.sizes();
    let params = DecoderParams { top_m: 8, top_n: 16, gamma: 0.05, delta: 1.0, log_beta: 50.0, ..DecoderParams::default() };
    let (mut emitted, mut reanalyzed, mut pieces) = (0, 0, 0);
    for _ in 0..400 {
        let sharpness = rng.gen_range(1.0..8.0);
        let probs = HeadProbabilities {
            stem: peaked(&mut rng, sizes.stems, sharpness),
            pos: peaked(&mut rng, sizes.pos, sharpness),
            set: peaked(&mut rng, sizes.sets, sharpness),
            affix: (0..sizes.affixes).map(|_| rng.gen_range(0.0..1.0)).collect(),
        };
        for c in generate_inflections(&morph, &probs, &params).expect("generation") {
            match codec.as_grammar_stem(c.stem) {
                Some(stem) => {
                    emitted += 1;
                    if let Analysis::Word(t) = lang.analyze(&c.surface) {
                        let mut got = t.affix_ids.clone();
                        got.sort_unstable();
                        if t.stem_id == stem && got == c.affixes {
                            reanalyzed += 1;
                        }
                    }
                }
                None => pieces += 1,
            }
        }
    }

    let pass = round_trips == 10_000 && failures == 0 && emitted > 1000 && reanalyzed == emitted;
    Outcome::new(
        pass,
        format!(
            "{round_trips}/10000 forms round-trip; {reanalyzed}/{emitted} decoder-emitted word surfaces re-analyze to their stem and affixes ({pieces} subword candidates skipped)"
        ),
    )
}
