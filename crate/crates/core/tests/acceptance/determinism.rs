use morphmt::par::Execution;
use morphmt::pipeline::{synthesize_data, train_run, Direction, RunConfig, SynthOptions};
use morphmt::seq2seq::MorphoSettings;

use crate::Outcome;

fn tiny_run(direction: Direction) -> RunConfig {
    let mut run = RunConfig::desk();
    run.direction = direction;
    run.model.d = 16;
    run.model.ffn = 32;
    run.model.heads = 2;
    run.model.enc_layers = 1;
    run.model.dec_layers = 1;
    run.model.max_len = 32;
    run.model.morpho = MorphoSettings { d_m: 4, layers: 1, heads: 1, ffn: 8 };
    run.train.batch_size = 8;
    run.train.max_steps = Some(12);
    run.bpe_vocab = 150;
    run.dev_limit = 10;
    run
}

/// Checkpoint bytes and translations of one short training run.
fn fingerprint(direction: Direction, exec: Execution) -> (Vec<u8>, Vec<String>, String) {
    let mut opts = SynthOptions::new(300, 21);
    opts.held_out = 20;
    opts.copy_pairs = 20;
    let data = synthesize_data(&opts, None).expect("synthetic data");
    let run = tiny_run(direction);
    let mut metrics = Vec::new();
    let out = train_run(&run, data.language.clone(), &data.corpus, &data.held_out, exec, &mut metrics).expect("training");
    let src: Vec<String> = data.held_out.iter().map(|e| direction.orient(e).src).collect();
    let texts = out
        .model
        .translate_all(&src, run.decoder, exec)
        .expect("translation")
        .into_iter()
        .map(|t| format!("{} {:.17e}", t.text, t.log_score))
        .collect();
    (out.checkpoint.to_bytes(), texts, String::from_utf8(metrics).expect("utf-8 metrics"))
}

pub fn check() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for direction in [Direction::ToyToEnglish, Direction::EnglishToToy] {
        let a = fingerprint(direction, Execution::Parallel);
        let b = fingerprint(direction, Execution::Parallel);
        let c = fingerprint(direction, Execution::Sequential);
        let same = a == b && a == c;
        pass &= same;
        details.push(format!("{direction:?}: {} checkpoint bytes, 3 runs identical: {same}", a.0.len()));
    }
    Outcome::new(pass, details.join("; "))
}
