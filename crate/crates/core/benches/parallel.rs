//! Sequential versus data-parallel execution of the hot paths: training
//! steps, batch translation and corpus scoring.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use morphmt::metrics::{corpus_chrf_pp, ChrfParams};
use morphmt::par::Execution;
use morphmt::pipeline::{synthesize_data, train_run, RunConfig, SynthData, SynthOptions};
use morphmt::seq2seq::MorphoSettings;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn small_run(steps: u64) -> RunConfig {
    let mut run = RunConfig::desk();
    run.model.d = 32;
    run.model.ffn = 64;
    run.model.heads = 2;
    run.model.enc_layers = 1;
    run.model.dec_layers = 1;
    run.model.max_len = 32;
    run.model.morpho = MorphoSettings { d_m: 8, layers: 1, heads: 1, ffn: 16 };
    run.train.batch_size = 16;
    run.train.max_steps = Some(steps);
    run.bpe_vocab = 200;
    run.dev_limit = 0;
    run
}

fn data() -> SynthData {
    let mut opts = SynthOptions::new(400, 5);
    opts.held_out = 64;
    synthesize_data(&opts, None).expect("synthetic data")
}

fn training(c: &mut Criterion) {
    let data = data();
    let run = small_run(4);
    let mut group = c.benchmark_group("train_4_steps");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                train_run(&run, data.language.clone(), &data.corpus, &[], exec, &mut std::io::sink()).expect("training")
            })
        });
    }
    group.finish();
}

fn translation(c: &mut Criterion) {
    let data = data();
    let run = small_run(20);
    let model = train_run(&run, data.language.clone(), &data.corpus, &[], Execution::Parallel, &mut std::io::sink())
        .expect("training")
        .model;
    let src: Vec<String> = data.held_out.iter().map(|e| run.direction.orient(e).src).collect();
    let mut group = c.benchmark_group("translate_64");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| model.translate_all(&src, run.decoder, exec).expect("translation"))
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let data = data();
    let hyp: Vec<String> = data.corpus.iter().map(|e| e.src.clone()).collect();
    let reference: Vec<String> = data.corpus.iter().map(|e| e.tgt.clone()).collect();
    let params = ChrfParams::default();
    let mut group = c.benchmark_group("chrf_corpus");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| corpus_chrf_pp(&hyp, &reference, &params, exec).expect("aligned corpus"))
        });
    }
    group.finish();
}

criterion_group!(benches, training, translation, scoring);
criterion_main!(benches);
