//! End-to-end training runs shared by the translation and copy criteria.

use std::collections::HashSet;
use std::sync::OnceLock;
use std::time::Instant;

use morphmt::par::Execution;
use morphmt::pipeline::{
    copy_rate, isolated_name_probes, name_copy_probes, score_pairs, synthesize_data, train_run, unseen_names, Ablations, RunConfig, SynthData,
    SynthOptions, TrainedModel,
};

use crate::Outcome;

const PAIRS: usize = 20_000;
const HELD_OUT: usize = 1_000;
const COPY_PAIRS: usize = 4_000;
/// Optimizer steps per run: two passes over the corpus at batch size 32.
const STEPS: u64 = 1_250;
/// Wall-clock budget for training plus scoring one model.
const BUDGET_SECS: f64 = 30.0 * 60.0;

struct Trained {
    model: TrainedModel,
    secs: f64,
}

/// The corpus and the morphological model trained without copy pairs.
struct Shared {
    data: SynthData,
    morpho: Trained,
}

fn data() -> SynthData {
    let mut opts = SynthOptions::new(PAIRS, 11);
    opts.held_out = HELD_OUT;
    opts.copy_pairs = COPY_PAIRS;
    synthesize_data(&opts, None).expect("synthetic data")
}

fn train(data: &SynthData, ablations: Ablations, with_copy: bool) -> Trained {
    let mut run = RunConfig::desk().with_ablations(ablations);
    run.train.max_steps = Some(STEPS);
    let corpus: Vec<_> = data.corpus.iter().filter(|e| with_copy || !e.has_tag("copy")).cloned().collect();
    let start = Instant::now();
    let out = train_run(&run, data.language.clone(), &corpus, &[], Execution::Parallel, &mut std::io::sink())
        .expect("training run");
    Trained { model: out.model, secs: start.elapsed().as_secs_f64() }
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let data = data();
        let morpho = train(&data, Ablations::default(), false);
        Shared { data, morpho }
    })
}

fn held_out_score(t: &Trained, data: &SynthData) -> (f64, f64) {
    let start = Instant::now();
    let oriented: Vec<_> = data.held_out.iter().map(|e| t.model.run.direction.orient(e)).collect();
    let score = score_pairs(&t.model, &oriented, t.model.run.decoder, Execution::Parallel).expect("scoring");
    (score, t.secs + start.elapsed().as_secs_f64())
}

pub fn check_translation() -> Outcome {
    let runs = shared();
    let (score, secs) = held_out_score(&runs.morpho, &runs.data);
    let ablated = train(&runs.data, Ablations { morpho: true, ..Ablations::default() }, false);
    let (base, base_secs) = held_out_score(&ablated, &runs.data);
    let pass = score >= 85.0 && secs <= BUDGET_SECS && base < score;
    Outcome::new(
        pass,
        format!(
            "morpho ChrF++ {score:.2} in {secs:.0} s; --ablate morpho ChrF++ {base:.2} in {base_secs:.0} s ({STEPS} steps each, {} held-out pairs)",
            runs.data.held_out.len()
        ),
    )
}

pub fn check_copy() -> Outcome {
    let runs = shared();
    let names = runs.data.language.grammar().names.clone();
    let mut exclude: HashSet<String> = names.iter().cloned().collect();
    exclude.extend(runs.data.corpus.iter().filter(|e| e.has_tag("copy")).map(|e| e.src.clone()));
    let unseen = unseen_names(400, 99, &exclude);
    let isolated = isolated_name_probes(&unseen);
    let in_sentence = name_copy_probes(&runs.data.held_out, &names, &unseen);
    let with_copy = train(&runs.data, Ablations::default(), true);
    let with = copy_rate(&with_copy.model, &isolated, Execution::Parallel).expect("copy rate");
    let without = copy_rate(&runs.morpho.model, &isolated, Execution::Parallel).expect("copy rate");
    let with_ctx = copy_rate(&with_copy.model, &in_sentence, Execution::Parallel).expect("copy rate");
    let without_ctx = copy_rate(&runs.morpho.model, &in_sentence, Execution::Parallel).expect("copy rate");
    let pass = with >= 0.95 && without < with;
    Outcome::new(
        pass,
        format!(
            "{} unseen names: copy rate {:.1}% with {COPY_PAIRS} copy pairs, {:.1}% without; inside {} held-out sentences: {:.1}% with, {:.1}% without",
            isolated.len(),
            100.0 * with,
            100.0 * without,
            in_sentence.len(),
            100.0 * with_ctx,
            100.0 * without_ctx
        ),
    )
}
