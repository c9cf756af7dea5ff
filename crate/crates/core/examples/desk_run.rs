//! Trains the desk profile on a synthetic corpus and reports held-out
//! ChrF++. Usage: desk_run [pairs] [max_steps] [ablations] [epochs]

use std::time::Instant;

use morphmt::par::Execution;
use morphmt::pipeline::{score_pairs, synthesize_data, train_run, RunConfig, SynthOptions};

fn main() -> morphmt::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let steps: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let ablate = args.get(3).cloned().unwrap_or_default();
    let epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(40);
    let mut opts = SynthOptions::new(n, 11);
    opts.held_out = 1000;
    let data = synthesize_data(&opts, None)?;
    let mut run = RunConfig::desk().with_ablations(ablate.parse()?);
    run.train.max_steps = Some(steps);
    run.train.epochs = epochs;
    let start = Instant::now();
    let out = train_run(&run, data.language.clone(), &data.corpus, &data.held_out[..100], Execution::Parallel, &mut std::io::stdout())?;
    let trained = start.elapsed().as_secs_f64();
    let score = score_pairs(&out.model, &data.held_out, run.decoder, Execution::Parallel)?;
    println!("ablate={ablate:?} steps={steps} train_s={trained:.0} total_s={:.0} chrf={score:.2} params={}", start.elapsed().as_secs_f64(), out.model.store.num_trainable());
    Ok(())
}
