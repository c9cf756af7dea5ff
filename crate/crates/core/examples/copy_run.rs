//! Measures how often unseen names are copied verbatim, with and without
//! copy pairs in the training data.
//! Usage: copy_run [pairs] [copy_pairs] [steps] [bpe_vocab] [copy-only]

use std::collections::HashSet;

use morphmt::par::Execution;
use morphmt::pipeline::{copy_rate, isolated_name_probes, name_copy_probes, synthesize_data, train_run, unseen_names, RunConfig, SynthOptions};

fn main() -> morphmt::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let k: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let steps: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1250);
    let bpe: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(400);
    let both = args.get(5).map_or(true, |s| s != "copy-only");
    let mut opts = SynthOptions::new(n, 11);
    opts.held_out = 1000;
    opts.copy_pairs = k;
    let data = synthesize_data(&opts, None)?;
    let names = &data.language.grammar().names;
    let mut exclude: HashSet<String> = names.iter().cloned().collect();
    exclude.extend(data.corpus.iter().filter(|e| e.has_tag("copy")).map(|e| e.src.clone()));
    let unseen = unseen_names(400, 99, &exclude);
    let probes = name_copy_probes(&data.held_out, names, &unseen);
    let isolated = isolated_name_probes(&unseen);
    let mut run = RunConfig::desk();
    run.train.max_steps = Some(steps);
    run.bpe_vocab = bpe;
    for with_copy in [true, false] {
        if !with_copy && !both {
            break;
        }
        let corpus: Vec<_> = data.corpus.iter().filter(|e| with_copy || !e.has_tag("copy")).cloned().collect();
        let start = std::time::Instant::now();
        let out = train_run(&run, data.language.clone(), &corpus, &[], Execution::Parallel, &mut std::io::sink())?;
        let rate = copy_rate(&out.model, &probes, Execution::Parallel)?;
        let alone = copy_rate(&out.model, &isolated, Execution::Parallel)?;
        println!(
            "with_copy={with_copy} pairs={} bpe={bpe} steps={steps} probes={} in_sentence={rate:.4} isolated={alone:.4} secs={:.0}",
            corpus.len(),
            probes.len(),
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
