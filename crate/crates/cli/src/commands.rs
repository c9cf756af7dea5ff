use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use morphmt::corpus::{read_jsonl, write_jsonl, ParallelExample};
use morphmt::metrics::{corpus_chrf_pp, ChrfParams};
use morphmt::par::Execution;
use morphmt::pipeline::{backtranslate, synthesize_data, train_run, RunConfig, SynthOptions, TrainedModel};
use morphmt::synthlang::Language;
use morphmt::{Error, Result};
use morphmt_tensor::Checkpoint;
use serde_json::json;

use crate::{Cli, Command, Profile};

pub fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::Config(a) => {
            let run = match a.profile {
                Profile::Desk => RunConfig::desk(),
                Profile::Full => RunConfig::full(),
            };
            println!("{}", serde_json::to_string_pretty(&run)?);
            Ok(())
        }
        Command::Train(a) => train(a, exec),
        Command::Translate(a) => translate(a, exec),
        Command::Evaluate(a) => evaluate(a, exec),
        Command::DecodeDebug(a) => {
            let model = load_model(&a.model)?;
            let steps = model.debug_trace(&a.sentence)?;
            println!("{}", serde_json::to_string_pretty(&steps)?);
            Ok(())
        }
        Command::Backtranslate(a) => {
            let model = load_model(&a.model)?;
            let lines = read_lines(&a.input)?;
            let pairs = backtranslate(&model, &lines, exec)?;
            write_jsonl(&a.out, &pairs)
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn load_language(path: &Path) -> Result<Language> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read grammar {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    let ck = Checkpoint::load(path).map_err(|e| Error::Data(format!("cannot load checkpoint {}: {e}", path.display())))?;
    TrainedModel::from_checkpoint(&ck)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn synth_data(a: crate::SynthArgs) -> Result<()> {
    let opts = SynthOptions {
        n: a.n,
        seed: a.seed,
        copy_pairs: a.copy_pairs,
        numbers: a.numbers,
        codeswitch: a.codeswitch,
        held_out: a.held_out,
    };
    let language = a.grammar.as_deref().map(load_language).transpose()?.map(Arc::new);
    let data = synthesize_data(&opts, language)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("grammar.json"), serde_json::to_string_pretty(&*data.language)?)?;
    write_jsonl(&a.out.join("corpus.jsonl"), &data.corpus)?;
    if !data.held_out.is_empty() {
        write_jsonl(&a.out.join("heldout.jsonl"), &data.held_out)?;
    }
    println!("{}", json!({"pairs": data.corpus.len(), "held_out": data.held_out.len(), "out": a.out}));
    Ok(())
}

fn train(a: crate::TrainArgs, exec: Execution) -> Result<()> {
    let mut run = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| Error::Config(format!("invalid config: {e}")))?
        }
        None => RunConfig::desk(),
    };
    run = run.with_ablations(a.ablate.parse()?);
    if let Some(m) = &a.method {
        run.train.method = m.parse()?;
    }
    if let Some(e) = a.epochs {
        run.train.epochs = e;
    }
    if a.max_steps.is_some() {
        run.train.max_steps = a.max_steps;
    }
    if let Some(s) = a.seed {
        run.train.seed = s;
        run.model_seed = s;
    }
    let grammar = a
        .grammar
        .clone()
        .unwrap_or_else(|| a.corpus.parent().unwrap_or(Path::new(".")).join("grammar.json"));
    let language = Arc::new(load_language(&grammar)?);
    let corpus: Vec<ParallelExample> = read_jsonl(&a.corpus)?;
    let dev: Vec<ParallelExample> = a.dev.as_deref().map(read_jsonl).transpose()?.unwrap_or_default();
    let metrics_path = a.metrics.clone().unwrap_or_else(|| with_suffix(&a.out, ".metrics.jsonl"));
    let mut metrics = BufWriter::new(fs::File::create(&metrics_path)?);
    let out = train_run(&run, language, &corpus, &dev, exec, &mut metrics)?;
    metrics.flush()?;
    out.checkpoint.save(&a.out)?;
    let last = out.metrics.last().expect("at least the initial event");
    println!(
        "{}",
        json!({
            "checkpoint": a.out,
            "metrics": metrics_path,
            "steps": last.step,
            "final_loss": last.total_loss(),
            "dropped": out.dropped,
            "params": out.model.store.num_trainable(),
        })
    );
    Ok(())
}

fn translate(a: crate::TranslateArgs, exec: Execution) -> Result<()> {
    let model = load_model(&a.model)?;
    let mut params = model.run.decoder;
    if let Some(b) = a.beam {
        params.beam = b;
    }
    let lines = read_lines(&a.input)?;
    let out = model.translate_all(&lines, params, exec)?;
    let mut w = BufWriter::new(fs::File::create(&a.out)?);
    for t in &out {
        writeln!(w, "{}", t.text)?;
    }
    w.flush()?;
    let sidecar = a.sidecar.clone().unwrap_or_else(|| with_suffix(&a.out, ".json"));
    fs::write(sidecar, serde_json::to_string_pretty(&out)?)?;
    Ok(())
}

fn evaluate(a: crate::EvaluateArgs, exec: Execution) -> Result<()> {
    let hyp = read_lines(&a.hyp)?;
    let reference = read_lines(&a.reference)?;
    let params = ChrfParams::default();
    let score = corpus_chrf_pp(&hyp, &reference, &params, exec)?;
    println!("{}", json!({"chrfpp": score, "n_sentences": hyp.len(), "params": params}));
    Ok(())
}
