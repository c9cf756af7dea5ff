//! Multi-task objective, gradient combination (plain sum or Gradient
//! Vaccine), learning-rate schedule and the training loop.

pub mod gradvac;
pub mod lm_provider;

use std::io::Write;
use std::time::Instant;

use morphmt_tensor::{Adam, AdamConfig, Checkpoint, Graph, ParamGrads, ParamId, ParamStore, Real, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bpe;
use crate::corpus::ParallelExample;
use crate::error::{Error, Result};
use crate::nn::Ctx;
use crate::par::{self, Execution};
use crate::seq2seq::{HeadLogits, Seq2Seq};
use crate::vocab::{SideCodec, SideInput, WordComposition};

pub use gradvac::{Adjustment, GradVacScope, GradVacState};
pub use lm_provider::{pretrain_lm_embeddings, LmPretrainConfig, LmPretrained};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Sum,
    GradVac,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Method::Sum),
            "gradvac" => Ok(Method::GradVac),
            other => Err(Error::Config(format!("unknown training method '{other}' (sum|gradvac)"))),
        }
    }
}

/// Per-task losses of one sentence pair: stem, affix, POS, affix set in
/// morpho mode; a single token loss in surface mode.
#[derive(Debug, Clone)]
pub struct TaskLosses {
    pub tasks: Vec<Var>,
}

/// Cross-entropy for stems, POS tags and affix sets; mean binary
/// cross-entropy over the affix inventory. PAD targets are excluded.
pub fn mtml_losses<F: Real>(cx: &Ctx<F>, logits: &HeadLogits, targets: &SideInput) -> Result<TaskLosses> {
    let g = cx.g;
    match (logits, targets) {
        (HeadLogits::Morpho { stem, affix, pos, set }, SideInput::Morpho(words)) => {
            let keep = |w: &WordComposition| w.stem != bpe::PAD;
            let pick = |f: &dyn Fn(&WordComposition) -> usize| -> Vec<Option<usize>> {
                words.iter().map(|w| keep(w).then(|| f(w))).collect()
            };
            let shape = g.shape(*affix);
            let width = shape[1];
            let mut labels = vec![F::ZERO; words.len() * width];
            for (r, w) in words.iter().enumerate() {
                for &a in &w.affixes {
                    if a >= width {
                        return Err(Error::Data(format!("affix {a} outside head of width {width}")));
                    }
                    labels[r * width + a] = F::ONE;
                }
            }
            let rows: Vec<bool> = words.iter().map(keep).collect();
            Ok(TaskLosses {
                tasks: vec![
                    g.cross_entropy(*stem, &pick(&|w| w.stem))?,
                    g.binary_cross_entropy(*affix, &labels, &rows)?,
                    g.cross_entropy(*pos, &pick(&|w| w.pos))?,
                    g.cross_entropy(*set, &pick(&|w| w.set))?,
                ],
            })
        }
        (HeadLogits::Surface { token }, SideInput::Surface(ids)) => {
            let t: Vec<Option<usize>> = ids.iter().map(|&i| (i != bpe::PAD).then_some(i)).collect();
            Ok(TaskLosses { tasks: vec![g.cross_entropy(*token, &t)?] })
        }
        _ => Err(Error::Config("targets do not match the output head mode".into())),
    }
}

/// Plain unweighted sum of the task losses.
pub fn sum_losses<F: Real>(cx: &Ctx<F>, losses: &TaskLosses) -> Result<Var> {
    let mut total = losses.tasks[0];
    for &l in &losses.tasks[1..] {
        total = cx.g.add(total, l)?;
    }
    Ok(total)
}

/// Inverse square-root schedule with linear warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup: u64,
}

impl LrSchedule {
    pub fn lr(&self, step: u64) -> f64 {
        let s = step.max(1) as f64;
        let w = self.warmup.max(1) as f64;
        self.peak * (s / w).min((w / s).sqrt())
    }
}

/// One training pair in model form.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub src: SideInput,
    pub tgt_in: SideInput,
    pub tgt_out: SideInput,
}

/// Encodes examples for the model; pairs that are empty or longer than
/// `max_len` on either side are dropped and counted.
pub fn prepare_examples(examples: &[ParallelExample], src: &SideCodec, tgt: &SideCodec, max_len: usize) -> (Vec<TrainExample>, usize) {
    let mut out = Vec::with_capacity(examples.len());
    let mut dropped = 0;
    for ex in examples {
        let s = src.encode(&ex.src);
        let (tgt_in, tgt_out) = tgt.teacher_forcing(&ex.tgt);
        if s.is_empty() || s.len() > max_len || tgt_in.len() > max_len {
            dropped += 1;
            continue;
        }
        out.push(TrainExample { src: s, tgt_in, tgt_out });
    }
    (out, dropped)
}

/// Builds the forward graph of one example and returns its task losses.
pub fn example_losses<F: Real>(model: &Seq2Seq, cx: &Ctx<F>, ex: &TrainExample) -> Result<TaskLosses> {
    let enc = model.encode(cx, &ex.src)?;
    let dec = model.decode(cx, &enc, &ex.tgt_in)?;
    let logits = model.head_logits(cx, dec.hidden)?;
    mtml_losses(cx, &logits, &ex.tgt_out)
}

/// Task-loss values of one example, without gradients (no dropout).
pub fn evaluate_losses<F: Real>(model: &Seq2Seq, store: &ParamStore<F>, ex: &TrainExample) -> Result<Vec<f64>> {
    let g = Graph::new();
    let cx = Ctx::eval(&g, store);
    let l = example_losses(model, &cx, ex)?;
    Ok(l.tasks.iter().map(|&v| g.value(v).item().to_f64()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub method: Method,
    pub gradvac_decay: f64,
    pub gradvac_scope: GradVacScope,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Stop after this many optimiser steps (across epochs).
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 32,
            schedule: LrSchedule { peak: 5e-4, warmup: 8000 },
            method: Method::Sum,
            gradvac_decay: 0.99,
            gradvac_scope: GradVacScope::Flattened,
            clip_norm: None,
            seed: 1,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.schedule.peak > 0.0) {
            return Err(Error::Config("peak learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One metrics event (JSONL line).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub step: u64,
    pub loss_s: f64,
    pub loss_a: Option<f64>,
    pub loss_p: Option<f64>,
    pub loss_as: Option<f64>,
    pub lr: f64,
    pub dev_chrfpp: Option<f64>,
}

impl EpochMetrics {
    fn from_losses(epoch: usize, step: u64, losses: &[f64], lr: f64) -> Self {
        let at = |i: usize| losses.get(i).copied();
        EpochMetrics { epoch, step, loss_s: losses[0], loss_a: at(1), loss_p: at(2), loss_as: at(3), lr, dev_chrfpp: None }
    }

    pub fn total_loss(&self) -> f64 {
        self.loss_s + self.loss_a.unwrap_or(0.0) + self.loss_p.unwrap_or(0.0) + self.loss_as.unwrap_or(0.0)
    }
}

/// Resumable trainer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerProgress {
    pub step: u64,
    pub epoch: usize,
    pub batch_in_epoch: usize,
    pub gradvac: GradVacState,
}

pub struct Trainer<F: Real> {
    pub config: TrainConfig,
    pub execution: Execution,
    pub progress: TrainerProgress,
    pub adam: Adam<F>,
    pub adjustments: Vec<Adjustment>,
    shared: Vec<ParamId>,
    heads: Vec<ParamId>,
}

struct ExampleGrads<F: Real> {
    tasks: Vec<ParamGrads<F>>,
    losses: Vec<f64>,
}

/// Summary of one optimiser step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub lr: f64,
    pub losses: Vec<f64>,
}

const TRAINER_STATE_KEY: &str = "trainer";

impl<F: Real> Trainer<F> {
    pub fn new(config: TrainConfig, model: &Seq2Seq, store: &ParamStore<F>, execution: Execution) -> Result<Self> {
        config.validate()?;
        let trainable: Vec<ParamId> = store.ids().filter(|&id| store.is_trainable(id)).collect();
        let (heads, shared): (Vec<ParamId>, Vec<ParamId>) = trainable.into_iter().partition(|&id| store.name(id).starts_with("head."));
        let tasks = if model.config.tgt_mode == crate::seq2seq::SideMode::Morpho { 4 } else { 1 };
        let blocks = match config.gradvac_scope {
            GradVacScope::Flattened => 1,
            GradVacScope::PerParameter => shared.len(),
        };
        let gradvac = GradVacState::new(tasks, blocks, config.gradvac_decay)?;
        Ok(Trainer {
            adam: Adam::new(store, AdamConfig::default()),
            config,
            execution,
            progress: TrainerProgress { step: 0, epoch: 0, batch_in_epoch: 0, gradvac },
            adjustments: Vec::new(),
            shared,
            heads,
        })
    }

    fn example_grads(&self, model: &Seq2Seq, store: &ParamStore<F>, ex: &TrainExample, seed: u64) -> Result<ExampleGrads<F>> {
        let g = Graph::new();
        let cx = Ctx::train(&g, store, model.config.dropout, seed);
        let losses = example_losses(model, &cx, ex)?;
        let values: Vec<f64> = losses.tasks.iter().map(|&v| g.value(v).item().to_f64()).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("loss became non-finite: {values:?}")));
        }
        let roots = match self.config.method {
            Method::Sum => vec![sum_losses(&cx, &losses)?],
            Method::GradVac => losses.tasks.clone(),
        };
        let mut tasks = Vec::with_capacity(roots.len());
        for root in roots {
            let grads = g.backward(root)?;
            let mut acc = ParamGrads::for_store(store);
            g.accumulate_param_grads(&grads, &mut acc);
            tasks.push(acc);
        }
        Ok(ExampleGrads { tasks, losses: values })
    }

    /// Combined gradient from batch-mean task gradients.
    fn combine(&mut self, store: &ParamStore<F>, mut tasks: Vec<ParamGrads<F>>) -> Result<ParamGrads<F>> {
        if tasks.len() == 1 {
            return Ok(tasks.pop().expect("one task"));
        }
        let mut out = ParamGrads::for_store(store);
        let blocks: Vec<Vec<ParamId>> = match self.config.gradvac_scope {
            GradVacScope::Flattened => vec![self.shared.clone()],
            GradVacScope::PerParameter => self.shared.iter().map(|&id| vec![id]).collect(),
        };
        for (b, ids) in blocks.iter().enumerate() {
            let mut flat: Vec<Vec<f64>> = tasks
                .iter()
                .map(|t| t.flatten(store, ids).into_iter().map(|x| x.to_f64()).collect())
                .collect();
            let combined = self.progress.gradvac.step_block(b, &mut flat, &mut self.adjustments)?;
            let combined: Vec<F> = combined.into_iter().map(F::from_f64).collect();
            out.unflatten(store, ids, &combined);
        }
        for &id in &self.heads {
            for t in &tasks {
                if let Some(g) = t.get(id) {
                    out.add(id, g);
                }
            }
        }
        Ok(out)
    }

    /// One optimiser step on `batch`.
    pub fn train_step(&mut self, model: &Seq2Seq, store: &mut ParamStore<F>, batch: &[&TrainExample]) -> Result<StepReport> {
        if batch.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        let step = self.progress.step + 1;
        let base = self.config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ step.wrapping_mul(0x1000_0001);
        let indexed: Vec<(usize, &TrainExample)> = batch.iter().copied().enumerate().collect();
        let per_example = {
            let frozen: &ParamStore<F> = store;
            par::try_map(self.execution, &indexed, |(i, ex)| self.example_grads(model, frozen, ex, base.wrapping_add(*i as u64)))?
        };
        let n_tasks = per_example[0].tasks.len();
        let mut tasks: Vec<ParamGrads<F>> = (0..n_tasks).map(|_| ParamGrads::for_store(store)).collect();
        let mut losses = vec![0.0; per_example[0].losses.len()];
        for ex in &per_example {
            for (acc, t) in tasks.iter_mut().zip(&ex.tasks) {
                acc.add_all(t);
            }
            for (l, v) in losses.iter_mut().zip(&ex.losses) {
                *l += v / batch.len() as f64;
            }
        }
        let inv = F::from_f64(1.0 / batch.len() as f64);
        for t in &mut tasks {
            t.scale(inv);
        }
        let mut grads = self.combine(store, tasks)?;
        if !grads.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient at step {step}")));
        }
        if let Some(clip) = self.config.clip_norm {
            let n = grads.norm().to_f64();
            if n > clip {
                grads.scale(F::from_f64(clip / n));
            }
        }
        let lr = self.config.schedule.lr(step);
        self.adam.update(store, &grads, lr);
        self.progress.step = step;
        Ok(StepReport { step, lr, losses })
    }

    /// Batches of one epoch, in a seeded order.
    pub fn epoch_order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ (epoch as u64).wrapping_mul(0x5851_f42d_4c95_7f2d));
        order.shuffle(&mut rng);
        order
    }

    fn done(&self) -> bool {
        self.config.max_steps.is_some_and(|m| self.progress.step >= m) || self.progress.epoch >= self.config.epochs
    }

    /// Trains until the epoch or step budget is spent. Writes one JSON line
    /// per epoch to `metrics` (plus an epoch-0 line with the untrained
    /// loss when starting fresh); `dev` scores the model after each epoch.
    pub fn fit(
        &mut self,
        model: &Seq2Seq,
        store: &mut ParamStore<F>,
        data: &[TrainExample],
        dev: Option<&dyn Fn(&ParamStore<F>) -> Result<f64>>,
        metrics: &mut dyn Write,
    ) -> Result<Vec<EpochMetrics>> {
        if data.is_empty() {
            return Err(Error::Data("training corpus is empty".into()));
        }
        let start = Instant::now();
        let mut events = Vec::new();
        if self.progress.step == 0 && self.progress.epoch == 0 && self.progress.batch_in_epoch == 0 {
            let losses = mean_losses(model, store, data, self.execution)?;
            let ev = EpochMetrics::from_losses(0, 0, &losses, 0.0);
            write_event(metrics, &ev)?;
            events.push(ev);
        }
        while !self.done() {
            let order = self.epoch_order(self.progress.epoch, data.len());
            let batches: Vec<&[usize]> = order.chunks(self.config.batch_size).collect();
            let mut sums: Vec<f64> = Vec::new();
            let mut count = 0usize;
            let mut lr = 0.0;
            while self.progress.batch_in_epoch < batches.len() {
                if self.config.max_steps.is_some_and(|m| self.progress.step >= m) {
                    break;
                }
                let batch: Vec<&TrainExample> = batches[self.progress.batch_in_epoch].iter().map(|&i| &data[i]).collect();
                let report = self.train_step(model, store, &batch)?;
                if sums.is_empty() {
                    sums = vec![0.0; report.losses.len()];
                }
                for (s, l) in sums.iter_mut().zip(&report.losses) {
                    *s += l;
                }
                count += 1;
                lr = report.lr;
                self.progress.batch_in_epoch += 1;
            }
            if self.progress.batch_in_epoch >= batches.len() {
                self.progress.epoch += 1;
                self.progress.batch_in_epoch = 0;
            }
            if count == 0 {
                break;
            }
            let means: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
            let mut ev = EpochMetrics::from_losses(self.progress.epoch, self.progress.step, &means, lr);
            if let Some(f) = dev {
                ev.dev_chrfpp = Some(f(store)?);
            }
            log::info!("epoch {} step {} loss {:.4} ({:.1}s)", ev.epoch, ev.step, ev.total_loss(), start.elapsed().as_secs_f64());
            write_event(metrics, &ev)?;
            events.push(ev);
        }
        Ok(events)
    }

    /// Checkpoint with the model parameters, optimiser moments and
    /// progress; `metadata` is embedded alongside the trainer state.
    pub fn checkpoint(&self, store: &ParamStore<F>, metadata: serde_json::Value) -> Result<Checkpoint> {
        let mut meta = match metadata {
            serde_json::Value::Object(m) => m,
            other => {
                let mut m = serde_json::Map::new();
                m.insert("model".into(), other);
                m
            }
        };
        let state = serde_json::json!({
            "progress": self.progress,
            "config": self.config,
            "adam_step": self.adam.step,
        });
        meta.insert(TRAINER_STATE_KEY.into(), state);
        let mut ck = Checkpoint::from_store(store, serde_json::Value::Object(meta).to_string());
        for (id, name, _) in store.iter() {
            if store.is_trainable(id) {
                ck.push(format!("adam.m.{name}"), &self.adam.m[id.0]);
                ck.push(format!("adam.v.{name}"), &self.adam.v[id.0]);
            }
        }
        Ok(ck)
    }

    /// Restores parameters and trainer state from a checkpoint written by
    /// [`Trainer::checkpoint`].
    pub fn resume(ck: &Checkpoint, model: &Seq2Seq, store: &mut ParamStore<F>, execution: Execution) -> Result<Self> {
        ck.load_into(store)?;
        let meta: serde_json::Value = serde_json::from_str(&ck.metadata)?;
        let state = meta
            .get(TRAINER_STATE_KEY)
            .ok_or_else(|| Error::Data("checkpoint has no trainer state".into()))?;
        let config: TrainConfig = serde_json::from_value(state["config"].clone())?;
        let progress: TrainerProgress = serde_json::from_value(state["progress"].clone())?;
        let mut t = Trainer::new(config, model, store, execution)?;
        t.progress = progress;
        t.adam.step = state["adam_step"].as_u64().unwrap_or(0);
        for (id, name, _) in store.iter() {
            if store.is_trainable(id) {
                for (prefix, slot) in [("adam.m", &mut t.adam.m), ("adam.v", &mut t.adam.v)] {
                    let tensor = ck
                        .get(&format!("{prefix}.{name}"))
                        .ok_or_else(|| Error::Data(format!("checkpoint lacks optimiser state for {name}")))?;
                    slot[id.0] = tensor.to_real::<F>();
                }
            }
        }
        Ok(t)
    }
}

fn write_event(w: &mut dyn Write, ev: &EpochMetrics) -> Result<()> {
    serde_json::to_writer(&mut *w, ev)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Mean task losses over `data` in evaluation mode.
pub fn mean_losses<F: Real>(model: &Seq2Seq, store: &ParamStore<F>, data: &[TrainExample], exec: Execution) -> Result<Vec<f64>> {
    let per = par::try_map(exec, data, |ex| evaluate_losses(model, store, ex))?;
    let mut out = vec![0.0; per[0].len()];
    for l in &per {
        for (o, v) in out.iter_mut().zip(l) {
            *o += v / data.len() as f64;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite evaluation loss".into()));
    }
    Ok(out)
}
