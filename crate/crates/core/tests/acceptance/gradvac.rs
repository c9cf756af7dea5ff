use morphmt::training::GradVacState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Outcome;

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random per-task gradients, each pushed away from the first task's
/// direction so that pairs conflict.
fn conflicting(rng: &mut ChaCha8Rng, tasks: usize, width: usize) -> Vec<Vec<f64>> {
    let base = normal_vec(rng, width);
    (0..tasks)
        .map(|t| {
            let noise = normal_vec(rng, width);
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            base.iter().zip(&noise).map(|(b, n)| sign * b + 0.7 * n).collect()
        })
        .collect()
}

pub fn check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut adjustments = 0usize;
    let mut independent = 0usize;
    let mut independent_gap = f64::NEG_INFINITY;
    for _ in 0..300 {
        let tasks = rng.gen_range(2..=4);
        let width = rng.gen_range(2..=12);
        let decay = rng.gen_range(0.0..0.9);
        let mut state = GradVacState::new(tasks, 1, decay).unwrap();
        // Warm the targets on aligned batches so they sit above the
        // conflicting batch's cosines.
        for _ in 0..rng.gen_range(0..4) {
            let base = normal_vec(&mut rng, width);
            let mut aligned: Vec<Vec<f64>> =
                (0..tasks).map(|_| base.iter().map(|b| b + 0.3 * rng.gen::<f64>()).collect()).collect();
            state.step_block(0, &mut aligned, &mut Vec::new()).unwrap();
        }
        let original = conflicting(&mut rng, tasks, width);
        let targets: Vec<f64> = (0..tasks * tasks).map(|k| state.target(0, k / tasks, k % tasks)).collect();
        let mut grads = original.clone();
        let mut log = Vec::new();
        state.step_block(0, &mut grads, &mut log).unwrap();
        for a in &log {
            adjustments += 1;
            worst_gap = worst_gap.max(a.target - a.after);
        }
        if tasks == 2 {
            // Each task is adjusted against the single other one, so the
            // final gradient is directly comparable.
            for (i, j) in [(0, 1), (1, 0)] {
                let before = cos(&original[i], &original[j]);
                let target = targets[i * tasks + j];
                if before < target {
                    independent += 1;
                    independent_gap = independent_gap.max(target - cos(&grads[i], &original[j]));
                }
            }
        }
    }

    let mut colinear_err: f64 = 0.0;
    for _ in 0..200 {
        let tasks = rng.gen_range(2..=5);
        let width = rng.gen_range(1..=10);
        let mut state = GradVacState::new(tasks, 1, rng.gen_range(0.0..1.0)).unwrap();
        for _ in 0..rng.gen_range(0..4) {
            let mut g: Vec<Vec<f64>> = (0..tasks).map(|_| normal_vec(&mut rng, width)).collect();
            state.step_block(0, &mut g, &mut Vec::new()).unwrap();
        }
        let dir = normal_vec(&mut rng, width);
        let mut grads: Vec<Vec<f64>> = (0..tasks)
            .map(|_| {
                let c = rng.gen_range(0.05..3.0);
                dir.iter().map(|d| c * d).collect()
            })
            .collect();
        let plain: Vec<f64> = (0..width).map(|k| grads.iter().map(|g| g[k]).sum()).collect();
        let combined = state.step_block(0, &mut grads, &mut Vec::new()).unwrap();
        for (a, b) in combined.iter().zip(&plain) {
            colinear_err = colinear_err.max((a - b).abs());
        }
    }

    let pass = adjustments > 0 && independent > 0 && worst_gap <= 1e-5 && independent_gap <= 1e-5 && colinear_err <= 1e-5;
    Outcome::new(
        pass,
        format!(
            "{adjustments} adjustments, max(target - cosine after) = {worst_gap:.2e}; {independent} recomputed independently, max gap {independent_gap:.2e}; colinear max |gradvac - sum| = {colinear_err:.2e}"
        ),
    )
}
