//! Gradient Vaccine: per-task gradients are nudged toward target pairwise
//! cosine similarities tracked by an exponential moving average.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradVacScope {
    /// One vector over all shared parameters.
    #[default]
    Flattened,
    /// Each shared parameter tensor handled separately, with its own targets.
    PerParameter,
}

/// EMA targets for every ordered task pair, one matrix per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradVacState {
    pub decay: f64,
    pub tasks: usize,
    pub targets: Vec<Vec<f64>>,
}

/// One applied adjustment, kept for contract checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjustment {
    pub block: usize,
    pub task: usize,
    pub other: usize,
    pub target: f64,
    pub before: f64,
    pub after: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    (na > 0.0 && nb > 0.0).then(|| (dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

impl GradVacState {
    pub fn new(tasks: usize, blocks: usize, decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::Config(format!("GradVac decay {decay} outside [0, 1]")));
        }
        Ok(GradVacState { decay, tasks, targets: vec![vec![0.0; tasks * tasks]; blocks] })
    }

    pub fn target(&self, block: usize, i: usize, j: usize) -> f64 {
        self.targets[block][i * self.tasks + j]
    }

    /// Adjusts the task gradients of one block in place and returns their
    /// sum. Pairs are visited in order i = 0.., j = 0.. (j != i); each
    /// adjusted g_i is compared against the original g_j.
    pub fn step_block(&mut self, block: usize, grads: &mut [Vec<f64>], log: &mut Vec<Adjustment>) -> Result<Vec<f64>> {
        let t = self.tasks;
        if grads.len() != t {
            return Err(Error::Config(format!("expected {t} task gradients, got {}", grads.len())));
        }
        let width = grads[0].len();
        if grads.iter().any(|g| g.len() != width) {
            return Err(Error::Config("task gradients differ in length".into()));
        }
        if grads.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite task gradient".into()));
        }
        let original = grads.to_vec();
        for i in 0..t {
            for j in 0..t {
                if i == j {
                    continue;
                }
                let gj = &original[j];
                let Some(phi) = cosine(&grads[i], gj) else { continue };
                let target = self.targets[block][i * t + j];
                if phi < target {
                    let lambda = norm(&grads[i]) * (target * (1.0 - phi * phi).sqrt() - phi * (1.0 - target * target).sqrt())
                        / (norm(gj) * (1.0 - target * target).sqrt());
                    if lambda.is_finite() {
                        for (a, b) in grads[i].iter_mut().zip(gj) {
                            *a += lambda * b;
                        }
                    }
                    let after = cosine(&grads[i], gj).unwrap_or(0.0);
                    log.push(Adjustment { block, task: i, other: j, target, before: phi, after });
                }
                let entry = &mut self.targets[block][i * t + j];
                *entry = self.decay * *entry + (1.0 - self.decay) * phi;
            }
        }
        let mut combined = vec![0.0; width];
        for g in grads.iter() {
            for (c, x) in combined.iter_mut().zip(g) {
                *c += x;
            }
        }
        Ok(combined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_pair_with_zero_target_is_left_alone() {
        let mut s = GradVacState::new(2, 1, 0.99).unwrap();
        let mut g = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
        let mut log = Vec::new();
        let out = s.step_block(0, &mut g, &mut log).unwrap();
        assert!(log.is_empty());
        assert_eq!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn opposing_pair_is_raised_to_zero_cosine() {
        let mut s = GradVacState::new(2, 1, 0.99).unwrap();
        // g_i = (1, 0), g_j = (-1, 1): phi = -1/sqrt 2, lambda = 1/2, g_i' = (1/2, 1/2).
        let mut g = vec![vec![1.0, 0.0], vec![-1.0, 1.0]];
        let mut log = Vec::new();
        s.step_block(0, &mut g, &mut log).unwrap();
        assert!((g[0][0] - 0.5).abs() < 1e-12 && (g[0][1] - 0.5).abs() < 1e-12);
        assert!(log[0].after.abs() < 1e-6);
        assert!((s.target(0, 0, 1) - 0.01 * (-(0.5f64).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn identical_gradients_sum() {
        let mut s = GradVacState::new(4, 1, 0.99).unwrap();
        let mut g = vec![vec![0.3, -1.0, 2.0]; 4];
        let out = s.step_block(0, &mut g, &mut Vec::new()).unwrap();
        for (o, x) in out.iter().zip([0.3, -1.0, 2.0]) {
            assert!((o - 4.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_pairs_are_skipped() {
        let mut s = GradVacState::new(2, 1, 0.5).unwrap();
        let mut g = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        s.step_block(0, &mut g, &mut Vec::new()).unwrap();
        assert_eq!(s.targets[0], vec![0.0; 4]);
    }

    #[test]
    fn adjusted_cosine_reaches_positive_target() {
        let mut s = GradVacState::new(2, 1, 0.99).unwrap();
        s.targets[0] = vec![0.0, 0.6, 0.6, 0.0];
        let mut g = vec![vec![1.0, 0.2, -0.3], vec![0.1, 1.0, 0.4]];
        let original = g.clone();
        let mut log = Vec::new();
        s.step_block(0, &mut g, &mut log).unwrap();
        assert_eq!(log.len(), 2);
        let c = cosine(&g[0], &original[1]).unwrap();
        assert!(c >= 0.6 - 1e-5, "{c}");
        assert!((log[0].after - 0.6).abs() < 1e-9);
    }
}
