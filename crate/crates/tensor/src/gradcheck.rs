//! Central finite-difference checks of taped gradients (64-bit only).

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{ParamGrads, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over checked coordinates of `|a − n| / max(1e-8, |a| + |n|)`.
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates where the one-sided slopes disagree (kinks); excluded from
    /// the maximum.
    pub flagged: Vec<usize>,
    pub worst: Option<usize>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn is_kink(f0: f64, plus: f64, minus: f64, eps: f64) -> bool {
    let right = (plus - f0) / eps;
    let left = (f0 - minus) / eps;
    let gap = (right - left).abs();
    gap > 1e-6 && gap > 0.1 * right.abs().max(left.abs())
}

struct Accum {
    report: GradCheckReport,
}

impl Accum {
    fn new() -> Self {
        Self {
            report: GradCheckReport {
                max_relative_error: 0.0,
                checked: 0,
                flagged: Vec::new(),
                worst: None,
            },
        }
    }

    fn visit(&mut self, index: usize, analytic: f64, f0: f64, plus: f64, minus: f64, eps: f64) {
        if is_kink(f0, plus, minus, eps) {
            self.report.flagged.push(index);
            return;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic, numeric);
        self.report.checked += 1;
        if err > self.report.max_relative_error || self.report.worst.is_none() {
            self.report.max_relative_error = err.max(self.report.max_relative_error);
            self.report.worst = Some(index);
        }
    }
}

/// Checks the gradient of a scalar function of one tensor input.
pub fn grad_check<Fun>(f: Fun, x: &Tensor<f64>, epsilon: f64) -> Result<GradCheckReport>
where
    Fun: Fn(&Graph<f64>, Var) -> Result<Var>,
{
    let eval = |t: &Tensor<f64>| -> Result<f64> {
        let g = Graph::new();
        let v = g.leaf(t.clone());
        let out = f(&g, v)?;
        Ok(g.value(out).item())
    };
    let g = Graph::new();
    let v = g.leaf(x.clone());
    let out = f(&g, v)?;
    let f0 = g.value(out).item();
    let analytic = g.backward(out)?.wrt(v);

    let mut acc = Accum::new();
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - epsilon;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        acc.visit(i, analytic.data()[i], f0, plus, minus, epsilon);
    }
    Ok(acc.report)
}

/// Checks gradients of `loss` with respect to every trainable parameter.
/// Coordinates are numbered in flattened registration order.
pub fn grad_check_params<Fun>(store: &ParamStore<f64>, loss: Fun, epsilon: f64) -> Result<GradCheckReport>
where
    Fun: Fn(&Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let g = Graph::new();
    let out = loss(&g, store)?;
    let f0 = g.value(out).item();
    let grads = g.backward(out)?;
    let mut pg = ParamGrads::for_store(store);
    g.accumulate_param_grads(&grads, &mut pg);

    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let g = Graph::new();
        let out = loss(&g, s)?;
        Ok(g.value(out).item())
    };

    let mut acc = Accum::new();
    let mut probe = store.clone();
    let mut offset = 0;
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        if !store.is_trainable(id) {
            offset += n;
            continue;
        }
        for i in 0..n {
            let analytic = pg.get(id).map_or(0.0, |g| g[i]);
            let orig = store.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + epsilon;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - epsilon;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;
            acc.visit(offset + i, analytic, f0, plus, minus, epsilon);
        }
        offset += n;
    }
    Ok(acc.report)
}
