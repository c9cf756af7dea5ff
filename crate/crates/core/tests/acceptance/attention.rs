use morphmt::nn::attention::{causal_mask, key_padding_mask, AttentionLayer, LogitBiasConfig, PositionTables};
use morphmt::nn::{Ctx, Init};
use morphmt_tensor::{Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

type Mat = Vec<Vec<f64>>;

fn param(store: &ParamStore<f64>, name: &str, cols: usize) -> Mat {
    let id = store.id(name).unwrap_or_else(|| panic!("missing parameter {name}"));
    store.get(id).data().chunks(cols).map(|c| c.to_vec()).collect()
}

fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn tensor(m: &Mat) -> Tensor<f64> {
    Tensor::new(vec![m.len(), m[0].len()], m.iter().flatten().copied().collect()).unwrap()
}

/// `sum_c (x[i] . a[:, h*dh + c]) (y[j] . b[:, h*dh + c])`, written as loops.
fn bilinear(x: &[f64], a: &Mat, y: &[f64], b: &Mat, h: usize, dh: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..dh {
        let col = h * dh + c;
        let mut u = 0.0;
        for (k, xv) in x.iter().enumerate() {
            u += xv * a[k][col];
        }
        let mut v = 0.0;
        for (k, yv) in y.iter().enumerate() {
            v += yv * b[k][col];
        }
        total += u * v;
    }
    total
}

struct Case {
    cross: bool,
    cfg: LogitBiasConfig,
    d: usize,
    heads: usize,
    m: usize,
    n: usize,
    max_len: usize,
    lm_dim: usize,
}

fn random_case(rng: &mut ChaCha8Rng, all_off: bool) -> Case {
    let cross = rng.gen_bool(0.5);
    let heads = [1, 2, 4][rng.gen_range(0..3)];
    let d = heads * rng.gen_range(1..=4);
    let max_len = 8;
    let m = rng.gen_range(1..=max_len);
    let n = if cross { rng.gen_range(1..=max_len) } else { m };
    let mut flip = |p: f64| !all_off && rng.gen_bool(p);
    let cfg = LogitBiasConfig {
        untied_pos: !cross && flip(0.5),
        relative: !cross && flip(0.5),
        lm_bias: flip(0.4),
        xpos: cross && flip(0.6),
        r_clip: rng.gen_range(1..=4),
    };
    Case { cross, cfg, d, heads, m, n, max_len, lm_dim: rng.gen_range(1..=5) }
}

/// (max |graph - oracle|, baseline bitwise identical when every flag is off)
fn run_case(rng: &mut ChaCha8Rng, c: &Case) -> (f64, bool) {
    let mut store = ParamStore::<f64>::new();
    let (pos, layer) = {
        let mut init = Init::new(&mut store, rng.gen());
        let pos = if c.cross {
            PositionTables::new_cross(&mut init, "site", &c.cfg, c.d, c.heads, c.max_len).unwrap()
        } else {
            PositionTables::new_self(&mut init, "site", &c.cfg, c.d, c.heads, c.max_len).unwrap()
        };
        let layer = AttentionLayer::new(&mut init, "layer", c.d, c.heads, c.cfg.lm_bias.then_some(c.lm_dim)).unwrap();
        (pos, layer)
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let xq = random_mat(rng, c.m, c.d);
    let xkv = if c.cross { random_mat(rng, c.n, c.d) } else { xq.clone() };
    let lm_keys = random_mat(rng, c.n, c.lm_dim);
    let mask: Mat = if c.cross {
        let valid = rng.gen_range(1..=c.n);
        let t = key_padding_mask::<f64>(c.m, c.n, valid);
        t.data().chunks(c.n).map(|r| r.to_vec()).collect()
    } else {
        let t = causal_mask::<f64>(c.m);
        t.data().chunks(c.m).map(|r| r.to_vec()).collect()
    };

    let g = Graph::new();
    let cx = Ctx::eval(&g, &store);
    let q_var = g.constant(tensor(&xq));
    let kv_var = if c.cross { g.constant(tensor(&xkv)) } else { q_var };
    let lm_var = c.cfg.lm_bias.then(|| g.constant(tensor(&lm_keys)));
    let mask_var = g.constant(tensor(&mask));
    let terms = pos.terms(&cx, c.m, c.n).unwrap();
    let dh = c.d / c.heads;
    let scale = c.cfg.scale(dh);
    let logits = layer
        .logit_terms(&cx, q_var, kv_var, &terms, lm_var)
        .unwrap()
        .combine(&cx, scale, Some(mask_var))
        .unwrap();

    // Scalar oracle.
    let any = c.cfg.untied_pos || c.cfg.relative || c.cfg.lm_bias || c.cfg.xpos;
    let oracle_scale = 1.0 / ((if any { 3.0 } else { 1.0 }) * dh as f64).sqrt();
    let wq = param(&store, "layer.q", c.d);
    let wk = param(&store, "layer.k", c.d);
    let absolute = if c.cross { c.cfg.xpos } else { c.cfg.untied_pos };
    let relative = if c.cross { c.cfg.xpos } else { c.cfg.relative };
    let (abs_q, abs_k) = if c.cross {
        ("site.abs_tgt", "site.abs_src")
    } else {
        ("site.abs", "site.abs")
    };
    let mut worst: f64 = 0.0;
    for h in 0..c.heads {
        let got = g.value(logits[h]);
        for i in 0..c.m {
            for j in 0..c.n {
                let mut s = bilinear(&xq[i], &wq, &xkv[j], &wk, h, dh);
                if absolute {
                    let pq = param(&store, "site.proj_q", c.d);
                    let pk = param(&store, "site.proj_k", c.d);
                    let tq = param(&store, abs_q, c.d);
                    let tk = param(&store, abs_k, c.d);
                    s += bilinear(&tq[i], &pq, &tk[j], &pk, h, dh);
                }
                if relative {
                    let r = c.cfg.r_clip as i64;
                    let rel = param(&store, "site.rel", 2 * c.cfg.r_clip + 1);
                    let offset = (j as i64 - i as i64).clamp(-r, r) + r;
                    s += rel[h][offset as usize];
                }
                if c.cfg.lm_bias {
                    let lq = param(&store, "layer.lm_q", c.d);
                    let lk = param(&store, "layer.lm_k", c.d);
                    s += bilinear(&xq[i], &lq, &lm_keys[j], &lk, h, dh);
                }
                let expected = oracle_scale * s + mask[i][j];
                worst = worst.max((got.data()[i * c.n + j] - expected).abs());
            }
        }
    }

    // Plain scaled dot-product logits built directly on the graph.
    let mut baseline_exact = true;
    if !any {
        let q = g.matmul(q_var, cx.p(layer.q)).unwrap();
        let k = g.matmul(kv_var, cx.p(layer.k)).unwrap();
        for h in 0..c.heads {
            let qh = g.slice_cols(q, h * dh, dh).unwrap();
            let kh = g.slice_cols(k, h * dh, dh).unwrap();
            let plain = g.add(g.scale(g.matmul_t(qh, kh).unwrap(), 1.0 / (dh as f64).sqrt()), mask_var).unwrap();
            baseline_exact &= g.value(plain).data() == g.value(logits[h]).data();
        }
    }
    (worst, baseline_exact)
}

pub fn check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut worst: f64 = 0.0;
    let mut flagged = 0;
    for _ in 0..100 {
        let case = random_case(&mut rng, false);
        flagged += usize::from(case.cfg.any_augmentation());
        let (err, _) = run_case(&mut rng, &case);
        worst = worst.max(err);
    }
    let mut baseline_cases = 0;
    let mut baseline_ok = true;
    let mut baseline_worst: f64 = 0.0;
    for _ in 0..20 {
        let case = random_case(&mut rng, true);
        let (err, exact) = run_case(&mut rng, &case);
        baseline_cases += 1;
        baseline_ok &= exact;
        baseline_worst = baseline_worst.max(err);
    }
    let pass = worst <= 1e-6 && baseline_ok && baseline_worst <= 1e-6;
    Outcome::new(
        pass,
        format!(
            "100 random cases ({flagged} with bias terms), max |graph - oracle| {worst:.1e}; {baseline_cases} flag-free cases bitwise equal to plain logits: {baseline_ok}"
        ),
    )
}
