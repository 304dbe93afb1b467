//! Central finite-difference checks for every differentiable op. This is
//! the independent oracle the analytic backward passes are validated
//! against, both in tests and via the `gradcheck` CLI subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::lstm::{lstm_step, lstm_step_backward, LstmState};
use crate::nn::ops;
use crate::nn::params::ParamStore;
use crate::nn::tensor::Tensor;

/// Relative tolerance for analytic vs central-difference gradients.
pub const TOLERANCE: f64 = 1e-4;
/// Central-difference step.
pub const STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub seed: u64,
    pub max_rel_err: f64,
    pub checked: usize,
}

impl CheckReport {
    pub fn pass(&self) -> bool {
        self.max_rel_err <= TOLERANCE
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Perturbs every coordinate of `xs` in turn and compares the central
/// difference of `f` against `analytic`. Returns the max relative error.
pub fn fd_check_slice(
    xs: &mut [f64],
    analytic: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    assert_eq!(xs.len(), analytic.len());
    let mut worst = 0.0f64;
    for i in 0..xs.len() {
        let orig = xs[i];
        xs[i] = orig + STEP;
        let up = f(xs);
        xs[i] = orig - STEP;
        let down = f(xs);
        xs[i] = orig;
        let fd = (up - down) / (2.0 * STEP);
        worst = worst.max(rel_err(fd, analytic[i]));
    }
    worst
}

/// Compares a sample of parameter coordinates against finite differences
/// of `forward`. The store's gradient slots must already hold the
/// analytic gradients for the same forward computation.
pub fn check_store_grads<F>(
    store: &mut ParamStore<f64>,
    mut forward: F,
    coords_per_param: usize,
    seed: u64,
) -> (f64, usize)
where
    F: FnMut(&ParamStore<f64>) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = store.names().to_vec();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for name in names {
        let len = store.get(&name).len();
        let picks: Vec<usize> = if len <= coords_per_param {
            (0..len).collect()
        } else {
            (0..coords_per_param).map(|_| rng.gen_range(0..len)).collect()
        };
        for i in picks {
            let analytic = store.grad(&name).data()[i];
            let orig = store.get(&name).data()[i];
            store.get_mut(&name).data_mut()[i] = orig + STEP;
            let up = forward(store);
            store.get_mut(&name).data_mut()[i] = orig - STEP;
            let down = forward(store);
            store.get_mut(&name).data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_err(fd, analytic));
            checked += 1;
        }
    }
    (worst, checked)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn weighted_sum(out: &[f64], weights: &[f64]) -> f64 {
    out.iter().zip(weights).map(|(a, b)| a * b).sum()
}

fn conv3d_check(seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0117);
    let ci = rng.gen_range(1..3usize);
    let co = rng.gen_range(1..3usize);
    let (d, h, w) = (
        rng.gen_range(2..4usize),
        rng.gen_range(3..5usize),
        rng.gen_range(3..6usize),
    );
    let kshape = [co, ci, 3, 3, 3];
    let mut input = rand_vec(&mut rng, ci * d * h * w, 1.0);
    let mut kernels = rand_vec(&mut rng, kshape.iter().product(), 0.5);
    let mut bias = rand_vec(&mut rng, co, 0.5);
    let proj = rand_vec(&mut rng, co * d * h * w, 1.0);
    let ishape = [ci, d, h, w];

    let run = |ivals: &[f64], kvals: &[f64], bvals: &[f64]| -> f64 {
        let out = ops::conv3d(
            &Tensor::from_vec(&ishape, ivals.to_vec()),
            &Tensor::from_vec(&kshape, kvals.to_vec()),
            bvals,
        )
        .unwrap();
        weighted_sum(out.data(), &proj)
    };

    let it = Tensor::from_vec(&ishape, input.clone());
    let kt = Tensor::from_vec(&kshape, kernels.clone());
    let gout = Tensor::from_vec(&[co, d, h, w], proj.clone());
    let (gin, gk, gb) = ops::conv3d_backward(&it, &kt, &gout);

    let k2 = kernels.clone();
    let b2 = bias.clone();
    let e1 = fd_check_slice(&mut input, gin.data(), |iv| run(iv, &k2, &b2));
    let i2 = input.clone();
    let e2 = fd_check_slice(&mut kernels, gk.data(), |kv| run(&i2, kv, &b2));
    let k3 = kernels.clone();
    let e3 = fd_check_slice(&mut bias, &gb, |bv| run(&i2, &k3, bv));
    CheckReport {
        name: "conv3d".into(),
        seed,
        max_rel_err: e1.max(e2).max(e3),
        checked: input.len() + kernels.len() + bias.len(),
    }
}

fn maxpool3d_check(seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9001);
    let c = rng.gen_range(1..3usize);
    let (d, h, w) = (
        rng.gen_range(2..5usize),
        rng.gen_range(2..6usize),
        rng.gen_range(2..6usize),
    );
    // Values are a shuffled grid with 0.01 separation, so no window has
    // near-ties and the max is finite-difference safe.
    let n = c * d * h * w;
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        vals.swap(i, j);
    }
    let proj = rand_vec(&mut rng, {
        let od = d.div_ceil(2) * h.div_ceil(2) * w.div_ceil(2);
        c * od
    }, 1.0);
    let shape = [c, d, h, w];
    let run = |xv: &[f64]| -> f64 {
        let (out, _) = ops::maxpool3d(&Tensor::from_vec(&shape, xv.to_vec()));
        weighted_sum(out.data(), &proj)
    };
    let (out, argmax) = ops::maxpool3d(&Tensor::from_vec(&shape, vals.clone()));
    let gout = Tensor::from_vec(out.shape(), proj.clone());
    let gin = ops::maxpool3d_backward(&shape, &argmax, &gout);
    let err = fd_check_slice(&mut vals, gin.data(), run);
    CheckReport {
        name: "maxpool3d".into(),
        seed,
        max_rel_err: err,
        checked: n,
    }
}

fn dense_relu_check(seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDE45E);
    let n = rng.gen_range(3..7usize);
    let m = rng.gen_range(2..6usize);
    let k = rng.gen_range(2..5usize);
    let mut x = rand_vec(&mut rng, n, 1.0);
    let mut w1 = rand_vec(&mut rng, m * n, 1.0);
    let mut b1 = rand_vec(&mut rng, m, 0.5);
    let mut w2 = rand_vec(&mut rng, k * m, 1.0);
    let mut b2 = rand_vec(&mut rng, k, 0.5);
    let proj = rand_vec(&mut rng, k, 1.0);

    let run = |xv: &[f64], w1v: &[f64], b1v: &[f64], w2v: &[f64], b2v: &[f64]| -> f64 {
        let w1t = Tensor::from_vec(&[m, n], w1v.to_vec());
        let w2t = Tensor::from_vec(&[k, m], w2v.to_vec());
        let h1 = ops::dense(xv, &w1t, b1v);
        let a1 = ops::relu(&h1);
        let y = ops::dense(&a1, &w2t, b2v);
        weighted_sum(&y, &proj)
    };

    // Analytic pass.
    let w1t = Tensor::from_vec(&[m, n], w1.clone());
    let w2t = Tensor::from_vec(&[k, m], w2.clone());
    let h1 = ops::dense(&x, &w1t, &b1);
    let a1 = ops::relu(&h1);
    let (ga1, gw2, gb2) = ops::dense_backward(&a1, &w2t, &proj);
    let gh1 = ops::relu_backward(&h1, &ga1);
    let (gx, gw1, gb1) = ops::dense_backward(&x, &w1t, &gh1);

    let (cw1, cb1, cw2, cb2) = (w1.clone(), b1.clone(), w2.clone(), b2.clone());
    let cx = x.clone();
    let mut worst = fd_check_slice(&mut x, &gx, |v| run(v, &cw1, &cb1, &cw2, &cb2));
    worst = worst.max(fd_check_slice(&mut w1, gw1.data(), |v| run(&cx, v, &cb1, &cw2, &cb2)));
    worst = worst.max(fd_check_slice(&mut b1, &gb1, |v| run(&cx, &cw1, v, &cw2, &cb2)));
    worst = worst.max(fd_check_slice(&mut w2, gw2.data(), |v| run(&cx, &cw1, &cb1, v, &cb2)));
    worst = worst.max(fd_check_slice(&mut b2, &gb2, |v| run(&cx, &cw1, &cb1, &cw2, v)));
    CheckReport {
        name: "dense_relu_dense".into(),
        seed,
        max_rel_err: worst,
        checked: n + m * n + m + k * m + k,
    }
}

fn softmax_xent_check(seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x50F7);
    let k = rng.gen_range(3..12usize);
    let target = rng.gen_range(0..k);
    let mut logits = rand_vec(&mut rng, k, 2.0);
    let (_, grad) = ops::softmax_xent(&logits, target);
    let err = fd_check_slice(&mut logits, &grad, |lv| ops::softmax_xent(lv, target).0);
    CheckReport {
        name: "softmax_xent".into(),
        seed,
        max_rel_err: err,
        checked: k,
    }
}

fn lstm_check(seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x157A);
    let x_dim = rng.gen_range(2..4usize);
    let hidden = rng.gen_range(2..5usize);
    let steps = 4usize;
    let wshape = [4 * hidden, x_dim + hidden];
    let mut weight = rand_vec(&mut rng, wshape.iter().product(), 0.8);
    let mut bias = rand_vec(&mut rng, 4 * hidden, 0.5);
    let mut xs: Vec<Vec<f64>> = (0..steps).map(|_| rand_vec(&mut rng, x_dim, 1.0)).collect();
    let proj_h = rand_vec(&mut rng, hidden, 1.0);
    let proj_c = rand_vec(&mut rng, hidden, 1.0);

    let run = |wv: &[f64], bv: &[f64], xvs: &[Vec<f64>]| -> f64 {
        let wt = Tensor::from_vec(&wshape, wv.to_vec());
        let mut state = LstmState::zeros(hidden);
        for x in xvs {
            state = lstm_step(x, &state, &wt, bv).0;
        }
        weighted_sum(&state.h, &proj_h) + weighted_sum(&state.c, &proj_c)
    };

    // Analytic BPTT over the 4 steps.
    let wt = Tensor::from_vec(&wshape, weight.clone());
    let mut state = LstmState::zeros(hidden);
    let mut caches = Vec::with_capacity(steps);
    for x in &xs {
        let (next, cache) = lstm_step(x, &state, &wt, &bias);
        caches.push(cache);
        state = next;
    }
    let mut grad_state = LstmState {
        h: proj_h.clone(),
        c: proj_c.clone(),
    };
    let mut gw_total = Tensor::zeros(&wshape);
    let mut gb_total = vec![0.0; 4 * hidden];
    let mut gx_all: Vec<Vec<f64>> = vec![Vec::new(); steps];
    for t in (0..steps).rev() {
        let (gx, prev, gw, gb) =
            lstm_step_backward(&caches[t], &wt, &grad_state.h, &grad_state.c);
        gx_all[t] = gx;
        gw_total.add_assign(&gw);
        for (a, b) in gb_total.iter_mut().zip(gb) {
            *a += b;
        }
        grad_state = prev;
    }

    let (cw, cb, cxs) = (weight.clone(), bias.clone(), xs.clone());
    let mut worst = fd_check_slice(&mut weight, gw_total.data(), |v| run(v, &cb, &cxs));
    worst = worst.max(fd_check_slice(&mut bias, &gb_total, |v| run(&cw, v, &cxs)));
    for t in 0..steps {
        let analytic = gx_all[t].clone();
        let others = xs.clone();
        let mut xt = xs[t].clone();
        let err = fd_check_slice(&mut xt, &analytic, |v| {
            let mut alt = others.clone();
            alt[t] = v.to_vec();
            run(&cw, &cb, &alt)
        });
        worst = worst.max(err);
        xs[t] = xt;
    }
    CheckReport {
        name: "lstm_4step".into(),
        seed,
        max_rel_err: worst,
        checked: weight.len() + bias.len() + steps * x_dim,
    }
}

/// Runs every op-level check for each seed.
pub fn op_suite(seeds: &[u64]) -> Vec<CheckReport> {
    let mut out = Vec::new();
    for &seed in seeds {
        out.push(conv3d_check(seed));
        out.push(maxpool3d_check(seed));
        out.push(dense_relu_check(seed));
        out.push(softmax_xent_check(seed));
        out.push(lstm_check(seed));
    }
    out
}
