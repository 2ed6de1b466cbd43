//! Shared oracles for the integration tests and the acceptance suite.
#![allow(dead_code)]

use loadmon::dataio::{ActivationProfile, LoadParams, SignalSeries};
use loadmon::model::{build_model, Model, ModelConfig};
use loadmon::nncore::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

/// Central differences of `f` at `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn random_map(rng: &mut ChaCha8Rng, b: usize, c: usize, n: usize) -> FeatureMap<f64> {
    FeatureMap::from_fn(b, c, n, |_, _, _| rng.random_range(-1.0..1.0))
}

/// Values bounded away from zero, so leaky ReLU kinks are out of reach.
pub fn random_map_off_zero(rng: &mut ChaCha8Rng, b: usize, c: usize, n: usize) -> FeatureMap<f64> {
    FeatureMap::from_fn(b, c, n, |_, _, _| {
        let v: f64 = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

fn dot(a: &FeatureMap<f64>, w: &FeatureMap<f64>) -> f64 {
    a.data().iter().zip(w.data()).map(|(x, y)| x * y).sum()
}

fn with_data(shape: (usize, usize, usize), v: &[f64]) -> FeatureMap<f64> {
    FeatureMap::new(shape.0, shape.1, shape.2, v.to_vec()).unwrap()
}

/// Worst relative error of one op's backward pass on `instances` seeded cases.
pub struct OpCheck {
    pub name: &'static str,
    pub instances: usize,
    pub worst: f64,
}

pub fn check_conv(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, ci, co) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
    let k = [1, 3, 5][rng.random_range(0..3)];
    let d = rng.random_range(1..4);
    let n = rng.random_range(4..20);
    let x = random_map(&mut rng, b, ci, n);
    let kernel: Vec<f64> = (0..co * ci * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias: Vec<f64> = (0..co).map(|_| rng.random_range(-1.0..1.0)).collect();
    let p = ConvParams::from_parts(co, ci, k, d, kernel.clone(), bias.clone()).unwrap();
    let w = random_map(&mut rng, b, co, n);
    let g = conv1d_backward(&x, &p, &w).unwrap();
    let fx = numeric_grad(x.data(), |v| {
        dot(&conv1d_forward(&with_data(x.shape(), v), &p).unwrap(), &w)
    });
    let fk = numeric_grad(&kernel, |v| {
        let q = ConvParams::from_parts(co, ci, k, d, v.to_vec(), bias.clone()).unwrap();
        dot(&conv1d_forward(&x, &q).unwrap(), &w)
    });
    let fb = numeric_grad(&bias, |v| {
        let q = ConvParams::from_parts(co, ci, k, d, kernel.clone(), v.to_vec()).unwrap();
        dot(&conv1d_forward(&x, &q).unwrap(), &w)
    });
    rel_err(g.input.data(), &fx)
        .max(rel_err(&g.kernel, &fk))
        .max(rel_err(&g.bias, &fb))
}

pub fn check_batchnorm(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, c, n) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(2..12));
    let x = random_map(&mut rng, b, c, n);
    let mut p = BatchNormParams::new(c, 1e-5, 0.9);
    p.gamma = (0..c).map(|_| rng.random_range(0.5..1.5)).collect();
    p.beta = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
    let w = random_map(&mut rng, b, c, n);
    let (_, cache) = batchnorm_forward_train(&x, &mut p.clone()).unwrap();
    let g = batchnorm_backward(&cache, &p.gamma, &w).unwrap();
    let eval = |x: &FeatureMap<f64>, p: &BatchNormParams<f64>| {
        dot(&batchnorm_forward_train(x, &mut p.clone()).unwrap().0, &w)
    };
    let fx = numeric_grad(x.data(), |v| eval(&with_data(x.shape(), v), &p));
    let fg = numeric_grad(&p.gamma, |v| {
        let mut q = p.clone();
        q.gamma = v.to_vec();
        eval(&x, &q)
    });
    let fb = numeric_grad(&p.beta, |v| {
        let mut q = p.clone();
        q.beta = v.to_vec();
        eval(&x, &q)
    });
    rel_err(g.input.data(), &fx)
        .max(rel_err(&g.gamma, &fg))
        .max(rel_err(&g.beta, &fb))
}

pub fn check_leaky_relu(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = rng.random_range(0.0..0.3);
    let x = random_map_off_zero(&mut rng, 2, 3, 9);
    let w = random_map(&mut rng, 2, 3, 9);
    let g = leaky_relu_backward(&x, alpha, &w).unwrap();
    let f = numeric_grad(x.data(), |v| dot(&leaky_relu(&with_data(x.shape(), v), alpha).unwrap(), &w));
    rel_err(g.data(), &f)
}

pub fn check_sigmoid(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = FeatureMap::from_fn(2, 2, 10, |_, _, _| rng.random_range(-6.0..6.0));
    let w = random_map(&mut rng, 2, 2, 10);
    let g = logistic_sigmoid_backward(&logistic_sigmoid(&x), &w).unwrap();
    let f = numeric_grad(x.data(), |v| dot(&logistic_sigmoid(&with_data(x.shape(), v)), &w));
    rel_err(g.data(), &f)
}

pub fn check_pool(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = rng.random_range(2..5);
    let n = factor * rng.random_range(1..6);
    let x = random_map(&mut rng, 2, 2, n);
    let (out, idx) = max_pool(&x, factor).unwrap();
    let w = random_map(&mut rng, 2, 2, out.len());
    let g = max_pool_backward(&w, &idx).unwrap();
    let f = numeric_grad(x.data(), |v| dot(&max_pool(&with_data(x.shape(), v), factor).unwrap().0, &w));
    rel_err(g.data(), &f)
}

pub fn check_unpool(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = rng.random_range(1..5);
    let n = rng.random_range(1..8);
    let x = random_map(&mut rng, 2, 2, n);
    let w = random_map(&mut rng, 2, 2, x.len() * factor);
    let g = unpool_forward_fill_backward(&w, factor).unwrap();
    let f = numeric_grad(x.data(), |v| {
        dot(&unpool_forward_fill(&with_data(x.shape(), v), factor).unwrap(), &w)
    });
    rel_err(g.data(), &f)
}

pub fn check_concat(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ca, cb) = (rng.random_range(1..4), rng.random_range(1..4));
    let a = random_map(&mut rng, 2, ca, 7);
    let b = random_map(&mut rng, 2, cb, 7);
    let w = random_map(&mut rng, 2, ca + cb, 7);
    let (ga, gb) = concat_channels_backward(&w, ca).unwrap();
    let fa = numeric_grad(a.data(), |v| dot(&concat_channels(&with_data(a.shape(), v), &b).unwrap(), &w));
    let fb = numeric_grad(b.data(), |v| dot(&concat_channels(&a, &with_data(b.shape(), v)).unwrap(), &w));
    rel_err(ga.data(), &fa).max(rel_err(gb.data(), &fb))
}

pub fn check_add(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_map(&mut rng, 2, 3, 6);
    let b = random_map(&mut rng, 2, 3, 6);
    let w = random_map(&mut rng, 2, 3, 6);
    let (ga, gb) = add_elementwise_backward(&w);
    let fa = numeric_grad(a.data(), |v| dot(&add_elementwise(&with_data(a.shape(), v), &b).unwrap(), &w));
    let fb = numeric_grad(b.data(), |v| dot(&add_elementwise(&a, &with_data(b.shape(), v)).unwrap(), &w));
    rel_err(ga.data(), &fa).max(rel_err(gb.data(), &fb))
}

/// Noise is additive with a fixed draw, so its Jacobian is the identity.
pub fn check_noise(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_map(&mut rng, 2, 2, 8);
    let w = random_map(&mut rng, 2, 2, 8);
    let f = numeric_grad(x.data(), |v| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        dot(&gaussian_noise(&with_data(x.shape(), v), 0.3, Mode::Train, &mut r).unwrap(), &w)
    });
    rel_err(w.data(), &f)
}

type Check = (&'static str, fn(u64) -> f64);

pub fn op_checks(instances: u64) -> Vec<OpCheck> {
    let ops: [Check; 9] = [
        ("conv1d", check_conv),
        ("batchnorm", check_batchnorm),
        ("leaky_relu", check_leaky_relu),
        ("logistic_sigmoid", check_sigmoid),
        ("max_pool", check_pool),
        ("unpool_forward_fill", check_unpool),
        ("concat_channels", check_concat),
        ("add_elementwise", check_add),
        ("gaussian_noise", check_noise),
    ];
    ops.iter()
        .map(|&(name, f)| OpCheck {
            name,
            instances: instances as usize,
            worst: (0..instances).map(|s| f(1000 + s)).fold(0.0, f64::max),
        })
        .collect()
}

/// Relative error of the whole-model parameter and input gradients for the
/// tiny preset; noise is fixed by reseeding before every forward pass.
pub fn check_whole_model(seed: u64) -> f64 {
    let cfg = ModelConfig::preset("tiny").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model: Model<f64> = build_model(&cfg, seed).unwrap();
    // move batch-norm scale and shift off their defaults
    for l in &mut model.layers {
        if let Some(bn) = &mut l.bn {
            bn.gamma.iter_mut().for_each(|g| *g = rng.random_range(0.5..1.5));
            bn.beta.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
        }
    }
    let x = FeatureMap::from_fn(2, 1, cfg.window_len, |_, _, _| rng.random_range(-2.0..2.0));
    let w = random_map(&mut rng, 2, 1, cfg.window_len);
    let noise_seed = seed + 77;
    let loss = |m: &mut Model<f64>, x: &FeatureMap<f64>| {
        let mut r = ChaCha8Rng::seed_from_u64(noise_seed);
        dot(&m.forward_train(x, &mut r).unwrap(), &w)
    };
    loss(&mut model, &x);
    let grads = model.backward(&w).unwrap();

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let count = model.params().len();
    for t in 0..count {
        let base = model.params()[t].to_vec();
        let fd = numeric_grad(&base, |v| {
            model.params_mut()[t].copy_from_slice(v);
            loss(&mut model, &x)
        });
        model.params_mut()[t].copy_from_slice(&base);
        analytic.extend_from_slice(&grads.params[t]);
        numeric.extend(fd);
    }
    let fx = numeric_grad(x.data(), |v| loss(&mut model, &with_data(x.shape(), v)));
    rel_err(&analytic, &numeric).max(rel_err(grads.input.data(), &fx))
}

/// Literal reading of the threshold-and-hold rule: look at every window
/// sample by sample, with nothing shared between positions.
pub fn brute_force_profile(x: &[f64], p: &LoadParams, period: f64) -> Vec<bool> {
    let n_on = ((p.n_on / period).round() as usize).max(1);
    let n_off = ((p.n_off / period).round() as usize).max(1);
    let mut out = Vec::with_capacity(x.len());
    let mut state = false;
    for n in 0..x.len() {
        let mut on_ok = n + n_on <= x.len();
        let mut k = n;
        while on_ok && k < n + n_on {
            if x[k] < p.p_on {
                on_ok = false;
            }
            k += 1;
        }
        let mut off_ok = n + n_off <= x.len();
        let mut k = n;
        while off_ok && k < n + n_off {
            if x[k] > p.p_off {
                off_ok = false;
            }
            k += 1;
        }
        if on_ok {
            state = true;
        } else if off_ok {
            state = false;
        }
        out.push(state);
    }
    out
}

/// Piecewise-constant power with levels at, below and above the thresholds
/// and run lengths on the scale of the hold durations.
pub fn random_signal(rng: &mut ChaCha8Rng, p: &LoadParams) -> SignalSeries {
    let hold = p.n_on.max(p.n_off) as usize;
    let len = 2 * hold + rng.random_range(10..400);
    let mut v = Vec::with_capacity(len);
    while v.len() < len {
        let run = rng.random_range(1..=(hold * 3 / 2).max(2));
        let level = match rng.random_range(0..6) {
            0 => 0.0,
            1 => p.p_off * rng.random_range(0.0..1.0),
            2 => p.p_off,
            3 => p.p_on,
            4 => p.p_on * rng.random_range(1.0..3.0),
            _ => rng.random_range(0.0..2.0 * p.p_on),
        };
        v.extend(std::iter::repeat_n(level, run));
    }
    v.truncate(len);
    SignalSeries::new(v, 1.0, 0.0).unwrap()
}

pub fn profile_states(p: &ActivationProfile) -> &[bool] {
    &p.states
}
