use super::{FeatureMap, Mode};
use crate::error::{shape_err, Result};
use crate::real::Real;

/// Per-channel batch normalization state.
///
/// Statistics are taken over the batch and time axes. The variance is the
/// biased (population) estimate, both for normalization and for the running
/// average used at inference.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: T,
    /// Weight kept by the running statistics on each update.
    pub momentum: T,
}

impl<T: Real> BatchNormParams<T> {
    /// `gamma = 1`, `beta = 0`, running mean 0 and running variance 1.
    pub fn new(channels: usize, epsilon: T, momentum: T) -> Self {
        BatchNormParams {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon,
            momentum,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &FeatureMap<T>) -> Result<()> {
        if x.channels() != self.gamma.len() {
            return Err(shape_err!(
                "batch norm has {} channels, input has {}",
                self.gamma.len(),
                x.channels()
            ));
        }
        Ok(())
    }
}

/// Values retained by a training-mode forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub normalized: FeatureMap<T>,
    pub inv_std: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormGrads<T> {
    pub input: FeatureMap<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub fn batchnorm_forward<T: Real>(
    x: &FeatureMap<T>,
    p: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(FeatureMap<T>, Option<BatchNormCache<T>>)> {
    match mode {
        Mode::Train => batchnorm_forward_train(x, p).map(|(out, cache)| (out, Some(cache))),
        Mode::Infer => batchnorm_forward_infer(x, p).map(|out| (out, None)),
    }
}

/// Normalizes with mini-batch statistics and folds them into the running
/// averages: `running = momentum · running + (1 − momentum) · batch`.
pub fn batchnorm_forward_train<T: Real>(
    x: &FeatureMap<T>,
    p: &mut BatchNormParams<T>,
) -> Result<(FeatureMap<T>, BatchNormCache<T>)> {
    p.check(x)?;
    let (batch, channels, len) = x.shape();
    let count = T::lit((batch * len) as f64);
    let mut normalized = FeatureMap::zeros(batch, channels, len);
    let mut out = FeatureMap::zeros(batch, channels, len);
    let mut inv_std = vec![T::zero(); channels];

    #[allow(clippy::needless_range_loop)]
    for c in 0..channels {
        let mut sum = T::zero();
        for b in 0..batch {
            sum += x.row(b, c).iter().copied().sum::<T>();
        }
        let mean = sum / count;
        let mut sq = T::zero();
        for b in 0..batch {
            for &v in x.row(b, c) {
                let d = v - mean;
                sq += d * d;
            }
        }
        let var = sq / count;
        let istd = T::one() / (var + p.epsilon).sqrt();
        inv_std[c] = istd;
        let (g, be) = (p.gamma[c], p.beta[c]);
        for b in 0..batch {
            let src = x.row(b, c);
            let nrow = normalized.row_mut(b, c);
            for (n, &v) in nrow.iter_mut().zip(src) {
                *n = (v - mean) * istd;
            }
            let orow = out.row_mut(b, c);
            for (o, &n) in orow.iter_mut().zip(normalized.row(b, c)) {
                *o = g * n + be;
            }
        }
        let keep = p.momentum;
        p.running_mean[c] = keep * p.running_mean[c] + (T::one() - keep) * mean;
        p.running_var[c] = keep * p.running_var[c] + (T::one() - keep) * var;
    }
    Ok((out, BatchNormCache { normalized, inv_std }))
}

pub fn batchnorm_forward_infer<T: Real>(
    x: &FeatureMap<T>,
    p: &BatchNormParams<T>,
) -> Result<FeatureMap<T>> {
    p.check(x)?;
    let (batch, channels, len) = x.shape();
    let mut out = FeatureMap::zeros(batch, channels, len);
    for c in 0..channels {
        let scale = p.gamma[c] / (p.running_var[c] + p.epsilon).sqrt();
        let shift = p.beta[c] - scale * p.running_mean[c];
        for b in 0..batch {
            for (o, &v) in out.row_mut(b, c).iter_mut().zip(x.row(b, c)) {
                *o = scale * v + shift;
            }
        }
    }
    Ok(out)
}

/// Exact gradient of the training-mode transform, including the dependence
/// of the batch mean and variance on every input:
/// `dx = γ·istd · (dy − mean(dy) − x̂ · mean(dy·x̂))`.
pub fn batchnorm_backward<T: Real>(
    cache: &BatchNormCache<T>,
    gamma: &[T],
    grad_out: &FeatureMap<T>,
) -> Result<BatchNormGrads<T>> {
    let (batch, channels, len) = cache.normalized.shape();
    if grad_out.shape() != cache.normalized.shape() || gamma.len() != channels {
        return Err(shape_err!(
            "batch norm backward: gradient {:?} does not match cached {:?}",
            grad_out.shape(),
            cache.normalized.shape()
        ));
    }
    let count = T::lit((batch * len) as f64);
    let mut grad_x = FeatureMap::zeros(batch, channels, len);
    let mut grad_gamma = vec![T::zero(); channels];
    let mut grad_beta = vec![T::zero(); channels];

    for c in 0..channels {
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for b in 0..batch {
            for (&g, &n) in grad_out.row(b, c).iter().zip(cache.normalized.row(b, c)) {
                sum_g += g;
                sum_gx += g * n;
            }
        }
        grad_beta[c] = sum_g;
        grad_gamma[c] = sum_gx;
        let mean_g = sum_g / count;
        let mean_gx = sum_gx / count;
        let scale = gamma[c] * cache.inv_std[c];
        for b in 0..batch {
            let g = grad_out.row(b, c);
            let n = cache.normalized.row(b, c);
            for ((d, &gv), &nv) in grad_x.row_mut(b, c).iter_mut().zip(g).zip(n) {
                *d = scale * (gv - mean_g - nv * mean_gx);
            }
        }
    }
    Ok(BatchNormGrads {
        input: grad_x,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gamma: f64, beta: f64, eps: f64) -> BatchNormParams<f64> {
        let mut p = BatchNormParams::new(1, eps, 0.99);
        p.gamma[0] = gamma;
        p.beta[0] = beta;
        p
    }

    fn pair() -> FeatureMap<f64> {
        FeatureMap::new(2, 1, 1, vec![1.0, 3.0]).unwrap()
    }

    #[test]
    fn normalizes_two_point_batch() {
        let mut p = params(1.0, 0.0, 1e-12);
        let (out, _) = batchnorm_forward_train(&pair(), &mut p).unwrap();
        assert!((out.data()[0] + 1.0).abs() < 1e-9);
        assert!((out.data()[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn affine_after_normalization() {
        let mut p = params(2.0, 1.0, 1e-12);
        let (out, _) = batchnorm_forward_train(&pair(), &mut p).unwrap();
        assert!((out.data()[0] + 1.0).abs() < 1e-9);
        assert!((out.data()[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn constant_batch_maps_to_beta() {
        let mut p = params(1.0, 0.0, 1e-5);
        let x = FeatureMap::filled(4, 1, 8, 7.5);
        let (out, _) = batchnorm_forward_train(&x, &mut p).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn running_statistics_follow_the_ema() {
        let mut p = params(1.0, 0.0, 1e-5);
        batchnorm_forward_train(&pair(), &mut p).unwrap();
        assert!((p.running_mean[0] - 0.01 * 2.0).abs() < 1e-12);
        assert!((p.running_var[0] - (0.99 + 0.01 * 1.0)).abs() < 1e-12);
    }

    #[test]
    fn infer_uses_running_statistics() {
        let mut p = params(1.0, 0.5, 0.0);
        p.running_mean[0] = 2.0;
        p.running_var[0] = 4.0;
        let out = batchnorm_forward_infer(&pair(), &p).unwrap();
        assert_eq!(out.data(), &[0.0, 1.0]);
        // infer must not touch the running statistics
        assert_eq!(p.running_mean[0], 2.0);
    }

    #[test]
    fn constant_upstream_gradient_vanishes() {
        let mut p = params(1.0, 0.0, 1e-5);
        let x = FeatureMap::from_fn(3, 1, 5, |b, _, t| (b * 5 + t) as f64 * 0.7 - 2.0);
        let (_, cache) = batchnorm_forward_train(&x, &mut p).unwrap();
        let g = batchnorm_backward(&cache, &p.gamma, &FeatureMap::filled(3, 1, 5, 0.25)).unwrap();
        assert!(g.input.data().iter().all(|v| v.abs() < 1e-12));
        assert!((g.beta[0] - 15.0 * 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_channel_mismatch() {
        let mut p = BatchNormParams::<f64>::new(2, 1e-5, 0.99);
        assert!(batchnorm_forward_train(&pair(), &mut p).is_err());
        assert!(batchnorm_forward_infer(&pair(), &p).is_err());
    }
}
