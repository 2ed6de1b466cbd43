use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Activation, LayerPlan, ModelConfig};
use crate::dataio::{ActivationProfile, SignalSeries, Standardizer};
use crate::error::{shape_err, Error, Result};
use crate::nncore::{
    batchnorm_backward, batchnorm_forward_infer, batchnorm_forward_train, concat_many, conv1d_backward,
    conv1d_forward, gaussian_noise, leaky_relu, leaky_relu_backward, logistic_sigmoid, logistic_sigmoid_backward,
    max_pool, max_pool_backward, split_channels, unpool_forward_fill, unpool_forward_fill_backward, BatchNormCache,
    BatchNormParams, ConvParams, FeatureMap, Mode, PoolIndices,
};
use crate::real::Real;

/// Uniform samples on `[−L, L]` with `L = √(6 / (fan_in + fan_out))`.
pub fn init_glorot<T: Real>(count: usize, fan_in: usize, fan_out: usize, seed: u64) -> Vec<T> {
    let limit = glorot_limit(fan_in, fan_out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| T::lit(rng.random_range(-limit..=limit))).collect()
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub conv: ConvParams<T>,
    pub bn: Option<BatchNormParams<T>>,
}

/// Intermediates kept by a training forward pass.
#[derive(Clone, Debug)]
struct LayerCache<T> {
    conv_in: FeatureMap<T>,
    bn: Option<BatchNormCache<T>>,
    /// Pre-activation for LReLU, activation output for LogSg.
    act: FeatureMap<T>,
    pool: Option<PoolIndices>,
}

/// Parameter gradients in [`Model::param_names`] order, plus the gradient
/// with respect to the network input.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub params: Vec<Vec<T>>,
    pub input: FeatureMap<T>,
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    plans: Vec<LayerPlan>,
    pub layers: Vec<Layer<T>>,
    /// Input standardization, fitted on the training fold.
    pub scaler: Standardizer,
    cache: Option<Vec<LayerCache<T>>>,
}

// caches are transient and never part of model identity
impl<T: PartialEq> PartialEq for Model<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.layers == other.layers && self.scaler == other.scaler
    }
}

/// Allocates every layer and draws its kernel from [`init_glorot`]; biases
/// and β start at 0, γ at 1. Each layer's kernel uses its own sub-seed
/// drawn in layer order from `seed`.
pub fn build_model<T: Real>(config: &ModelConfig, seed: u64) -> Result<Model<T>> {
    let plans = config.plan()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(plans.len());
    for p in &plans {
        let s = &p.spec;
        let k = s.kernel_size;
        let kernel = init_glorot(s.out_channels * p.in_channels * k, p.in_channels * k, s.out_channels * k, master.random());
        let conv = ConvParams::from_parts(s.out_channels, p.in_channels, k, s.dilation, kernel, vec![T::zero(); s.out_channels])?;
        let bn = s
            .has_bn
            .then(|| BatchNormParams::new(s.out_channels, T::lit(config.bn_epsilon), T::lit(config.bn_momentum)));
        layers.push(Layer { conv, bn });
    }
    Ok(Model {
        config: config.clone(),
        plans,
        layers,
        scaler: Standardizer { mean: 0.0, std: 1.0 },
        cache: None,
    })
}

/// The decision rule: on unless the off-posterior is strictly larger.
pub fn decide(posterior: f64) -> bool {
    posterior >= 0.5
}

impl<T: Real> Model<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn plans(&self) -> &[LayerPlan] {
        &self.plans
    }

    pub fn window_len(&self) -> usize {
        self.config.window_len
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            names.push(format!("layer{i}.kernel"));
            names.push(format!("layer{i}.bias"));
            if l.bn.is_some() {
                names.push(format!("layer{i}.gamma"));
                names.push(format!("layer{i}.beta"));
            }
        }
        names
    }

    /// Trainable tensors: per layer kernel, bias, then γ and β if present.
    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for l in &self.layers {
            out.push(&l.conv.kernel);
            out.push(&l.conv.bias);
            if let Some(bn) = &l.bn {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.conv.kernel);
            out.push(&mut l.conv.bias);
            if let Some(bn) = &mut l.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    /// Every persisted tensor, trainable or not, by name.
    pub fn state_tensors_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.kernel"), &mut l.conv.kernel));
            out.push((format!("layer{i}.bias"), &mut l.conv.bias));
            if let Some(bn) = &mut l.bn {
                out.push((format!("layer{i}.gamma"), &mut bn.gamma));
                out.push((format!("layer{i}.beta"), &mut bn.beta));
                out.push((format!("layer{i}.running_mean"), &mut bn.running_mean));
                out.push((format!("layer{i}.running_var"), &mut bn.running_var));
            }
        }
        out
    }

    pub fn state_tensors(&self) -> Vec<(String, &[T])> {
        let mut out: Vec<(String, &[T])> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.kernel"), &l.conv.kernel));
            out.push((format!("layer{i}.bias"), &l.conv.bias));
            if let Some(bn) = &l.bn {
                out.push((format!("layer{i}.gamma"), &bn.gamma));
                out.push((format!("layer{i}.beta"), &bn.beta));
                out.push((format!("layer{i}.running_mean"), &bn.running_mean));
                out.push((format!("layer{i}.running_var"), &bn.running_var));
            }
        }
        out
    }

    fn check_input(&self, x: &FeatureMap<T>) -> Result<()> {
        if x.channels() != 1 || x.len() != self.config.window_len {
            return Err(shape_err!(
                "model expects input of shape (B, 1, {}), got {:?}",
                self.config.window_len,
                x.shape()
            ));
        }
        Ok(())
    }

    /// Runs the graph. In training mode also returns the caches and the
    /// batch-norm parameters with updated running statistics.
    #[allow(clippy::type_complexity)]
    fn pass<R: Rng + ?Sized>(
        &self,
        x: &FeatureMap<T>,
        mode: Mode,
        mut rng: Option<&mut R>,
    ) -> Result<(FeatureMap<T>, Vec<LayerCache<T>>, Vec<Option<BatchNormParams<T>>>)> {
        self.check_input(x)?;
        let train = mode == Mode::Train;
        let alpha = T::lit(self.config.leaky_alpha);
        let n = self.plans.len();
        let mut outs: Vec<FeatureMap<T>> = Vec::with_capacity(n);
        let mut caches = Vec::with_capacity(if train { n } else { 0 });
        let mut bn_updates = Vec::with_capacity(n);
        let mut next = x.clone();
        for (plan, layer) in self.plans.iter().zip(&self.layers) {
            let spec = &plan.spec;
            let main = if spec.unpool_before > 1 {
                unpool_forward_fill(&next, spec.unpool_before)?
            } else {
                next
            };
            let conv_in = if plan.skips.is_empty() {
                main
            } else {
                let mut parts = vec![&main];
                parts.extend(plan.skips.iter().map(|&s| &outs[s]));
                concat_many(&parts)?
            };
            let z = conv1d_forward(&conv_in, &layer.conv)?;
            let (z, bn_cache) = match &layer.bn {
                Some(p) if train => {
                    let mut p = p.clone();
                    let (out, cache) = batchnorm_forward_train(&z, &mut p)?;
                    bn_updates.push(Some(p));
                    (out, Some(cache))
                }
                Some(p) => (batchnorm_forward_infer(&z, p)?, None),
                None => {
                    if train {
                        bn_updates.push(None);
                    }
                    (z, None)
                }
            };
            let (mut o, act) = match spec.activation {
                Activation::LReLU => {
                    let a = leaky_relu(&z, alpha)?;
                    (a, z)
                }
                Activation::LogSg => {
                    let a = logistic_sigmoid(&z);
                    (a.clone(), a)
                }
            };
            if spec.has_gn && train {
                if let Some(r) = rng.as_deref_mut() {
                    o = gaussian_noise(&o, self.config.noise_sigma, mode, r)?;
                }
            }
            for &r in &plan.residuals {
                o.accumulate(&outs[r])?;
            }
            let (pooled, pool) = if spec.pool_after > 1 {
                let (p, idx) = max_pool(&o, spec.pool_after)?;
                (p, Some(idx))
            } else {
                (o.clone(), None)
            };
            if train {
                caches.push(LayerCache {
                    conv_in,
                    bn: bn_cache,
                    act,
                    pool,
                });
            }
            outs.push(o);
            next = pooled;
        }
        Ok((next, caches, bn_updates))
    }

    /// Inference-mode forward pass: running batch-norm statistics, no noise.
    pub fn infer(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        self.pass::<ChaCha8Rng>(x, Mode::Infer, None).map(|(out, _, _)| out)
    }

    /// Training-mode forward pass. Draws Gaussian noise from `rng`, updates
    /// the running batch-norm statistics and keeps the intermediates needed
    /// by [`Model::backward`].
    pub fn forward_train<R: Rng + ?Sized>(&mut self, x: &FeatureMap<T>, rng: &mut R) -> Result<FeatureMap<T>> {
        let (out, caches, updates) = self.pass(x, Mode::Train, Some(rng))?;
        for (layer, upd) in self.layers.iter_mut().zip(updates) {
            if let Some(p) = upd {
                layer.bn = Some(p);
            }
        }
        self.cache = Some(caches);
        Ok(out)
    }

    pub fn forward<R: Rng + ?Sized>(&mut self, x: &FeatureMap<T>, mode: Mode, rng: &mut R) -> Result<FeatureMap<T>> {
        match mode {
            Mode::Train => self.forward_train(x, rng),
            Mode::Infer => self.infer(x),
        }
    }

    pub fn has_forward_context(&self) -> bool {
        self.cache.is_some()
    }

    /// Gradients of a scalar loss given its gradient with respect to the
    /// posterior. Consumes the intermediates of the last training forward
    /// pass; gradients from every consumer of a layer output are summed.
    pub fn backward(&mut self, grad_posterior: &FeatureMap<T>) -> Result<Gradients<T>> {
        let caches = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a training forward pass".into()))?;
        let n = self.plans.len();
        let batch = caches[0].conv_in.batch();
        if grad_posterior.shape() != (batch, 1, self.config.window_len) {
            return Err(shape_err!(
                "posterior gradient has shape {:?}, expected {:?}",
                grad_posterior.shape(),
                (batch, 1, self.config.window_len)
            ));
        }
        let alpha = T::lit(self.config.leaky_alpha);
        let mut grad_out: Vec<Option<FeatureMap<T>>> = vec![None; n];
        let mut per_layer: Vec<Vec<Vec<T>>> = vec![Vec::new(); n];
        let mut g_next = grad_posterior.clone();
        for i in (0..n).rev() {
            let plan = &self.plans[i];
            let cache = &caches[i];
            let layer = &self.layers[i];
            let mut g = match &cache.pool {
                Some(idx) => max_pool_backward(&g_next, idx)?,
                None => g_next,
            };
            if let Some(extra) = grad_out[i].take() {
                g.accumulate(&extra)?;
            }
            for &r in &plan.residuals {
                add_into(&mut grad_out[r], &g)?;
            }
            // noise is additive, so its gradient passes through unchanged
            let g = match plan.spec.activation {
                Activation::LReLU => leaky_relu_backward(&cache.act, alpha, &g)?,
                Activation::LogSg => logistic_sigmoid_backward(&cache.act, &g)?,
            };
            let g = match (&cache.bn, &layer.bn) {
                (Some(c), Some(p)) => {
                    let bg = batchnorm_backward(c, &p.gamma, &g)?;
                    per_layer[i].push(bg.gamma);
                    per_layer[i].push(bg.beta);
                    bg.input
                }
                _ => g,
            };
            let cg = conv1d_backward(&cache.conv_in, &layer.conv, &g)?;
            per_layer[i].insert(0, cg.bias);
            per_layer[i].insert(0, cg.kernel);
            let g_main = if plan.skips.is_empty() {
                cg.input
            } else {
                let mut widths = vec![plan.main_channels];
                widths.extend(plan.skips.iter().map(|&s| self.plans[s].spec.out_channels));
                let mut parts = split_channels(&cg.input, &widths)?.into_iter();
                let main = parts.next().expect("main part");
                for (&s, part) in plan.skips.iter().zip(parts) {
                    add_into(&mut grad_out[s], &part)?;
                }
                main
            };
            g_next = if plan.spec.unpool_before > 1 {
                unpool_forward_fill_backward(&g_main, plan.spec.unpool_before)?
            } else {
                g_main
            };
        }
        Ok(Gradients {
            params: per_layer.into_iter().flatten().collect(),
            input: g_next,
        })
    }

    /// Posterior for every sample of a raw power series.
    ///
    /// The series is standardized, cut into consecutive windows, and a final
    /// partial window is zero-padded (in the standardized domain) for
    /// inference; the output is truncated back to the input length.
    pub fn posterior_series(&self, x: &SignalSeries, batch: usize) -> Result<Vec<f64>> {
        let k = self.config.window_len;
        let n = x.len();
        if n == 0 {
            return Err(Error::Data("cannot predict on an empty series".into()));
        }
        let windows = n.div_ceil(k);
        let mut z: Vec<T> = x.samples.iter().map(|&v| T::lit(self.scaler.apply(v))).collect();
        z.resize(windows * k, T::zero());
        let mut out = Vec::with_capacity(windows * k);
        for chunk in z.chunks(batch.max(1) * k) {
            let fm = FeatureMap::new(chunk.len() / k, 1, k, chunk.to_vec())?;
            out.extend(self.infer(&fm)?.data().iter().map(|v| v.as_f64()));
        }
        out.truncate(n);
        Ok(out)
    }

    /// Thresholded activation profile of a raw power series.
    pub fn predict_profile(&self, x: &SignalSeries, load: &str) -> Result<ActivationProfile> {
        let post = self.posterior_series(x, 16)?;
        Ok(ActivationProfile::new(
            post.into_iter().map(decide).collect(),
            x.period,
            x.start,
            load,
        ))
    }
}

fn add_into<T: Real>(slot: &mut Option<FeatureMap<T>>, g: &FeatureMap<T>) -> Result<()> {
    match slot {
        Some(acc) => acc.accumulate(g),
        None => {
            *slot = Some(g.clone());
            Ok(())
        }
    }
}
