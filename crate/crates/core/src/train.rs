//! Binary cross-entropy, the NAdam optimizer and the training loop.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::SegmentSet;
use crate::error::{config_err, shape_err, Error, Result};
use crate::kv::KvDoc;
use crate::model::Model;
use crate::nncore::FeatureMap;
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct BceLoss<T> {
    /// `−Σ [ω ln g + (1−ω) ln(1−g)]` over every element of the batch.
    pub sum: f64,
    /// `sum` divided by the element count, for logging.
    pub mean: f64,
    /// Derivative of `sum` with respect to each posterior.
    pub grad: FeatureMap<T>,
}

/// Binary cross-entropy of posteriors `g` against 0/1 targets `ω`.
///
/// Posteriors are clamped to `[ε, 1−ε]` before taking logs, and the gradient
/// `−ω/g + (1−ω)/(1−g)` is evaluated at the clamped value.
pub fn bce_loss<T: Real>(posterior: &FeatureMap<T>, target: &FeatureMap<T>, eps: f64) -> Result<BceLoss<T>> {
    if posterior.shape() != target.shape() {
        return Err(shape_err!(
            "posterior {:?} and target {:?} differ in shape",
            posterior.shape(),
            target.shape()
        ));
    }
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(config_err!("log clamp must lie in (0, 1e-3], got {eps}"));
    }
    let mut grad = FeatureMap::zeros(posterior.batch(), posterior.channels(), posterior.len());
    let mut sum = 0.0f64;
    for ((g_out, &p), &w) in grad.data_mut().iter_mut().zip(posterior.data()).zip(target.data()) {
        let g = p.as_f64().clamp(eps, 1.0 - eps);
        let w = w.as_f64();
        sum -= w * g.ln() + (1.0 - w) * (1.0 - g).ln();
        *g_out = T::lit(-w / g + (1.0 - w) / (1.0 - g));
    }
    let count = posterior.data().len() as f64;
    Ok(BceLoss {
        sum,
        mean: sum / count,
        grad,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NadamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Momentum schedule decay ψ in `μ_t = β₁(1 − ½·0.96^{tψ})`.
    pub momentum_decay: f64,
    /// Without the Nesterov correction the update is plain Adam.
    pub nesterov: bool,
}

impl Default for NadamConfig {
    fn default() -> Self {
        NadamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            momentum_decay: 0.004,
            nesterov: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub hyper: NadamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    /// Running product `Π μ_i` of the momentum schedule.
    pub mu_product: f64,
}

impl<T: Real> OptimState<T> {
    pub fn new(hyper: NadamConfig, shapes: &[usize]) -> Self {
        OptimState {
            hyper,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
            mu_product: 1.0,
        }
    }

    pub fn for_model(hyper: NadamConfig, model: &Model<T>) -> Self {
        let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        Self::new(hyper, &shapes)
    }

    fn mu(&self, t: u64) -> f64 {
        let h = &self.hyper;
        h.beta1 * (1.0 - 0.5 * 0.96f64.powf(t as f64 * h.momentum_decay))
    }

    /// Moments as named tensors (`optim.m.N`, `optim.v.N`) for checkpoints.
    pub fn to_tensors(&self) -> Vec<(String, Vec<T>)> {
        let m = self.m.iter().enumerate().map(|(i, t)| (format!("optim.m.{i}"), t.clone()));
        let v = self.v.iter().enumerate().map(|(i, t)| (format!("optim.v.{i}"), t.clone()));
        m.chain(v).collect()
    }
}

/// One NAdam step on every parameter tensor.
///
/// With `g` the gradient, `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
/// `v̂ = v/(1−β₂^t)`, and the Nesterov look-ahead
/// `m̂ = μ_{t+1}·m/(1−Π_{i≤t+1}μ_i) + (1−μ_t)·g/(1−Π_{i≤t}μ_i)`;
/// the parameter moves by `−η·m̂/(√v̂ + ε)`.
///
/// A non-finite gradient aborts the step before anything is modified.
pub fn apply_update<T: Real>(params: Vec<&mut [T]>, grads: &[Vec<T>], s: &mut OptimState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != s.m.len() {
        return Err(shape_err!(
            "optimizer holds {} tensors, got {} parameters and {} gradients",
            s.m.len(),
            params.len(),
            grads.len()
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != s.m[i].len() {
            return Err(shape_err!("tensor {i}: parameter, gradient and moment sizes differ"));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient {bad} in tensor {i}")));
        }
    }
    s.t += 1;
    let t = s.t;
    let h = s.hyper.clone();
    let bc2 = 1.0 - h.beta2.powf(t as f64);
    let (c_m, c_g) = if h.nesterov {
        let mu_t = s.mu(t);
        let mu_next = s.mu(t + 1);
        s.mu_product *= mu_t;
        (
            mu_next / (1.0 - s.mu_product * mu_next),
            (1.0 - mu_t) / (1.0 - s.mu_product),
        )
    } else {
        (1.0 / (1.0 - h.beta1.powf(t as f64)), 0.0)
    };
    let (b1, b2) = (T::lit(h.beta1), T::lit(h.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - h.beta1), T::lit(1.0 - h.beta2));
    let (c_m, c_g, lr, eps, bc2) = (T::lit(c_m), T::lit(c_g), T::lit(h.lr), T::lit(h.eps), T::lit(bc2));
    for ((p, g), (m, v)) in params.into_iter().zip(grads).zip(s.m.iter_mut().zip(s.v.iter_mut())) {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + one_b1 * gi;
            v[i] = b2 * v[i] + one_b2 * gi * gi;
            let m_hat = c_m * m[i] + c_g * gi;
            let denom = (v[i] / bc2).sqrt() + eps;
            p[i] -= lr * m_hat / denom;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRunConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub eps_log: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Validate every this many epochs.
    pub val_every: usize,
    pub optimizer: NadamConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            batch_size: 16,
            epochs: 50,
            seed: 0,
            eps_log: 1e-7,
            patience: 5,
            val_every: 1,
            optimizer: NadamConfig::default(),
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.val_every == 0 {
            return Err(config_err!("batch_size and val_every must be at least 1"));
        }
        if !(self.eps_log > 0.0 && self.eps_log <= 1e-3) {
            return Err(config_err!("eps_log must lie in (0, 1e-3]"));
        }
        let o = &self.optimizer;
        if !(o.lr >= 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0) {
            return Err(config_err!("optimizer needs lr >= 0, beta1 and beta2 in [0, 1), eps > 0"));
        }
        Ok(())
    }

    /// Reads the `[train]` section; missing keys keep their defaults.
    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let d = TrainRunConfig::default();
        let s = doc.section_or_empty("train");
        s.check_keys(&[
            "batch_size",
            "epochs",
            "seed",
            "eps_log",
            "patience",
            "val_every",
            "lr",
            "beta1",
            "beta2",
            "eps_opt",
            "momentum_decay",
            "nesterov",
        ])?;
        let cfg = TrainRunConfig {
            batch_size: s.get_or("batch_size", d.batch_size)?,
            epochs: s.get_or("epochs", d.epochs)?,
            seed: s.get_or("seed", d.seed)?,
            eps_log: s.get_or("eps_log", d.eps_log)?,
            patience: s.get_or("patience", d.patience)?,
            val_every: s.get_or("val_every", d.val_every)?,
            optimizer: NadamConfig {
                lr: s.get_or("lr", d.optimizer.lr)?,
                beta1: s.get_or("beta1", d.optimizer.beta1)?,
                beta2: s.get_or("beta2", d.optimizer.beta2)?,
                eps: s.get_or("eps_opt", d.optimizer.eps)?,
                momentum_decay: s.get_or("momentum_decay", d.optimizer.momentum_decay)?,
                nesterov: s.get_or("nesterov", d.optimizer.nesterov)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        let o = &self.optimizer;
        doc.section_mut("train")
            .set("batch_size", self.batch_size)
            .set("epochs", self.epochs)
            .set("seed", self.seed)
            .set("eps_log", self.eps_log)
            .set("patience", self.patience)
            .set("val_every", self.val_every)
            .set("lr", o.lr)
            .set("beta1", o.beta1)
            .set("beta2", o.beta2)
            .set("eps_opt", o.eps)
            .set("momentum_decay", o.momentum_decay)
            .set("nesterov", o.nesterov);
        doc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    /// Mean per-element loss over the epoch's training batches; for epoch 0
    /// the inference-mode loss on the training fold.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    /// `epoch,train_loss,val_loss,wall_s`, with `NA` for skipped validation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,wall_s\n");
        for r in &self.records {
            let val = r.val_loss.map_or_else(|| "NA".to_string(), |v| v.to_string());
            let _ = writeln!(out, "{},{},{},{:.3}", r.epoch, r.train_loss, val, r.wall_s);
        }
        out
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.train_loss).collect()
    }

    pub fn val_losses(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.val_loss).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Lowest validation loss seen (lowest training loss without a
    /// validation fold); the last good model if training aborted.
    pub model: Model<T>,
    pub best_epoch: usize,
    pub history: History,
    pub optim: OptimState<T>,
    /// Why training stopped early on a numeric failure, if it did.
    pub aborted: Option<String>,
}

/// Mean per-element loss of `model` on `set` in inference mode.
pub fn evaluate_loss<T: Real>(model: &Model<T>, set: &SegmentSet, batch: usize, eps: f64) -> Result<f64> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in idx.chunks(batch.max(1)) {
        let (x, y) = set.batch::<T>(chunk)?;
        let l = bce_loss(&model.infer(&x)?, &y, eps)?;
        sum += l.sum;
        count += y.data().len();
    }
    Ok(sum / count as f64)
}

/// Trains with seeded shuffling over segments and early stopping.
///
/// The shuffle and the Gaussian noise draw from separate ChaCha8 streams
/// derived from `cfg.seed`, so a run is fully determined by its inputs.
pub fn train_loop<T: Real>(
    mut model: Model<T>,
    train: &SegmentSet,
    val: Option<&SegmentSet>,
    cfg: &TrainRunConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set has no segments".into()));
    }
    if train.window != model.window_len() || val.is_some_and(|v| v.window != model.window_len()) {
        return Err(shape_err!("segment length differs from the model window {}", model.window_len()));
    }
    let val = val.filter(|v| !v.is_empty());
    let started = Instant::now();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut optim = OptimState::for_model(cfg.optimizer.clone(), &model);
    let mut history = History::default();

    let score = |m: &Model<T>| -> Result<(f64, Option<f64>)> {
        let tl = evaluate_loss(m, train, cfg.batch_size, cfg.eps_log)?;
        let vl = val.map(|v| evaluate_loss(m, v, cfg.batch_size, cfg.eps_log)).transpose()?;
        Ok((tl, vl))
    };
    let (tl0, vl0) = score(&model)?;
    let first = EpochRecord {
        epoch: 0,
        train_loss: tl0,
        val_loss: vl0,
        wall_s: started.elapsed().as_secs_f64(),
    };
    on_epoch(&first);
    history.records.push(first);
    let mut best = (vl0.unwrap_or(tl0), 0usize, model.clone());
    let mut stale = 0usize;
    let mut aborted = None;

    let mut order: Vec<usize> = (0..train.len()).collect();
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = train.batch::<T>(chunk)?;
            let post = model.forward_train(&x, &mut noise_rng)?;
            let loss = bce_loss(&post, &y, cfg.eps_log)?;
            if !loss.sum.is_finite() {
                aborted = Some(format!("non-finite training loss in epoch {epoch}"));
                break 'epochs;
            }
            let grads = model.backward(&loss.grad)?;
            if let Err(e) = apply_update(model.params_mut(), &grads.params, &mut optim) {
                aborted = Some(format!("epoch {epoch}: {e}"));
                break 'epochs;
            }
            sum += loss.sum;
            count += y.data().len();
        }
        let train_loss = sum / count as f64;
        let val_loss = match val {
            Some(v) if epoch % cfg.val_every == 0 || epoch == cfg.epochs => {
                Some(evaluate_loss(&model, v, cfg.batch_size, cfg.eps_log)?)
            }
            _ => None,
        };
        let rec = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_s: started.elapsed().as_secs_f64(),
        };
        on_epoch(&rec);
        history.records.push(rec);
        let criterion = if val.is_some() { val_loss } else { Some(train_loss) };
        if let Some(c) = criterion {
            if !c.is_finite() {
                aborted = Some(format!("non-finite loss after epoch {epoch}"));
                break;
            }
            if c < best.0 {
                best = (c, epoch, model.clone());
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience > 0 && stale >= cfg.patience {
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome {
        model: best.2,
        best_epoch: best.1,
        history,
        optim,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(v: &[f64]) -> FeatureMap<f64> {
        FeatureMap::from_signal(v).unwrap()
    }

    #[test]
    fn bce_closed_forms() {
        let l = bce_loss(&fm(&[0.5]), &fm(&[1.0]), 1e-7).unwrap();
        assert!((l.sum - 2f64.ln()).abs() < 1e-12);
        let l = bce_loss(&fm(&[0.9, 0.2]), &fm(&[1.0, 0.0]), 1e-7).unwrap();
        assert!((l.sum - 0.328504).abs() < 1e-6);
        assert!((l.mean - 0.328504 / 2.0).abs() < 1e-6);
        let perfect = bce_loss(&fm(&[1.0, 0.0, 1.0]), &fm(&[1.0, 0.0, 1.0]), 1e-7).unwrap();
        assert!(perfect.sum >= 0.0 && perfect.sum <= 2.0 * 3.0 * 1e-7);
        assert!(bce_loss(&fm(&[0.5]), &fm(&[1.0, 0.0]), 1e-7).is_err());
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.0f64, -2.0];
        let mut s = OptimState::new(NadamConfig::default(), &[2]);
        apply_update(vec![p.as_mut_slice()], &[vec![0.0, 0.0]], &mut s).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = vec![1.0f64];
        let mut s = OptimState::new(NadamConfig::default(), &[1]);
        let err = apply_update(vec![p.as_mut_slice()], &[vec![f64::NAN]], &mut s).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!((p[0], s.t), (1.0, 0));
    }

    #[test]
    fn run_config_kv_round_trip() {
        let cfg = TrainRunConfig {
            seed: 7,
            epochs: 3,
            ..TrainRunConfig::default()
        };
        let back = TrainRunConfig::from_kv(&KvDoc::parse(&cfg.to_kv().to_string()).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let bad = KvDoc::parse("[train]\nbatch_size = 0\n").unwrap();
        assert!(TrainRunConfig::from_kv(&bad).is_err());
    }
}
