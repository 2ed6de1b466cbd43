use sha2::{Digest, Sha256};

use super::{ActivationProfile, SignalSeries};
use crate::error::{config_err, data_err, Result};
use crate::nncore::FeatureMap;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fold {
    Train,
    Validation,
    Evaluation,
}

impl Fold {
    pub fn dir_name(self) -> &'static str {
        match self {
            Fold::Train => "train",
            Fold::Validation => "val",
            Fold::Evaluation => "eval",
        }
    }
}

/// Global input scaling `(x − mean) / std`, fitted on the training fold only
/// and carried with the model so every later fold reuses it verbatim.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(config_err!(
                "standardization needs finite mean and positive std, got mean={mean} std={std}"
            ));
        }
        Ok(Standardizer { mean, std })
    }

    /// Population mean and standard deviation over all samples of `parts`.
    pub fn fit(parts: &[&SignalSeries]) -> Result<Self> {
        let n: usize = parts.iter().map(|s| s.len()).sum();
        if n == 0 {
            return Err(data_err!("cannot fit standardization on an empty series"));
        }
        let mean = parts.iter().flat_map(|s| &s.samples).sum::<f64>() / n as f64;
        let var = parts
            .iter()
            .flat_map(|s| &s.samples)
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / n as f64;
        Self::new(mean, var.sqrt())
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }

    pub fn apply_all(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.apply(v)).collect()
    }

    /// SHA-256 over the little-endian bytes of mean and std, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.mean.to_le_bytes());
        h.update(self.std.to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// Non-overlapping `(input, target)` windows of a fixed length.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSet {
    pub window: usize,
    pub fold: Fold,
    /// Standardized aggregate windows.
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<bool>>,
}

impl SegmentSet {
    pub fn empty(window: usize, fold: Fold) -> Self {
        SegmentSet {
            window,
            fold,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn extend(&mut self, other: SegmentSet) -> Result<()> {
        if other.window != self.window {
            return Err(data_err!(
                "cannot merge segments of length {} and {}",
                self.window,
                other.window
            ));
        }
        self.inputs.extend(other.inputs);
        self.targets.extend(other.targets);
        Ok(())
    }

    /// Packs the selected segments into `(inputs, targets)` of shape `(B, 1, K)`.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
        let k = self.window;
        let mut x = Vec::with_capacity(indices.len() * k);
        let mut y = Vec::with_capacity(indices.len() * k);
        for &i in indices {
            x.extend(self.inputs[i].iter().map(|&v| T::lit(v)));
            y.extend(self.targets[i].iter().map(|&s| if s { T::one() } else { T::zero() }));
        }
        Ok((
            FeatureMap::new(indices.len(), 1, k, x)?,
            FeatureMap::new(indices.len(), 1, k, y)?,
        ))
    }
}

/// Cuts aligned series into `⌊N/K⌋` windows at offsets `0, K, 2K, …`,
/// discarding the tail, and standardizes the inputs.
pub fn make_segments(
    x: &SignalSeries,
    truth: &ActivationProfile,
    window: usize,
    scaler: &Standardizer,
    fold: Fold,
) -> Result<SegmentSet> {
    if window == 0 {
        return Err(config_err!("window length must be positive"));
    }
    if x.len() != truth.len() {
        return Err(data_err!(
            "aggregate has {} samples but profile has {}",
            x.len(),
            truth.len()
        ));
    }
    if x.len() < window {
        return Err(data_err!(
            "series of {} samples is shorter than one {window}-sample window",
            x.len()
        ));
    }
    let count = x.len() / window;
    let mut set = SegmentSet::empty(window, fold);
    for s in 0..count {
        let r = s * window..(s + 1) * window;
        set.inputs.push(scaler.apply_all(&x.samples[r.clone()]));
        set.targets.push(truth.states[r].to_vec());
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> (SignalSeries, ActivationProfile) {
        let x = SignalSeries::new((0..n).map(|i| i as f64).collect(), 1.0, 0.0).unwrap();
        let p = ActivationProfile::new((0..n).map(|i| i % 2 == 0).collect(), 1.0, 0.0, "t");
        (x, p)
    }

    #[test]
    fn ten_by_three() {
        let (x, p) = ramp(10);
        let id = Standardizer::new(0.0, 1.0).unwrap();
        let s = make_segments(&x, &p, 3, &id, Fold::Train).unwrap();
        assert_eq!(s.len(), 3);
        let flat: Vec<f64> = s.inputs.concat();
        assert_eq!(flat, (0..9).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(s.targets[1], vec![false, true, false]);
    }

    #[test]
    fn exact_window_and_too_short() {
        let (x, p) = ramp(4);
        let id = Standardizer::new(0.0, 1.0).unwrap();
        assert_eq!(make_segments(&x, &p, 4, &id, Fold::Train).unwrap().len(), 1);
        assert!(make_segments(&x, &p, 5, &id, Fold::Train).is_err());
    }

    #[test]
    fn standardizer_round_trip_and_zero_std() {
        let x = SignalSeries::new(vec![100.0, 300.0, 200.0, 1000.0], 1.0, 0.0).unwrap();
        let st = Standardizer::fit(&[&x]).unwrap();
        for &v in &x.samples {
            let back = st.invert(st.apply(v));
            assert!((back - v).abs() <= 1e-6 * v.abs());
        }
        assert_eq!(st.apply(st.mean), 0.0);
        let flat = SignalSeries::new(vec![5.0; 8], 1.0, 0.0).unwrap();
        assert!(Standardizer::fit(&[&flat]).is_err());
    }

    #[test]
    fn checksum_tracks_statistics() {
        let a = Standardizer::new(1.0, 2.0).unwrap();
        let b = Standardizer::new(1.0, 2.0000001).unwrap();
        assert_eq!(a.checksum(), Standardizer::new(1.0, 2.0).unwrap().checksum());
        assert_ne!(a.checksum(), b.checksum());
    }

    #[test]
    fn batch_layout() {
        let (x, p) = ramp(6);
        let id = Standardizer::new(0.0, 1.0).unwrap();
        let s = make_segments(&x, &p, 3, &id, Fold::Train).unwrap();
        let (bx, by) = s.batch::<f32>(&[1, 0]).unwrap();
        assert_eq!(bx.shape(), (2, 1, 3));
        assert_eq!(bx.data(), &[3.0, 4.0, 5.0, 0.0, 1.0, 2.0]);
        assert_eq!(by.data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }
}
