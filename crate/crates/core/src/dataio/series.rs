use crate::error::{config_err, data_err, Result};

/// Uniformly sampled real-power trace in watts.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalSeries {
    pub samples: Vec<f64>,
    /// Seconds between consecutive samples.
    pub period: f64,
    /// Unix time of the first sample, in seconds.
    pub start: f64,
}

impl SignalSeries {
    pub fn new(samples: Vec<f64>, period: f64, start: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(config_err!("sample period must be positive, got {period}"));
        }
        Ok(SignalSeries {
            samples,
            period,
            start,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sensor traces may contain small negative readings; they are kept as-is.
    pub fn has_negative(&self) -> bool {
        self.samples.iter().any(|&v| v < 0.0)
    }

    pub fn timestamp(&self, i: usize) -> f64 {
        self.start + i as f64 * self.period
    }

    /// Samples `[from, to)`, with the start time shifted accordingly.
    pub fn slice(&self, from: usize, to: usize) -> Self {
        SignalSeries {
            samples: self.samples[from..to].to_vec(),
            period: self.period,
            start: self.timestamp(from),
        }
    }
}

/// Binary on/off sequence aligned sample-for-sample with a [`SignalSeries`].
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationProfile {
    pub states: Vec<bool>,
    pub period: f64,
    pub start: f64,
    pub load: String,
}

impl ActivationProfile {
    pub fn new(states: Vec<bool>, period: f64, start: f64, load: impl Into<String>) -> Self {
        ActivationProfile {
            states,
            period,
            start,
            load: load.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn on_fraction(&self) -> f64 {
        if self.states.is_empty() {
            return 0.0;
        }
        self.states.iter().filter(|&&s| s).count() as f64 / self.states.len() as f64
    }

    /// Number of off→on transitions, counting a profile that starts on as one.
    pub fn activation_count(&self) -> usize {
        let mut prev = false;
        let mut count = 0;
        for &s in &self.states {
            if s && !prev {
                count += 1;
            }
            prev = s;
        }
        count
    }

    pub fn timestamp(&self, i: usize) -> f64 {
        self.start + i as f64 * self.period
    }

    pub fn slice(&self, from: usize, to: usize) -> Self {
        ActivationProfile::new(self.states[from..to].to_vec(), self.period, self.timestamp(from), self.load.clone())
    }
}

/// Types that can be up-sampled by repeating samples.
pub trait Resample: Sized {
    fn period(&self) -> f64;
    fn repeat_each(&self, factor: usize, new_period: f64) -> Self;
    fn take_every(&self, factor: usize, new_period: f64) -> Self;
}

impl Resample for SignalSeries {
    fn period(&self) -> f64 {
        self.period
    }

    fn repeat_each(&self, factor: usize, new_period: f64) -> Self {
        SignalSeries {
            samples: self.samples.iter().flat_map(|&v| std::iter::repeat_n(v, factor)).collect(),
            period: new_period,
            start: self.start,
        }
    }

    fn take_every(&self, factor: usize, new_period: f64) -> Self {
        SignalSeries {
            samples: self.samples.iter().step_by(factor).copied().collect(),
            period: new_period,
            start: self.start,
        }
    }
}

impl Resample for ActivationProfile {
    fn period(&self) -> f64 {
        self.period
    }

    fn repeat_each(&self, factor: usize, new_period: f64) -> Self {
        let states = self.states.iter().flat_map(|&v| std::iter::repeat_n(v, factor)).collect();
        ActivationProfile::new(states, new_period, self.start, self.load.clone())
    }

    fn take_every(&self, factor: usize, new_period: f64) -> Self {
        let states = self.states.iter().step_by(factor).copied().collect();
        ActivationProfile::new(states, new_period, self.start, self.load.clone())
    }
}

fn integer_factor(source: f64, target: f64) -> Result<usize> {
    if !(target > 0.0) {
        return Err(config_err!("target period must be positive, got {target}"));
    }
    let ratio = source / target;
    let factor = ratio.round();
    if factor < 1.0 || (ratio - factor).abs() > 1e-9 * ratio.max(1.0) {
        return Err(config_err!(
            "period {source} s is not an integer multiple of {target} s"
        ));
    }
    Ok(factor as usize)
}

/// Up-samples by forward filling: each sample repeats `source / target` times.
pub fn forward_fill_resample<S: Resample>(s: &S, target_period: f64) -> Result<S> {
    let factor = integer_factor(s.period(), target_period)?;
    Ok(s.repeat_each(factor, target_period))
}

/// Keeps the first sample of every group of `factor`; inverse of
/// [`forward_fill_resample`].
pub fn downsample_first<S: Resample>(s: &S, target_period: f64) -> Result<S> {
    let factor = integer_factor(target_period, s.period())?;
    Ok(s.take_every(factor, target_period))
}

/// Restricts two series with equal periods to their common time span.
pub fn align(a: &SignalSeries, b: &SignalSeries) -> Result<(SignalSeries, SignalSeries)> {
    if (a.period - b.period).abs() > 1e-9 * a.period {
        return Err(data_err!("cannot align periods {} s and {} s", a.period, b.period));
    }
    let p = a.period;
    let start = a.start.max(b.start);
    let end = (a.start + a.len() as f64 * p).min(b.start + b.len() as f64 * p);
    if end <= start {
        return Err(data_err!("series do not overlap in time"));
    }
    let cut = |s: &SignalSeries| {
        let from = ((start - s.start) / p).round() as usize;
        let n = ((end - start) / p).round() as usize;
        s.slice(from, (from + n).min(s.len()))
    };
    let (x, y) = (cut(a), cut(b));
    let n = x.len().min(y.len());
    Ok((x.slice(0, n), y.slice(0, n)))
}
