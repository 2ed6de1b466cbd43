use crate::error::{shape_err, Result};
use crate::real::Real;

/// Rank-3 activation tensor, `batch × channels × time`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    batch: usize,
    channels: usize,
    len: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn new(batch: usize, channels: usize, len: usize, data: Vec<T>) -> Result<Self> {
        if batch == 0 || channels == 0 || len == 0 {
            return Err(shape_err!(
                "feature map dimensions must be positive, got ({batch}, {channels}, {len})"
            ));
        }
        if data.len() != batch * channels * len {
            return Err(shape_err!(
                "feature map ({batch}, {channels}, {len}) needs {} values, got {}",
                batch * channels * len,
                data.len()
            ));
        }
        Ok(FeatureMap {
            batch,
            channels,
            len,
            data,
        })
    }

    /// Panics if any dimension is zero.
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self::filled(batch, channels, len, T::zero())
    }

    pub fn filled(batch: usize, channels: usize, len: usize, value: T) -> Self {
        assert!(batch > 0 && channels > 0 && len > 0, "empty feature map");
        FeatureMap {
            batch,
            channels,
            len,
            data: vec![value; batch * channels * len],
        }
    }

    pub fn from_fn(
        batch: usize,
        channels: usize,
        len: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut out = Self::zeros(batch, channels, len);
        for b in 0..batch {
            for c in 0..channels {
                for (t, v) in out.row_mut(b, c).iter_mut().enumerate() {
                    *v = f(b, c, t);
                }
            }
        }
        out
    }

    /// Single-sample, single-channel map.
    pub fn from_signal(values: &[T]) -> Result<Self> {
        Self::new(1, 1, values.len(), values.to_vec())
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.len)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    fn offset(&self, b: usize, c: usize) -> usize {
        (b * self.channels + c) * self.len
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, t: usize) -> T {
        self.data[self.offset(b, c) + t]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, v: T) {
        let o = self.offset(b, c);
        self.data[o + t] = v;
    }

    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[T] {
        let o = self.offset(b, c);
        &self.data[o..o + self.len]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let o = self.offset(b, c);
        let len = self.len;
        &mut self.data[o..o + len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        FeatureMap {
            batch: self.batch,
            channels: self.channels,
            len: self.len,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise `self += other`.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err!(
                "cannot accumulate {:?} into {:?}",
                other.shape(),
                self.shape()
            ));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies batch element `b` into a new single-sample map.
    pub fn sample(&self, b: usize) -> Self {
        let n = self.channels * self.len;
        FeatureMap {
            batch: 1,
            channels: self.channels,
            len: self.len,
            data: self.data[b * n..(b + 1) * n].to_vec(),
        }
    }

    /// Stacks single- or multi-sample maps along the batch axis.
    pub fn stack(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| shape_err!("cannot stack zero maps"))?;
        let (_, c, t) = first.shape();
        let mut data = Vec::new();
        let mut batch = 0;
        for p in parts {
            if p.channels != c || p.len != t {
                return Err(shape_err!("cannot stack {:?} with {:?}", p.shape(), first.shape()));
            }
            batch += p.batch;
            data.extend_from_slice(&p.data);
        }
        Self::new(batch, c, t, data)
    }

    pub fn cast<U: Real>(&self) -> FeatureMap<U> {
        FeatureMap {
            batch: self.batch,
            channels: self.channels,
            len: self.len,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}
