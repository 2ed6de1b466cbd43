use super::FeatureMap;
use crate::error::{shape_err, Result};
use crate::real::Real;

/// Positions of the window maxima chosen by [`max_pool`], as flat indices
/// into the pooled input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    pub factor: usize,
    pub input_shape: (usize, usize, usize),
    pub argmax: Vec<usize>,
}

fn check_factor(factor: usize) -> Result<()> {
    if factor == 0 {
        return Err(shape_err!("pooling factor must be at least 1"));
    }
    Ok(())
}

/// Non-overlapping max pooling. Ties resolve to the earliest position.
pub fn max_pool<T: Real>(x: &FeatureMap<T>, factor: usize) -> Result<(FeatureMap<T>, PoolIndices)> {
    check_factor(factor)?;
    let (batch, channels, len) = x.shape();
    if len % factor != 0 {
        return Err(shape_err!("length {len} is not divisible by pooling factor {factor}"));
    }
    let out_len = len / factor;
    let mut out = FeatureMap::zeros(batch, channels, out_len);
    let mut argmax = Vec::with_capacity(batch * channels * out_len);
    for b in 0..batch {
        for c in 0..channels {
            let base = (b * channels + c) * len;
            let src = x.row(b, c);
            let dst = out.row_mut(b, c);
            for (w, d) in dst.iter_mut().enumerate() {
                let start = w * factor;
                let mut best = start;
                for i in start + 1..start + factor {
                    if src[i] > src[best] {
                        best = i;
                    }
                }
                *d = src[best];
                argmax.push(base + best);
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            factor,
            input_shape: x.shape(),
            argmax,
        },
    ))
}

/// Routes each pooled gradient back to the position that won its window.
pub fn max_pool_backward<T: Real>(grad_out: &FeatureMap<T>, idx: &PoolIndices) -> Result<FeatureMap<T>> {
    let (b, c, len) = idx.input_shape;
    if grad_out.shape() != (b, c, len / idx.factor) {
        return Err(shape_err!(
            "pool backward: gradient {:?} does not match pooled shape {:?}",
            grad_out.shape(),
            (b, c, len / idx.factor)
        ));
    }
    let mut g = FeatureMap::zeros(b, c, len);
    let data = g.data_mut();
    for (&pos, &gv) in idx.argmax.iter().zip(grad_out.data()) {
        data[pos] += gv;
    }
    Ok(g)
}

/// Up-samples by repeating every sample `factor` times.
pub fn unpool_forward_fill<T: Real>(x: &FeatureMap<T>, factor: usize) -> Result<FeatureMap<T>> {
    check_factor(factor)?;
    let (batch, channels, len) = x.shape();
    let mut out = FeatureMap::zeros(batch, channels, len * factor);
    for b in 0..batch {
        for c in 0..channels {
            let src = x.row(b, c);
            for (chunk, &v) in out.row_mut(b, c).chunks_exact_mut(factor).zip(src) {
                chunk.fill(v);
            }
        }
    }
    Ok(out)
}

/// Sums the `factor` incoming gradients of every source sample.
pub fn unpool_forward_fill_backward<T: Real>(grad_out: &FeatureMap<T>, factor: usize) -> Result<FeatureMap<T>> {
    check_factor(factor)?;
    let (batch, channels, len) = grad_out.shape();
    if len % factor != 0 {
        return Err(shape_err!("unpool backward: length {len} not divisible by {factor}"));
    }
    let mut g = FeatureMap::zeros(batch, channels, len / factor);
    for b in 0..batch {
        for c in 0..channels {
            let src = grad_out.row(b, c);
            for (d, chunk) in g.row_mut(b, c).iter_mut().zip(src.chunks_exact(factor)) {
                *d = chunk.iter().copied().sum();
            }
        }
    }
    Ok(g)
}
