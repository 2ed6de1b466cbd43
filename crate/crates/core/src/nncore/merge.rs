use super::FeatureMap;
use crate::error::{shape_err, Result};
use crate::real::Real;

/// Stacks `a` and `b` along the channel axis.
pub fn concat_channels<T: Real>(a: &FeatureMap<T>, b: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    concat_many(&[a, b])
}

pub fn concat_many<T: Real>(parts: &[&FeatureMap<T>]) -> Result<FeatureMap<T>> {
    let first = parts.first().ok_or_else(|| shape_err!("nothing to concatenate"))?;
    let (batch, _, len) = first.shape();
    if let Some(bad) = parts.iter().find(|p| p.batch() != batch || p.len() != len) {
        return Err(shape_err!(
            "channel concat needs equal batch and time, got {:?} and {:?}",
            first.shape(),
            bad.shape()
        ));
    }
    let channels: usize = parts.iter().map(|p| p.channels()).sum();
    let mut data = Vec::with_capacity(batch * channels * len);
    for b in 0..batch {
        for p in parts {
            let n = p.channels() * len;
            data.extend_from_slice(&p.data()[b * n..(b + 1) * n]);
        }
    }
    FeatureMap::new(batch, channels, len, data)
}

/// Adjoint of [`concat_many`]: cuts the gradient into the original channel ranges.
pub fn split_channels<T: Real>(grad: &FeatureMap<T>, widths: &[usize]) -> Result<Vec<FeatureMap<T>>> {
    let (batch, channels, len) = grad.shape();
    if widths.iter().sum::<usize>() != channels || widths.contains(&0) {
        return Err(shape_err!("cannot split {channels} channels into {widths:?}"));
    }
    let mut parts: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(batch * w * len)).collect();
    for b in 0..batch {
        let mut c0 = 0;
        for (part, &w) in parts.iter_mut().zip(widths) {
            let start = (b * channels + c0) * len;
            part.extend_from_slice(&grad.data()[start..start + w * len]);
            c0 += w;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(d, &w)| FeatureMap::new(batch, w, len, d))
        .collect()
}

pub fn concat_channels_backward<T: Real>(
    grad: &FeatureMap<T>,
    channels_a: usize,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    let rest = grad.channels().saturating_sub(channels_a);
    let mut parts = split_channels(grad, &[channels_a, rest])?.into_iter();
    Ok((parts.next().unwrap(), parts.next().unwrap()))
}

pub fn add_elementwise<T: Real>(a: &FeatureMap<T>, b: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    let mut out = a.clone();
    out.accumulate(b)?;
    Ok(out)
}

/// Both summands receive the upstream gradient unchanged.
pub fn add_elementwise_backward<T: Real>(grad: &FeatureMap<T>) -> (FeatureMap<T>, FeatureMap<T>) {
    (grad.clone(), grad.clone())
}
