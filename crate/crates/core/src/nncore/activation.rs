use super::FeatureMap;
use crate::error::{config_err, shape_err, Result};
use crate::real::Real;

/// `max(αx, x)` for `0 ≤ α ≤ 1`.
pub fn leaky_relu<T: Real>(x: &FeatureMap<T>, alpha: T) -> Result<FeatureMap<T>> {
    check_alpha(alpha)?;
    Ok(x.map(|v| if v > T::zero() { v } else { alpha * v }))
}

/// Scales the gradient by 1 where the pre-activation is `>= 0` and by `α`
/// where it is negative. The subgradient at exactly zero is taken as 1.
pub fn leaky_relu_backward<T: Real>(
    pre: &FeatureMap<T>,
    alpha: T,
    grad_out: &FeatureMap<T>,
) -> Result<FeatureMap<T>> {
    check_alpha(alpha)?;
    same_shape(pre, grad_out)?;
    let mut g = grad_out.clone();
    for (gv, &p) in g.data_mut().iter_mut().zip(pre.data()) {
        if p < T::zero() {
            *gv *= alpha;
        }
    }
    Ok(g)
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(config_err!("leaky ReLU slope must lie in [0, 1], got {alpha}"));
    }
    Ok(())
}

fn same_shape<T: Real>(a: &FeatureMap<T>, b: &FeatureMap<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err!("shape mismatch {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// `1 / (1 + e^{-v})`, evaluated without overflow for large `|v|`.
#[inline]
pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn logistic_sigmoid<T: Real>(x: &FeatureMap<T>) -> FeatureMap<T> {
    x.map(sigmoid)
}

/// Backward pass in terms of the forward *output* `y`: `dy · y(1−y)`.
pub fn logistic_sigmoid_backward<T: Real>(
    out: &FeatureMap<T>,
    grad_out: &FeatureMap<T>,
) -> Result<FeatureMap<T>> {
    same_shape(out, grad_out)?;
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(out.data()) {
        *gv *= y * (T::one() - y);
    }
    Ok(g)
}
