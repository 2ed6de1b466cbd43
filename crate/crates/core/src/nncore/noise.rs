use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{FeatureMap, Mode};
use crate::error::{config_err, Result};
use crate::real::Real;

/// Adds i.i.d. `N(0, σ²)` noise in training mode; identity otherwise.
///
/// Noise is drawn from `rng` in storage order, one draw per element, so a
/// fixed seed reproduces the same perturbation. The backward pass is the
/// identity.
pub fn gaussian_noise<T: Real, R: Rng + ?Sized>(
    x: &FeatureMap<T>,
    sigma: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<FeatureMap<T>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(config_err!("noise standard deviation must be finite and >= 0, got {sigma}"));
    }
    if mode == Mode::Infer || sigma == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| config_err!("noise: {e}"))?;
    let mut out = x.clone();
    for v in out.data_mut() {
        *v += T::lit(normal.sample(rng));
    }
    Ok(out)
}
