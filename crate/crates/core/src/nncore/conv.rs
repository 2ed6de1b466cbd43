use super::FeatureMap;
use crate::error::{shape_err, Result};
use crate::real::Real;

/// Weights of a dilated, same-length 1-D cross-correlation.
///
/// `kernel` is laid out `[out_channels][in_channels][kernel_size]`; tap `j`
/// reads the input at offset `dilation * (j - kernel_size / 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<T> {
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
    out_channels: usize,
    in_channels: usize,
    kernel_size: usize,
    dilation: usize,
}

impl<T: Real> ConvParams<T> {
    /// Zero-initialized parameters.
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_size: usize,
        dilation: usize,
    ) -> Result<Self> {
        Self::from_parts(
            out_channels,
            in_channels,
            kernel_size,
            dilation,
            vec![T::zero(); out_channels * in_channels * kernel_size],
            vec![T::zero(); out_channels],
        )
    }

    pub fn from_parts(
        out_channels: usize,
        in_channels: usize,
        kernel_size: usize,
        dilation: usize,
        kernel: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if kernel_size.is_multiple_of(2) {
            return Err(shape_err!("kernel size must be odd, got {kernel_size}"));
        }
        if dilation == 0 {
            return Err(shape_err!("dilation must be at least 1"));
        }
        if out_channels == 0 || in_channels == 0 {
            return Err(shape_err!("convolution needs at least one input and output channel"));
        }
        if kernel.len() != out_channels * in_channels * kernel_size {
            return Err(shape_err!(
                "kernel has {} values, expected {out_channels}x{in_channels}x{kernel_size}",
                kernel.len()
            ));
        }
        if bias.len() != out_channels {
            return Err(shape_err!(
                "bias has {} values, expected {out_channels}",
                bias.len()
            ));
        }
        Ok(ConvParams {
            kernel,
            bias,
            out_channels,
            in_channels,
            kernel_size,
            dilation,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    #[inline]
    fn taps(&self, co: usize, ci: usize) -> &[T] {
        let o = (co * self.in_channels + ci) * self.kernel_size;
        &self.kernel[o..o + self.kernel_size]
    }

    /// Signed input offset of tap `j`.
    #[inline]
    fn offset(&self, j: usize) -> isize {
        self.dilation as isize * (j as isize - (self.kernel_size / 2) as isize)
    }
}

/// Output positions `n` for which `n + offset` lies inside `[0, len)`.
#[inline]
fn valid_range(len: usize, offset: isize) -> (usize, usize) {
    let lo = if offset < 0 { (-offset) as usize } else { 0 };
    let hi = if offset > 0 {
        len.saturating_sub(offset as usize)
    } else {
        len
    };
    (lo, hi)
}

fn check_input<T: Real>(x: &FeatureMap<T>, p: &ConvParams<T>) -> Result<()> {
    if x.channels() != p.in_channels {
        return Err(shape_err!(
            "convolution expects {} input channels, got {}",
            p.in_channels,
            x.channels()
        ));
    }
    Ok(())
}

/// `out[b,c,n] = bias[c] + Σ_ci Σ_j x[b,ci,n+d(j-k/2)] · κ[c,ci,j]`, with
/// out-of-range taps reading zero so the output keeps the input length.
pub fn conv1d_forward<T: Real>(x: &FeatureMap<T>, p: &ConvParams<T>) -> Result<FeatureMap<T>> {
    check_input(x, p)?;
    let (batch, _, len) = x.shape();
    let mut out = FeatureMap::zeros(batch, p.out_channels, len);
    for b in 0..batch {
        for co in 0..p.out_channels {
            let row = out.row_mut(b, co);
            row.fill(p.bias[co]);
            for ci in 0..p.in_channels {
                let xin = x.row(b, ci);
                for (j, &w) in p.taps(co, ci).iter().enumerate() {
                    let off = p.offset(j);
                    let (lo, hi) = valid_range(len, off);
                    if lo >= hi {
                        continue;
                    }
                    let src = &xin[(lo as isize + off) as usize..(hi as isize + off) as usize];
                    for (o, &s) in row[lo..hi].iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub input: FeatureMap<T>,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

/// Adjoint of [`conv1d_forward`] with respect to the input, kernel and bias.
pub fn conv1d_backward<T: Real>(
    x: &FeatureMap<T>,
    p: &ConvParams<T>,
    grad_out: &FeatureMap<T>,
) -> Result<ConvGrads<T>> {
    check_input(x, p)?;
    let (batch, _, len) = x.shape();
    if grad_out.shape() != (batch, p.out_channels, len) {
        return Err(shape_err!(
            "convolution gradient has shape {:?}, expected {:?}",
            grad_out.shape(),
            (batch, p.out_channels, len)
        ));
    }
    let mut grad_x = FeatureMap::zeros(batch, p.in_channels, len);
    let mut grad_k = vec![T::zero(); p.kernel.len()];
    let mut grad_b = vec![T::zero(); p.out_channels];

    for (co, gb) in grad_b.iter_mut().enumerate() {
        for b in 0..batch {
            *gb += grad_out.row(b, co).iter().copied().sum::<T>();
        }
    }

    for co in 0..p.out_channels {
        for ci in 0..p.in_channels {
            let kbase = (co * p.in_channels + ci) * p.kernel_size;
            for j in 0..p.kernel_size {
                let off = p.offset(j);
                let (lo, hi) = valid_range(len, off);
                if lo >= hi {
                    continue;
                }
                let mut acc = T::zero();
                for b in 0..batch {
                    let g = &grad_out.row(b, co)[lo..hi];
                    let xin = &x.row(b, ci)[(lo as isize + off) as usize..(hi as isize + off) as usize];
                    for (&gv, &xv) in g.iter().zip(xin) {
                        acc += gv * xv;
                    }
                }
                grad_k[kbase + j] = acc;
            }
        }
    }

    for b in 0..batch {
        for ci in 0..p.in_channels {
            for co in 0..p.out_channels {
                let g = grad_out.row(b, co);
                let taps = p.taps(co, ci);
                let gx = grad_x.row_mut(b, ci);
                for (j, &w) in taps.iter().enumerate() {
                    let off = p.offset(j);
                    let (lo, hi) = valid_range(len, off);
                    if lo >= hi {
                        continue;
                    }
                    let dst = &mut gx[(lo as isize + off) as usize..(hi as isize + off) as usize];
                    for (d, &gv) in dst.iter_mut().zip(&g[lo..hi]) {
                        *d += w * gv;
                    }
                }
            }
        }
    }

    Ok(ConvGrads {
        input: grad_x,
        kernel: grad_k,
        bias: grad_b,
    })
}
