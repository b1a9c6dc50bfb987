//! Audio temporal shift: moves a slice of channels one step forward or
//! backward in time so frequency-only convolutions see neighbouring columns.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Number of shifted ("dynamic") channels for `c` channels: `c * fraction`
/// rounded to an even count of at least two, never more than `c`.
pub fn dynamic_channels(c: usize, shift_fraction: f64) -> Result<usize> {
    if c < 2 {
        return Err(Error::InvalidSize(format!(
            "temporal shift needs at least 2 channels, got {c}"
        )));
    }
    if !(shift_fraction > 0.0 && shift_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "shift fraction {shift_fraction} outside (0, 1]"
        )));
    }
    let d = 2 * ((c as f64 * shift_fraction / 2.0).round() as usize);
    Ok(d.max(2).min(c - c % 2))
}

/// Channels `[0, d/2)` are delayed by one column, `[d/2, d)` advanced by one,
/// the rest copied. Vacated columns are zero.
fn shift(x: &Tensor, d: usize, delay_first: bool) -> Tensor {
    let s = x.shape();
    let mut out = x.clone();
    let (xd, od) = (x.data(), out.data_mut());
    for c in 0..d {
        let delay = (c < d / 2) == delay_first;
        for f in 0..s.f {
            let row = (c * s.f + f) * s.t;
            let (src, dst) = (&xd[row..row + s.t], &mut od[row..row + s.t]);
            if s.t == 0 {
                continue;
            }
            if delay {
                dst[0] = 0.0;
                dst[1..].copy_from_slice(&src[..s.t - 1]);
            } else {
                dst[..s.t - 1].copy_from_slice(&src[1..]);
                dst[s.t - 1] = 0.0;
            }
        }
    }
    out
}

pub fn atsm(x: &Tensor, shift_fraction: f64) -> Result<Tensor> {
    let d = dynamic_channels(x.shape().c, shift_fraction)?;
    Ok(shift(x, d, true))
}

/// Backward pass: the opposite shift applied to the upstream gradient.
pub fn atsm_backward(upstream: &Tensor, shift_fraction: f64) -> Result<Tensor> {
    let d = dynamic_channels(upstream.shape().c, shift_fraction)?;
    Ok(shift(upstream, d, false))
}

/// Integer variant used by the quantized path; identical data movement.
pub fn atsm_i16(
    data: &[i16],
    c: usize,
    f: usize,
    t: usize,
    shift_fraction: f64,
) -> Result<Vec<i16>> {
    let d = dynamic_channels(c, shift_fraction)?;
    let mut out = data.to_vec();
    if t == 0 {
        return Ok(out);
    }
    for ch in 0..d {
        for fi in 0..f {
            let row = (ch * f + fi) * t;
            let (src, dst) = (&data[row..row + t], &mut out[row..row + t]);
            if ch < d / 2 {
                dst[0] = 0;
                dst[1..].copy_from_slice(&src[..t - 1]);
            } else {
                dst[..t - 1].copy_from_slice(&src[1..]);
                dst[t - 1] = 0;
            }
        }
    }
    Ok(out)
}
