use rand::Rng;

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Kernel footprint: 3x1 along frequency only, or 3x3 over frequency and time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvKind {
    OneD,
    TwoD,
}

impl ConvKind {
    pub const fn kt(self) -> usize {
        match self {
            ConvKind::OneD => 1,
            ConvKind::TwoD => 3,
        }
    }

    pub const fn taps(self) -> usize {
        KF * self.kt()
    }
}

/// Kernel extent along frequency for every layer.
pub const KF: usize = 3;

/// Weights `(c_out, c_in, KF, kt)` and per-output-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub c_in: usize,
    pub c_out: usize,
    pub kind: ConvKind,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients with the same layout as [`ConvParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvGrads {
    pub fn zeros_like(p: &ConvParams) -> Self {
        Self {
            weights: vec![0.0; p.weights.len()],
            bias: vec![0.0; p.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &ConvGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.weights
            .iter_mut()
            .chain(self.bias.iter_mut())
            .for_each(|v| *v *= s);
    }
}

impl ConvParams {
    pub fn zeros(c_in: usize, c_out: usize, kind: ConvKind) -> Self {
        Self {
            c_in,
            c_out,
            kind,
            weights: vec![0.0; c_out * c_in * kind.taps()],
            bias: vec![0.0; c_out],
        }
    }

    /// Glorot-uniform weights, zero bias. Values are rounded to `f32` so a
    /// freshly built model survives the on-disk format bit for bit.
    pub fn glorot<R: Rng + ?Sized>(c_in: usize, c_out: usize, kind: ConvKind, rng: &mut R) -> Self {
        let mut p = Self::zeros(c_in, c_out, kind);
        let taps = kind.taps();
        let limit = (6.0 / ((c_in * taps + c_out * taps) as f64)).sqrt();
        for w in &mut p.weights {
            *w = rng.gen_range(-limit..limit) as f32 as f64;
        }
        p
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn weight_index(&self, co: usize, ci: usize, df: usize, dt: usize) -> usize {
        ((co * self.c_in + ci) * KF + df) * self.kind.kt() + dt
    }

    /// Sets a centered unit tap from `ci` to `co`.
    pub fn set_identity_tap(&mut self, co: usize, ci: usize, gain: f64) {
        let dt = self.kind.kt() / 2;
        let i = self.weight_index(co, ci, KF / 2, dt);
        self.weights[i] = gain;
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().c != self.c_in {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {}",
                self.c_in,
                x.shape().c
            )));
        }
        Ok(())
    }
}

/// Valid output range `lo..hi` for an offset `s` over an axis of length `n`.
#[inline]
fn span(n: usize, s: isize) -> (usize, usize) {
    let lo = (-s).max(0) as usize;
    let hi = (n as isize - s.max(0)).max(lo as isize) as usize;
    (lo, hi)
}

/// Walks every (kernel tap, overlapping row segment) pair of a same-padded
/// cross-correlation between an input plane and an output plane. The callback
/// receives the tap offsets and `(out_start, in_start, len)` for contiguous
/// runs.
#[inline]
pub(crate) fn for_each_run(
    f: usize,
    t: usize,
    kind: ConvKind,
    mut visit: impl FnMut(usize, usize, usize, usize, usize),
) {
    let kt = kind.kt();
    let pt = (kt / 2) as isize;
    for df in 0..KF {
        let sf = df as isize - 1;
        let (f0, f1) = span(f, sf);
        for dt in 0..kt {
            let st = dt as isize - pt;
            if st == 0 {
                // Whole rows are contiguous when there is no time offset.
                let out_start = f0 * t;
                let in_start = ((f0 as isize + sf) as usize) * t;
                visit(df, dt, out_start, in_start, (f1 - f0) * t);
            } else {
                let (t0, t1) = span(t, st);
                for fi in f0..f1 {
                    let out_start = fi * t + t0;
                    let in_start = ((fi as isize + sf) as usize) * t + (t0 as isize + st) as usize;
                    visit(df, dt, out_start, in_start, t1 - t0);
                }
            }
        }
    }
}

/// Same-padded cross-correlation. Output shape is `(c_out, F, T)`.
pub fn conv(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    p.check_input(x)?;
    let s = x.shape();
    let plane = s.plane();
    let mut out = Tensor::zeros(Shape::new(p.c_out, s.f, s.t));
    let xd = x.data();
    let od = out.data_mut();
    for co in 0..p.c_out {
        let o = &mut od[co * plane..(co + 1) * plane];
        o.fill(p.bias[co]);
        for ci in 0..p.c_in {
            let xi = &xd[ci * plane..(ci + 1) * plane];
            for_each_run(s.f, s.t, p.kind, |df, dt, os, is, len| {
                let w = p.weights[p.weight_index(co, ci, df, dt)];
                for (ov, iv) in o[os..os + len].iter_mut().zip(&xi[is..is + len]) {
                    *ov += w * iv;
                }
            });
        }
    }
    Ok(out)
}

/// Gradients of [`conv`] with respect to its input and parameters.
pub fn conv_backward(x: &Tensor, p: &ConvParams, upstream: &Tensor) -> Result<(Tensor, ConvGrads)> {
    p.check_input(x)?;
    let s = x.shape();
    if upstream.shape() != Shape::new(p.c_out, s.f, s.t) {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient {} for conv output ({}, {}, {})",
            upstream.shape(),
            p.c_out,
            s.f,
            s.t
        )));
    }
    let plane = s.plane();
    let mut gx = Tensor::zeros(s);
    let mut gp = ConvGrads::zeros_like(p);
    let xd = x.data();
    let gd = upstream.data();
    let gxd = gx.data_mut();
    for co in 0..p.c_out {
        let g = &gd[co * plane..(co + 1) * plane];
        gp.bias[co] = g.iter().sum();
        for ci in 0..p.c_in {
            let xi = &xd[ci * plane..(ci + 1) * plane];
            let gxi = &mut gxd[ci * plane..(ci + 1) * plane];
            for_each_run(s.f, s.t, p.kind, |df, dt, os, is, len| {
                let wi = p.weight_index(co, ci, df, dt);
                let w = p.weights[wi];
                let mut acc = 0.0;
                for ((gv, xv), gxv) in g[os..os + len]
                    .iter()
                    .zip(&xi[is..is + len])
                    .zip(&mut gxi[is..is + len])
                {
                    acc += gv * xv;
                    *gxv += w * gv;
                }
                gp.weights[wi] += acc;
            });
        }
    }
    Ok((gx, gp))
}
