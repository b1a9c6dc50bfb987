//! Power-of-two int16 quantization and integer inference.
//!
//! A real array `x` is stored as `q = floor(x * 2^e)` clamped to the int16
//! range, with `e = 15 - ceil(log2 max|x|)`. Every scale is a power of two,
//! so moving between scales is an arithmetic shift. Exactly representable
//! maxima such as `0.5` map to `2^15`, which does not fit and is clamped to
//! `32767`.
//!
//! Convolutions accumulate `i16 x i16` products in `i64`. For the layer
//! sizes accepted here (checked on construction) the sum cannot overflow;
//! the result is then shifted right by `e_in + e_w - e_out` (floor) and
//! saturated into int16.

use std::path::Path;

use crate::dsp::{LogPowerFeatures, Norm};
use crate::error::{Error, Result};
use crate::model::io::{Payload, Reader, Writer};
use crate::model::{layer_plan, Model, ModelConfig};
use crate::nn::{self, ConvKind, Shape, Tensor, KF};

/// Exponent that maps `max_abs` into `(2^14, 2^15]`; 0 for a zero maximum.
pub fn exponent_for(max_abs: f64) -> i32 {
    if !(max_abs > 0.0) || !max_abs.is_finite() {
        return 0;
    }
    let mut e = 15 - max_abs.log2().ceil() as i32;
    // guard against log2 rounding near powers of two
    while max_abs * 2f64.powi(e) > 32768.0 {
        e -= 1;
    }
    while max_abs * 2f64.powi(e + 1) <= 32768.0 {
        e += 1;
    }
    e
}

/// `floor(x * 2^e)` saturated into int16.
pub fn quantize_with(x: &[f64], e: i32) -> Vec<i16> {
    let s = 2f64.powi(e);
    x.iter()
        .map(|v| (v * s).floor().clamp(i16::MIN as f64, i16::MAX as f64) as i16)
        .collect()
}

/// Quantizes with the exponent chosen from the array's own maximum.
pub fn quantize_array(x: &[f64]) -> (Vec<i16>, i32) {
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let e = exponent_for(max);
    (quantize_with(x, e), e)
}

pub fn dequantize(q: &[i16], e: i32) -> Vec<f64> {
    let s = 2f64.powi(-e);
    q.iter().map(|&v| v as f64 * s).collect()
}

/// Arithmetic shift by `s` (right when positive, left when negative),
/// saturating on left shifts.
#[inline]
fn shift_i64(v: i64, s: i32) -> i64 {
    if s >= 0 {
        if s >= 63 {
            if v < 0 {
                -1
            } else {
                0
            }
        } else {
            v >> s
        }
    } else {
        let l = (-s) as u32;
        if l >= 63 {
            return if v > 0 {
                i64::MAX
            } else if v < 0 {
                i64::MIN
            } else {
                0
            };
        }
        v.checked_mul(1i64 << l)
            .unwrap_or(if v > 0 { i64::MAX } else { i64::MIN })
    }
}

#[inline]
fn saturate(v: i64) -> i16 {
    v.clamp(i16::MIN as i64, i16::MAX as i64) as i16
}

/// Integer feature map with a shared power-of-two exponent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTensor {
    pub shape: Shape,
    pub data: Vec<i16>,
    pub exp: i32,
}

impl QTensor {
    pub fn from_tensor(x: &Tensor, exp: i32) -> Self {
        Self {
            shape: x.shape(),
            data: quantize_with(x.data(), exp),
            exp,
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.shape, dequantize(&self.data, self.exp)).expect("shape matches data")
    }

    /// Re-expresses the values at a smaller exponent (right shift).
    fn rescale_down(&self, exp: i32) -> Self {
        let s = self.exp - exp;
        Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|&v| saturate(shift_i64(v as i64, s)))
                .collect(),
            exp,
        }
    }
}

/// One quantized convolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantLayer {
    pub c_in: usize,
    pub c_out: usize,
    pub kind: ConvKind,
    pub weights: Vec<i16>,
    pub bias: Vec<i16>,
    pub w_exp: i32,
    pub b_exp: i32,
    /// Exponent of the layer's output activations.
    pub out_exp: i32,
}

impl QuantLayer {
    fn weight_index(&self, co: usize, ci: usize, df: usize, dt: usize) -> usize {
        ((co * self.c_in + ci) * KF + df) * self.kind.kt() + dt
    }

    fn check(&self) -> Result<()> {
        let taps = self.c_in * KF * self.kind.kt();
        if self.weights.len() != self.c_out * taps || self.bias.len() != self.c_out {
            return Err(Error::ShapeMismatch(
                "quantized layer arrays do not match its shape".into(),
            ));
        }
        // |sum| <= taps * 2^30 + shifted bias; keep well inside i64
        if taps > 1 << 24 {
            return Err(Error::InvalidSize(format!(
                "{taps} taps per output exceed the accumulator budget"
            )));
        }
        Ok(())
    }
}

/// Same-padded integer convolution, optional ReLU, output at `layer.out_exp`.
pub fn conv_i16(x: &QTensor, layer: &QuantLayer, relu: bool) -> Result<QTensor> {
    if x.shape.c != layer.c_in {
        return Err(Error::ShapeMismatch(format!(
            "conv expects {} channels, got {}",
            layer.c_in, x.shape.c
        )));
    }
    let s = x.shape;
    let plane = s.plane();
    let acc_exp = x.exp + layer.w_exp;
    let shift = acc_exp - layer.out_exp;
    let mut acc = vec![0i64; plane];
    let mut out = vec![0i16; layer.c_out * plane];
    for co in 0..layer.c_out {
        acc.fill(shift_i64(layer.bias[co] as i64, layer.b_exp - acc_exp));
        for ci in 0..layer.c_in {
            let xi = &x.data[ci * plane..(ci + 1) * plane];
            nn::for_each_run(s.f, s.t, layer.kind, |df, dt, os, is, len| {
                let w = layer.weights[layer.weight_index(co, ci, df, dt)] as i64;
                for (a, &v) in acc[os..os + len].iter_mut().zip(&xi[is..is + len]) {
                    *a += w * v as i64;
                }
            });
        }
        for (o, &a) in out[co * plane..(co + 1) * plane].iter_mut().zip(&acc) {
            let q = saturate(shift_i64(a, shift));
            *o = if relu { q.max(0) } else { q };
        }
    }
    Ok(QTensor {
        shape: Shape::new(layer.c_out, s.f, s.t),
        data: out,
        exp: layer.out_exp,
    })
}

fn maxpool_i16(x: &QTensor) -> Result<QTensor> {
    let s = x.shape;
    if s.f % 2 != 0 {
        return Err(Error::InvalidSize(format!(
            "max-pool needs an even frequency extent, got {}",
            s.f
        )));
    }
    let os = Shape::new(s.c, s.f / 2, s.t);
    let mut data = vec![0i16; os.len()];
    for c in 0..s.c {
        for f in 0..os.f {
            let lo = (c * s.f + 2 * f) * s.t;
            let o = (c * os.f + f) * s.t;
            for t in 0..s.t {
                data[o + t] = x.data[lo + t].max(x.data[lo + s.t + t]);
            }
        }
    }
    Ok(QTensor {
        shape: os,
        data,
        exp: x.exp,
    })
}

fn upsample_i16(x: &QTensor) -> QTensor {
    let s = x.shape;
    let mut data = vec![0i16; 2 * s.len()];
    for row in 0..s.c * s.f {
        let src = &x.data[row * s.t..(row + 1) * s.t];
        data[2 * row * s.t..(2 * row + 1) * s.t].copy_from_slice(src);
        data[(2 * row + 1) * s.t..(2 * row + 2) * s.t].copy_from_slice(src);
    }
    QTensor {
        shape: Shape::new(s.c, 2 * s.f, s.t),
        data,
        exp: x.exp,
    }
}

/// Channel concatenation at the smaller of the two exponents.
fn concat_i16(a: &QTensor, b: &QTensor) -> Result<QTensor> {
    if (a.shape.f, a.shape.t) != (b.shape.f, b.shape.t) {
        return Err(Error::ShapeMismatch(format!(
            "concat {} with {}",
            a.shape, b.shape
        )));
    }
    let exp = a.exp.min(b.exp);
    let (a, b) = (a.rescale_down(exp), b.rescale_down(exp));
    let mut data = a.data;
    data.extend_from_slice(&b.data);
    Ok(QTensor {
        shape: Shape::new(a.shape.c + b.shape.c, a.shape.f, a.shape.t),
        data,
        exp,
    })
}

/// Integer-only version of a [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub config: ModelConfig,
    pub norm: Norm,
    pub input_exp: i32,
    pub layers: Vec<QuantLayer>,
}

/// Calibrates activation exponents on `calibration` (normalized 256x9
/// feature grids without the DC row) and quantizes every layer.
pub fn quantize_model(m: &Model, calibration: &[LogPowerFeatures]) -> Result<QuantizedModel> {
    if calibration.is_empty() {
        return Err(Error::Empty("calibration set".into()));
    }
    let shape = m.input_shape();
    let mut in_max = 0.0f64;
    let mut act_max = vec![0.0f64; m.layers.len()];
    for f in calibration {
        let x = Tensor::from_vec(shape, f.values.clone())?;
        in_max = x.data().iter().fold(in_max, |a, v| a.max(v.abs()));
        m.forward_observed(&x, &mut |layer, y| {
            act_max[layer] = y.data().iter().fold(act_max[layer], |a, v| a.max(v.abs()));
        })?;
    }
    let layers = m
        .layers
        .iter()
        .zip(&act_max)
        .map(|(p, &amax)| {
            let (weights, w_exp) = quantize_array(&p.weights);
            let (bias, b_exp) = quantize_array(&p.bias);
            let l = QuantLayer {
                c_in: p.c_in,
                c_out: p.c_out,
                kind: p.kind,
                weights,
                bias,
                w_exp,
                b_exp,
                out_exp: exponent_for(amax),
            };
            l.check()?;
            Ok(l)
        })
        .collect::<Result<_>>()?;
    Ok(QuantizedModel {
        config: m.config.clone(),
        norm: m.norm,
        input_exp: exponent_for(in_max),
        layers,
    })
}

impl QuantizedModel {
    pub fn input_shape(&self) -> Shape {
        Shape::new(1, self.config.input_bins, self.config.input_frames)
    }

    /// Integer forward pass; mirrors the float network layer for layer.
    pub fn forward_q(&self, x: &QTensor) -> Result<QTensor> {
        if x.shape != self.input_shape() {
            return Err(Error::ShapeMismatch(format!(
                "model input {} expected {}",
                x.shape,
                self.input_shape()
            )));
        }
        let depth = self.config.depth();
        let shift = self.config.variant.uses_shift();
        let frac = self.config.shift_fraction;
        let n = self.layers.len();
        let mut layer = 0usize;
        let mut apply = |h: &QTensor| {
            let y = conv_i16(h, &self.layers[layer], layer + 1 < n);
            layer += 1;
            y
        };
        let atsm = |h: QTensor| -> Result<QTensor> {
            if !shift {
                return Ok(h);
            }
            let s = h.shape;
            Ok(QTensor {
                data: nn::atsm_i16(&h.data, s.c, s.f, s.t, frac)?,
                ..h
            })
        };
        let mut h = apply(x)?;
        h = apply(&h)?;
        let mut skips = vec![h.clone()];
        for _ in 1..=depth {
            h = apply(&maxpool_i16(&h)?)?;
            h = atsm(apply(&h)?)?;
            skips.push(h.clone());
        }
        for k in 1..=depth {
            h = apply(&concat_i16(&upsample_i16(&h), &skips[depth - k])?)?;
            h = atsm(apply(&h)?)?;
        }
        apply(&h)
    }

    /// Quantizes a float input at the calibrated exponent, runs the integer
    /// network and dequantizes the result.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self
            .forward_q(&QTensor::from_tensor(x, self.input_exp))?
            .to_tensor())
    }

    /// Feature-level entry point matching [`Model::forward_features`].
    pub fn forward_quantized(&self, f: &LogPowerFeatures) -> Result<LogPowerFeatures> {
        let shape = self.input_shape();
        if f.shape() != (shape.f, shape.t) {
            return Err(Error::ShapeMismatch(format!(
                "features {}x{} expected {}x{}",
                f.n_bins, f.n_frames, shape.f, shape.t
            )));
        }
        let y = self.forward(&Tensor::from_vec(shape, f.values.clone())?)?;
        Ok(LogPowerFeatures {
            values: y.into_data(),
            n_bins: shape.f,
            n_frames: shape.t,
            norm: f.norm,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new(Payload::Int16, &self.config, self.norm);
        w.i32(self.input_exp);
        w.u32(self.layers.len() as u32);
        for l in &self.layers {
            w.layer_header(l.c_in, l.c_out, l.kind);
            w.i32(l.w_exp);
            w.i32(l.b_exp);
            w.i32(l.out_exp);
            w.i16s(&l.weights);
            w.i16s(&l.bias);
        }
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let h = r.header()?;
        if h.payload != Payload::Int16 {
            return Err(Error::ModelFormat("file holds a float model".into()));
        }
        let input_exp = r.i32()?;
        let plan = layer_plan(&h.config);
        if r.u32()? as usize != plan.len() {
            return Err(Error::ModelFormat(
                "layer count does not match config".into(),
            ));
        }
        let mut layers = Vec::with_capacity(plan.len());
        for spec in &plan {
            r.layer_header(spec.c_in, spec.c_out, spec.kind)?;
            let (w_exp, b_exp, out_exp) = (r.i32()?, r.i32()?, r.i32()?);
            let weights = r.i16s(spec.c_out * spec.c_in * KF * spec.kind.kt())?;
            let bias = r.i16s(spec.c_out)?;
            let l = QuantLayer {
                c_in: spec.c_in,
                c_out: spec.c_out,
                kind: spec.kind,
                weights,
                bias,
                w_exp,
                b_exp,
                out_exp,
            };
            l.check()?;
            layers.push(l);
        }
        r.finish()?;
        Ok(Self {
            config: h.config,
            norm: h.norm,
            input_exp,
            layers,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::snr_db;
    use crate::model::Variant;
    use crate::nn::ConvParams;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn hand_computed_values() {
        assert_eq!(
            quantize_array(&[0.25, -0.5, 0.75]),
            (vec![8192, -16384, 24576], 15)
        );
        assert_eq!(quantize_array(&[0.5]), (vec![32767], 16));
        assert_eq!(quantize_array(&[0.0, 0.0]), (vec![0, 0], 0));
        assert_eq!(quantize_array(&[-1.0]), (vec![-32768], 15));
    }

    proptest! {
        #[test]
        fn error_within_one_step(v in proptest::collection::vec(-100.0f64..100.0, 1..64)) {
            let (q, e) = quantize_array(&v);
            let step = 2f64.powi(-e);
            let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!(max * 2f64.powi(e) <= 32768.0 && max * 2f64.powi(e + 1) > 32768.0 || max == 0.0);
            for (x, d) in v.iter().zip(dequantize(&q, e)) {
                prop_assert!((x - d).abs() <= step + 1e-15);
            }
        }

        #[test]
        fn doubling_lowers_exponent_by_one(v in proptest::collection::vec(-4.0f64..4.0, 1..32)) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
            let doubled: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
            prop_assert_eq!(quantize_array(&doubled).1, quantize_array(&v).1 - 1);
        }
    }

    fn random_features(seed: u64, n: usize, scale: f64) -> Vec<LogPowerFeatures> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v = (0..256 * 9)
                    .map(|_| scale * rng.gen_range(-2.0..2.0))
                    .collect();
                LogPowerFeatures::new(v, 256, 9).unwrap()
            })
            .collect()
    }

    fn trained_like(variant: Variant, seed: u64) -> Model {
        let mut m = Model::seeded(ModelConfig::for_variant(variant), seed).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + 1);
        for l in &mut m.layers {
            l.bias
                .iter_mut()
                .for_each(|b| *b = rng.gen_range(-0.1..0.1));
        }
        m
    }

    #[test]
    fn unit_range_weights_get_exponent_15() {
        let mut m = Model::seeded(ModelConfig::for_variant(Variant::Ats), 1).unwrap();
        for l in &mut m.layers {
            l.weights.iter_mut().for_each(|w| *w = w.clamp(-0.99, 0.99));
            l.weights[0] = 0.9;
        }
        let q = quantize_model(&m, &random_features(2, 1, 1.0)).unwrap();
        assert!(q.layers.iter().all(|l| l.w_exp == 15));
    }

    #[test]
    fn doubling_a_layer() {
        let m = trained_like(Variant::Ats, 3);
        let mut m2 = m.clone();
        m2.layers[4].weights.iter_mut().for_each(|w| *w *= 2.0);
        let cal = random_features(4, 2, 1.0);
        let (a, b) = (
            quantize_model(&m, &cal).unwrap(),
            quantize_model(&m2, &cal).unwrap(),
        );
        assert_eq!(b.layers[4].w_exp, a.layers[4].w_exp - 1);
    }

    #[test]
    fn larger_calibration_never_raises_exponents() {
        let m = trained_like(Variant::Ats, 5);
        let small = random_features(6, 2, 1.0);
        let mut big = small.clone();
        big.extend(random_features(7, 2, 3.0));
        let (a, b) = (
            quantize_model(&m, &small).unwrap(),
            quantize_model(&m, &big).unwrap(),
        );
        assert!(b.input_exp <= a.input_exp);
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert!(lb.out_exp <= la.out_exp);
        }
    }

    #[test]
    fn identity_conv_within_one_lsb() {
        let mut p = ConvParams::zeros(1, 1, ConvKind::TwoD);
        p.set_identity_tap(0, 0, 1.0);
        let (weights, w_exp) = quantize_array(&p.weights);
        let layer = QuantLayer {
            c_in: 1,
            c_out: 1,
            kind: ConvKind::TwoD,
            weights,
            bias: vec![0],
            w_exp,
            b_exp: 0,
            out_exp: 12,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let x = QTensor {
            shape: Shape::new(1, 16, 9),
            data: (0..144).map(|_| rng.gen_range(-30000..30000)).collect(),
            exp: 12,
        };
        let y = conv_i16(&x, &layer, false).unwrap();
        for (a, b) in x.data.iter().zip(&y.data) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    #[test]
    fn accumulator_saturates() {
        let layer = QuantLayer {
            c_in: 1,
            c_out: 1,
            kind: ConvKind::OneD,
            weights: vec![32767; 3],
            bias: vec![0],
            w_exp: 0,
            b_exp: 0,
            out_exp: 0,
        };
        let x = QTensor {
            shape: Shape::new(1, 4, 1),
            data: vec![32767; 4],
            exp: 0,
        };
        assert!(conv_i16(&x, &layer, false)
            .unwrap()
            .data
            .iter()
            .all(|&v| v == i16::MAX));
    }

    #[test]
    fn float_agreement_every_variant() {
        for (i, v) in Variant::ALL.iter().enumerate() {
            let m = trained_like(*v, 10 + i as u64);
            let cal = random_features(20, 4, 1.0);
            let q = quantize_model(&m, &cal).unwrap();
            for f in random_features(30, 2, 1.0) {
                let a = m.forward_features(&f).unwrap();
                let b = q.forward_quantized(&f).unwrap();
                let snr = snr_db(&a.values, &b.values).unwrap();
                assert!(snr >= 40.0, "{v:?}: {snr} dB");
            }
        }
    }

    #[test]
    fn one_bit_less_costs_at_most_six_db() {
        let m = trained_like(Variant::Ats, 40);
        let cal = random_features(41, 4, 1.0);
        let q = quantize_model(&m, &cal).unwrap();
        let mut coarse = q.clone();
        coarse.input_exp -= 1;
        coarse.layers.iter_mut().for_each(|l| l.out_exp -= 1);
        let (mut fine_err, mut coarse_err, mut sig) = (0.0, 0.0, 0.0);
        for f in random_features(42, 8, 1.0) {
            let a = m.forward_features(&f).unwrap();
            let b = q.forward_quantized(&f).unwrap();
            let c = coarse.forward_quantized(&f).unwrap();
            for ((x, y), z) in a.values.iter().zip(&b.values).zip(&c.values) {
                sig += x * x;
                fine_err += (x - y).powi(2);
                coarse_err += (x - z).powi(2);
            }
        }
        let (s1, s2) = (
            10.0 * (sig / fine_err).log10(),
            10.0 * (sig / coarse_err).log10(),
        );
        assert!(s1 - s2 <= 6.03, "{s1} -> {s2}");
    }

    #[test]
    fn deterministic_and_round_trips() {
        let m = trained_like(Variant::Hybrid, 50);
        let q = quantize_model(&m, &random_features(51, 2, 1.0)).unwrap();
        let x = QTensor::from_tensor(
            &Tensor::from_vec(
                Shape::new(1, 256, 9),
                random_features(52, 1, 1.0)[0].values.clone(),
            )
            .unwrap(),
            q.input_exp,
        );
        assert_eq!(q.forward_q(&x).unwrap(), q.forward_q(&x).unwrap());
        let back = QuantizedModel::decode(&q.encode()).unwrap();
        assert_eq!(back, q);
        assert!(crate::model::decode_model(&q.encode()).is_err());
        assert!(QuantizedModel::decode(&crate::model::encode_model(&m)).is_err());
        assert!(quantize_model(&m, &[]).is_err());
    }
}
