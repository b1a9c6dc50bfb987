//! Binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "ATSU"
//! version      u32      currently 1
//! payload      u8       0 = float32 weights, 1 = int16 weights
//! reserved     3 bytes  zero
//! config_len   u32
//! config       config_len bytes of UTF-8 TOML
//! norm_mean    f64
//! norm_std     f64
//! [int16 only] input_exp i32
//! layers       u32
//! per layer:
//!   c_in u32, c_out u32, kt u32 (1 or 3)
//!   float32:  weights f32 x (c_out*c_in*3*kt), bias f32 x c_out
//!   int16:    w_exp i32, b_exp i32, out_exp i32,
//!             weights i16 x (c_out*c_in*3*kt), bias i16 x c_out
//! ```

use std::path::Path;

use super::config::ModelConfig;
use super::net::{layer_plan, Model};
use crate::dsp::Norm;
use crate::error::{Error, Result};
use crate::nn::{ConvKind, ConvParams};

pub const MAGIC: &[u8; 4] = b"ATSU";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payload {
    Float32 = 0,
    Int16 = 1,
}

pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new(payload: Payload, config: &ModelConfig, norm: Norm) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.buf.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.buf.extend_from_slice(&[payload as u8, 0, 0, 0]);
        let cfg = config.to_toml();
        w.u32(cfg.len() as u32);
        w.buf.extend_from_slice(cfg.as_bytes());
        w.f64(norm.mean);
        w.f64(norm.std);
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, v: &[f64]) {
        for x in v {
            self.buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }

    pub fn i16s(&mut self, v: &[i16]) {
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    pub fn layer_header(&mut self, c_in: usize, c_out: usize, kind: ConvKind) {
        self.u32(c_in as u32);
        self.u32(c_out as u32);
        self.u32(kind.kt() as u32);
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

/// Fields common to both payload kinds.
pub(crate) struct Header {
    pub payload: Payload,
    pub config: ModelConfig,
    pub norm: Norm,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::ModelFormat(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    pub fn i16s(&mut self, n: usize) -> Result<Vec<i16>> {
        Ok(self
            .take(n * 2)?
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn header(&mut self) -> Result<Header> {
        if self
            .take(4)
            .map_err(|_| Error::ModelFormat("file too short".into()))?
            != MAGIC
        {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let payload = match self.take(4)?[0] {
            0 => Payload::Float32,
            1 => Payload::Int16,
            p => return Err(Error::ModelFormat(format!("unknown payload kind {p}"))),
        };
        let n = self.u32()? as usize;
        let text = std::str::from_utf8(self.take(n)?)
            .map_err(|e| Error::ModelFormat(format!("config: {e}")))?;
        let config = ModelConfig::from_toml(text)?;
        let norm = Norm {
            mean: self.f64()?,
            std: self.f64()?,
        };
        if !(norm.std > 0.0) || !norm.mean.is_finite() {
            return Err(Error::ModelFormat(format!("bad normalization {norm:?}")));
        }
        Ok(Header {
            payload,
            config,
            norm,
        })
    }

    /// Reads a layer header and checks it against the expected plan entry.
    pub fn layer_header(&mut self, c_in: usize, c_out: usize, kind: ConvKind) -> Result<()> {
        let got = (
            self.u32()? as usize,
            self.u32()? as usize,
            self.u32()? as usize,
        );
        if got != (c_in, c_out, kind.kt()) {
            return Err(Error::ModelFormat(format!(
                "layer header {got:?} does not match config ({c_in}, {c_out}, {})",
                kind.kt()
            )));
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::ModelFormat(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Peeks at the payload kind of a serialized model.
pub fn payload_kind(bytes: &[u8]) -> Result<Payload> {
    Ok(Reader::new(bytes).header()?.payload)
}

pub fn encode_model(m: &Model) -> Vec<u8> {
    let mut w = Writer::new(Payload::Float32, &m.config, m.norm);
    w.u32(m.layers.len() as u32);
    for l in &m.layers {
        w.layer_header(l.c_in, l.c_out, l.kind);
        w.f32s(&l.weights);
        w.f32s(&l.bias);
    }
    w.buf
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes);
    let h = r.header()?;
    if h.payload != Payload::Float32 {
        return Err(Error::ModelFormat("file holds a quantized model".into()));
    }
    let plan = layer_plan(&h.config);
    if r.u32()? as usize != plan.len() {
        return Err(Error::ModelFormat(
            "layer count does not match config".into(),
        ));
    }
    let mut layers = Vec::with_capacity(plan.len());
    for spec in &plan {
        r.layer_header(spec.c_in, spec.c_out, spec.kind)?;
        let mut p = ConvParams::zeros(spec.c_in, spec.c_out, spec.kind);
        p.weights = r.f32s(p.weights.len())?;
        p.bias = r.f32s(p.bias.len())?;
        layers.push(p);
    }
    r.finish()?;
    Ok(Model {
        config: h.config,
        layers,
        norm: h.norm,
    })
}

/// Writes weights as little-endian f32. Values already representable in
/// f32 (fresh and loaded models, trained models after
/// [`Model::round_to_f32`]) round-trip bit for bit.
pub fn save_model(m: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_model(m))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    decode_model(&std::fs::read(path)?)
}

impl Model {
    /// Rounds every weight to the nearest f32, matching the file format.
    pub fn round_to_f32(&mut self) {
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .chain(l.bias.iter_mut())
                .for_each(|v| *v = *v as f32 as f64);
        }
    }
}
