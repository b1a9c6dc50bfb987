//! 16-bit PCM WAV I/O and streaming frame access.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono PCM signal with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument(
                "sample rate must be positive".into(),
            ));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Fails unless the buffer is at `rate` Hz. Resampling is not supported.
    pub fn ensure_rate(&self, rate: u32) -> Result<()> {
        if self.sample_rate != rate {
            return Err(Error::SampleRate(self.sample_rate, rate));
        }
        Ok(())
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

const FORMAT_PCM: u16 = 1;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct Format {
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Format> {
    if body.len() < 16 {
        return Err(Error::MalformedWav(format!(
            "fmt chunk too short ({} bytes)",
            body.len()
        )));
    }
    let mut code = le_u16(body, 0);
    let channels = le_u16(body, 2);
    let sample_rate = le_u32(body, 4);
    let bits = le_u16(body, 14);
    if code == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID.
        if body.len() < 26 {
            return Err(Error::MalformedWav(
                "truncated WAVE_FORMAT_EXTENSIBLE".into(),
            ));
        }
        code = le_u16(body, 24);
    }
    if code != FORMAT_PCM {
        return Err(Error::UnsupportedCodec(format!("format code {code:#06x}")));
    }
    if bits != 16 {
        return Err(Error::UnsupportedCodec(format!("{bits}-bit PCM")));
    }
    if channels == 0 {
        return Err(Error::MalformedWav("zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(Error::MalformedWav("zero sample rate".into()));
    }
    Ok(Format {
        channels,
        sample_rate,
        bits,
    })
}

/// Parses an in-memory RIFF/WAVE image.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedWav("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let start = pos + 8;
        // Writers that stream often leave the data size unset; clamp to what exists.
        let end = start.saturating_add(size).min(bytes.len());
        let body = &bytes[start..end];
        match id {
            b"fmt " => format = Some(parse_fmt(body)?),
            b"data" => {
                data = Some(body);
                if format.is_some() {
                    break;
                }
            }
            _ => {}
        }
        pos = start.saturating_add(size).saturating_add(size & 1);
    }
    let format = format.ok_or_else(|| Error::MalformedWav("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::MalformedWav("no data chunk".into()))?;
    let frame_bytes = format.channels as usize * (format.bits as usize / 8);
    let n_frames = data.len() / frame_bytes;
    if n_frames == 0 {
        return Err(Error::MalformedWav("empty data chunk".into()));
    }
    if format.channels > 1 {
        log::warn!("{}-channel wav: using channel 0 only", format.channels);
    }
    let samples = (0..n_frames)
        .map(|i| {
            let at = i * frame_bytes;
            i16::from_le_bytes([data[at], data[at + 1]]) as f64 / 32768.0
        })
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: format.sample_rate,
    })
}

/// Reads a 16-bit PCM WAV file. Multi-channel files yield channel 0.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    decode_wav(&fs::read(path)?)
}

/// Converts a sample to int16 with round-to-nearest and saturation.
pub fn to_i16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Serializes a buffer as a mono 16-bit PCM WAV image.
pub fn encode_wav(buf: &AudioBuffer) -> Vec<u8> {
    let data_len = (buf.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &buf.samples {
        out.extend_from_slice(&to_i16(s).to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<()> {
    if buf.samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(
            "cannot write non-finite samples".into(),
        ));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_wav(buf))?;
    Ok(())
}

/// Iterator over half-overlapped frames of a signal; the tail frames are
/// zero-padded to the full frame length.
#[derive(Debug, Clone)]
pub struct Frames<'a> {
    samples: &'a [f64],
    frame_len: usize,
    hop: usize,
    offset: usize,
}

impl<'a> Frames<'a> {
    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }
}

impl Iterator for Frames<'_> {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.offset >= self.samples.len() {
            return None;
        }
        let end = (self.offset + self.frame_len).min(self.samples.len());
        let mut frame = self.samples[self.offset..end].to_vec();
        frame.resize(self.frame_len, 0.0);
        self.offset += self.hop;
        Some(frame)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.samples.len().saturating_sub(self.offset);
        let n = left.div_ceil(self.hop);
        (n, Some(n))
    }
}

impl ExactSizeIterator for Frames<'_> {}

/// Number of frames `frame_stream` yields for `len` samples.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len.div_ceil(hop)
}

/// Splits a buffer into frames starting at every multiple of `hop`.
pub fn frame_stream(buf: &AudioBuffer, frame_len: usize, hop: usize) -> Result<Frames<'_>> {
    if frame_len == 0 || frame_len % 2 != 0 {
        return Err(Error::InvalidSize(format!(
            "frame length {frame_len} must be even and positive"
        )));
    }
    if hop != frame_len / 2 {
        return Err(Error::InvalidSize(format!(
            "hop {hop} must be half of frame length {frame_len}"
        )));
    }
    Ok(Frames {
        samples: &buf.samples,
        frame_len,
        hop,
        offset: 0,
    })
}
