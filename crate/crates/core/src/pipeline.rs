//! Streaming enhancement engine.
//!
//! Frames of 2048 samples arrive every 1024 samples. Each frame goes through
//! a 512-point STFT (hop 256), log power, normalization and the network with
//! the DC row bypassed. Predicted log power becomes magnitude `exp(v / 2)`,
//! recombined with the input phase and inverted. The resynthesized frame is
//! weighted by a periodic Hann window of length 2048 and overlap-added.
//!
//! Output is sample-aligned with the input: the k-th call to
//! [`StreamState::process_frame`] returns output samples
//! `k * 1024 .. (k + 1) * 1024`, which are complete once frame `k` is in.
//! The very first hop only receives one window contribution and fades in.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::audio::{frame_count, frame_stream, read_wav, write_wav, AudioBuffer};
use crate::dsp::{hann_window, log_power, Complex64, LogPowerFeatures, Norm, StftPlan, WindowKind};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::nn::Tensor;
use crate::quant::QuantizedModel;
use crate::{FFT_SIZE, FRAME_HOP, FRAME_LEN, LOG_FLOOR, N_BINS, N_COLS, SAMPLE_RATE, STFT_HOP};

/// Deadline for one frame in milliseconds (one hop at 16 kHz).
pub const FRAME_DEADLINE_MS: f64 = FRAME_HOP as f64 * 1000.0 / SAMPLE_RATE as f64;

/// Network used for inference.
#[derive(Debug, Clone)]
pub enum Engine {
    Float(Model),
    Quantized(QuantizedModel),
}

impl Engine {
    pub fn config(&self) -> &ModelConfig {
        match self {
            Engine::Float(m) => &m.config,
            Engine::Quantized(q) => &q.config,
        }
    }

    pub fn norm(&self) -> Norm {
        match self {
            Engine::Float(m) => m.norm,
            Engine::Quantized(q) => q.norm,
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, Engine::Quantized(_))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Engine::Float(m) => m.forward(x),
            Engine::Quantized(q) => q.forward(x),
        }
    }

    /// Loads a float or quantized model file, whichever it holds.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(match crate::model::payload_kind(&bytes)? {
            crate::model::Payload::Float32 => Engine::Float(crate::model::decode_model(&bytes)?),
            crate::model::Payload::Int16 => Engine::Quantized(QuantizedModel::decode(&bytes)?),
        })
    }
}

/// Wall-clock time of one frame's stages in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub pre_ms: f64,
    pub infer_ms: f64,
    pub post_ms: f64,
    pub total_ms: f64,
}

/// Enhances one 2048-sample frame, returning the resynthesized (unwindowed)
/// frame and the stage times.
pub fn enhance_frame(
    engine: &Engine,
    plan: &StftPlan,
    frame: &[f64],
) -> Result<(Vec<f64>, StageTimes)> {
    if frame.len() != FRAME_LEN {
        return Err(Error::InvalidSize(format!(
            "frame of {} samples, expected {FRAME_LEN}",
            frame.len()
        )));
    }
    let cfg = engine.config();
    if (cfg.input_bins, cfg.input_frames) != (N_BINS - 1, N_COLS) {
        return Err(Error::ShapeMismatch(format!(
            "model takes {}x{} features, frames give {}x{N_COLS}",
            cfg.input_bins,
            cfg.input_frames,
            N_BINS - 1
        )));
    }
    let norm = engine.norm();
    let t0 = Instant::now();
    let spec = plan.analyze(frame)?;
    let (body, dc) = log_power(&spec, LOG_FLOOR)?.split_dc();
    let body = body.normalize(norm.mean, norm.std)?;
    let x = Tensor::from_vec(
        crate::nn::Shape::new(1, body.n_bins, body.n_frames),
        body.values,
    )?;
    let t1 = Instant::now();
    let y = engine.infer(&x)?;
    let t2 = Instant::now();
    let s = y.shape();
    let out = LogPowerFeatures {
        values: y.into_data(),
        n_bins: s.f,
        n_frames: s.t,
        norm: Some(norm),
    }
    .denormalize()?
    .with_dc(&dc)?;
    let mut rebuilt = spec;
    for (b, v) in rebuilt.bins.iter_mut().zip(&out.values) {
        let mag = (v / 2.0).exp();
        let r = b.norm();
        // a bin with no input energy has no phase to reuse
        *b = if r > 0.0 {
            *b * (mag / r)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    let samples = plan.synthesize(&rebuilt)?;
    let t3 = Instant::now();
    let ms = |a: Instant, b: Instant| (b - a).as_nanos() as f64 / 1e6;
    Ok((
        samples,
        StageTimes {
            pre_ms: ms(t0, t1),
            infer_ms: ms(t1, t2),
            post_ms: ms(t2, t3),
            total_ms: ms(t0, t3),
        },
    ))
}

/// Per-stream state: pending input, the overlap tail and latency records.
#[derive(Debug)]
pub struct StreamState<'a> {
    engine: &'a Engine,
    plan: StftPlan,
    window: Vec<f64>,
    pending: Vec<f64>,
    tail: Vec<f64>,
    samples_in: usize,
    samples_out: usize,
    times: Vec<StageTimes>,
}

impl<'a> StreamState<'a> {
    pub fn new(engine: &'a Engine) -> Result<Self> {
        Ok(Self {
            engine,
            plan: StftPlan::new(FFT_SIZE, STFT_HOP, WindowKind::Hann)?,
            window: hann_window(FRAME_LEN, true)?,
            pending: Vec::with_capacity(2 * FRAME_LEN),
            tail: vec![0.0; FRAME_HOP],
            samples_in: 0,
            samples_out: 0,
            times: Vec::new(),
        })
    }

    /// Processes the next frame (it must start one hop after the previous
    /// one) and returns the 1024 completed output samples.
    pub fn process_frame(&mut self, frame: &[f64]) -> Result<Vec<f64>> {
        let (y, t) = enhance_frame(self.engine, &self.plan, frame)?;
        let mut out = Vec::with_capacity(FRAME_HOP);
        for i in 0..FRAME_HOP {
            out.push(self.tail[i] + y[i] * self.window[i]);
        }
        for i in 0..FRAME_HOP {
            self.tail[i] = y[FRAME_HOP + i] * self.window[FRAME_HOP + i];
        }
        self.samples_out += FRAME_HOP;
        self.times.push(t);
        Ok(out)
    }

    /// Feeds arbitrary-sized input and returns whatever output completed.
    pub fn push(&mut self, samples: &[f64]) -> Result<Vec<f64>> {
        self.samples_in += samples.len();
        self.pending.extend_from_slice(samples);
        let mut out = Vec::new();
        while self.pending.len() >= FRAME_LEN {
            let frame: Vec<f64> = self.pending[..FRAME_LEN].to_vec();
            out.extend(self.process_frame(&frame)?);
            self.pending.drain(..FRAME_HOP);
        }
        Ok(out)
    }

    /// Flushes the remaining input with zero padding. Together with all
    /// previous `push` output this yields exactly as many samples as were
    /// pushed.
    pub fn finish(&mut self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        while self.samples_out < frame_count(self.samples_in, FRAME_HOP) * FRAME_HOP {
            let mut frame = vec![0.0; FRAME_LEN];
            let n = self.pending.len().min(FRAME_LEN);
            frame[..n].copy_from_slice(&self.pending[..n]);
            out.extend(self.process_frame(&frame)?);
            let d = self.pending.len().min(FRAME_HOP);
            self.pending.drain(..d);
        }
        let excess = self.samples_out - self.samples_in;
        out.truncate(out.len().saturating_sub(excess));
        self.samples_out = self.samples_in;
        Ok(out)
    }

    pub fn times(&self) -> &[StageTimes] {
        &self.times
    }

    pub fn report(&self) -> LatencyReport {
        LatencyReport {
            frames: self.times.clone(),
        }
    }

    /// Bytes held by the internal buffers, excluding the timing log.
    pub fn buffer_bytes(&self) -> usize {
        (self.pending.capacity() + self.tail.capacity() + self.window.capacity())
            * std::mem::size_of::<f64>()
    }
}

/// Per-frame timing summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LatencyReport {
    pub frames: Vec<StageTimes>,
}

impl LatencyReport {
    pub fn mean_total_ms(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.frames.iter().map(|t| t.total_ms).sum::<f64>() / self.frames.len() as f64
    }

    /// Nearest-rank 95th percentile of the per-frame total.
    pub fn p95_total_ms(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        let mut v: Vec<f64> = self.frames.iter().map(|t| t.total_ms).collect();
        v.sort_by(f64::total_cmp);
        let rank = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len());
        v[rank - 1]
    }

    /// Mean frame time over the 64 ms hop; below 1 means faster than real time.
    pub fn real_time_factor(&self) -> f64 {
        self.mean_total_ms() / FRAME_DEADLINE_MS
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "frame_index,pre_ms,infer_ms,post_ms,total_ms")?;
        for (i, t) in self.frames.iter().enumerate() {
            writeln!(
                w,
                "{i},{:.3},{:.3},{:.3},{:.3}",
                t.pre_ms, t.infer_ms, t.post_ms, t.total_ms
            )?;
        }
        writeln!(
            w,
            "# frames={} mean_ms={:.3} p95_ms={:.3} rtf={:.5}",
            self.frames.len(),
            self.mean_total_ms(),
            self.p95_total_ms(),
            self.real_time_factor()
        )?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Enhances a whole buffer through the streaming engine. The output has the
/// input's length.
pub fn process_buffer(
    engine: &Engine,
    input: &AudioBuffer,
) -> Result<(AudioBuffer, LatencyReport)> {
    input.ensure_rate(SAMPLE_RATE)?;
    let mut state = StreamState::new(engine)?;
    let mut out = state.push(&input.samples)?;
    out.extend(state.finish()?);
    Ok((
        AudioBuffer {
            samples: out,
            sample_rate: SAMPLE_RATE,
        },
        state.report(),
    ))
}

/// Reads a WAV, enhances it and writes the result.
pub fn process_file(
    engine: &Engine,
    in_path: impl AsRef<Path>,
    out_path: impl AsRef<Path>,
) -> Result<LatencyReport> {
    let input = read_wav(in_path)?;
    let (out, report) = process_buffer(engine, &input)?;
    write_wav(out_path, &out)?;
    Ok(report)
}

/// Runs each frame of `input` through `process_frame` in order and
/// concatenates the outputs, truncated to the input length.
pub fn process_frames(engine: &Engine, input: &AudioBuffer) -> Result<AudioBuffer> {
    let mut state = StreamState::new(engine)?;
    let mut out = Vec::with_capacity(input.len() + FRAME_HOP);
    for frame in frame_stream(input, FRAME_LEN, FRAME_HOP)? {
        out.extend(state.process_frame(&frame)?);
    }
    out.truncate(input.len());
    Ok(AudioBuffer {
        samples: out,
        sample_rate: input.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::train::synth_utterance;
    use rand::SeedableRng;

    fn identity() -> Engine {
        let mut m = Model::passthrough(ModelConfig::for_variant(Variant::Ats)).unwrap();
        m.norm = Norm {
            mean: -6.0,
            std: 4.0,
        };
        Engine::Float(m)
    }

    fn speech(seed: u64, secs: f64) -> AudioBuffer {
        synth_utterance(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), secs)
    }

    #[test]
    fn identity_model_reproduces_input() {
        let x = speech(1, 1.0);
        let (y, _) = process_buffer(&identity(), &x).unwrap();
        assert_eq!(y.len(), x.len());
        let (a, b) = (
            &x.samples[FRAME_HOP..x.len() - FRAME_LEN],
            &y.samples[FRAME_HOP..x.len() - FRAME_LEN],
        );
        let err: f64 = a
            .iter()
            .zip(b)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        let sig: f64 = a.iter().map(|p| p * p).sum::<f64>().sqrt();
        assert!(err / sig < 1e-3, "relative error {}", err / sig);
    }

    #[test]
    fn silence_stays_silent() {
        let x = AudioBuffer::silence(8000, SAMPLE_RATE);
        let m = Model::seeded(ModelConfig::for_variant(Variant::Ats), 2).unwrap();
        let (y, _) = process_buffer(&Engine::Float(m), &x).unwrap();
        let peak = y.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak == 0.0 || 20.0 * peak.log10() < -80.0, "peak {peak}");
    }

    #[test]
    fn stage_times_add_up() {
        let (_, report) = process_buffer(&identity(), &speech(3, 0.5)).unwrap();
        assert!(!report.frames.is_empty());
        for t in &report.frames {
            assert!((t.pre_ms + t.infer_ms + t.post_ms - t.total_ms).abs() < 1e-3);
        }
        assert!(
            report.p95_total_ms()
                >= report
                    .frames
                    .iter()
                    .map(|t| t.total_ms)
                    .fold(f64::INFINITY, f64::min)
        );
    }

    #[test]
    fn stream_matches_frame_loop_bitwise() {
        let engine =
            Engine::Float(Model::seeded(ModelConfig::for_variant(Variant::Ats), 4).unwrap());
        for len in [1, 1023, 1024, 2048, 5000, 16000] {
            let x = AudioBuffer {
                samples: speech(5, 1.0).samples[..len].to_vec(),
                sample_rate: SAMPLE_RATE,
            };
            let (a, _) = process_buffer(&engine, &x).unwrap();
            let b = process_frames(&engine, &x).unwrap();
            assert_eq!(a.len(), len);
            assert!(a
                .samples
                .iter()
                .zip(&b.samples)
                .all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn chunked_pushes_match_one_push() {
        let engine = identity();
        let x = speech(6, 0.7);
        let mut state = StreamState::new(&engine).unwrap();
        let mut out = Vec::new();
        for chunk in x.samples.chunks(333) {
            out.extend(state.push(chunk).unwrap());
        }
        out.extend(state.finish().unwrap());
        let (whole, _) = process_buffer(&engine, &x).unwrap();
        assert_eq!(out, whole.samples);
    }

    #[test]
    fn buffers_do_not_grow() {
        let engine = identity();
        let x = speech(7, 2.0);
        let mut state = StreamState::new(&engine).unwrap();
        state.push(&x.samples[..4096]).unwrap();
        let warm = state.buffer_bytes();
        for chunk in x.samples[4096..].chunks(FRAME_HOP) {
            state.push(chunk).unwrap();
            assert_eq!(state.buffer_bytes(), warm);
        }
    }

    #[test]
    fn ten_seconds_in_ten_seconds_out() {
        let dir = tempfile::tempdir().unwrap();
        let x = AudioBuffer::new(speech(8, 10.0).samples, SAMPLE_RATE).unwrap();
        write_wav(dir.path().join("in.wav"), &x).unwrap();
        let engine =
            Engine::Float(Model::seeded(ModelConfig::for_variant(Variant::Ats), 9).unwrap());
        let report = process_file(
            &engine,
            dir.path().join("in.wav"),
            dir.path().join("out.wav"),
        )
        .unwrap();
        let y = read_wav(dir.path().join("out.wav")).unwrap();
        assert_eq!(y.len(), 160_000);
        assert_eq!(report.frames.len(), frame_count(160_000, FRAME_HOP));
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("frame_index,pre_ms,infer_ms,post_ms,total_ms\n0,"));
        assert!(text.contains("# frames=157"));
    }

    #[test]
    fn rejects_other_rates_and_bad_frames() {
        let engine = identity();
        let x = AudioBuffer::new(vec![0.1; 4000], 8000).unwrap();
        assert!(matches!(
            process_buffer(&engine, &x),
            Err(Error::SampleRate(..))
        ));
        let mut state = StreamState::new(&engine).unwrap();
        assert!(state.process_frame(&[0.0; 100]).is_err());
    }
}
