//! Signal processing front and back end: windows, FFT, centered STFT/ISTFT,
//! log-power features, mel filterbank and Hann overlap-add.

mod fft;
mod mel;
mod window;

pub use fft::{fft, FftPlan};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use rustfft::num_complex::Complex64;
pub use window::{blackman_window, hann_window, WindowKind};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Complex STFT grid, stored bin-major: `bins[f * n_frames + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: Vec<Complex64>,
    pub n_bins: usize,
    pub n_frames: usize,
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Spectrogram {
    pub fn zeros(fft_size: usize, hop: usize, n_frames: usize, window: WindowKind) -> Self {
        let n_bins = fft_size / 2 + 1;
        Self {
            bins: vec![Complex64::new(0.0, 0.0); n_bins * n_frames],
            n_bins,
            n_frames,
            fft_size,
            hop,
            window,
        }
    }

    pub fn at(&self, f: usize, t: usize) -> Complex64 {
        self.bins[f * self.n_frames + t]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_bins, self.n_frames)
    }
}

/// Per-feature standardization constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norm {
    pub mean: f64,
    pub std: f64,
}

/// Real log-power grid with the same layout as [`Spectrogram`].
/// `norm` is set while the values are standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPowerFeatures {
    pub values: Vec<f64>,
    pub n_bins: usize,
    pub n_frames: usize,
    pub norm: Option<Norm>,
}

impl LogPowerFeatures {
    pub fn new(values: Vec<f64>, n_bins: usize, n_frames: usize) -> Result<Self> {
        if values.len() != n_bins * n_frames {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n_bins}x{n_frames} grid",
                values.len()
            )));
        }
        Ok(Self {
            values,
            n_bins,
            n_frames,
            norm: None,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_bins, self.n_frames)
    }

    pub fn row(&self, f: usize) -> &[f64] {
        &self.values[f * self.n_frames..(f + 1) * self.n_frames]
    }

    /// `(v - mean) / std` elementwise.
    pub fn normalize(&self, mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) || !std.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "normalization std must be > 0, got {std}"
            )));
        }
        let inv = 1.0 / std;
        Ok(Self {
            values: self.values.iter().map(|v| (v - mean) * inv).collect(),
            n_bins: self.n_bins,
            n_frames: self.n_frames,
            norm: Some(Norm { mean, std }),
        })
    }

    /// Inverse of [`normalize`](Self::normalize) using the stored constants.
    pub fn denormalize(&self) -> Result<Self> {
        let norm = self
            .norm
            .ok_or_else(|| Error::InvalidArgument("features are not normalized".into()))?;
        Ok(Self {
            values: self
                .values
                .iter()
                .map(|v| v * norm.std + norm.mean)
                .collect(),
            n_bins: self.n_bins,
            n_frames: self.n_frames,
            norm: None,
        })
    }

    /// Splits off the DC row, returning the remaining rows and the DC values.
    pub fn split_dc(&self) -> (Self, Vec<f64>) {
        let t = self.n_frames;
        (
            Self {
                values: self.values[t..].to_vec(),
                n_bins: self.n_bins - 1,
                n_frames: t,
                norm: self.norm,
            },
            self.values[..t].to_vec(),
        )
    }

    /// Prepends a DC row.
    pub fn with_dc(&self, dc: &[f64]) -> Result<Self> {
        if dc.len() != self.n_frames {
            return Err(Error::ShapeMismatch(format!(
                "DC row has {} values, expected {}",
                dc.len(),
                self.n_frames
            )));
        }
        let mut values = Vec::with_capacity(self.values.len() + dc.len());
        values.extend_from_slice(dc);
        values.extend_from_slice(&self.values);
        Ok(Self {
            values,
            n_bins: self.n_bins + 1,
            n_frames: self.n_frames,
            norm: self.norm,
        })
    }
}

/// Centered STFT with reflect padding, plus the matching ISTFT.
#[derive(Debug, Clone)]
pub struct StftPlan {
    fft: FftPlan,
    hop: usize,
    window: Vec<f64>,
    kind: WindowKind,
}

impl StftPlan {
    pub fn new(fft_size: usize, hop: usize, kind: WindowKind) -> Result<Self> {
        let fft = FftPlan::new(fft_size)?;
        if hop == 0 || hop > fft_size {
            return Err(Error::InvalidSize(format!(
                "hop {hop} for fft size {fft_size}"
            )));
        }
        Ok(Self {
            fft,
            hop,
            window: kind.build(fft_size)?,
            kind,
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft.size()
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    /// Number of columns produced for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    pub fn analyze(&self, signal: &[f64]) -> Result<Spectrogram> {
        let n = self.fft.size();
        let pad = n / 2;
        if signal.len() <= pad {
            return Err(Error::InvalidSize(format!(
                "signal of {} samples too short for reflect padding of {pad}",
                signal.len()
            )));
        }
        let len = signal.len();
        let mut padded = Vec::with_capacity(len + 2 * pad);
        padded.extend((0..pad).map(|i| signal[pad - i]));
        padded.extend_from_slice(signal);
        padded.extend((0..pad).map(|i| signal[len - 2 - i]));

        let n_frames = self.n_frames(len);
        let mut spec = Spectrogram::zeros(n, self.hop, n_frames, self.kind);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..n_frames {
            let start = t * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let s = padded.get(start + i).copied().unwrap_or(0.0);
                *b = Complex64::new(s * self.window[i], 0.0);
            }
            self.fft.forward(&mut buf);
            for f in 0..spec.n_bins {
                spec.bins[f * n_frames + t] = buf[f];
            }
        }
        Ok(spec)
    }

    /// Windowed overlap-add ISTFT normalized by the summed squared window.
    /// Returns `(n_frames - 1) * hop` samples.
    pub fn synthesize(&self, spec: &Spectrogram) -> Result<Vec<f64>> {
        let n = self.fft.size();
        if spec.fft_size != n || spec.hop != self.hop || spec.n_bins != n / 2 + 1 {
            return Err(Error::ShapeMismatch(format!(
                "spectrogram ({} bins, fft {}, hop {}) does not match plan (fft {n}, hop {})",
                spec.n_bins, spec.fft_size, spec.hop, self.hop
            )));
        }
        if spec.bins.len() != spec.n_bins * spec.n_frames || spec.n_frames == 0 {
            return Err(Error::ShapeMismatch("spectrogram data length".into()));
        }
        let t_count = spec.n_frames;
        let total = n + (t_count - 1) * self.hop;
        let mut acc = vec![0.0; total];
        let mut wss = vec![0.0; total];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..t_count {
            for k in 0..=n / 2 {
                buf[k] = spec.bins[k * t_count + t];
            }
            for k in 1..n / 2 {
                buf[n - k] = buf[k].conj();
            }
            self.fft.inverse(&mut buf);
            let start = t * self.hop;
            for i in 0..n {
                acc[start + i] += buf[i].re * self.window[i];
                wss[start + i] += self.window[i] * self.window[i];
            }
        }
        let pad = n / 2;
        let out_len = (t_count - 1) * self.hop;
        Ok((pad..pad + out_len)
            .map(|i| {
                if wss[i] > 1e-11 {
                    acc[i] / wss[i]
                } else {
                    acc[i]
                }
            })
            .collect())
    }
}

/// STFT of one frame with the given parameters (periodic Hann window).
pub fn stft(frame: &[f64], fft_size: usize, hop: usize) -> Result<Spectrogram> {
    if hop == 0 || frame.len() % hop != 0 {
        return Err(Error::InvalidSize(format!(
            "frame length {} not divisible by hop {hop}",
            frame.len()
        )));
    }
    StftPlan::new(fft_size, hop, WindowKind::Hann)?.analyze(frame)
}

pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    StftPlan::new(spec.fft_size, spec.hop, spec.window)?.synthesize(spec)
}

/// `ln(max(|bin|^2, floor))` for every bin.
pub fn log_power(spec: &Spectrogram, floor: f64) -> Result<LogPowerFeatures> {
    if !(floor > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "log floor must be positive, got {floor}"
        )));
    }
    let values = spec
        .bins
        .iter()
        .map(|b| b.norm_sqr().max(floor).ln())
        .collect();
    LogPowerFeatures::new(values, spec.n_bins, spec.n_frames)
}

/// Overlap-adds frames spaced `hop` apart after weighting each by a periodic
/// Hann window of the frame length.
pub fn overlap_add(frames: &[Vec<f64>], hop: usize, sample_rate: u32) -> Result<AudioBuffer> {
    let Some(first) = frames.first() else {
        return Ok(AudioBuffer::silence(0, sample_rate));
    };
    let len = first.len();
    if frames.iter().any(|f| f.len() != len) {
        return Err(Error::ShapeMismatch("frames differ in length".into()));
    }
    if len < 2 || hop * 2 != len {
        return Err(Error::InvalidSize(format!(
            "hop {hop} must be half the frame length {len}"
        )));
    }
    let window = hann_window(len, true)?;
    let mut out = vec![0.0; (frames.len() - 1) * hop + len];
    for (k, frame) in frames.iter().enumerate() {
        for (i, (s, w)) in frame.iter().zip(&window).enumerate() {
            out[k * hop + i] += s * w;
        }
    }
    AudioBuffer::new(out, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn random_frame(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn rel_rms(a: &[f64], b: &[f64]) -> f64 {
        let e: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let r: f64 = b.iter().map(|y| y * y).sum();
        (e / r).sqrt()
    }

    #[test]
    fn frame_spectrogram_shape() {
        let spec = stft(&random_frame(1, 2048), 512, 256).unwrap();
        assert_eq!(spec.shape(), (257, 9));
        let zero = stft(&[0.0; 2048], 512, 256).unwrap();
        assert!(zero.bins.iter().all(|b| b.norm() == 0.0));
        assert!(stft(&[0.0; 2000], 512, 256).is_err());
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let frame: Vec<f64> = (0..2048)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).sin())
            .collect();
        let spec = stft(&frame, 512, 256).unwrap();
        for t in 0..spec.n_frames {
            let peak = (0..spec.n_bins)
                .max_by(|&a, &b| spec.at(a, t).norm().total_cmp(&spec.at(b, t).norm()))
                .unwrap();
            // Reflect padding mirrors the sine about the frame edges, which can
            // split the edge columns' peak across neighbouring bins.
            if t == 0 || t == spec.n_frames - 1 {
                assert!(peak.abs_diff(32) <= 1, "column {t}: {peak}");
            } else {
                assert_eq!(peak, 32, "column {t}");
            }
        }
    }

    #[test]
    fn stft_istft_round_trip() {
        let frame = random_frame(9, 2048);
        let back = istft(&stft(&frame, 512, 256).unwrap()).unwrap();
        assert_eq!(back.len(), 2048);
        assert!(rel_rms(&back, &frame) < 1e-6);

        let sine: Vec<f64> = (0..2048).map(|i| (0.03 * i as f64).sin()).collect();
        let back = istft(&stft(&sine, 512, 256).unwrap()).unwrap();
        let dot: f64 = back.iter().zip(&sine).map(|(a, b)| a * b).sum();
        let na: f64 = back.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = sine.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(dot / (na * nb) > 0.999999);
    }

    #[test]
    fn istft_of_zeros_and_shape_check() {
        let z = Spectrogram::zeros(512, 256, 9, WindowKind::Hann);
        assert!(istft(&z).unwrap().iter().all(|&v| v == 0.0));
        let plan = StftPlan::new(1024, 256, WindowKind::Blackman).unwrap();
        assert!(plan.synthesize(&z).is_err());
    }

    #[test]
    fn blackman_configuration_round_trips() {
        let frame = random_frame(4, 2048);
        let plan = StftPlan::new(1024, 256, WindowKind::Blackman).unwrap();
        let spec = plan.analyze(&frame).unwrap();
        assert_eq!(spec.shape(), (513, 9));
        assert!(rel_rms(&plan.synthesize(&spec).unwrap(), &frame) < 1e-6);
    }

    #[test]
    fn log_power_values() {
        let mut spec = Spectrogram::zeros(4, 2, 1, WindowKind::Hann);
        spec.bins[0] = Complex64::new(1.0, 0.0);
        spec.bins[1] = Complex64::new(0.0, 0.0);
        spec.bins[2] = Complex64::new(0.0, std::f64::consts::E);
        let lp = log_power(&spec, 1e-10).unwrap();
        assert!(lp.values[0].abs() < 1e-15);
        assert!((lp.values[1] - (1e-10f64).ln()).abs() < 1e-12);
        assert!((lp.values[1] + 23.02585).abs() < 1e-4);
        assert!((lp.values[2] - 2.0).abs() < 1e-12);
        assert!(log_power(&spec, 0.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        let f = LogPowerFeatures::new(vec![5.0, -1.0], 2, 1).unwrap();
        assert_eq!(f.normalize(0.0, 1.0).unwrap().values, f.values);
        assert_eq!(f.normalize(3.0, 2.0).unwrap().values[0], 1.0);
        assert!(f.normalize(0.0, 0.0).is_err());
        assert!(f.denormalize().is_err());
    }

    #[test]
    fn dc_split_and_reattach() {
        let spec = stft(&random_frame(2, 2048), 512, 256).unwrap();
        let lp = log_power(&spec, 1e-10).unwrap();
        let (rest, dc) = lp.split_dc();
        assert_eq!(rest.shape(), (256, 9));
        let whole = rest.with_dc(&dc).unwrap();
        assert_eq!(whole.shape(), (257, 9));
        assert_eq!(whole, lp);
    }

    #[test]
    fn overlap_add_cola() {
        let out = overlap_add(&[vec![1.0; 2048], vec![1.0; 2048]], 1024, 16000).unwrap();
        assert_eq!(out.len(), 3072);
        assert!(out.samples[1024..2048]
            .iter()
            .all(|v| (v - 1.0).abs() < 1e-15));

        let frame = random_frame(5, 2048);
        let single = overlap_add(std::slice::from_ref(&frame), 1024, 16000).unwrap();
        let w = hann_window(2048, true).unwrap();
        for i in 0..2048 {
            assert_eq!(single.samples[i], frame[i] * w[i]);
        }
        assert!(overlap_add(&[vec![0.0; 4], vec![0.0; 6]], 2, 16000).is_err());
    }

    #[test]
    fn identity_framing_reconstructs_interior() {
        let sig = AudioBuffer::new(random_frame(6, 10_000), 16000).unwrap();
        let frames: Vec<_> = crate::audio::frame_stream(&sig, 2048, 1024)
            .unwrap()
            .collect();
        let out = overlap_add(&frames, 1024, 16000).unwrap();
        let interior = 1024..sig.len();
        assert!(rel_rms(&out.samples[interior.clone()], &sig.samples[interior]) < 1e-6);
    }

    proptest! {
        #[test]
        fn normalize_round_trip(values in proptest::collection::vec(-30.0f64..5.0, 9), mean in -20.0f64..0.0, std in 0.1f64..10.0) {
            let f = LogPowerFeatures::new(values, 1, 9).unwrap();
            let back = f.normalize(mean, std).unwrap().denormalize().unwrap();
            for (a, b) in back.values.iter().zip(&f.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn log_power_monotone(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let mut spec = Spectrogram::zeros(2, 1, 1, WindowKind::Hann);
            spec.bins[0] = Complex64::new(a, 0.0);
            spec.bins[1] = Complex64::new(b, 0.0);
            let lp = log_power(&spec, 1e-10).unwrap();
            if a <= b {
                prop_assert!(lp.values[0] <= lp.values[1]);
            }
        }
    }
}
