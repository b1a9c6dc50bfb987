//! Real-time bandwidth extension for band-limited (bone-conduction) speech.
//!
//! The crate covers the full chain: 16-bit WAV I/O, STFT front end and
//! overlap-add resynthesis, a small hand-written differentiable kernel set,
//! the UNet family (2D, hybrid, mixed, 1D and the temporal-shift ATS-UNet),
//! training with an L1 + log-mel loss, power-of-two int16 quantization with
//! an integer inference path, a streaming engine and objective metrics.

pub mod audio;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod quant;
pub mod train;

pub use audio::AudioBuffer;
pub use dsp::{LogPowerFeatures, Spectrogram};
pub use error::{Error, Result};
pub use model::{Model, ModelConfig, Variant};
pub use nn::Tensor;
pub use quant::QuantizedModel;

/// Sample rate every component expects.
pub const SAMPLE_RATE: u32 = 16_000;
/// Analysis frame length of the streaming engine (128 ms).
pub const FRAME_LEN: usize = 2048;
/// Hop between streaming frames (64 ms); also the per-frame deadline.
pub const FRAME_HOP: usize = 1024;
/// STFT size used for network features.
pub const FFT_SIZE: usize = 512;
/// STFT hop used for network features.
pub const STFT_HOP: usize = 256;
/// Frequency bins of a feature spectrogram.
pub const N_BINS: usize = FFT_SIZE / 2 + 1;
/// Time columns of a feature spectrogram for one frame.
pub const N_COLS: usize = FRAME_LEN / STFT_HOP + 1;
/// Power floor applied before taking logs.
pub const LOG_FLOOR: f64 = 1e-10;
