//! Training: loss, optimizer, data generation and the epoch loop.
//!
//! Fine-tuning uses [`train`] unchanged, starting from an already trained
//! model and a dataset built with that model's normalization statistics.

mod adam;
mod augment;
mod dataset;
mod loss;
pub mod synth;

pub use adam::AdamState;
pub use augment::{
    augment_noise, bcm_noise, lowpass_taps, mix_at_snr, noisy_pairs, sample_snr, simulate_bcm,
    BCM_CUTOFF_HZ, BCM_TAPS, SNR_MEAN_DB, SNR_STD_DB,
};
pub use dataset::{
    frame_log_power, load_pairs, norm_stats, parse_manifest, read_manifest, Dataset, ManifestEntry,
    TrainExample,
};
pub use loss::{loss, LossValue};
pub use synth::{colored_noise, synth_utterance};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use std::io::Write;
use std::path::Path;

use crate::dsp::{mel_filterbank, LogPowerFeatures, MelFilterbank};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::{ConvGrads, Tensor};
use crate::{FFT_SIZE, LOG_FLOOR, SAMPLE_RATE};

/// Mel bands of the perceptual loss term.
pub const LOSS_MEL_BANDS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch: 64,
            lr: 1e-4,
            seed: 0,
        }
    }
}

/// Mean loss terms over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub spectral: f64,
    pub mel: f64,
}

/// Filterbank used by the training loss.
pub fn loss_filterbank() -> MelFilterbank {
    mel_filterbank(
        LOSS_MEL_BANDS,
        FFT_SIZE,
        SAMPLE_RATE as f64,
        0.0,
        SAMPLE_RATE as f64 / 2.0,
    )
    .expect("fixed filterbank parameters are valid")
}

/// Reassembles the full log-power grid from normalized network output and
/// the passed-through DC row.
fn assemble(model: &Model, out: &Tensor, dc: &[f64]) -> Result<LogPowerFeatures> {
    let s = out.shape();
    let body = LogPowerFeatures {
        values: out.data().to_vec(),
        n_bins: s.f,
        n_frames: s.t,
        norm: Some(model.norm),
    };
    body.denormalize()?.with_dc(dc)
}

/// Loss and parameter gradients for one example.
pub fn example_gradients(
    model: &Model,
    ex: &TrainExample,
    mel: &MelFilterbank,
) -> Result<(LossValue, Vec<ConvGrads>)> {
    let (out, cache) = model.forward_cached(&ex.input)?;
    let full = assemble(model, &out, &ex.input_dc)?;
    let l = loss(&full, &ex.target, mel, LOG_FLOOR)?;
    // drop the DC row, then chain through the denormalization
    let t = full.n_frames;
    let g: Vec<f64> = l.grad[t..].iter().map(|g| g * model.norm.std).collect();
    let grads = model.backward(&cache, &Tensor::from_vec(out.shape(), g)?)?;
    Ok((l, grads))
}

/// Mean loss of the model over a dataset, without updating it.
pub fn evaluate_loss(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset".into()));
    }
    let mel = loss_filterbank();
    let mut total = 0.0;
    for ex in &data.examples {
        let out = model.forward(&ex.input)?;
        total += loss(
            &assemble(model, &out, &ex.input_dc)?,
            &ex.target,
            &mel,
            LOG_FLOOR,
        )?
        .total;
    }
    Ok(total / data.len() as f64)
}

/// Trains `model` in place with Adam and returns the per-epoch history.
/// The model adopts the dataset's normalization statistics. Each epoch visits
/// the examples in a fresh permutation drawn from `cfg.seed`; gradients are
/// averaged over each batch in a fixed order, so runs are reproducible.
/// Weights are rounded to f32 at the end so a saved model reloads bitwise.
pub fn train(model: &mut Model, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(Error::Empty("dataset".into()));
    }
    if cfg.batch == 0 || !(cfg.lr >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "batch {} / lr {} invalid",
            cfg.batch, cfg.lr
        )));
    }
    let shape = model.input_shape();
    if data.examples[0].input.shape() != shape {
        return Err(Error::ShapeMismatch(format!(
            "examples are {}, model expects {shape}",
            data.examples[0].input.shape()
        )));
    }
    model.norm = data.norm;
    let mel = loss_filterbank();
    let mut adam = AdamState::new(cfg.lr);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut stats = EpochStats {
            epoch,
            loss: 0.0,
            spectral: 0.0,
            mel: 0.0,
        };
        for batch in order.chunks(cfg.batch) {
            let mut acc: Vec<ConvGrads> = model.layers.iter().map(ConvGrads::zeros_like).collect();
            for &i in batch {
                let (l, g) = example_gradients(model, &data.examples[i], &mel)?;
                stats.loss += l.total;
                stats.spectral += l.spectral;
                stats.mel += l.mel;
                acc.iter_mut().zip(&g).for_each(|(a, g)| a.add_assign(g));
            }
            acc.iter_mut()
                .for_each(|a| a.scale(1.0 / batch.len() as f64));
            let mut params: Vec<&mut [f64]> = model
                .layers
                .iter_mut()
                .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
                .collect();
            let grads: Vec<&[f64]> = acc
                .iter()
                .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
                .collect();
            adam.update(&mut params, &grads)?;
        }
        let n = data.len() as f64;
        stats.loss /= n;
        stats.spectral /= n;
        stats.mel /= n;
        log::info!(
            "epoch {epoch}: loss {:.5} (spectral {:.5}, mel {:.5})",
            stats.loss,
            stats.spectral,
            stats.mel
        );
        history.push(stats);
    }
    model.round_to_f32();
    Ok(history)
}

/// Writes the history as `epoch,loss,spectral,mel` CSV.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[EpochStats]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,loss,spectral,mel")?;
    for s in history {
        writeln!(f, "{},{},{},{}", s.epoch, s.loss, s.spectral, s.mel)?;
    }
    f.flush()?;
    Ok(())
}
