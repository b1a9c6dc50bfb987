use crate::dsp::{LogPowerFeatures, MelFilterbank};
use crate::error::{Error, Result};

/// Value and gradient of the training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub spectral: f64,
    pub mel: f64,
    /// d(total)/d(output log-power), same layout as the output grid.
    pub grad: Vec<f64>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Log-mel energies of a natural-log power grid, together with the linear
/// mel energies needed for the gradient.
fn log_mel(
    lp: &[f64],
    n_bins: usize,
    n_frames: usize,
    mel: &MelFilterbank,
    floor: f64,
) -> (Vec<f64>, Vec<f64>) {
    let power: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
    let mut energy = vec![0.0; mel.n_mels * n_frames];
    for m in 0..mel.n_mels {
        let row = mel.row(m);
        for (k, &w) in row.iter().enumerate().take(n_bins) {
            if w == 0.0 {
                continue;
            }
            for t in 0..n_frames {
                energy[m * n_frames + t] += w * power[k * n_frames + t];
            }
        }
    }
    let logs = energy.iter().map(|e| e.max(floor).ln()).collect();
    (logs, energy)
}

/// Mean L1 distance between natural-log power spectrograms plus mean L1
/// distance between their log-mel spectrograms. The mel term maps power
/// through the filterbank before taking logs again.
pub fn loss(
    output: &LogPowerFeatures,
    target: &LogPowerFeatures,
    mel: &MelFilterbank,
    floor: f64,
) -> Result<LossValue> {
    if output.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "loss output {:?} vs target {:?}",
            output.shape(),
            target.shape()
        )));
    }
    let (n_bins, n_frames) = output.shape();
    if mel.n_bins != n_bins {
        return Err(Error::ShapeMismatch(format!(
            "filterbank has {} bins, grid has {n_bins}",
            mel.n_bins
        )));
    }
    let n1 = (n_bins * n_frames) as f64;
    let mut grad = vec![0.0; n_bins * n_frames];
    let mut spectral = 0.0;
    for (i, (o, y)) in output.values.iter().zip(&target.values).enumerate() {
        spectral += (o - y).abs();
        grad[i] = sign(o - y) / n1;
    }
    spectral /= n1;

    let (lm_o, e_o) = log_mel(&output.values, n_bins, n_frames, mel, floor);
    let (lm_y, _) = log_mel(&target.values, n_bins, n_frames, mel, floor);
    let n2 = (mel.n_mels * n_frames) as f64;
    let mut mel_term = 0.0;
    // d/d(energy) of the mel term, zero where the floor clamps
    let mut d_energy = vec![0.0; lm_o.len()];
    for i in 0..lm_o.len() {
        let d = lm_o[i] - lm_y[i];
        mel_term += d.abs();
        if e_o[i] > floor {
            d_energy[i] = sign(d) / (n2 * e_o[i]);
        }
    }
    mel_term /= n2;
    for m in 0..mel.n_mels {
        for (k, &w) in mel.row(m).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for t in 0..n_frames {
                let i = k * n_frames + t;
                grad[i] += d_energy[m * n_frames + t] * w * output.values[i].exp();
            }
        }
    }
    Ok(LossValue {
        total: spectral + mel_term,
        spectral,
        mel: mel_term,
        grad,
    })
}
