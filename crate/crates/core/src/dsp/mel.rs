use crate::error::{Error, Result};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over the non-negative FFT bins, stored row-major
/// (`n_mels` rows of `n_bins`).
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub weights: Vec<f64>,
    pub n_mels: usize,
    pub n_bins: usize,
    /// Center frequency of each filter in Hz.
    pub centers: Vec<f64>,
}

impl MelFilterbank {
    /// Identity "filterbank": every bin is its own band.
    pub fn identity(n_bins: usize) -> Self {
        let mut weights = vec![0.0; n_bins * n_bins];
        for i in 0..n_bins {
            weights[i * n_bins + i] = 1.0;
        }
        Self {
            weights,
            n_mels: n_bins,
            n_bins,
            centers: (0..n_bins).map(|i| i as f64).collect(),
        }
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }
}

/// Mel filterbank with area-normalized (Slaney-style) triangles whose edges
/// are equally spaced on the mel scale between `fmin` and `fmax`.
pub fn mel_filterbank(
    n_mels: usize,
    fft_size: usize,
    sr: f64,
    fmin: f64,
    fmax: f64,
) -> Result<MelFilterbank> {
    if n_mels == 0 || fft_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_mels {n_mels}, fft size {fft_size}"
        )));
    }
    if !(fmin >= 0.0 && fmin < fmax && fmax <= sr / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "mel range {fmin}..{fmax} Hz at {sr} Hz"
        )));
    }
    let n_bins = fft_size / 2 + 1;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * sr / fft_size as f64)
        .collect();
    let mut weights = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let area = 2.0 / (right - left);
        for (k, &f) in bin_hz.iter().enumerate() {
            let rise = (f - left) / (center - left);
            let fall = (right - f) / (right - center);
            weights[m * n_bins + k] = rise.min(fall).max(0.0) * area;
        }
    }
    Ok(MelFilterbank {
        weights,
        n_mels,
        n_bins,
        centers: edges[1..=n_mels].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_closed_form() {
        assert!((hz_to_mel(1000.0) - 999.985).abs() < 1e-3);
        assert!((mel_to_hz(hz_to_mel(3210.0)) - 3210.0).abs() < 1e-9);
    }

    #[test]
    fn default_bank_properties() {
        let fb = mel_filterbank(40, 512, 16000.0, 0.0, 8000.0).unwrap();
        assert_eq!((fb.n_mels, fb.n_bins), (40, 257));
        for m in 0..40 {
            assert!(fb.row(m).iter().sum::<f64>() > 0.0, "row {m}");
        }
        assert!(fb.centers.windows(2).all(|w| w[0] < w[1]));
        // bins strictly inside (0, 8000) Hz
        for k in 1..256 {
            assert!(
                (0..40).any(|m| fb.weights[m * 257 + k] > 0.0),
                "bin {k} uncovered"
            );
        }
        let first = mel_to_hz(hz_to_mel(8000.0) / 41.0);
        assert!((fb.centers[0] - first).abs() < 1e-9);
    }

    #[test]
    fn invalid_ranges() {
        assert!(mel_filterbank(40, 512, 16000.0, 0.0, 9000.0).is_err());
        assert!(mel_filterbank(40, 512, 16000.0, 500.0, 400.0).is_err());
        assert!(mel_filterbank(0, 512, 16000.0, 0.0, 8000.0).is_err());
    }
}
