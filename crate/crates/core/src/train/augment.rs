use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

use crate::audio::{rms, AudioBuffer};
use crate::error::{Error, Result};

/// Taps of the band-limiting FIR.
pub const BCM_TAPS: usize = 255;
/// Default cutoff of the band-limiting FIR in Hz.
pub const BCM_CUTOFF_HZ: f64 = 2000.0;
/// Mean of the augmentation SNR distribution in dB.
pub const SNR_MEAN_DB: f64 = 18.0;
/// Standard deviation of the augmentation SNR distribution in dB.
pub const SNR_STD_DB: f64 = 3.5;

/// Hamming-windowed sinc low-pass with unit DC gain.
pub fn lowpass_taps(cutoff_hz: f64, sample_rate: u32, taps: usize) -> Result<Vec<f64>> {
    let nyq = sample_rate as f64 / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyq) || taps % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {nyq}) and the tap count must be odd, got {taps}"
        )));
    }
    let fc = cutoff_hz / sample_rate as f64;
    let mid = (taps / 2) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let x = n as f64 - mid;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    Ok(h)
}

/// Band-limits clean speech the way a bone-conduction pickup would, keeping
/// the output sample-aligned with the input (the filter delay is removed).
pub fn simulate_bcm(clean: &AudioBuffer, cutoff_hz: f64) -> Result<AudioBuffer> {
    let h = lowpass_taps(cutoff_hz, clean.sample_rate, BCM_TAPS)?;
    let delay = BCM_TAPS / 2;
    let x = &clean.samples;
    let n = x.len() as isize;
    let samples = (0..x.len())
        .map(|i| {
            let mut acc = 0.0;
            for (k, hk) in h.iter().enumerate() {
                let j = i as isize + delay as isize - k as isize;
                if j >= 0 && j < n {
                    acc += hk * x[j as usize];
                }
            }
            acc
        })
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: clean.sample_rate,
    })
}

/// Draws an augmentation SNR in dB.
pub fn sample_snr<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Normal::new(SNR_MEAN_DB, SNR_STD_DB)
        .expect("valid normal")
        .sample(rng)
}

/// Adds `noise` to `speech` scaled to the requested SNR. Shorter noise is
/// wrapped around; longer noise is read from `offset` (modulo its length).
pub fn mix_at_snr(
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    snr_db: f64,
    offset: usize,
) -> Result<AudioBuffer> {
    if speech.sample_rate != noise.sample_rate {
        return Err(Error::SampleRate(noise.sample_rate, speech.sample_rate));
    }
    let s_rms = speech.rms();
    if s_rms == 0.0 || speech.is_empty() {
        return Err(Error::InvalidArgument("speech is silent".into()));
    }
    if noise.is_empty() {
        return Err(Error::Empty("noise".into()));
    }
    let m = noise.len();
    let segment: Vec<f64> = (0..speech.len())
        .map(|i| noise.samples[(offset + i) % m])
        .collect();
    let n_rms = rms(&segment);
    if n_rms == 0.0 {
        return Err(Error::InvalidArgument("noise is silent".into()));
    }
    let gain = s_rms / (n_rms * 10f64.powf(snr_db / 20.0));
    let samples = speech
        .samples
        .iter()
        .zip(&segment)
        .map(|(s, n)| s + gain * n)
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: speech.sample_rate,
    })
}

/// Mixes noise at an SNR drawn from N(18, 3.5) dB and a random noise offset.
/// Returns the noisy signal and the SNR used.
pub fn augment_noise<R: Rng + ?Sized>(
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    rng: &mut R,
) -> Result<(AudioBuffer, f64)> {
    let snr = sample_snr(rng);
    let offset = if noise.is_empty() {
        0
    } else {
        rng.gen_range(0..noise.len())
    };
    Ok((mix_at_snr(speech, noise, snr, offset)?, snr))
}

/// Band-limited coloured noise: white, pink or brown at random, passed
/// through the same low-pass as [`simulate_bcm`].
pub fn bcm_noise<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Result<AudioBuffer> {
    let alpha = [0.0, 1.0, 2.0][rng.gen_range(0..3)];
    simulate_bcm(
        &crate::train::synth::colored_noise(rng, len, alpha, 0.1),
        BCM_CUTOFF_HZ,
    )
}

/// Replaces each pair's input with a noisy version from [`augment_noise`].
/// Noise comes from `pool` (picked at random) or, when the pool is empty,
/// from [`bcm_noise`]. Targets are kept.
pub fn noisy_pairs<R: Rng + ?Sized>(
    pairs: &[(AudioBuffer, AudioBuffer)],
    pool: &[AudioBuffer],
    rng: &mut R,
) -> Result<Vec<(AudioBuffer, AudioBuffer)>> {
    pairs
        .iter()
        .map(|(input, target)| {
            let noise = if pool.is_empty() {
                bcm_noise(rng, input.len())?
            } else {
                pool[rng.gen_range(0..pool.len())].clone()
            };
            Ok((augment_noise(input, &noise, rng)?.0, target.clone()))
        })
        .collect()
}
