//! Speech-like test signals and coloured noise.
//!
//! Utterances are chains of voiced syllables: a gliding fundamental with
//! harmonics up to 7.6 kHz, shaped by four formant resonances and a spectral
//! tilt, under a raised-cosine envelope with slow amplitude modulation. A
//! faint white floor sits underneath so silent stretches are not exactly zero.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

use crate::audio::AudioBuffer;
use crate::dsp::{Complex64, FftPlan};
use crate::SAMPLE_RATE;

const FLOOR_STD: f64 = 3e-4;
const MAX_HARMONIC_HZ: f64 = 7600.0;

fn syllable<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let sr = SAMPLE_RATE as f64;
    let f0a: f64 = rng.gen_range(90.0..240.0);
    let f0b = f0a * rng.gen_range(0.8..1.2);
    let formants = [
        (rng.gen_range(300.0..850.0), 80.0, 1.0),
        (rng.gen_range(850.0..2400.0), 110.0, 0.7),
        (rng.gen_range(2300.0..3200.0), 160.0, 0.35),
        (rng.gen_range(3300.0..4500.0), 250.0, 0.2),
    ];
    let amp: f64 = rng.gen_range(0.05..0.25);
    let am_rate: f64 = rng.gen_range(3.0..6.0);
    let f0_mid = 0.5 * (f0a + f0b);
    let n_harm = (MAX_HARMONIC_HZ / f0a.max(f0b)).floor() as usize;
    let mut gains: Vec<f64> = (1..=n_harm)
        .map(|k| {
            let f = k as f64 * f0_mid;
            let res: f64 = formants
                .iter()
                .map(|&(fc, bw, g)| g / (1.0 + ((f - fc) / bw).powi(2)))
                .sum();
            (k as f64).powf(-0.6) * (0.02 + res)
        })
        .collect();
    let power: f64 = gains.iter().map(|g| g * g / 2.0).sum();
    let scale = amp / power.sqrt();
    gains.iter_mut().for_each(|g| *g *= scale);

    let n = out.len();
    let mut phase = rng.gen_range(0.0..2.0 * PI);
    for (i, o) in out.iter_mut().enumerate() {
        let tau = i as f64 / n as f64;
        let env =
            (PI * tau).sin().powi(2) * (1.0 + 0.3 * (2.0 * PI * am_rate * i as f64 / sr).sin());
        let f0 = f0a + (f0b - f0a) * tau;
        phase = (phase + 2.0 * PI * f0 / sr) % (2.0 * PI);
        let v: f64 = gains
            .iter()
            .enumerate()
            .map(|(k, g)| g * ((k + 1) as f64 * phase).sin())
            .sum();
        *o += env * v;
    }
}

/// One synthetic utterance of roughly `duration_secs` seconds at 16 kHz.
pub fn synth_utterance<R: Rng + ?Sized>(rng: &mut R, duration_secs: f64) -> AudioBuffer {
    let sr = SAMPLE_RATE as f64;
    let n = (duration_secs.max(0.0) * sr).round() as usize;
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            FLOOR_STD * z
        })
        .collect();
    let mut t = rng.gen_range(0.05..0.15);
    while t + 0.1 < duration_secs {
        let len = rng.gen_range(0.12..0.30f64).min(duration_secs - t - 0.02);
        let start = (t * sr) as usize;
        let end = ((t + len) * sr) as usize;
        syllable(rng, &mut out[start..end.min(n)]);
        t += len + rng.gen_range(0.03..0.12);
    }
    AudioBuffer {
        samples: out,
        sample_rate: SAMPLE_RATE,
    }
}

/// Gaussian noise with a `1/f^alpha` power spectrum, no DC, scaled to `rms`.
pub fn colored_noise<R: Rng + ?Sized>(
    rng: &mut R,
    len: usize,
    alpha: f64,
    rms: f64,
) -> AudioBuffer {
    if len == 0 {
        return AudioBuffer::silence(0, SAMPLE_RATE);
    }
    let n = len.next_power_of_two().max(2);
    let plan = FftPlan::new(n).expect("power of two");
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            Complex64::new(z, 0.0)
        })
        .collect();
    plan.forward(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for k in 1..n {
        let kk = k.min(n - k) as f64;
        buf[k] *= kk.powf(-alpha / 2.0);
    }
    plan.inverse(&mut buf);
    let mut samples: Vec<f64> = buf[..len].iter().map(|c| c.re).collect();
    let cur = crate::audio::rms(&samples);
    if cur > 0.0 {
        samples.iter_mut().for_each(|s| *s *= rms / cur);
    }
    AudioBuffer {
        samples,
        sample_rate: SAMPLE_RATE,
    }
}
