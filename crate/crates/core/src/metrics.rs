//! Objective quality measures.
//!
//! Log-spectral distance uses base-10 log power on a 2048-point centered
//! STFT (hop 1024, Hann): per-frame RMS over frequency, then the mean over
//! frames. Two signals whose power differs by a factor of 10 everywhere are
//! therefore exactly 1.0 apart.

use std::io::Write;
use std::path::Path;

use crate::audio::AudioBuffer;
use crate::dsp::{Spectrogram, StftPlan, WindowKind};
use crate::error::{Error, Result};
use crate::{FRAME_HOP, FRAME_LEN, LOG_FLOOR};

/// Upper bound reported for SNRs of identical signals.
pub const SNR_CAP_DB: f64 = 200.0;

fn check_pair(a: &AudioBuffer, b: &AudioBuffer) -> Result<()> {
    if a.sample_rate != b.sample_rate {
        return Err(Error::SampleRate(b.sample_rate, a.sample_rate));
    }
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Empty("signal".into()));
    }
    Ok(())
}

fn analysis(x: &AudioBuffer) -> Result<Spectrogram> {
    StftPlan::new(FRAME_LEN, FRAME_HOP, WindowKind::Hann)?.analyze(&x.samples)
}

/// Log-spectral distance between two equal-length signals.
pub fn lsd(x: &AudioBuffer, x_hat: &AudioBuffer) -> Result<f64> {
    check_pair(x, x_hat)?;
    let (a, b) = (analysis(x)?, analysis(x_hat)?);
    lsd_spectrograms(&a, &b)
}

/// Log-spectral distance between two spectrograms of the same shape.
pub fn lsd_spectrograms(a: &Spectrogram, b: &Spectrogram) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (k, t) = a.shape();
    let mut total = 0.0;
    for j in 0..t {
        let mut acc = 0.0;
        for f in 0..k {
            let la = a.at(f, j).norm_sqr().max(LOG_FLOOR).log10();
            let lb = b.at(f, j).norm_sqr().max(LOG_FLOOR).log10();
            acc += (la - lb).powi(2);
        }
        total += (acc / k as f64).sqrt();
    }
    Ok(total / t as f64)
}

/// Ratio in dB of reference energy to error energy, clamped to
/// `[-SNR_CAP_DB, SNR_CAP_DB]`.
pub fn snr_db(reference: &[f64], test: &[f64]) -> Result<f64> {
    if reference.len() != test.len() {
        return Err(Error::ShapeMismatch(format!(
            "lengths differ: {} vs {}",
            reference.len(),
            test.len()
        )));
    }
    let sig: f64 = reference.iter().map(|r| r * r).sum();
    let err: f64 = reference
        .iter()
        .zip(test)
        .map(|(r, t)| (r - t).powi(2))
        .sum();
    Ok(ratio_db(sig, err))
}

fn ratio_db(sig: f64, err: f64) -> f64 {
    if err == 0.0 {
        return SNR_CAP_DB;
    }
    (10.0 * (sig / err).log10()).clamp(-SNR_CAP_DB, SNR_CAP_DB)
}

/// SNR computed on complex STFT bins of two equal-length signals.
pub fn spectral_snr(reference: &AudioBuffer, test: &AudioBuffer) -> Result<f64> {
    check_pair(reference, test)?;
    let (a, b) = (analysis(reference)?, analysis(test)?);
    let sig: f64 = a.bins.iter().map(|c| c.norm_sqr()).sum();
    let err: f64 = a
        .bins
        .iter()
        .zip(&b.bins)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    Ok(ratio_db(sig, err))
}

/// One measurement of a processed signal against its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalEntry {
    pub id: String,
    /// What was measured, e.g. `input` or `enhanced`.
    pub condition: String,
    pub lsd: f64,
    pub spectral_snr_db: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub entries: Vec<EvalEntry>,
}

impl EvalReport {
    pub fn push(
        &mut self,
        id: &str,
        condition: &str,
        reference: &AudioBuffer,
        test: &AudioBuffer,
    ) -> Result<()> {
        self.entries.push(EvalEntry {
            id: id.to_string(),
            condition: condition.to_string(),
            lsd: lsd(reference, test)?,
            spectral_snr_db: spectral_snr(reference, test)?,
        });
        Ok(())
    }

    /// Mean LSD over the entries with the given condition.
    pub fn mean_lsd(&self, condition: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .entries
            .iter()
            .filter(|e| e.condition == condition)
            .map(|e| e.lsd)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn conditions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.condition.as_str()) {
                out.push(&e.condition);
            }
        }
        out
    }

    /// `id,condition,lsd,spectral_snr_db` rows followed by `mean` rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "id,condition,lsd,spectral_snr_db")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{:.6},{:.3}",
                e.id, e.condition, e.lsd, e.spectral_snr_db
            )?;
        }
        for c in self.conditions() {
            writeln!(w, "mean,{c},{:.6},", self.mean_lsd(c).unwrap_or(f64::NAN))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn noise(seed: u64, n: usize) -> AudioBuffer {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::new((0..n).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16000).unwrap()
    }

    #[test]
    fn zero_for_identical() {
        let x = noise(1, 8000);
        assert_eq!(lsd(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn tenfold_power_is_one() {
        let x = noise(2, 8000);
        let y =
            AudioBuffer::new(x.samples.iter().map(|s| s * 10f64.sqrt()).collect(), 16000).unwrap();
        let d = lsd(&x, &y).unwrap();
        assert!((d - 1.0).abs() < 1e-9, "{d}");
    }

    #[test]
    fn shift_by_a_hop_with_guards() {
        let body = noise(3, 6000);
        let place = |offset: usize| {
            let mut s = vec![0.0; 12000];
            s[offset..offset + 6000].copy_from_slice(&body.samples);
            AudioBuffer::new(s, 16000).unwrap()
        };
        let other = noise(4, 6000);
        let place_o = |offset: usize| {
            let mut s = vec![0.0; 12000];
            s[offset..offset + 6000].copy_from_slice(&other.samples);
            AudioBuffer::new(s, 16000).unwrap()
        };
        let a = lsd(&place(2048), &place_o(2048)).unwrap();
        let b = lsd(&place(2048 + 1024), &place_o(2048 + 1024)).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn moving_toward_reference_lowers_lsd() {
        let x = noise(5, 8000);
        let y = noise(6, 8000);
        let mut prev = f64::INFINITY;
        for step in 0..5 {
            let a = step as f64 / 5.0;
            let sa = crate::dsp::StftPlan::new(2048, 1024, WindowKind::Hann).unwrap();
            let (sx, mut sy) = (
                sa.analyze(&x.samples).unwrap(),
                sa.analyze(&y.samples).unwrap(),
            );
            // interpolate log magnitudes elementwise
            for (bx, by) in sx.bins.iter().zip(sy.bins.iter_mut()) {
                let mag = (by.norm().ln() * (1.0 - a) + bx.norm().ln() * a).exp();
                *by *= mag / by.norm();
            }
            let d = lsd_spectrograms(&sx, &sy).unwrap();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn snr_edges() {
        let x = noise(7, 4000);
        assert_eq!(spectral_snr(&x, &x).unwrap(), SNR_CAP_DB);
        let z = AudioBuffer::silence(4000, 16000);
        assert!(spectral_snr(&x, &z).unwrap().abs() < 1e-9);
        assert!(lsd(&x, &noise(8, 3999)).is_err());
        assert!(lsd(
            &AudioBuffer::silence(0, 16000),
            &AudioBuffer::silence(0, 16000)
        )
        .is_err());
    }

    #[test]
    fn snr_with_known_noise() {
        let x = noise(9, 16000);
        let n = noise(10, 16000);
        let g = 0.01;
        let y = AudioBuffer::new(
            x.samples
                .iter()
                .zip(&n.samples)
                .map(|(a, b)| a + g * b)
                .collect(),
            16000,
        )
        .unwrap();
        let expect = 10.0 * (x.rms().powi(2) / (g * n.rms()).powi(2)).log10();
        let got = spectral_snr(&x, &y).unwrap();
        assert!((got - expect).abs() < 0.5, "{got} vs {expect}");
    }

    #[test]
    fn report_csv() {
        let x = noise(11, 4000);
        let mut r = EvalReport::default();
        r.push("u0", "input", &x, &x).unwrap();
        r.push("u0", "enhanced", &x, &x).unwrap();
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("id,condition,lsd,spectral_snr_db\nu0,input,0.000000,200.000\n"));
        assert!(text.contains("mean,enhanced,0.000000,"));
        assert_eq!(r.mean_lsd("input"), Some(0.0));
        assert_eq!(r.mean_lsd("other"), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn symmetric_and_non_negative(s1 in 0u64..1000, s2 in 0u64..1000) {
            let (a, b) = (noise(s1, 3000), noise(s2 + 1000, 3000));
            let d1 = lsd(&a, &b).unwrap();
            let d2 = lsd(&b, &a).unwrap();
            prop_assert!(d1 >= 0.0);
            prop_assert!((d1 - d2).abs() < 1e-12);
        }
    }
}
