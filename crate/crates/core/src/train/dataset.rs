use std::path::{Path, PathBuf};

use crate::audio::{frame_stream, read_wav, AudioBuffer};
use crate::dsp::{log_power, stft, LogPowerFeatures, Norm};
use crate::error::{Error, Result};
use crate::nn::{Shape, Tensor};
use crate::train::augment::{simulate_bcm, BCM_CUTOFF_HZ};
use crate::{FFT_SIZE, FRAME_HOP, FRAME_LEN, LOG_FLOOR, N_BINS, N_COLS, SAMPLE_RATE, STFT_HOP};

/// One aligned training pair for a single 2048-sample frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    /// Normalized log-power of the band-limited frame without its DC row.
    pub input: Tensor,
    /// Un-normalized DC row of the band-limited frame, passed through.
    pub input_dc: Vec<f64>,
    /// Un-normalized log-power of the clean frame (all 257 rows).
    pub target: LogPowerFeatures,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<TrainExample>,
    pub norm: Norm,
}

/// Log-power grid (257 x 9) of one streaming frame.
pub fn frame_log_power(frame: &[f64]) -> Result<LogPowerFeatures> {
    log_power(&stft(frame, FFT_SIZE, STFT_HOP)?, LOG_FLOOR)
}

/// Global mean and standard deviation over every value of every grid.
pub fn norm_stats<'a>(grids: impl IntoIterator<Item = &'a LogPowerFeatures>) -> Result<Norm> {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for g in grids {
        for v in &g.values {
            n += 1;
            sum += v;
            sq += v * v;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no feature values".into()));
    }
    let mean = sum / n as f64;
    let std = (sq / n as f64 - mean * mean).max(0.0).sqrt();
    if !(std > 0.0) {
        return Err(Error::InvalidArgument("features have zero variance".into()));
    }
    Ok(Norm { mean, std })
}

impl Dataset {
    /// Frames every `(input, target)` pair and builds feature examples.
    /// With `norm = None` the statistics are computed over all input and
    /// target grids; fine-tuning passes the model's existing statistics.
    pub fn from_pairs(pairs: &[(AudioBuffer, AudioBuffer)], norm: Option<Norm>) -> Result<Self> {
        let mut grids = Vec::new();
        for (input, target) in pairs {
            input.ensure_rate(SAMPLE_RATE)?;
            target.ensure_rate(SAMPLE_RATE)?;
            if input.len() != target.len() {
                return Err(Error::ShapeMismatch(format!(
                    "pair lengths differ: {} vs {}",
                    input.len(),
                    target.len()
                )));
            }
            for (fi, ft) in frame_stream(input, FRAME_LEN, FRAME_HOP)?
                .zip(frame_stream(target, FRAME_LEN, FRAME_HOP)?)
            {
                grids.push((frame_log_power(&fi)?, frame_log_power(&ft)?));
            }
        }
        if grids.is_empty() {
            return Err(Error::Empty("dataset has no frames".into()));
        }
        let norm = match norm {
            Some(n) => n,
            None => norm_stats(grids.iter().flat_map(|(a, b)| [a, b]))?,
        };
        let shape = Shape::new(1, N_BINS - 1, N_COLS);
        let examples = grids
            .into_iter()
            .map(|(input, target)| {
                let (body, dc) = input.split_dc();
                let body = body.normalize(norm.mean, norm.std)?;
                Ok(TrainExample {
                    input: Tensor::from_vec(shape, body.values)?,
                    input_dc: dc,
                    target,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { examples, norm })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// A manifest line: an optional band-limited input and the clean reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub input: Option<PathBuf>,
    pub target: PathBuf,
}

/// Parses a manifest. Each non-empty line not starting with `#` holds either
/// `input_path target_path` or a single clean path that gets band-limited on
/// load. Relative paths resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [clean] => out.push(ManifestEntry {
                input: None,
                target: resolve(clean),
            }),
            [input, clean] => out.push(ManifestEntry {
                input: Some(resolve(input)),
                target: resolve(clean),
            }),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "manifest line {}: expected one or two paths",
                    lineno + 1
                )))
            }
        }
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Loads `(input, target)` audio for each entry.
pub fn load_pairs(entries: &[ManifestEntry]) -> Result<Vec<(AudioBuffer, AudioBuffer)>> {
    entries
        .iter()
        .map(|e| {
            let target = read_wav(&e.target)?;
            target.ensure_rate(SAMPLE_RATE)?;
            let input = match &e.input {
                Some(p) => read_wav(p)?,
                None => simulate_bcm(&target, BCM_CUTOFF_HZ)?,
            };
            Ok((input, target))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::synth::synth_utterance;
    use rand::SeedableRng;

    fn pair(seed: u64) -> (AudioBuffer, AudioBuffer) {
        let clean = synth_utterance(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), 0.5);
        (simulate_bcm(&clean, BCM_CUTOFF_HZ).unwrap(), clean)
    }

    #[test]
    fn examples_have_network_shapes() {
        let ds = Dataset::from_pairs(&[pair(1), pair(2)], None).unwrap();
        assert_eq!(ds.len(), 2 * crate::audio::frame_count(8000, FRAME_HOP));
        for ex in &ds.examples {
            assert_eq!(ex.input.shape(), Shape::new(1, 256, 9));
            assert_eq!(ex.input_dc.len(), 9);
            assert_eq!(ex.target.shape(), (257, 9));
        }
        assert!(ds.norm.std > 0.0);
    }

    #[test]
    fn given_norm_is_kept() {
        let norm = Norm {
            mean: -5.0,
            std: 3.0,
        };
        let ds = Dataset::from_pairs(&[pair(1)], Some(norm)).unwrap();
        assert_eq!(ds.norm, norm);
    }

    #[test]
    fn errors() {
        assert!(Dataset::from_pairs(&[], None).is_err());
        let (a, b) = pair(1);
        let short = AudioBuffer::new(b.samples[..100].to_vec(), 16000).unwrap();
        assert!(Dataset::from_pairs(&[(a, short)], None).is_err());
    }

    #[test]
    fn manifest_parsing() {
        let text = "# comment\nbcm/a.wav clean/a.wav\n\n/abs/b.wav\n";
        let m = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(
            m,
            vec![
                ManifestEntry {
                    input: Some("/data/bcm/a.wav".into()),
                    target: "/data/clean/a.wav".into()
                },
                ManifestEntry {
                    input: None,
                    target: "/abs/b.wav".into()
                },
            ]
        );
        assert!(parse_manifest("a b c\n", Path::new(".")).is_err());
    }

    #[test]
    fn manifest_loads_audio() {
        let dir = tempfile::tempdir().unwrap();
        let (bcm, clean) = pair(3);
        crate::audio::write_wav(dir.path().join("c.wav"), &clean).unwrap();
        crate::audio::write_wav(dir.path().join("b.wav"), &bcm).unwrap();
        std::fs::write(dir.path().join("m.txt"), "b.wav c.wav\nc.wav\n").unwrap();
        let pairs = load_pairs(&read_manifest(dir.path().join("m.txt")).unwrap()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].1.len(), clean.len());
    }
}
