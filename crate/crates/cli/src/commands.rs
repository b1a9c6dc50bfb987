use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use atsunet::audio::{read_wav, write_wav};
use atsunet::metrics::EvalReport;
use atsunet::model::{
    count_flops, count_params, load_model, save_model, Model, ModelConfig, Variant,
};
use atsunet::pipeline::{process_buffer, process_file, Engine, LatencyReport};
use atsunet::quant::quantize_model;
use atsunet::train::{
    self, load_pairs, noisy_pairs, read_manifest, simulate_bcm, synth_utterance, Dataset,
    BCM_CUTOFF_HZ,
};
use atsunet::{AudioBuffer, Error, LogPowerFeatures, Result};
use rand::SeedableRng;

use crate::config::RunConfig;

fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

pub struct SynthArgs {
    pub out: PathBuf,
    pub count: usize,
    pub test_count: usize,
    pub noise_count: usize,
    pub duration: f64,
    pub seed: u64,
}

fn write_split(
    out: &Path,
    prefix: &str,
    n: usize,
    duration: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<String> {
    let mut manifest = String::new();
    for i in 0..n {
        let name = format!("{prefix}_{i:03}.wav");
        let clean = synth_utterance(rng, duration);
        let bcm = simulate_bcm(&clean, BCM_CUTOFF_HZ)?;
        write_wav(out.join("clean").join(&name), &clean)?;
        write_wav(out.join("bcm").join(&name), &bcm)?;
        manifest.push_str(&format!("bcm/{name} clean/{name}\n"));
    }
    Ok(manifest)
}

/// Writes `clean/`, `bcm/` and optionally `noise/` WAVs plus
/// `manifest.txt` (training split) and `test_manifest.txt`.
pub fn synth(a: &SynthArgs) -> Result<()> {
    if !(a.duration > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "duration {} must be positive",
            a.duration
        )));
    }
    for d in ["clean", "bcm"] {
        fs::create_dir_all(a.out.join(d))?;
    }
    let mut r = rng(a.seed);
    fs::write(
        a.out.join("manifest.txt"),
        write_split(&a.out, "train", a.count, a.duration, &mut r)?,
    )?;
    fs::write(
        a.out.join("test_manifest.txt"),
        write_split(&a.out, "test", a.test_count, a.duration, &mut r)?,
    )?;
    if a.noise_count > 0 {
        fs::create_dir_all(a.out.join("noise"))?;
        let len = (a.duration * atsunet::SAMPLE_RATE as f64) as usize;
        for i in 0..a.noise_count {
            write_wav(
                a.out.join("noise").join(format!("noise_{i:03}.wav")),
                &train::bcm_noise(&mut r, len)?,
            )?;
        }
    }
    println!(
        "wrote {} training and {} test utterances to {}",
        a.count,
        a.test_count,
        a.out.display()
    );
    Ok(())
}

pub struct TrainArgs {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub history: Option<PathBuf>,
    pub init_model: Option<PathBuf>,
    pub noise: Vec<PathBuf>,
}

fn history_path(a: &TrainArgs) -> PathBuf {
    a.history
        .clone()
        .unwrap_or_else(|| a.out.with_extension("loss.csv"))
}

fn run_training(model: &mut Model, data: &Dataset, cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    log::info!(
        "training on {} frames for {} epochs",
        data.len(),
        cfg.epochs
    );
    let history = train::train(model, data, &cfg.train_config())?;
    save_model(model, &a.out)?;
    train::write_history_csv(history_path(a), &history)?;
    if cfg.quantize {
        let s = model.input_shape();
        let step = data.len().div_ceil(256).max(1);
        let cal = data
            .examples
            .iter()
            .step_by(step)
            .map(|e| LogPowerFeatures::new(e.input.data().to_vec(), s.f, s.t))
            .collect::<Result<Vec<_>>>()?;
        let path = a.out.with_extension("int16.atsu");
        quantize_model(model, &cal)?.save(&path)?;
        println!("int16 model {}", path.display());
    }
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!(
            "epochs {} loss {:.5} -> {:.5}; model {}",
            history.len(),
            first.loss,
            last.loss,
            a.out.display()
        );
    }
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let pairs = load_pairs(&read_manifest(&a.manifest)?)?;
    let data = Dataset::from_pairs(&pairs, None)?;
    let mut config = ModelConfig::for_variant(cfg.variant);
    config.shift_fraction = cfg.shift_fraction;
    let mut model = Model::seeded(config, cfg.seed)?;
    run_training(&mut model, &data, cfg, a)
}

/// Continues training an existing model on noise-augmented inputs.
pub fn finetune_cmd(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let init = a
        .init_model
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("finetune requires --init-model".into()))?;
    let mut model = load_model(init)?;
    let pairs = load_pairs(&read_manifest(&a.manifest)?)?;
    let pool = a
        .noise
        .iter()
        .map(read_wav)
        .collect::<Result<Vec<AudioBuffer>>>()?;
    let noisy = noisy_pairs(&pairs, &pool, &mut rng(cfg.seed))?;
    let data = Dataset::from_pairs(&noisy, Some(model.norm))?;
    run_training(&mut model, &data, cfg, a)
}

pub fn infer_cmd(
    model: &Path,
    input: &Path,
    output: &Path,
    latency_csv: Option<&Path>,
) -> Result<()> {
    let engine = Engine::load(model)?;
    let report = process_file(&engine, input, output)?;
    if let Some(p) = latency_csv {
        report.save_csv(p)?;
    }
    println!(
        "frames {} mean {:.3} ms p95 {:.3} ms rtf {:.5}",
        report.frames.len(),
        report.mean_total_ms(),
        report.p95_total_ms(),
        report.real_time_factor()
    );
    Ok(())
}

fn calibration_features(
    model: &Model,
    manifest: &Path,
    max_frames: usize,
) -> Result<Vec<LogPowerFeatures>> {
    let pairs = load_pairs(&read_manifest(manifest)?)?;
    let data = Dataset::from_pairs(&pairs, Some(model.norm))?;
    let s = model.input_shape();
    let step = data.len().div_ceil(max_frames.max(1)).max(1);
    data.examples
        .iter()
        .step_by(step)
        .map(|e| {
            let mut f = LogPowerFeatures::new(e.input.data().to_vec(), s.f, s.t)?;
            f.norm = Some(model.norm);
            Ok(f)
        })
        .collect()
}

pub fn quantize_cmd(model: &Path, manifest: &Path, out: &Path, max_frames: usize) -> Result<()> {
    let m = load_model(model)?;
    let cal = calibration_features(&m, manifest, max_frames)?;
    let q = quantize_model(&m, &cal)?;
    q.save(out)?;
    println!(
        "quantized {} layers on {} frames; input exponent {}; {}",
        q.layers.len(),
        cal.len(),
        q.input_exp,
        out.display()
    );
    Ok(())
}

pub fn eval_cmd(model: &Path, manifest: &Path, report_path: Option<&Path>) -> Result<EvalReport> {
    let engine = Engine::load(model)?;
    let mut report = EvalReport::default();
    for entry in read_manifest(manifest)? {
        let id = entry
            .target
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let pairs = load_pairs(std::slice::from_ref(&entry))?;
        let (input, clean) = &pairs[0];
        let (enhanced, _) = process_buffer(&engine, input)?;
        report.push(&id, "input", clean, input)?;
        report.push(&id, "enhanced", clean, &enhanced)?;
    }
    if report.entries.is_empty() {
        return Err(Error::Empty("manifest lists no utterances".into()));
    }
    if let Some(p) = report_path {
        report.save_csv(p)?;
    }
    println!(
        "LSD input {:.4} enhanced {:.4} over {} utterances",
        report.mean_lsd("input").unwrap_or(f64::NAN),
        report.mean_lsd("enhanced").unwrap_or(f64::NAN),
        report.entries.len() / 2
    );
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub variant: Variant,
    pub params: usize,
    pub flops: u64,
    pub float: LatencyReport,
    pub int16: LatencyReport,
}

/// Parameter count, FLOPs and per-frame latency of every variant on a
/// seeded synthetic signal with randomly initialized weights.
pub fn bench_cmd(seconds: f64, seed: u64, csv: Option<&Path>) -> Result<Vec<BenchRow>> {
    let signal = synth_utterance(&mut rng(seed), seconds);
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let model = Model::seeded(ModelConfig::for_variant(v), seed)?;
        let cal: Vec<LogPowerFeatures> = {
            let pairs = [(signal.clone(), signal.clone())];
            let data = Dataset::from_pairs(&pairs, Some(model.norm))?;
            let s = model.input_shape();
            data.examples
                .iter()
                .map(|e| LogPowerFeatures::new(e.input.data().to_vec(), s.f, s.t))
                .collect::<Result<_>>()?
        };
        let q = quantize_model(&model, &cal)?;
        let (_, float) = process_buffer(&Engine::Float(model.clone()), &signal)?;
        let (_, int16) = process_buffer(&Engine::Quantized(q), &signal)?;
        rows.push(BenchRow {
            variant: v,
            params: count_params(&model),
            flops: count_flops(&model),
            float,
            int16,
        });
    }
    let mut out: Box<dyn Write> = match csv {
        Some(p) => Box::new(std::io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(std::io::sink()),
    };
    writeln!(
        out,
        "variant,params,flops,float_mean_ms,float_p95_ms,int16_mean_ms,int16_p95_ms,rtf"
    )?;
    println!(
        "{:<8} {:>8} {:>11} {:>10} {:>10} {:>10} {:>8}",
        "variant", "params", "flops", "f64 ms", "p95 ms", "int16 ms", "rtf"
    );
    for r in &rows {
        println!(
            "{:<8} {:>8} {:>11} {:>10.3} {:>10.3} {:>10.3} {:>8.5}",
            r.variant.name(),
            r.params,
            r.flops,
            r.float.mean_total_ms(),
            r.float.p95_total_ms(),
            r.int16.mean_total_ms(),
            r.float.real_time_factor()
        );
        writeln!(
            out,
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.6}",
            r.variant.name(),
            r.params,
            r.flops,
            r.float.mean_total_ms(),
            r.float.p95_total_ms(),
            r.int16.mean_total_ms(),
            r.int16.p95_total_ms(),
            r.float.real_time_factor()
        )?;
    }
    out.flush()?;
    Ok(rows)
}
