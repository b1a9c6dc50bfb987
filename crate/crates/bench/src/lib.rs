//! Fixtures shared by the criterion benchmarks.

use atsunet::model::{Model, ModelConfig, Variant};
use atsunet::pipeline::Engine;
use atsunet::quant::quantize_model;
use atsunet::train::{synth_utterance, Dataset};
use atsunet::{AudioBuffer, LogPowerFeatures, FRAME_LEN};
use rand::SeedableRng;

/// One second of seeded synthetic speech.
pub fn speech() -> AudioBuffer {
    synth_utterance(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1), 1.0)
}

/// A 2048-sample frame from the middle of [`speech`].
pub fn frame() -> Vec<f64> {
    speech().samples[4096..4096 + FRAME_LEN].to_vec()
}

/// Float and int16 engines for a seeded model of the given variant.
pub fn engines(variant: Variant) -> (Engine, Engine) {
    let model =
        Model::seeded(ModelConfig::for_variant(variant), 3).expect("default config is valid");
    let s = speech();
    let data =
        Dataset::from_pairs(&[(s.clone(), s)], Some(model.norm)).expect("one second of audio");
    let shape = model.input_shape();
    let cal: Vec<LogPowerFeatures> = data
        .examples
        .iter()
        .map(|e| {
            LogPowerFeatures::new(e.input.data().to_vec(), shape.f, shape.t)
                .expect("network-shaped")
        })
        .collect();
    let q = quantize_model(&model, &cal).expect("non-empty calibration");
    (Engine::Float(model), Engine::Quantized(q))
}
