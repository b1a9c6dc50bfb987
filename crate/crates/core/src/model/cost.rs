//! Analytic parameter and FLOP accounting.

use super::config::ModelConfig;
use super::net::{layer_plan, Model};
use crate::nn::ConvKind;

pub fn conv_params(c_in: usize, c_out: usize, kind: ConvKind) -> usize {
    c_out * c_in * kind.taps() + c_out
}

/// Two FLOPs per multiply-accumulate over every output element.
pub fn conv_flops(c_in: usize, c_out: usize, kind: ConvKind, bins: usize, frames: usize) -> u64 {
    2 * (kind.taps() * c_in * c_out * bins * frames) as u64
}

pub fn count_params(m: &Model) -> usize {
    m.layers.iter().map(|l| l.param_count()).sum()
}

pub fn count_params_for(cfg: &ModelConfig) -> usize {
    layer_plan(cfg)
        .iter()
        .map(|l| conv_params(l.c_in, l.c_out, l.kind))
        .sum()
}

/// Convolution FLOPs plus one comparison per max-pool output. Up-sampling,
/// concatenation and temporal shifts are data movement and count zero.
pub fn count_flops_for(cfg: &ModelConfig) -> u64 {
    let t = cfg.input_frames;
    let mut total = 0u64;
    for l in layer_plan(cfg) {
        total += conv_flops(l.c_in, l.c_out, l.kind, l.bins, t);
        if let super::config::Block::Down(_) = l.block {
            if l.index == 0 {
                total += (l.c_in * l.bins * t) as u64;
            }
        }
    }
    total
}

pub fn count_flops(m: &Model) -> u64 {
    count_flops_for(&m.config)
}
