use rand::{Rng, SeedableRng};

use super::config::{Block, ModelConfig};
use crate::dsp::{LogPowerFeatures, Norm};
use crate::error::{Error, Result};
use crate::nn::{self, ConvGrads, ConvKind, ConvParams, PoolIndices, Shape, Tensor};

/// One convolution of the network and where it sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub block: Block,
    pub index: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kind: ConvKind,
    /// Frequency extent the layer runs at.
    pub bins: usize,
    pub relu: bool,
}

/// Channel count at each resolution level: level 0 is the stem.
fn level_channels(cfg: &ModelConfig) -> Vec<usize> {
    std::iter::once(cfg.stem_channels)
        .chain(cfg.encoder_channels.iter().copied())
        .collect()
}

/// Ordered convolution list: stem (2), down blocks (2 each), up blocks
/// (2 each), head (1).
pub fn layer_plan(cfg: &ModelConfig) -> Vec<LayerSpec> {
    let depth = cfg.depth();
    let ch = level_channels(cfg);
    let mut plan = Vec::with_capacity(4 * depth + 3);
    let mut push = |block, index, c_in, c_out, bins, relu| {
        plan.push(LayerSpec {
            block,
            index,
            c_in,
            c_out,
            kind: cfg.conv_kind(block, index),
            bins,
            relu,
        })
    };
    let f0 = cfg.input_bins;
    push(Block::Stem, 0, 1, ch[0], f0, true);
    push(Block::Stem, 1, ch[0], ch[0], f0, true);
    for i in 1..=depth {
        push(Block::Down(i), 0, ch[i - 1], ch[i], f0 >> i, true);
        push(Block::Down(i), 1, ch[i], ch[i], f0 >> i, true);
    }
    for k in 1..=depth {
        let level = depth - k;
        push(
            Block::Up(k),
            0,
            ch[level + 1] + ch[level],
            ch[level],
            f0 >> level,
            true,
        );
        push(Block::Up(k), 1, ch[level], ch[level], f0 >> level, true);
    }
    push(Block::Head, 0, ch[0], 1, f0, false);
    plan
}

/// Index of the first convolution of a block in [`layer_plan`] order.
pub fn block_start(depth: usize, block: Block) -> usize {
    match block {
        Block::Stem => 0,
        Block::Down(i) => 2 * i,
        Block::Up(k) => 2 + 2 * depth + 2 * (k - 1),
        Block::Head => 2 + 4 * depth,
    }
}

/// Float UNet: configuration, convolution weights and feature statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub layers: Vec<ConvParams>,
    pub norm: Norm,
}

/// Intermediate values kept by a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Tensor>,
    outputs: Vec<Tensor>,
    pools: Vec<PoolIndices>,
    shifts: usize,
}

impl ForwardCache {
    /// Number of temporal shifts applied during the pass.
    pub fn shift_count(&self) -> usize {
        self.shifts
    }
}

impl Model {
    /// Builds a randomly initialized network (Glorot-uniform weights).
    pub fn build<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layers = layer_plan(&config)
            .iter()
            .map(|l| ConvParams::glorot(l.c_in, l.c_out, l.kind, rng))
            .collect();
        Ok(Self {
            config,
            layers,
            norm: Norm {
                mean: 0.0,
                std: 1.0,
            },
        })
    }

    pub fn seeded(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::build(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    /// A network wired so that its output equals its input exactly. Useful to
    /// test the surrounding signal chain. The signal is carried through the
    /// last two stem channels as a `(relu(x), relu(-x))` pair, which the
    /// temporal shift leaves untouched.
    pub fn passthrough(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let plan = layer_plan(&config);
        let mut layers: Vec<ConvParams> = plan
            .iter()
            .map(|l| ConvParams::zeros(l.c_in, l.c_out, l.kind))
            .collect();
        let c0 = config.stem_channels;
        if c0 < 2 {
            return Err(Error::InvalidArgument(
                "passthrough needs at least 2 stem channels".into(),
            ));
        }
        if config.variant.uses_shift() && nn::dynamic_channels(c0, config.shift_fraction)? + 2 > c0
        {
            return Err(Error::InvalidArgument(
                "passthrough needs two unshifted stem channels".into(),
            ));
        }
        let (pos, neg) = (c0 - 2, c0 - 1);
        let depth = config.depth();
        layers[0].set_identity_tap(pos, 0, 1.0);
        layers[0].set_identity_tap(neg, 0, -1.0);
        layers[1].set_identity_tap(pos, pos, 1.0);
        layers[1].set_identity_tap(neg, neg, 1.0);
        let last_up = block_start(depth, Block::Up(depth));
        let below = config.encoder_channels[0];
        layers[last_up].set_identity_tap(pos, below + pos, 1.0);
        layers[last_up].set_identity_tap(neg, below + neg, 1.0);
        layers[last_up + 1].set_identity_tap(pos, pos, 1.0);
        layers[last_up + 1].set_identity_tap(neg, neg, 1.0);
        let head = block_start(depth, Block::Head);
        layers[head].set_identity_tap(0, pos, 1.0);
        layers[head].set_identity_tap(0, neg, -1.0);
        Ok(Self {
            config,
            layers,
            norm: Norm {
                mean: 0.0,
                std: 1.0,
            },
        })
    }

    pub fn input_shape(&self) -> Shape {
        Shape::new(1, self.config.input_bins, self.config.input_frames)
    }

    pub fn plan(&self) -> Vec<LayerSpec> {
        layer_plan(&self.config)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.run(x, None, &mut |_, _| {})
    }

    /// Forward pass that calls `observe(layer, activation)` after every
    /// convolution (post-ReLU where applicable).
    pub fn forward_observed(
        &self,
        x: &Tensor,
        observe: &mut dyn FnMut(usize, &Tensor),
    ) -> Result<Tensor> {
        self.run(x, None, observe)
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let mut cache = ForwardCache {
            inputs: Vec::new(),
            outputs: Vec::new(),
            pools: Vec::new(),
            shifts: 0,
        };
        let y = self.run(x, Some(&mut cache), &mut |_, _| {})?;
        Ok((y, cache))
    }

    fn run(
        &self,
        x: &Tensor,
        mut cache: Option<&mut ForwardCache>,
        observe: &mut dyn FnMut(usize, &Tensor),
    ) -> Result<Tensor> {
        if x.shape() != self.input_shape() {
            return Err(Error::ShapeMismatch(format!(
                "model input {} expected {}",
                x.shape(),
                self.input_shape()
            )));
        }
        let depth = self.config.depth();
        let shift = self.config.variant.uses_shift();
        let frac = self.config.shift_fraction;
        let mut layer = 0usize;
        let mut apply = |h: Tensor, cache: &mut Option<&mut ForwardCache>| -> Result<Tensor> {
            let p = &self.layers[layer];
            let mut y = nn::conv(&h, p)?;
            if layer + 1 < self.layers.len() {
                nn::relu_in_place(&mut y);
            }
            observe(layer, &y);
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(h);
                c.outputs.push(y.clone());
            }
            layer += 1;
            Ok(y)
        };

        let mut h = apply(x.clone(), &mut cache)?;
        h = apply(h, &mut cache)?;
        let mut skips = vec![h.clone()];
        for _ in 1..=depth {
            let (pooled, idx) = nn::maxpool_f(&h)?;
            if let Some(c) = cache.as_deref_mut() {
                c.pools.push(idx);
            }
            h = apply(pooled, &mut cache)?;
            h = apply(h, &mut cache)?;
            if shift {
                h = nn::atsm(&h, frac)?;
                if let Some(c) = cache.as_deref_mut() {
                    c.shifts += 1;
                }
            }
            skips.push(h.clone());
        }
        for k in 1..=depth {
            let up = nn::upsample_f(&h);
            h = nn::concat_channels(&up, &skips[depth - k])?;
            h = apply(h, &mut cache)?;
            h = apply(h, &mut cache)?;
            if shift {
                h = nn::atsm(&h, frac)?;
                if let Some(c) = cache.as_deref_mut() {
                    c.shifts += 1;
                }
            }
        }
        apply(h, &mut cache)
    }

    /// Gradients of every layer given d(loss)/d(output).
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<Vec<ConvGrads>> {
        let depth = self.config.depth();
        let shift = self.config.variant.uses_shift();
        let frac = self.config.shift_fraction;
        let n = self.layers.len();
        if cache.inputs.len() != n {
            return Err(Error::ShapeMismatch(
                "forward cache does not match model".into(),
            ));
        }
        let mut grads: Vec<Option<ConvGrads>> = vec![None; n];
        let back =
            |layer: usize, g: Tensor, grads: &mut Vec<Option<ConvGrads>>| -> Result<Tensor> {
                let g = if layer + 1 < n {
                    nn::relu_backward(&cache.outputs[layer], &g)?
                } else {
                    g
                };
                let (gx, gp) = nn::conv_backward(&cache.inputs[layer], &self.layers[layer], &g)?;
                grads[layer] = Some(gp);
                Ok(gx)
            };

        let mut g = back(n - 1, grad_out.clone(), &mut grads)?;
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; depth];
        for k in (1..=depth).rev() {
            if shift {
                g = nn::atsm_backward(&g, frac)?;
            }
            let first = block_start(depth, Block::Up(k));
            g = back(first + 1, g, &mut grads)?;
            g = back(first, g, &mut grads)?;
            let level = depth - k;
            let up_channels = self.layers[first].c_in - self.config_channels(level);
            let (g_up, g_skip) = nn::split_channels(&g, up_channels)?;
            skip_grads[level] = Some(g_skip);
            g = nn::upsample_f_backward(&g_up)?;
        }
        for i in (1..=depth).rev() {
            if i < depth {
                add_into(&mut g, skip_grads[i].as_ref().expect("skip gradient"));
            }
            if shift {
                g = nn::atsm_backward(&g, frac)?;
            }
            let first = block_start(depth, Block::Down(i));
            g = back(first + 1, g, &mut grads)?;
            g = back(first, g, &mut grads)?;
            g = nn::maxpool_f_backward(&g, &cache.pools[i - 1])?;
        }
        add_into(&mut g, skip_grads[0].as_ref().expect("stem skip gradient"));
        g = back(1, g, &mut grads)?;
        back(0, g, &mut grads)?;
        Ok(grads
            .into_iter()
            .map(|g| g.expect("every layer visited"))
            .collect())
    }

    fn config_channels(&self, level: usize) -> usize {
        if level == 0 {
            self.config.stem_channels
        } else {
            self.config.encoder_channels[level - 1]
        }
    }

    /// Maps normalized log-power features without the DC row (`bins x frames`)
    /// to enhanced features of the same shape.
    pub fn forward_features(&self, f: &LogPowerFeatures) -> Result<LogPowerFeatures> {
        let shape = self.input_shape();
        if f.shape() != (shape.f, shape.t) {
            return Err(Error::ShapeMismatch(format!(
                "features {}x{} expected {}x{}",
                f.n_bins, f.n_frames, shape.f, shape.t
            )));
        }
        let y = self.forward(&Tensor::from_vec(shape, f.values.clone())?)?;
        Ok(LogPowerFeatures {
            values: y.into_data(),
            n_bins: shape.f,
            n_frames: shape.t,
            norm: f.norm,
        })
    }
}

fn add_into(a: &mut Tensor, b: &Tensor) {
    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
}
