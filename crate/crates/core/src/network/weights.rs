//! Parameter storage, one entry per convolution-like op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, ModelConfig, OpKind, OpSpec};
use crate::fixed_point::{accumulator_to_f64, weight_to_f64, ACC_FRAC_BITS};

/// Weights `[out][fan_in][kh][kw]` and optional per-output bias. Depthwise
/// ops have `fan_in == 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams<W, B> {
    pub name: String,
    pub out_channels: usize,
    pub fan_in: usize,
    pub kernel: (usize, usize),
    pub weight: Vec<W>,
    pub bias: Option<Vec<B>>,
}

impl<W: Copy, B: Copy> ConvParams<W, B> {
    #[inline]
    pub fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> W {
        self.weight[((o * self.fan_in + i) * self.kernel.0 + ky) * self.kernel.1 + kx]
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.fan_in, self.kernel.0, self.kernel.1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet<W, B> {
    pub convs: Vec<ConvParams<W, B>>,
}

pub type FloatWeights = WeightSet<f64, f64>;
pub type FixedWeights = WeightSet<i8, i32>;

#[derive(Debug, Error, PartialEq)]
pub enum WeightError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("weight set has {found} parameter groups, model needs {expected}")]
    Count { found: usize, expected: usize },
    #[error("parameter group '{name}': {reason}")]
    Shape { name: String, reason: String },
}

fn conv_ops(config: &ModelConfig) -> Result<Vec<OpSpec>, ConfigError> {
    Ok(config.ops()?.into_iter().filter(|o| matches!(o.kind, OpKind::Conv { .. })).collect())
}

impl<W: Copy + Default, B: Copy + Default> WeightSet<W, B> {
    /// Zero-filled parameters shaped for `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self, ConfigError> {
        Self::generate(config, |_, _| W::default(), |_, _| B::default())
    }

    /// Build by calling `fw(op, index)` and `fb(op, index)` for every element.
    pub fn generate(config: &ModelConfig, mut fw: impl FnMut(&OpSpec, usize) -> W, mut fb: impl FnMut(&OpSpec, usize) -> B) -> Result<Self, ConfigError> {
        let mut convs = Vec::new();
        for op in conv_ops(config)? {
            let OpKind::Conv { kernel, in_channels, out_channels, depthwise, .. } = op.kind else { unreachable!() };
            let fan_in = if depthwise { 1 } else { in_channels };
            let n = out_channels * fan_in * kernel.0 * kernel.1;
            let weight = (0..n).map(|i| fw(&op, i)).collect();
            let bias = config.layers[op.layer].bias.then(|| (0..out_channels).map(|i| fb(&op, i)).collect());
            convs.push(ConvParams { name: op.name.clone(), out_channels, fan_in, kernel, weight, bias });
        }
        Ok(WeightSet { convs })
    }

    pub fn get(&self, name: &str) -> Option<&ConvParams<W, B>> {
        self.convs.iter().find(|c| c.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ConvParams<W, B>> {
        self.convs.iter_mut().find(|c| c.name == name)
    }

    /// Check names and shapes against `config`.
    pub fn check(&self, config: &ModelConfig) -> Result<(), WeightError> {
        let shape = Self::zeros(config)?;
        if shape.convs.len() != self.convs.len() {
            return Err(WeightError::Count { found: self.convs.len(), expected: shape.convs.len() });
        }
        for (want, got) in shape.convs.iter().zip(&self.convs) {
            let err = |reason: String| WeightError::Shape { name: got.name.clone(), reason };
            if want.name != got.name {
                return Err(err(format!("expected group '{}' at this position", want.name)));
            }
            if want.weight_shape() != got.weight_shape() {
                return Err(err(format!("weight shape {:?}, expected {:?}", got.weight_shape(), want.weight_shape())));
            }
            if got.weight.len() != want.weight.len() {
                return Err(err(format!("weight has {} values, expected {}", got.weight.len(), want.weight.len())));
            }
            match (&want.bias, &got.bias) {
                (None, None) => {}
                (Some(a), Some(b)) if a.len() == b.len() => {}
                (a, b) => return Err(err(format!("bias length {:?}, expected {:?}", b.as_ref().map(Vec::len), a.as_ref().map(Vec::len)))),
            }
        }
        Ok(())
    }

    pub fn map<W2, B2>(&self, fw: impl Fn(W) -> W2, fb: impl Fn(B) -> B2) -> WeightSet<W2, B2> {
        WeightSet {
            convs: self
                .convs
                .iter()
                .map(|c| ConvParams {
                    name: c.name.clone(),
                    out_channels: c.out_channels,
                    fan_in: c.fan_in,
                    kernel: c.kernel,
                    weight: c.weight.iter().map(|&w| fw(w)).collect(),
                    bias: c.bias.as_ref().map(|b| b.iter().map(|&v| fb(v)).collect()),
                })
                .collect(),
        }
    }

    pub fn weight_count(&self) -> usize {
        self.convs.iter().map(|c| c.weight.len()).sum()
    }

    pub fn bias_count(&self) -> usize {
        self.convs.iter().map(|c| c.bias.as_ref().map_or(0, Vec::len)).sum()
    }
}

fn head_centre(config: &ModelConfig) -> [f64; 2] {
    [config.input.width as f64 / 2.0 / config.output_scale, config.input.height as f64 / 2.0 / config.output_scale]
}

fn is_head(op: &OpSpec) -> bool {
    matches!(op.kind, OpKind::Conv { fully_connected: true, .. }) && op.output.channels == 2
}

impl FloatWeights {
    /// All zeros except the head bias, which points at the frame centre.
    pub fn centred_zeros(config: &ModelConfig) -> Result<Self, ConfigError> {
        let mut ws = Self::zeros(config)?;
        let centre = head_centre(config);
        for (c, op) in ws.convs.iter_mut().zip(&conv_ops(config)?) {
            if let (true, Some(b)) = (is_head(op), &mut c.bias) {
                b.copy_from_slice(&centre);
            }
        }
        Ok(ws)
    }

    /// Uniform fan-in scaled initialization, clipped inside the Q1.7 range.
    /// Head biases start at the frame centre.
    pub fn random(config: &ModelConfig, seed: u64) -> Result<Self, ConfigError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws = Self::zeros(config)?;
        let centre = head_centre(config);
        let ops = conv_ops(config)?;
        for (c, op) in ws.convs.iter_mut().zip(&ops) {
            let fan = (c.fan_in * c.kernel.0 * c.kernel.1) as f64;
            let bound = (6.0 / fan).sqrt().min(0.99);
            for w in &mut c.weight {
                *w = rng.gen_range(-bound..bound);
            }
            let head = is_head(op);
            if let Some(b) = &mut c.bias {
                for (i, v) in b.iter_mut().enumerate() {
                    *v = if head { centre[i] } else { rng.gen_range(-0.05..0.05) };
                }
            }
        }
        Ok(ws)
    }
}

impl FixedWeights {
    /// Random raw weights with the same fan-in scaling as the float initializer.
    pub fn random(config: &ModelConfig, seed: u64) -> Result<Self, ConfigError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ws = Self::zeros(config)?;
        for c in &mut ws.convs {
            let fan = (c.fan_in * c.kernel.0 * c.kernel.1) as f64;
            let bound = ((6.0 / fan).sqrt() * 128.0).clamp(1.0, 127.0) as i32;
            for w in &mut c.weight {
                *w = rng.gen_range(-bound..=bound).clamp(-128, 127) as i8;
            }
            if let Some(b) = &mut c.bias {
                let bb = 1i32 << (ACC_FRAC_BITS - 4);
                for v in b.iter_mut() {
                    *v = rng.gen_range(-bb..=bb);
                }
            }
        }
        Ok(ws)
    }

    /// Exact real values of the raw parameters.
    pub fn dequantize(&self) -> FloatWeights {
        self.map(weight_to_f64, accumulator_to_f64)
    }
}
