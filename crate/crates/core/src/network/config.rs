//! Network topology, shape chaining and static counters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activations::ActivationKind;
use crate::fixed_point::QFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Gmlp,
    #[serde(rename = "convjanet")]
    ConvJanet,
    GlobalMaxPool,
    FullyConnected,
}

/// One layer of the model.
///
/// For `gmlp` the activation is the gate nonlinearity and in/out channels are
/// equal. For `convjanet` `out_channels` is the hidden width, `kernel` the
/// depthwise kernel, and the gate activations are fixed (hardsigmoid for the
/// forget gate, hardtanh for the candidate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub padding: usize,
    pub activation: ActivationKind,
    #[serde(default = "yes")]
    pub bias: bool,
}

fn yes() -> bool {
    true
}

impl LayerSpec {
    pub fn conv(name: &str, k: usize, cin: usize, cout: usize, stride: usize, padding: usize, act: ActivationKind) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Conv2d,
            kernel: (k, k),
            in_channels: cin,
            out_channels: cout,
            stride,
            padding,
            activation: act,
            bias: true,
        }
    }

    pub fn gmlp(name: &str, channels: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Gmlp,
            kernel: (1, 1),
            in_channels: channels,
            out_channels: channels,
            stride: 1,
            padding: 0,
            activation: ActivationKind::Relu,
            bias: true,
        }
    }

    pub fn convjanet(name: &str, k: usize, cin: usize, hidden: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::ConvJanet,
            kernel: (k, k),
            in_channels: cin,
            out_channels: hidden,
            stride: 1,
            padding: k / 2,
            activation: ActivationKind::HardSigmoid,
            bias: true,
        }
    }

    pub fn global_max_pool(name: &str, channels: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::GlobalMaxPool,
            kernel: (1, 1),
            in_channels: channels,
            out_channels: channels,
            stride: 1,
            padding: 0,
            activation: ActivationKind::Bypass,
            bias: false,
        }
    }

    pub fn fully_connected(name: &str, cin: usize, cout: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::FullyConnected,
            kernel: (1, 1),
            in_channels: cin,
            out_channels: cout,
            stride: 1,
            padding: 0,
            activation: ActivationKind::Bypass,
            bias: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Dims { channels, height, width }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hw(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorFormats {
    pub weight: QFormat,
    pub activation: QFormat,
    pub accumulator: QFormat,
    pub bias: QFormat,
}

impl Default for TensorFormats {
    fn default() -> Self {
        TensorFormats { weight: QFormat::Q1_7, activation: QFormat::Q5_11, accumulator: QFormat::ACCUMULATOR, bias: QFormat::ACCUMULATOR }
    }
}

/// Full model description.
///
/// Head outputs are multiplied by `output_scale` to give pixel coordinates in
/// the downsampled frame; `sensor_scale` further maps those to the sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input: Dims,
    pub layers: Vec<LayerSpec>,
    pub output_dim: usize,
    pub output_scale: f64,
    pub sensor_scale: f64,
    #[serde(default)]
    pub formats: TensorFormats,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("layer '{layer}': {reason}")]
    Layer { layer: String, reason: String },
    #[error("model output has {found} values, expected {expected}")]
    OutputDim { found: usize, expected: usize },
    #[error("unsupported tensor formats: only Q1.7 weights, Q5.11 activations and 32-bit accumulators are implemented")]
    Formats,
    #[error("model has no layers")]
    Empty,
}

impl Default for ModelConfig {
    fn default() -> Self {
        use ActivationKind::Relu;
        ModelConfig {
            input: Dims::new(3, 60, 80),
            layers: vec![
                LayerSpec::conv("conv1", 7, 3, 4, 2, 3, Relu),
                LayerSpec::conv("conv2", 3, 4, 24, 2, 1, Relu),
                LayerSpec::conv("conv3", 3, 24, 24, 1, 1, Relu),
                LayerSpec::gmlp("gmlp", 24),
                LayerSpec::convjanet("janet", 3, 24, 48),
                LayerSpec::global_max_pool("pool", 48),
                LayerSpec::fully_connected("fc", 48, 2),
            ],
            output_dim: 2,
            output_scale: 8.0,
            sensor_scale: 8.0,
            formats: TensorFormats::default(),
        }
    }
}

/// Primitive operations a layer expands to. Both engines and the accelerator
/// model iterate this list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OpKind {
    /// Standard, depthwise or pointwise convolution. A fully connected layer
    /// is a 1x1 convolution over a 1x1 input.
    Conv { kernel: (usize, usize), stride: usize, padding: usize, in_channels: usize, out_channels: usize, depthwise: bool, fully_connected: bool },
    /// Elementwise products on the PE multipliers.
    Elementwise { elements: usize, mults_per_element: usize },
    /// Per-channel spatial maximum.
    MaxPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpSpec {
    pub name: String,
    pub layer: usize,
    pub layer_kind: LayerKind,
    pub kind: OpKind,
    pub input: Dims,
    pub output: Dims,
    pub activation: ActivationKind,
}

impl OpSpec {
    /// Multiply-accumulates of a convolution (zero for other ops).
    pub fn macs(&self) -> u64 {
        match self.kind {
            OpKind::Conv { kernel, in_channels, out_channels, depthwise, .. } => {
                let per_out = if depthwise { 1 } else { in_channels } * kernel.0 * kernel.1;
                (self.output.hw() * out_channels * per_out) as u64
            }
            _ => 0,
        }
    }

    pub fn elementwise_ops(&self) -> u64 {
        match self.kind {
            OpKind::Elementwise { elements, mults_per_element } => (elements * mults_per_element) as u64,
            OpKind::MaxPool => self.input.len() as u64,
            OpKind::Conv { .. } => 0,
        }
    }

    pub fn weight_count(&self) -> usize {
        match self.kind {
            OpKind::Conv { kernel, in_channels, out_channels, depthwise, .. } => out_channels * if depthwise { 1 } else { in_channels } * kernel.0 * kernel.1,
            _ => 0,
        }
    }

    pub fn bias_count(&self, spec: &LayerSpec) -> usize {
        match self.kind {
            OpKind::Conv { out_channels, .. } if spec.bias => out_channels,
            _ => 0,
        }
    }
}

fn conv_out(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    (n + 2 * pad).checked_sub(k).map(|v| v / stride + 1)
}

impl ModelConfig {
    pub fn layer_by_name(&self, name: &str) -> Option<(usize, &LayerSpec)> {
        self.layers.iter().enumerate().find(|(_, l)| l.name == name)
    }

    /// Expand layers into primitive ops, validating shape chaining.
    pub fn ops(&self) -> Result<Vec<OpSpec>, ConfigError> {
        if self.formats != TensorFormats::default() {
            return Err(ConfigError::Formats);
        }
        if self.layers.is_empty() {
            return Err(ConfigError::Empty);
        }
        let mut ops = Vec::new();
        let mut cur = self.input;
        for (li, l) in self.layers.iter().enumerate() {
            let err = |reason: String| ConfigError::Layer { layer: l.name.clone(), reason };
            let flat_in = l.kind == LayerKind::FullyConnected;
            let expect_in = if flat_in { cur.len() } else { cur.channels };
            if l.in_channels != expect_in {
                return Err(err(format!("expects {} input channels, previous layer provides {}", l.in_channels, expect_in)));
            }
            if l.in_channels == 0 || l.out_channels == 0 {
                return Err(err("channel counts must be positive".into()));
            }
            if self.layers[..li].iter().any(|p| p.name == l.name) {
                return Err(err("duplicate layer name".into()));
            }
            let mut push = |suffix: &str, kind: OpKind, input: Dims, output: Dims, act: ActivationKind| {
                let name = if suffix.is_empty() { l.name.clone() } else { format!("{}.{suffix}", l.name) };
                ops.push(OpSpec { name, layer: li, layer_kind: l.kind, kind, input, output, activation: act });
                output
            };
            let conv = |k: (usize, usize), stride: usize, padding: usize, cin: usize, cout: usize, dw: bool| OpKind::Conv {
                kernel: k,
                stride,
                padding,
                in_channels: cin,
                out_channels: cout,
                depthwise: dw,
                fully_connected: false,
            };
            cur = match l.kind {
                LayerKind::Conv2d => {
                    let (kh, kw) = l.kernel;
                    if kh == 0 || kw == 0 || l.stride == 0 {
                        return Err(err("kernel and stride must be positive".into()));
                    }
                    let oh = conv_out(cur.height, kh, l.stride, l.padding);
                    let ow = conv_out(cur.width, kw, l.stride, l.padding);
                    let (Some(oh), Some(ow)) = (oh, ow) else {
                        return Err(err(format!("kernel {kh}x{kw} larger than padded input {}x{}", cur.height, cur.width)));
                    };
                    let out = Dims::new(l.out_channels, oh, ow);
                    push("", conv(l.kernel, l.stride, l.padding, l.in_channels, l.out_channels, false), cur, out, l.activation)
                }
                LayerKind::Gmlp => {
                    if l.out_channels != l.in_channels {
                        return Err(err("gmlp must preserve channel count".into()));
                    }
                    let c = l.in_channels;
                    let z = Dims::new(2 * c, cur.height, cur.width);
                    let y = Dims::new(c, cur.height, cur.width);
                    push("expand", conv((1, 1), 1, 0, c, 2 * c, false), cur, z, ActivationKind::Bypass);
                    push("gate", OpKind::Elementwise { elements: y.len(), mults_per_element: 1 }, z, y, l.activation);
                    push("project", conv((1, 1), 1, 0, c, c, false), y, y, ActivationKind::Bypass)
                }
                LayerKind::ConvJanet => {
                    let (kh, kw) = l.kernel;
                    if kh % 2 == 0 || kw % 2 == 0 || kh != kw {
                        return Err(err("convjanet kernel must be square and odd".into()));
                    }
                    if l.stride != 1 || l.padding != kh / 2 {
                        return Err(err("convjanet convolutions must be stride 1 with same padding".into()));
                    }
                    let cat = Dims::new(l.in_channels + l.out_channels, cur.height, cur.width);
                    let h = Dims::new(l.out_channels, cur.height, cur.width);
                    for (gate, act) in [("f", ActivationKind::HardSigmoid), ("g", ActivationKind::HardTanh)] {
                        push(&format!("{gate}_dw"), conv(l.kernel, 1, l.padding, cat.channels, cat.channels, true), cat, cat, ActivationKind::Bypass);
                        push(&format!("{gate}_pw"), conv((1, 1), 1, 0, cat.channels, h.channels, false), cat, h, act);
                    }
                    push("cell", OpKind::Elementwise { elements: h.len(), mults_per_element: 2 }, h, h, ActivationKind::Bypass)
                }
                LayerKind::GlobalMaxPool => {
                    if l.out_channels != l.in_channels {
                        return Err(err("pooling must preserve channel count".into()));
                    }
                    push("", OpKind::MaxPool, cur, Dims::new(cur.channels, 1, 1), ActivationKind::Bypass)
                }
                LayerKind::FullyConnected => {
                    let input = Dims::new(cur.len(), 1, 1);
                    let kind = OpKind::Conv {
                        kernel: (1, 1),
                        stride: 1,
                        padding: 0,
                        in_channels: l.in_channels,
                        out_channels: l.out_channels,
                        depthwise: false,
                        fully_connected: true,
                    };
                    push("", kind, input, Dims::new(l.out_channels, 1, 1), l.activation)
                }
            };
        }
        if cur.len() != self.output_dim {
            return Err(ConfigError::OutputDim { found: cur.len(), expected: self.output_dim });
        }
        Ok(ops)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ops().map(|_| ())
    }

    /// Output dims of every layer, in order.
    pub fn layer_outputs(&self) -> Result<Vec<Dims>, ConfigError> {
        let ops = self.ops()?;
        Ok((0..self.layers.len()).map(|li| ops.iter().rev().find(|o| o.layer == li).unwrap().output).collect())
    }

    /// Input dims of every layer, in order.
    pub fn layer_inputs(&self) -> Result<Vec<Dims>, ConfigError> {
        let ops = self.ops()?;
        Ok((0..self.layers.len())
            .map(|li| {
                let o = ops.iter().find(|o| o.layer == li).unwrap();
                if self.layers[li].kind == LayerKind::ConvJanet {
                    Dims::new(self.layers[li].in_channels, o.input.height, o.input.width)
                } else {
                    o.input
                }
            })
            .collect())
    }

    pub fn layer_params(&self, li: usize) -> Result<usize, ConfigError> {
        let ops = self.ops()?;
        Ok(ops.iter().filter(|o| o.layer == li).map(|o| o.weight_count() + o.bias_count(&self.layers[li])).sum())
    }

    pub fn param_count(&self) -> Result<usize, ConfigError> {
        let ops = self.ops()?;
        Ok(ops.iter().map(|o| o.weight_count() + o.bias_count(&self.layers[o.layer])).sum())
    }

    pub fn mac_count(&self) -> Result<u64, ConfigError> {
        Ok(self.ops()?.iter().map(OpSpec::macs).sum())
    }

    /// Two operations per MAC; elementwise work is reported separately.
    pub fn flops(&self) -> Result<u64, ConfigError> {
        Ok(2 * self.mac_count()?)
    }

    pub fn elementwise_ops(&self) -> Result<u64, ConfigError> {
        Ok(self.ops()?.iter().map(OpSpec::elementwise_ops).sum())
    }

    pub fn janet_layers(&self) -> impl Iterator<Item = (usize, &LayerSpec)> {
        self.layers.iter().enumerate().filter(|(_, l)| l.kind == LayerKind::ConvJanet)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_and_budgets() {
        let cfg = ModelConfig::default();
        let outs = cfg.layer_outputs().unwrap();
        assert_eq!(outs[0], Dims::new(4, 30, 40));
        assert_eq!(outs[1], Dims::new(24, 15, 20));
        assert_eq!(outs[2], Dims::new(24, 15, 20));
        assert_eq!(outs[4], Dims::new(48, 15, 20));
        assert_eq!(outs[6], Dims::new(2, 1, 1));
        assert_eq!(cfg.param_count().unwrap(), 17_034);
        assert_eq!(cfg.mac_count().unwrap(), 5_500_896);
        assert_eq!(cfg.flops().unwrap(), 11_001_792);
    }

    #[test]
    fn per_layer_params_closed_form() {
        let cfg = ModelConfig::default();
        let want = [3 * 4 * 49 + 4, 4 * 24 * 9 + 24, 24 * 24 * 9 + 24, (24 * 48 + 48) + (24 * 24 + 24), 2 * (72 * 9 + 72 + 72 * 48 + 48), 0, 48 * 2 + 2];
        for (li, w) in want.iter().enumerate() {
            assert_eq!(cfg.layer_params(li).unwrap(), *w, "layer {li}");
        }
    }

    #[test]
    fn chaining_errors() {
        let mut cfg = ModelConfig::default();
        cfg.layers[1].in_channels = 5;
        assert!(matches!(cfg.validate(), Err(ConfigError::Layer { .. })));
        let mut cfg = ModelConfig::default();
        cfg.layers[6].out_channels = 3;
        assert!(matches!(cfg.validate(), Err(ConfigError::OutputDim { found: 3, .. })));
        let mut cfg = ModelConfig::default();
        cfg.layers[4].kernel = (4, 4);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let cfg = ModelConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        assert!(s.contains("\"convjanet\"") && s.contains("\"hardsigmoid\""));
        let back: ModelConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
    }
}
