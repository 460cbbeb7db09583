//! ConvLSTM cell of the same shape as a ConvJANET layer, kept as a baseline
//! for parameter and MAC comparisons.

use serde::{Deserialize, Serialize};

use super::config::{LayerKind, LayerSpec};
use super::ops::{self, ReferenceActivations};
use super::weights::ConvParams;
use crate::activations::{sigmoid, ActivationKind};
use crate::tensor::Tensor;

/// Shape shared by the recurrent cells: input channels, hidden channels,
/// depthwise kernel and spatial size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellShape {
    pub in_channels: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub height: usize,
    pub width: usize,
}

impl CellShape {
    pub fn from_layer(l: &LayerSpec, height: usize, width: usize) -> Self {
        assert_eq!(l.kind, LayerKind::ConvJanet);
        CellShape { in_channels: l.in_channels, hidden: l.out_channels, kernel: l.kernel.0, height, width }
    }

    fn concat(&self) -> usize {
        self.in_channels + self.hidden
    }

    /// Parameters of one gate path: depthwise k x k then 1x1, both biased.
    pub fn gate_path_params(&self) -> usize {
        let c = self.concat();
        c * self.kernel * self.kernel + c + c * self.hidden + self.hidden
    }

    pub fn gate_path_macs(&self) -> u64 {
        let c = self.concat();
        ((self.height * self.width) * (c * self.kernel * self.kernel + c * self.hidden)) as u64
    }
}

/// Gate paths of each cell type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    ConvJanet,
    ConvLstm,
}

impl CellKind {
    pub fn gate_paths(self) -> usize {
        match self {
            CellKind::ConvJanet => 2,
            CellKind::ConvLstm => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounters {
    pub cell: CellKind,
    pub gate_params: usize,
    pub gate_macs: u64,
}

pub fn gate_counters(cell: CellKind, shape: &CellShape) -> GateCounters {
    let n = cell.gate_paths();
    GateCounters { cell, gate_params: n * shape.gate_path_params(), gate_macs: n as u64 * shape.gate_path_macs() }
}

/// Real-valued ConvLSTM parameters: input, forget, output and candidate
/// paths, each a depthwise convolution followed by a 1x1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmParams {
    pub shape: CellShape,
    pub paths: [(ConvParams<f64, f64>, ConvParams<f64, f64>); 4],
}

impl ConvLstmParams {
    pub fn gate_params(&self) -> usize {
        self.paths.iter().map(|(d, p)| d.weight.len() + p.weight.len() + d.bias.as_ref().map_or(0, Vec::len) + p.bias.as_ref().map_or(0, Vec::len)).sum()
    }

    pub fn random(shape: CellShape, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let c = shape.in_channels + shape.hidden;
        let k = shape.kernel;
        let mut mk = |name: &str, out: usize, fan: usize, kk: usize| ConvParams {
            name: name.into(),
            out_channels: out,
            fan_in: fan,
            kernel: (kk, kk),
            weight: (0..out * fan * kk * kk).map(|_| rng.gen_range(-0.3..0.3)).collect(),
            bias: Some((0..out).map(|_| rng.gen_range(-0.05..0.05)).collect()),
        };
        let mut path = |n: &str| (mk(&format!("{n}_dw"), c, 1, k), mk(&format!("{n}_pw"), shape.hidden, c, 1));
        ConvLstmParams { shape, paths: [path("i"), path("f"), path("o"), path("g")] }
    }
}

/// One real-valued ConvLSTM step; returns `(h, c)`.
pub fn convlstm_step(x: &Tensor<f64>, h: &Tensor<f64>, c: &Tensor<f64>, p: &ConvLstmParams, acts: ReferenceActivations) -> (Tensor<f64>, Tensor<f64>) {
    let cat = Tensor::concat_channels(x, h);
    let pad = p.shape.kernel / 2;
    let gate = |i: usize, f: fn(f64) -> f64| {
        let (d, pw) = &p.paths[i];
        let (_, dz) = ops::conv2d_ref(&cat, d, 1, pad, true, |v| v);
        ops::conv2d_ref(&dz, pw, 1, 0, false, f).1
    };
    let sig = match acts {
        ReferenceActivations::Deployed => ops::gate_fn(ActivationKind::HardSigmoid, acts),
        ReferenceActivations::Original => sigmoid,
    };
    let tanh = ops::gate_fn(ActivationKind::HardTanh, acts);
    let (i, f, o, g) = (gate(0, sig), gate(1, sig), gate(2, sig), gate(3, tanh));
    let n = c.len();
    let c_new: Vec<f64> = (0..n).map(|k| f.data[k] * c.data[k] + i.data[k] * g.data[k]).collect();
    let h_new: Vec<f64> = (0..n).map(|k| o.data[k] * tanh(c_new[k])).collect();
    (Tensor::from_vec(c.c, c.h, c.w, h_new), Tensor::from_vec(c.c, c.h, c.w, c_new))
}
