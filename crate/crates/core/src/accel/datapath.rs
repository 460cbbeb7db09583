//! Functional model of the PE array that executes ops in schedule tile
//! order, used to cross-check the network engine bit for bit.

use serde::{Deserialize, Serialize};

use super::config::HwConfig;
use super::schedule::{conv_groups, conv_mapping, spatial_tiles, DataflowMode};
use crate::fixed_point::{acc_add, mac, mul_activation, narrow_q22, truncate_to_activation, ACT_ONE};
use crate::network::{frame_to_fixed, ConvParams, FixedEngine, FixedWeights, LayerKind, ModelConfig, NetworkError, OpKind, OpSpec, Trace, TraceEntry};
use crate::tensor::Tensor;

fn conv_tiled(op: &OpSpec, x: &Tensor<i16>, p: &ConvParams<i8, i32>, hw: &HwConfig) -> Tensor<i16> {
    let OpKind::Conv { kernel: (kh, kw), stride, padding, depthwise, fully_connected, .. } = op.kind else { unreachable!() };
    let (oc, oh, ow) = (op.output.channels, op.output.height, op.output.width);
    let mut psum = vec![0i32; oc * oh * ow];
    let mode = DataflowMode::for_layer(op.layer_kind);
    let (in_groups, out_groups) = conv_groups(op, hw);
    let lanes_list = if fully_connected { vec![vec![(0, 0)]] } else { spatial_tiles(conv_mapping(op, mode), oh, ow, hw.tiling.spatial_block) };
    let (ih, iw) = (x.h as isize, x.w as isize);
    for lanes in &lanes_list {
        for &(is, il) in &in_groups {
            let outs: Vec<(usize, usize)> = if depthwise { vec![(is, il)] } else { out_groups.clone() };
            for (os, ol) in outs {
                for o in os..os + ol {
                    let chans = if depthwise { o..o + 1 } else { is..is + il };
                    for &(oy, ox) in lanes {
                        let slot = &mut psum[(o * oh + oy) * ow + ox];
                        for ci in chans.clone() {
                            let wi = if depthwise { 0 } else { ci };
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                for kx in 0..kw {
                                    let ix = (ox * stride + kx) as isize - padding as isize;
                                    if iy < 0 || iy >= ih || ix < 0 || ix >= iw {
                                        continue;
                                    }
                                    let a = x.get(ci, iy as usize, ix as usize);
                                    if a != 0 {
                                        *slot = mac(*slot, p.w(o, wi, ky, kx), a).value;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let mut out = Tensor::<i16>::zeros(oc, oh, ow);
    for o in 0..oc {
        let b = p.bias.as_ref().map_or(0, |b| b[o]);
        for i in 0..oh * ow {
            let v = truncate_to_activation(acc_add(psum[o * oh * ow + i], b).value).value;
            out.data[o * oh * ow + i] = op.activation.apply_fixed(v);
        }
    }
    out
}

fn lanes(n: usize, hw: &HwConfig) -> impl Iterator<Item = std::ops::Range<usize>> {
    let w = hw.pe.pes();
    (0..n).step_by(w).map(move |s| s..(s + w).min(n))
}

/// Executes a model op by op in the accelerator's tile order.
pub struct DatapathEngine<'m> {
    config: &'m ModelConfig,
    weights: &'m FixedWeights,
    hw: HwConfig,
    ops: Vec<OpSpec>,
    state: Vec<Option<Tensor<i16>>>,
}

impl<'m> DatapathEngine<'m> {
    pub fn new(config: &'m ModelConfig, weights: &'m FixedWeights, hw: HwConfig) -> Result<Self, NetworkError> {
        let ops = config.ops()?;
        weights.check(config)?;
        Ok(DatapathEngine { config, weights, hw, ops, state: vec![None; config.layers.len()] })
    }

    pub fn step(&mut self, input: &Tensor<i16>, trace: &mut Trace<i16>) -> Vec<i16> {
        let mut cur = input.clone();
        let mut emit = |name: &str, t: &Tensor<i16>| trace.push(TraceEntry { name: name.to_string(), tensor: t.clone() });
        let mut oi = 0;
        for (li, layer) in self.config.layers.iter().enumerate() {
            let hw = &self.hw;
            let conv = |op: &OpSpec, x: &Tensor<i16>| conv_tiled(op, x, self.weights.get(&op.name).expect("checked"), hw);
            cur = match layer.kind {
                LayerKind::Conv2d => {
                    let y = conv(&self.ops[oi], &cur);
                    emit(&self.ops[oi].name, &y);
                    oi += 1;
                    y
                }
                LayerKind::Gmlp => {
                    let z = conv(&self.ops[oi], &cur);
                    emit(&self.ops[oi].name, &z);
                    let c = z.c / 2;
                    let n = c * z.h * z.w;
                    let mut y = Tensor::<i16>::zeros(c, z.h, z.w);
                    for r in lanes(n, hw) {
                        for i in r {
                            y.data[i] = mul_activation(z.data[i], layer.activation.apply_fixed(z.data[n + i])).value;
                        }
                    }
                    emit(&self.ops[oi + 1].name, &y);
                    let out = conv(&self.ops[oi + 2], &y);
                    emit(&self.ops[oi + 2].name, &out);
                    oi += 3;
                    out
                }
                LayerKind::ConvJanet => {
                    let h_prev = self.state[li].take().unwrap_or_else(|| Tensor::zeros(layer.out_channels, cur.h, cur.w));
                    let cat = Tensor::concat_channels(&cur, &h_prev);
                    let mut gates = Vec::new();
                    for g in 0..2 {
                        let d = conv(&self.ops[oi + 2 * g], &cat);
                        emit(&self.ops[oi + 2 * g].name, &d);
                        let a = conv(&self.ops[oi + 2 * g + 1], &d);
                        emit(&self.ops[oi + 2 * g + 1].name, &a);
                        gates.push(a);
                    }
                    let (f, g) = (&gates[0], &gates[1]);
                    let mut c = Tensor::<i16>::zeros(f.c, f.h, f.w);
                    for r in lanes(c.len(), hw) {
                        for i in r {
                            let fv = f.data[i] as i64;
                            c.data[i] = narrow_q22(fv * h_prev.data[i] as i64 + (ACT_ONE as i64 - fv) * g.data[i] as i64).value;
                        }
                    }
                    emit(&self.ops[oi + 4].name, &c);
                    self.state[li] = Some(c.clone());
                    oi += 5;
                    c
                }
                LayerKind::GlobalMaxPool => {
                    let plane = cur.h * cur.w;
                    let mut m = vec![i16::MIN; cur.c];
                    for r in lanes(cur.len(), hw) {
                        for i in r {
                            m[i / plane] = m[i / plane].max(cur.data[i]);
                        }
                    }
                    let y = Tensor::from_vec(cur.c, 1, 1, m);
                    emit(&self.ops[oi].name, &y);
                    oi += 1;
                    y
                }
                LayerKind::FullyConnected => {
                    let flat = Tensor::from_vec(cur.len(), 1, 1, cur.data.clone());
                    let y = conv(&self.ops[oi], &flat);
                    emit(&self.ops[oi].name, &y);
                    oi += 1;
                    y
                }
            };
        }
        cur.data
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub frame: usize,
    pub op: String,
    pub index: usize,
    pub expected: i16,
    pub got: i16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatapathVerdict {
    pub frames: usize,
    pub tensors_compared: usize,
    pub elements_compared: usize,
    pub identical: bool,
    pub first_mismatch: Option<Mismatch>,
}

/// Run both engines on the same frames and compare every op output.
pub fn verify_datapath(config: &ModelConfig, weights: &FixedWeights, hw: &HwConfig, frames: &[Tensor<i32>]) -> Result<DatapathVerdict, NetworkError> {
    let mut net = FixedEngine::new(config, weights)?;
    let mut dp = DatapathEngine::new(config, weights, hw.clone())?;
    let mut v = DatapathVerdict { frames: frames.len(), tensors_compared: 0, elements_compared: 0, identical: true, first_mismatch: None };
    for (fi, f) in frames.iter().enumerate() {
        let mut want = Vec::new();
        let step = net.step_counts(f, Some(&mut want))?;
        let (x, _) = frame_to_fixed(f);
        let mut got = Vec::new();
        let out = dp.step(&x, &mut got);
        for (w, g) in want.iter().zip(&got) {
            v.tensors_compared += 1;
            v.elements_compared += w.tensor.len();
            let bad = (w.name != g.name || w.tensor.shape() != g.tensor.shape())
                .then_some(0)
                .or_else(|| w.tensor.data.iter().zip(&g.tensor.data).position(|(a, b)| a != b));
            if let Some(i) = bad {
                v.identical = false;
                v.first_mismatch = Some(Mismatch {
                    frame: fi,
                    op: w.name.clone(),
                    index: i,
                    expected: w.tensor.data.get(i).copied().unwrap_or(0),
                    got: g.tensor.data.get(i).copied().unwrap_or(0),
                });
                return Ok(v);
            }
        }
        if want.len() != got.len() || step.output != out {
            v.identical = false;
            v.first_mismatch = Some(Mismatch {
                frame: fi,
                op: "output".into(),
                index: 0,
                expected: step.output.first().copied().unwrap_or(0),
                got: out.first().copied().unwrap_or(0),
            });
            return Ok(v);
        }
    }
    Ok(v)
}
