//! Layer kernels in real-valued and bit-exact fixed-point form.

use serde::{Deserialize, Serialize};

use super::weights::ConvParams;
use crate::activations::{gelu, hardsigmoid_real, hardtanh_real, sigmoid, ActivationKind};
use crate::fixed_point::{acc_add, mac, mul_activation, narrow_q22, truncate_to_activation, SaturationCounts, ACT_ONE};
use crate::tensor::Tensor;

/// Per-op activity from one fixed-point frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpStats {
    pub macs: u64,
    /// MACs whose activation operand was zero, border padding included.
    pub zero_operand_macs: u64,
    pub output_zeros: u64,
    pub output_len: u64,
    pub saturation: SaturationCounts,
}

impl OpStats {
    pub fn record_output(&mut self, t: &Tensor<i16>) {
        self.output_zeros += t.count_eq(0) as u64;
        self.output_len += t.len() as u64;
    }

    pub fn merge(&mut self, o: &OpStats) {
        self.macs += o.macs;
        self.zero_operand_macs += o.zero_operand_macs;
        self.output_zeros += o.output_zeros;
        self.output_len += o.output_len;
        self.saturation.merge(&o.saturation);
    }
}

/// Which nonlinearities the real-valued engine uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceActivations {
    /// The same piecewise functions as the hardware, in exact arithmetic.
    #[default]
    Deployed,
    /// Sigmoid / tanh gates and a GELU gMLP gate.
    Original,
}

pub fn out_dim(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

/// Fixed-point convolution. Per output: MACs in input-channel-major then
/// kernel row-major order, then bias, then truncation, then activation.
/// Zero operands are gated, which cannot change the saturating sum.
pub fn conv2d_fixed(
    input: &Tensor<i16>,
    p: &ConvParams<i8, i32>,
    stride: usize,
    padding: usize,
    depthwise: bool,
    act: ActivationKind,
    stats: &mut OpStats,
) -> Tensor<i16> {
    let (kh, kw) = p.kernel;
    let oh = out_dim(input.h, kh, stride, padding);
    let ow = out_dim(input.w, kw, stride, padding);
    debug_assert_eq!(if depthwise { p.out_channels } else { p.fan_in }, input.c);
    let mut out = Tensor::<i16>::zeros(p.out_channels, oh, ow);
    let (ih, iw) = (input.h as isize, input.w as isize);
    let mut zero = 0u64;
    let mut sat = SaturationCounts::default();
    for o in 0..p.out_channels {
        let bias = p.bias.as_ref().map_or(0, |b| b[o]);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0i32;
                for ci in 0..p.fan_in {
                    let ic = if depthwise { o } else { ci };
                    let plane = input.plane(ic);
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= ih {
                            zero += kw as u64;
                            continue;
                        }
                        let row = &plane[iy as usize * input.w..(iy as usize + 1) * input.w];
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            let a = if ix < 0 || ix >= iw { 0 } else { row[ix as usize] };
                            if a == 0 {
                                zero += 1;
                                continue;
                            }
                            let r = mac(acc, p.w(o, ci, ky, kx), a);
                            acc = r.value;
                            sat.accumulate += r.saturated as u64;
                        }
                    }
                }
                let r = acc_add(acc, bias);
                sat.accumulate += r.saturated as u64;
                let t = truncate_to_activation(r.value);
                sat.truncate += t.saturated as u64;
                out.set(o, oy, ox, act.apply_fixed(t.value));
            }
        }
    }
    stats.macs += (out.len() * p.fan_in * kh * kw) as u64;
    stats.zero_operand_macs += zero;
    stats.saturation.merge(&sat);
    stats.record_output(&out);
    out
}

/// Real-valued convolution with the same loop structure.
pub fn conv2d_ref(
    input: &Tensor<f64>,
    p: &ConvParams<f64, f64>,
    stride: usize,
    padding: usize,
    depthwise: bool,
    act: impl Fn(f64) -> f64,
) -> (Tensor<f64>, Tensor<f64>) {
    let (kh, kw) = p.kernel;
    let oh = out_dim(input.h, kh, stride, padding);
    let ow = out_dim(input.w, kw, stride, padding);
    let mut pre = Tensor::<f64>::zeros(p.out_channels, oh, ow);
    for o in 0..p.out_channels {
        let bias = p.bias.as_ref().map_or(0.0, |b| b[o]);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ci in 0..p.fan_in {
                    let ic = if depthwise { o } else { ci };
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= input.h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= input.w as isize {
                                continue;
                            }
                            acc += p.w(o, ci, ky, kx) * input.get(ic, iy as usize, ix as usize);
                        }
                    }
                }
                pre.set(o, oy, ox, acc + bias);
            }
        }
    }
    let out = pre.map(act);
    (pre, out)
}

/// `Y = Z1 * relu(Z2)` where `Z` stacks `Z1` over `Z2`.
pub fn gmlp_gate_fixed(z: &Tensor<i16>, gate: ActivationKind, stats: &mut OpStats) -> Tensor<i16> {
    let c = z.c / 2;
    let n = c * z.h * z.w;
    let mut y = Tensor::<i16>::zeros(c, z.h, z.w);
    for i in 0..n {
        let r = mul_activation(z.data[i], gate.apply_fixed(z.data[n + i]));
        stats.saturation.truncate += r.saturated as u64;
        y.data[i] = r.value;
    }
    stats.record_output(&y);
    y
}

pub fn gmlp_gate_ref(z: &Tensor<f64>, gate: ActivationKind, acts: ReferenceActivations) -> Tensor<f64> {
    let c = z.c / 2;
    let n = c * z.h * z.w;
    let f = |v: f64| match (acts, gate) {
        (ReferenceActivations::Original, ActivationKind::Relu) => gelu(v),
        _ => gate.apply_real(v),
    };
    Tensor::from_vec(c, z.h, z.w, (0..n).map(|i| z.data[i] * f(z.data[n + i])).collect())
}

/// `c = f * c_prev + (1 - f) * candidate`, products summed at 22 fractional
/// bits and narrowed once.
pub fn janet_cell_fixed(f: &Tensor<i16>, c_prev: &Tensor<i16>, cand: &Tensor<i16>, stats: &mut OpStats) -> Tensor<i16> {
    let mut c = Tensor::<i16>::zeros(f.c, f.h, f.w);
    for i in 0..c.len() {
        let fv = f.data[i] as i64;
        let v = fv * c_prev.data[i] as i64 + (ACT_ONE as i64 - fv) * cand.data[i] as i64;
        let r = narrow_q22(v);
        stats.saturation.truncate += r.saturated as u64;
        c.data[i] = r.value;
    }
    stats.record_output(&c);
    c
}

pub fn janet_cell_ref(f: &Tensor<f64>, c_prev: &Tensor<f64>, cand: &Tensor<f64>) -> Tensor<f64> {
    let data = (0..f.len()).map(|i| f.data[i] * c_prev.data[i] + (1.0 - f.data[i]) * cand.data[i]).collect();
    Tensor::from_vec(f.c, f.h, f.w, data)
}

pub fn gate_fn(kind: ActivationKind, acts: ReferenceActivations) -> fn(f64) -> f64 {
    match (acts, kind) {
        (ReferenceActivations::Original, ActivationKind::HardSigmoid) => sigmoid,
        (ReferenceActivations::Original, ActivationKind::HardTanh) => f64::tanh,
        (_, ActivationKind::HardSigmoid) => hardsigmoid_real,
        (_, ActivationKind::HardTanh) => hardtanh_real,
        (_, ActivationKind::Relu) => |v: f64| v.max(0.0),
        (_, ActivationKind::Bypass) => |v: f64| v,
    }
}

/// Per-channel spatial maximum, as a `C x 1 x 1` tensor.
pub fn global_max_pool<T: Copy + Default + PartialOrd>(x: &Tensor<T>) -> Tensor<T> {
    let data = (0..x.c)
        .map(|c| {
            let plane = x.plane(c);
            let mut m = plane[0];
            for &v in &plane[1..] {
                if v > m {
                    m = v;
                }
            }
            m
        })
        .collect();
    Tensor::from_vec(x.c, 1, 1, data)
}

/// Reinterpret any tensor as a `len x 1 x 1` vector.
pub fn flatten<T: Copy + Default>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_vec(x.len(), 1, 1, x.data.clone())
}
