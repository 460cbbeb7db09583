//! Frame-by-frame execution of a whole model with recurrent state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, LayerKind, ModelConfig, OpKind, OpSpec};
use super::ops::{self, OpStats, ReferenceActivations};
use super::weights::{FixedWeights, FloatWeights, WeightError};
use crate::fixed_point::{activation_to_f64, quantize_activation, SaturationCounts, ACT_FRAC_BITS};
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error("frame {index} has shape {found:?}, model expects {expected:?}")]
    InputShape { index: usize, found: (usize, usize, usize), expected: (usize, usize, usize) },
    #[error("fixed-point mode needs quantized weights")]
    MissingFixedWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Reference,
    Fixed,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reference" => Ok(Mode::Reference),
            "fixed" => Ok(Mode::Fixed),
            _ => Err(format!("unknown mode '{s}' (expected reference or fixed)")),
        }
    }
}

/// One named intermediate tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

pub type Trace<T> = Vec<TraceEntry<T>>;

fn record<T: Clone>(trace: &mut Option<&mut Trace<T>>, name: &str, t: &Tensor<T>) {
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(TraceEntry { name: name.to_string(), tensor: t.clone() });
    }
}

/// Integer event counts to Q5.11, saturating.
pub fn frame_to_fixed(frame: &Tensor<i32>) -> (Tensor<i16>, u64) {
    let mut sat = 0;
    let data = frame
        .data
        .iter()
        .map(|&v| {
            let raw = (v as i64) << ACT_FRAC_BITS;
            let c = raw.clamp(i16::MIN as i64, i16::MAX as i64);
            sat += (c != raw) as u64;
            c as i16
        })
        .collect();
    (Tensor::from_vec(frame.c, frame.h, frame.w, data), sat)
}

pub fn frame_to_real(frame: &Tensor<i32>) -> Tensor<f64> {
    frame.map(|v| v as f64)
}

fn conv_geometry(op: &OpSpec) -> (usize, usize, bool) {
    match op.kind {
        OpKind::Conv { stride, padding, depthwise, .. } => (stride, padding, depthwise),
        _ => unreachable!("not a convolution op"),
    }
}

fn check_input<T>(config: &ModelConfig, index: usize, x: &Tensor<T>) -> Result<(), NetworkError> {
    let want = (config.input.channels, config.input.height, config.input.width);
    if (x.c, x.h, x.w) != want {
        return Err(NetworkError::InputShape { index, found: (x.c, x.h, x.w), expected: want });
    }
    Ok(())
}

/// Result of one fixed-point frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedStep {
    pub output: Vec<i16>,
    pub ops: Vec<OpStats>,
    pub input_saturation: u64,
}

/// Bit-exact fixed-point engine.
pub struct FixedEngine<'m> {
    config: &'m ModelConfig,
    weights: &'m FixedWeights,
    ops: Vec<OpSpec>,
    state: Vec<Option<Tensor<i16>>>,
    frames_seen: usize,
}

impl<'m> FixedEngine<'m> {
    pub fn new(config: &'m ModelConfig, weights: &'m FixedWeights) -> Result<Self, NetworkError> {
        let ops = config.ops()?;
        weights.check(config)?;
        Ok(FixedEngine { config, weights, ops, state: vec![None; config.layers.len()], frames_seen: 0 })
    }

    pub fn ops(&self) -> &[OpSpec] {
        &self.ops
    }

    /// Zero the recurrent state (start of a new sequence).
    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = None);
        self.frames_seen = 0;
    }

    pub fn state(&self, layer: usize) -> Option<&Tensor<i16>> {
        self.state[layer].as_ref()
    }

    /// Run one frame of integer event counts.
    pub fn step_counts(&mut self, frame: &Tensor<i32>, trace: Option<&mut Trace<i16>>) -> Result<FixedStep, NetworkError> {
        check_input(self.config, self.frames_seen, frame)?;
        let (x, sat) = frame_to_fixed(frame);
        let mut s = self.step(&x, trace)?;
        s.input_saturation = sat;
        Ok(s)
    }

    /// Run one frame already in Q5.11.
    pub fn step(&mut self, input: &Tensor<i16>, mut trace: Option<&mut Trace<i16>>) -> Result<FixedStep, NetworkError> {
        check_input(self.config, self.frames_seen, input)?;
        self.frames_seen += 1;
        let mut stats = vec![OpStats::default(); self.ops.len()];
        let mut cur = input.clone();
        let mut oi = 0;
        for (li, layer) in self.config.layers.iter().enumerate() {
            let conv = |oi: usize, x: &Tensor<i16>, st: &mut OpStats| {
                let op = &self.ops[oi];
                let (stride, pad, dw) = conv_geometry(op);
                let p = self.weights.get(&op.name).expect("weights checked against config");
                ops::conv2d_fixed(x, p, stride, pad, dw, op.activation, st)
            };
            cur = match layer.kind {
                LayerKind::Conv2d => {
                    let y = conv(oi, &cur, &mut stats[oi]);
                    record(&mut trace, &self.ops[oi].name, &y);
                    oi += 1;
                    y
                }
                LayerKind::Gmlp => {
                    let z = conv(oi, &cur, &mut stats[oi]);
                    record(&mut trace, &self.ops[oi].name, &z);
                    let y = ops::gmlp_gate_fixed(&z, layer.activation, &mut stats[oi + 1]);
                    record(&mut trace, &self.ops[oi + 1].name, &y);
                    let out = conv(oi + 2, &y, &mut stats[oi + 2]);
                    record(&mut trace, &self.ops[oi + 2].name, &out);
                    oi += 3;
                    out
                }
                LayerKind::ConvJanet => {
                    let h_prev = self.state[li].take().unwrap_or_else(|| Tensor::zeros(layer.out_channels, cur.h, cur.w));
                    let cat = Tensor::concat_channels(&cur, &h_prev);
                    let mut gates = Vec::with_capacity(2);
                    for g in 0..2 {
                        let base = oi + 2 * g;
                        let d = conv(base, &cat, &mut stats[base]);
                        record(&mut trace, &self.ops[base].name, &d);
                        let a = conv(base + 1, &d, &mut stats[base + 1]);
                        record(&mut trace, &self.ops[base + 1].name, &a);
                        gates.push(a);
                    }
                    let c = ops::janet_cell_fixed(&gates[0], &h_prev, &gates[1], &mut stats[oi + 4]);
                    record(&mut trace, &self.ops[oi + 4].name, &c);
                    self.state[li] = Some(c.clone());
                    oi += 5;
                    c
                }
                LayerKind::GlobalMaxPool => {
                    let g = ops::global_max_pool(&cur);
                    stats[oi].record_output(&g);
                    record(&mut trace, &self.ops[oi].name, &g);
                    oi += 1;
                    g
                }
                LayerKind::FullyConnected => {
                    let y = conv(oi, &ops::flatten(&cur), &mut stats[oi]);
                    record(&mut trace, &self.ops[oi].name, &y);
                    oi += 1;
                    y
                }
            };
        }
        Ok(FixedStep { output: cur.data, ops: stats, input_saturation: 0 })
    }
}

/// Result of one real-valued frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStep {
    pub output: Vec<f64>,
}

/// Real-valued engine in f64.
pub struct ReferenceEngine<'m> {
    config: &'m ModelConfig,
    weights: &'m FloatWeights,
    ops: Vec<OpSpec>,
    acts: ReferenceActivations,
    state: Vec<Option<Tensor<f64>>>,
    frames_seen: usize,
}

impl<'m> ReferenceEngine<'m> {
    pub fn new(config: &'m ModelConfig, weights: &'m FloatWeights, acts: ReferenceActivations) -> Result<Self, NetworkError> {
        let ops = config.ops()?;
        weights.check(config)?;
        Ok(ReferenceEngine { config, weights, ops, acts, state: vec![None; config.layers.len()], frames_seen: 0 })
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = None);
        self.frames_seen = 0;
    }

    pub fn state(&self, layer: usize) -> Option<&Tensor<f64>> {
        self.state[layer].as_ref()
    }

    /// Run one frame. The trace holds every op output and, for convolutions,
    /// the pre-activation tensor under `<op>.pre`.
    pub fn step(&mut self, input: &Tensor<f64>, mut trace: Option<&mut Trace<f64>>) -> Result<ReferenceStep, NetworkError> {
        check_input(self.config, self.frames_seen, input)?;
        self.frames_seen += 1;
        let acts = self.acts;
        let mut cur = input.clone();
        let mut oi = 0;
        for (li, layer) in self.config.layers.iter().enumerate() {
            let conv = |oi: usize, x: &Tensor<f64>, trace: &mut Option<&mut Trace<f64>>| {
                let op = &self.ops[oi];
                let (stride, pad, dw) = conv_geometry(op);
                let p = self.weights.get(&op.name).expect("weights checked against config");
                let (pre, out) = ops::conv2d_ref(x, p, stride, pad, dw, ops::gate_fn(op.activation, acts));
                record(trace, &format!("{}.pre", op.name), &pre);
                record(trace, &op.name, &out);
                out
            };
            cur = match layer.kind {
                LayerKind::Conv2d => {
                    oi += 1;
                    conv(oi - 1, &cur, &mut trace)
                }
                LayerKind::Gmlp => {
                    let z = conv(oi, &cur, &mut trace);
                    let y = ops::gmlp_gate_ref(&z, layer.activation, acts);
                    record(&mut trace, &self.ops[oi + 1].name, &y);
                    let out = conv(oi + 2, &y, &mut trace);
                    oi += 3;
                    out
                }
                LayerKind::ConvJanet => {
                    let h_prev = self.state[li].take().unwrap_or_else(|| Tensor::zeros(layer.out_channels, cur.h, cur.w));
                    let cat = Tensor::concat_channels(&cur, &h_prev);
                    let f = conv(oi + 1, &conv(oi, &cat, &mut trace), &mut trace);
                    let g = conv(oi + 3, &conv(oi + 2, &cat, &mut trace), &mut trace);
                    let c = ops::janet_cell_ref(&f, &h_prev, &g);
                    record(&mut trace, &self.ops[oi + 4].name, &c);
                    self.state[li] = Some(c.clone());
                    oi += 5;
                    c
                }
                LayerKind::GlobalMaxPool => {
                    let g = ops::global_max_pool(&cur);
                    record(&mut trace, &self.ops[oi].name, &g);
                    oi += 1;
                    g
                }
                LayerKind::FullyConnected => {
                    oi += 1;
                    conv(oi - 1, &ops::flatten(&cur), &mut trace)
                }
            };
        }
        Ok(ReferenceStep { output: cur.data })
    }
}

/// Per-layer activity totals over a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCounters {
    pub name: String,
    pub kind: LayerKind,
    pub params: usize,
    pub macs_per_frame: u64,
    pub elementwise_ops_per_frame: u64,
    pub zero_operand_macs: u64,
    /// Zero activation operands over all MACs of the run.
    pub operand_sparsity: f64,
    /// Zero elements in the layer output over the run.
    pub output_sparsity: f64,
    pub saturation: SaturationCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterReport {
    pub frames: usize,
    pub params: usize,
    pub macs_per_frame: u64,
    pub flops_per_frame: u64,
    pub elementwise_ops_per_frame: u64,
    pub layers: Vec<LayerCounters>,
    pub saturation: SaturationCounts,
    /// Per-op activity summed over frames (fixed mode only).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub ops: Vec<(String, OpStats)>,
}

impl CounterReport {
    /// Counters that depend only on the topology.
    pub fn for_config(config: &ModelConfig) -> Result<Self, ConfigError> {
        let ops = config.ops()?;
        let layers = config
            .layers
            .iter()
            .enumerate()
            .map(|(li, l)| {
                let mine = ops.iter().filter(|o| o.layer == li);
                LayerCounters {
                    name: l.name.clone(),
                    kind: l.kind,
                    params: mine.clone().map(|o| o.weight_count() + o.bias_count(l)).sum(),
                    macs_per_frame: mine.clone().map(OpSpec::macs).sum(),
                    elementwise_ops_per_frame: mine.map(OpSpec::elementwise_ops).sum(),
                    zero_operand_macs: 0,
                    operand_sparsity: 0.0,
                    output_sparsity: 0.0,
                    saturation: SaturationCounts::default(),
                }
            })
            .collect();
        Ok(CounterReport {
            frames: 0,
            params: config.param_count()?,
            macs_per_frame: config.mac_count()?,
            flops_per_frame: config.flops()?,
            elementwise_ops_per_frame: config.elementwise_ops()?,
            layers,
            saturation: SaturationCounts::default(),
            ops: Vec::new(),
        })
    }

    /// Fold in the op statistics of fixed-point frames.
    pub fn absorb(&mut self, ops: &[OpSpec], steps: &[FixedStep]) {
        if self.ops.is_empty() {
            self.ops = ops.iter().map(|o| (o.name.clone(), OpStats::default())).collect();
        }
        for s in steps {
            self.frames += 1;
            self.saturation.quantize += s.input_saturation;
            for (acc, st) in self.ops.iter_mut().zip(&s.ops) {
                acc.1.merge(st);
            }
        }
        for (li, lc) in self.layers.iter_mut().enumerate() {
            let mut t = OpStats::default();
            let mut last = None;
            for (op, (_, st)) in ops.iter().zip(&self.ops) {
                if op.layer == li {
                    t.merge(st);
                    last = Some(st);
                }
            }
            lc.zero_operand_macs = t.zero_operand_macs;
            lc.operand_sparsity = if t.macs == 0 { 0.0 } else { t.zero_operand_macs as f64 / t.macs as f64 };
            lc.output_sparsity = last.map_or(0.0, |s| if s.output_len == 0 { 0.0 } else { s.output_zeros as f64 / s.output_len as f64 });
            lc.saturation = t.saturation;
        }
        let mut total = SaturationCounts { quantize: self.saturation.quantize, ..Default::default() };
        for lc in &self.layers {
            total.merge(&lc.saturation);
        }
        self.saturation = total;
    }
}

/// Predicted pupil centre in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub mode: Mode,
    pub predictions: Vec<Prediction>,
    pub counters: CounterReport,
}

/// Convert head outputs to pixel coordinates.
pub fn to_pixels(config: &ModelConfig, out: &[f64], sensor_coords: bool) -> Prediction {
    let s = config.output_scale * if sensor_coords { config.sensor_scale } else { 1.0 };
    Prediction { x: out[0] * s, y: out[1] * s }
}

/// Weights available to a sequence run.
#[derive(Debug, Clone, Copy)]
pub struct ModelWeights<'a> {
    pub fixed: Option<&'a FixedWeights>,
    pub float: Option<&'a FloatWeights>,
}

/// Run frames in order from zero state, threading the recurrent state.
///
/// Reference mode uses float weights when present, otherwise the exact
/// dequantized fixed weights.
pub fn forward_sequence(
    frames: &[Tensor<i32>],
    config: &ModelConfig,
    weights: ModelWeights<'_>,
    mode: Mode,
    acts: ReferenceActivations,
    sensor_coords: bool,
) -> Result<SequenceResult, NetworkError> {
    let mut counters = CounterReport::for_config(config)?;
    let mut predictions = Vec::with_capacity(frames.len());
    match mode {
        Mode::Fixed => {
            let w = weights.fixed.ok_or(NetworkError::MissingFixedWeights)?;
            let mut eng = FixedEngine::new(config, w)?;
            let mut steps = Vec::with_capacity(frames.len());
            for f in frames {
                let s = eng.step_counts(f, None)?;
                let out: Vec<f64> = s.output.iter().map(|&v| activation_to_f64(v)).collect();
                predictions.push(to_pixels(config, &out, sensor_coords));
                steps.push(s);
            }
            let ops = eng.ops().to_vec();
            counters.absorb(&ops, &steps);
        }
        Mode::Reference => {
            let deq;
            let w = match (weights.float, weights.fixed) {
                (Some(f), _) => f,
                (None, Some(q)) => {
                    deq = q.dequantize();
                    &deq
                }
                (None, None) => return Err(NetworkError::MissingFixedWeights),
            };
            let mut eng = ReferenceEngine::new(config, w, acts)?;
            for (i, f) in frames.iter().enumerate() {
                check_input(config, i, f)?;
                let s = eng.step(&frame_to_real(f), None)?;
                predictions.push(to_pixels(config, &s.output, sensor_coords));
            }
            counters.frames = frames.len();
        }
    }
    Ok(SequenceResult { mode, predictions, counters })
}

/// Mean Euclidean distance between predictions and ground truth.
pub fn mean_pixel_error(pred: &[Prediction], truth: &[(f64, f64)]) -> Option<f64> {
    let n = pred.len().min(truth.len());
    if n == 0 {
        return None;
    }
    Some(pred.iter().zip(truth).map(|(p, &(x, y))| ((p.x - x).powi(2) + (p.y - y).powi(2)).sqrt()).sum::<f64>() / n as f64)
}

/// Quantize a real input tensor to Q5.11 for direct fixed-point stepping.
pub fn real_to_fixed(x: &Tensor<f64>) -> Tensor<i16> {
    x.map(|v| quantize_activation(v).value)
}
