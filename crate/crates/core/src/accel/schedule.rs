//! Static per-op schedule: dataflow mode, tiles, cycles, reuse and SRAM traffic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::HwConfig;
use crate::network::{ConfigError, LayerKind, ModelConfig, OpKind, OpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataflowMode {
    WeightStationary,
    OutputStationary,
    RowStationary,
}

impl DataflowMode {
    pub fn for_layer(kind: LayerKind) -> Self {
        match kind {
            LayerKind::Conv2d | LayerKind::Gmlp => DataflowMode::WeightStationary,
            LayerKind::ConvJanet => DataflowMode::OutputStationary,
            LayerKind::GlobalMaxPool | LayerKind::FullyConnected => DataflowMode::RowStationary,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            DataflowMode::WeightStationary => "WS",
            DataflowMode::OutputStationary => "OS",
            DataflowMode::RowStationary => "RS",
        }
    }
}

/// How output positions are assigned to the 64 PE lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mapping {
    /// 8x8 spatial blocks (k x k convolutions in weight-stationary mode).
    Blocks2d,
    /// Runs of 64 positions in row-major order.
    Raster,
    /// Eight output neurons per tile, input vector split across columns.
    RowParallel,
    /// Elementwise or pooling work streamed 64 elements per cycle.
    Vector,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("layer {layer}: {bank} SRAM needs {needed} bytes, capacity {capacity} (overflow {overflow} bytes)")]
    Sram { layer: String, bank: &'static str, needed: usize, capacity: usize, overflow: usize },
    #[error("op {op}: tile needs {needed} bytes of tile buffer, capacity {capacity}")]
    TileBuffer { op: String, needed: usize, capacity: usize },
    #[error("invalid hardware config: {0}")]
    Hardware(String),
}

/// One tile: a set of output lanes, an input-channel group and an
/// output-channel group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub spatial: usize,
    pub lanes: usize,
    pub in_start: usize,
    pub in_len: usize,
    pub out_start: usize,
    pub out_len: usize,
    pub cycles: u64,
}

/// Bytes moved per SRAM bank. Partial sums live in the activation bank.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BankTraffic {
    pub weight_read: u64,
    pub act_read: u64,
    pub bias_read: u64,
    pub psum_read: u64,
    pub act_write: u64,
    pub psum_write: u64,
}

impl BankTraffic {
    pub fn reads(&self) -> u64 {
        self.weight_read + self.act_read + self.bias_read + self.psum_read
    }

    pub fn writes(&self) -> u64 {
        self.act_write + self.psum_write
    }

    pub fn merge(&mut self, o: &BankTraffic) {
        self.weight_read += o.weight_read;
        self.act_read += o.act_read;
        self.bias_read += o.bias_read;
        self.psum_read += o.psum_read;
        self.act_write += o.act_write;
        self.psum_write += o.psum_write;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overheads {
    pub mode_switch: u64,
    pub first_load: u64,
    pub fill: u64,
    pub drain: u64,
    pub activation: u64,
    pub state_update: u64,
}

impl Overheads {
    pub fn total(&self) -> u64 {
        self.mode_switch + self.first_load + self.fill + self.drain + self.activation + self.state_update
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpSchedule {
    pub name: String,
    pub mode: DataflowMode,
    pub mapping: Mapping,
    #[serde(skip)]
    pub tiles: Vec<Tile>,
    pub tile_count: usize,
    pub spatial_tiles: usize,
    /// Cycles per full tile before overheads (zero for vector ops).
    pub tile_cycles: u64,
    pub prefetch_issue_cycle: Option<u64>,
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub overheads: Overheads,
    pub start_cycle: u64,
    pub total_cycles: u64,
    pub active_pe_cycles: u64,
    pub utilization: f64,
    pub macs: u64,
    /// Issue slots of zero-padded partial tiles.
    pub padding_macs: u64,
    pub elementwise_ops: u64,
    pub loads: u64,
    pub hidden_loads: u64,
    pub weight_residencies: u64,
    pub residency_cycles: u64,
    pub psum_writebacks: u64,
    pub register_writes: u64,
    pub traffic: BankTraffic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSchedule {
    pub layer: usize,
    pub name: String,
    pub kind: LayerKind,
    pub mode: DataflowMode,
    pub ops: Vec<OpSchedule>,
    pub cycles: u64,
    pub tile_count: usize,
    pub active_pe_cycles: u64,
    pub utilization: f64,
    pub prefetch_overlap: f64,
    pub psum_writebacks: u64,
    pub traffic: BankTraffic,
}

/// Per-frame schedule of a whole model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub layers: Vec<LayerSchedule>,
    pub total_cycles: u64,
    pub compute_cycles: u64,
    pub mode_switches: usize,
    pub utilization: f64,
    pub prefetch_overlap: f64,
    pub pes: usize,
}

impl Schedule {
    pub fn ops(&self) -> impl Iterator<Item = &OpSchedule> {
        self.layers.iter().flat_map(|l| l.ops.iter())
    }
}

/// Output lanes of each spatial tile, as (y, x) positions.
pub fn spatial_tiles(mapping: Mapping, oh: usize, ow: usize, block: usize) -> Vec<Vec<(usize, usize)>> {
    match mapping {
        Mapping::Blocks2d => {
            let mut out = Vec::new();
            for by in (0..oh).step_by(block) {
                for bx in (0..ow).step_by(block) {
                    let lanes = (by..(by + block).min(oh)).flat_map(|y| (bx..(bx + block).min(ow)).map(move |x| (y, x))).collect();
                    out.push(lanes);
                }
            }
            out
        }
        _ => {
            let all: Vec<_> = (0..oh).flat_map(|y| (0..ow).map(move |x| (y, x))).collect();
            all.chunks(block * block).map(<[_]>::to_vec).collect()
        }
    }
}

/// Channel groups `(start, len)` of size `g` covering `n`.
pub fn channel_groups(n: usize, g: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(g.max(1)).map(|s| (s, g.min(n - s))).collect()
}

pub(crate) fn conv_mapping(op: &OpSpec, mode: DataflowMode) -> Mapping {
    match op.kind {
        OpKind::Conv { fully_connected: true, .. } => Mapping::RowParallel,
        OpKind::Conv { kernel, depthwise: false, .. } if mode == DataflowMode::WeightStationary && kernel != (1, 1) => Mapping::Blocks2d,
        OpKind::Conv { .. } => Mapping::Raster,
        _ => Mapping::Vector,
    }
}

/// `(start, len)` channel ranges.
pub(crate) type Groups = Vec<(usize, usize)>;

/// Input and output channel groups of a conv op, in execution order.
pub(crate) fn conv_groups(op: &OpSpec, hw: &HwConfig) -> (Groups, Groups) {
    let OpKind::Conv { kernel, in_channels, out_channels, depthwise, fully_connected, .. } = op.kind else {
        return (Vec::new(), Vec::new());
    };
    let g = hw.tiling.channels_per_tile;
    if fully_connected {
        (vec![(0, in_channels)], channel_groups(out_channels, hw.pe.rows))
    } else if depthwise {
        (channel_groups(in_channels, g), Vec::new())
    } else if kernel == (1, 1) {
        (channel_groups(in_channels, g), channel_groups(out_channels, g))
    } else {
        (channel_groups(in_channels, g), channel_groups(out_channels, hw.tiling.out_channels_per_tile))
    }
}

fn input_tile_bytes(op: &OpSpec, lanes: &[(usize, usize)], cin: usize) -> usize {
    let OpKind::Conv { kernel: (kh, kw), stride, padding, .. } = op.kind else { return 0 };
    let span = |lo: usize, hi: usize, k: usize, n: usize| {
        let a = (lo * stride) as isize - padding as isize;
        let b = (hi * stride + k - 1) as isize - padding as isize;
        (b.min(n as isize - 1) - a.max(0) + 1).max(0) as usize
    };
    let (y0, y1) = lanes.iter().fold((usize::MAX, 0), |(a, b), &(y, _)| (a.min(y), b.max(y)));
    let (x0, x1) = lanes.iter().fold((usize::MAX, 0), |(a, b), &(_, x)| (a.min(x), b.max(x)));
    span(y0, y1, kh, op.input.height) * span(x0, x1, kw, op.input.width) * cin * 2
}

fn schedule_conv(op: &OpSpec, mode: DataflowMode, hw: &HwConfig) -> Result<OpSchedule, ScheduleError> {
    let OpKind::Conv { kernel: (kh, kw), in_channels, depthwise, fully_connected, .. } = op.kind else { unreachable!() };
    let k2 = (kh * kw) as u64;
    let pes = hw.pe.pes() as u64;
    let mapping = conv_mapping(op, mode);
    let (in_groups, out_groups) = conv_groups(op, hw);
    let block = hw.tiling.spatial_block;
    let mut s = OpSchedule {
        name: op.name.clone(),
        mode,
        mapping,
        tiles: Vec::new(),
        tile_count: 0,
        spatial_tiles: 0,
        tile_cycles: 0,
        prefetch_issue_cycle: None,
        compute_cycles: 0,
        stall_cycles: 0,
        overheads: Overheads::default(),
        start_cycle: 0,
        total_cycles: 0,
        active_pe_cycles: 0,
        utilization: 0.0,
        macs: op.macs(),
        padding_macs: 0,
        elementwise_ops: 0,
        loads: 0,
        hidden_loads: 0,
        weight_residencies: 0,
        residency_cycles: 0,
        psum_writebacks: 0,
        register_writes: 0,
        traffic: BankTraffic::default(),
    };
    let outputs = op.output.len() as u64;
    if fully_connected {
        let t = in_channels.div_ceil(hw.pe.cols) as u64;
        s.tile_cycles = t;
        for &(os, ol) in &out_groups {
            s.tiles.push(Tile { spatial: 0, lanes: ol, in_start: 0, in_len: in_channels, out_start: os, out_len: ol, cycles: t });
            s.active_pe_cycles += ol as u64 * hw.pe.cols as u64 * t;
            s.traffic.weight_read += (ol * in_channels) as u64;
            s.traffic.act_read += in_channels as u64 * 2;
            s.register_writes += (ol * in_channels) as u64;
        }
        s.spatial_tiles = 1;
        s.psum_writebacks = outputs;
        s.padding_macs = (s.tiles.len() as u64 * pes * t).saturating_sub(s.macs);
    } else {
        let t = hw.tiling.cycles_for_kernel(kh.max(kw));
        s.tile_cycles = t;
        let sp = spatial_tiles(mapping, op.output.height, op.output.width, block);
        s.spatial_tiles = sp.len();
        let out_sets: Vec<(usize, usize)> = if depthwise { vec![(0, 0)] } else { out_groups.clone() };
        let g = hw.tiling.channels_per_tile as u64;
        let slots_per_lane = if depthwise {
            g * k2
        } else if k2 == 1 {
            g * g
        } else {
            g * hw.tiling.out_channels_per_tile as u64 * k2
        };
        for (si, lanes) in sp.iter().enumerate() {
            let n = lanes.len() as u64;
            for &(is, il) in &in_groups {
                let in_bytes = input_tile_bytes(op, lanes, il);
                s.traffic.act_read += in_bytes as u64;
                for &(os, ol) in &out_sets {
                    let (os, ol) = if depthwise { (is, il) } else { (os, ol) };
                    let wbytes = if depthwise { il * kh * kw } else { il * ol * kh * kw };
                    if in_bytes + wbytes > hw.memory.tile_buffer_bytes {
                        return Err(ScheduleError::TileBuffer { op: op.name.clone(), needed: in_bytes + wbytes, capacity: hw.memory.tile_buffer_bytes });
                    }
                    s.tiles.push(Tile { spatial: si, lanes: lanes.len(), in_start: is, in_len: il, out_start: os, out_len: ol, cycles: t });
                    s.active_pe_cycles += n * t;
                    s.padding_macs += pes * slots_per_lane;
                    s.traffic.weight_read += wbytes as u64;
                    let final_group = depthwise || is + il == in_channels;
                    if final_group {
                        s.traffic.bias_read += ol as u64 * 4;
                    }
                    let residencies = if depthwise { il } else { il * ol } as u64;
                    match mode {
                        DataflowMode::WeightStationary => {
                            s.weight_residencies += residencies;
                            s.psum_writebacks += n * residencies;
                            s.register_writes += residencies * k2 * pes;
                        }
                        _ => {
                            s.psum_writebacks += n * ol as u64;
                            s.register_writes += wbytes as u64 * hw.pe.rows as u64;
                        }
                    }
                }
            }
        }
        if mode == DataflowMode::WeightStationary {
            s.residency_cycles = k2;
        }
        s.padding_macs = s.padding_macs.saturating_sub(s.macs);
    }
    s.tile_count = s.tiles.len();
    s.traffic.psum_write = s.psum_writebacks * 4;
    s.traffic.psum_read = s.psum_writebacks.saturating_sub(outputs) * 4;
    s.traffic.act_write = outputs * 2;
    s.compute_cycles = s.tiles.iter().map(|t| t.cycles).sum();
    s.prefetch_issue_cycle = Some(hw.tiling.prefetch_issue(s.tile_cycles));
    s.loads = s.tiles.len() as u64;
    for w in s.tiles.windows(2) {
        let window = w[0].cycles.min(hw.tiling.prefetch_lead);
        if window >= hw.memory.read_latency {
            s.hidden_loads += 1;
        } else {
            s.stall_cycles += hw.memory.read_latency - window;
        }
    }
    Ok(s)
}

fn schedule_vector(op: &OpSpec, mode: DataflowMode, hw: &HwConfig) -> OpSchedule {
    let pes = hw.pe.pes() as u64;
    let (work, operands, out_elems) = match op.kind {
        OpKind::Elementwise { elements, mults_per_element } => {
            let operands = if mults_per_element == 1 { 2 } else { 3 };
            ((elements * mults_per_element) as u64, (elements * operands) as u64, elements as u64)
        }
        _ => (op.input.len() as u64, op.input.len() as u64, op.output.len() as u64),
    };
    let compute = work.div_ceil(pes);
    OpSchedule {
        name: op.name.clone(),
        mode,
        mapping: Mapping::Vector,
        tiles: Vec::new(),
        tile_count: 0,
        spatial_tiles: 0,
        tile_cycles: 0,
        prefetch_issue_cycle: None,
        compute_cycles: compute,
        stall_cycles: 0,
        overheads: Overheads::default(),
        start_cycle: 0,
        total_cycles: 0,
        active_pe_cycles: work,
        utilization: 0.0,
        macs: 0,
        padding_macs: 0,
        elementwise_ops: op.elementwise_ops(),
        loads: 1,
        hidden_loads: 0,
        weight_residencies: 0,
        residency_cycles: 0,
        psum_writebacks: 0,
        register_writes: 0,
        traffic: BankTraffic { act_read: operands * 2, act_write: out_elems * 2, ..Default::default() },
    }
}

fn check_sram(config: &ModelConfig, ops: &[OpSpec], hw: &HwConfig) -> Result<(), ScheduleError> {
    let outs = config.layer_outputs()?;
    for (li, l) in config.layers.iter().enumerate() {
        let lops = ops.iter().filter(|o| o.layer == li);
        let weights: usize = lops.clone().map(OpSpec::weight_count).sum();
        let biases: usize = lops.map(|o| o.bias_count(l) * 4).sum();
        let act = outs[li].len() * 2;
        for (bank, needed, capacity) in
            [("weight", weights, hw.memory.weight_sram_bytes), ("bias", biases, hw.memory.bias_sram_bytes), ("activation", act, hw.memory.act_sram_bytes)]
        {
            if needed > capacity {
                return Err(ScheduleError::Sram { layer: l.name.clone(), bank, needed, capacity, overflow: needed - capacity });
            }
        }
    }
    Ok(())
}

/// Build the schedule with the mandated dataflow per layer kind.
pub fn build_schedule(config: &ModelConfig, hw: &HwConfig) -> Result<Schedule, ScheduleError> {
    build_schedule_with(config, hw, |_, kind| DataflowMode::for_layer(kind))
}

/// Build the schedule with a caller-chosen dataflow per layer.
pub fn build_schedule_with(config: &ModelConfig, hw: &HwConfig, mode_of: impl Fn(usize, LayerKind) -> DataflowMode) -> Result<Schedule, ScheduleError> {
    if hw.pe.rows == 0 || hw.pe.cols == 0 || hw.tiling.channels_per_tile == 0 || hw.tiling.out_channels_per_tile == 0 || hw.tiling.spatial_block == 0 {
        return Err(ScheduleError::Hardware("array, block and channel sizes must be positive".into()));
    }
    if hw.pe.clock_hz <= 0.0 {
        return Err(ScheduleError::Hardware("clock_hz must be positive".into()));
    }
    let ops = config.ops()?;
    check_sram(config, &ops, hw)?;
    let pes = hw.pe.pes() as u64;
    let mut layers: Vec<LayerSchedule> = Vec::new();
    let mut prev_mode: Option<DataflowMode> = None;
    let mut cycle = 0u64;
    let mut switches = 0;
    for op in &ops {
        let mode = mode_of(op.layer, op.layer_kind);
        let mut s = match op.kind {
            OpKind::Conv { .. } => schedule_conv(op, mode, hw)?,
            _ => schedule_vector(op, mode, hw),
        };
        if prev_mode.is_some_and(|p| p != mode) {
            s.overheads.mode_switch = hw.pe.mode_switch_cycles;
            switches += 1;
        }
        prev_mode = Some(mode);
        s.overheads.first_load = hw.tiling.first_load_exposed;
        s.overheads.fill = hw.tiling.pipeline_fill;
        s.overheads.drain = hw.tiling.pipeline_drain;
        s.overheads.activation = hw.pe.activation_cycles;
        if op.layer_kind == LayerKind::ConvJanet && matches!(op.kind, OpKind::Elementwise { .. }) {
            s.overheads.state_update = (op.output.len() as u64).div_ceil(hw.memory.state_update_values_per_cycle.max(1) as u64);
        }
        s.start_cycle = cycle;
        s.total_cycles = s.compute_cycles + s.stall_cycles + s.overheads.total();
        s.utilization = s.active_pe_cycles as f64 / (pes * s.total_cycles) as f64;
        cycle += s.total_cycles;
        let l = &config.layers[op.layer];
        if layers.last().map_or(true, |ls: &LayerSchedule| ls.layer != op.layer) {
            layers.push(LayerSchedule {
                layer: op.layer,
                name: l.name.clone(),
                kind: l.kind,
                mode,
                ops: Vec::new(),
                cycles: 0,
                tile_count: 0,
                active_pe_cycles: 0,
                utilization: 0.0,
                prefetch_overlap: 0.0,
                psum_writebacks: 0,
                traffic: BankTraffic::default(),
            });
        }
        layers.last_mut().unwrap().ops.push(s);
    }
    let (mut loads, mut hidden, mut active) = (0u64, 0u64, 0u64);
    for ls in &mut layers {
        ls.cycles = ls.ops.iter().map(|o| o.total_cycles).sum();
        ls.tile_count = ls.ops.iter().map(|o| o.tile_count).sum();
        ls.active_pe_cycles = ls.ops.iter().map(|o| o.active_pe_cycles).sum();
        ls.utilization = ls.active_pe_cycles as f64 / (pes * ls.cycles) as f64;
        let l: u64 = ls.ops.iter().map(|o| o.loads).sum();
        let h: u64 = ls.ops.iter().map(|o| o.hidden_loads).sum();
        ls.prefetch_overlap = if l == 0 { 0.0 } else { h as f64 / l as f64 };
        ls.psum_writebacks = ls.ops.iter().map(|o| o.psum_writebacks).sum();
        for o in &ls.ops {
            ls.traffic.merge(&o.traffic);
        }
        loads += l;
        hidden += h;
        active += ls.active_pe_cycles;
    }
    let compute_cycles = layers.iter().flat_map(|l| &l.ops).map(|o| o.compute_cycles).sum();
    Ok(Schedule {
        layers,
        total_cycles: cycle,
        compute_cycles,
        mode_switches: switches,
        utilization: active as f64 / (pes * cycle) as f64,
        prefetch_overlap: if loads == 0 { 0.0 } else { hidden as f64 / loads as f64 },
        pes: pes as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind;
    use crate::network::{Dims, LayerSpec};

    fn single(k: usize) -> ModelConfig {
        ModelConfig {
            input: Dims::new(8, 8, 8),
            layers: vec![LayerSpec::conv("c", k, 8, 8, 1, k / 2, ActivationKind::Relu)],
            output_dim: 512,
            output_scale: 1.0,
            sensor_scale: 1.0,
            formats: Default::default(),
        }
    }

    #[test]
    fn one_tile_with_eight_output_channels() {
        let mut hw = HwConfig::default();
        hw.tiling.out_channels_per_tile = 8;
        let s = build_schedule(&single(3), &hw).unwrap();
        let op = &s.layers[0].ops[0];
        assert_eq!(op.tile_count, 1);
        assert_eq!(op.compute_cycles, 64);
        assert_eq!(op.total_cycles, 64 + op.overheads.total());
        assert_eq!(op.overheads.mode_switch, 0);
        assert_eq!(build_schedule(&single(7), &hw), Err(ScheduleError::TileBuffer { op: "c".into(), needed: 8 * 8 * 49 + 8 * 8 * 8 * 2, capacity: 4096 }));
    }

    #[test]
    fn seven_by_seven_tiles_take_392_cycles() {
        let s = build_schedule(&single(7), &HwConfig::default()).unwrap();
        let op = &s.layers[0].ops[0];
        assert!(op.tiles.iter().all(|t| t.cycles == 392));
        assert_eq!(op.compute_cycles, 8 * 392);
        assert_eq!(op.prefetch_issue_cycle, Some(376));
    }

    #[test]
    fn default_tiling_counts_per_output_channel() {
        let s = build_schedule(&single(3), &HwConfig::default()).unwrap();
        assert_eq!(s.layers[0].ops[0].tile_count, 8);
    }

    #[test]
    fn prefetch_issue_cycles() {
        let hw = HwConfig::default();
        assert_eq!(hw.tiling.prefetch_issue(hw.tiling.cycles_for_kernel(3)), 48);
        assert_eq!(hw.tiling.prefetch_issue(hw.tiling.cycles_for_kernel(7)), 376);
        assert_eq!(hw.tiling.cycles_for_kernel(5), 200);
    }

    #[test]
    fn ws_to_os_inserts_one_switch() {
        let cfg = ModelConfig {
            input: Dims::new(8, 8, 8),
            layers: vec![LayerSpec::conv("c", 3, 8, 8, 1, 1, ActivationKind::Relu), LayerSpec::convjanet("j", 3, 8, 8)],
            output_dim: 512,
            output_scale: 1.0,
            sensor_scale: 1.0,
            formats: Default::default(),
        };
        let s = build_schedule(&cfg, &HwConfig::default()).unwrap();
        assert_eq!(s.mode_switches, 1);
        let sw: u64 = s.ops().map(|o| o.overheads.mode_switch).sum();
        assert_eq!(sw, 2);
        assert_eq!(s.layers[1].ops[0].overheads.mode_switch, 2);
    }

    #[test]
    fn sram_overflow_reports_layer() {
        let cfg = ModelConfig {
            input: Dims::new(1, 128, 160),
            layers: vec![LayerSpec::conv("big", 1, 1, 1, 1, 0, ActivationKind::Bypass)],
            output_dim: 128 * 160,
            output_scale: 1.0,
            sensor_scale: 1.0,
            formats: Default::default(),
        };
        match build_schedule(&cfg, &HwConfig::default()) {
            Err(ScheduleError::Sram { layer, bank, overflow, .. }) => {
                assert_eq!((layer.as_str(), bank), ("big", "activation"));
                assert_eq!(overflow, 128 * 160 * 2 - 32768);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spatial_tiles_cover_every_output_once() {
        for mapping in [Mapping::Blocks2d, Mapping::Raster] {
            let t = spatial_tiles(mapping, 15, 20, 8);
            let mut all: Vec<_> = t.iter().flatten().copied().collect();
            all.sort();
            all.dedup();
            assert_eq!(all.len(), 300);
            assert!(t.iter().all(|l| l.len() <= 64));
        }
        assert_eq!(spatial_tiles(Mapping::Blocks2d, 15, 20, 8).len(), 6);
        assert_eq!(spatial_tiles(Mapping::Raster, 15, 20, 8).len(), 5);
    }
}
