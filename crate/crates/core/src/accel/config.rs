//! Hardware parameters of the PE array, SRAMs and tiling scheme.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeArrayConfig {
    pub rows: usize,
    pub cols: usize,
    pub weight_regs_per_pe: usize,
    pub accumulator_bits: u32,
    pub mac_latency: u64,
    pub mode_switch_cycles: u64,
    pub activation_cycles: u64,
    pub clock_hz: f64,
}

impl Default for PeArrayConfig {
    fn default() -> Self {
        PeArrayConfig {
            rows: 8,
            cols: 8,
            weight_regs_per_pe: 9,
            accumulator_bits: 32,
            mac_latency: 1,
            mode_switch_cycles: 2,
            activation_cycles: 2,
            clock_hz: 4.0e8,
        }
    }
}

impl PeArrayConfig {
    pub fn pes(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub weight_sram_bytes: usize,
    pub act_sram_bytes: usize,
    pub bias_sram_bytes: usize,
    pub concurrent_ports: usize,
    pub read_latency: u64,
    pub fifo_depth: usize,
    /// Aggregate bandwidth across the three SRAMs, bytes per cycle.
    pub bytes_per_cycle: usize,
    pub tile_buffer_bytes: usize,
    /// Hidden-state values written back per cycle after a recurrent update.
    pub state_update_values_per_cycle: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            weight_sram_bytes: 64 * 1024,
            act_sram_bytes: 32 * 1024,
            bias_sram_bytes: 4 * 1024,
            concurrent_ports: 3,
            read_latency: 8,
            fifo_depth: 16,
            bytes_per_cycle: 8,
            tile_buffer_bytes: 4 * 1024,
            state_update_values_per_cycle: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileCycles {
    pub kernel: usize,
    pub cycles: u64,
}

/// Tiling and per-tile timing assumptions.
///
/// A convolution tile is one spatial block of up to 64 outputs times one
/// input-channel group of `channels_per_tile`. Standard k x k tiles cover
/// `out_channels_per_tile` output channels, 1x1 tiles cover
/// `channels_per_tile` output channels, depthwise tiles one channel group.
/// Kernels missing from `tile_cycles` take `channels_per_tile * k * k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingConfig {
    pub spatial_block: usize,
    pub channels_per_tile: usize,
    pub out_channels_per_tile: usize,
    pub tile_cycles: Vec<TileCycles>,
    pub prefetch_lead: u64,
    pub pipeline_fill: u64,
    pub pipeline_drain: u64,
    pub first_load_exposed: u64,
}

impl Default for TilingConfig {
    fn default() -> Self {
        TilingConfig {
            spatial_block: 8,
            channels_per_tile: 8,
            out_channels_per_tile: 1,
            tile_cycles: vec![TileCycles { kernel: 1, cycles: 64 }, TileCycles { kernel: 3, cycles: 64 }, TileCycles { kernel: 7, cycles: 392 }],
            prefetch_lead: 16,
            pipeline_fill: 8,
            pipeline_drain: 8,
            first_load_exposed: 16,
        }
    }
}

impl TilingConfig {
    pub fn cycles_for_kernel(&self, k: usize) -> u64 {
        self.tile_cycles.iter().find(|t| t.kernel == k).map_or((self.channels_per_tile * k * k) as u64, |t| t.cycles)
    }

    /// Cycle within a tile at which the next tile's load is issued.
    pub fn prefetch_issue(&self, tile_cycles: u64) -> u64 {
        tile_cycles.saturating_sub(self.prefetch_lead)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HwConfig {
    pub pe: PeArrayConfig,
    pub memory: MemoryConfig,
    pub tiling: TilingConfig,
}
