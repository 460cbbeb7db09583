//! Whole-frame simulation: schedule plus zero-skipping activity and energy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::HwConfig;
use super::energy::{add_leakage, estimate_energy, Activity, EnergyBreakdown, EnergyCoefficients, EnergyError};
use super::schedule::{build_schedule, BankTraffic, LayerSchedule, Schedule, ScheduleError};
use crate::network::{FixedEngine, FixedWeights, ModelConfig, NetworkError, OpStats};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("injected sparsity {0} outside [0, 1]")]
    Sparsity(f64),
    #[error("measured activity has {found} ops, schedule has {expected}")]
    OpCount { found: usize, expected: usize },
}

/// Where zero-operand counts come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SparsitySource {
    /// Per-op totals from a fixed-point run over `frames` frames.
    Measured { frames: usize, ops: Vec<OpStats> },
    /// A fixed fraction of every convolution's MACs is gated.
    Injected(f64),
}

impl SparsitySource {
    pub fn label(&self) -> String {
        match self {
            SparsitySource::Measured { .. } => "measured".into(),
            SparsitySource::Injected(s) => format!("inject={s}"),
        }
    }
}

/// Run the fixed-point engine over `frames` and collect per-op zero counts.
pub fn measure_sparsity(config: &ModelConfig, weights: &FixedWeights, frames: &[Tensor<i32>]) -> Result<SparsitySource, NetworkError> {
    let mut eng = FixedEngine::new(config, weights)?;
    let mut ops = vec![OpStats::default(); eng.ops().len()];
    for f in frames {
        let step = eng.step_counts(f, None)?;
        for (a, b) in ops.iter_mut().zip(&step.ops) {
            a.merge(b);
        }
    }
    Ok(SparsitySource::Measured { frames: frames.len(), ops })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MacCounts {
    pub total: f64,
    pub executed: f64,
    pub skipped: f64,
    /// Issue slots of zero-padded partial tiles, not part of `total`.
    pub padding: f64,
    pub elementwise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub schedule: LayerSchedule,
    pub macs: MacCounts,
    pub activity: Activity,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub sparsity_source: String,
    pub frames: usize,
    pub clock_hz: f64,
    pub total_cycles: u64,
    pub compute_cycles: u64,
    pub latency_s: f64,
    pub latency_ms: f64,
    /// Inverse of single-frame latency.
    pub fps: f64,
    /// Throughput if exposed loads, fills and drains overlap the previous frame.
    pub fps_pipelined: f64,
    pub utilization: f64,
    pub prefetch_overlap: f64,
    pub mode_switches: usize,
    pub macs: MacCounts,
    pub skipped_fraction: f64,
    pub activity: Activity,
    pub energy: EnergyBreakdown,
    pub energy_per_frame_j: f64,
    pub energy_per_frame_uj: f64,
    pub dynamic_power_mw: f64,
    pub leakage_included: bool,
    pub layers: Vec<LayerReport>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimOptions {
    pub include_leakage: bool,
}

fn activity_of(traffic: &BankTraffic, register: f64, cycles: f64, macs: &MacCounts) -> Activity {
    Activity { mac: macs.executed + macs.elementwise, sram_read: traffic.reads() as f64, sram_write: traffic.writes() as f64, register, control: cycles }
}

/// Simulate one frame of the default pipeline; activity is averaged per frame.
pub fn simulate(config: &ModelConfig, hw: &HwConfig, sparsity: &SparsitySource, coeffs: &EnergyCoefficients, opts: SimOptions) -> Result<SimReport, SimError> {
    let schedule = build_schedule(config, hw)?;
    simulate_schedule(schedule, hw, sparsity, coeffs, opts)
}

pub fn simulate_schedule(
    schedule: Schedule,
    hw: &HwConfig,
    sparsity: &SparsitySource,
    coeffs: &EnergyCoefficients,
    opts: SimOptions,
) -> Result<SimReport, SimError> {
    let n_ops = schedule.ops().count();
    let frames = match sparsity {
        SparsitySource::Injected(s) if !(0.0..=1.0).contains(s) => return Err(SimError::Sparsity(*s)),
        SparsitySource::Injected(_) => 1,
        SparsitySource::Measured { ops, .. } if ops.len() != n_ops => return Err(SimError::OpCount { found: ops.len(), expected: n_ops }),
        SparsitySource::Measured { frames, .. } => (*frames).max(1),
    };
    let mut layers = Vec::new();
    let mut total = Activity::default();
    let mut macs = MacCounts::default();
    let mut oi = 0;
    for ls in schedule.layers {
        let mut lm = MacCounts::default();
        let mut traffic = BankTraffic::default();
        let mut register = 0.0;
        for op in &ls.ops {
            let skipped = match sparsity {
                SparsitySource::Injected(s) => (s * op.macs as f64).round(),
                SparsitySource::Measured { ops, .. } => ops[oi].zero_operand_macs as f64 / frames as f64,
            };
            lm.total += op.macs as f64;
            lm.skipped += skipped;
            lm.executed += op.macs as f64 - skipped;
            lm.padding += op.padding_macs as f64;
            lm.elementwise += op.elementwise_ops as f64;
            traffic.merge(&op.traffic);
            register += op.register_writes as f64;
            oi += 1;
        }
        let activity = activity_of(&traffic, register, ls.cycles as f64, &lm);
        let energy = estimate_energy(&activity, coeffs)?;
        macs.total += lm.total;
        macs.executed += lm.executed;
        macs.skipped += lm.skipped;
        macs.padding += lm.padding;
        macs.elementwise += lm.elementwise;
        total.mac += activity.mac;
        total.sram_read += activity.sram_read;
        total.sram_write += activity.sram_write;
        total.register += activity.register;
        total.control += activity.control;
        layers.push(LayerReport { schedule: ls, macs: lm, activity, energy });
    }
    let latency_s = schedule.total_cycles as f64 / hw.pe.clock_hz;
    let mut energy = estimate_energy(&total, coeffs)?;
    if opts.include_leakage {
        add_leakage(&mut energy, coeffs.leakage_mw, latency_s);
    }
    Ok(SimReport {
        sparsity_source: sparsity.label(),
        frames,
        clock_hz: hw.pe.clock_hz,
        total_cycles: schedule.total_cycles,
        compute_cycles: schedule.compute_cycles,
        latency_s,
        latency_ms: schedule.total_cycles as f64 / hw.pe.clock_hz * 1000.0,
        fps: hw.pe.clock_hz / schedule.total_cycles as f64,
        fps_pipelined: hw.pe.clock_hz / schedule.compute_cycles.max(1) as f64,
        utilization: schedule.utilization,
        prefetch_overlap: schedule.prefetch_overlap,
        mode_switches: schedule.mode_switches,
        skipped_fraction: if macs.total > 0.0 { macs.skipped / macs.total } else { 0.0 },
        macs,
        activity: total,
        energy_per_frame_j: energy.total,
        energy_per_frame_uj: energy.total * 1e6,
        dynamic_power_mw: energy.dynamic / latency_s * 1e3,
        energy,
        leakage_included: opts.include_leakage,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_identity_and_conservation() {
        let cfg = ModelConfig::default();
        let hw = HwConfig::default();
        let r = simulate(&cfg, &hw, &SparsitySource::Injected(0.3), &EnergyCoefficients::shipped(), SimOptions::default()).unwrap();
        assert_eq!(r.latency_ms, r.total_cycles as f64 / hw.pe.clock_hz * 1000.0);
        assert_eq!(r.macs.total, r.macs.executed + r.macs.skipped);
        assert_eq!(r.macs.total, cfg.mac_count().unwrap() as f64);
        let sum: f64 = r.layers.iter().map(|l| l.energy.dynamic).sum();
        assert!((sum - r.energy.dynamic).abs() < 1e-15);
    }

    #[test]
    fn zero_injection_skips_nothing() {
        let r = simulate(&ModelConfig::default(), &HwConfig::default(), &SparsitySource::Injected(0.0), &EnergyCoefficients::shipped(), SimOptions::default())
            .unwrap();
        assert_eq!(r.macs.skipped, 0.0);
        assert!(simulate(&ModelConfig::default(), &HwConfig::default(), &SparsitySource::Injected(1.5), &EnergyCoefficients::shipped(), SimOptions::default())
            .is_err());
    }

    #[test]
    fn leakage_adds_power_times_latency() {
        let c = EnergyCoefficients::shipped();
        let a = simulate(&ModelConfig::default(), &HwConfig::default(), &SparsitySource::Injected(0.0), &c, SimOptions::default()).unwrap();
        let b = simulate(&ModelConfig::default(), &HwConfig::default(), &SparsitySource::Injected(0.0), &c, SimOptions { include_leakage: true }).unwrap();
        assert!((b.energy.total - a.energy.total - c.leakage_mw * 1e-3 * a.latency_s).abs() < 1e-15);
    }
}
