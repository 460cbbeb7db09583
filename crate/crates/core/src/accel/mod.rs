//! Cycle-approximate model of the 8x8 PE accelerator.

mod config;
mod datapath;
mod energy;
mod fsm;
mod schedule;
mod sim;

pub use config::{HwConfig, MemoryConfig, PeArrayConfig, TileCycles, TilingConfig};
pub use datapath::{verify_datapath, DatapathEngine, DatapathVerdict, Mismatch};
pub use energy::{
    add_leakage, calibrate, estimate_energy, Activity, Calibration, CalibrationTargets, EnergyBreakdown, EnergyCoefficients, EnergyError, ACTIVITY_CLASSES,
    BASE_RATIOS, ENERGY_SCHEMA_VERSION, SHIPPED_COEFFICIENTS,
};
pub use fsm::{fsm_trace, FsmState, FsmStep};
pub use schedule::{
    build_schedule, build_schedule_with, channel_groups, spatial_tiles, BankTraffic, DataflowMode, LayerSchedule, Mapping, OpSchedule, Overheads, Schedule,
    ScheduleError, Tile,
};
pub use sim::{measure_sparsity, simulate, simulate_schedule, LayerReport, MacCounts, SimError, SimOptions, SimReport, SparsitySource};

/// Dense and sparse activity for the default workload, then the fit.
pub fn calibrate_default(config: &crate::network::ModelConfig, hw: &HwConfig, targets: &CalibrationTargets) -> Result<Calibration, SimError> {
    let ones = EnergyCoefficients { coefficients: ACTIVITY_CLASSES.iter().map(|c| (c.to_string(), 1.0)).collect(), ..EnergyCoefficients::zeros() };
    let dense = simulate(config, hw, &SparsitySource::Injected(0.0), &ones, SimOptions::default())?;
    let sparse = simulate(config, hw, &SparsitySource::Injected(targets.sparsity), &ones, SimOptions::default())?;
    Ok(calibrate(&dense.activity, &sparse.activity, targets)?)
}
