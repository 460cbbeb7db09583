//! Activity-based energy model and its one-off calibration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENERGY_SCHEMA_VERSION: u32 = 1;

/// Activity classes, in report order.
pub const ACTIVITY_CLASSES: [&str; 5] = ["mac", "sram_read", "sram_write", "register", "control"];

/// Coefficients frozen after calibration against the default workload.
pub const SHIPPED_COEFFICIENTS: &str = include_str!("../../data/energy_coefficients.toml");

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("no coefficient for activity class '{0}'")]
    MissingCoefficient(String),
    #[error("coefficient file schema version {found}, expected {expected}")]
    Schema { found: u32, expected: u32 },
    #[error("coefficient file: {0}")]
    Parse(String),
    #[error("coefficient '{0}' must be finite and non-negative")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Picojoules per unit of each activity class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCoefficients {
    pub schema_version: u32,
    #[serde(default = "default_unit")]
    pub unit: String,
    #[serde(default)]
    pub leakage_mw: f64,
    pub coefficients: BTreeMap<String, f64>,
}

fn default_unit() -> String {
    "pJ".into()
}

impl EnergyCoefficients {
    pub fn shipped() -> Self {
        Self::from_toml(SHIPPED_COEFFICIENTS).expect("shipped coefficients parse")
    }

    pub fn zeros() -> Self {
        EnergyCoefficients {
            schema_version: ENERGY_SCHEMA_VERSION,
            unit: default_unit(),
            leakage_mw: 0.0,
            coefficients: ACTIVITY_CLASSES.iter().map(|c| (c.to_string(), 0.0)).collect(),
        }
    }

    pub fn from_toml(s: &str) -> Result<Self, EnergyError> {
        let c: EnergyCoefficients = toml::from_str(s).map_err(|e| EnergyError::Parse(e.to_string()))?;
        if c.schema_version != ENERGY_SCHEMA_VERSION {
            return Err(EnergyError::Schema { found: c.schema_version, expected: ENERGY_SCHEMA_VERSION });
        }
        if c.unit != "pJ" {
            return Err(EnergyError::Parse(format!("unsupported unit '{}'", c.unit)));
        }
        for (k, v) in &c.coefficients {
            if !v.is_finite() || *v < 0.0 {
                return Err(EnergyError::Invalid(k.clone()));
            }
        }
        if !c.leakage_mw.is_finite() || c.leakage_mw < 0.0 {
            return Err(EnergyError::Invalid("leakage_mw".into()));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, EnergyError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("coefficients serialize")
    }

    pub fn get(&self, class: &str) -> Option<f64> {
        self.coefficients.get(class).copied()
    }
}

/// Per-frame activity counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    /// Executed (non-gated) MACs plus elementwise multiplies.
    pub mac: f64,
    pub sram_read: f64,
    pub sram_write: f64,
    pub register: f64,
    pub control: f64,
}

impl Activity {
    pub fn get(&self, class: &str) -> f64 {
        match class {
            "mac" => self.mac,
            "sram_read" => self.sram_read,
            "sram_write" => self.sram_write,
            "register" => self.register,
            "control" => self.control,
            _ => 0.0,
        }
    }
}

/// Energy per class in joules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub mac: f64,
    pub sram_read: f64,
    pub sram_write: f64,
    pub register: f64,
    pub control: f64,
    pub dynamic: f64,
    pub leakage: f64,
    pub total: f64,
}

/// `E = sum(count * coefficient)`; leakage is added separately.
pub fn estimate_energy(activity: &Activity, coeffs: &EnergyCoefficients) -> Result<EnergyBreakdown, EnergyError> {
    let mut e = [0.0; 5];
    for (i, class) in ACTIVITY_CLASSES.iter().enumerate() {
        let n = activity.get(class);
        let c = match coeffs.get(class) {
            Some(c) => c,
            None if n == 0.0 => 0.0,
            None => return Err(EnergyError::MissingCoefficient(class.to_string())),
        };
        e[i] = n * c * 1e-12;
    }
    let dynamic = e.iter().sum();
    Ok(EnergyBreakdown { mac: e[0], sram_read: e[1], sram_write: e[2], register: e[3], control: e[4], dynamic, leakage: 0.0, total: dynamic })
}

pub fn add_leakage(b: &mut EnergyBreakdown, leakage_mw: f64, latency_s: f64) {
    b.leakage = leakage_mw * 1e-3 * latency_s;
    b.total = b.dynamic + b.leakage;
}

/// Relative weights of the non-MAC classes before scaling.
pub const BASE_RATIOS: [(&str, f64); 4] = [("sram_read", 1.0), ("sram_write", 1.2), ("register", 0.05), ("control", 2.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub energy_per_frame_j: f64,
    pub sparsity: f64,
    /// Dynamic-energy reduction at `sparsity` relative to a dense run.
    pub reduction: f64,
    pub leakage_mw: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        CalibrationTargets { energy_per_frame_j: 18.9e-6, sparsity: 0.40, reduction: 0.35, leakage_mw: 0.18 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub coefficients: EnergyCoefficients,
    pub mac_pj: f64,
    pub rest_scale: f64,
    pub energy_dense_j: f64,
    pub energy_target_j: f64,
}

/// Fit a MAC coefficient and a common scale for the other classes so that
/// the sparse run hits the energy target and the dense-to-sparse reduction
/// equals the target fraction.
pub fn calibrate(dense: &Activity, sparse: &Activity, targets: &CalibrationTargets) -> Result<Calibration, EnergyError> {
    let rest = |a: &Activity| BASE_RATIOS.iter().map(|(c, w)| a.get(c) * w).sum::<f64>();
    let (m0, m1, r) = (dense.mac, sparse.mac, rest(sparse));
    let e = targets.energy_per_frame_j * 1e12;
    let d = targets.reduction;
    // alpha (m0 - m1) = d (alpha m0 + beta r),  alpha m1 + beta r = e
    let denom = (1.0 - d) * m0 - m1;
    if denom <= 0.0 || r <= 0.0 || (rest(dense) - r).abs() > 1e-6 * r {
        return Err(EnergyError::Parse("calibration targets not reachable for this workload".into()));
    }
    let beta_r = e / (1.0 + d * m1 / denom);
    let alpha = d * beta_r / denom;
    let beta = beta_r / r;
    let mut coefficients: BTreeMap<String, f64> = BASE_RATIOS.iter().map(|(c, w)| (c.to_string(), w * beta)).collect();
    coefficients.insert("mac".into(), alpha);
    let c = EnergyCoefficients { schema_version: ENERGY_SCHEMA_VERSION, unit: default_unit(), leakage_mw: targets.leakage_mw, coefficients };
    Ok(Calibration {
        mac_pj: alpha,
        rest_scale: beta,
        energy_dense_j: (alpha * m0 + beta_r) * 1e-12,
        energy_target_j: targets.energy_per_frame_j,
        coefficients: c,
    })
}
