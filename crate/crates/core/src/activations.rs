//! Activation functions of the activation core, in raw Q5.11 form and as
//! real-valued references.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::fixed_point::ACT_ONE;

/// Raw Q5.11 breakpoints.
const SIGMOID_KNEE: i16 = 4 * ACT_ONE;
const TANH_KNEE: i16 = 2 * ACT_ONE;

/// Functions implemented by the hardware activation core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Bypass,
    Relu,
    #[serde(rename = "hardsigmoid")]
    HardSigmoid,
    #[serde(rename = "hardtanh")]
    HardTanh,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [ActivationKind::Bypass, ActivationKind::Relu, ActivationKind::HardSigmoid, ActivationKind::HardTanh];

    #[inline]
    pub fn apply_fixed(self, x: i16) -> i16 {
        match self {
            ActivationKind::Bypass => x,
            ActivationKind::Relu => relu(x),
            ActivationKind::HardSigmoid => hardsigmoid(x),
            ActivationKind::HardTanh => hardtanh(x),
        }
    }

    /// Real-valued form of the same piecewise function (exact division).
    #[inline]
    pub fn apply_real(self, x: f64) -> f64 {
        match self {
            ActivationKind::Bypass => x,
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::HardSigmoid => hardsigmoid_real(x),
            ActivationKind::HardTanh => hardtanh_real(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Bypass => "bypass",
            ActivationKind::Relu => "relu",
            ActivationKind::HardSigmoid => "hardsigmoid",
            ActivationKind::HardTanh => "hardtanh",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivationKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown activation '{s}'"))
    }
}

/// `x/8 + 1/2` clamped to [0, 1]; the division is an arithmetic shift.
#[inline]
pub fn hardsigmoid(x: i16) -> i16 {
    if x < -SIGMOID_KNEE {
        0
    } else if x > SIGMOID_KNEE {
        ACT_ONE
    } else {
        (x >> 3) + ACT_ONE / 2
    }
}

/// `x/2` clamped to [-1, 1]; the division is an arithmetic shift.
#[inline]
pub fn hardtanh(x: i16) -> i16 {
    if x < -TANH_KNEE {
        -ACT_ONE
    } else if x > TANH_KNEE {
        ACT_ONE
    } else {
        x >> 1
    }
}

#[inline]
pub fn relu(x: i16) -> i16 {
    x.max(0)
}

pub fn hardsigmoid_real(x: f64) -> f64 {
    (x / 8.0 + 0.5).clamp(0.0, 1.0)
}

pub fn hardtanh_real(x: f64) -> f64 {
    (x / 2.0).clamp(-1.0, 1.0)
}

/// Functions the hardware versions replace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    Sigmoid,
    Tanh,
    Gelu,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn reference_activation(x: f64, kind: ReferenceKind) -> f64 {
    match kind {
        ReferenceKind::Sigmoid => sigmoid(x),
        ReferenceKind::Tanh => tanh(x),
        ReferenceKind::Gelu => gelu(x),
    }
}

/// Worst-case gap between a hardware activation and its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproximationError {
    pub max_abs_error: f64,
    pub argmax: f64,
    pub mean_abs_error: f64,
}

/// Compare the fixed-point `hw` function against `reference` on a uniform
/// grid of `points` samples over `[lo, hi]`. Grid values are quantized to
/// Q5.11 before being fed to the hardware function.
pub fn approximation_error(hw: ActivationKind, reference: ReferenceKind, lo: f64, hi: f64, points: usize) -> ApproximationError {
    assert!(points >= 2 && hi > lo);
    let mut max = 0.0f64;
    let mut argmax = lo;
    let mut sum = 0.0;
    for i in 0..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let q = crate::fixed_point::quantize_activation(x).value;
        let y = crate::fixed_point::activation_to_f64(hw.apply_fixed(q));
        let err = (y - reference_activation(x, reference)).abs();
        sum += err;
        if err > max {
            max = err;
            argmax = x;
        }
    }
    ApproximationError { max_abs_error: max, argmax, mean_abs_error: sum / points as f64 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(x: f64) -> i16 {
        (x * 2048.0) as i16
    }

    #[test]
    fn hardsigmoid_points() {
        assert_eq!(hardsigmoid(0), 1024);
        assert_eq!(hardsigmoid(raw(-5.0)), 0);
        assert_eq!(hardsigmoid(raw(4.0)), 2048);
        assert_eq!(hardsigmoid(raw(-4.0)), 0);
        assert_eq!(hardsigmoid(raw(2.0)), 1536);
        assert_eq!(hardsigmoid(i16::MIN), 0);
        assert_eq!(hardsigmoid(i16::MAX), 2048);
    }

    #[test]
    fn hardtanh_points() {
        assert_eq!(hardtanh(raw(1.0)), 1024);
        assert_eq!(hardtanh(raw(-3.0)), -2048);
        assert_eq!(hardtanh(0), 0);
        assert_eq!(hardtanh(raw(2.0)), 2048);
        assert_eq!(hardtanh(raw(-2.0)), -2048);
        // floor shift on negative odd raws
        assert_eq!(hardtanh(-1), -1);
        assert_eq!(hardtanh(1), 0);
    }

    #[test]
    fn relu_sweep() {
        assert_eq!(relu(raw(-1.0)), 0);
        assert_eq!(relu(raw(0.5)), 1024);
        for x in i16::MIN..=i16::MAX {
            assert!(relu(x) >= 0);
        }
    }

    #[test]
    fn monotone_and_bounded() {
        let mut ps = hardsigmoid(i16::MIN);
        let mut pt = hardtanh(i16::MIN);
        for x in i16::MIN..=i16::MAX {
            let s = hardsigmoid(x);
            let t = hardtanh(x);
            assert!((0..=2048).contains(&s));
            assert!((-2048..=2048).contains(&t));
            assert!(s >= ps && t >= pt, "x={x}");
            ps = s;
            pt = t;
        }
    }

    #[test]
    fn hardtanh_symmetry_under_floor_shift() {
        // Exactly odd on even raws; floor shift leaves a one-ulp skew on odd raws.
        for x in (i16::MIN + 1)..=i16::MAX {
            let skew = hardtanh(x) as i32 + hardtanh(-x) as i32;
            if x % 2 == 0 || x.unsigned_abs() > TANH_KNEE as u16 {
                assert_eq!(skew, 0, "x={x}");
            } else {
                assert_eq!(skew, -1, "x={x}");
            }
        }
    }

    #[test]
    fn references() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn approximation_errors_are_reported() {
        let s = approximation_error(ActivationKind::HardSigmoid, ReferenceKind::Sigmoid, -8.0, 8.0, 4001);
        assert!(s.max_abs_error > 0.05 && s.max_abs_error < 0.2, "{s:?}");
        let t = approximation_error(ActivationKind::HardTanh, ReferenceKind::Tanh, -8.0, 8.0, 4001);
        assert!(t.max_abs_error > 0.1 && t.max_abs_error < 0.3, "{t:?}");
        let g = approximation_error(ActivationKind::Relu, ReferenceKind::Gelu, -8.0, 8.0, 4001);
        assert!(g.max_abs_error < 0.2, "{g:?}");
    }

    #[test]
    fn parse_names() {
        for k in ActivationKind::ALL {
            assert_eq!(k.name().parse::<ActivationKind>().unwrap(), k);
        }
        assert!("gelu".parse::<ActivationKind>().is_err());
    }
}
