//! Float to mixed-precision conversion and error reporting.

use serde::{Deserialize, Serialize};

use crate::fixed_point::{accumulator_to_f64, quantize_bias, quantize_weight, weight_to_f64, QFormat};
use crate::network::{ConvParams, FixedWeights, FloatWeights, ModelConfig, NetworkError, ReferenceActivations, ReferenceEngine, Trace};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupQuantStats {
    pub name: String,
    pub weights: usize,
    pub biases: usize,
    pub max_abs_weight_error: f64,
    pub mean_abs_weight_error: f64,
    pub max_abs_bias_error: f64,
    pub saturated_weights: usize,
    pub saturated_biases: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub weight_bytes_fp32: usize,
    pub weight_bytes_fixed: usize,
    pub weight_ratio: f64,
    pub activation_bytes_fp32: usize,
    pub activation_bytes_fixed: usize,
    pub activation_ratio: f64,
    pub bias_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantReport {
    pub groups: Vec<GroupQuantStats>,
    pub total_weights: usize,
    pub total_biases: usize,
    pub max_abs_weight_error: f64,
    pub saturated: usize,
    pub footprint: Footprint,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ranges: Option<RangeReport>,
}

fn quantize_group(c: &ConvParams<f64, f64>) -> (ConvParams<i8, i32>, GroupQuantStats) {
    let mut st = GroupQuantStats {
        name: c.name.clone(),
        weights: c.weight.len(),
        biases: c.bias.as_ref().map_or(0, Vec::len),
        max_abs_weight_error: 0.0,
        mean_abs_weight_error: 0.0,
        max_abs_bias_error: 0.0,
        saturated_weights: 0,
        saturated_biases: 0,
    };
    let mut sum = 0.0;
    let weight = c
        .weight
        .iter()
        .map(|&w| {
            let q = quantize_weight(w);
            let e = (w - weight_to_f64(q.value)).abs();
            st.max_abs_weight_error = st.max_abs_weight_error.max(e);
            sum += e;
            st.saturated_weights += q.saturated as usize;
            q.value
        })
        .collect();
    st.mean_abs_weight_error = if c.weight.is_empty() { 0.0 } else { sum / c.weight.len() as f64 };
    let bias = c.bias.as_ref().map(|b| {
        b.iter()
            .map(|&v| {
                let q = quantize_bias(v);
                st.max_abs_bias_error = st.max_abs_bias_error.max((v - accumulator_to_f64(q.value)).abs());
                st.saturated_biases += q.saturated as usize;
                q.value
            })
            .collect()
    });
    (ConvParams { name: c.name.clone(), out_channels: c.out_channels, fan_in: c.fan_in, kernel: c.kernel, weight, bias }, st)
}

/// Quantize every weight to Q1.7 and every bias to accumulator scale.
pub fn quantize_model(float: &FloatWeights, config: &ModelConfig) -> Result<(FixedWeights, QuantReport), NetworkError> {
    float.check(config)?;
    let (convs, groups): (Vec<_>, Vec<_>) = float.convs.iter().map(quantize_group).unzip();
    let fixed = FixedWeights { convs };
    let total_weights = fixed.weight_count();
    let total_biases = fixed.bias_count();
    let act_elems: usize = config.input.len() + config.ops()?.iter().map(|o| o.output.len()).sum::<usize>();
    let fixed_act = act_elems * QFormat::Q5_11.storage_bytes();
    let footprint = Footprint {
        weight_bytes_fp32: total_weights * 4,
        weight_bytes_fixed: total_weights * QFormat::Q1_7.storage_bytes(),
        weight_ratio: QFormat::Q1_7.storage_bytes() as f64 / 4.0,
        activation_bytes_fp32: act_elems * 4,
        activation_bytes_fixed: fixed_act,
        activation_ratio: QFormat::Q5_11.storage_bytes() as f64 / 4.0,
        bias_bytes: total_biases * QFormat::ACCUMULATOR.storage_bytes(),
    };
    let report = QuantReport {
        max_abs_weight_error: groups.iter().map(|g| g.max_abs_weight_error).fold(0.0, f64::max),
        saturated: groups.iter().map(|g| g.saturated_weights + g.saturated_biases).sum(),
        groups,
        total_weights,
        total_biases,
        footprint,
        ranges: None,
    };
    Ok((fixed, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
    /// Outside the Q5.11 range [-16, 16).
    pub overflow_risk: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeReport {
    pub frames: usize,
    pub tensors: Vec<TensorRange>,
    pub flagged: Vec<String>,
}

/// Observe per-tensor ranges in reference mode over a frame sequence.
pub fn calibrate_ranges(config: &ModelConfig, weights: &FloatWeights, frames: &[Tensor<f64>]) -> Result<RangeReport, NetworkError> {
    let mut eng = ReferenceEngine::new(config, weights, ReferenceActivations::Deployed)?;
    let mut ranges: Vec<TensorRange> = Vec::new();
    let limit = QFormat::Q5_11;
    for f in frames {
        let mut trace: Trace<f64> = Vec::new();
        eng.step(f, Some(&mut trace))?;
        for e in trace {
            let (lo, hi) = e.tensor.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            match ranges.iter_mut().find(|r| r.name == e.name) {
                Some(r) => {
                    r.min = r.min.min(lo);
                    r.max = r.max.max(hi);
                }
                None => ranges.push(TensorRange { name: e.name, min: lo, max: hi, overflow_risk: false }),
            }
        }
    }
    for r in &mut ranges {
        r.overflow_risk = r.min < limit.min_value() || r.max >= -limit.min_value();
    }
    let flagged = ranges.iter().filter(|r| r.overflow_risk).map(|r| r.name.clone()).collect();
    Ok(RangeReport { frames: frames.len(), tensors: ranges, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind;
    use crate::network::LayerSpec;
    use proptest::prelude::*;

    #[test]
    fn representable_weights_have_zero_error() {
        let cfg = ModelConfig::default();
        let exact = FixedWeights::random(&cfg, 1).unwrap().dequantize();
        let (q, rep) = quantize_model(&exact, &cfg).unwrap();
        assert_eq!(q, FixedWeights::random(&cfg, 1).unwrap());
        assert_eq!(rep.max_abs_weight_error, 0.0);
        assert_eq!(rep.saturated, 0);
        assert_eq!(rep.total_weights + rep.total_biases, cfg.param_count().unwrap());
        assert_eq!(rep.footprint.weight_ratio, 0.25);
        assert_eq!(rep.footprint.activation_ratio, 0.5);
        assert_eq!(rep.footprint.weight_bytes_fixed * 4, rep.footprint.weight_bytes_fp32);
    }

    #[test]
    fn single_weight_error() {
        let c = ConvParams { name: "w".into(), out_channels: 1, fan_in: 1, kernel: (1, 1), weight: vec![0.7], bias: None };
        let (q, st) = quantize_group(&c);
        assert_eq!(q.weight, vec![90]);
        assert!((st.max_abs_weight_error - 0.003125).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_weights_saturate() {
        let c = ConvParams { name: "w".into(), out_channels: 1, fan_in: 1, kernel: (1, 2), weight: vec![1.5, -3.0], bias: None };
        let (q, st) = quantize_group(&c);
        assert_eq!(q.weight, vec![127, -128]);
        assert_eq!(st.saturated_weights, 2);
    }

    fn tiny() -> ModelConfig {
        ModelConfig {
            input: crate::network::Dims::new(1, 2, 2),
            layers: vec![LayerSpec::conv("c", 1, 1, 2, 1, 0, ActivationKind::Bypass), LayerSpec::global_max_pool("p", 2)],
            output_dim: 2,
            output_scale: 1.0,
            sensor_scale: 1.0,
            formats: Default::default(),
        }
    }

    #[test]
    fn ranges_zero_input_and_overflow_flag() {
        let cfg = tiny();
        let mut w = FloatWeights::zeros(&cfg).unwrap();
        let rr = calibrate_ranges(&cfg, &w, &[Tensor::zeros(1, 2, 2)]).unwrap();
        assert!(rr.tensors.iter().all(|t| t.min == 0.0 && t.max == 0.0));
        assert!(rr.flagged.is_empty());
        w.convs[0].weight = vec![0.5, 0.25];
        let rr = calibrate_ranges(&cfg, &w, &[Tensor::filled(1, 2, 2, 40.0)]).unwrap();
        assert!(rr.flagged.contains(&"c.pre".to_string()), "{rr:?}");
        let c = rr.tensors.iter().find(|t| t.name == "c.pre").unwrap();
        assert_eq!((c.min, c.max), (10.0, 20.0));
    }

    proptest! {
        #[test]
        fn round_trip_within_half_lsb(w in -2.0f64..2.0) {
            let q = quantize_weight(w).value;
            prop_assert!((weight_to_f64(q) - w.clamp(-1.0, 127.0 / 128.0)).abs() <= 1.0 / 256.0);
        }
    }
}
