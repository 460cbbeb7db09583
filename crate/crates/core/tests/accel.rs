mod common;

use janeeye::accel::*;
use janeeye::activations::ActivationKind;
use janeeye::network::{Dims, FixedWeights, LayerSpec, ModelConfig};
use proptest::prelude::*;

fn conv_model(k: usize, cin: usize, cout: usize, h: usize, w: usize, stride: usize) -> ModelConfig {
    let oh = (h + 2 * (k / 2) - k) / stride + 1;
    let ow = (w + 2 * (k / 2) - k) / stride + 1;
    ModelConfig {
        input: Dims::new(cin, h, w),
        layers: vec![LayerSpec::conv("c", k, cin, cout, stride, k / 2, ActivationKind::Relu)],
        output_dim: cout * oh * ow,
        output_scale: 1.0,
        sensor_scale: 1.0,
        formats: Default::default(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ws_reuse_counters_match_closed_form(k in prop::sample::select(vec![3usize, 5, 7]), cin in 1usize..20, cout in 1usize..12, h in 4usize..30, w in 4usize..30, stride in 1usize..3) {
        let cfg = conv_model(k, cin, cout, h, w, stride);
        let s = match build_schedule(&cfg, &HwConfig::default()) {
            Err(ScheduleError::TileBuffer { needed, capacity, .. }) => {
                prop_assert!(needed > capacity);
                return Ok(());
            }
            r => r.unwrap(),
        };
        let op = &s.layers[0].ops[0];
        let out = cfg.ops().unwrap()[0].output;
        let blocks = out.height.div_ceil(8) * out.width.div_ceil(8);
        prop_assert_eq!(op.spatial_tiles, blocks);
        prop_assert_eq!(op.tile_count, blocks * cin.div_ceil(8) * cout);
        prop_assert_eq!(op.residency_cycles, (k * k) as u64);
        prop_assert_eq!(op.weight_residencies, (blocks * cin * cout) as u64);
        prop_assert_eq!(op.psum_writebacks, (out.len() * cin) as u64);
        prop_assert_eq!(op.compute_cycles, op.tile_count as u64 * HwConfig::default().tiling.cycles_for_kernel(k));
    }

    #[test]
    fn energy_never_rises_with_sparsity(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let cfg = ModelConfig::default();
        let hw = HwConfig::default();
        let c = EnergyCoefficients::shipped();
        let e = |s| simulate(&cfg, &hw, &SparsitySource::Injected(s), &c, SimOptions::default()).unwrap();
        let (x, y) = (e(lo), e(hi));
        prop_assert!(y.energy.total <= x.energy.total);
        prop_assert_eq!(x.total_cycles, y.total_cycles);
    }
}

#[test]
fn reads_cover_unique_operands() {
    let cfg = ModelConfig::default();
    let s = build_schedule(&cfg, &HwConfig::default()).unwrap();
    for (op, spec) in s.ops().zip(cfg.ops().unwrap()) {
        assert!(op.traffic.weight_read >= spec.weight_count() as u64, "{}", op.name);
        assert!(op.traffic.act_read >= spec.input.len() as u64 * 2 || spec.input.len() > spec.output.len() * 64, "{}", op.name);
    }
}

#[test]
fn measured_sparsity_matches_engine_counts() {
    let mut r = common::rng(3);
    let cfg = ModelConfig::default();
    let w = FixedWeights::random(&cfg, 9).unwrap();
    let frames = common::random_frames(&mut r, cfg.input, 2, 0.02);
    let src = measure_sparsity(&cfg, &w, &frames).unwrap();
    let SparsitySource::Measured { ops, .. } = &src else { unreachable!() };
    let zeros: u64 = ops.iter().map(|o| o.zero_operand_macs).sum();
    let rep = simulate(&cfg, &HwConfig::default(), &src, &EnergyCoefficients::shipped(), SimOptions::default()).unwrap();
    assert_eq!(rep.macs.skipped, zeros as f64 / 2.0);
    assert_eq!(rep.macs.total, rep.macs.executed + rep.macs.skipped);
    let first = &rep.layers[0].macs;
    assert!(first.skipped / first.total > 0.9, "sparse input frames gate most first-layer MACs");
}

#[test]
fn mismatched_measurement_is_rejected() {
    let src = SparsitySource::Measured { frames: 1, ops: vec![] };
    let err = simulate(&ModelConfig::default(), &HwConfig::default(), &src, &EnergyCoefficients::shipped(), SimOptions::default()).unwrap_err();
    assert!(matches!(err, SimError::OpCount { found: 0, .. }));
}

#[test]
fn datapath_agrees_for_other_tilings() {
    let mut r = common::rng(17);
    for ocpt in [2, 3, 8] {
        let mut hw = HwConfig::default();
        hw.tiling.out_channels_per_tile = ocpt;
        hw.tiling.channels_per_tile = 4;
        let cfg = common::random_model(&mut r);
        let w = FixedWeights::random(&cfg, ocpt as u64).unwrap();
        let frames = common::random_frames(&mut r, cfg.input, 2, 0.5);
        let v = verify_datapath(&cfg, &w, &hw, &frames).unwrap();
        assert!(v.identical, "{:?}", v.first_mismatch);
        assert!(v.tensors_compared >= 2 * cfg.layers.len());
    }
}

#[test]
fn zero_input_is_identical() {
    let cfg = ModelConfig::default();
    let w = FixedWeights::random(&cfg, 2).unwrap();
    let z = janeeye::tensor::Tensor::<i32>::zeros(3, 60, 80);
    let v = verify_datapath(&cfg, &w, &HwConfig::default(), &[z.clone(), z]).unwrap();
    assert!(v.identical);
    assert_eq!(v.frames, 2);
}

#[test]
fn calibration_reproduces_shipped_file() {
    let cal = calibrate_default(&ModelConfig::default(), &HwConfig::default(), &CalibrationTargets::default()).unwrap();
    let shipped = EnergyCoefficients::shipped();
    for class in ACTIVITY_CLASSES {
        let (a, b) = (cal.coefficients.get(class).unwrap(), shipped.get(class).unwrap());
        assert!((a - b).abs() <= 1e-12 * b, "{class}: {a} vs {b}");
    }
}

#[test]
fn report_serializes() {
    let r =
        simulate(&ModelConfig::default(), &HwConfig::default(), &SparsitySource::Injected(0.4), &EnergyCoefficients::shipped(), SimOptions::default()).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["layers"].as_array().unwrap().len(), 7);
    assert_eq!(v["layers"][4]["schedule"]["mode"], "output_stationary");
    assert!(v["energy"]["mac"].as_f64().unwrap() > 0.0);
}
