"""Smoke test for the janeeye Python module.

Build first with `maturin develop -m crates/py/Cargo.toml`, then run
`python python/smoke_test.py` (or under pytest).
"""

import os
import tempfile

import janeeye


def synthetic_events(n, step_us=100):
    return [(i * step_us, (i * 37) % 640, (i * 11) % 480, -1 if i % 3 == 0 else 1) for i in range(n)]


def test_fixed_point_helpers():
    assert janeeye.quantize_weight(0.5) == 64
    assert janeeye.quantize_weight(5.0) == 127
    assert janeeye.quantize_activation(1.0) == 2048
    assert janeeye.mac(0, 64, 2048) == 64 * 2048
    assert janeeye.hardsigmoid(0) == 1024
    assert janeeye.hardtanh(4096) == 2048


def test_aggregation_and_frames_round_trip():
    frames = janeeye.Frames.from_events(synthetic_events(10_000), mode="time", dt_us=10_000)
    assert len(frames) == 100
    assert frames.shape == (3, 60, 80)
    f0 = frames.get(0)
    for y in range(60):
        for x in range(80):
            assert f0[2][y][x] == f0[0][y][x] - f0[1][y][x]
    counted = janeeye.Frames.from_events(synthetic_events(5000), mode="count", n_evt=5000)
    assert len(counted) == 1
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "frames.bin")
        frames.save(path)
        back = janeeye.Frames.load(path)
        assert len(back) == 100 and back.get(7) == frames.get(7)


def test_bad_events_raise():
    try:
        janeeye.Frames.from_events([(10, 1, 1, 1), (5, 1, 1, 1)])
    except ValueError as e:
        assert "regression" in str(e)
    else:
        raise AssertionError("expected ValueError")


def test_model_counters_and_inference():
    m = janeeye.Model(seed=3)
    assert m.params == 17_034
    assert m.macs == 5_500_896
    assert m.flops == 2 * m.macs
    frames = janeeye.Frames.from_events(synthetic_events(3000, 10))
    preds, counters = m.infer(frames, mode="fixed")
    ref, _ = m.infer(frames, mode="reference")
    assert len(preds) == len(ref) == 3
    assert counters["macs_per_frame"] == 5_500_896
    assert max(abs(a[0] - b[0]) + abs(a[1] - b[1]) for a, b in zip(preds, ref)) < 2.0


def test_zero_weights_predict_centre():
    m = janeeye.Model(zero_weights=True)
    frames = janeeye.Frames.from_events(synthetic_events(2000, 10))
    preds, _ = m.infer(frames)
    assert all(p == (40.0, 30.0) for p in preds)


def test_quantize_and_save_load():
    m = janeeye.Model(seed=1)
    rep = m.quantize()
    assert rep["footprint"]["weight_ratio"] == 0.25
    assert rep["footprint"]["activation_ratio"] == 0.5
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.jem")
        m.save(path)
        back = janeeye.Model.load(path)
        assert back.has_fixed and back.has_float
        assert back.config_json() == m.config_json()


def test_simulate():
    m = janeeye.Model(seed=2)
    r = m.simulate("inject=0.4")
    assert r["latency_ms"] <= 0.5
    assert abs(r["energy_per_frame_uj"] - 18.9) < 1e-6
    slow = m.simulate("inject=0.4", clock_hz=2e8)
    assert slow["latency_ms"] == 2 * r["latency_ms"]
    dense = m.simulate("inject=0")
    assert abs(r["energy"]["mac"] / dense["energy"]["mac"] - 0.6) < 0.02
    frames = janeeye.Frames.from_events(synthetic_events(2000, 10))
    measured = m.simulate("measured", frames=frames)
    assert measured["sparsity_source"] == "measured"
    assert measured["frames"] == 2
    assert len(measured["layers"]) == 7


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print("ok", name)
