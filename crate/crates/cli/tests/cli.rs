use std::path::Path;
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn janeeye(args: &[&str]) -> (i32, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_janeeye")).args(args).arg("-q").env_remove("JANEEYE_COEFFICIENTS").output().unwrap();
    let report = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad report ({e}): {}", String::from_utf8_lossy(&out.stdout)));
    (out.status.code().unwrap(), report)
}

fn ok(args: &[&str]) -> Value {
    let (code, r) = janeeye(args);
    assert_eq!(code, 0, "{}", r["error"]);
    assert!(r["error"].is_null());
    r
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

/// One event every `step` microseconds for `n` events.
fn write_events(path: &Path, n: u64, step: u64) {
    let mut s = String::from("# t_us,x,y,p\n");
    for i in 0..n {
        s += &format!("{},{},{},{}\n", i * step, (i * 37) % 640, (i * 11) % 480, if i % 3 == 0 { -1 } else { 1 });
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn report_carries_schema_and_manifest() {
    let r = ok(&["derive-config"]);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "derive-config");
    assert_eq!(r["manifest"]["subcommand"], "derive-config");
    assert_eq!(r["counters"]["params"], 17_034);
    assert_eq!(r["counters"]["macs_per_frame"], 5_500_896);
}

#[test]
fn time_mode_gives_100_frames_per_second() {
    let d = TempDir::new().unwrap();
    write_events(&d.path().join("ev.csv"), 10_000, 100);
    let r = ok(&["aggregate", &p(&d, "ev.csv"), "-o", &p(&d, "f.bin"), "--mode", "time", "--dt-us", "10000"]);
    assert_eq!(r["results"]["frames"], 100);
    assert_eq!(r["results"]["frame_rate_hz"], 100.0);
    assert_eq!(r["results"]["frame_shape"], serde_json::json!([3, 60, 80]));
    assert_eq!(r["manifest"]["params"]["dt_us"], 10_000);
}

#[test]
fn count_mode_and_empty_stream() {
    let d = TempDir::new().unwrap();
    write_events(&d.path().join("ev.csv"), 5000, 3);
    let r = ok(&["aggregate", &p(&d, "ev.csv"), "-o", &p(&d, "f.bin"), "--mode", "count", "--n-evt", "5000"]);
    assert_eq!(r["results"]["frames"], 1);
    std::fs::write(d.path().join("empty.csv"), "").unwrap();
    let r = ok(&["aggregate", &p(&d, "empty.csv"), "-o", &p(&d, "e.bin")]);
    assert_eq!(r["results"]["frames"], 0);
    assert_eq!(std::fs::read(d.path().join("e.bin")).unwrap().len(), 0);
}

#[test]
fn zero_weight_model_predicts_head_bias() {
    let d = TempDir::new().unwrap();
    write_events(&d.path().join("ev.csv"), 3000, 10);
    ok(&["aggregate", &p(&d, "ev.csv"), "-o", &p(&d, "f.bin")]);
    ok(&["init-model", "-o", &p(&d, "z.jem"), "--zero-weights"]);
    for mode in ["fixed", "reference"] {
        let r = ok(&["infer", &p(&d, "z.jem"), &p(&d, "f.bin"), "--mode", mode]);
        let preds = r["results"]["predictions"].as_array().unwrap();
        assert_eq!(preds.len(), 3);
        for q in preds {
            assert_eq!((q["x"].as_f64().unwrap(), q["y"].as_f64().unwrap()), (40.0, 30.0), "{mode}");
        }
    }
}

#[test]
fn infer_reports_pixel_error_and_mode_delta() {
    let d = TempDir::new().unwrap();
    write_events(&d.path().join("ev.csv"), 4000, 10);
    ok(&["aggregate", &p(&d, "ev.csv"), "-o", &p(&d, "f.bin")]);
    ok(&["init-model", "-o", &p(&d, "z.jem"), "--zero-weights"]);
    std::fs::write(d.path().join("gt.csv"), "frame_idx,x,y\n0,43,34\n1,40,30\n9,0,0\n").unwrap();
    let r = ok(&["infer", &p(&d, "z.jem"), &p(&d, "f.bin"), "--ground-truth", &p(&d, "gt.csv"), "--compare"]);
    let g = &r["results"]["ground_truth"];
    assert_eq!(g["matched"], 2);
    assert_eq!(g["mean_pixel_error"], 2.5);
    assert_eq!(r["results"]["comparison"]["max_delta"], 0.0);
}

#[test]
fn halving_clock_doubles_latency() {
    let d = TempDir::new().unwrap();
    ok(&["init-model", "-o", &p(&d, "m.jem"), "--seed", "1"]);
    let a = ok(&["simulate", &p(&d, "m.jem"), "--sparsity", "inject=0.4"]);
    let b = ok(&["simulate", &p(&d, "m.jem"), "--sparsity", "inject=0.4", "--clock-hz", "200000000"]);
    let (la, lb) = (a["results"]["latency_ms"].as_f64().unwrap(), b["results"]["latency_ms"].as_f64().unwrap());
    assert_eq!(a["results"]["total_cycles"], b["results"]["total_cycles"]);
    assert_eq!(lb, 2.0 * la);
    assert!(la <= 0.5);
}

#[test]
fn injected_sparsity_scales_mac_energy() {
    let d = TempDir::new().unwrap();
    ok(&["init-model", "-o", &p(&d, "m.jem")]);
    let executed = |s: &str| ok(&["simulate", &p(&d, "m.jem"), "--sparsity", s])["results"]["macs"]["executed"].as_f64().unwrap();
    let ratio = executed("inject=0.4") / executed("inject=0");
    assert!((ratio - 0.60).abs() < 1e-6, "{ratio}");
    let mac = |s: &str| ok(&["simulate", &p(&d, "m.jem"), "--sparsity", s])["results"]["energy"]["mac"].as_f64().unwrap();
    let r = mac("inject=0.4") / mac("inject=0");
    assert!((r - 0.60).abs() < 0.02, "{r}");
}

#[test]
fn sweep_is_monotone() {
    let d = TempDir::new().unwrap();
    ok(&["init-model", "-o", &p(&d, "m.jem")]);
    let r = ok(&["simulate", &p(&d, "m.jem"), "--sweep", "0,0.2,0.4,0.6"]);
    let e: Vec<f64> = r["results"]["sweep"].as_array().unwrap().iter().map(|x| x["energy_per_frame_uj"].as_f64().unwrap()).collect();
    assert_eq!(e.len(), 4);
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    assert!((e[2] - 18.9).abs() < 1e-6);
}

#[test]
fn measured_sparsity_and_fsm_trace() {
    let d = TempDir::new().unwrap();
    write_events(&d.path().join("ev.csv"), 2000, 10);
    ok(&["aggregate", &p(&d, "ev.csv"), "-o", &p(&d, "f.bin")]);
    ok(&["init-model", "-o", &p(&d, "m.jem"), "--seed", "5"]);
    let r = ok(&["simulate", &p(&d, "m.jem"), &p(&d, "f.bin"), "--fsm-trace"]);
    assert_eq!(r["manifest"]["params"]["sparsity"], "measured");
    assert_eq!(r["results"]["frames"], 2);
    let trace = r["results"]["fsm_trace"].as_array().unwrap();
    assert_eq!(trace.first().unwrap()["state"], "idle");
    assert_eq!(trace.last().unwrap()["state"], "done");
    assert_eq!(trace.last().unwrap()["enter_cycle"], r["results"]["total_cycles"]);
}

#[test]
fn coefficients_file_from_environment() {
    let d = TempDir::new().unwrap();
    ok(&["init-model", "-o", &p(&d, "m.jem")]);
    ok(&["calibrate-energy", "-o", &p(&d, "c.toml"), "--energy-uj", "37.8"]);
    let out = Command::new(env!("CARGO_BIN_EXE_janeeye"))
        .args(["simulate", &p(&d, "m.jem"), "--sparsity", "inject=0.4", "-q"])
        .env("JANEEYE_COEFFICIENTS", p(&d, "c.toml"))
        .output()
        .unwrap();
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((r["results"]["energy_per_frame_uj"].as_f64().unwrap() - 37.8).abs() < 1e-6);
    assert_eq!(r["manifest"]["inputs"]["coefficients"], p(&d, "c.toml"));
}

#[test]
fn quantize_reports_footprint_and_round_trips() {
    let d = TempDir::new().unwrap();
    ok(&["init-model", "-o", &p(&d, "f.jem"), "--weights", "float", "--seed", "2"]);
    let r = ok(&["quantize", &p(&d, "f.jem"), "-o", &p(&d, "q.jem")]);
    assert_eq!(r["results"]["footprint"]["weight_ratio"], 0.25);
    assert_eq!(r["results"]["footprint"]["activation_ratio"], 0.5);
    assert!(r["results"]["max_abs_weight_error"].as_f64().unwrap() <= 1.0 / 256.0);
    ok(&["quantize", &p(&d, "q.jem"), "-o", &p(&d, "q2.jem")]);
    let a = ok(&["derive-config", "--model", &p(&d, "q.jem")]);
    assert_eq!(a["counters"]["params"], 17_034);
    // Re-quantizing representable weights is lossless.
    std::fs::write(d.path().join("ev.csv"), "5,1,1,1\n").unwrap();
    ok(&["aggregate", &p(&d, "ev.csv"), "-o", &p(&d, "fr.bin")]);
    let x = ok(&["infer", &p(&d, "q.jem"), &p(&d, "fr.bin")]);
    let y = ok(&["infer", &p(&d, "q2.jem"), &p(&d, "fr.bin")]);
    assert_eq!(x["results"]["predictions"], y["results"]["predictions"]);
}

#[test]
fn representable_weights_quantize_without_error() {
    let d = TempDir::new().unwrap();
    ok(&["init-model", "-o", &p(&d, "z.jem"), "--zero-weights", "--weights", "float"]);
    let r = ok(&["quantize", &p(&d, "z.jem"), "-o", &p(&d, "q.jem")]);
    assert_eq!(r["results"]["max_abs_weight_error"], 0.0);
    assert_eq!(r["results"]["saturated"], 0);
}

#[test]
fn errors_have_codes_and_nonzero_exit() {
    let d = TempDir::new().unwrap();
    let missing = p(&d, "missing.jem");
    let (code, r) = janeeye(&["infer", &missing, &missing]);
    assert_ne!(code, 0);
    assert_eq!(r["error"]["code"], "io");
    assert!(r["results"].is_null());

    std::fs::write(d.path().join("bad.csv"), "1,2,3,1\n0,2,3,1\n").unwrap();
    let (code, r) = janeeye(&["aggregate", &p(&d, "bad.csv"), "-o", &p(&d, "x.bin")]);
    assert_ne!(code, 0);
    assert_eq!(r["error"]["code"], "event_parse");

    std::fs::write(d.path().join("junk.jem"), b"not a model").unwrap();
    let (_, r) = janeeye(&["simulate", &p(&d, "junk.jem")]);
    assert_eq!(r["error"]["code"], "model_format");

    ok(&["init-model", "-o", &p(&d, "m.jem")]);
    let (_, r) = janeeye(&["simulate", &p(&d, "m.jem"), "--sparsity", "inject=2"]);
    assert_eq!(r["error"]["code"], "invalid_argument");

    std::fs::write(d.path().join("c.toml"), "schema_version = 9\nunit = \"pJ\"\n[coefficients]\n").unwrap();
    let (_, r) = janeeye(&["simulate", &p(&d, "m.jem"), "--coefficients", &p(&d, "c.toml")]);
    assert_eq!(r["error"]["code"], "coefficients");

    let hw = r#"{"pe":{"rows":8,"cols":8,"weight_regs_per_pe":9,"accumulator_bits":32,"mac_latency":1,"mode_switch_cycles":2,"activation_cycles":2,"clock_hz":4e8},
      "memory":{"weight_sram_bytes":1024,"act_sram_bytes":32768,"bias_sram_bytes":4096,"concurrent_ports":3,"read_latency":8,"fifo_depth":16,"bytes_per_cycle":8,"tile_buffer_bytes":4096,"state_update_values_per_cycle":8},
      "tiling":{"spatial_block":8,"channels_per_tile":8,"out_channels_per_tile":1,"tile_cycles":[{"kernel":1,"cycles":64},{"kernel":3,"cycles":64},{"kernel":7,"cycles":392}],"prefetch_lead":16,"pipeline_fill":8,"pipeline_drain":8,"first_load_exposed":16}}"#;
    std::fs::write(d.path().join("hw.json"), hw).unwrap();
    let (code, r) = janeeye(&["simulate", &p(&d, "m.jem"), "--hw", &p(&d, "hw.json")]);
    assert_ne!(code, 0);
    assert_eq!(r["error"]["code"], "sram_overflow", "{}", r["error"]);
    assert!(r["error"]["message"].as_str().unwrap().contains("conv3"));
}

#[test]
fn reports_are_deterministic() {
    let d = TempDir::new().unwrap();
    ok(&["init-model", "-o", &p(&d, "a.jem"), "--seed", "9"]);
    ok(&["init-model", "-o", &p(&d, "b.jem"), "--seed", "9"]);
    assert_eq!(std::fs::read(d.path().join("a.jem")).unwrap(), std::fs::read(d.path().join("b.jem")).unwrap());
    let a = ok(&["simulate", &p(&d, "a.jem")]);
    let b = ok(&["simulate", &p(&d, "a.jem")]);
    assert_eq!(a["results"], b["results"]);
}
