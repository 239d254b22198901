//! File-based encode/decode/evaluate through the harness and the binary.

use std::path::Path;
use std::process::Command;

use cpri_compress::bitstream::load_records;
use cpri_compress::classical::compression_ratio;
use cpri_compress::harness::config::RunConfig;
use cpri_compress::harness::data::{gen_dataset, split_path, Prepared, Split};
use cpri_compress::harness::{cmd_decode, cmd_encode, cmd_evaluate, cmd_inspect_bundle, cmd_sweep, cmd_train, cmd_train_grid};
use cpri_compress::signal::dataset::FrameSet;

fn config(dir: &Path, scenario: &str) -> RunConfig {
    RunConfig::from_toml(&format!(
        r#"
output = "{out}"
[frame]
scenario = "{scenario}"
[dataset]
dir = "{data}"
train = 24
val = 4
test = 6
[scheme]
kind = "classical-scalar"
q_bits = 5
lloyd_iters = 30
[sweep]
schemes = ["classical-scalar"]
q_grid = [3, 4, 5]
seeds = [0]
"#,
        out = dir.join("out").display(),
        data = dir.join("data").display()
    ))
    .unwrap()
}

#[test]
fn file_path_equals_in_memory_path() {
    for scenario in ["downlink", "uplink"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), scenario);
        gen_dataset(&cfg).unwrap();
        let data = Prepared::load(&cfg).unwrap();
        let bundle = dir.path().join("sq.cprb");
        cmd_train(&cfg, &data, &bundle).unwrap();
        let test = split_path(&cfg.dataset.dir, Split::Test);
        let rec = dir.path().join("test.rec");
        let dec = dir.path().join("test.dec");
        assert_eq!(cmd_encode(&bundle, &test, &rec).unwrap(), 6);
        assert_eq!(cmd_decode(&bundle, &rec, &dec).unwrap(), 6);
        let mem = cmd_evaluate(&bundle, &test, None).unwrap();
        let file = cmd_evaluate(&bundle, &test, Some((&rec, &dec))).unwrap();
        assert_eq!(mem, file, "{scenario}");

        let p = cfg.pipeline().unwrap();
        let n = p.n_prime().unwrap();
        assert_eq!(mem.payload_bits, 6 * 2 * 5 * n);
        let n_t = n / p.scaling.n_s;
        assert_eq!(mem.cr, compression_ratio((2 * 5 * n) as f64, n, n_t, 8, 5, 8));

        let decoded = FrameSet::load(&dec).unwrap();
        let expect = if scenario == "downlink" { 512 + 64 } else { 576 };
        assert!(decoded.frames.iter().all(|f| f.len() == expect));
        assert_eq!(load_records(&rec).unwrap().len(), 6);
    }
}

#[test]
fn corrupted_records_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "downlink");
    gen_dataset(&cfg).unwrap();
    let data = Prepared::load(&cfg).unwrap();
    let bundle = dir.path().join("sq.cprb");
    cmd_train(&cfg, &data, &bundle).unwrap();
    let test = split_path(&cfg.dataset.dir, Split::Test);
    let rec = dir.path().join("test.rec");
    cmd_encode(&bundle, &test, &rec).unwrap();
    let mut bytes = std::fs::read(&rec).unwrap();
    bytes[4] ^= 0xFF;
    std::fs::write(&rec, &bytes).unwrap();
    assert!(cmd_decode(&bundle, &rec, &dir.path().join("x")).is_err());
}

#[test]
fn sweep_rows_are_reproducible_and_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "downlink");
    gen_dataset(&cfg).unwrap();
    let data = Prepared::load(&cfg).unwrap();
    let bundles = cmd_train_grid(&cfg, &data, false).unwrap();
    assert_eq!(bundles.len(), 3);
    let a = cmd_sweep(&cfg, &data.test, 1).unwrap();
    let b = cmd_sweep(&cfg, &data.test, 2).unwrap();
    assert_eq!(a.rows.len(), 3);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.bits_per_element, y.bits_per_element);
        assert!((x.evm_db - y.evm_db).abs() <= 1e-9);
        assert_eq!(x.config_digest, cfg.digest().unwrap());
    }
    assert!(a.checks.iter().all(|c| c.passed), "{:?}", a.checks);
    assert!(std::fs::read_to_string(&a.svg).unwrap().contains("<svg"));

    std::fs::remove_file(&bundles[1]).unwrap();
    let c = cmd_sweep(&cfg, &data.test, 1).unwrap();
    assert_eq!(c.rows.len(), 2);
}

#[test]
fn binary_runs_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "downlink");
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, cfg.to_toml().unwrap()).unwrap();
    let cpri = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_cpri"))
            .args(args)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let c = cfg_path.to_str().unwrap();
    let bundle = dir.path().join("m.cprb");
    let b = bundle.to_str().unwrap();
    let test = split_path(&cfg.dataset.dir, Split::Test);
    let t = test.to_str().unwrap();
    let rec = dir.path().join("r");
    let dec = dir.path().join("d");
    cpri(&["gen-dataset", "--config", c]);
    cpri(&["--deterministic", "train", "--config", c, "--out", b]);
    cpri(&["encode", "--bundle", b, "--frames", t, "--out", rec.to_str().unwrap()]);
    cpri(&["decode", "--bundle", b, "--records", rec.to_str().unwrap(), "--out", dec.to_str().unwrap()]);
    let mem: serde_json::Value = serde_json::from_str(&cpri(&["evaluate", "--bundle", b, "--frames", t])).unwrap();
    let file: serde_json::Value = serde_json::from_str(&cpri(&[
        "evaluate",
        "--bundle",
        b,
        "--frames",
        t,
        "--records",
        rec.to_str().unwrap(),
        "--decoded",
        dec.to_str().unwrap(),
    ]))
    .unwrap();
    assert_eq!(mem, file);
    let info: serde_json::Value = serde_json::from_str(&cpri(&["inspect-bundle", b])).unwrap();
    assert_eq!(info["kind"], "classical-scalar");
    assert_eq!(info["transform_parameters"], 0);
    let summary = cmd_inspect_bundle(&bundle).unwrap();
    assert_eq!(summary.total_parameters, 32);
    assert!(RunConfig::from_toml(&cpri(&["default-config"])).is_ok());

    let bad = Command::new(env!("CARGO_BIN_EXE_cpri"))
        .args(["gen-dataset", "--config", c])
        .env("CPRI_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            cpri_compress::harness::config::RunConfig::load(&path).unwrap();
            n += 1;
        }
    }
    assert!(n >= 2);
}
