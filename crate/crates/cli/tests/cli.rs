use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn semcom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semcom"))
        .args(args)
        .current_dir(dir)
        .env("SEMCOM_LOG", "warn")
        .env_remove("SEMCOM_OUTPUT_DIR")
        .output()
        .expect("spawn semcom")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = semcom(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn zero_epochs_writes_an_empty_but_valid_report() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["train", "--epochs", "0", "--output-dir", "r"]);
    let r = report(&tmp.path().join("r"));
    assert_eq!(r["command"], "train");
    assert_eq!(r["epochs"].as_array().unwrap().len(), 0);
    assert_eq!(r["summary"]["epochs_run"], 0);
    let csv = fs::read_to_string(tmp.path().join("r/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn noiseless_identity_link_has_infinite_psnr() {
    let tmp = tempfile::tempdir().unwrap();
    ok(
        tmp.path(),
        &["eval", "--identity", "--cr", "1", "--set", "channel.noiseless=true", "--output-dir", "e"],
    );
    let r = report(&tmp.path().join("e"));
    let rows = r["summary"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["psnr"], "inf");
    let csv = fs::read_to_string(tmp.path().join("e/eval.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "identity,1,inf,,inf,");
}

#[test]
fn bad_configuration_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["train", "--cr", "1.5"][..],
        &["train", "--set", "channel.no_such_key=1"],
        &["train", "--set", "loss.lambda=2"],
        &["train", "--config", "missing.toml"],
        &["eval"],
    ] {
        let out = semcom(tmp.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
    fs::write(tmp.path().join("broken.toml"), "[channel\ncr = ").unwrap();
    assert_eq!(semcom(tmp.path(), &["train", "-c", "broken.toml"]).status.code(), Some(2));
}

#[test]
fn pad_prints_key_value_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let toml = "[data]\nsynth = \"shifted_blobs\"\nn = 300\n[observed]\nsynth = \"shifted_blobs\"\nn = 300\noffset = 0.3\n[pad]\nn = 300\n";
    fs::write(tmp.path().join("pad.toml"), toml).unwrap();
    let stdout = ok(tmp.path(), &["pad", "-c", "pad.toml", "--output-dir", "p"]);
    let kv: std::collections::HashMap<&str, &str> = stdout.lines().filter_map(|l| l.split_once('=')).collect();
    for key in ["library", "observed", "n", "train_error", "epsilon", "d_a"] {
        assert!(kv.contains_key(key), "missing {key} in {stdout}");
    }
    let d_a: f64 = kv["d_a"].parse().unwrap();
    assert!((0.0..=2.0).contains(&d_a));
    assert!(d_a > 1.5, "offset domains should be far apart, got {d_a}");
}

#[test]
fn config_echo_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["train", "--epochs", "4", "--snr-db", "3", "--output-dir", "a"]);
    ok(tmp.path(), &["train", "-c", "a/config.toml", "--output-dir", "b"]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for f in ["metrics.csv", "encoder.bin", "decoder.bin"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(report(&a)["epochs"], report(&b)["epochs"]);
}

#[test]
fn separate_processes_over_tcp_match_in_process_training() {
    let tmp = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("transport.addr=\"127.0.0.1:{port}\"");
    let common = ["--epochs", "3", "--set", "transport.mode=\"tcp\"", "--set", addr.as_str()];
    let spawn = |role: &str, out: &str| {
        Command::new(env!("CARGO_BIN_EXE_semcom"))
            .args(["train", "--role", role, "--output-dir", out])
            .args(common)
            .current_dir(tmp.path())
            .env("SEMCOM_LOG", "warn")
            .spawn()
            .unwrap()
    };
    let mut rx = spawn("receiver", "rx");
    let mut tx = spawn("transmitter", "tx");
    assert!(tx.wait().unwrap().success());
    assert!(rx.wait().unwrap().success());

    ok(tmp.path(), &["train", "--epochs", "3", "--output-dir", "both"]);
    let p = |f: &str| fs::read(tmp.path().join(f)).unwrap();
    assert_eq!(p("rx/decoder.bin"), p("both/decoder.bin"));
    assert_eq!(p("tx/encoder.bin"), p("both/encoder.bin"));
    assert_eq!(report(&tmp.path().join("tx"))["summary"]["epochs_run"], 3);
}

#[test]
fn adaptation_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let toml = "[data]\nsynth = \"shifted_blobs\"\n[observed]\nsynth = \"shifted_blobs\"\noffset = 0.3\n[cgan]\nepochs = 5\n";
    fs::write(tmp.path().join("da.toml"), toml).unwrap();
    ok(tmp.path(), &["da-train", "-c", "da.toml", "--output-dir", "t"]);
    let csv = fs::read_to_string(tmp.path().join("t/cgan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    ok(
        tmp.path(),
        &["da-apply", "-c", "da.toml", "--bundle", "t/bundle.cgan", "--split", "test", "--output-dir", "a"],
    );
    let r = report(&tmp.path().join("a"));
    assert_eq!(r["summary"]["items"], 200);
    assert!(tmp.path().join("a/adapted-images.idx").exists());
    assert!(tmp.path().join("a/adapted-labels.idx").exists());

    let out = semcom(tmp.path(), &["da-apply", "-c", "da.toml", "--bundle", "da.toml", "--output-dir", "x"]);
    assert_eq!(out.status.code(), Some(2));
}
