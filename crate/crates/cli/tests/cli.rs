use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbc"))
        .args(args)
        .output()
        .expect("spawn sbc")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sbc-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn no_arguments_is_a_usage_error() {
    assert_eq!(sbc(&[]).status.code(), Some(2));
    assert_eq!(sbc(&["allocate", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn allocate_writes_csv_and_manifest() {
    let dir = scratch("allocate");
    let o = sbc(&["allocate", "--variances", "1,0.5,0.25", "--out", s(&dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.join("allocation.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "D,P_kl,D_1,D_2,D_3,R_1,R_2,R_3,lambda_D,lambda_P,total_rate"
    );
    assert_eq!(lines.count(), 49);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "allocate");
    assert_eq!(manifest["settings"]["d-grid"], "0.1:2.5:0.05");
}

#[test]
fn region_default_grid_has_101_rows() {
    let dir = scratch("region");
    let o = sbc(&["region", "--out", s(&dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.join("region.csv")).unwrap();
    assert_eq!(text.lines().count(), 102);
}

#[test]
fn weaker_first_user_is_a_computation_error() {
    let dir = scratch("weak");
    let o = sbc(&["region", "--g1", "0.3", "--g2", "0.5", "--out", s(&dir)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("degraded"));
}

#[test]
fn config_values_override_flags() {
    let dir = scratch("override");
    let cfg = dir.join("run.toml");
    let out = dir.join("from-config");
    std::fs::write(
        &cfg,
        format!("seed = 11\nout = {:?}\n[allocate]\nvariances = [2.0]\nd-grid = \"0.5:1.0:0.5\"\n", s(&out)),
    )
    .unwrap();
    let o = sbc(&[
        "--config",
        s(&cfg),
        "--seed",
        "3",
        "--out",
        s(&dir.join("from-flag")),
        "allocate",
        "--variances",
        "1,1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!dir.join("from-flag").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["settings"]["variances"], serde_json::json!([2.0]));
    let csv = std::fs::read_to_string(out.join("allocation.csv")).unwrap();
    assert!(csv.starts_with("D,P_kl,D_1,R_1,"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = scratch("unknown");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[region]\npoints = 11\nwater-level = 3\n").unwrap();
    let o = sbc(&["--config", s(&cfg), "--out", s(&dir), "region"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("water-level"));

    std::fs::write(&cfg, "sed = 1\n").unwrap();
    let o = sbc(&["--config", s(&cfg), "--out", s(&dir), "region"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sed"));
}

#[test]
fn malformed_grid_is_a_config_error() {
    let dir = scratch("grid");
    let o = sbc(&["allocate", "--d-grid", "1:0.5", "--out", s(&dir)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let a = scratch("sim-a");
    let b = scratch("sim-b");
    for dir in [&a, &b] {
        let o = sbc(&["--seed", "5", "simulate", "--symbols", "40000", "--out", s(dir)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let x = std::fs::read(a.join("simulate.csv")).unwrap();
    let y = std::fs::read(b.join("simulate.csv")).unwrap();
    assert_eq!(x, y);
    assert_eq!(String::from_utf8(x).unwrap().lines().count(), 4);
}

#[test]
fn hard_cancellation_needs_bpsk() {
    let dir = scratch("sic");
    let o = sbc(&["simulate", "--sic", "hard", "--symbols", "1000", "--out", s(&dir)]);
    assert_eq!(o.status.code(), Some(2));
    let o = sbc(&[
        "simulate", "--sic", "hard", "--alphabet", "bpsk", "--symbols", "1000", "--out", s(&dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn trained(dir: &Path) -> PathBuf {
    let o = sbc(&[
        "--seed",
        "7",
        "--out",
        s(dir),
        "train",
        "--steps",
        "300",
        "--train-samples",
        "640",
        "--test-samples",
        "320",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["model.smae", "history.csv", "schema.json", "donor.txt"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    dir.join("model.smae")
}

#[test]
fn train_eval_and_sweep() {
    let dir = scratch("train");
    let model = trained(&dir);
    let history = std::fs::read_to_string(dir.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 301);

    let eval_dir = dir.join("eval");
    let o = sbc(&[
        "--seed", "7", "--out", s(&eval_dir), "eval", "--checkpoint", s(&model), "--test-samples", "320",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["swap_accuracy"].as_array().unwrap().len(), 3);
    assert_eq!(report["reconstruction_mse"].as_array().unwrap().len(), 5);

    let sweep_dir = dir.join("sweep");
    let spec = format!("plain={}", s(&model));
    let o = sbc(&[
        "--seed", "7", "--out", s(&sweep_dir), "psnr-sweep", "--model", &spec, "--test-samples", "320",
        "--step", "10",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(sweep_dir.join("psnr.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "snr_db,psnr_plain,psnr_digital");
    assert_eq!(lines.count(), 3);
}

#[test]
fn missing_checkpoint_fails() {
    let dir = scratch("missing");
    let o = sbc(&["--out", s(&dir), "eval", "--checkpoint", s(&dir.join("nope.smae"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn serve_and_receive_over_loopback() {
    let dir = scratch("loopback");
    let model = trained(&dir);
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let serve_dir = dir.join("serve");
    let server = Command::new(env!("CARGO_BIN_EXE_sbc"))
        .args([
            "--seed", "7", "--out", s(&serve_dir), "serve", "--bind", &addr, "--checkpoint", s(&model),
            "--schema", s(&dir.join("schema.json")), "--frames", "100",
        ])
        .spawn()
        .unwrap();
    let receivers: Vec<_> = [(0, "0b001"), (1, "0b110")]
        .into_iter()
        .map(|(user, interest)| {
            Command::new(env!("CARGO_BIN_EXE_sbc"))
                .args([
                    "--seed", "7", "--out", s(&dir.join(format!("recv{user}"))), "recv", "--connect", &addr,
                    "--user", &user.to_string(), "--interest", interest, "--donor",
                    s(&dir.join("donor.txt")), "--checkpoint", s(&model), "--truth-from-seed", "--frames",
                    "100",
                ])
                .spawn()
                .unwrap()
        })
        .collect();
    for mut r in receivers {
        assert!(r.wait().unwrap().success());
    }
    let status = server.wait_with_output().unwrap().status;
    assert!(status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(serve_dir.join("serve_metrics.json")).unwrap()).unwrap();
    let sessions = metrics["sessions"].as_array().unwrap();
    assert_eq!(sessions.len(), 2);
    let mut ratios: Vec<f64> = sessions.iter().map(|m| m["compression_ratio"].as_f64().unwrap()).collect();
    ratios.sort_by(f64::total_cmp);
    assert_eq!(ratios, vec![6.0, 12.0]);
    let r0: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("recv0/recv_user0.json")).unwrap()).unwrap();
    assert_eq!(r0["frames"], 100);
    assert_eq!(r0["crc_failures"], 0);
    assert!(r0["mean_psnr_db"].as_f64().unwrap().is_finite());
}
