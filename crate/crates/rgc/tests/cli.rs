//! End-to-end tests of the `rgc` binary: exit codes, provenance headers,
//! determinism of the metrics files, and the sockets launch helper.

use std::path::PathBuf;
use std::process::Command;

fn rgc_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rgc"))
}

fn temp_path(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("rgc-cli-{}-{name}", std::process::id()));
    p
}

fn write_config(name: &str, text: &str) -> PathBuf {
    let path = temp_path(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn train_metrics_are_byte_identical_across_runs() {
    let config = write_config(
        "det.conf",
        "mode = train\nworld_size = 4\nratio = 0.01\nsteps = 25\n\
         blob_samples = 512\nblob_dim = 32\nhidden = 16\nseed = 0\n",
    );
    let out_a = temp_path("det-a.csv");
    let out_b = temp_path("det-b.csv");
    for out in [&out_a, &out_b] {
        let status = rgc_bin()
            .args([
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "same config + seed must give identical bytes");

    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# "), "provenance header missing");
    assert!(text.contains("# ratio = 0.01"));
    assert!(text.contains("step,loss_0,loss_1,loss_2,loss_3,accuracy,union_ratio,bytes_sent"));
    assert!(text.contains("# final_accuracy = "));
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 25, "header row plus one row per step");

    for p in [config, out_a, out_b] {
        let _ = std::fs::remove_file(p);
    }
}

#[test]
fn config_errors_exit_2() {
    // Unknown key.
    let config = write_config("bad-key.conf", "mode = train\nbananas = 7\n");
    let output = rgc_bin()
        .args(["--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("bananas"));
    let _ = std::fs::remove_file(config);

    // Invalid combination.
    let config = write_config(
        "bad-combo.conf",
        "mode = train\nselector = sampled-bs\nquantize = true\n",
    );
    let status = rgc_bin()
        .args(["--config", config.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let _ = std::fs::remove_file(config);

    // Unknown flag.
    let status = rgc_bin().arg("--frobnicate").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_3() {
    // Missing CSV dataset file surfaces as a runtime failure.
    let config = write_config(
        "bad-data.conf",
        "mode = train\ndataset = csv:/nonexistent/definitely-missing.csv\n",
    );
    let output = rgc_bin()
        .args(["--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let _ = std::fs::remove_file(config);
}

#[test]
fn cost_sweep_bandwidth_ratio_is_monotone() {
    let out = temp_path("sweep.csv");
    let config = write_config("sweep.conf", "mode = cost-sweep\np_min = 2\np_max = 1024\n");
    let status = rgc_bin()
        .args([
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut prev = -1.0f64;
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 6);
        let ratio: f64 = fields[5].parse().unwrap();
        assert!(ratio > prev, "bandwidth ratio not monotone: {line}");
        prev = ratio;
        rows += 1;
    }
    assert_eq!(rows, 10, "p in {{2..1024}} powers of two");
    for p in [config, out] {
        let _ = std::fs::remove_file(p);
    }
}

#[test]
fn collective_test_mode_reports_agreement() {
    let config = write_config(
        "ct.conf",
        "mode = collective-test\nworld_size = 4\nct_elements = 1024\n",
    );
    let output = rgc_bin()
        .args(["--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("all ranks agree"), "stdout: {stdout}");
    let _ = std::fs::remove_file(config);
}

#[test]
fn selection_bench_emits_table() {
    let config = write_config(
        "bench.conf",
        "mode = selection-bench\nbench_sizes = 4096,65536\nbench_reps = 2\n",
    );
    let out = temp_path("bench.csv");
    let status = rgc_bin()
        .args([
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("size,algorithm,total_ms,mean_selected"));
    for algo in ["exact", "trimmed", "threshold-bs", "sampled-bs"] {
        assert!(text.contains(algo), "missing {algo} rows");
    }
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    for p in [config, out] {
        let _ = std::fs::remove_file(p);
    }
}

#[test]
fn sockets_topology_spawns_local_ranks() {
    // Pick two free ports by binding and releasing; small race risk is
    // acceptable for a localhost test.
    let (a, b) = {
        let l1 = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let l2 = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        (l1.local_addr().unwrap(), l2.local_addr().unwrap())
    };
    let out = temp_path("sock.csv");
    let config = write_config(
        "sock.conf",
        &format!(
            "mode = train\nworld_size = 2\ntopology = sockets\nhosts = {a},{b}\n\
             steps = 10\nratio = 0.01\nblob_samples = 256\nblob_dim = 32\nhidden = 16\n\
             out = {}\n",
            out.display()
        ),
    );
    let output = rgc_bin()
        .args(["--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 10);
    for p in [config, out] {
        let _ = std::fs::remove_file(p);
    }
}
