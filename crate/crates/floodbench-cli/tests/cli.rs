//! End-to-end checks of the command-line surface: reruns with identical
//! settings must print identical fingerprints and produce identical
//! artifacts, and growing a dataset event by event must merge manifests.

use std::path::Path;
use std::process::Command;

fn floodbench(args: &[&str]) -> (String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_floodbench"))
        .args(args)
        .env_remove("FLOODBENCH_RESULTS")
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(
        out.status.success(),
        "floodbench {args:?} failed\nstdout:\n{stdout}\nstderr:\n{stderr}"
    );
    (stdout, stderr)
}

fn fingerprint_line(stdout: &str) -> String {
    stdout
        .lines()
        .find(|l| l.starts_with("run fingerprint:"))
        .expect("fingerprint line printed")
        .to_string()
}

#[test]
fn experiment_list_names_every_preset() {
    let (stdout, _) = floodbench(&["experiment", "--list"]);
    for name in [
        "short-events",
        "long-events",
        "cross-catchment",
        "short-events-desk",
        "long-events-desk",
        "cross-catchment-desk",
    ] {
        assert!(stdout.contains(name), "--list is missing {name}:\n{stdout}");
    }
}

#[test]
fn simulate_rerun_is_reproducible_and_manifests_merge() {
    let dir = tempfile::tempdir().unwrap();
    let root_a = dir.path().join("a");
    let root_b = dir.path().join("b");
    let simulate = |root: &Path, event: &str| {
        let root = root.to_str().unwrap();
        let (stdout, _) = floodbench(&[
            "simulate",
            "--dem",
            "synthetic-709",
            "--rows",
            "16",
            "--cols",
            "16",
            "--frames",
            "5",
            "--events",
            event,
            "--dataset",
            "tiny",
            "--out",
            root,
        ]);
        fingerprint_line(&stdout)
    };

    // Same settings, different output roots: identical fingerprints and
    // identical datasets.
    let fp_a = simulate(&root_a, "tr2_1");
    let fp_b = simulate(&root_b, "tr2_1");
    assert_eq!(fp_a, fp_b, "rerun fingerprint changed");
    let manifest_a = std::fs::read(root_a.join("tiny/manifest.json")).unwrap();
    let manifest_b = std::fs::read(root_b.join("tiny/manifest.json")).unwrap();
    assert_eq!(manifest_a, manifest_b, "rerun produced a different manifest");
    let frame_a = std::fs::read(root_a.join("tiny/tr2_1/wd_t3.rst")).unwrap();
    let frame_b = std::fs::read(root_b.join("tiny/tr2_1/wd_t3.rst")).unwrap();
    assert_eq!(frame_a, frame_b, "rerun produced different frames");

    // A second event simulated into the same dataset merges into the
    // manifest instead of replacing it.
    let fp_second = simulate(&root_a, "tr5_2");
    assert_ne!(fp_a, fp_second, "different settings share a fingerprint");
    let merged: serde_json::Value =
        serde_json::from_slice(&std::fs::read(root_a.join("tiny/manifest.json")).unwrap()).unwrap();
    let events = merged["events"].as_object().expect("events table");
    assert!(events.contains_key("tr2_1"), "merge dropped the first event");
    assert!(events.contains_key("tr5_2"), "merge missed the new event");
}
