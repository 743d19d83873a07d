use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rram_cli::commands::{metrics_table, reproduce_metrics, MetricsRun};
use rram_cli::{EXIT_INTEGRITY, EXIT_IO, EXIT_MODE, EXIT_OK, EXIT_USAGE};
use rram_core::vmm::WeightMatrix;
use rram_core::DistributionSpec;

fn rram(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rram")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn new_xbar(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let n = n.to_string();
    let o = rram(dir, &["xbar", "new", "--rows", &n, "--cols", &n, "--out", name, "--seed", &seed.to_string()]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    dir.join(name)
}

fn weights_file(dir: &Path, n: usize) -> PathBuf {
    let values = (0..n * n).map(|k| ((k * 7 + 3) % 4) as u32).collect();
    let w = WeightMatrix::new(n, n, 2, values).unwrap();
    let p = dir.join("w.csv");
    w.save(&p).unwrap();
    p
}

#[test]
fn demo_eq1_passes_and_repeats_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = rram(dir.path(), &["demo-eq1"]);
    assert_eq!(code(&a), EXIT_OK);
    let text = stdout(&a);
    assert!(text.contains("output     [5, 12, 3, 7]"), "{text}");
    assert!(text.contains("result     PASS"));
    assert_eq!(text, stdout(&rram(dir.path(), &["demo-eq1"])));
}

#[test]
fn noisy_demo_reports_errors_without_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = rram(dir.path(), &["demo-eq1", "--noise", "0.05", "--report-json", "r.json"]);
    assert_eq!(code(&o), EXIT_OK);
    let text = stdout(&o);
    assert!(!text.contains("PASS") && text.contains("errors"), "{text}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(json["status"], "unchecked");
}

#[test]
fn lock_then_unlock_restores_identical_weights_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let x = new_xbar(d, "a.xbar", 8, 11);
    let w = weights_file(d, 8);
    let before = std::fs::read(&x).unwrap();
    let o = rram(d, &["lock", "--weights", "w.csv", "--xbar", "a.xbar", "--out", "w.lock"]);
    assert_eq!(code(&o), EXIT_OK);
    let o = rram(d, &["unlock", "--bundle", "w.lock", "--xbar", "a.xbar", "--weights-out", "out.csv", "--xbar-out", "u.xbar"]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&w).unwrap(), std::fs::read(d.join("out.csv")).unwrap());
    assert_eq!(before, std::fs::read(&x).unwrap(), "input crossbar must not change");
    // the unlocked crossbar computes with the recovered weights
    let o = rram(d, &["vmm", "run", "--xbar", "u.xbar", "--input", "1,1,1,1,1,1,1,1", "--report-json", "v.json"]);
    assert_eq!(code(&o), EXIT_OK);
    assert!(stdout(&o).contains("integer mat-vec"));
}

#[test]
fn foreign_crossbar_gets_integrity_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    new_xbar(d, "a.xbar", 8, 1);
    let b = new_xbar(d, "b.xbar", 8, 2);
    weights_file(d, 8);
    let o = rram(d, &["lock", "--weights", "w.csv", "--xbar", "a.xbar", "--out", "w.lock", "--store", "crp.tsv", "--timestamp", "1"]);
    assert_eq!(code(&o), EXIT_OK);
    let before = std::fs::read(&b).unwrap();
    let o = rram(
        d,
        &["unlock", "--bundle", "w.lock", "--xbar", "b.xbar", "--in-place", "--store", "crp.tsv", "--device-id", "device-0", "--weights-out", "x.csv"],
    );
    assert_eq!(code(&o), EXIT_INTEGRITY);
    assert!(String::from_utf8_lossy(&o.stderr).contains("entropy pattern differs"));
    assert_eq!(before, std::fs::read(&b).unwrap());
    assert!(!d.join("x.csv").exists());
}

#[test]
fn malformed_bundle_gets_io_exit_code_and_leaves_crossbar() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let x = new_xbar(d, "a.xbar", 4, 1);
    weights_file(d, 4);
    assert_eq!(code(&rram(d, &["lock", "--weights", "w.csv", "--xbar", "a.xbar", "--out", "w.lock"])), EXIT_OK);
    let mut bytes = std::fs::read(d.join("w.lock")).unwrap();
    bytes.truncate(bytes.len() - 1);
    std::fs::write(d.join("bad.lock"), &bytes).unwrap();
    std::fs::write(d.join("junk.lock"), b"not a bundle").unwrap();
    let before = std::fs::read(&x).unwrap();
    for f in ["bad.lock", "junk.lock", "missing.lock"] {
        let o = rram(d, &["unlock", "--bundle", f, "--xbar", "a.xbar", "--in-place"]);
        assert_eq!(code(&o), EXIT_IO, "{f}");
    }
    assert_eq!(before, std::fs::read(&x).unwrap());
}

#[test]
fn wrong_mode_and_bad_arguments_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    new_xbar(d, "a.xbar", 4, 1);
    assert_eq!(code(&rram(d, &["puf", "eval", "--xbar", "a.xbar", "--random", "1"])), EXIT_MODE);
    assert_eq!(code(&rram(d, &["vmm", "run", "--xbar", "a.xbar", "--input", "1,1,1,1"])), EXIT_MODE);
    assert_eq!(code(&rram(d, &["vmm", "run", "--xbar", "a.xbar", "--input", "1,x"])), EXIT_USAGE);
    assert_eq!(code(&rram(d, &["demo-eq1", "--noise", "-1"])), EXIT_USAGE);
    assert_eq!(code(&rram(d, &["no-such-command"])), EXIT_USAGE);
    assert_eq!(code(&rram(d, &["xbar", "inspect", "--xbar", "nope.xbar"])), EXIT_IO);
}

#[test]
fn trng_output_depends_only_on_the_crossbar_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let x = new_xbar(d, "a.xbar", 8, 5);
    let before = std::fs::read(&x).unwrap();
    for out in ["r1.bin", "r2.bin"] {
        assert_eq!(code(&rram(d, &["trng", "gen", "--xbar", "a.xbar", "--bits", "2000", "--out", out])), EXIT_OK);
    }
    assert_eq!(std::fs::read(&x).unwrap(), before);
    let r1 = std::fs::read(d.join("r1.bin")).unwrap();
    assert_eq!(r1.len(), 250);
    assert_eq!(r1, std::fs::read(d.join("r2.bin")).unwrap());
    assert_eq!(std::fs::read(d.join("r1.bin.txt")).unwrap().len(), std::fs::read(d.join("r2.bin.txt")).unwrap().len());
    assert!(d.join("r1.bin.json").exists());

    // persisting the advanced stream makes the next batch different
    assert_eq!(code(&rram(d, &["trng", "gen", "--xbar", "a.xbar", "--bits", "2000", "--out", "r3.bin", "--in-place"])), EXIT_OK);
    assert_ne!(std::fs::read(&x).unwrap(), before);
    assert_eq!(code(&rram(d, &["trng", "gen", "--xbar", "a.xbar", "--bits", "2000", "--out", "r4.bin"])), EXIT_OK);
    assert_ne!(r1, std::fs::read(d.join("r4.bin")).unwrap());
}

#[test]
fn enroll_then_eval_reproduces_stored_responses() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    new_xbar(d, "a.xbar", 8, 9);
    let o = rram(d, &["puf", "enroll", "--xbar", "a.xbar", "--store", "crp.tsv", "--device-id", "A", "--xbar-out", "e.xbar", "--timestamp", "7"]);
    assert_eq!(code(&o), EXIT_OK);
    let o = rram(d, &["puf", "eval", "--xbar", "e.xbar", "--store", "crp.tsv", "--device-id", "A"]);
    assert_eq!(code(&o), EXIT_OK);
    assert!(stdout(&o).contains("enrolled bits matched 128 of 128"), "{}", stdout(&o));
    let store = std::fs::read_to_string(d.join("crp.tsv")).unwrap();
    assert_eq!(store.lines().count(), 17);
    assert!(store.lines().all(|l| l.ends_with("\t7")));
}

#[test]
fn minimal_metrics_run_is_valid_and_repeatable() {
    let spec = DistributionSpec::paper_2023();
    let run = MetricsRun { size: 2, rows: 16, cols: 16, challenges: 1, repeats: 2, seed: 0, noise: 0.0 };
    let a = reproduce_metrics(&spec, &run).unwrap();
    assert_eq!(a.reliability, 100.0);
    for v in [a.uniqueness, a.uniformity, a.bit_aliasing] {
        assert!((0.0..=100.0).contains(&v));
    }
    assert_eq!(metrics_table(&a), metrics_table(&reproduce_metrics(&spec, &run).unwrap()));
    assert!(reproduce_metrics(&spec, &MetricsRun { size: 1, ..run }).is_err());

    let dir = tempfile::tempdir().unwrap();
    let args = ["puf", "metrics", "--size", "3", "--challenges", "4", "--repeats", "2", "--rows", "8", "--cols", "8", "--seed", "4"];
    let first = stdout(&rram(dir.path(), &args));
    assert!(first.contains("target"));
    assert_eq!(first, stdout(&rram(dir.path(), &args)));
}
