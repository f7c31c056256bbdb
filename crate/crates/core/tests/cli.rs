use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pulseforge::experiment::files::{parse_summary, read_discrete_pulse, read_phase_pulse};
use pulseforge::experiment::ExperimentConfig;
use pulseforge::spin::fidelity;

const SMALL: &str = "\
# small grid for fast runs
tf_s = 2e-5
n_off = 6
n_realizations = 3
max_iters = 30
";

fn pulseforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pulseforge"))
        .args(args)
        .output()
        .expect("spawn pulseforge")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn run_ok(cfg: &Path, out: &Path, args: &[&str]) -> String {
    let mut full = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    full.extend_from_slice(args);
    let o = pulseforge(&full);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn summary(path: &Path) -> BTreeMap<String, String> {
    parse_summary(&std::fs::read_to_string(path).unwrap()).unwrap().into_iter().collect()
}

fn number(map: &BTreeMap<String, String>, key: &str) -> f64 {
    map[key].parse().unwrap()
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if !p.file_name().unwrap().to_string_lossy().starts_with("timing") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    for (text, line) in [("n_off = 4\nbogus = 1\n", 2), ("\n\ndt_s = fast\n", 3), ("m = 2\nm = 3\n", 2)] {
        let cfg = write_config(dir.path(), text);
        let o = pulseforge(&["--config", cfg.to_str().unwrap(), "continuous"]);
        assert_eq!(o.status.code(), Some(2));
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(&format!("line {line}")), "{err}");
    }
}

#[test]
fn missing_config_file_is_an_error() {
    let o = pulseforge(&["--config", "/nonexistent/pulseforge.cfg", "continuous"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_requires_m_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = pulseforge(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "compare"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn every_subcommand_runs_on_a_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let spec = ExperimentConfig::parse(SMALL).unwrap().ensemble().unwrap();

    run_ok(&cfg, &out, &["continuous"]);
    let s = summary(&out.join("continuous/summary.txt"));
    let (pulse, dt) = read_phase_pulse(&out.join("continuous/pulse.txt")).unwrap();
    assert_eq!(dt, spec.dt());
    assert_eq!(fidelity(&spec, &pulse).unwrap(), number(&s, "phi_final"));

    let stdout = run_ok(&cfg, &out, &["--m-list", "2,3", "discrete"]);
    assert_eq!(stdout.lines().count(), 2);
    for m in [2, 3] {
        let d = out.join(format!("discrete_M{m}_random"));
        let s = summary(&d.join("summary.txt"));
        let best = read_discrete_pulse(&d.join("best_pulse.txt")).unwrap();
        assert_eq!(best.m(), m);
        let phi = fidelity(&spec, &best.materialize()).unwrap();
        assert!((phi - number(&s, "best_phi")).abs() <= 1e-12);
        assert_eq!(std::fs::read_dir(d.join("pulses")).unwrap().count(), 3);
    }

    run_ok(&cfg, &out, &["--m", "2", "--init", "from_lloyd", "discrete"]);
    assert!(out.join("discrete_M2_from_lloyd/summary.txt").exists());

    run_ok(&cfg, &out, &["--m", "4", "lloyd"]);
    let s = summary(&out.join("lloyd_M4/summary.txt"));
    assert!(number(&s, "phi") <= 1.0);

    let stdout = run_ok(&cfg, &out, &["--m-list", "2,4", "compare"]);
    assert_eq!(stdout.lines().next(), Some("M,phi_discrete_grape,phi_lloyd,phi_continuous"));
    let csv = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let stdout = run_ok(&cfg, &out, &["oracle-check", "--instances", "5"]);
    assert!(stdout.contains("15 checks, 0 failed"), "{stdout}");
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, workers) in [(&a, "1"), (&b, "4")] {
        run_ok(&cfg, out, &["--workers", workers, "continuous"]);
        run_ok(&cfg, out, &["--workers", workers, "--m", "3", "discrete"]);
        run_ok(&cfg, out, &["--workers", workers, "--m", "3", "lloyd"]);
    }
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert!(sa.len() > 5);
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{} differs", k.display());
    }
}

#[test]
fn single_realization_statistics_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}\n"));
    let out = dir.path().join("out");
    run_ok(&cfg, &out, &["--realizations", "1", "--m", "2", "discrete"]);
    let s = summary(&out.join("discrete_M2_random/summary.txt"));
    assert_eq!(s["mean_phi"], s["max_phi"]);
    assert_eq!(s["best_phi"], s["min_phi"]);
    assert_eq!(number(&s, "iqr_phi"), 0.0);
}

#[test]
fn single_offset_is_inverted() {
    let dir = tempfile::tempdir().unwrap();
    // a π rotation at ω0/2π = 10 kHz needs 50 µs
    let cfg = write_config(dir.path(), "tf_s = 1e-4\nn_off = 1\nmax_iters = 500\n");
    let out = dir.path().join("out");
    run_ok(&cfg, &out, &["continuous"]);
    let s = summary(&out.join("continuous/summary.txt"));
    assert!(number(&s, "phi_final") >= 1.0 - 1e-6);
}

#[test]
fn full_resolution_lloyd_reproduces_the_continuous_pulse() {
    let dir = tempfile::tempdir().unwrap();
    // 100 slices, long enough to invert so the optimized phases spread out
    let cfg = write_config(dir.path(), "tf_s = 5e-5\nn_off = 6\nmax_iters = 100\n");
    let out = dir.path().join("out");
    run_ok(&cfg, &out, &["continuous"]);
    let stdout = run_ok(&cfg, &out, &["--m", "100", "lloyd"]);
    let s = summary(&out.join("lloyd_M100/summary.txt"));
    assert_eq!(s["phi"], s["phi_continuous"], "{stdout}");
    assert_eq!(number(&s, "distortion"), 0.0);
}
