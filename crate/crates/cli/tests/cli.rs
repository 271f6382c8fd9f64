//! End-to-end runs of the `sirdid` binary.

use std::path::Path;
use std::process::{Command, Output};

fn sirdid(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sirdid"))
        .args(args)
        .current_dir(dir)
        .env_remove("SIRDID_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

/// `(e, band_lo, band_hi)` rows of an event-study file.
fn bands(path: &Path) -> Vec<(i64, f64, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "e,estimate,se,band_lo,band_hi,n_treated,n_untreated,n_dropped");
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[3].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect()
}

fn manifest_value(path: &Path, key: &str) -> Option<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(String::from))
}

#[test]
fn default_simulation_has_the_baseline_shape_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ok(&sirdid(&["simulate", "--seed", "7", "--out", "a.csv"], dir.path()));
    ok(&sirdid(&["simulate", "--seed", "7", "--out", "b.csv"], dir.path()));
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    let rows = String::from_utf8(a).unwrap().lines().count() - 1;
    assert_eq!(rows, 250 * 400);
    let manifest = dir.path().join("a.csv.manifest");
    assert_eq!(manifest_value(&manifest, "seed").as_deref(), Some("7"));
    assert_eq!(manifest_value(&manifest, "config.n_locations").as_deref(), Some("250"));
    assert!(manifest_value(&manifest, "wall_clock_seconds").is_some());
}

#[test]
fn seed_comes_from_the_environment_unless_given() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.cfg"), "n_locations = 20\nt_total = 160\n").unwrap();
    let run = |extra: &[&str], env: Option<&str>, out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sirdid"));
        cmd.args(["simulate", "--config", "s.cfg", "--out", out]).args(extra).current_dir(dir.path());
        match env {
            Some(v) => cmd.env("SIRDID_SEED", v),
            None => cmd.env_remove("SIRDID_SEED"),
        };
        ok(&cmd.output().unwrap());
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let from_env = run(&[], Some("11"), "env.csv");
    let from_flag = run(&["--seed", "11"], Some("99"), "flag.csv");
    let other = run(&[], None, "default.csv");
    assert_eq!(from_env, from_flag);
    assert_ne!(from_env, other);
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "n_locations = 30\nlambda_d = soon\n").unwrap();
    let out = sirdid(&["simulate", "--config", "bad.cfg", "--out", "p.csv"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lambda_d") && err.contains("line 2"), "{err}");
    assert!(!dir.path().join("p.csv").exists());
}

#[test]
fn montecarlo_smoke_run_writes_every_row() {
    let dir = tempfile::tempdir().unwrap();
    ok(&sirdid(&["montecarlo", "cases", "--reps", "2", "--horizon", "5", "--bootstrap-draws", "199", "--out", "mc"], dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("mc/report.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.contains("estimator") && header.contains("bias_se"), "{header}");
    // two estimators for each of the seven scenario rows
    assert_eq!(csv.lines().count() - 1, 14);
    assert!(dir.path().join("mc/report.txt").exists());
    assert_eq!(manifest_value(&dir.path().join("mc/manifest.txt"), "reps").as_deref(), Some("2"));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sirdid(&["montecarlo", "tables", "--reps", "2", "--out", "mc"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_panel_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = sirdid(&["estimate", "--input", "absent.csv", "--out", "est"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
}

fn simulate(dir: &Path, name: &str, config: &str) {
    std::fs::write(dir.join(format!("{name}.cfg")), config).unwrap();
    ok(&sirdid(&["simulate", "--config", &format!("{name}.cfg"), "--out", &format!("{name}.csv")], dir));
}

#[test]
fn null_panel_event_study_bands_cover_zero() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "null", "t_total = 190\nlambda_d = 60\nlambda_u = 60\nroot_seed = 3\n");
    ok(&sirdid(
        &["estimate", "--input", "null.csv", "--estimator", "dr-cases", "--degree", "2", "--horizon", "40", "--out", "est"],
        dir.path(),
    ));
    let rows = bands(&dir.path().join("est/event_study.csv"));
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|&(_, lo, hi)| lo <= 0.0 && 0.0 <= hi));
    for f in ["group_time.csv", "dropped.csv", "manifest.txt"] {
        assert!(dir.path().join("est").join(f).exists(), "{f}");
    }
}

#[test]
fn did_on_unequal_timing_shows_spurious_effects() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "early", "t_total = 200\nlambda_d = 40\nlambda_u = 80\nroot_seed = 4\n");
    ok(&sirdid(&["estimate", "--input", "early.csv", "--estimator", "did-cases", "--horizon", "50", "--out", "est"], dir.path()));
    let rows = bands(&dir.path().join("est/event_study.csv"));
    assert!(rows.iter().any(|&(_, lo, hi)| hi < 0.0 || lo > 0.0));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "p", "n_locations = 120\nt_total = 180\nadoption_times = 150, 160\nadoption_probs = 0.3, 0.3\n");
    for threads in ["1", "3"] {
        ok(&sirdid(
            &["--threads", threads, "estimate", "--input", "p.csv", "--degree", "1", "--horizon", "15", "--out", threads],
            dir.path(),
        ));
    }
    for f in ["event_study.csv", "group_time.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("1").join(f)).unwrap(),
            std::fs::read(dir.path().join("3").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn raw_data_ingests_and_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/synthetic_states.csv");
    let data = data.to_str().unwrap();
    ok(&sirdid(&["ingest", "--input", data, "--out", "panel.csv"], dir.path()));
    let text = std::fs::read_to_string(dir.path().join("panel.csv")).unwrap();
    assert!(text.lines().next().unwrap().ends_with("tests,region_northeast,region_south,region_west"));
    assert_eq!(text.lines().count() - 1, 48 * 44);

    ok(&sirdid(&["estimate", "--input", data, "--raw", "--degree", "1", "--horizon", "10", "--out", "est"], dir.path()));
    assert_eq!(bands(&dir.path().join("est/event_study.csv")).len(), 10);
    let dropped = std::fs::read_to_string(dir.path().join("est/dropped.csv")).unwrap();
    assert!(dropped.starts_with("group,location,estimand"));

    let script = sirdid(&["plot-script", "--input", "est/event_study.csv"], dir.path());
    ok(&script);
    let script = String::from_utf8(script.stdout).unwrap();
    assert!(script.contains("est/event_study.csv") && script.contains("band_lo"));
}
