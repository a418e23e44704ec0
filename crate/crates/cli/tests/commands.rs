//! End-to-end behaviour of the `premi` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use premi_core::data::read_dataset;
use premi_core::{validate_dataset, ResponseKind};

fn premi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_premi"))
        .args(args)
        .current_dir(cwd)
        .env("PREMI_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = premi(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and the machine-readable error line of a failing command.
fn fails(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = premi(args, cwd);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().last().unwrap_or_default().to_string();
    assert!(line.starts_with("error kind="), "{line}");
    (out.status.code().unwrap(), line)
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn write_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(
        &path,
        format!(
            "covariates = data/covariates.csv\noutcome = data/outcome.csv\nn_burn = 150\nn_sample = 150\nseed = 11\n{extra}"
        ),
    )
    .unwrap();
    path
}

fn sim1(dir: &Path) {
    ok(&["generate", "--study", "s1", "--seed", "4", "--out", "data"], dir);
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(&["generate", "--study", "s4", "--seed", "7", "--out", "a"], dir.path());
    let b = ok(&["generate", "--study", "s4", "--seed", "7", "--out", "b"], dir.path());
    assert_eq!(a, b);
    for f in ["covariates.csv", "outcome.csv", "truth.csv"] {
        assert_eq!(read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)), "{f}");
    }
    let c = ok(&["generate", "--study", "s4", "--seed", "8", "--out", "c"], dir.path());
    assert_ne!(a, c);
}

#[test]
fn generate_without_timepoints_omits_outcome() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--study", "s1", "--timepoints", "0", "--out", "d"], dir.path());
    let d = dir.path().join("d");
    assert!(d.join("covariates.csv").is_file());
    assert!(!d.join("outcome.csv").exists());
    let raw = read_dataset(&d.join("covariates.csv"), None, None).unwrap();
    assert_eq!(validate_dataset(raw, ResponseKind::Mvn).unwrap().n_individuals(), 100);
}

#[test]
fn generated_gp_study_validates() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--study", "s3", "--gradient", "-0.5", "--kind", "gp", "--out", "d"], dir.path());
    let d = dir.path().join("d");
    let raw = read_dataset(&d.join("covariates.csv"), Some(&d.join("outcome.csv")), None).unwrap();
    let ds = validate_dataset(raw, ResponseKind::Gp).unwrap();
    assert!(ds.has_outcome());
    let (ids, truth) = premi_core::data::read_labels(&d.join("truth.csv")).unwrap();
    assert_eq!(ids, ds.ids);
    assert!(truth.iter().any(|&l| l > 0));
}

#[test]
fn fit_is_deterministic_and_chains_differ() {
    let dir = tempfile::tempdir().unwrap();
    sim1(dir.path());
    let cfg = write_config(dir.path(), "run.conf", "n_chains = 2\n");
    ok(&["fit", cfg.to_str().unwrap(), "--out", "r1"], dir.path());
    ok(&["fit", cfg.to_str().unwrap(), "--out", "r2"], dir.path());
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    for f in ["trace.csv", "allocations.csv", "clusters.csv", "selection.csv", "acceptance.csv"] {
        let p = r1.join("chain1").join(f);
        if p.exists() {
            assert_eq!(read(&p), read(r2.join("chain1").join(f)), "{f}");
            assert_eq!(read(r1.join("chain2").join(f)), read(r2.join("chain2").join(f)), "{f}");
        }
    }
    assert_ne!(read(r1.join("chain1/trace.csv")), read(r1.join("chain2/trace.csv")));
    assert_ne!(read(r1.join("chain1/allocations.csv")), read(r1.join("chain2/allocations.csv")));

    let m1 = premi_cli::manifest::Manifest::read(&r1.join("manifest.txt")).unwrap();
    let m2 = premi_cli::manifest::Manifest::read(&r2.join("manifest.txt")).unwrap();
    assert_eq!(m1.seed, 11);
    assert_eq!(m1.n_chains, 2);
    assert_eq!(m1.outputs, m2.outputs);
    assert!(m1.inputs.contains_key("covariates") && m1.inputs.contains_key("outcome"));
    assert!(m1.outputs.contains_key("chain2/trace.csv"));
    assert_ne!(m1.config_hash, m2.config_hash, "output directory is part of the configuration");

    let trace = String::from_utf8(read(r1.join("chain1/trace.csv"))).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "iteration,alpha,n_clusters,n_nonempty,log_mpp");
    assert_eq!(trace.lines().count(), 151);
}

#[test]
fn seed_override_changes_chains() {
    let dir = tempfile::tempdir().unwrap();
    sim1(dir.path());
    let cfg = write_config(dir.path(), "run.conf", "");
    ok(&["fit", cfg.to_str().unwrap(), "--out", "a"], dir.path());
    ok(&["fit", cfg.to_str().unwrap(), "--out", "b", "--seed", "12"], dir.path());
    assert_ne!(read(dir.path().join("a/chain1/trace.csv")), read(dir.path().join("b/chain1/trace.csv")));
}

#[test]
fn postprocess_writes_summaries_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    sim1(dir.path());
    let cfg = write_config(dir.path(), "run.conf", "output = run\n");
    ok(&["fit", cfg.to_str().unwrap()], dir.path());
    let first = ok(&["postprocess", "run", "--truth", "data/truth.csv"], dir.path());
    let post = dir.path().join("run/chain1/post");
    let files = [
        "psm.csv",
        "best_partition.csv",
        "silhouette.csv",
        "cluster_estimates.csv",
        "cluster_profiles.csv",
        "selection_summary.csv",
        "report.txt",
    ];
    let snapshot: Vec<Vec<u8>> = files.iter().map(|f| read(post.join(f))).collect();
    let second = ok(&["postprocess", "run", "--truth", "data/truth.csv"], dir.path());
    assert_eq!(first, second);
    for (f, before) in files.iter().zip(&snapshot) {
        assert_eq!(&read(post.join(f)), before, "{f}");
    }
    let report = String::from_utf8(snapshot[6].clone()).unwrap();
    assert!(report.contains("pear = "), "{report}");

    ok(&["postprocess", "run", "--k-max", "2"], dir.path());
    let report = fs::read_to_string(post.join("report.txt")).unwrap();
    assert!(report.contains("n_clusters = 2\n"), "{report}");
    assert!(!report.contains("pear"));
    let labels = fs::read_to_string(post.join("best_partition.csv")).unwrap();
    assert_eq!(labels.lines().count(), 101);
    let out = ok(&["ari", "data/truth.csv", "run/chain1/post/best_partition.csv"], dir.path());
    let ari: f64 = out.trim().parse().unwrap();
    assert!((-1.0..=1.0).contains(&ari));
}

#[test]
fn diagnose_single_and_multiple_chains() {
    let dir = tempfile::tempdir().unwrap();
    sim1(dir.path());
    let cfg = write_config(dir.path(), "one.conf", "output = one\n");
    ok(&["fit", cfg.to_str().unwrap()], dir.path());
    ok(&["diagnose", "one", "--out", "d1"], dir.path());
    let d = fs::read_to_string(dir.path().join("d1/psm_distances.csv")).unwrap();
    assert_eq!(d.lines().count(), 1, "single chain has no pairs");

    let cfg = write_config(dir.path(), "three.conf", "output = three\nn_chains = 3\n");
    ok(&["fit", cfg.to_str().unwrap()], dir.path());
    let stdout = ok(&["diagnose", "three", "one/chain1", "--out", "d2"], dir.path());
    assert!(stdout.contains("n_chains = 4"), "{stdout}");
    let d = fs::read_to_string(dir.path().join("d2/psm_distances.csv")).unwrap();
    assert_eq!(d.lines().count(), 1 + 6);
    let traces = fs::read_to_string(dir.path().join("d2/traces.csv")).unwrap();
    assert_eq!(traces.lines().next().unwrap(), "iteration,chain,alpha,n_clusters,n_nonempty,log_mpp");
    assert_eq!(traces.lines().count(), 1 + 4 * 150);
    let summary = fs::read_to_string(dir.path().join("d2/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4 * 4);
}

#[test]
fn predict_blocks_and_empty_grid() {
    let dir = tempfile::tempdir().unwrap();
    sim1(dir.path());
    let cfg = write_config(dir.path(), "run.conf", "output = run\n");
    ok(&["fit", cfg.to_str().unwrap()], dir.path());
    let ones = vec!["1"; 10].join(",");
    let threes = vec!["3"; 10].join(",");
    fs::write(dir.path().join("profiles.csv"), format!("id,{}\nlow,{ones}\nhigh,{threes}\n", (1..=10).map(|q| format!("x{q}")).collect::<Vec<_>>().join(","))).unwrap();
    ok(&["predict", "run", "--profiles", "profiles.csv", "--out", "pred.csv"], dir.path());
    let text = fs::read_to_string(dir.path().join("pred.csv")).unwrap();
    let ids: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.len(), 10);
    assert!(ids[..5].iter().all(|&i| i == "low") && ids[5..].iter().all(|&i| i == "high"));
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!(v.iter().all(|x| x.is_finite()) && v[2] <= v[3], "{line}");
    }
    ok(&["predict", "run", "--profiles", "profiles.csv", "--out", "sub.csv", "--grid", "2,4"], dir.path());
    assert_eq!(fs::read_to_string(dir.path().join("sub.csv")).unwrap().lines().count(), 5);

    let (code, line) = fails(&["predict", "run", "--profiles", "profiles.csv", "--out", "e.csv", "--grid", ""], dir.path());
    assert_eq!(code, 6);
    assert!(line.contains("kind=grid"), "{line}");
}

#[test]
fn failures_exit_nonzero_with_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let (code, line) = fails(&["fit", "missing.conf"], dir.path());
    assert_eq!(code, 4);
    assert!(line.contains("kind=io"));

    fs::write(dir.path().join("bad.conf"), "covariates = x.csv\nn_burnin = 5\n").unwrap();
    let (code, line) = fails(&["fit", "bad.conf"], dir.path());
    assert_eq!(code, 3);
    assert!(line.contains("bad.conf:2"), "{line}");

    let (code, line) = fails(&["generate", "--study", "s9", "--out", "x"], dir.path());
    assert_eq!(code, 2);
    assert!(line.contains("kind=usage"));

    let (code, _) = fails(&["frobnicate"], dir.path());
    assert_eq!(code, 2);

    fs::write(dir.path().join("noout.conf"), "covariates = x.csv\n").unwrap();
    let (code, _) = fails(&["fit", "noout.conf"], dir.path());
    assert_eq!(code, 2);

    sim1(dir.path());
    fs::write(dir.path().join("gp.conf"), "covariates = data/covariates.csv\noutcome = data/outcome.csv\noutput = r\nniw_mu0 = 1,2\n").unwrap();
    let (code, line) = fails(&["fit", "gp.conf"], dir.path());
    assert_eq!(code, 3, "{line}");

    let (code, line) = fails(&["generate", "--study", "s3", "--gradient", "0.5", "--out", "x"], dir.path());
    assert_eq!(code, 3, "{line}");
}
