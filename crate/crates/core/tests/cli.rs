use std::path::Path;
use std::process::{Command, Output};

fn mmfs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmfs"))
        .args(args)
        .env_remove("MMFS_THREADS")
        .output()
        .expect("spawn mmfs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn synth(dir: &Path, seed: u64) {
    ok(&mmfs(&[
        "synth",
        "--task",
        "binary",
        "--seed",
        &seed.to_string(),
        "--view-dim",
        "20",
        "--out",
        dir.to_str().unwrap(),
    ]));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = walk(dir)
        .into_iter()
        .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(walk(&p));
        } else {
            v.push(p);
        }
    }
    v
}

/// A manifest-backed run config with a small search budget.
fn write_config(dir: &Path, data: &Path, out: &str) -> std::path::PathBuf {
    let cfg = dir.join(format!("{out}.toml"));
    std::fs::write(
        &cfg,
        format!(
            r#"preset = "desk"
seed = 3
out_dir = "{out}"

[dataset]
kind = "manifest"
train = "{}"
test = "{}"

[search]
ivfs = {{ pop = 20, gen = 15 }}
bvfs = {{ pop = 20, gen = 15 }}
"#,
            data.join("rep0/train.toml").display(),
            data.join("rep0/test.toml").display()
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let t = tempfile::tempdir().unwrap();
    synth(&t.path().join("a"), 5);
    synth(&t.path().join("b"), 5);
    synth(&t.path().join("c"), 6);
    let (a, b, c) = (files(&t.path().join("a")), files(&t.path().join("b")), files(&t.path().join("c")));
    assert!(a.iter().any(|(n, _)| n.ends_with("train_view1.csv")), "{:?}", a.iter().map(|x| &x.0).collect::<Vec<_>>());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn run_then_eval_reproduces_test_metrics() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, 1);
    let cfg = write_config(t.path(), &data, "out");
    ok(&mmfs(&["run", "--config", cfg.to_str().unwrap(), "--threads", "1"]));
    let out = t.path().join("out");
    for f in ["mask.txt", "report.txt", "trajectory.csv", "metadata.toml", "test_report.txt", "test_report.csv", "table4.csv", "summary.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let meta = std::fs::read_to_string(out.join("metadata.toml")).unwrap();
    assert!(meta.contains("config_hash = \"") && meta.contains("[config.search]"), "{meta}");
    let table = std::fs::read_to_string(out.join("table4.csv")).unwrap();
    assert!(table.starts_with("experiment,accuracy\nExperiment 1,"), "{table}");

    let printed = ok(&mmfs(&[
        "eval",
        "--mask",
        out.join("mask.txt").to_str().unwrap(),
        "--train",
        data.join("rep0/train.toml").to_str().unwrap(),
        "--test",
        data.join("rep0/test.toml").to_str().unwrap(),
    ]));
    assert_eq!(printed, std::fs::read_to_string(out.join("test_report.txt")).unwrap());
}

#[test]
fn same_seed_runs_are_identical() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, 2);
    let mut reports = Vec::new();
    for name in ["r1", "r2"] {
        let cfg = write_config(t.path(), &data, name);
        ok(&mmfs(&["run", "--config", cfg.to_str().unwrap()]));
        let dir = t.path().join(name);
        let report: String = std::fs::read_to_string(dir.join("report.txt"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("time_"))
            .collect::<Vec<_>>()
            .join("\n");
        reports.push((
            std::fs::read(dir.join("mask.txt")).unwrap(),
            report,
            std::fs::read(dir.join("trajectory.csv")).unwrap(),
        ));
    }
    assert!(reports[0] == reports[1], "same-seed runs differ");
}

#[test]
fn exit_codes_follow_error_kind() {
    let t = tempfile::tempdir().unwrap();
    let bad = t.path().join("bad.toml");
    std::fs::write(&bad, "[dataset]\nkind = \"synthetic\"\ntask = \"binary\"\n[search]\nmigration_fraction = 3.0\n").unwrap();
    let out = mmfs(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("migration_fraction"));

    let missing = t.path().join("missing.toml");
    std::fs::write(&missing, "[dataset]\nkind = \"manifest\"\ntrain = \"nowhere.toml\"\n").unwrap();
    let out = mmfs(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.toml"));

    // An empty mask cannot train a classifier.
    let data = t.path().join("data");
    synth(&data, 0);
    let empty = t.path().join("empty.mask");
    std::fs::write(&empty, "").unwrap();
    let out = mmfs(&[
        "eval",
        "--mask",
        empty.to_str().unwrap(),
        "--train",
        data.join("rep0/train.toml").to_str().unwrap(),
        "--test",
        data.join("rep0/test.toml").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no features"));
}

#[test]
fn bayes_prints_estimate() {
    let out = ok(&mmfs(&["bayes", "--task", "binary", "--views", "1,2", "--samples", "50000", "--seed", "1"]));
    let value: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("bayes_error = "))
        .expect("bayes_error line")
        .parse()
        .unwrap();
    assert!((value - 0.023).abs() < 0.01, "{out}");
    assert!(out.contains("std_error = ") && out.contains("n_samples = 50000"));
}
