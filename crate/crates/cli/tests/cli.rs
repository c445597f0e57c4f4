use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbc")).args(args).output().expect("bbc runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

/// Runs a short honest scenario into `<dir>/run` and returns that directory.
fn small_run(dir: &TempDir) -> PathBuf {
    let cfg = write_config(dir, "small.toml", "seed = 9\nrounds = 12\n");
    let out = dir.path().join("run");
    let r = bbc(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    out
}

#[test]
fn every_bundled_scenario_runs_validates_and_audits() {
    let dir = TempDir::new().unwrap();
    let mut names: Vec<String> = fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios"))
        .unwrap()
        .map(|e| e.unwrap().path().file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert!(names.len() >= 7);
    for name in &names {
        let out = dir.path().join(name);
        let r = bbc(&["run", "--config", s(&scenario(name)), "--out", s(&out)]);
        assert_eq!(code(&r), 0, "{name}: {}", stderr(&r));
        assert!(stdout(&r).contains(&format!("run {name}:")));

        let chain = out.join("chain.txt");
        let r = bbc(&["validate", s(&chain)]);
        assert_eq!(code(&r), 0, "{name}: {}", stderr(&r));
        assert!(stdout(&r).starts_with("ok: "));

        let r = bbc(&["audit", s(&chain)]);
        assert_eq!(code(&r), 0, "{name}: {}", stderr(&r));
        assert!(stdout(&r).contains("match"), "{name}: audit did not read the snapshot");

        for node in fs::read_dir(out.join("chains")).unwrap() {
            let node = node.unwrap().path();
            assert_eq!(code(&bbc(&["validate", s(&node)])), 0, "{name}: {}", node.display());
        }
    }
}

#[test]
fn batch_runs_into_per_config_directories() {
    let dir = TempDir::new().unwrap();
    let a = write_config(&dir, "alpha.toml", "seed = 1\nrounds = 5\n");
    let b = write_config(&dir, "beta.toml", "seed = 2\nrounds = 5\n");
    let out = dir.path().join("batch");
    let r = bbc(&["run", "--config", s(&a), "--config", s(&b), "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(out.join("alpha/chain.txt").is_file());
    assert!(out.join("beta/chain.txt").is_file());
}

#[test]
fn batch_reports_the_worst_status() {
    let dir = TempDir::new().unwrap();
    let good = write_config(&dir, "good.toml", "rounds = 3\n");
    let bad = write_config(&dir, "bad.toml", "rounds = 3\nlatency_min = 5\nlatency_max = 2\n");
    let out = dir.path().join("batch");
    let r = bbc(&["run", "--config", s(&good), "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("latency"), "{}", stderr(&r));
    assert!(out.join("good/chain.txt").is_file());
}

#[test]
fn misspelled_key_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "typo.toml", "seed = 1\nradio_rnage = 100.0\n");
    let r = bbc(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("radio_rnage"), "{}", stderr(&r));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn invalid_values_name_the_key() {
    let dir = TempDir::new().unwrap();
    for (body, key) in [
        ("radio_range = -1.0\n", "radio_range"),
        ("n_vehicles = -3\n", "n_vehicles"),
        ("match_threshold = 1.5\n", "match_threshold"),
        ("adversary_mode = \"bribe\"\n", "adversary_mode"),
        ("drop_probability = 1.0\n", "drop_probability"),
    ] {
        let cfg = write_config(&dir, "bad.toml", body);
        let r = bbc(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
        assert_eq!(code(&r), 1, "{body}");
        assert!(stderr(&r).contains(key), "{body}: {}", stderr(&r));
    }
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(code(&bbc(&[])), 1);
    assert_eq!(code(&bbc(&["frobnicate"])), 1);
    assert_eq!(code(&bbc(&["run"])), 1);
    assert_eq!(code(&bbc(&["run", "--config", "/nonexistent/x.toml"])), 1);
    assert_eq!(code(&bbc(&["--help"])), 0);
    assert_eq!(code(&bbc(&["validate", "--help"])), 0);
}

#[test]
fn empty_chain_store_has_no_genesis() {
    let dir = TempDir::new().unwrap();
    let out = small_run(&dir);
    let chain = out.join("chain.txt");
    fs::write(&chain, "").unwrap();
    let r = bbc(&["validate", s(&chain)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("genesis"), "{}", stderr(&r));
}

#[test]
fn tampered_chain_reports_the_height() {
    let dir = TempDir::new().unwrap();
    let out = small_run(&dir);
    let chain = out.join("chain.txt");
    let text = fs::read_to_string(&chain).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // move block 4 one second later without resealing it
    lines[4] = lines[4].replacen("timestamp=4 ", "timestamp=5 ", 1);
    assert_ne!(lines[4], text.lines().nth(4).unwrap());
    fs::write(&chain, lines.join("\n") + "\n").unwrap();
    let r = bbc(&["validate", s(&chain)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("height 4"), "{}", stderr(&r));
}

#[test]
fn missing_registry_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = small_run(&dir);
    let lone = dir.path().join("lone.txt");
    fs::copy(out.join("chain.txt"), &lone).unwrap();
    assert_eq!(code(&bbc(&["validate", s(&lone)])), 1);
    let r = bbc(&["validate", s(&lone), "--registry", s(&out.join("registry.txt"))]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
}

#[test]
fn edited_credit_snapshot_fails_the_audit() {
    let dir = TempDir::new().unwrap();
    let out = small_run(&dir);
    let metrics = out.join("metrics.txt");
    let text = fs::read_to_string(&metrics).unwrap();
    let line = text.lines().find(|l| l.starts_with("credit.")).unwrap().to_string();
    let (key, value) = line.split_once('=').unwrap();
    let bumped = format!("{key}={}", value.parse::<u64>().unwrap() + 1);
    fs::write(&metrics, text.replace(&line, &bumped)).unwrap();

    let r = bbc(&["audit", s(&out.join("chain.txt"))]);
    assert_eq!(code(&r), 3);
    assert!(stderr(&r).contains("mismatch"), "{}", stderr(&r));
    assert!(stdout(&r).is_empty());
}

#[test]
fn audit_prints_events_and_table() {
    let dir = TempDir::new().unwrap();
    let out = small_run(&dir);
    let r = bbc(&["audit", s(&out.join("chain.txt")), "--metrics", s(&out.join("metrics.txt"))]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = stdout(&r);
    let rewards = text.lines().filter(|l| l.contains("kind=LeaderReward")).count();
    let enrolls = text.lines().filter(|l| l.contains("kind=Enroll")).count();
    assert_eq!((enrolls, rewards), (12, 12));
    assert_eq!(text.lines().filter(|l| l.starts_with("credit ")).count(), 12);
}

#[test]
fn enroll_is_deterministic_and_seed_dependent() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&bbc(&["enroll", "--seed", "1", "--size", "0"])), 1);

    let a = bbc(&["enroll", "--seed", "1", "--size", "4"]);
    let b = bbc(&["enroll", "--seed", "1", "--size", "4"]);
    let c = bbc(&["enroll", "--seed", "2", "--size", "4"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);

    let ids = |o: &Output| -> Vec<String> {
        stdout(o).lines().skip(1).map(|l| l.split(' ').next().unwrap().to_string()).collect()
    };
    let (ia, ic) = (ids(&a), ids(&c));
    assert_eq!(ia.len(), 4, "{}", stdout(&a));
    assert!(ia.iter().all(|id| !ic.contains(id)));

    let path = dir.path().join("nested/reg.txt");
    let r = bbc(&["enroll", "--seed", "1", "--size", "4", "--registry", s(&path)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(fs::read(&path).unwrap(), a.stdout);
}

#[test]
fn run_accepts_only_the_matching_registry() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "r.toml", "seed = 5\nrounds = 4\nn_vehicles = 4\nn_infra = 1\nfeature_dim = 16\n");
    let good = dir.path().join("good.txt");
    let bad = dir.path().join("bad.txt");
    assert_eq!(code(&bbc(&["enroll", "--seed", "5", "--size", "5", "--dim", "16", "--registry", s(&good)])), 0);
    assert_eq!(code(&bbc(&["enroll", "--seed", "6", "--size", "5", "--dim", "16", "--registry", s(&bad)])), 0);

    let out = dir.path().join("o");
    let r = bbc(&["run", "--config", s(&cfg), "--out", s(&out), "--registry", s(&good)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(fs::read(out.join("registry.txt")).unwrap(), fs::read(&good).unwrap());

    let r = bbc(&["run", "--config", s(&cfg), "--out", s(&dir.path().join("o2")), "--registry", s(&bad)]);
    assert_eq!(code(&r), 1);
    assert!(stderr(&r).contains("does not match"), "{}", stderr(&r));
}

#[test]
fn golden_comparison() {
    let dir = TempDir::new().unwrap();
    let golden = small_run(&dir);
    let cfg = dir.path().join("small.toml");
    let out = dir.path().join("again");

    let r = bbc(&["run", "--config", s(&cfg), "--out", s(&out), "--golden", s(&golden)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert!(stdout(&r).contains("identical"));
    let r = bbc(&["run", "--config", s(&cfg), "--out", s(&out), "--golden", s(&golden.join("run.log"))]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let metrics = golden.join("metrics.txt");
    let text = fs::read_to_string(&metrics).unwrap();
    fs::write(&metrics, text.replacen("rounds=12", "rounds=13", 1)).unwrap();
    let r = bbc(&["run", "--config", s(&cfg), "--out", s(&out), "--golden", s(&golden)]);
    assert_eq!(code(&r), 3);
    assert!(stderr(&r).contains("metrics.txt"), "{}", stderr(&r));
}

#[test]
fn repeated_runs_write_identical_trees() {
    let dir = TempDir::new().unwrap();
    let cfg = scenario("inflate_claim");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&bbc(&["run", "--config", s(&cfg), "--out", s(&a)])), 0);
    assert_eq!(code(&bbc(&["run", "--config", s(&cfg), "--out", s(&b)])), 0);
    let mut files = vec![PathBuf::from("chain.txt"), PathBuf::from("metrics.txt"), PathBuf::from("run.log")];
    for e in fs::read_dir(a.join("chains")).unwrap() {
        files.push(Path::new("chains").join(e.unwrap().file_name()));
    }
    for f in files {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{}", f.display());
    }
}
