use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_tikflow");

fn tikflow(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL_BOX: &str = r#"
name = "small-box"
dim = 2
seed = 3
domain = { kind = "box", lo = [0.0, 0.0], hi = [1.0, 1.0] }

[operator]
kind = "forward-backward"
mu = 0.5
phi = { kind = "indicator", set = { kind = "box", lo = [0.0, 0.0], hi = [1.0, 1.0] } }
gradient = { kind = "quadratic-gradient", weights = [1.0, 1.0], center = [2.0, 0.5] }

[schedule]
eps = { kind = "power", eps0 = 1.0, beta = 0.5 }
anchor = { kind = "constant", y = [0.0, 0.0] }

[run]
x0 = [[0.0, 0.0], [1.0, 1.0]]
plain_horizon = 5.0
plain_grid = { kind = "uniform", count = 50 }
horizon = 5.0
grid = { kind = "uniform", count = 50 }
selection = false
lyapunov_from = 2.0
lyapunov_threshold = 0.05

[checks]
pairs = 200

[analytics]
fix_set = { kind = "ball", center = [1.0, 0.5], radius = 0.0 }
"#;

#[test]
fn list_names_every_builtin() {
    let out = tikflow(&["scenario", "list"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for name in ["line-select", "lasso-select", "moving-box", "contraction", "translation"] {
        assert!(text.contains(&format!("builtin:{name}")), "{text}");
    }
}

#[test]
fn passing_check_exits_zero_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_string_lossy().into_owned();
    let out = tikflow(&["check", "builtin:translation", "--out", &out_dir]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let report = fs::read_to_string(dir.path().join("translation/report.txt")).unwrap();
    assert!(report.contains("id=regpath-diverged status=pass"), "{report}");
    assert!(dir.path().join("translation/path.csv").exists());
}

#[test]
fn false_claim_exits_one_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_string_lossy().into_owned();
    let out = tikflow(&["check", "builtin:doubling", "--out", &out_dir]);
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    assert!(text.contains("status=fail"), "{text}");
    assert!(text.contains("witness_x="), "{text}");
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write_config(dir.path(), "bad.toml", &format!("{SMALL_BOX}\nbogus = 1\n"));
    let bad_mu = write_config(
        dir.path(),
        "mu.toml",
        &SMALL_BOX.replace("mu = 0.5", "mu = 3.0"),
    );
    for cfg in [bad_key.as_str(), bad_mu.as_str(), "builtin:no-such-scenario", "/no/such/file.toml"] {
        let out = tikflow(&["check", cfg, "--out", &dir.path().to_string_lossy()]);
        assert_eq!(code(&out), 2, "{cfg}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn integrator_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL_BOX.replace(
        "\nhorizon = 5.0\n",
        "\nhorizon = 5.0\nmethod = { kind = \"adaptive\", rtol = 1e-9, atol = 1e-12, initial_step = 1e-3, max_steps = 3 }\n",
    );
    let cfg = write_config(dir.path(), "steps.toml", &body);
    let out = tikflow(&["simulate", &cfg, "--out", &dir.path().to_string_lossy()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn runs_are_byte_identical_for_the_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "box.toml", SMALL_BOX);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = tikflow(&["scenario", "run", &cfg, "--out", &out_dir.to_string_lossy()]);
        assert_eq!(code(&out), 0, "{}", stdout(&out));
    }
    let mut names: Vec<_> = fs::read_dir(a.join("small-box"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for f in ["path.csv", "plain_0.csv", "tikhonov_1.csv", "psi.csv", "report.txt"] {
        assert!(names.iter().any(|n| n == f), "missing {f} in {names:?}");
    }
    for name in names {
        let x = fs::read(a.join("small-box").join(&name)).unwrap();
        let y = fs::read(b.join("small-box").join(&name)).unwrap();
        assert_eq!(x, y, "{name:?} differs between runs");
    }
}

#[test]
fn seed_override_changes_sampled_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "box.toml", SMALL_BOX);
    let run = |seed: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = tikflow(&["check", &cfg, "--seed", seed, "--out", &out_dir.to_string_lossy()]);
        assert_eq!(code(&out), 0);
        stdout(&out)
    };
    assert_ne!(run("1", "s1"), run("2", "s2"));
}

#[test]
fn path_csv_has_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_string_lossy().into_owned();
    let out = tikflow(&["regpath", "builtin:line-select", "--out", &out_dir]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let csv = fs::read_to_string(dir.path().join("line-select/path.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "k,epsilon,x1,x2,residual_norm,iterations,dist_to_anchor"
    );
}
