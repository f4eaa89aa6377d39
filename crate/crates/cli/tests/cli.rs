use std::path::Path;
use std::process::{Command, Output};

fn cbo(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbo"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_outputs_to_the_default_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = cbo(
        &["run", "--preset", "fig1", "--runs", "2", "--seed", "5"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("fig1: "), "{}", stdout(&o));
    let out = dir.path().join("out/fig1");
    for f in [
        "fig1_seed5.csv",
        "fig1_seed6.csv",
        "objective.json",
        "summary.json",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "preset = \"custom\"\nscheme = \"gd\"\nruns = 1\n",
    )
    .unwrap();
    let o = cbo(
        &[
            "run",
            "--config",
            "exp.toml",
            "--out",
            "gd",
            "--set",
            "gd_steps=50",
            "--set",
            "objective=canyon2",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("gd/custom_seed0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 52);
    let objective = std::fs::read_to_string(dir.path().join("gd/objective.json")).unwrap();
    assert!(objective.contains("\"canyon2\""));
}

#[test]
fn decompose_reports_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let o = cbo(
        &["decompose", "--runs", "1", "--set", "n_steps=20"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("max reconstruction residual"));
    assert!(dir
        .path()
        .join("out/decompose/decompose_seed0.csv")
        .exists());
}

#[test]
fn invalid_configuration_exits_with_1_and_lists_every_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cbo(
        &[
            "run",
            "--preset",
            "fig1",
            "--set",
            "dt=0.5",
            "--set",
            "lambda=4",
            "--set",
            "n_particles=0",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("drift overshoot"), "{err}");
    assert!(err.contains("n_particles"), "{err}");
    assert!(!dir.path().join("out").exists());

    let o = cbo(&["scaling", "--axis", "dt"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = cbo(&["run", "--set", "nonsense"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let o = cbo(
        &[
            "run",
            "--preset",
            "fig2b",
            "--runs",
            "1",
            "--out",
            "blocker/sub",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn validate_checks_config_and_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = cbo(
        &["validate", "--objective", "canyon3", "--samples", "2000"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("configuration ok"));
    assert!(!stdout(&o).contains("FAIL"));

    let o = cbo(
        &[
            "validate",
            "--config-only",
            "--set",
            "tau=0.1",
            "--preset",
            "decompose",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn list_names_presets_and_objectives() {
    let dir = tempfile::tempdir().unwrap();
    let o = cbo(&["list"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("scaling-tau") && s.contains("rastrigin-3"));
}
