// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

use kfspec_cli::report::Report;
use kfspec_cli::writers::{read_csv, BetaRow, CountingRow, PressureRow};
use kfspec_core::krein::{fit_counting, FitWindow};

const SMALL_CANTOR: &str = r#"
name = "small-cantor"
[ifs]
maps = [{ r = "1/3", b = 0 }, { r = "1/3", b = "2/3" }]
[potential]
probabilities = ["1/2", "1/2"]
[analysis.lq]
n_max = 9
[analysis.pressure]
level = 4
[analysis.counting]
resolution = "3^-8"
grid_points = 120
[analysis.bracketing]
cuts = [[0.5]]
"#;

fn kfspec(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfspec"))
        .current_dir(dir)
        .args(args)
        .envs(envs.iter().copied())
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn malformed_probabilities_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        &SMALL_CANTOR.replace(r#"["1/2", "1/2"]"#, "[0.5, 0.4]"),
    );
    let out = kfspec(dir.path(), &["run", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("potential.probabilities"), "{err}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = kfspec(dir.path(), &["run", "--config", "missing.toml"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = write_config(dir.path(), "typo.toml", &SMALL_CANTOR.replace("n_max", "nmax"));
    let out = kfspec(dir.path(), &["lq", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = kfspec(dir.path(), &["lq", "--config", &cfg], &[("KFSPEC_THREADS", "zero")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn budget_exhaustion_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_CANTOR);
    let out = kfspec(dir.path(), &["eigen", "--config", &cfg, "--budget", "50"], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("try resolution"));
}

#[test]
fn reports_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_CANTOR);
    let a = kfspec(dir.path(), &["run", "--config", &cfg, "--out", "a"], &[]);
    let b = kfspec(dir.path(), &["run", "--config", &cfg, "--out", "b"], &[("KFSPEC_THREADS", "1")]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    for f in ["report.json", "beta.csv", "pressure.csv", "counting.csv", "eigenvalues.csv"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn curves_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_CANTOR);
    let out = kfspec(dir.path(), &["run", "--config", &cfg, "--out", "o"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let o = dir.path().join("o");
    let report: Report = serde_json::from_slice(&std::fs::read(o.join("report.json")).unwrap()).unwrap();

    let counts: Vec<CountingRow> = read_csv(&o.join("counting.csv")).unwrap();
    let pencil = report.pencil.as_ref().unwrap();
    let c = report.counting.as_ref().unwrap();
    let refit = fit_counting(
        counts.iter().map(|r| (r.x, r.count)).collect(),
        pencil.atoms,
        FitWindow {
            min_count: c.min_count,
            max_fraction: c.max_fraction,
        },
    )
    .unwrap();
    assert_eq!(refit.slope().to_bits(), c.slope.value.to_bits());
    assert_eq!(refit.fit.intercept.to_bits(), c.intercept.to_bits());

    let beta: Vec<BetaRow> = read_csv(&o.join("beta.csv")).unwrap();
    assert_eq!(beta.len(), 6 * 201);
    for level in 4..=9 {
        let at_one = beta.iter().find(|r| r.level == level && r.q == 1.0).unwrap();
        assert!(at_one.beta.abs() < 1e-8);
    }
    let pressure: Vec<PressureRow> = read_csv(&o.join("pressure.csv")).unwrap();
    assert!(pressure.windows(2).all(|w| w[1].p_upper < w[0].p_upper));

    let text = std::fs::read_to_string(o.join("counting.csv")).unwrap();
    assert!(text.starts_with("x,count\n"));
    let text = std::fs::read_to_string(o.join("pressure.csv")).unwrap();
    assert!(text.starts_with("level,t,p_lower,p_upper\n"));
}

#[test]
fn subcommands_write_their_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL_CANTOR);
    let out = kfspec(dir.path(), &["pressure", "--config", &cfg, "--out", "p", "--level", "3"], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("p/pressure.csv").exists());
    assert!(!dir.path().join("p/beta.csv").exists());
    let out = kfspec(dir.path(), &["tau", "--config", &cfg, "--out", "t"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("similarity root"));
}
