use std::path::Path;
use std::process::{Command, Output};

use spinmotion::output::{Table, COLUMNS};
use spinmotion::parse_config;

fn spinmotion(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spinmotion"));
    cmd.args(args).env_remove("SPINMOTION_OUT_DIR").env("RUST_LOG", "warn");
    if let Some(dir) = out {
        cmd.arg("--out-dir").arg(dir);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn classical_run_writes_csv_and_parseable_echo() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinmotion(&["classical", "-j", "0.5,2", "--t-final-periods", "1", "--svg"], Some(dir.path()));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let echo = std::fs::read_to_string(dir.path().join("resolved_config.txt")).unwrap();
    let cfg = parse_config(&echo).unwrap();
    assert_eq!(cfg.echo(), echo);
    assert_eq!(cfg.spins.len(), 2);
    for j in ["0.5", "2"] {
        let t = Table::read(&dir.path().join(format!("classical_J{j}.csv"))).unwrap();
        assert_eq!(t.columns, COLUMNS);
        let z = t.column("z_classical").unwrap();
        // one period of the bare orbit, in units of z_g
        assert!((z[0] - z[z.len() - 1]).abs() < 1e-9 * z[0].abs());
        assert!(t.column("z_mean").unwrap().iter().all(|v| v.is_nan()));
        assert!(dir.path().join(format!("classical_J{j}.svg")).exists());
    }
}

#[test]
fn compare_mode_puts_quantum_and_classical_on_one_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinmotion(&["compare", "-j", "2", "--t-final-periods", "0.25", "--n-max", "250"], Some(dir.path()));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = Table::read(&dir.path().join("compare_J2.csv")).unwrap();
    let zq = t.column("z_mean").unwrap();
    let zc = t.column("z_classical").unwrap();
    assert!(zq.iter().chain(&zc).all(|v| v.is_finite()));
    assert!((zq[0] - zc[0]).abs() < 1e-9 * zc[0].abs());
    assert!(dir.path().join("cumulant_J2.csv").exists());
    assert!(dir.path().join("histogram_J2.csv").exists());
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn identical_runs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["sse", "-j", "0.5", "--t-final-periods", "0.2", "--n-max", "250", "--seed", "5"];
    assert_eq!(code(&spinmotion(&args, Some(a.path()))), 0);
    assert_eq!(code(&spinmotion(&args, Some(b.path()))), 0);
    for f in ["sse_J0.5.csv", "histogram_J0.5.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "preset = desk\nJ = 10\nt_final_periods = 0.1  # short\nseed = 9\n").unwrap();
    let o = spinmotion(
        &["cumulant", "--config", cfg.to_str().unwrap(), "--set", "k_zg2_over_omega=0.1", "--seed", "4"],
        Some(dir.path()),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let echo = parse_config(&std::fs::read_to_string(dir.path().join("resolved_config.txt")).unwrap()).unwrap();
    assert_eq!(echo.seed, 4);
    assert_eq!(echo.k_zg2_over_omega, 0.1);
    assert_eq!(echo.spins[0].value(), 10.0);
    assert!(dir.path().join("cumulant_J10.csv").exists());
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_spinmotion"))
        .args(["classical", "-j", "1", "--t-final-periods", "0.1"])
        .env("SPINMOTION_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("classical_J1.csv").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&spinmotion(&["sse", "--set", "bogus=1"], Some(dir.path()))), 2);
    assert_eq!(code(&spinmotion(&["sse", "-j", "0.4"], Some(dir.path()))), 2);
    assert_eq!(code(&spinmotion(&["sse", "--dt", "-1"], Some(dir.path()))), 2);
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "J = 2\ndelta_z_over_zg = 8\nb_zg_over_omega = 3\n").unwrap();
    let o = spinmotion(&["sse", "--config", cfg.to_str().unwrap()], Some(dir.path()));
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn undersized_cutoff_exits_3_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = spinmotion(&["sse", "-j", "0.5", "--t-final-periods", "1", "--n-max", "120"], Some(dir.path()));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let t = Table::read(&dir.path().join("sse_J0.5.csv")).unwrap();
    assert!(!t.rows.is_empty());
    let last = t.column("t").unwrap().last().copied().unwrap();
    assert!(last < 2.0 * std::f64::consts::PI);
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = spinmotion(&["classical", "-j", "1", "--t-final-periods", "0.1"], Some(&blocker.join("sub")));
    assert_eq!(code(&o), 4);
}
