use std::fs;
use std::path::Path;
use std::process::Command;

use hfbflow_cli::config::DiagnosticsSection;
use hfbflow_cli::output::{read_json, write_json, TrajectoryFile};
use hfbflow_cli::run::{run_diagnose, DiagnosticsReport, RunSummary, TRAJECTORY_COLUMNS};
use hfbflow_cli::{run_evolve, run_oracle, run_sweep, RunConfig, SweepAxis};
use tempfile::TempDir;

const BASE: &str = r#"
[grid]
d = 1
n = 32
L = 6.283185307179586

[potential]
amplitude = 1.0
sigma = 0.5
beta = 0.5
N = 8

[initial]
phi_profile = "gaussian"
phi_width = 0.8
phi_mode = [1]
k_mode = "gaussian_pair"
pair_amplitude = 0.2

[time]
T = 0.05
dt = 0.001
scheme = "strang"
output_cadence = 5

[diagnostics]
enabled = true

[output]
seed = 3
"#;

fn base() -> RunConfig {
    RunConfig::from_toml(BASE).unwrap()
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hfbflow"))
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn zero_final_time_writes_a_single_row() {
    let dir = TempDir::new().unwrap();
    let mut cfg = base();
    cfg.time.t_final = 0.0;
    let out = run_evolve(&cfg, dir.path()).unwrap();
    assert_eq!(out.summary.exit_code, 0);
    let (header, rows) = read_csv(&dir.path().join("trajectory.csv"));
    assert_eq!(header, TRAJECTORY_COLUMNS);
    assert_eq!(rows.len(), 1);
}

#[test]
fn free_flow_conserves_energy_column() {
    let dir = TempDir::new().unwrap();
    let mut cfg = base();
    cfg.potential.amplitude = 0.0;
    run_evolve(&cfg, dir.path()).unwrap();
    let (_, rows) = read_csv(&dir.path().join("trajectory.csv"));
    let e0 = rows[0][2];
    for r in &rows {
        assert!((r[2] - e0).abs() <= 1e-12 * e0.abs().max(1.0), "{} vs {e0}", r[2]);
    }
}

#[test]
fn csv_has_full_precision() {
    let dir = TempDir::new().unwrap();
    run_evolve(&base(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let field = text.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    let mantissa = field.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{field}");
}

#[test]
fn identical_config_and_seed_give_identical_files() {
    let mut cfg = base();
    cfg.initial.phi_profile = hfbflow_cli::config::PhiProfile::RandomSmooth;
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let sa = run_evolve(&cfg, a.path()).unwrap().summary;
    let sb = run_evolve(&cfg, b.path()).unwrap().summary;
    for f in ["trajectory.csv", "monitors.csv", "diagnostics.json", "trajectory.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(sa.drift, sb.drift);
    // The echoed configuration reproduces the run.
    let echoed: RunSummary = read_json(&a.path().join("summary.json")).unwrap();
    assert_eq!(echoed.config, cfg);
    assert_eq!(echoed.seed, 3);
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let dir = TempDir::new().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, BASE).unwrap();
    let status = binary()
        .args(["evolve", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(dir.path().join("run"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let typo = dir.path().join("typo.toml");
    fs::write(&typo, BASE.replace("sigma = 0.5", "sigam = 0.5")).unwrap();
    let out = binary().args(["evolve", "--config"]).arg(&typo).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");

    // The pair density recovery needs |Lambda - phi phi| small; a huge
    // correction drives the one-body density negative and trips a monitor.
    let blow = dir.path().join("blow.toml");
    fs::write(
        &blow,
        BASE.replace("k_mode = \"gaussian_pair\"", "k_mode = \"pair_corrected\"\ncorrection_amplitude = 1e9")
            .replace("amplitude = 1.0", "amplitude = 1e6"),
    )
    .unwrap();
    let out = binary()
        .args(["evolve", "--config"])
        .arg(&blow)
        .arg("--out")
        .arg(dir.path().join("blow"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let huge = dir.path().join("huge.toml");
    fs::write(
        &huge,
        format!("{BASE}\n[oracle]\nenabled = true\nmodes = 8\nmax_states = 1000\n"),
    )
    .unwrap();
    let out = binary()
        .args(["oracle", "--config"])
        .arg(&huge)
        .arg("--out")
        .arg(dir.path().join("huge"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_starts_from_the_same_state() {
    let dir = TempDir::new().unwrap();
    let mut cfg = base();
    cfg.oracle.enabled = true;
    cfg.oracle.modes = 3;
    cfg.time.t_final = 0.02;
    cfg.potential.particles = 4;
    let out = run_oracle(&cfg, dir.path()).unwrap();
    let rows = &out.oracle_rows;
    assert!(rows[0].error < 1e-10, "{}", rows[0].error);
    let o = out.summary.oracle.unwrap();
    assert!(o.error_max_jump < 0.1);
    assert!(o.tail_mass_max < cfg.oracle.tail_bound);
    let (_, csv) = read_csv(&dir.path().join("oracle.csv"));
    assert_eq!(csv.len(), rows.len());
}

#[test]
fn single_point_sweep_matches_evolve() {
    let dir = TempDir::new().unwrap();
    let cfg = base();
    let (summary, code) = run_sweep(&cfg, SweepAxis::N, &[8.0], dir.path()).unwrap();
    assert_eq!(code, 0);
    let direct = TempDir::new().unwrap();
    run_evolve(&cfg, direct.path()).unwrap();
    let row = dir.path().join(&summary.rows[0].directory);
    for f in ["trajectory.csv", "monitors.csv"] {
        assert_eq!(fs::read(row.join(f)).unwrap(), fs::read(direct.path().join(f)).unwrap());
    }
}

#[test]
fn failing_rows_are_marked_and_the_sweep_continues() {
    let dir = TempDir::new().unwrap();
    let (summary, code) = run_sweep(&base(), SweepAxis::Beta, &[0.5, 2.0], dir.path()).unwrap();
    assert_eq!(code, 1);
    assert_eq!(summary.rows[0].exit_code, 0);
    assert_eq!(summary.rows[1].exit_code, 1);
    assert!(summary.rows[1].reason.is_some());
}

#[test]
fn strang_dt_sweep_is_second_order() {
    let dir = TempDir::new().unwrap();
    let mut cfg = base();
    cfg.diagnostics.enabled = false;
    cfg.output.write_trajectory = false;
    cfg.time.t_final = 0.1;
    cfg.time.output_cadence = 1000;
    let (summary, code) = run_sweep(&cfg, SweepAxis::Dt, &[0.004, 0.002, 0.001], dir.path()).unwrap();
    assert_eq!(code, 0);
    let orders = summary.observed_orders.unwrap();
    assert_eq!(orders.len(), 1);
    assert!((orders[0] - 2.0).abs() < 0.3, "{orders:?}");
}

#[test]
fn diagnose_reproduces_in_process_reports() {
    let dir = TempDir::new().unwrap();
    run_evolve(&base(), dir.path()).unwrap();
    let inline: DiagnosticsReport = read_json(&dir.path().join("diagnostics.json")).unwrap();
    let again = run_diagnose(
        &dir.path().join("trajectory.json"),
        &DiagnosticsSection::default(),
        &dir.path().join("again"),
    )
    .unwrap();
    let close = |a: &std::collections::BTreeMap<String, f64>, b: &std::collections::BTreeMap<String, f64>| {
        assert_eq!(a.len(), b.len());
        for (k, v) in a {
            assert!((v - b[k]).abs() <= 1e-12 * v.abs().max(1.0), "{k}: {v} vs {}", b[k]);
        }
    };
    close(&inline.nt_norms.values, &again.nt_norms.values);
    close(&inline.pair_norms.values, &again.pair_norms.values);
    close(&inline.collapsing, &again.collapsing);
    close(&inline.bbgky.unwrap().values, &again.bbgky.unwrap().values);
    assert!(!again.bbgky_flag);
}

#[test]
fn zero_trajectory_gives_zero_report() {
    let dir = TempDir::new().unwrap();
    run_evolve(&base(), dir.path()).unwrap();
    let path = dir.path().join("trajectory.json");
    let mut file: TrajectoryFile = read_json(&path).unwrap();
    for f in &mut file.frames {
        for v in f.phi.iter_mut().chain(f.lambda.iter_mut()).chain(f.gamma.iter_mut()) {
            *v = [0.0, 0.0];
        }
    }
    write_json(&path, &file).unwrap();
    let r = run_diagnose(&path, &DiagnosticsSection::default(), dir.path()).unwrap();
    let all = r
        .nt_norms
        .values
        .values()
        .chain(r.pair_norms.values.values())
        .chain(r.collapsing.values())
        .chain(r.bbgky.as_ref().unwrap().values.values());
    for v in all {
        assert_eq!(*v, 0.0);
    }
    assert!(!r.bbgky_flag);
}

#[test]
fn corrupted_frame_is_flagged() {
    let dir = TempDir::new().unwrap();
    let mut cfg = base();
    cfg.time.t_final = 0.1;
    run_evolve(&cfg, dir.path()).unwrap();
    let path = dir.path().join("trajectory.json");
    let mut file: TrajectoryFile = read_json(&path).unwrap();
    let bad = file.frames.len() / 2;
    for v in file.frames[bad].lambda.iter_mut() {
        v[0] *= 1.01;
    }
    write_json(&path, &file).unwrap();
    let r = run_diagnose(&path, &DiagnosticsSection::default(), dir.path()).unwrap();
    assert!(r.bbgky_flag);
    let at = r.bbgky_flag_frame.unwrap();
    assert!(at + 1 >= bad && at <= bad + 1, "flagged {at}, corrupted {bad}");
}

#[test]
fn unreadable_trajectory_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("trajectory.json");
    fs::write(&path, "{\"grid\": 1").unwrap();
    let out = binary().arg("diagnose").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = binary().arg("diagnose").arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
