//! The four commands: evolve, oracle, sweep and diagnose.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hfbflow::bogoliubov::{k_from_pair, PairKernel};
use hfbflow::diagnostics::{
    bbgky_residual, collapsing_norm, nt_norms, pair_norm_report, Collapsing, NormParams, NormReport,
};
use hfbflow::dynamics::{
    conserved_energy, evolve, AbortRecord, HfbState, IntegratorConfig, Model, MonitorRecord, Scheme,
    SpectralMask, Trajectory,
};
use hfbflow::Grid;
use hfbflow_fock::{
    evolve_exact, fock_error, quasi_free_state, suggested_cutoff, FockSpace, KrylovConfig, ModeBasis,
    PropagationConfig,
};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CutoffPolicy, DiagnosticsSection, RunConfig, SweepAxis};
use crate::error::CliError;
use crate::initial::{initial_data, initial_state, InitialData};
use crate::output::{read_json, write_csv, write_json, TrajectoryFile};

pub const TRAJECTORY_COLUMNS: [&str; 7] = [
    "t",
    "trace_gamma",
    "energy",
    "sym_residual_lambda",
    "herm_residual_gamma",
    "l2_sh2k",
    "linf_sh2k",
];

pub const ORACLE_COLUMNS: [&str; 5] = ["t", "fock_error", "phase", "tail_mass", "norm_drift"];

/// A window residual this many times the median marks a frame as inconsistent.
pub const BBGKY_FLAG_RATIO: f64 = 10.0;

/// Window residuals below this are never flagged.
pub const BBGKY_FLAG_FLOOR: f64 = 1e-9;

/// Extremes of the per-step monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftStats {
    pub steps: usize,
    pub number_initial: f64,
    /// `max_t |N(t) - N(0)| / |N(0)|`.
    pub number_rel_drift: f64,
    pub energy_initial: Option<f64>,
    pub energy_rel_drift: Option<f64>,
    pub trace_imag_max: f64,
    pub lambda_symmetry_max: f64,
    pub gamma_hermiticity_max: f64,
    pub gamma_min_eigenvalue: Option<f64>,
}

fn relative(value: f64, reference: f64) -> f64 {
    let d = (value - reference).abs();
    if reference == 0.0 {
        d
    } else {
        d / reference.abs()
    }
}

pub fn drift_stats(monitors: &[MonitorRecord]) -> DriftStats {
    let first = monitors.first().copied();
    let n0 = first.map_or(0.0, |m| m.number);
    let e0 = first.and_then(|m| m.energy);
    let fold_max = |f: &dyn Fn(&MonitorRecord) -> f64| monitors.iter().map(f).fold(0.0, f64::max);
    DriftStats {
        steps: monitors.len().saturating_sub(1),
        number_initial: n0,
        number_rel_drift: fold_max(&|m| relative(m.number, n0)),
        energy_initial: e0,
        energy_rel_drift: e0.map(|e0| fold_max(&|m| m.energy.map_or(0.0, |e| relative(e, e0)))),
        trace_imag_max: fold_max(&|m| m.trace_imag.abs()),
        lambda_symmetry_max: fold_max(&|m| m.lambda_symmetry),
        gamma_hermiticity_max: fold_max(&|m| m.gamma_hermiticity),
        gamma_min_eigenvalue: monitors
            .iter()
            .filter_map(|m| m.gamma_min_eigenvalue)
            .reduce(f64::min),
    }
}

/// Norm reports of a stored trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub nt_norms: NormReport,
    /// `pair_s<s>` and `density_s<s>` collapsing norms for each exponent.
    pub collapsing: BTreeMap<String, f64>,
    pub pair_norms: NormReport,
    /// Hierarchy residuals; absent with fewer than three frames.
    pub bbgky: Option<NormReport>,
    /// `max(bb1, bb2, bb3)` centred at each interior frame.
    pub bbgky_windows: Vec<f64>,
    pub bbgky_flag: bool,
    /// Frame at the centre of the worst window when flagged.
    pub bbgky_flag_frame: Option<usize>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn diagnose_trajectory(traj: &Trajectory, params: &DiagnosticsSection) -> Result<DiagnosticsReport, CliError> {
    let first = traj
        .frames
        .first()
        .ok_or_else(|| CliError::Trajectory("empty trajectory".into()))?;
    let particles = first.particles();
    let nt = nt_norms(traj, params.epsilon)?;
    let mut collapsing = BTreeMap::new();
    for &s in &params.s_list {
        collapsing.insert(format!("pair_s{s}"), collapsing_norm(traj, s, Collapsing::Pair)?);
        collapsing.insert(format!("density_s{s}"), collapsing_norm(traj, s, Collapsing::Density)?);
    }
    let pair_norms = pair_norm_report(traj, particles)?.summary();

    let mut windows = Vec::new();
    let mut bbgky = None;
    if traj.frames.len() >= 3 {
        let mut worst: BTreeMap<String, f64> = BTreeMap::new();
        for i in 1..traj.frames.len() - 1 {
            let window = Trajectory {
                frames: traj.frames[i - 1..=i + 1].to_vec(),
                monitors: Vec::new(),
                abort: None,
                dt: traj.dt,
                output_every: traj.output_every,
            };
            let r = bbgky_residual(&window)?;
            windows.push(r.values.values().copied().fold(0.0, f64::max));
            for (name, v) in r.values {
                let e = worst.entry(name).or_insert(0.0);
                *e = e.max(v);
            }
        }
        bbgky = Some(NormReport {
            values: worst,
            params: NormParams {
                exponent: 0.0,
                z_offsets: first.grid().len(),
                t_start: first.t,
                t_end: traj.final_state().t,
                frames: traj.frames.len(),
            },
        });
    }
    let (mut flag, mut flag_frame) = (false, None);
    if windows.len() >= 5 {
        let med = median(&windows);
        let (arg, max) = windows
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        if max > BBGKY_FLAG_FLOOR && max > BBGKY_FLAG_RATIO * med {
            flag = true;
            flag_frame = Some(arg + 1);
        }
    }
    Ok(DiagnosticsReport {
        nt_norms: nt,
        collapsing,
        pair_norms,
        bbgky,
        bbgky_windows: windows,
        bbgky_flag: flag,
        bbgky_flag_frame: flag_frame,
    })
}

/// Fock-space comparison of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub modes: Vec<[i64; 3]>,
    pub n_max: usize,
    pub dimension: usize,
    pub pde_scheme: Scheme,
    pub phi_projection_residual: f64,
    pub pair_projection_residual: f64,
    pub error_initial: f64,
    pub error_final: f64,
    pub error_max: f64,
    /// Largest change of the error between consecutive frames.
    pub error_max_jump: f64,
    pub tail_mass_max: f64,
    pub norm_drift_max: f64,
    pub file: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub t: f64,
    pub error: f64,
    pub phase: f64,
    pub tail_mass: f64,
    pub norm_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    /// Reproduces the run together with `seed`.
    pub config: RunConfig,
    pub seed: u64,
    pub exit_code: i32,
    pub abort: Option<AbortRecord>,
    pub dt_effective: f64,
    pub frames: usize,
    pub drift: DriftStats,
    /// `max_t ||sh(2k)||_{L^2}` over the stored frames.
    pub sh2k_l2_max: f64,
    pub diagnostics: Option<String>,
    pub diagnostics_error: Option<String>,
    pub oracle: Option<OracleSummary>,
    pub files: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// Result of a run, with the trajectory kept for callers that need it.
pub struct RunOutcome {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub oracle_rows: Vec<OracleRow>,
}

fn grid_of(cfg: &RunConfig) -> Result<Grid, CliError> {
    Ok(Grid::new(cfg.grid.d, cfg.grid.n, cfg.grid.length)?)
}

fn integrator(cfg: &RunConfig, scheme: Scheme) -> IntegratorConfig {
    IntegratorConfig {
        output_every: cfg.time.output_cadence,
        ..IntegratorConfig::new(cfg.time.dt, cfg.time.t_final, scheme)
    }
}

/// One CSV row per stored frame.
pub fn trajectory_rows(traj: &Trajectory) -> Result<Vec<Vec<f64>>, CliError> {
    traj.frames
        .iter()
        .map(|f| {
            let (l2, linf) = match f.pair() {
                Ok((psi, _)) => (psi.norm_l2(), psi.max_abs()),
                Err(_) if traj.abort.is_some() => (f64::NAN, f64::NAN),
                Err(e) => return Err(e.into()),
            };
            Ok(vec![
                f.t,
                f.gamma.trace().re,
                conserved_energy(f),
                f.lambda.symmetry_residual(),
                f.gamma.hermiticity_residual(),
                l2,
                linf,
            ])
        })
        .collect()
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

/// Writes the per-run files shared by `evolve` and `oracle`.
fn record_run(
    command: &str,
    cfg: &RunConfig,
    out: &Path,
    traj: &Trajectory,
    mask_modes: Option<Vec<[i64; 3]>>,
) -> Result<RunSummary, CliError> {
    let mut files = Vec::new();
    let rows = trajectory_rows(traj)?;
    write_csv(&out.join("trajectory.csv"), &TRAJECTORY_COLUMNS, &rows)?;
    files.push("trajectory.csv".to_string());

    let monitor_rows: Vec<Vec<f64>> = traj
        .monitors
        .iter()
        .map(|m| {
            vec![
                m.t,
                m.number,
                m.trace_imag,
                m.energy.unwrap_or(f64::NAN),
                m.lambda_symmetry,
                m.gamma_hermiticity,
            ]
        })
        .collect();
    write_csv(
        &out.join("monitors.csv"),
        &["t", "number", "trace_imag", "energy", "lambda_symmetry", "gamma_hermiticity"],
        &monitor_rows,
    )?;
    files.push("monitors.csv".to_string());

    if cfg.output.write_trajectory {
        write_json(&out.join("trajectory.json"), &TrajectoryFile::from_trajectory(traj, mask_modes)?)?;
        files.push("trajectory.json".to_string());
    }

    let (mut diagnostics, mut diagnostics_error) = (None, None);
    if cfg.diagnostics.enabled {
        match diagnose_trajectory(traj, &cfg.diagnostics) {
            Ok(report) => {
                write_json(&out.join("diagnostics.json"), &report)?;
                files.push("diagnostics.json".to_string());
                diagnostics = Some("diagnostics.json".to_string());
            }
            Err(e) => diagnostics_error = Some(e.to_string()),
        }
    }

    Ok(RunSummary {
        command: command.to_string(),
        config: cfg.clone(),
        seed: cfg.output.seed,
        exit_code: if traj.abort.is_some() { 2 } else { 0 },
        abort: traj.abort.clone(),
        dt_effective: traj.dt,
        frames: traj.frames.len(),
        drift: drift_stats(&traj.monitors),
        sh2k_l2_max: rows.iter().map(|r| r[5]).fold(0.0, f64::max),
        diagnostics,
        diagnostics_error,
        oracle: None,
        files,
        wall_clock_seconds: 0.0,
    })
}

fn finish(out: &Path, mut summary: RunSummary, start: Instant) -> Result<RunSummary, CliError> {
    summary.wall_clock_seconds = start.elapsed().as_secs_f64();
    summary.files.push("summary.json".to_string());
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Integrates the coupled system and writes `trajectory.csv`, `monitors.csv`,
/// `summary.json` and, when enabled, `trajectory.json` and `diagnostics.json`.
pub fn run_evolve(cfg: &RunConfig, out: &Path) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    create_dir(out)?;
    let grid = grid_of(cfg)?;
    let model = Model::new(grid, cfg.potential.spec())?;
    let data = initial_data(grid, &cfg.initial, cfg.output.seed)?;
    let s0 = initial_state(model, &cfg.initial, &data)?;
    let traj = evolve(&s0, &integrator(cfg, cfg.time.scheme))?;
    info!("evolve: {} frames, abort {:?}", traj.frames.len(), traj.abort);
    let summary = record_run("evolve", cfg, out, &traj, None)?;
    let summary = finish(out, summary, start)?;
    Ok(RunOutcome {
        summary,
        trajectory: traj,
        oracle_rows: Vec::new(),
    })
}

/// Number of occupation states of `modes` modes with at most `n_max` particles.
pub fn occupation_states(modes: usize, n_max: usize) -> Option<usize> {
    let mut c: usize = 1;
    for i in 1..=modes {
        c = c.checked_mul(n_max + i)? / i;
    }
    Some(c)
}

/// Data projected onto the retained modes, and the projection residuals.
fn project(modes: &ModeBasis, data: &InitialData) -> Result<(InitialData, f64, f64), CliError> {
    let (a, phi_rest) = modes.project_field(&data.phi)?;
    let pair = data
        .pair
        .as_ref()
        .ok_or_else(|| CliError::Config("the oracle needs a pair kernel".into()))?;
    let (kc, pair_rest) = modes.project_kernel(pair.kernel())?;
    let projected = InitialData {
        phi: modes.field_from(&a),
        pair: Some(PairKernel::new(modes.kernel_from(&kc))?),
    };
    Ok((projected, phi_rest, pair_rest))
}

/// Evolves the projected PDE and the truncated many-body state from the same
/// data and compares the exact state with the quasi-free state of the PDE
/// solution at every stored frame.
pub fn run_oracle(cfg: &RunConfig, out: &Path) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    create_dir(out)?;
    let oc = &cfg.oracle;
    let grid = grid_of(cfg)?;
    let modes = ModeBasis::lowest(grid, oc.modes)?;
    let raw = initial_data(grid, &cfg.initial, cfg.output.seed)?;
    let (data, phi_rest, pair_rest) = project(&modes, &raw)?;
    let k0 = data.pair.clone().expect("projected pair kernel");
    let particles = cfg.potential.particles as f64;

    let n_max = match oc.n_max_policy {
        CutoffPolicy::Fixed => oc.n_max.expect("validated"),
        CutoffPolicy::Auto => suggested_cutoff(&data.phi, &k0, particles, oc.tail_target)? + oc.n_max_margin,
    };
    let states = occupation_states(modes.len(), n_max).unwrap_or(usize::MAX);
    if states > oc.max_states {
        return Err(CliError::Cutoff(format!(
            "{} modes with cutoff {n_max} need {states} states, above max_states = {}",
            modes.len(),
            oc.max_states
        )));
    }

    let mask_modes = modes.modes().to_vec();
    let mask = SpectralMask::from_modes(&grid, &mask_modes)?;
    let model = Model::with_mask(grid, cfg.potential.spec(), mask)?;
    let s0 = HfbState::from_pair_kernel(model.clone(), data.phi.clone(), &k0)?;
    let traj = evolve(&s0, &integrator(cfg, Scheme::Rk4Mol))?;

    let space = FockSpace::new(modes.clone(), n_max)?;
    let hamiltonian = space.hamiltonian(model.vn(), particles)?;
    let pcfg = PropagationConfig {
        krylov: KrylovConfig {
            tolerance: oc.krylov_tol,
            ..Default::default()
        },
        tail_bound: oc.tail_bound,
    };
    let prepared = quasi_free_state(&space, &data.phi, &k0, particles, &pcfg)?;
    let mut exact = prepared.state;
    let mut t_exact = 0.0;
    let mut rows = Vec::with_capacity(traj.frames.len());
    for frame in &traj.frames {
        let mut tail = 0.0f64;
        let mut drift = 0.0f64;
        if frame.t > t_exact {
            let p = evolve_exact(&exact, &hamiltonian, frame.t - t_exact, &pcfg)?;
            tail = tail.max(p.tail_mass);
            drift += p.norm_drift;
            exact = p.state;
            t_exact = frame.t;
        }
        let (psi, _) = frame.pair()?;
        let k = k_from_pair(&psi)?;
        let approx = quasi_free_state(&space, &frame.phi, &k, particles, &pcfg)?;
        tail = tail.max(approx.tail_mass).max(exact.tail_mass());
        let d = fock_error(&exact, &approx.state)?;
        rows.push(OracleRow {
            t: frame.t,
            error: d.value,
            phase: d.theta,
            tail_mass: tail,
            norm_drift: drift + approx.norm_drift,
        });
    }
    let csv_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.t, r.error, r.phase, r.tail_mass, r.norm_drift])
        .collect();
    write_csv(&out.join("oracle.csv"), &ORACLE_COLUMNS, &csv_rows)?;

    let mut summary = record_run("oracle", cfg, out, &traj, Some(mask_modes.clone()))?;
    summary.files.push("oracle.csv".to_string());
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    summary.oracle = Some(OracleSummary {
        modes: mask_modes,
        n_max,
        dimension: space.dim(),
        pde_scheme: Scheme::Rk4Mol,
        phi_projection_residual: phi_rest,
        pair_projection_residual: pair_rest,
        error_initial: errors[0],
        error_final: *errors.last().expect("initial frame"),
        error_max: errors.iter().copied().fold(0.0, f64::max),
        error_max_jump: errors.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max),
        tail_mass_max: rows.iter().map(|r| r.tail_mass).fold(prepared.tail_mass, f64::max),
        norm_drift_max: rows.iter().map(|r| r.norm_drift).fold(0.0, f64::max),
        file: "oracle.csv".to_string(),
    });
    let summary = finish(out, summary, start)?;
    Ok(RunOutcome {
        summary,
        trajectory: traj,
        oracle_rows: rows,
    })
}

/// One point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub directory: String,
    pub exit_code: i32,
    pub reason: Option<String>,
    pub number_rel_drift: f64,
    pub energy_rel_drift: f64,
    pub sh2k_l2_max: f64,
    pub fock_error_final: Option<f64>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub command: String,
    pub axis: SweepAxis,
    pub config: RunConfig,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    /// `log(d_i / d_{i+1}) / log(dt_i / dt_{i+1})` from differences of
    /// successive final states, for a `dt` axis with three or more points.
    pub observed_orders: Option<Vec<f64>>,
    pub file: String,
    pub wall_clock_seconds: f64,
}

fn failed_row(value: f64, dir: &str, e: &CliError) -> SweepRow {
    SweepRow {
        value,
        directory: dir.to_string(),
        exit_code: e.exit_code(),
        reason: Some(e.to_string()),
        number_rel_drift: f64::NAN,
        energy_rel_drift: f64::NAN,
        sh2k_l2_max: f64::NAN,
        fock_error_final: None,
        wall_clock_seconds: 0.0,
    }
}

fn sweep_point(cfg: &RunConfig, axis: SweepAxis, value: f64, dir: &str, out: &Path) -> (SweepRow, Option<HfbState>) {
    let run = cfg.with_axis_value(axis, value).and_then(|c| {
        let path = out.join(dir);
        if c.oracle.enabled {
            run_oracle(&c, &path)
        } else {
            run_evolve(&c, &path)
        }
    });
    match run {
        Ok(outcome) => {
            let s = &outcome.summary;
            let row = SweepRow {
                value,
                directory: dir.to_string(),
                exit_code: s.exit_code,
                reason: s.abort.as_ref().map(|a| format!("aborted at t = {}: {}", a.t, a.monitor)),
                number_rel_drift: s.drift.number_rel_drift,
                energy_rel_drift: s.drift.energy_rel_drift.unwrap_or(f64::NAN),
                sh2k_l2_max: s.sh2k_l2_max,
                fock_error_final: s.oracle.as_ref().map(|o| o.error_final),
                wall_clock_seconds: s.wall_clock_seconds,
            };
            let state = (s.exit_code == 0).then(|| outcome.trajectory.final_state().clone());
            (row, state)
        }
        Err(e) => (failed_row(value, dir, &e), None),
    }
}

fn state_distance(a: &HfbState, b: &HfbState) -> f64 {
    let p = (&a.phi - &b.phi).norm_l2();
    let l = (&a.lambda - &b.lambda).norm_l2();
    let g = (&a.gamma - &b.gamma).norm_l2();
    (p * p + l * l + g * g).sqrt()
}

fn observed_orders(points: &[(f64, HfbState)]) -> Vec<f64> {
    let mut sorted: Vec<&(f64, HfbState)> = points.iter().collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let diffs: Vec<(f64, f64)> = sorted
        .windows(2)
        .map(|w| (w[0].0, state_distance(&w[0].1, &w[1].1)))
        .collect();
    diffs
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect()
}

/// Runs every point of the axis independently and writes `sweep.csv` and
/// `summary.json`. Returns the summary and the exit code (0 when every row
/// succeeded, otherwise the largest row code).
pub fn run_sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64], out: &Path) -> Result<(SweepSummary, i32), CliError> {
    cfg.validate()?;
    let start = Instant::now();
    create_dir(out)?;
    let results: Vec<(SweepRow, Option<HfbState>)> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| sweep_point(cfg, axis, v, &format!("row_{i:03}"), out))
        .collect();
    let rows: Vec<SweepRow> = results.iter().map(|r| r.0.clone()).collect();

    let observed = (axis == SweepAxis::Dt).then(|| {
        let points: Vec<(f64, HfbState)> = results
            .iter()
            .filter_map(|(row, s)| s.clone().map(|s| (row.value, s)))
            .collect();
        (points.len() >= 3).then(|| observed_orders(&points))
    });
    let csv_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            vec![
                r.value,
                r.exit_code as f64,
                r.number_rel_drift,
                r.energy_rel_drift,
                r.sh2k_l2_max,
                r.fock_error_final.unwrap_or(f64::NAN),
            ]
        })
        .collect();
    write_csv(
        &out.join("sweep.csv"),
        &[axis.name(), "exit_code", "number_rel_drift", "energy_rel_drift", "sh2k_l2_max", "fock_error_final"],
        &csv_rows,
    )?;
    let code = rows.iter().map(|r| r.exit_code).max().unwrap_or(0);
    let summary = SweepSummary {
        command: "sweep".to_string(),
        axis,
        config: cfg.clone(),
        seed: cfg.output.seed,
        rows,
        observed_orders: observed.flatten(),
        file: "sweep.csv".to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok((summary, code))
}

/// Reloads a stored trajectory and writes `diagnostics.json` into `out`.
pub fn run_diagnose(trajectory: &Path, params: &DiagnosticsSection, out: &Path) -> Result<DiagnosticsReport, CliError> {
    let file: TrajectoryFile = read_json(trajectory)?;
    let traj = file.to_trajectory()?;
    let report = diagnose_trajectory(&traj, params).map_err(|e| match e {
        CliError::Core(c) => CliError::Trajectory(c.to_string()),
        other => other,
    })?;
    create_dir(out)?;
    write_json(&out.join("diagnostics.json"), &report)?;
    Ok(report)
}

/// Output directory: the `--out` flag wins over the configuration.
pub fn output_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output.directory.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn occupation_counts() {
        assert_eq!(occupation_states(1, 10), Some(11));
        assert_eq!(occupation_states(3, 2), Some(10));
        assert_eq!(occupation_states(3, 100), Some(176_851));
        assert_eq!(occupation_states(40, 10_000), None);
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn drift_of_constant_monitors_is_zero() {
        let m = MonitorRecord {
            t: 0.0,
            number: 16.0,
            trace_imag: 0.0,
            energy: Some(-3.0),
            lambda_symmetry: 0.0,
            gamma_hermiticity: 0.0,
            gamma_min_eigenvalue: Some(0.0),
        };
        let d = drift_stats(&[m, MonitorRecord { t: 1.0, ..m }]);
        assert_eq!(d.steps, 1);
        assert_eq!(d.number_rel_drift, 0.0);
        assert_eq!(d.energy_rel_drift, Some(0.0));
    }
}
