//! Post-processing of trajectories: Sobolev weights, collapsing norms of
//! kernel diagonals, the composite well-posedness norms, pair-kernel sizes
//! and residuals of the hierarchy equations for the low marginals.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{hyperbolic_from_pair, recover_pair, FluctuationData};
use crate::dynamics::{HfbState, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Kernel};
use crate::potential::{convolve, diag_multiply};

/// Default `epsilon` in the weight `<grad>^{1/2 + epsilon}`.
pub const DEFAULT_EPSILON: f64 = 0.1;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Which variables of a kernel a weight acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axes {
    X,
    Y,
    Both,
}

fn check_exponent(s: f64) -> Result<()> {
    if (-2.0..=2.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("Sobolev exponent {s} outside [-2, 2]")))
    }
}

fn weight_of(xi2: f64, s: f64, homogeneous: bool) -> f64 {
    if !homogeneous {
        (1.0 + xi2).powf(0.5 * s)
    } else if xi2 == 0.0 {
        0.0
    } else {
        xi2.powf(0.5 * s)
    }
}

/// `(1 + |xi|^2)^{s/2}`, or `|xi|^s` with the zero mode removed when `homogeneous`.
pub fn sobolev_symbol(grid: &Grid, s: f64, homogeneous: bool) -> Result<Vec<f64>> {
    check_exponent(s)?;
    Ok((0..grid.len())
        .map(|k| weight_of(grid.wave_number_sq(k), s, homogeneous))
        .collect())
}

fn complex_symbol(sym: &[f64]) -> Vec<C64> {
    sym.iter().map(|&s| C64::new(s, 0.0)).collect()
}

pub fn weight_field(f: &Field, s: f64, homogeneous: bool) -> Result<Field> {
    let sym = complex_symbol(&sobolev_symbol(f.grid(), s, homogeneous)?);
    Ok(f.apply_multiplier(&sym))
}

pub fn weight_kernel(k: &Kernel, s: f64, homogeneous: bool, axes: Axes) -> Result<Kernel> {
    let sym = complex_symbol(&sobolev_symbol(k.grid(), s, homogeneous)?);
    let (x, y) = match axes {
        Axes::X => (Some(sym.as_slice()), None),
        Axes::Y => (None, Some(sym.as_slice())),
        Axes::Both => (Some(sym.as_slice()), Some(sym.as_slice())),
    };
    Ok(k.apply_multipliers(x, y))
}

/// `|grad_{x-y}|^s K`, the multiplier `|(xi - eta) / 2|^s` on the joint transform.
pub fn relative_weight(k: &Kernel, s: f64) -> Result<Kernel> {
    check_exponent(s)?;
    let g = *k.grid();
    Ok(k.apply_joint_multiplier(|m, e| {
        let (xi, eta) = (g.wave_vector(m), g.wave_vector(e));
        let r2: f64 = (0..3).map(|a| (0.5 * (xi[a] - eta[a])).powi(2)).sum();
        C64::new(weight_of(r2, s, true), 0.0)
    }))
}

/// Trapezoid weights for samples at `times`.
fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    for (i, pair) in times.windows(2).enumerate() {
        let h = 0.5 * (pair[1] - pair[0]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Squared `L^2(dx)` norms of `x -> <grad>^s K(x, x + z)` for every offset `z`.
fn offset_profile_sq(k: &Kernel, sym: &[f64]) -> Vec<f64> {
    (0..k.grid().len())
        .map(|z| {
            let spec = k.offset_diagonal(z).forward();
            spec.coeffs()
                .iter()
                .zip(sym)
                .map(|(c, w)| c.norm_sqr() * w * w)
                .sum()
        })
        .collect()
}

/// `z -> || <grad_x>^s K(t, x, x + z) ||_{L^2(dt dx)}` over the sampled window,
/// time integral by the trapezoid rule.
pub fn collapsing_profile(
    times: &[f64],
    kernels: &[&Kernel],
    s: f64,
    homogeneous: bool,
) -> Result<Vec<f64>> {
    let first = kernels
        .first()
        .ok_or_else(|| Error::Trajectory("no frames to integrate".into()))?;
    if times.len() != kernels.len() {
        return Err(Error::Trajectory(format!(
            "{} times for {} frames",
            times.len(),
            kernels.len()
        )));
    }
    let grid = *first.grid();
    let sym = sobolev_symbol(&grid, s, homogeneous)?;
    let mut acc = vec![0.0; grid.len()];
    for (k, w) in kernels.iter().zip(trapezoid_weights(times)) {
        grid.ensure_same(k.grid())?;
        if w == 0.0 {
            continue;
        }
        for (a, p) in acc.iter_mut().zip(offset_profile_sq(k, &sym)) {
            *a += w * p;
        }
    }
    Ok(acc.into_iter().map(f64::sqrt).collect())
}

/// `sup_z` of [`collapsing_profile`].
pub fn collapsing_sup(times: &[f64], kernels: &[&Kernel], s: f64, homogeneous: bool) -> Result<f64> {
    Ok(collapsing_profile(times, kernels, s, homogeneous)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Which density a collapsing norm is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collapsing {
    /// Pair density with the inhomogeneous weight.
    Pair,
    /// One-body density with the homogeneous weight; its zero mode is not controlled.
    Density,
}

pub fn collapsing_norm(traj: &Trajectory, s: f64, variant: Collapsing) -> Result<f64> {
    let times = traj.times();
    let (kernels, homogeneous): (Vec<&Kernel>, bool) = match variant {
        Collapsing::Pair => (traj.frames.iter().map(|f| &f.lambda).collect(), false),
        Collapsing::Density => (traj.frames.iter().map(|f| &f.gamma).collect(), true),
    };
    collapsing_sup(&times, &kernels, s, homogeneous)
}

/// Parameters a report was evaluated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    /// Weight exponent (`1/2 + epsilon` for the composite norms).
    pub exponent: f64,
    pub z_offsets: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub frames: usize,
}

/// Named non-negative functionals of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub values: BTreeMap<String, f64>,
    pub params: NormParams,
}

impl NormReport {
    fn new(params: NormParams) -> Self {
        Self {
            values: BTreeMap::new(),
            params,
        }
    }

    fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// All values finite and non-negative.
    pub fn is_valid(&self) -> bool {
        self.values.values().all(|v| v.is_finite() && *v >= 0.0)
    }
}

fn params_of(traj: &Trajectory, exponent: f64) -> Result<NormParams> {
    let first = traj
        .frames
        .first()
        .ok_or_else(|| Error::Trajectory("empty trajectory".into()))?;
    Ok(NormParams {
        exponent,
        z_offsets: first.grid().len(),
        t_start: first.t,
        t_end: traj.final_state().t,
        frames: traj.frames.len(),
    })
}

/// The three composite norms of a run, with their pieces:
///
/// * `n_lambda` = `sup_z ||<grad>^a Lambda(t, x+z, x)||_{L^2 L^2}` + `max_t ||<grad_x>^a <grad_y>^a Lambda||_{L^2}`
/// * `n_gamma_dot` = the same with homogeneous weights `|grad|^a` and `|grad|^{1/2}` on the diagonal pieces
/// * `n_phi` = `max_t ||<grad>^a phi||_{L^2}` + `||<grad>^a phi||_{L^2_t L^6_x}`
///
/// where `a = 1/2 + epsilon`.
pub fn nt_norms(traj: &Trajectory, epsilon: f64) -> Result<NormReport> {
    let a = 0.5 + epsilon;
    let mut report = NormReport::new(params_of(traj, a)?);
    let times = traj.times();
    let lambdas: Vec<&Kernel> = traj.frames.iter().map(|f| &f.lambda).collect();
    let gammas: Vec<&Kernel> = traj.frames.iter().map(|f| &f.gamma).collect();

    let lambda_diag = collapsing_sup(&times, &lambdas, a, false)?;
    let gamma_diag = collapsing_sup(&times, &gammas, a, true)?;
    let gamma_half = collapsing_sup(&times, &gammas, 0.5, true)?;

    let mut lambda_energy: f64 = 0.0;
    let mut gamma_energy: f64 = 0.0;
    let mut phi_energy: f64 = 0.0;
    let mut phi_l6_sq = Vec::with_capacity(times.len());
    for f in &traj.frames {
        lambda_energy = lambda_energy.max(weight_kernel(&f.lambda, a, false, Axes::Both)?.norm_l2());
        gamma_energy = gamma_energy.max(weight_kernel(&f.gamma, a, false, Axes::Both)?.norm_l2());
        let wp = weight_field(&f.phi, a, false)?;
        phi_energy = phi_energy.max(wp.norm_l2());
        phi_l6_sq.push(wp.norm_lp(6.0).powi(2));
    }
    let phi_strichartz = trapezoid_weights(&times)
        .iter()
        .zip(&phi_l6_sq)
        .map(|(w, v)| w * v)
        .sum::<f64>()
        .sqrt();

    report.set("lambda_collapsing", lambda_diag);
    report.set("lambda_energy", lambda_energy);
    report.set("n_lambda", lambda_diag + lambda_energy);
    report.set("gamma_collapsing", gamma_diag);
    report.set("gamma_collapsing_half", gamma_half);
    report.set("gamma_energy", gamma_energy);
    report.set("n_gamma_dot", gamma_diag + gamma_half + gamma_energy);
    report.set("phi_energy", phi_energy);
    report.set("phi_strichartz", phi_strichartz);
    report.set("n_phi", phi_energy + phi_strichartz);
    Ok(report)
}

/// Sizes of the pair kernels recovered along a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairNorms {
    pub times: Vec<f64>,
    /// `||sh(2k)||_{L^2}`
    pub sh2k_l2: Vec<f64>,
    /// `sup_x ||sh(2k)(x, .)||_{L^2}`
    pub sh2k_sup_row: Vec<f64>,
    /// `||sh(k)||_{L^2}`
    pub shk_l2: Vec<f64>,
    /// `||ch(k) - delta||_{L^2}`
    pub p_l2: Vec<f64>,
}

impl PairNorms {
    /// Time maxima of each series.
    pub fn summary(&self) -> NormReport {
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        let mut r = NormReport::new(NormParams {
            exponent: 0.0,
            z_offsets: 0,
            t_start: self.times.first().copied().unwrap_or(0.0),
            t_end: self.times.last().copied().unwrap_or(0.0),
            frames: self.times.len(),
        });
        r.set("sh2k_l2", max(&self.sh2k_l2));
        r.set("sh2k_sup_row", max(&self.sh2k_sup_row));
        r.set("shk_l2", max(&self.shk_l2));
        r.set("p_l2", max(&self.p_l2));
        r
    }
}

pub fn pair_norm_report(traj: &Trajectory, particles: f64) -> Result<PairNorms> {
    let mut out = PairNorms {
        times: Vec::new(),
        sh2k_l2: Vec::new(),
        sh2k_sup_row: Vec::new(),
        shk_l2: Vec::new(),
        p_l2: Vec::new(),
    };
    for (i, f) in traj.frames.iter().enumerate() {
        let frame_err = |e: Error| Error::Trajectory(format!("frame {i} (t = {}): {e}", f.t));
        let (psi, _) = recover_pair(&f.lambda, &f.gamma, &f.phi, particles).map_err(frame_err)?;
        let hp = hyperbolic_from_pair(&psi).map_err(frame_err)?;
        out.times.push(f.t);
        out.sh2k_l2.push(hp.s2.norm_l2());
        out.sh2k_sup_row.push(hp.s2.sup_row_norm());
        out.shk_l2.push(hp.u.norm_l2());
        out.p_l2.push(hp.p.norm_l2());
    }
    Ok(out)
}

/// Contracted higher marginals entering the low hierarchy equations, written
/// through the quasi-free data `(phi, Lambda, Gamma)` that generate them.
#[derive(Debug, Clone)]
pub struct ContractedMarginals {
    /// `int v(x1 - x2) L12(x2; x1, x2) dx2`
    pub one_two: Field,
    /// `int v(x1 - x2) L22(x1, x2; y1, x2) dx2 - int v(y1 - y2) L22(x1, y2; y1, y2) dy2`
    pub two_two: Kernel,
    /// `int v(x1 - y) L13(y; x1, x2, y) dy + int v(x2 - y) L13(y; x1, x2, y) dy`
    pub one_three: Kernel,
}

fn compose(a: &Kernel, b: &Kernel) -> Result<Kernel> {
    a.compose(b)
}

pub fn contracted_marginals(
    vn: &Field,
    phi: &Field,
    lambda: &Kernel,
    gamma: &Kernel,
) -> Result<ContractedMarginals> {
    let rho = gamma.trace_density();
    let v_rho = convolve(vn, &rho)?;
    let v_phi2 = convolve(vn, &phi.abs_sq())?;
    let v_lambda = diag_multiply(vn, lambda)?;
    let v_gamma = diag_multiply(vn, gamma)?;
    let pp = phi.outer(phi);
    let cp = phi.conj().outer(phi);

    let one_two = &(&(&v_gamma.transpose().apply(phi)? + &phi.hadamard(&v_rho))
        + &v_lambda.apply(&phi.conj())?)
        - &(&phi.hadamard(&v_phi2) * 2.0);

    let left = &(&(&compose(&v_lambda.conj(), &lambda.transpose())? + &gamma.scale_rows_cols(Some(&v_rho), None))
        + &compose(&v_gamma, gamma)?)
        - &(&cp.scale_rows_cols(Some(&v_phi2), None) * 2.0);
    let right = &(&(&compose(&lambda.conj(), &v_lambda.transpose())? + &gamma.scale_rows_cols(None, Some(&v_rho)))
        + &compose(gamma, &v_gamma)?)
        - &(&cp.scale_rows_cols(None, Some(&v_phi2)) * 2.0);
    let two_two = &left - &right;

    let first = &(&(&compose(&v_gamma.transpose(), &lambda.transpose())? + &compose(&v_lambda, gamma)?)
        + &lambda.scale_rows_cols(Some(&v_rho), None))
        - &(&pp.scale_rows_cols(Some(&v_phi2), None) * 2.0);
    let second = &(&(&compose(&gamma.transpose(), &v_lambda.transpose())? + &compose(lambda, &v_gamma)?)
        + &lambda.scale_rows_cols(None, Some(&v_rho)))
        - &(&pp.scale_rows_cols(None, Some(&v_phi2)) * 2.0);
    let one_three = &first + &second;

    Ok(ContractedMarginals {
        one_two,
        two_two,
        one_three,
    })
}

/// Quasi-free marginals generated by the frame's condensate and pair kernel.
fn quasi_free_marginals(f: &HfbState) -> Result<(Kernel, Kernel)> {
    let nn = f.particles();
    let (psi, _) = recover_pair(&f.lambda, &f.gamma, &f.phi, nn)?;
    let hp = hyperbolic_from_pair(&psi)?;
    Ok(FluctuationData::from_hyperbolic(&hp).marginals(&f.phi, nn))
}

/// Max-norm residuals `bb1`, `bb2`, `bb3` of the hierarchy equations for
/// `phi`, `Gamma` and `Lambda`, over the interior stored frames. Time
/// derivatives are centred differences of neighbouring frames; the higher
/// marginals come from the quasi-free state of each frame.
pub fn bbgky_residual(traj: &Trajectory) -> Result<NormReport> {
    let frames = &traj.frames;
    if frames.len() < 3 {
        return Err(Error::Trajectory(format!(
            "hierarchy residuals need at least 3 frames, got {}",
            frames.len()
        )));
    }
    let times = traj.times();
    let spacing = times[1] - times[0];
    for w in times.windows(2) {
        if ((w[1] - w[0]) - spacing).abs() > 1e-9 * spacing.abs().max(1e-300) {
            return Err(Error::Trajectory("frames are not equally spaced in time".into()));
        }
    }
    let model = frames[0].model.clone();
    let g = *model.grid();
    let vn = model.vn();
    let nn = model.particles();
    let lap: Vec<C64> = g
        .laplacian_symbol()
        .into_iter()
        .map(|s| C64::new(s, 0.0))
        .collect();
    let lap = Some(lap.as_slice());

    let mut report = NormReport::new(params_of(traj, 0.0)?);
    let (mut r1, mut r2, mut r3): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 1..frames.len() - 1 {
        let (prev, cur, next) = (&frames[i - 1], &frames[i], &frames[i + 1]);
        let inv = -I / (next.t - prev.t);
        let dphi = &(&next.phi - &prev.phi) * inv;
        let dgamma = &(&next.gamma - &prev.gamma) * inv;
        let dlambda = &(&next.lambda - &prev.lambda) * inv;

        let (lq, gq) = quasi_free_marginals(cur)
            .map_err(|e| Error::Trajectory(format!("frame {i} (t = {}): {e}", cur.t)))?;
        let cm = contracted_marginals(vn, &cur.phi, &lq, &gq)?;

        let res1 = &(&dphi - &cur.phi.laplacian()) + &cm.one_two;
        let lx = cur.gamma.apply_multipliers(lap, None);
        let ly = cur.gamma.apply_multipliers(None, lap);
        let res2 = &(&(&dgamma + &lx) - &ly) - &cm.two_two;
        let kin = &cur.lambda.apply_multipliers(lap, None) + &cur.lambda.apply_multipliers(None, lap);
        let singular = &diag_multiply(vn, &cur.lambda)? * (1.0 / nn);
        let res3 = &(&(&dlambda - &kin) + &singular) + &cm.one_three;

        r1 = r1.max(res1.max_abs());
        r2 = r2.max(res2.max_abs());
        r3 = r3.max(res3.max_abs());
    }
    report.set("bb1", r1);
    report.set("bb2", r2);
    report.set("bb3", r3);
    Ok(report)
}
