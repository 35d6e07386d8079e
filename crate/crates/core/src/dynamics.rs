//! Time integration of the coupled `(phi, Lambda, Gamma)` system and of the
//! uncoupled `(phi, sh(2k), conj(ch(2k)) - delta)` system.
//!
//! Every equation has the form `(1/i) du/dt - L u = F(u)` with an exactly
//! solvable linear part `L`:
//!
//! | unknown  | `L`                                  |
//! |----------|--------------------------------------|
//! | `phi`    | `Delta`                              |
//! | `Lambda` | `Delta_x + Delta_y - v_N(x - y) / N` |
//! | `Gamma`  | `Delta_y - Delta_x`                  |
//!
//! The `rhs_*` functions return `F`.

use std::sync::Arc;

use log::debug;
use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{hermitian_min_eigenvalue, hyperbolic_from_k, recover_pair, PairKernel};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Kernel, Symmetry};
use crate::potential::{build_vn, convolve, diag_multiply, PotentialSpec};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Projection onto a finite set of plane waves, applied to both variables of
/// kernels. The set must be closed under `m -> -m` so that it commutes with
/// complex conjugation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMask {
    symbol: Vec<C64>,
}

impl SpectralMask {
    pub fn from_modes(grid: &Grid, modes: &[[i64; 3]]) -> Result<Self> {
        let mut symbol = vec![C64::new(0.0, 0.0); grid.len()];
        for m in modes {
            symbol[grid.mode_flat(m)] = C64::new(1.0, 0.0);
        }
        for m in modes {
            let neg = [-m[0], -m[1], -m[2]];
            if symbol[grid.mode_flat(&neg)].re == 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "mode set is not closed under negation: {m:?}"
                )));
            }
        }
        Ok(Self { symbol })
    }

    pub fn project_field(&self, f: &Field) -> Field {
        f.apply_multiplier(&self.symbol)
    }

    pub fn project_kernel(&self, k: &Kernel) -> Kernel {
        let tag = k.symmetry();
        k.apply_multipliers(Some(&self.symbol), Some(&self.symbol))
            .tagged(tag)
    }
}

/// Everything that stays fixed along a run: grid, interaction and particle number.
#[derive(Debug, Clone)]
pub struct Model {
    grid: Grid,
    potential: PotentialSpec,
    vn: Field,
    laplacian: Vec<C64>,
    mask: Option<SpectralMask>,
}

impl Model {
    pub fn new(grid: Grid, potential: PotentialSpec) -> Result<Arc<Self>> {
        let vn = build_vn(&potential, &grid)?;
        Ok(Arc::new(Self::with_vn(grid, potential, vn)))
    }

    /// Model with a Galerkin projection of every right-hand side onto `mask`.
    pub fn with_mask(grid: Grid, potential: PotentialSpec, mask: SpectralMask) -> Result<Arc<Self>> {
        let vn = build_vn(&potential, &grid)?;
        let mut m = Self::with_vn(grid, potential, vn);
        m.mask = Some(mask);
        Ok(Arc::new(m))
    }

    fn with_vn(grid: Grid, potential: PotentialSpec, vn: Field) -> Self {
        let laplacian = grid
            .laplacian_symbol()
            .into_iter()
            .map(|s| C64::new(s, 0.0))
            .collect();
        Self {
            grid,
            potential,
            vn,
            laplacian,
            mask: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn vn(&self) -> &Field {
        &self.vn
    }

    pub fn particles(&self) -> f64 {
        self.potential.particles as f64
    }

    pub fn mask(&self) -> Option<&SpectralMask> {
        self.mask.as_ref()
    }

    /// Symbol of `e^{i Delta tau}`.
    fn free_symbol(&self, tau: f64) -> Vec<C64> {
        self.laplacian
            .iter()
            .map(|s| C64::from_polar(1.0, s.re * tau))
            .collect()
    }

    fn project_field(&self, f: Field) -> Field {
        match &self.mask {
            Some(m) => m.project_field(&f),
            None => f,
        }
    }

    fn project_kernel(&self, k: Kernel) -> Kernel {
        match &self.mask {
            Some(m) => m.project_kernel(&k),
            None => k,
        }
    }

    /// `Delta_x`, `Delta_y` or `Delta_x + Delta_y` applied to a kernel.
    fn laplace_kernel(&self, k: &Kernel, in_x: bool, in_y: bool) -> Kernel {
        let lap = Some(self.laplacian.as_slice());
        match (in_x, in_y) {
            (true, true) => &k.apply_multipliers(lap, None) + &k.apply_multipliers(None, lap),
            (true, false) => k.apply_multipliers(lap, None),
            (false, true) => k.apply_multipliers(None, lap),
            (false, false) => Kernel::zeros(*k.grid()),
        }
    }
}

/// `K(x, y) (a(x) + sign * b(y))`.
fn weight_sum(k: &Kernel, a: &Field, b: &Field, sign: f64) -> Kernel {
    let (av, bv) = (a.values(), b.values());
    let vals = Array2::from_shape_fn(k.values().dim(), |(i, j)| {
        k.values()[[i, j]] * (av[i] + bv[j] * sign)
    });
    Kernel::new(*k.grid(), vals).expect("same shape")
}

fn compose(a: &Kernel, b: &Kernel) -> Kernel {
    a.compose(b).expect("kernels share the model grid")
}

/// Time-stamped condensate, pair density and one-body density.
#[derive(Debug, Clone)]
pub struct HfbState {
    pub t: f64,
    pub phi: Field,
    pub lambda: Kernel,
    pub gamma: Kernel,
    pub model: Arc<Model>,
}

impl HfbState {
    /// Pure coherent data: `Lambda = phi phi`, `Gamma = conj(phi) phi`.
    pub fn coherent(model: Arc<Model>, phi: Field) -> Result<Self> {
        model.grid.ensure_same(phi.grid())?;
        let lambda = phi.outer(&phi).tagged(Symmetry::Symmetric);
        let gamma = phi.conj().outer(&phi).tagged(Symmetry::Hermitian);
        Ok(Self {
            t: 0.0,
            phi,
            lambda,
            gamma,
            model,
        })
    }

    /// Marginals of `e^{-sqrt(N) A(phi)} e^{-B(k)} Omega`.
    pub fn from_pair_kernel(model: Arc<Model>, phi: Field, k: &PairKernel) -> Result<Self> {
        model.grid.ensure_same(phi.grid())?;
        let hp = hyperbolic_from_k(k)?;
        let nn = model.particles();
        let lambda = (&phi.outer(&phi) + &(&hp.s2 * (0.5 / nn))).with_symmetry(Symmetry::Symmetric)?;
        let gamma =
            (&phi.conj().outer(&phi) + &(&hp.w2 * (0.5 / nn))).with_symmetry(Symmetry::Hermitian)?;
        Ok(Self {
            t: 0.0,
            phi,
            lambda,
            gamma,
            model,
        })
    }

    /// `Lambda = phi(x) phi(y) (1 - N^{beta-1} w(N^beta (x - y)))` with `Gamma = conj(phi) phi`.
    pub fn pair_corrected(
        model: Arc<Model>,
        phi: Field,
        correction: impl Fn(&[f64]) -> f64,
    ) -> Result<Self> {
        let mut s = Self::coherent(model, phi)?;
        let g = s.model.grid;
        let dil = s.model.potential.dilation();
        let amp = dil / s.model.particles();
        let w: Vec<f64> = (0..g.len())
            .map(|k| {
                let x = g.min_image(k);
                let scaled: Vec<f64> = x[..g.dim()].iter().map(|v| v * dil).collect();
                amp * correction(&scaled)
            })
            .collect();
        let vals = Array2::from_shape_fn(s.lambda.values().dim(), |(i, j)| {
            s.lambda.values()[[i, j]] * (1.0 - w[g.diff_index(i, j)])
        });
        s.lambda = Kernel::new(g, vals)?.with_symmetry(Symmetry::Symmetric)?;
        Ok(s)
    }

    pub fn grid(&self) -> &Grid {
        &self.model.grid
    }

    pub fn particles(&self) -> f64 {
        self.model.particles()
    }

    /// `(psi, omega) = (sh(2k), 2 conj(sh k) o sh k)` recovered from the marginals.
    pub fn pair(&self) -> Result<(Kernel, Kernel)> {
        recover_pair(&self.lambda, &self.gamma, &self.phi, self.particles())
    }

    fn parts(&self) -> Parts {
        Parts {
            phi: self.phi.clone(),
            lambda: self.lambda.clone(),
            gamma: self.gamma.clone(),
        }
    }

    fn with_parts(&self, p: Parts, t: f64) -> Self {
        Self {
            t,
            phi: p.phi,
            lambda: p.lambda,
            gamma: p.gamma,
            model: self.model.clone(),
        }
    }
}

#[derive(Clone)]
struct Parts {
    phi: Field,
    lambda: Kernel,
    gamma: Kernel,
}

impl Parts {
    /// `self + s * d`.
    fn axpy(&self, s: C64, d: &Parts) -> Parts {
        Parts {
            phi: &self.phi + &(&d.phi * s),
            lambda: &self.lambda + &(&d.lambda * s),
            gamma: &self.gamma + &(&d.gamma * s),
        }
    }
}

/// Convolutions and potential-weighted kernels shared by the three right sides.
struct Mean {
    v_rho: Field,
    v_phi2: Field,
    v_lambda: Kernel,
    v_gamma: Kernel,
}

fn mean_terms(model: &Model, phi: &Field, lambda: &Kernel, gamma: &Kernel) -> Result<Mean> {
    let vn = &model.vn;
    Ok(Mean {
        v_rho: convolve(vn, &gamma.trace_density())?,
        v_phi2: convolve(vn, &phi.abs_sq())?,
        v_lambda: diag_multiply(vn, lambda)?,
        v_gamma: diag_multiply(vn, gamma)?,
    })
}

fn rhs_phi_parts(model: &Model, p: &Parts, mt: &Mean) -> Result<Field> {
    let phi = &p.phi;
    let a = phi.hadamard(&mt.v_rho);
    let b = mt.v_gamma.transpose().apply(phi)?;
    let c = mt.v_lambda.apply(&phi.conj())?;
    let d = &phi.hadamard(&mt.v_phi2) * 2.0;
    let f = &(&d - &a) - &(&b + &c);
    Ok(model.project_field(f))
}

fn rhs_lambda_parts(model: &Model, p: &Parts, mt: &Mean) -> Result<Kernel> {
    let (lambda, gamma, phi) = (&p.lambda, &p.gamma, &p.phi);
    let a = compose(&mt.v_lambda, gamma);
    let b = compose(lambda, &mt.v_gamma);
    let c = compose(&mt.v_gamma.conj(), lambda);
    let d = compose(&gamma.conj(), &mt.v_lambda);
    let diag = weight_sum(lambda, &mt.v_rho, &mt.v_rho, 1.0);
    let source = &weight_sum(&phi.outer(phi), &mt.v_phi2, &mt.v_phi2, 1.0) * 2.0;
    let f = &(&source - &diag) - &(&(&a + &b) + &(&c + &d));
    let scale = [a.max_abs(), b.max_abs(), diag.max_abs(), source.max_abs()]
        .into_iter()
        .fold(1.0, f64::max);
    let res = f.symmetry_residual();
    if res > 1e-9 * scale {
        return Err(Error::Assembly {
            what: "pair density right side symmetry residual",
            value: res,
        });
    }
    Ok(model.project_kernel(f.tagged(Symmetry::Symmetric)))
}

fn rhs_gamma_parts(model: &Model, p: &Parts, mt: &Mean) -> Result<Kernel> {
    let (lambda, gamma, phi) = (&p.lambda, &p.gamma, &p.phi);
    let a = compose(&mt.v_lambda.conj(), lambda);
    let b = compose(&lambda.conj(), &mt.v_lambda);
    let c = compose(&mt.v_gamma, gamma);
    let d = compose(gamma, &mt.v_gamma);
    let diag = weight_sum(gamma, &mt.v_rho, &mt.v_rho, -1.0);
    let source = &weight_sum(&phi.conj().outer(phi), &mt.v_phi2, &mt.v_phi2, -1.0) * 2.0;
    let mut f = &(&(&a - &b) + &(&c - &d)) + &(&diag - &source);
    let scale = [a.max_abs(), c.max_abs(), diag.max_abs(), source.max_abs()]
        .into_iter()
        .fold(1.0, f64::max);
    let worst = f
        .trace_density()
        .values()
        .iter()
        .fold(0.0f64, |m, z| m.max(z.norm()));
    if worst > 1e-12 * scale {
        return Err(Error::Assembly {
            what: "one-body density right side diagonal",
            value: worst,
        });
    }
    let vals = f.values_mut();
    for i in 0..vals.nrows() {
        vals[[i, i]] = C64::new(0.0, 0.0);
    }
    Ok(model.project_kernel(f))
}

/// Nonlinear right side of the condensate equation.
pub fn rhs_phi(s: &HfbState) -> Result<Field> {
    let p = s.parts();
    let mt = mean_terms(&s.model, &p.phi, &p.lambda, &p.gamma)?;
    rhs_phi_parts(&s.model, &p, &mt)
}

/// Nonlinear right side of the pair-density equation (the kinetic terms and
/// the `v_N(x - y) / N` term belong to the linear part).
pub fn rhs_lambda(s: &HfbState) -> Result<Kernel> {
    let p = s.parts();
    let mt = mean_terms(&s.model, &p.phi, &p.lambda, &p.gamma)?;
    rhs_lambda_parts(&s.model, &p, &mt)
}

/// Right side `R` of `(1/i) dGamma/dt = (Delta_y - Delta_x) Gamma + R`; its
/// diagonal vanishes identically.
pub fn rhs_gamma(s: &HfbState) -> Result<Kernel> {
    let p = s.parts();
    let mt = mean_terms(&s.model, &p.phi, &p.lambda, &p.gamma)?;
    rhs_gamma_parts(&s.model, &p, &mt)
}

fn nonlinear(model: &Model, p: &Parts) -> Result<Parts> {
    let mt = mean_terms(model, &p.phi, &p.lambda, &p.gamma)?;
    Ok(Parts {
        phi: &rhs_phi_parts(model, p, &mt)? * I,
        lambda: &rhs_lambda_parts(model, p, &mt)? * I,
        gamma: &rhs_gamma_parts(model, p, &mt)? * I,
    })
}

/// Full time derivative, linear part included.
fn full_derivative(model: &Model, p: &Parts) -> Result<Parts> {
    let mut d = nonlinear(model, p)?;
    let lin_phi = model.project_field(p.phi.apply_multiplier(&model.laplacian));
    let kin = model.laplace_kernel(&p.lambda, true, true);
    let singular = &diag_multiply(&model.vn, &p.lambda)? * (1.0 / model.particles());
    let lin_lambda = model.project_kernel(&kin - &singular);
    let lin_gamma = model.project_kernel(
        &model.laplace_kernel(&p.gamma, false, true) - &model.laplace_kernel(&p.gamma, true, false),
    );
    d.phi = &d.phi + &(&lin_phi * I);
    d.lambda = &d.lambda + &(&lin_lambda * I);
    d.gamma = &d.gamma + &(&lin_gamma * I);
    Ok(d)
}

/// Exact linear flow over `tau`. `forward` selects the order kinetic-then-phase
/// (first half of a Strang step) or phase-then-kinetic (second half).
fn linear_flow(model: &Model, p: &Parts, tau: f64, forward: bool) -> Parts {
    let fwd = model.free_symbol(tau);
    let back = model.free_symbol(-tau);
    let phase = |k: &Kernel| {
        let g = model.grid;
        let vn = model.vn.values();
        let nn = model.particles();
        let vals = Array2::from_shape_fn(k.values().dim(), |(i, j)| {
            k.values()[[i, j]] * C64::from_polar(1.0, -vn[g.diff_index(i, j)].re * tau / nn)
        });
        Kernel::new(g, vals).expect("same shape")
    };
    let phi = p.phi.apply_multiplier(&fwd);
    let gamma = p.gamma.apply_multipliers(Some(&back), Some(&fwd));
    let lambda = if forward {
        phase(&p.lambda.apply_multipliers(Some(&fwd), Some(&fwd)))
    } else {
        phase(&p.lambda).apply_multipliers(Some(&fwd), Some(&fwd))
    };
    Parts { phi, lambda, gamma }
}

fn rk4<F>(p: &Parts, dt: f64, f: F) -> Result<Parts>
where
    F: Fn(&Parts) -> Result<Parts>,
{
    let h = C64::new(dt, 0.0);
    let k1 = f(p)?;
    let k2 = f(&p.axpy(h * 0.5, &k1))?;
    let k3 = f(&p.axpy(h * 0.5, &k2))?;
    let k4 = f(&p.axpy(h, &k3))?;
    let sum = k1.axpy(C64::new(2.0, 0.0), &k2).axpy(C64::new(2.0, 0.0), &k3).axpy(C64::new(1.0, 0.0), &k4);
    Ok(p.axpy(h / 6.0, &sum))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact linear half steps around a classical RK4 nonlinear step.
    Strang,
    /// Classical RK4 on the full right side.
    Rk4Mol,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Steps between stored frames.
    pub output_every: usize,
    pub monitor_energy: bool,
    pub monitor_symmetry: bool,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_final: f64, scheme: Scheme) -> Self {
        Self {
            dt,
            t_final,
            scheme,
            output_every: 1,
            monitor_energy: true,
            monitor_symmetry: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step {} must be positive", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "final time {} must be non-negative",
                self.t_final
            )));
        }
        if self.t_final > 0.0 && self.dt > self.t_final * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "time step {} exceeds final time {}",
                self.dt, self.t_final
            )));
        }
        if self.output_every == 0 {
            return Err(Error::InvalidParameter("output cadence must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of steps; `dt` is adjusted so they tile `[0, t_final]` exactly.
    pub fn steps(&self) -> usize {
        if self.t_final == 0.0 {
            0
        } else {
            ((self.t_final / self.dt).round() as usize).max(1)
        }
    }

    pub fn effective_dt(&self) -> f64 {
        match self.steps() {
            0 => self.dt,
            n => self.t_final / n as f64,
        }
    }
}

/// Largest symmetry residual tolerated after a step.
pub const STEP_SYMMETRY_LIMIT: f64 = 1e-8;

/// Advances the coupled system by one step of length `dt`.
pub fn step(s: &HfbState, dt: f64, scheme: Scheme) -> Result<HfbState> {
    let model = &*s.model;
    let p = s.parts();
    let next = match scheme {
        Scheme::Strang => {
            if model.mask.is_some() {
                return Err(Error::InvalidParameter(
                    "spectral projection is only supported with rk4-mol".into(),
                ));
            }
            let a = linear_flow(model, &p, 0.5 * dt, true);
            let b = rk4(&a, dt, |q| nonlinear(model, q))?;
            linear_flow(model, &b, 0.5 * dt, false)
        }
        Scheme::Rk4Mol => rk4(&p, dt, |q| full_derivative(model, q))?,
    };
    let t = s.t + dt;
    let out = s.with_parts(next, t);
    let sym = out.lambda.symmetry_residual();
    if !(sym <= STEP_SYMMETRY_LIMIT) {
        return Err(Error::StepRejected {
            t,
            monitor: "pair density symmetry",
            value: sym,
        });
    }
    let herm = out.gamma.hermiticity_residual();
    if !(herm <= STEP_SYMMETRY_LIMIT) {
        return Err(Error::StepRejected {
            t,
            monitor: "one-body density hermiticity",
            value: herm,
        });
    }
    Ok(out)
}

/// `N tr(Gamma)`.
pub fn conserved_number(s: &HfbState) -> f64 {
    s.particles() * s.gamma.trace().re
}

/// Energy `<M Omega, H M Omega>` of the displaced quasi-free state, written
/// through `(phi, Lambda, Gamma)` by Wick's theorem:
///
/// `N tr(Delta Gamma) - (N/2) int v_N(x-y) [|Lambda|^2 + |Gamma|^2 + rho(x) rho(y) - 2 |phi(x)|^2 |phi(y)|^2]`.
pub fn conserved_energy(s: &HfbState) -> f64 {
    let model = &*s.model;
    let nn = model.particles();
    let g = model.grid;
    let w = g.cell_volume();
    let kinetic = model.laplace_kernel(&s.gamma, false, true).trace().re;
    let rho = s.gamma.trace_density();
    let v_rho = convolve(&model.vn, &rho).expect("model grid");
    let phi2 = s.phi.abs_sq();
    let v_phi2 = convolve(&model.vn, &phi2).expect("model grid");
    let vn = model.vn.values();
    let mut pair = 0.0;
    for i in 0..g.len() {
        for j in 0..g.len() {
            let v = vn[g.diff_index(i, j)].re;
            pair += v * (s.lambda.get(i, j).norm_sqr() + s.gamma.get(i, j).norm_sqr());
        }
    }
    pair *= w * w;
    let hartree: f64 = rho
        .values()
        .iter()
        .zip(v_rho.values())
        .map(|(a, b)| (a * b).re)
        .sum::<f64>()
        * w;
    let coherent: f64 = phi2
        .values()
        .iter()
        .zip(v_phi2.values())
        .map(|(a, b)| (a * b).re)
        .sum::<f64>()
        * w;
    nn * kinetic - 0.5 * nn * (pair + hartree - 2.0 * coherent)
}

/// Per-step monitor values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub number: f64,
    pub trace_imag: f64,
    pub energy: Option<f64>,
    pub lambda_symmetry: f64,
    pub gamma_hermiticity: f64,
    /// Evaluated on stored frames only.
    pub gamma_min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub t: f64,
    pub monitor: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub frames: Vec<HfbState>,
    pub monitors: Vec<MonitorRecord>,
    pub abort: Option<AbortRecord>,
    pub dt: f64,
    pub output_every: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &HfbState {
        self.frames.last().expect("trajectory holds the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }
}

fn monitor(s: &HfbState, cfg: &IntegratorConfig, frame: bool) -> MonitorRecord {
    let tr = s.gamma.trace();
    let (ls, gh) = if cfg.monitor_symmetry {
        (s.lambda.symmetry_residual(), s.gamma.hermiticity_residual())
    } else {
        (0.0, 0.0)
    };
    MonitorRecord {
        t: s.t,
        number: s.particles() * tr.re,
        trace_imag: tr.im,
        energy: cfg.monitor_energy.then(|| conserved_energy(s)),
        lambda_symmetry: ls,
        gamma_hermiticity: gh,
        gamma_min_eigenvalue: (frame && cfg.monitor_symmetry)
            .then(|| hermitian_min_eigenvalue(&s.gamma)),
    }
}

/// Tolerances of the state invariants; a run aborts at 100 times these.
const SYMMETRY_TOL: f64 = 1e-10;
const TRACE_IMAG_TOL: f64 = 1e-12;
const EIGEN_FLOOR: f64 = -1e-8;

fn check(rec: &MonitorRecord, n0: f64) -> Option<AbortRecord> {
    let flag = |monitor: &str, value: f64| {
        Some(AbortRecord {
            t: rec.t,
            monitor: monitor.to_string(),
            value,
        })
    };
    if !rec.number.is_finite() || rec.energy.is_some_and(|e| !e.is_finite()) {
        return flag("non-finite state", f64::NAN);
    }
    if rec.lambda_symmetry > 100.0 * SYMMETRY_TOL {
        return flag("lambda_symmetry", rec.lambda_symmetry);
    }
    if rec.gamma_hermiticity > 100.0 * SYMMETRY_TOL {
        return flag("gamma_hermiticity", rec.gamma_hermiticity);
    }
    let scale = (n0 / 1.0).abs().max(1.0);
    if rec.trace_imag.abs() > 100.0 * TRACE_IMAG_TOL * scale {
        return flag("trace_imag", rec.trace_imag);
    }
    if let Some(ev) = rec.gamma_min_eigenvalue {
        if ev < 100.0 * EIGEN_FLOOR {
            return flag("gamma_min_eigenvalue", ev);
        }
    }
    None
}

/// Integrates from `s0` to `cfg.t_final`, storing every `cfg.output_every`-th state.
pub fn evolve(s0: &HfbState, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let steps = cfg.steps();
    let dt = cfg.effective_dt();
    let n0 = s0.gamma.trace().re;
    let mut frames = vec![s0.clone()];
    let mut monitors = vec![monitor(s0, cfg, true)];
    let mut abort = check(&monitors[0], n0);
    let mut cur = s0.clone();
    for k in 1..=steps {
        if abort.is_some() {
            break;
        }
        let next = match step(&cur, dt, cfg.scheme) {
            Ok(s) => s,
            Err(Error::StepRejected { t, monitor, value }) => {
                abort = Some(AbortRecord {
                    t,
                    monitor: monitor.to_string(),
                    value,
                });
                break;
            }
            Err(e) => return Err(e),
        };
        // Pin the clock to the grid of step times.
        cur = HfbState {
            t: k as f64 * dt,
            ..next
        };
        let is_frame = k % cfg.output_every == 0 || k == steps;
        let rec = monitor(&cur, cfg, is_frame);
        abort = check(&rec, n0);
        monitors.push(rec);
        if is_frame || abort.is_some() {
            frames.push(cur.clone());
        }
    }
    if let Some(a) = &abort {
        debug!("run aborted at t = {}: {} = {:e}", a.t, a.monitor, a.value);
    }
    Ok(Trajectory {
        frames,
        monitors,
        abort,
        dt,
        output_every: cfg.output_every,
    })
}

/// State of the older system: condensate, `sh(2k)` and `conj(ch(2k)) - delta`.
#[derive(Debug, Clone)]
pub struct UncoupledState {
    pub t: f64,
    pub phi: Field,
    pub s2: Kernel,
    pub p2bar: Kernel,
    pub model: Arc<Model>,
}

impl UncoupledState {
    pub fn from_pair_kernel(model: Arc<Model>, phi: Field, k: &PairKernel) -> Result<Self> {
        model.grid.ensure_same(phi.grid())?;
        let hp = hyperbolic_from_k(k)?;
        Ok(Self {
            t: 0.0,
            phi,
            s2: hp.s2,
            p2bar: hp.w2.conj(),
            model,
        })
    }
}

struct UParts {
    phi: Field,
    s: Kernel,
    p: Kernel,
}

impl UParts {
    fn axpy(&self, c: C64, d: &UParts) -> UParts {
        UParts {
            phi: &self.phi + &(&d.phi * c),
            s: &self.s + &(&d.s * c),
            p: &self.p + &(&d.p * c),
        }
    }
}

fn rhs_uncoupled_parts(model: &Model, u: &UParts) -> Result<(Field, Kernel, Kernel)> {
    let vn = &model.vn;
    let phi = &u.phi;
    let v_phi2 = convolve(vn, &phi.abs_sq())?;
    // Exchange kernel v(x-y) conj(phi(x)) phi(y) and pair source -v(x-y) phi(x) phi(y).
    let exchange = diag_multiply(vn, &phi.conj().outer(phi))?;
    let m = &diag_multiply(vn, &phi.outer(phi))? * -1.0;
    let ex_t = exchange.transpose();

    let f_phi = &phi.hadamard(&v_phi2) * -1.0;

    let delta = Kernel::delta(model.grid);
    let left = &delta + &u.p;
    let right = &delta + &u.p.conj();
    let f_s = &(&(&compose(&m, &right) + &compose(&left, &m)) - &weight_sum(&u.s, &v_phi2, &v_phi2, 1.0))
        - &(&compose(&ex_t, &u.s) + &compose(&u.s, &exchange));
    let f_p = &(&(&compose(&m, &u.s.conj()) - &compose(&u.s, &m.conj()))
        - &weight_sum(&u.p, &v_phi2, &v_phi2, -1.0))
        - &(&compose(&ex_t, &u.p) - &compose(&u.p, &ex_t));
    Ok((
        model.project_field(f_phi),
        model.project_kernel(f_s),
        model.project_kernel(f_p),
    ))
}

/// Right sides `(F_phi, F_s, F_p)` of the older system, with linear parts
/// `Delta`, `Delta_x + Delta_y` and `Delta_x - Delta_y` respectively.
pub fn rhs_uncoupled(s: &UncoupledState) -> Result<(Field, Kernel, Kernel)> {
    let u = UParts {
        phi: s.phi.clone(),
        s: s.s2.clone(),
        p: s.p2bar.clone(),
    };
    rhs_uncoupled_parts(&s.model, &u)
}

fn rk4_u<F>(p: &UParts, dt: f64, f: F) -> Result<UParts>
where
    F: Fn(&UParts) -> Result<UParts>,
{
    let h = C64::new(dt, 0.0);
    let k1 = f(p)?;
    let k2 = f(&p.axpy(h * 0.5, &k1))?;
    let k3 = f(&p.axpy(h * 0.5, &k2))?;
    let k4 = f(&p.axpy(h, &k3))?;
    let two = C64::new(2.0, 0.0);
    let sum = k1.axpy(two, &k2).axpy(two, &k3).axpy(C64::new(1.0, 0.0), &k4);
    Ok(p.axpy(h / 6.0, &sum))
}

fn uncoupled_linear(model: &Model, u: &UParts, tau: f64) -> UParts {
    let fwd = model.free_symbol(tau);
    let back = model.free_symbol(-tau);
    UParts {
        phi: u.phi.apply_multiplier(&fwd),
        s: u.s.apply_multipliers(Some(&fwd), Some(&fwd)),
        p: u.p.apply_multipliers(Some(&fwd), Some(&back)),
    }
}

fn uncoupled_derivative(model: &Model, u: &UParts, with_linear: bool) -> Result<UParts> {
    let (fp, fs, fq) = rhs_uncoupled_parts(model, u)?;
    let (mut fp, mut fs, mut fq) = (fp, fs, fq);
    if with_linear {
        fp = &fp + &model.project_field(u.phi.apply_multiplier(&model.laplacian));
        fs = &fs + &model.project_kernel(model.laplace_kernel(&u.s, true, true));
        fq = &fq
            + &model.project_kernel(
                &model.laplace_kernel(&u.p, true, false) - &model.laplace_kernel(&u.p, false, true),
            );
    }
    Ok(UParts {
        phi: &fp * I,
        s: &fs * I,
        p: &fq * I,
    })
}

/// One step of the older system, same splitting contract as [`step`].
pub fn step_uncoupled(s: &UncoupledState, dt: f64, scheme: Scheme) -> Result<UncoupledState> {
    let model = &*s.model;
    let u = UParts {
        phi: s.phi.clone(),
        s: s.s2.clone(),
        p: s.p2bar.clone(),
    };
    let next = match scheme {
        Scheme::Strang => {
            if model.mask.is_some() {
                return Err(Error::InvalidParameter(
                    "spectral projection is only supported with rk4-mol".into(),
                ));
            }
            let a = uncoupled_linear(model, &u, 0.5 * dt);
            let b = rk4_u(&a, dt, |q| uncoupled_derivative(model, q, false))?;
            uncoupled_linear(model, &b, 0.5 * dt)
        }
        Scheme::Rk4Mol => rk4_u(&u, dt, |q| uncoupled_derivative(model, q, true))?,
    };
    Ok(UncoupledState {
        t: s.t + dt,
        phi: next.phi,
        s2: next.s,
        p2bar: next.p,
        model: s.model.clone(),
    })
}

/// Final state of the older system after `cfg.steps()` steps.
pub fn evolve_uncoupled(s0: &UncoupledState, cfg: &IntegratorConfig) -> Result<UncoupledState> {
    cfg.validate()?;
    let dt = cfg.effective_dt();
    let mut cur = s0.clone();
    for k in 1..=cfg.steps() {
        cur = step_uncoupled(&cur, dt, cfg.scheme)?;
        cur.t = k as f64 * dt;
    }
    Ok(cur)
}

/// Residuals of the pair equations written for `(psi, omega)` at the centre
/// of three equally spaced states, time derivatives by centred differences.
///
/// Returns `(pair equation, density equation)` max-norm residuals.
pub fn pair_equation_residuals(
    prev: &HfbState,
    cur: &HfbState,
    next: &HfbState,
) -> Result<(f64, f64)> {
    let model = &*cur.model;
    let dt2 = next.t - prev.t;
    let (psi_m, om_m) = prev.pair()?;
    let (psi_p, om_p) = next.pair()?;
    let (psi, omega) = cur.pair()?;
    let dpsi = &(&psi_p - &psi_m) * (1.0 / dt2);
    let dom_bar = &(&om_p.conj() - &om_m.conj()) * (1.0 / dt2);

    let mt = mean_terms(model, &cur.phi, &cur.lambda, &cur.gamma)?;
    // g = -Delta + v * rho + v Gamma
    let g_apply_left = |k: &Kernel| -> Kernel {
        // (g^T o k)(x, y): g^T acts on x.
        let lap = model.laplace_kernel(k, true, false);
        let pot = k.scale_rows_cols(Some(&mt.v_rho), None);
        let ex = compose(&mt.v_gamma.transpose(), k);
        &(&pot + &ex) - &lap
    };
    let g_apply_right = |k: &Kernel| -> Kernel {
        // (k o g)(x, y): g acts on y through its transpose.
        let lap = model.laplace_kernel(k, false, true);
        let pot = k.scale_rows_cols(None, Some(&mt.v_rho));
        let ex = compose(k, &mt.v_gamma);
        &(&pot + &ex) - &lap
    };
    let g_t_right = |k: &Kernel| -> Kernel {
        // (k o g^T)(x, y)
        let lap = model.laplace_kernel(k, false, true);
        let pot = k.scale_rows_cols(None, Some(&mt.v_rho));
        let ex = compose(k, &mt.v_gamma.transpose());
        &(&pot + &ex) - &lap
    };
    let delta = Kernel::delta(model.grid);
    let vl = &mt.v_lambda;
    let r_pair = &(&(&(&dpsi * (-I)) + &g_apply_left(&psi)) + &g_apply_right(&psi))
        + &(&compose(vl, &(&delta + &omega)) + &compose(&(&delta + &omega.conj()), vl));
    let om_bar = omega.conj();
    let r_dens = &(&(&dom_bar * (-I)) + &(&g_apply_left(&om_bar) - &g_t_right(&om_bar)))
        + &(&compose(vl, &psi.conj()) - &compose(&psi, &vl.conj()));
    Ok((r_pair.max_abs(), r_dens.max_abs()))
}
