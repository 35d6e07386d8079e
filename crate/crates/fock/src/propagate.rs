//! State preparation, exact evolution and the Fock-norm comparison.

use hfbflow::bogoliubov::{takagi, PairKernel};
use hfbflow::Field;
use num_complex::Complex64 as C64;

use crate::basis::OccupationBasis;
use crate::error::{OracleError, Result};
use crate::krylov::{expi, KrylovConfig, KrylovStats};
use crate::operator::SparseOperator;
use crate::space::FockSpace;
use crate::state::FockVector;

#[derive(Debug, Clone, Copy)]
pub struct PropagationConfig {
    pub krylov: KrylovConfig,
    /// Largest admissible mass in the top occupation shell.
    pub tail_bound: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            krylov: KrylovConfig::default(),
            tail_bound: 1e-8,
        }
    }
}

/// A propagated vector with its bookkeeping.
#[derive(Debug, Clone)]
pub struct Propagated {
    pub state: FockVector,
    pub tail_mass: f64,
    /// Norm of the part of the input data outside the mode span.
    pub projection_residual: f64,
    /// `| ||out|| - ||in|| |`.
    pub norm_drift: f64,
    pub stats: KrylovStats,
}

fn propagate(
    psi: &FockVector,
    op: &SparseOperator,
    tau: f64,
    projection_residual: f64,
    cfg: &PropagationConfig,
) -> Result<Propagated> {
    if op.dim() != psi.len() {
        return Err(OracleError::BasisMismatch);
    }
    let (amps, stats) = expi(op, psi.amplitudes(), tau, &cfg.krylov)?;
    let state = FockVector::from_amplitudes(psi.basis().clone(), amps)?;
    let tail_mass = state.tail_mass();
    if tail_mass > cfg.tail_bound {
        return Err(OracleError::TailMass {
            mass: tail_mass,
            bound: cfg.tail_bound,
        });
    }
    let norm_drift = (state.norm() - psi.norm()).abs();
    Ok(Propagated {
        state,
        tail_mass,
        projection_residual,
        norm_drift,
        stats,
    })
}

/// Particle-number distribution of `exp(-B(k)) Omega` on `0..len`: a
/// convolution of single-mode squeezed vacua, one per Takagi value of `k`.
pub fn squeezed_number_distribution(k: &PairKernel, len: usize) -> Result<Vec<f64>> {
    let mut dist = vec![0.0; len];
    dist[0] = 1.0;
    for s in takagi(k.kernel())?.sigma {
        if s <= 0.0 {
            continue;
        }
        // P(2n) = tanh(s)^{2n} (2n)! / (4^n (n!)^2) / cosh(s)
        let t2 = s.tanh().powi(2);
        let mut mode = vec![0.0; len];
        let mut p = 1.0 / s.cosh();
        let mut n = 0;
        while 2 * n < len {
            mode[2 * n] = p;
            n += 1;
            p *= t2 * (2 * n - 1) as f64 / (2 * n) as f64;
        }
        let mut next = vec![0.0; len];
        for (i, a) in dist.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in mode.iter().enumerate().take(len - i) {
                next[i + j] += a * b;
            }
        }
        dist = next;
    }
    Ok(dist)
}

/// Smallest cutoff for `exp(-sqrt(N) A(phi)) exp(-B(k)) Omega` such that the
/// mass above it is below `tail`: the pair distribution is shifted by the
/// Poisson allowance of the condensate.
pub fn suggested_cutoff(phi: &Field, k: &PairKernel, particles: f64, tail: f64) -> Result<usize> {
    if !(tail > 0.0 && tail < 1.0) {
        return Err(OracleError::InvalidParameter(format!("tail target {tail} must lie in (0, 1)")));
    }
    let shift = OccupationBasis::cutoff_for(particles * phi.norm_l2().powi(2));
    let len = 4096;
    let dist = squeezed_number_distribution(k, len)?;
    let mut above = (1.0 - dist.iter().sum::<f64>()).max(0.0);
    for n in (0..len).rev() {
        above += dist[n];
        if above >= tail {
            return Ok(shift + n + 1);
        }
    }
    Ok(shift)
}

/// `exp(-sqrt(N) A(phi)) psi`, the Weyl displacement by `sqrt(N) phi`.
pub fn coherent_displace(
    space: &FockSpace,
    psi: &FockVector,
    phi: &Field,
    particles: f64,
    cfg: &PropagationConfig,
) -> Result<Propagated> {
    let (alpha, residual) = space.modes().project_field(phi)?;
    let op = space.displacement_generator(&alpha, particles)?;
    propagate(psi, &op, 1.0, residual, cfg)
}

/// `exp(-B(k)) psi`.
pub fn pair_rotate(
    space: &FockSpace,
    psi: &FockVector,
    k: &PairKernel,
    cfg: &PropagationConfig,
) -> Result<Propagated> {
    let (coeffs, residual) = space.modes().project_kernel(k.kernel())?;
    let op = space.pair_generator(&coeffs)?;
    propagate(psi, &op, 1.0, residual, cfg)
}

/// `exp(-B(k))^{-1} psi = exp(B(k)) psi`.
pub fn pair_unrotate(
    space: &FockSpace,
    psi: &FockVector,
    k: &PairKernel,
    cfg: &PropagationConfig,
) -> Result<Propagated> {
    let (coeffs, residual) = space.modes().project_kernel(k.kernel())?;
    let op = space.pair_generator(&coeffs)?;
    propagate(psi, &op, -1.0, residual, cfg)
}

/// `exp(i t H) psi`.
pub fn evolve_exact(
    psi: &FockVector,
    hamiltonian: &SparseOperator,
    t: f64,
    cfg: &PropagationConfig,
) -> Result<Propagated> {
    propagate(psi, hamiltonian, t, 0.0, cfg)
}

/// `exp(-sqrt(N) A(phi)) exp(-B(k)) Omega`.
pub fn quasi_free_state(
    space: &FockSpace,
    phi: &Field,
    k: &PairKernel,
    particles: f64,
    cfg: &PropagationConfig,
) -> Result<Propagated> {
    let rotated = pair_rotate(space, &space.vacuum(), k, cfg)?;
    let displaced = coherent_displace(space, &rotated.state, phi, particles, cfg)?;
    Ok(Propagated {
        projection_residual: rotated.projection_residual.max(displaced.projection_residual),
        norm_drift: rotated.norm_drift + displaced.norm_drift,
        stats: KrylovStats {
            substeps: rotated.stats.substeps + displaced.stats.substeps,
            matvecs: rotated.stats.matvecs + displaced.stats.matvecs,
            error_estimate: rotated.stats.error_estimate + displaced.stats.error_estimate,
        },
        ..displaced
    })
}

/// Distance up to a global phase between two Fock vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDistance {
    /// `min_theta || exact - e^{i theta} approx ||`, in `[0, sqrt 2]` for unit vectors.
    pub value: f64,
    pub theta: f64,
}

pub fn fock_error(exact: &FockVector, approx: &FockVector) -> Result<PhaseDistance> {
    let overlap = approx.inner(exact)?;
    let sq = exact.norm().powi(2) + approx.norm().powi(2) - 2.0 * overlap.norm();
    Ok(PhaseDistance {
        value: sq.max(0.0).sqrt(),
        theta: if overlap.norm() == 0.0 { 0.0 } else { overlap.arg() },
    })
}

/// `<psi, O psi>` for a sparse operator.
pub fn expectation(op: &SparseOperator, psi: &FockVector) -> Result<C64> {
    if op.dim() != psi.len() {
        return Err(OracleError::BasisMismatch);
    }
    Ok(op.expectation(psi.amplitudes()))
}
