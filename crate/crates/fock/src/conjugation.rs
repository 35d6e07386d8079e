//! Check of `exp(B) a_x exp(-B) = int ch(x, z) a_z + sh(x, z) a*_z` on probe states.

use hfbflow::bogoliubov::{hyperbolic_from_k, PairKernel};
use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::propagate::{pair_rotate, pair_unrotate, PropagationConfig};
use crate::space::FockSpace;
use crate::state::FockVector;

#[derive(Debug, Clone, Copy)]
pub struct ConjugationReport {
    /// Largest `|| (exp(B) a_x exp(-B) - b_x) psi ||` over grid points and probes.
    pub residual: f64,
    pub probes: usize,
    /// Largest tail mass met while rotating probes.
    pub tail_mass: f64,
}

/// Vacuum, every one-particle state, and a fixed superposition over the
/// sectors with at most two particles.
pub fn probe_states(space: &FockSpace) -> Vec<FockVector> {
    let basis = space.basis();
    let m = basis.modes();
    let mut out = vec![space.vacuum()];
    for j in 0..m {
        let mut occ = vec![0u16; m];
        occ[j] = 1;
        if let Ok(v) = FockVector::occupation(basis.clone(), &occ) {
            out.push(v);
        }
    }
    for seed in 1..=1 {
        let mut v = FockVector::zeros(basis.clone());
        for (i, a) in v.amplitudes_mut().iter_mut().enumerate() {
            if basis.total(i) <= 2 {
                let t = (i * 7 + seed * 3) as f64;
                *a = C64::new((1.3 * t).sin(), (0.7 * t + seed as f64).cos());
            }
        }
        let norm = v.norm();
        out.push(v.scaled(C64::new(1.0 / norm, 0.0)));
    }
    out
}

pub fn verify_conjugation(
    space: &FockSpace,
    k: &PairKernel,
    cfg: &PropagationConfig,
) -> Result<ConjugationReport> {
    let modes = space.modes();
    let grid = *modes.grid();
    let m = modes.len();
    let g = grid.len();
    let h = grid.cell_volume();
    let hp = hyperbolic_from_k(k)?;
    let c = hp.c();
    // Mode expansion of x -> int ch(x, z) e_l(z) dz and x -> int sh(x, z) conj(e_l(z)) dz.
    let c_coef = Array2::from_shape_fn((g, m), |(x, l)| {
        let e = modes.function(l).values();
        (0..g).map(|z| c.values()[[x, z]] * e[z]).sum::<C64>() * h
    });
    let s_coef = Array2::from_shape_fn((g, m), |(x, l)| {
        let e = modes.function(l).values();
        (0..g).map(|z| hp.u.values()[[x, z]] * e[z].conj()).sum::<C64>() * h
    });

    let probes = probe_states(space);
    let mut residual: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for psi in &probes {
        let rotated = pair_rotate(space, psi, k, cfg)?;
        tail = tail.max(rotated.tail_mass);
        let mut conjugated = Vec::with_capacity(m);
        for j in 0..m {
            let back = pair_unrotate(space, &rotated.state.annihilate(j), k, cfg)?;
            tail = tail.max(back.tail_mass);
            conjugated.push(back.state);
        }
        let lowered: Vec<FockVector> = (0..m).map(|l| psi.annihilate(l)).collect();
        let raised: Vec<FockVector> = (0..m).map(|l| psi.create(l)).collect();
        for x in 0..g {
            let mut diff = FockVector::zeros(space.basis().clone());
            for j in 0..m {
                diff.add_scaled(modes.function(j).values()[x], &conjugated[j])?;
                diff.add_scaled(-c_coef[[x, j]], &lowered[j])?;
                diff.add_scaled(-s_coef[[x, j]], &raised[j])?;
            }
            residual = residual.max(diff.norm());
        }
    }
    Ok(ConjugationReport {
        residual,
        probes: probes.len(),
        tail_mass: tail,
    })
}
