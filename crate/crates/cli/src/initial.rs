//! Initial data built from the `[initial]` section.

use std::f64::consts::PI;
use std::sync::Arc;

use hfbflow::bogoliubov::PairKernel;
use hfbflow::dynamics::{HfbState, Model};
use hfbflow::{Field, Grid, Kernel};
use hfbflow_fock::ModeBasis;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::config::{InitialSection, PairMode, PhiProfile};
use crate::error::CliError;

/// Condensate and, for quasi-free data, the pair kernel.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub phi: Field,
    pub pair: Option<PairKernel>,
}

/// Periodic displacement `x - c` folded into `[-L/2, L/2)`.
fn folded(x: &[f64], c: &[f64], length: f64) -> Vec<f64> {
    x.iter()
        .zip(c)
        .map(|(a, b)| {
            let d = a - b;
            d - length * (d / length + 0.5).floor()
        })
        .collect()
}

fn condensate(grid: Grid, init: &InitialSection, seed: u64) -> Result<Field, CliError> {
    let d = grid.dim();
    let length = grid.length();
    let mode: Vec<i64> = if init.phi_mode.is_empty() { vec![0; d] } else { init.phi_mode.clone() };
    let raw = match init.phi_profile {
        PhiProfile::Gaussian => {
            let centre = init.phi_center.clone().unwrap_or_else(|| vec![0.5 * length; d]);
            let w = init.phi_width;
            Field::from_fn(grid, |x| {
                let r = folded(x, &centre, length);
                let r2: f64 = r.iter().map(|v| v * v).sum();
                let phase: f64 = mode.iter().zip(x).map(|(m, v)| *m as f64 * v).sum::<f64>() * 2.0 * PI / length;
                C64::from_polar((-r2 / (2.0 * w * w)).exp(), phase)
            })
        }
        PhiProfile::PlaneWave => Field::plane_wave(grid, &mode),
        PhiProfile::RandomSmooth => {
            let modes = ModeBasis::lowest(grid, init.phi_modes)?;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let coeffs: Vec<C64> = (0..modes.len())
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            modes.field_from(&coeffs)
        }
    };
    let norm = raw.norm_l2();
    if !(norm > 0.0) {
        return Err(CliError::Config("initial condensate vanishes on the grid".into()));
    }
    Ok(&raw * (init.phi_norm / norm))
}

fn gaussian_pair(phi: &Field, amplitude: f64, width: f64) -> Result<PairKernel, CliError> {
    let grid = *phi.grid();
    let p = phi.values();
    let k = Kernel::from_fn(grid, |i, j| {
        let z = grid.min_image(grid.diff_index(i, j));
        let r2: f64 = z[..grid.dim()].iter().map(|v| v * v).sum();
        p[i] * p[j] * (amplitude * (-r2 / (2.0 * width * width)).exp())
    });
    Ok(PairKernel::new(k)?)
}

pub fn initial_data(grid: Grid, init: &InitialSection, seed: u64) -> Result<InitialData, CliError> {
    let phi = condensate(grid, init, seed)?;
    let pair = match init.k_mode {
        PairMode::Zero => Some(PairKernel::zero(grid)),
        PairMode::GaussianPair => Some(gaussian_pair(&phi, init.pair_amplitude, init.pair_width)?),
        PairMode::PairCorrected => None,
    };
    Ok(InitialData { phi, pair })
}

/// Coupled-system state for the model.
pub fn initial_state(model: Arc<Model>, init: &InitialSection, data: &InitialData) -> Result<HfbState, CliError> {
    let state = match &data.pair {
        Some(k) => HfbState::from_pair_kernel(model, data.phi.clone(), k)?,
        None => {
            let (a, w) = (init.correction_amplitude, init.correction_width);
            HfbState::pair_corrected(model, data.phi.clone(), move |z| {
                let r2: f64 = z.iter().map(|v| v * v).sum();
                a * (-r2 / (w * w)).exp()
            })?
        }
    };
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(1, 32, 2.0 * PI).unwrap()
    }

    #[test]
    fn condensates_are_normalized() {
        for profile in [PhiProfile::Gaussian, PhiProfile::PlaneWave, PhiProfile::RandomSmooth] {
            let init = InitialSection {
                phi_profile: profile,
                phi_mode: vec![1],
                phi_norm: 0.7,
                ..Default::default()
            };
            let d = initial_data(grid(), &init, 3).unwrap();
            assert!((d.phi.norm_l2() - 0.7).abs() < 1e-13, "{profile:?}");
        }
    }

    #[test]
    fn random_data_depends_only_on_the_seed() {
        let init = InitialSection {
            phi_profile: PhiProfile::RandomSmooth,
            ..Default::default()
        };
        let a = initial_data(grid(), &init, 5).unwrap().phi;
        let b = initial_data(grid(), &init, 5).unwrap().phi;
        let c = initial_data(grid(), &init, 6).unwrap().phi;
        assert_eq!(a.values(), b.values());
        assert!((&a - &c).norm_l2() > 1e-3);
    }

    #[test]
    fn gaussian_pair_is_symmetric_and_bounded() {
        let init = InitialSection {
            k_mode: PairMode::GaussianPair,
            pair_amplitude: 0.3,
            ..Default::default()
        };
        let d = initial_data(grid(), &init, 0).unwrap();
        let k = d.pair.unwrap();
        assert_eq!(k.kernel().symmetry_residual(), 0.0);
        let hs = k.kernel().norm_l2();
        assert!(hs > 0.0 && hs <= 0.3 + 1e-12, "{hs}");
    }

    #[test]
    fn folding_is_periodic() {
        let r = folded(&[0.1, 6.0], &[6.0, 0.1], 2.0 * PI);
        assert!((r[0] - (0.1 - 6.0 + 2.0 * PI)).abs() < 1e-14);
        assert!((r[1] - (6.0 - 0.1 - 2.0 * PI)).abs() < 1e-14);
    }
}
