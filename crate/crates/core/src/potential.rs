//! The scaled pair interaction `v_N(x) = N^{d beta} v(N^beta x)` on the
//! difference torus, and its two actions: convolution against a field and
//! multiplication of a kernel along `x - y`.

use log::warn;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::grid::{Field, Grid, Kernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `amplitude * exp(-|x|^2 / sigma^2)`
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub profile: Profile,
    pub amplitude: f64,
    pub sigma: f64,
    pub beta: f64,
    pub particles: u32,
}

impl PotentialSpec {
    pub fn gaussian(amplitude: f64, sigma: f64, beta: f64, particles: u32) -> Self {
        Self {
            profile: Profile::Gaussian,
            amplitude,
            sigma,
            beta,
            particles,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "potential amplitude {} must be finite and non-negative",
                self.amplitude
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "potential width {} must be positive",
                self.sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!(
                "scaling exponent {} not in [0, 1]",
                self.beta
            )));
        }
        if self.particles == 0 {
            return Err(Error::InvalidParameter("particle number must be >= 1".into()));
        }
        Ok(())
    }

    /// Unscaled profile at displacement `x`.
    pub fn profile_at(&self, x: &[f64]) -> f64 {
        match self.profile {
            Profile::Gaussian => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                self.amplitude * (-r2 / (self.sigma * self.sigma)).exp()
            }
        }
    }

    /// Continuum integral of the unscaled profile over `R^d`.
    pub fn integral(&self, dim: usize) -> f64 {
        match self.profile {
            Profile::Gaussian => {
                self.amplitude * (std::f64::consts::PI * self.sigma * self.sigma).powf(dim as f64 / 2.0)
            }
        }
    }

    /// `N^beta`, the inverse length scale of `v_N`.
    pub fn dilation(&self) -> f64 {
        (self.particles as f64).powf(self.beta)
    }

    /// Same potential with amplitude multiplied by `eta`.
    pub fn scaled(&self, eta: f64) -> Self {
        Self {
            amplitude: self.amplitude * eta,
            ..*self
        }
    }
}

/// Samples the periodized `v_N` on the grid; index 0 is zero displacement.
pub fn build_vn(spec: &PotentialSpec, grid: &Grid) -> Result<Field> {
    spec.validate()?;
    let dim = grid.dim();
    let length = grid.length();
    let dil = spec.dilation();
    let peak_scale = dil.powi(dim as i32);

    if 6.0 * spec.sigma / dil >= length / 2.0 {
        warn!(
            "effective support {:.3e} of v_N exceeds half the box {:.3e}",
            6.0 * spec.sigma / dil,
            length / 2.0
        );
    }

    const IMAGES: i64 = 2;
    let mut overlap: f64 = 0.0;
    let mut peak: f64 = 0.0;
    let values = (0..grid.len())
        .map(|k| {
            let base = grid.min_image(k);
            let mut central = 0.0;
            let mut total = 0.0;
            let span = (2 * IMAGES + 1).pow(dim as u32);
            for img in 0..span {
                let mut rem = img;
                let mut x = [0.0; 3];
                let mut is_central = true;
                for axis in 0..dim {
                    let shift = (rem % (2 * IMAGES + 1)) as i64 - IMAGES;
                    rem /= 2 * IMAGES + 1;
                    is_central &= shift == 0;
                    x[axis] = dil * (base[axis] + shift as f64 * length);
                }
                let val = peak_scale * spec.profile_at(&x[..dim]);
                if is_central {
                    central = val;
                }
                total += val;
            }
            overlap = overlap.max(total - central);
            peak = peak.max(total);
            C64::new(total, 0.0)
        })
        .collect();
    if peak > 0.0 && overlap > 1e-10 * peak {
        warn!(
            "periodized v_N overlaps its images: relative overlap {:.3e}",
            overlap / peak
        );
    }
    Field::new(*grid, values)
}

/// Periodic convolution `(v * f)(x) = sum_y v(x - y) f(y) h^d`, computed spectrally.
pub fn convolve(vn: &Field, f: &Field) -> Result<Field> {
    let grid = *vn.grid();
    grid.ensure_same(f.grid())?;
    let (n, dim) = (grid.n(), grid.dim());
    let mut a = vn.values().to_vec();
    let mut b = f.values().to_vec();
    fft_nd(&mut a, n, dim, false);
    fft_nd(&mut b, n, dim, false);
    let scale = grid.cell_volume() / grid.len() as f64;
    for (x, y) in b.iter_mut().zip(&a) {
        *x *= y * scale;
    }
    fft_nd(&mut b, n, dim, true);
    Field::new(grid, b.into())
}

/// `v_N(x - y) K(x, y)`; keeps the symmetry tag of `K` since `v_N` is even.
pub fn diag_multiply(vn: &Field, kernel: &Kernel) -> Result<Kernel> {
    kernel.times_difference(vn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Symmetry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn line(n: usize) -> Grid {
        Grid::new(1, n, 2.0 * PI).unwrap()
    }

    #[test]
    fn beta_zero_is_unscaled() {
        let g = line(64);
        let a = build_vn(&PotentialSpec::gaussian(1.0, 0.3, 0.0, 1), &g).unwrap();
        let b = build_vn(&PotentialSpec::gaussian(1.0, 0.3, 0.0, 50), &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn integral_is_scale_invariant() {
        for dim in 1..=2 {
            let g = Grid::new(dim, 64, 2.0 * PI).unwrap();
            for &(np, beta) in &[(1u32, 0.5), (16, 0.5), (64, 1.0 / 3.0)] {
                let spec = PotentialSpec::gaussian(1.0, 0.8, beta, np);
                let v = build_vn(&spec, &g).unwrap();
                let total: f64 = v.values().iter().map(|z| z.re).sum::<f64>() * g.cell_volume();
                let exact = spec.integral(dim);
                assert!((total - exact).abs() < 1e-10 * exact, "{total} vs {exact}");
            }
        }
    }

    #[test]
    fn peak_scales_as_power() {
        let g = line(128);
        let v = build_vn(&PotentialSpec::gaussian(1.0, 0.3, 0.5, 64), &g).unwrap();
        assert!((v.values()[0].re - 8.0).abs() < 1e-12);
        let w = build_vn(&PotentialSpec::gaussian(1.0, 0.3, 0.5, 128), &g).unwrap();
        let ratio = w.max_abs() / v.max_abs();
        assert!((ratio - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(PotentialSpec::gaussian(-1.0, 0.3, 0.5, 4).validate().is_err());
        assert!(PotentialSpec::gaussian(1.0, 0.0, 0.5, 4).validate().is_err());
        assert!(PotentialSpec::gaussian(1.0, 0.3, 1.5, 4).validate().is_err());
        assert!(PotentialSpec::gaussian(1.0, 0.3, 0.5, 0).validate().is_err());
    }

    #[test]
    fn convolution_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = line(32);
        let v = build_vn(&PotentialSpec::gaussian(2.0, 0.4, 0.5, 9), &g).unwrap();
        let f = Field::from_fn(g, |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let fast = convolve(&v, &f).unwrap();
        for i in 0..32 {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..32 {
                s += v.values()[g.diff_index(i, j)] * f.values()[j];
            }
            s *= g.spacing();
            assert!((fast.values()[i] - s).norm() < 1e-10);
        }
        assert!(convolve(&v, &Field::zeros(g)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn narrow_profile_is_approximate_identity() {
        let g = line(256);
        let spec = PotentialSpec::gaussian(1.0, 0.02, 0.0, 1);
        let v = build_vn(&spec, &g).unwrap();
        let f = Field::from_fn(g, |x| C64::new(x[0].cos(), 0.0));
        let out = convolve(&v, &f).unwrap();
        let expect = &f * spec.integral(1);
        assert!((&out - &expect).max_abs() < 1e-3);
    }

    #[test]
    fn diag_multiply_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = line(16);
        let v = build_vn(&PotentialSpec::gaussian(1.0, 0.5, 0.5, 4), &g).unwrap();
        let d = Kernel::delta(g);
        let vd = diag_multiply(&v, &d).unwrap();
        assert!((&vd - &(&d * v.values()[0])).max_abs() < 1e-12);

        let k = Kernel::from_fn(g, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let one = Field::constant(g, C64::new(1.0, 0.0));
        assert_eq!(diag_multiply(&one, &k).unwrap().values(), k.values());
        let vk = diag_multiply(&v, &k).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let expect = k.get(i, j) * v.values()[(i + 16 - j) % 16];
                assert_eq!(vk.get(i, j), expect);
            }
        }
        let s = (&k + &k.transpose()).with_symmetry(Symmetry::Symmetric).unwrap();
        assert_eq!(diag_multiply(&v, &s).unwrap().symmetry(), Symmetry::Symmetric);
    }
}
