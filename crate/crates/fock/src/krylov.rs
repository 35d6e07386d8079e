//! Lanczos propagation `v -> exp(i tau K) v` for hermitian sparse `K`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{OracleError, Result};
use crate::operator::SparseOperator;

#[derive(Debug, Clone, Copy)]
pub struct KrylovConfig {
    /// Target error of one full propagation, in the vector norm.
    pub tolerance: f64,
    /// Largest Krylov subspace per substep.
    pub max_dim: usize,
    /// Give up once a substep shrinks below this fraction of `|tau|`.
    pub min_fraction: f64,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_dim: 36,
            min_fraction: 1e-9,
        }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(OracleError::InvalidParameter(format!(
                "Krylov tolerance {} must lie in (0, 1)",
                self.tolerance
            )));
        }
        if self.max_dim < 2 {
            return Err(OracleError::InvalidParameter("Krylov dimension must be >= 2".into()));
        }
        Ok(())
    }
}

/// Statistics of one propagation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KrylovStats {
    pub substeps: usize,
    pub matvecs: usize,
    /// Sum of the accepted a-posteriori error estimates.
    pub error_estimate: f64,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

struct Lanczos {
    basis: Vec<Vec<C64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Norm of the residual after the last vector; zero on breakdown.
    next_beta: f64,
}

fn lanczos(op: &SparseOperator, v: &[C64], beta0: f64, max_dim: usize, matvecs: &mut usize) -> Lanczos {
    let mut basis = vec![v.iter().map(|x| x / beta0).collect::<Vec<_>>()];
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut w = vec![C64::new(0.0, 0.0); v.len()];
    let scale = op.row_sum_bound().max(1.0);
    loop {
        let j = basis.len() - 1;
        op.apply_into(&basis[j], &mut w);
        *matvecs += 1;
        let a = dot(&basis[j], &w).re;
        alpha.push(a);
        // Full reorthogonalization, one classical Gram-Schmidt pass.
        for q in &basis {
            let c = dot(q, &w);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
        let b = norm(&w);
        if b <= 1e-13 * scale || basis.len() == max_dim {
            let next_beta = if b <= 1e-13 * scale { 0.0 } else { b };
            return Lanczos {
                basis,
                alpha,
                beta,
                next_beta,
            };
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
}

/// `exp(i tau T) e_1` for the real symmetric tridiagonal `T`.
fn tridiagonal_phase(alpha: &[f64], beta: &[f64], tau: f64) -> Vec<C64> {
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let q = &eig.eigenvectors;
    (0..m)
        .map(|r| {
            (0..m)
                .map(|k| C64::from_polar(q[(r, k)] * q[(0, k)], tau * eig.eigenvalues[k]))
                .sum()
        })
        .collect()
}

/// `exp(i tau K) v` with adaptive substeps.
pub fn expi(op: &SparseOperator, v: &[C64], tau: f64, cfg: &KrylovConfig) -> Result<(Vec<C64>, KrylovStats)> {
    cfg.validate()?;
    if !op.is_hermitian() {
        return Err(OracleError::InvalidParameter(
            "propagation requires a hermitian-flagged operator".into(),
        ));
    }
    assert_eq!(v.len(), op.dim());
    let mut stats = KrylovStats::default();
    let mut out = v.to_vec();
    if tau == 0.0 {
        return Ok((out, stats));
    }
    let total = tau.abs();
    let mut done = 0.0;
    let mut step = total;
    while done < total {
        step = step.min(total - done);
        let beta0 = norm(&out);
        if beta0 == 0.0 {
            break;
        }
        let lz = lanczos(op, &out, beta0, cfg.max_dim, &mut stats.matvecs);
        loop {
            let s = tridiagonal_phase(&lz.alpha, &lz.beta, tau.signum() * step);
            let estimate = beta0 * lz.next_beta * s.last().unwrap().norm();
            if estimate <= cfg.tolerance * step / total {
                out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
                for (q, c) in lz.basis.iter().zip(&s) {
                    for (o, qi) in out.iter_mut().zip(q) {
                        *o += c * beta0 * qi;
                    }
                }
                done += step;
                stats.substeps += 1;
                stats.error_estimate += estimate;
                // Try a longer step next time.
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < cfg.min_fraction * total {
                return Err(OracleError::Krylov { estimate, step });
            }
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng, density: f64) -> SparseOperator {
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, C64::new(rng.random_range(-3.0..3.0), 0.0)));
            for j in i + 1..n {
                if rng.random::<f64>() < density {
                    let z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    trip.push((i, j, z));
                    trip.push((j, i, z.conj()));
                }
            }
        }
        SparseOperator::from_triplets(n, trip).into_hermitian().unwrap()
    }

    /// `exp(i tau H) v` from a dense eigendecomposition of the real embedding.
    fn dense_expi(h: &Array2<C64>, v: &[C64], tau: f64) -> Vec<C64> {
        let n = h.nrows();
        let mut e = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = h[[i, j]];
                e[(i, j)] = z.re;
                e[(i + n, j + n)] = z.re;
                e[(i, j + n)] = -z.im;
                e[(i + n, j)] = z.im;
            }
        }
        let eig = SymmetricEigen::new(e);
        // On the embedding, i acts as J; exp(i tau H) = cos(tau H) + J sin(tau H).
        let x: Vec<f64> = v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect();
        let q = &eig.eigenvectors;
        let proj: Vec<f64> = (0..2 * n).map(|k| (0..2 * n).map(|r| q[(r, k)] * x[r]).sum()).collect();
        let apply = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
            (0..2 * n)
                .map(|r| (0..2 * n).map(|k| q[(r, k)] * f(eig.eigenvalues[k]) * proj[k]).sum())
                .collect()
        };
        let c = apply(&|l| (tau * l).cos());
        let s = apply(&|l| (tau * l).sin());
        (0..n)
            .map(|i| C64::new(c[i] - s[i + n], c[i + n] + s[i]))
            .collect()
    }

    #[test]
    fn matches_dense_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 60;
        let h = random_hermitian(n, &mut rng, 0.2);
        let v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        for tau in [0.3, -1.7, 5.0] {
            let (got, stats) = expi(&h, &v, tau, &KrylovConfig::default()).unwrap();
            let want = dense_expi(&h.to_dense(), &v, tau);
            let err = got.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9, "tau {tau}: err {err:.3e}, {stats:?}");
            assert!((norm(&got) - norm(&v)).abs() < 1e-10);
        }
    }

    #[test]
    fn small_space_terminates_exactly() {
        let h = SparseOperator::from_triplets(
            2,
            vec![(0, 1, C64::new(1.0, 0.0)), (1, 0, C64::new(1.0, 0.0))],
        )
        .into_hermitian()
        .unwrap();
        let v = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let (got, _) = expi(&h, &v, 0.4, &KrylovConfig::default()).unwrap();
        assert!((got[0] - C64::new(0.4f64.cos(), 0.0)).norm() < 1e-14);
        assert!((got[1] - C64::new(0.0, 0.4f64.sin())).norm() < 1e-14);
        let (same, stats) = expi(&h, &v, 0.0, &KrylovConfig::default()).unwrap();
        assert_eq!(same, v.to_vec());
        assert_eq!(stats.matvecs, 0);
    }

    #[test]
    fn rejects_non_hermitian_and_bad_config() {
        let op = SparseOperator::from_triplets(1, vec![(0, 0, C64::new(1.0, 0.0))]);
        assert!(expi(&op, &[C64::new(1.0, 0.0)], 1.0, &KrylovConfig::default()).is_err());
        let op = op.into_hermitian().unwrap();
        let bad = KrylovConfig {
            tolerance: 0.0,
            ..Default::default()
        };
        assert!(expi(&op, &[C64::new(1.0, 0.0)], 1.0, &bad).is_err());
    }
}
