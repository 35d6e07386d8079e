//! Functional calculus on symmetric pair kernels.
//!
//! A symmetric kernel `k` is factored as `k = U diag(sigma) U^T` (Takagi) on
//! the operator level, which gives
//!
//! * `sh(k) = U sinh(sigma) U^T` (symmetric),
//! * `ch(k) = U cosh(sigma) U^*` (hermitian, positive),
//!
//! so that `e^{B} a_x e^{-B} = int ch(x,z) a_z + sh(x,z) a*_z dz` and
//! `ch o ch - sh o conj(sh) = delta`. The pair correlation and the normal
//! fluctuation density of the rotated vacuum are then
//! `psi = sh(2k) = 2 ch o sh` and `omega = 2 conj(sh) o sh = conj(ch(2k)) - delta`.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Array3, Array4, ArrayD};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Kernel, Symmetry};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Largest `n^(2d)` for which four-variable marginal tensors are materialized.
pub const MAX_TENSOR_ENTRIES: usize = 1 << 20;

/// Symmetric pair-excitation kernel `k(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairKernel(Kernel);

impl PairKernel {
    pub fn new(k: Kernel) -> Result<Self> {
        Ok(Self(k.with_symmetry(Symmetry::Symmetric)?))
    }

    pub fn zero(grid: Grid) -> Self {
        Self(Kernel::zeros(grid).tagged(Symmetry::Symmetric))
    }

    /// `lambda e(x) e(y)`.
    pub fn rank_one(e: &Field, lambda: C64) -> Self {
        Self((&e.outer(e) * lambda).tagged(Symmetry::Symmetric))
    }

    pub fn kernel(&self) -> &Kernel {
        &self.0
    }

    pub fn into_kernel(self) -> Kernel {
        self.0
    }

    pub fn grid(&self) -> &Grid {
        self.0.grid()
    }
}

/// `A = U diag(sigma) U^T` for the operator matrix of a symmetric kernel.
#[derive(Debug, Clone)]
pub struct TakagiFactors {
    pub unitary: Array2<C64>,
    /// Non-negative, sorted descending.
    pub sigma: Vec<f64>,
}

impl TakagiFactors {
    /// `U f(sigma) U^T`.
    pub fn symmetric_function(&self, f: impl Fn(f64) -> f64) -> Array2<C64> {
        let d: Vec<f64> = self.sigma.iter().map(|&s| f(s)).collect();
        scaled_product(&self.unitary, &d, &self.unitary, false)
    }

    /// `U f(sigma) U^*`.
    pub fn hermitian_function(&self, f: impl Fn(f64) -> f64) -> Array2<C64> {
        let d: Vec<f64> = self.sigma.iter().map(|&s| f(s)).collect();
        scaled_product(&self.unitary, &d, &self.unitary, true)
    }

    pub fn reconstruction_residual(&self, a: &Array2<C64>) -> f64 {
        let rec = self.symmetric_function(|s| s);
        frobenius(&(&rec - a))
    }

    pub fn unitarity_residual(&self) -> f64 {
        let n = self.unitary.nrows();
        let uu = adjoint(&self.unitary).dot(&self.unitary);
        frobenius(&(&uu - &Array2::<C64>::eye(n)))
    }
}

/// `A diag(d) B^T` (or `B^*` when `conjugate`).
fn scaled_product(a: &Array2<C64>, d: &[f64], b: &Array2<C64>, conjugate: bool) -> Array2<C64> {
    let mut ad = a.clone();
    for (mut col, &s) in ad.columns_mut().into_iter().zip(d) {
        col *= C64::new(s, 0.0);
    }
    if conjugate {
        ad.dot(&adjoint(b))
    } else {
        ad.dot(&b.t())
    }
}

fn adjoint(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

fn frobenius(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Takagi factorization of a complex symmetric matrix.
///
/// Works through the real symmetric embedding `[[Re A, Im A], [Im A, -Re A]]`:
/// an eigenvector `(x, y)` with eigenvalue `s` gives `w = x + i y` with
/// `A conj(w) = s w`. Positive eigenvalues supply the columns directly; the
/// null space is completed by complex Gram-Schmidt.
pub fn takagi_matrix(a: &Array2<C64>) -> Result<TakagiFactors> {
    let n = a.nrows();
    let scale = frobenius(a);
    let mut sym_res: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sym_res = sym_res.max((a[[i, j]] - a[[j, i]]).norm());
        }
    }
    if sym_res > 1e-12 * scale {
        return Err(Error::SymmetryViolation {
            tag: Symmetry::Symmetric,
            residual: sym_res,
        });
    }
    if scale == 0.0 {
        return Ok(TakagiFactors {
            unitary: Array2::eye(n),
            sigma: vec![0.0; n],
        });
    }

    let emb = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, ri) = (i / n, i % n);
        let (bj, rj) = (j / n, j % n);
        // Symmetrize explicitly so rounding asymmetry in A does not leak in.
        let z = (a[[ri, rj]] + a[[rj, ri]]) * 0.5;
        match (bi, bj) {
            (0, 0) => z.re,
            (0, 1) | (1, 0) => z.im,
            _ => -z.re,
        }
    });
    let eig = SymmetricEigen::new(emb);
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let spectral = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zero_tol = 1e-11 * spectral;

    let column = |idx: usize| -> Vec<C64> {
        (0..n)
            .map(|r| C64::new(eig.eigenvectors[(r, idx)], eig.eigenvectors[(r + n, idx)]))
            .collect()
    };

    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for &idx in &order {
        if cols.len() == n || eig.eigenvalues[idx] <= zero_tol {
            break;
        }
        // Columns of small, nearly degenerate values come out of the real
        // eigensolver only approximately orthogonal; re-orthogonalize.
        let mut w = column(idx);
        orthogonalize(&mut w, &cols);
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 0.3 {
            continue;
        }
        w.iter_mut().for_each(|z| *z /= norm);
        cols.push(w);
        sigma.push(eig.eigenvalues[idx]);
    }
    // Candidates for the null space: near-zero eigenvectors first, then the
    // standard basis as a fallback.
    let mut candidates: Vec<Vec<C64>> = order
        .iter()
        .filter(|&&idx| eig.eigenvalues[idx].abs() <= zero_tol)
        .map(|&idx| column(idx))
        .collect();
    for r in 0..n {
        let mut e = vec![ZERO; n];
        e[r] = C64::new(1.0, 0.0);
        candidates.push(e);
    }
    for mut w in candidates {
        if cols.len() == n {
            break;
        }
        let start = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        orthogonalize(&mut w, &cols);
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.3 * start {
            w.iter_mut().for_each(|z| *z /= norm);
            cols.push(w);
            sigma.push(0.0);
        }
    }
    if cols.len() != n {
        return Err(Error::TakagiFailed { residual: f64::NAN });
    }
    let unitary = Array2::from_shape_fn((n, n), |(r, c)| cols[c][r]);
    let factors = TakagiFactors { unitary, sigma };
    let residual = factors.reconstruction_residual(a);
    if residual > 1e-10 * scale || factors.unitarity_residual() > 1e-10 * (n as f64).sqrt() {
        return Err(Error::TakagiFailed { residual });
    }
    Ok(factors)
}

/// Two passes of classical Gram-Schmidt against orthonormal `cols`.
fn orthogonalize(w: &mut [C64], cols: &[Vec<C64>]) {
    for _ in 0..2 {
        for c in cols {
            let proj: C64 = c.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
            w.iter_mut().zip(c).for_each(|(x, y)| *x -= proj * y);
        }
    }
}

/// Takagi factorization of the integral operator of a symmetric kernel.
pub fn takagi(k: &Kernel) -> Result<TakagiFactors> {
    takagi_matrix(&k.to_operator())
}

/// `sh(k)`, `ch(k)`, `sh(2k)` and the fluctuation density `omega`.
#[derive(Debug, Clone)]
pub struct HyperbolicPair {
    /// `sh(k)`, symmetric.
    pub u: Kernel,
    /// `ch(k) - delta`, hermitian.
    pub p: Kernel,
    /// `sh(2k) = 2 ch(k) o sh(k)`, symmetric.
    pub s2: Kernel,
    /// `2 conj(sh(k)) o sh(k) = conj(ch(2k)) - delta`, hermitian.
    pub w2: Kernel,
}

impl HyperbolicPair {
    /// `ch(k) = delta + p`.
    pub fn c(&self) -> Kernel {
        &Kernel::delta(*self.u.grid()) + &self.p
    }

    /// `ch(2k) = delta + conj(w2)`.
    pub fn c2(&self) -> Kernel {
        &Kernel::delta(*self.u.grid()) + &self.w2.conj()
    }

    /// `|| ch o ch - sh o conj(sh) - delta ||` in the operator Frobenius norm.
    pub fn symplectic_residual(&self) -> f64 {
        let c = self.c();
        let lhs = &c.compose(&c).unwrap() - &self.u.compose_conj();
        operator_distance(&lhs, &Kernel::delta(*self.u.grid()))
    }

    /// Same identity for the doubled pair.
    pub fn doubled_symplectic_residual(&self) -> f64 {
        pair_symplectic_residual(&self.s2, &self.w2)
    }
}

/// `|| A - B ||` measured on operator matrices (Frobenius).
pub fn operator_distance(a: &Kernel, b: &Kernel) -> f64 {
    frobenius(&(a - b).to_operator())
}

/// Residual of `ch(2k) o ch(2k) - sh(2k) o conj(sh(2k)) = delta` for a pair
/// `(psi, omega)` with `ch(2k) = delta + conj(omega)`.
pub fn pair_symplectic_residual(psi: &Kernel, omega: &Kernel) -> f64 {
    let grid = *psi.grid();
    let c2 = &Kernel::delta(grid) + &omega.conj();
    let lhs = &c2.compose(&c2).unwrap() - &psi.compose(&psi.conj()).unwrap();
    operator_distance(&lhs, &Kernel::delta(grid))
}

pub fn hyperbolic_from_k(k: &PairKernel) -> Result<HyperbolicPair> {
    let grid = *k.grid();
    let f = takagi(k.kernel())?;
    Ok(hyperbolic_from_factors(grid, &f))
}

fn hyperbolic_from_factors(grid: Grid, f: &TakagiFactors) -> HyperbolicPair {
    let w = 1.0 / grid.cell_volume();
    let wrap = |m: Array2<C64>, tag| {
        Kernel::new(grid, m * C64::new(w, 0.0))
            .expect("factor dimensions match the grid")
            .tagged(tag)
    };
    let u = wrap(f.symmetric_function(f64::sinh), Symmetry::Symmetric);
    let p = wrap(f.hermitian_function(|s| s.cosh() - 1.0), Symmetry::Hermitian);
    let s2 = wrap(f.symmetric_function(|s| (2.0 * s).sinh()), Symmetry::Symmetric);
    let w2 = wrap(
        f.hermitian_function(|s| (2.0 * s).cosh() - 1.0).mapv(|z| z.conj()),
        Symmetry::Hermitian,
    );
    HyperbolicPair { u, p, s2, w2 }
}

/// Smallest eigenvalue of the integral operator of a hermitian kernel.
pub fn hermitian_min_eigenvalue(k: &Kernel) -> f64 {
    let m = k.to_operator();
    let n = m.nrows();
    // Real form [[Re, -Im], [Im, Re]] carries each eigenvalue twice.
    let emb = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = (m[[i % n, j % n]] + m[[j % n, i % n]].conj()) * 0.5;
        match (i / n, j / n) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        }
    });
    SymmetricEigen::new(emb).eigenvalues.min()
}

/// `psi = 2N (Lambda - phi phi)`, `omega = 2N (Gamma - conj(phi) phi)`.
pub fn recover_pair(
    lambda: &Kernel,
    gamma: &Kernel,
    phi: &Field,
    particles: f64,
) -> Result<(Kernel, Kernel)> {
    lambda.grid().ensure_same(gamma.grid())?;
    lambda.grid().ensure_same(phi.grid())?;
    let scale = 2.0 * particles;
    let psi = &(lambda - &phi.outer(phi)) * scale;
    let omega = &(gamma - &phi.conj().outer(phi)) * scale;
    let psi_ref = psi.max_abs().max(1.0);
    let res = psi.symmetry_residual();
    if res > 1e-9 * psi_ref {
        return Err(Error::SymmetryViolation {
            tag: Symmetry::Symmetric,
            residual: res,
        });
    }
    let res = omega.hermiticity_residual();
    if res > 1e-9 * omega.max_abs().max(1.0) {
        return Err(Error::SymmetryViolation {
            tag: Symmetry::Hermitian,
            residual: res,
        });
    }
    Ok((psi.tagged(Symmetry::Symmetric), omega.tagged(Symmetry::Hermitian)))
}

/// Inverse of `k -> sh(2k)`: `k = U (asinh(sigma) / 2) U^T` with `psi = U sigma U^T`.
pub fn k_from_pair(psi: &Kernel) -> Result<PairKernel> {
    let grid = *psi.grid();
    let f = takagi(psi)?;
    let m = f.symmetric_function(|s| 0.5 * s.asinh());
    let k = Kernel::from_operator(grid, m)?.tagged(Symmetry::Symmetric);
    Ok(PairKernel(k))
}

/// `(u, ch)` recovered from a pair kernel `psi = sh(2k)`.
pub fn hyperbolic_from_pair(psi: &Kernel) -> Result<HyperbolicPair> {
    let grid = *psi.grid();
    let f = takagi(psi)?;
    let halves = TakagiFactors {
        unitary: f.unitary,
        sigma: f.sigma.iter().map(|s| 0.5 * s.asinh()).collect(),
    };
    Ok(hyperbolic_from_factors(grid, &halves))
}

/// Which higher marginal to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalOrder {
    /// `L_{1,2}(y; x1, x2)`, shape `[y, x1, x2]`.
    OneTwo,
    /// `L_{2,2}(y1, y2; x1, x2)`, shape `[y1, y2, x1, x2]`.
    TwoTwo,
    /// `L_{1,3}(y; x1, x2, x3)`, shape `[y, x1, x2, x3]`.
    OneThree,
}

impl MarginalOrder {
    pub fn from_indices(m: usize, n: usize) -> Result<Self> {
        match (m, n) {
            (1, 2) => Ok(Self::OneTwo),
            (2, 2) => Ok(Self::TwoTwo),
            (1, 3) => Ok(Self::OneThree),
            _ => Err(Error::UnsupportedMarginal { m, n }),
        }
    }
}

/// Fock-space components of `M^* a_{x1} a_{x2} M Omega` (the `f` blocks) and
/// `M^* a*_{x1} a_{x2} M Omega` (the `g` blocks).
pub struct WickBlocks {
    pub f0: Array2<C64>,
    pub f1: Array3<C64>,
    pub f2: Array4<C64>,
    pub g0: Array2<C64>,
    pub g1: Array3<C64>,
    pub g2: Array4<C64>,
}

/// Materializes the Wick blocks; `c` is `ch(k)` as stored in [`HyperbolicPair`].
pub fn wick_blocks(phi: &Field, u: &Kernel, c: &Kernel, particles: f64) -> Result<WickBlocks> {
    let grid = *phi.grid();
    grid.ensure_same(u.grid())?;
    grid.ensure_same(c.grid())?;
    let n = grid.len();
    if n.pow(4) > MAX_TENSOR_ENTRIES {
        return Err(Error::TensorTooLarge { entries: n.pow(4) });
    }
    let sn = particles.sqrt();
    let ph = phi.values();
    let uv = u.values();
    let cv = c.values();
    let f0 = (&phi.outer(phi) * particles).values() + u.compose(&c.conj())?.values();
    let g0 =
        (&phi.conj().outer(phi) * particles).values() + u.conj().compose(u)?.values();
    let f1 = Array3::from_shape_fn((n, n, n), |(y, a, b)| {
        (ph[a] * uv[[y, b]] + ph[b] * uv[[y, a]]) * sn
    });
    let g1 = Array3::from_shape_fn((n, n, n), |(y, a, b)| {
        (ph[a].conj() * uv[[y, b]] + cv[[y, a]] * ph[b]) * sn
    });
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let f2 = Array4::from_shape_fn((n, n, n, n), |(y, z, a, b)| {
        (uv[[y, a]] * uv[[z, b]] + uv[[z, a]] * uv[[y, b]]) * r
    });
    let g2 = Array4::from_shape_fn((n, n, n, n), |(y, z, a, b)| {
        (cv[[y, a]] * uv[[z, b]] + cv[[z, a]] * uv[[y, b]]) * r
    });
    Ok(WickBlocks {
        f0,
        f1,
        f2,
        g0,
        g1,
        g2,
    })
}

/// `int conj(A(z; a)) B(z; b) dz` for blocks flattened to `(z, a)` matrices.
fn contract(a: &Array2<C64>, b: &Array2<C64>, weight: f64) -> Array2<C64> {
    adjoint(a).dot(b) * C64::new(weight, 0.0)
}

fn flatten3(t: &Array3<C64>) -> Array2<C64> {
    let (n0, n1, n2) = t.dim();
    t.to_shape((n0, n1 * n2)).unwrap().into_owned()
}

fn flatten4(t: &Array4<C64>) -> Array2<C64> {
    let (n0, n1, n2, n3) = t.dim();
    t.to_shape((n0 * n1, n2 * n3)).unwrap().into_owned()
}

/// Higher marginals of the displaced quasi-free state, assembled from the Wick blocks.
pub fn closed_form_marginals(
    phi: &Field,
    u: &Kernel,
    c: &Kernel,
    particles: f64,
    which: MarginalOrder,
) -> Result<ArrayD<C64>> {
    let grid = *phi.grid();
    let n = grid.len();
    let h = grid.cell_volume();
    match which {
        MarginalOrder::OneTwo => {
            // L12(y; a, b) = Gamma(y, a) phi(b) + psi(a, b) conj(phi(y)) / 2N + (conj(u) o u)(y, b) phi(a) / N
            let gm = u.conj().compose(u)?;
            let gamma = &phi.conj().outer(phi) + &(&gm * (1.0 / particles));
            let half_psi = u.compose(&c.conj())?;
            let ph = phi.values();
            let (gv, pv, mv) = (gamma.values(), half_psi.values(), gm.values());
            let out = Array3::from_shape_fn((n, n, n), |(y, a, b)| {
                gv[[y, a]] * ph[b] + (pv[[a, b]] * ph[y].conj() + mv[[y, b]] * ph[a]) / particles
            });
            Ok(out.into_dyn())
        }
        MarginalOrder::TwoTwo => {
            let blocks = wick_blocks(phi, u, c, particles)?;
            let f1 = flatten3(&blocks.f1);
            let f2 = flatten4(&blocks.f2);
            let f0 = blocks.f0.to_shape((1, n * n)).unwrap().into_owned();
            let total = contract(&f0, &f0, 1.0) + contract(&f1, &f1, h) + contract(&f2, &f2, h * h);
            let out = total * C64::new(1.0 / (particles * particles), 0.0);
            Ok(out.to_shape((n, n, n, n)).unwrap().into_owned().into_dyn())
        }
        MarginalOrder::OneThree => {
            let blocks = wick_blocks(phi, u, c, particles)?;
            let f0 = blocks.f0.to_shape((1, n * n)).unwrap().into_owned();
            let g0 = blocks.g0.to_shape((1, n * n)).unwrap().into_owned();
            let f1 = flatten3(&blocks.f1);
            let g1 = flatten3(&blocks.g1);
            let f2 = flatten4(&blocks.f2);
            let g2 = flatten4(&blocks.g2);
            // Rows indexed by (a1, y), columns by (a2, a3).
            let total = contract(&g0, &f0, 1.0) + contract(&g1, &f1, h) + contract(&g2, &f2, h * h);
            let total = total * C64::new(1.0 / (particles * particles), 0.0);
            let t = total.to_shape((n, n, n, n)).unwrap().into_owned();
            let out = t.permuted_axes([1, 0, 2, 3]).as_standard_layout().into_owned();
            Ok(out.into_dyn())
        }
    }
}

/// Gaussian data of the fluctuation field `b = a - sqrt(N) phi`:
/// `pair(x, y) = <b_x b_y>` and `normal(x, y) = <b*_x b_y>`.
#[derive(Debug, Clone)]
pub struct FluctuationData {
    pub pair: Kernel,
    pub normal: Kernel,
}

impl FluctuationData {
    pub fn from_hyperbolic(hp: &HyperbolicPair) -> Self {
        let pair = (&hp.s2 * 0.5).tagged(Symmetry::Symmetric);
        let normal = (&hp.w2 * 0.5).tagged(Symmetry::Hermitian);
        Self { pair, normal }
    }

    /// `Lambda = phi phi + pair / N`, `Gamma = conj(phi) phi + normal / N`.
    pub fn marginals(&self, phi: &Field, particles: f64) -> (Kernel, Kernel) {
        let lambda = &phi.outer(phi) + &(&self.pair * (1.0 / particles));
        let gamma = &phi.conj().outer(phi) + &(&self.normal * (1.0 / particles));
        (
            lambda.tagged(Symmetry::Symmetric),
            gamma.tagged(Symmetry::Hermitian),
        )
    }
}
