//! Periodic torus discretization, unitary spectral transforms and the dense
//! kernel algebra (quadrature composition, trace density) used by every
//! other module.
//!
//! Nodes sit at `x_i = i h` for `i = 0..n` along each axis, so the periodic
//! difference `x_i - x_j` is again a node. Integrals are Riemann sums with
//! weight `h^d`; kernels are dense `n^d x n^d` arrays indexed `[x, y]`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft_nd;

/// Tolerance used when validating symmetry tags.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length {length} must be positive")));
        }
        Ok(Self { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Quadrature weight `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Number of nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis integer indices of a flat (row-major) index.
    pub fn unflatten(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for axis in (0..self.dim).rev() {
            idx[axis] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx[..self.dim]
            .iter()
            .fold(0, |acc, &i| acc * self.n + (i % self.n))
    }

    /// Coordinates of node `flat`.
    pub fn coords(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = idx[axis] as f64 * h;
        }
        x
    }

    /// Signed integer mode number for an FFT-ordered index along one axis.
    pub fn signed_mode(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Integer mode vector of a flat frequency index.
    pub fn mode_vector(&self, flat: usize) -> [i64; 3] {
        let idx = self.unflatten(flat);
        let mut m = [0i64; 3];
        for axis in 0..self.dim {
            m[axis] = self.signed_mode(idx[axis]);
        }
        m
    }

    /// Flat frequency index of an integer mode vector (wrapped onto the lattice).
    pub fn mode_flat(&self, mode: &[i64]) -> usize {
        let n = self.n as i64;
        let idx: Vec<usize> = mode[..self.dim]
            .iter()
            .map(|&m| m.rem_euclid(n) as usize)
            .collect();
        self.flatten(&idx)
    }

    /// Wave vector `2 pi m / L` of a flat frequency index.
    pub fn wave_vector(&self, flat: usize) -> [f64; 3] {
        let m = self.mode_vector(flat);
        let scale = 2.0 * PI / self.length;
        let mut xi = [0.0; 3];
        for axis in 0..self.dim {
            xi[axis] = scale * m[axis] as f64;
        }
        xi
    }

    pub fn wave_number_sq(&self, flat: usize) -> f64 {
        self.wave_vector(flat).iter().map(|k| k * k).sum()
    }

    /// Symbol of the Laplacian, `-|xi|^2`, in FFT order.
    pub fn laplacian_symbol(&self) -> Vec<f64> {
        (0..self.len()).map(|k| -self.wave_number_sq(k)).collect()
    }

    /// Flat index of the node `x_i - x_j` on the torus.
    pub fn diff_index(&self, i: usize, j: usize) -> usize {
        let a = self.unflatten(i);
        let b = self.unflatten(j);
        let mut d = [0usize; 3];
        for axis in 0..self.dim {
            d[axis] = (a[axis] + self.n - b[axis]) % self.n;
        }
        self.flatten(&d)
    }

    /// Flat index of the node `x_i + x_j` on the torus.
    pub fn sum_index(&self, i: usize, j: usize) -> usize {
        let a = self.unflatten(i);
        let b = self.unflatten(j);
        let mut d = [0usize; 3];
        for axis in 0..self.dim {
            d[axis] = (a[axis] + b[axis]) % self.n;
        }
        self.flatten(&d)
    }

    /// Minimum-image displacement of node `flat` from the origin.
    pub fn min_image(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.signed_mode(idx[axis]) as f64 * h;
        }
        x
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn unitary_scale(&self) -> f64 {
        self.cell_volume() / self.length.powf(self.dim as f64 / 2.0)
    }
}

/// Complex-valued function on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Array1<C64>,
}

impl Field {
    pub fn new(grid: Grid, values: Array1<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: Array1::zeros(grid.len()),
        }
    }

    pub fn constant(grid: Grid, value: C64) -> Self {
        Self {
            grid,
            values: Array1::from_elem(grid.len(), value),
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> C64) -> Self {
        let values = (0..grid.len())
            .map(|k| f(&grid.coords(k)[..grid.dim()]))
            .collect();
        Self { grid, values }
    }

    /// Normalized plane wave `L^{-d/2} e^{i xi.x}` for an integer mode vector.
    pub fn plane_wave(grid: Grid, mode: &[i64]) -> Self {
        let scale = 2.0 * PI / grid.length();
        let amp = grid.length().powf(-(grid.dim() as f64) / 2.0);
        Self::from_fn(grid, |x| {
            let phase: f64 = x.iter().zip(mode).map(|(xi, &m)| scale * m as f64 * xi).sum();
            C64::from_polar(amp, phase)
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Array1<C64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array1<C64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array1<C64> {
        self.values
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.mapv(|z| z.conj()),
        }
    }

    /// `<self, other> = sum conj(self) other h^d`.
    pub fn inner(&self, other: &Field) -> C64 {
        let s: C64 = Zip::from(&self.values)
            .and(&other.values)
            .fold(C64::new(0.0, 0.0), |acc, a, b| acc + a.conj() * b);
        s * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn norm_lp(&self, p: f64) -> f64 {
        (self.values.iter().map(|z| z.norm().powf(p)).sum::<f64>() * self.grid.cell_volume())
            .powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.mapv(f),
        }
    }

    /// Pointwise product.
    pub fn hadamard(&self, other: &Field) -> Self {
        Self {
            grid: self.grid,
            values: &self.values * &other.values,
        }
    }

    pub fn abs_sq(&self) -> Self {
        self.map(|z| C64::new(z.norm_sqr(), 0.0))
    }

    /// Unitary transform to coefficients in the orthonormal plane-wave basis.
    pub fn forward(&self) -> Spectrum {
        let mut buf = self.values.to_vec();
        fft_nd(&mut buf, self.grid.n(), self.grid.dim(), false);
        let scale = self.grid.unitary_scale();
        Spectrum {
            grid: self.grid,
            coeffs: buf.into_iter().map(|z| z * scale).collect(),
        }
    }

    /// Applies the Fourier multiplier `symbol` (FFT order).
    pub fn apply_multiplier(&self, symbol: &[C64]) -> Self {
        let n = self.grid.n();
        let dim = self.grid.dim();
        let mut buf = self.values.to_vec();
        fft_nd(&mut buf, n, dim, false);
        let norm = 1.0 / self.grid.len() as f64;
        for (z, s) in buf.iter_mut().zip(symbol) {
            *z *= s * norm;
        }
        fft_nd(&mut buf, n, dim, true);
        Self {
            grid: self.grid,
            values: Array1::from(buf),
        }
    }

    pub fn laplacian(&self) -> Self {
        let sym: Vec<C64> = self
            .grid
            .laplacian_symbol()
            .into_iter()
            .map(|s| C64::new(s, 0.0))
            .collect();
        self.apply_multiplier(&sym)
    }

    /// Translation by a whole number of nodes: `f(x - shift)`.
    pub fn translate(&self, shift: usize) -> Self {
        let g = self.grid;
        let values = (0..g.len())
            .map(|k| self.values[g.diff_index(k, shift)])
            .collect();
        Self { grid: g, values }
    }

    /// `f(x) g(y)` as a kernel.
    pub fn outer(&self, other: &Field) -> Kernel {
        let n = self.grid.len();
        let mut values = Array2::zeros((n, n));
        for (i, a) in self.values.iter().enumerate() {
            for (j, b) in other.values.iter().enumerate() {
                values[[i, j]] = a * b;
            }
        }
        Kernel {
            grid: self.grid,
            values,
            symmetry: Symmetry::None,
        }
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        Field {
            grid: self.grid,
            values: &self.values + &rhs.values,
        }
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        Field {
            grid: self.grid,
            values: &self.values - &rhs.values,
        }
    }
}

impl Mul<C64> for &Field {
    type Output = Field;
    fn mul(self, rhs: C64) -> Field {
        Field {
            grid: self.grid,
            values: &self.values * rhs,
        }
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self * C64::new(rhs, 0.0)
    }
}

/// Coefficients of a field in the orthonormal basis `L^{-d/2} e^{i xi.x}`,
/// stored in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Array1<C64>,
}

impl Spectrum {
    pub fn new(grid: Grid, coeffs: Array1<C64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::InvalidParameter("spectrum length mismatch".into()));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &Array1<C64> {
        &self.coeffs
    }

    pub fn coeff(&self, mode: &[i64]) -> C64 {
        self.coeffs[self.grid.mode_flat(mode)]
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inverse(&self) -> Field {
        let mut buf = self.coeffs.to_vec();
        fft_nd(&mut buf, self.grid.n(), self.grid.dim(), true);
        let scale = 1.0 / self.grid.length().powf(self.grid.dim() as f64 / 2.0);
        Field {
            grid: self.grid,
            values: buf.into_iter().map(|z| z * scale).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    /// `K(x,y) = K(y,x)`
    Symmetric,
    /// `K(x,y) = conj K(y,x)`
    Hermitian,
    None,
}

/// Complex-valued function on grid x grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    grid: Grid,
    values: Array2<C64>,
    symmetry: Symmetry,
}

impl Kernel {
    pub fn new(grid: Grid, values: Array2<C64>) -> Result<Self> {
        let n = grid.len();
        if values.dim() != (n, n) {
            return Err(Error::InvalidParameter(format!(
                "kernel shape {:?}, grid expects ({n}, {n})",
                values.dim()
            )));
        }
        Ok(Self {
            grid,
            values,
            symmetry: Symmetry::None,
        })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: Array2::zeros((n, n)),
            symmetry: Symmetry::None,
        }
    }

    /// Discrete delta `h^{-d}` on the diagonal; the identity for [`Kernel::compose`].
    pub fn delta(grid: Grid) -> Self {
        let n = grid.len();
        let mut values = Array2::zeros((n, n));
        let w = 1.0 / grid.cell_volume();
        for i in 0..n {
            values[[i, i]] = C64::new(w, 0.0);
        }
        Self {
            grid,
            values,
            symmetry: Symmetry::Hermitian,
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: Array2::from_shape_fn((n, n), |(i, j)| f(i, j)),
            symmetry: Symmetry::None,
        }
    }

    /// Builds the kernel of an operator given by its matrix `A` (acting as
    /// `A f`), i.e. divides by the quadrature weight.
    pub fn from_operator(grid: Grid, matrix: Array2<C64>) -> Result<Self> {
        let w = 1.0 / grid.cell_volume();
        Self::new(grid, matrix * C64::new(w, 0.0))
    }

    /// Matrix of the integral operator, `K h^d`.
    pub fn to_operator(&self) -> Array2<C64> {
        &self.values * C64::new(self.grid.cell_volume(), 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<C64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<C64> {
        self.symmetry = Symmetry::None;
        &mut self.values
    }

    pub fn into_values(self) -> Array2<C64> {
        self.values
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.values[[i, j]]
    }

    /// Re-tags the kernel after validating the claimed symmetry.
    pub fn with_symmetry(mut self, tag: Symmetry) -> Result<Self> {
        let residual = match tag {
            Symmetry::Symmetric => self.symmetry_residual(),
            Symmetry::Hermitian => self.hermiticity_residual(),
            Symmetry::None => 0.0,
        };
        if residual > SYMMETRY_TOL * self.max_abs().max(1.0) {
            return Err(Error::SymmetryViolation { tag, residual });
        }
        self.symmetry = tag;
        Ok(self)
    }

    /// Tags without validation; for kernels symmetric by construction.
    pub(crate) fn tagged(mut self, tag: Symmetry) -> Self {
        self.symmetry = tag;
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// `max |K(x,y) - K(y,x)|`.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.grid.len();
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                r = r.max((self.values[[i, j]] - self.values[[j, i]]).norm());
            }
        }
        r
    }

    /// `max |K(x,y) - conj K(y,x)|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.grid.len();
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                r = r.max((self.values[[i, j]] - self.values[[j, i]].conj()).norm());
            }
        }
        r
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.mapv(|z| z.conj()),
            symmetry: self.symmetry,
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.t().to_owned(),
            symmetry: self.symmetry,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            grid: self.grid,
            values: self.values.t().mapv(|z| z.conj()),
            symmetry: self.symmetry,
        }
    }

    /// Quadrature composition `(A o B)(x,y) = sum_z A(x,z) B(z,y) h^d`.
    pub fn compose(&self, other: &Kernel) -> Result<Kernel> {
        self.grid.ensure_same(&other.grid)?;
        let mut values = self.values.dot(&other.values);
        values *= C64::new(self.grid.cell_volume(), 0.0);
        Ok(Kernel {
            grid: self.grid,
            values,
            symmetry: Symmetry::None,
        })
    }

    /// `S o conj(S)`, hermitian whenever `S` is symmetric.
    pub fn compose_conj(&self) -> Kernel {
        let out = self
            .compose(&self.conj())
            .expect("kernel composed with itself");
        if self.symmetry == Symmetry::Symmetric {
            out.tagged(Symmetry::Hermitian)
        } else {
            out
        }
    }

    /// `(K f)(x) = sum_y K(x,y) f(y) h^d`.
    pub fn apply(&self, f: &Field) -> Result<Field> {
        self.grid.ensure_same(f.grid())?;
        let values = self.values.dot(f.values()) * C64::new(self.grid.cell_volume(), 0.0);
        Field::new(self.grid, values)
    }

    /// `x -> K(x,x)`.
    pub fn trace_density(&self) -> Field {
        Field {
            grid: self.grid,
            values: self.values.diag().to_owned(),
        }
    }

    /// `sum_x K(x,x) h^d`.
    pub fn trace(&self) -> C64 {
        self.values.diag().sum() * self.grid.cell_volume()
    }

    /// Hilbert-Schmidt (`L^2(dx dy)`) norm.
    pub fn norm_l2(&self) -> f64 {
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt() * self.grid.cell_volume()
    }

    /// `sup_x ||K(x, .)||_{L^2(dy)}`.
    pub fn sup_row_norm(&self) -> f64 {
        let w = self.grid.cell_volume();
        self.values
            .rows()
            .into_iter()
            .map(|row| (row.iter().map(|z| z.norm_sqr()).sum::<f64>() * w).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: C64) -> Self {
        let symmetry = match self.symmetry {
            Symmetry::Hermitian if s.im != 0.0 => Symmetry::None,
            tag => tag,
        };
        Self {
            grid: self.grid,
            values: &self.values * s,
            symmetry,
        }
    }

    /// Multiplies `K(x,y)` by `a(x) b(y)`.
    pub fn scale_rows_cols(&self, a: Option<&Field>, b: Option<&Field>) -> Self {
        let mut values = self.values.clone();
        if let Some(a) = a {
            for (mut row, s) in values.rows_mut().into_iter().zip(a.values()) {
                row *= *s;
            }
        }
        if let Some(b) = b {
            for mut row in values.rows_mut() {
                Zip::from(&mut row).and(b.values()).for_each(|z, s| *z *= s);
            }
        }
        Self {
            grid: self.grid,
            values,
            symmetry: Symmetry::None,
        }
    }

    /// Entrywise product `K(x,y) f(x - y)`.
    pub fn times_difference(&self, f: &Field) -> Result<Kernel> {
        self.grid.ensure_same(f.grid())?;
        let g = self.grid;
        let fv = f.values();
        let values = Array2::from_shape_fn(self.values.dim(), |(i, j)| {
            self.values[[i, j]] * fv[g.diff_index(i, j)]
        });
        Ok(Kernel {
            grid: g,
            values,
            symmetry: self.symmetry,
        })
    }

    /// Applies Fourier multipliers in the first and/or second variable.
    pub fn apply_multipliers(&self, in_x: Option<&[C64]>, in_y: Option<&[C64]>) -> Self {
        let g = self.grid;
        let (n, dim, len) = (g.n(), g.dim(), g.len());
        let norm = 1.0 / len as f64;
        let mut values = self.values.clone();
        if let Some(sym) = in_y {
            for mut row in values.rows_mut() {
                let mut buf = row.to_vec();
                fft_nd(&mut buf, n, dim, false);
                for (z, s) in buf.iter_mut().zip(sym) {
                    *z *= s * norm;
                }
                fft_nd(&mut buf, n, dim, true);
                row.assign(&Array1::from(buf));
            }
        }
        if let Some(sym) = in_x {
            for mut col in values.columns_mut() {
                let mut buf = col.to_vec();
                fft_nd(&mut buf, n, dim, false);
                for (z, s) in buf.iter_mut().zip(sym) {
                    *z *= s * norm;
                }
                fft_nd(&mut buf, n, dim, true);
                col.assign(&Array1::from(buf));
            }
        }
        Self {
            grid: g,
            values,
            symmetry: Symmetry::None,
        }
    }

    /// Applies a non-separable multiplier `symbol(m, e)` to the joint
    /// transform, `m` the frequency of `x` and `e` that of `y` (FFT order).
    pub fn apply_joint_multiplier(&self, symbol: impl Fn(usize, usize) -> C64) -> Self {
        let g = self.grid;
        let (n, dim, len) = (g.n(), g.dim(), g.len());
        let mut values = self.values.clone();
        for mut row in values.rows_mut() {
            let mut buf = row.to_vec();
            fft_nd(&mut buf, n, dim, false);
            row.assign(&Array1::from(buf));
        }
        for mut col in values.columns_mut() {
            let mut buf = col.to_vec();
            fft_nd(&mut buf, n, dim, false);
            col.assign(&Array1::from(buf));
        }
        let norm = 1.0 / (len * len) as f64;
        for ((m, e), z) in values.indexed_iter_mut() {
            *z *= symbol(m, e) * norm;
        }
        for mut col in values.columns_mut() {
            let mut buf = col.to_vec();
            fft_nd(&mut buf, n, dim, true);
            col.assign(&Array1::from(buf));
        }
        for mut row in values.rows_mut() {
            let mut buf = row.to_vec();
            fft_nd(&mut buf, n, dim, true);
            row.assign(&Array1::from(buf));
        }
        Self {
            grid: g,
            values,
            symmetry: Symmetry::None,
        }
    }

    /// Field `x -> K(x, x + z)` for the node offset `z`.
    pub fn offset_diagonal(&self, z: usize) -> Field {
        let g = self.grid;
        let values = (0..g.len())
            .map(|i| self.values[[i, g.sum_index(i, z)]])
            .collect();
        Field { grid: g, values }
    }

    /// Simultaneous translation of both variables by `shift` nodes.
    pub fn translate(&self, shift: usize) -> Self {
        let g = self.grid;
        let n = g.len();
        let src: Vec<usize> = (0..n).map(|k| g.diff_index(k, shift)).collect();
        Self {
            grid: g,
            values: Array2::from_shape_fn((n, n), |(i, j)| self.values[[src[i], src[j]]]),
            symmetry: self.symmetry,
        }
    }
}

fn combine_tags(a: Symmetry, b: Symmetry) -> Symmetry {
    if a == b {
        a
    } else {
        Symmetry::None
    }
}

impl Add for &Kernel {
    type Output = Kernel;
    fn add(self, rhs: &Kernel) -> Kernel {
        Kernel {
            grid: self.grid,
            values: &self.values + &rhs.values,
            symmetry: combine_tags(self.symmetry, rhs.symmetry),
        }
    }
}

impl Sub for &Kernel {
    type Output = Kernel;
    fn sub(self, rhs: &Kernel) -> Kernel {
        Kernel {
            grid: self.grid,
            values: &self.values - &rhs.values,
            symmetry: combine_tags(self.symmetry, rhs.symmetry),
        }
    }
}

impl Mul<C64> for &Kernel {
    type Output = Kernel;
    fn mul(self, rhs: C64) -> Kernel {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Kernel {
    type Output = Kernel;
    fn mul(self, rhs: f64) -> Kernel {
        self.scale(C64::new(rhs, 0.0))
    }
}
