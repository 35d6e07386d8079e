//! Normalized correlation tensors `N^{-(m+n)/2} <a_y... psi, a_x... psi>`.

use hfbflow::bogoliubov::MAX_TENSOR_ENTRIES;
use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex64 as C64;

use crate::basis::ModeBasis;
use crate::error::{OracleError, Result};
use crate::state::FockVector;

fn check_order(m: usize, n: usize) -> Result<()> {
    if m + n > 4 {
        Err(OracleError::UnsupportedOrder { m, n })
    } else {
        Ok(())
    }
}

/// All `b_{j_1} ... b_{j_r} psi` in row-major multi-index order.
fn lowered(psi: &FockVector, modes: usize, r: usize) -> Vec<FockVector> {
    let mut level = vec![psi.clone()];
    for _ in 0..r {
        level = level
            .iter()
            .flat_map(|v| (0..modes).map(move |j| v.annihilate(j)))
            .collect();
    }
    level
}

/// `T[J, L] = <b_J psi, b_L psi>` with shape `[M; m + n]`.
pub fn mode_tensor(psi: &FockVector, m: usize, n: usize) -> Result<ArrayD<C64>> {
    check_order(m, n)?;
    let modes = psi.basis().modes();
    let left = lowered(psi, modes, m);
    let right = if m == n { left.clone() } else { lowered(psi, modes, n) };
    let mut flat = Array2::<C64>::zeros((left.len(), right.len()));
    for (a, u) in left.iter().enumerate() {
        for (b, w) in right.iter().enumerate() {
            flat[[a, b]] = u.inner(w)?;
        }
    }
    Ok(flat.into_shape_with_order(IxDyn(&vec![modes; m + n])).unwrap())
}

/// Contracts `axis` of `t` (length `M`) with `e[x, j]`, giving length `grid.len()`.
fn expand_axis(t: ArrayD<C64>, axis: usize, e: &Array2<C64>) -> ArrayD<C64> {
    let last = t.ndim() - 1;
    let mut t = t;
    t.swap_axes(axis, last);
    let shape: Vec<usize> = t.shape().to_vec();
    let rows: usize = shape[..last].iter().product();
    let flat = t
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((rows, shape[last]))
        .unwrap();
    let out = flat.dot(&e.t());
    let mut new_shape = shape;
    new_shape[last] = e.nrows();
    let mut out = out.into_shape_with_order(IxDyn(&new_shape)).unwrap();
    out.swap_axes(axis, last);
    out.as_standard_layout().into_owned()
}

/// Grid marginal `L_{m,n}` with layout `[y_1..y_m, x_1..x_n]`.
pub fn marginal(modes: &ModeBasis, psi: &FockVector, m: usize, n: usize, particles: f64) -> Result<ArrayD<C64>> {
    check_order(m, n)?;
    if modes.len() != psi.basis().modes() {
        return Err(OracleError::BasisMismatch);
    }
    let g = modes.grid().len();
    let entries = g.pow((m + n) as u32);
    if entries > MAX_TENSOR_ENTRIES {
        return Err(hfbflow::Error::TensorTooLarge { entries }.into());
    }
    let mut t = mode_tensor(psi, m, n)?;
    let e = Array2::from_shape_fn((g, modes.len()), |(x, j)| modes.function(j).values()[x]);
    let ec = e.mapv(|z| z.conj());
    for axis in 0..m + n {
        t = expand_axis(t, axis, if axis < m { &ec } else { &e });
    }
    let scale = particles.powf(-((m + n) as f64) / 2.0);
    t.map_inplace(|z| *z *= scale);
    Ok(t)
}

/// `L_{1,1}` and `L_{0,2}` as two-index arrays.
pub fn one_body(modes: &ModeBasis, psi: &FockVector, particles: f64) -> Result<(Array2<C64>, Array2<C64>)> {
    let to2 = |a: ArrayD<C64>| a.into_dimensionality::<ndarray::Ix2>().unwrap();
    Ok((
        to2(marginal(modes, psi, 1, 1, particles)?),
        to2(marginal(modes, psi, 0, 2, particles)?),
    ))
}

