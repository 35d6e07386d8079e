//! Single-particle modes and the occupation-number basis over them.

use hfbflow::{Field, Grid, Kernel};
use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{OracleError, Result};

/// The `M` plane waves of lowest frequency on the grid torus, ordered by
/// `|xi|^2`, ties broken by preferring positive mode vectors.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    grid: Grid,
    modes: Vec<[i64; 3]>,
    functions: Vec<Field>,
}

impl ModeBasis {
    pub fn lowest(grid: Grid, count: usize) -> Result<Self> {
        if count == 0 || count > grid.len() {
            return Err(OracleError::InvalidParameter(format!(
                "mode count {count} must be in 1..={}",
                grid.len()
            )));
        }
        let mut all: Vec<[i64; 3]> = (0..grid.len()).map(|k| grid.mode_vector(k)).collect();
        all.sort_by_key(|m| {
            let norm: i64 = m.iter().map(|v| v * v).sum();
            let sign_key: Vec<i64> = m.iter().map(|v| -v.signum()).collect();
            (norm, sign_key, m.map(|v| v.abs()))
        });
        all.truncate(count);
        Self::from_modes(grid, all)
    }

    pub fn from_modes(grid: Grid, modes: Vec<[i64; 3]>) -> Result<Self> {
        let functions: Vec<Field> = modes
            .iter()
            .map(|m| Field::plane_wave(grid, &m[..grid.dim()]))
            .collect();
        let b = Self {
            grid,
            modes,
            functions,
        };
        let res = b.orthonormality_residual();
        if res > 1e-12 {
            return Err(OracleError::InvalidParameter(format!(
                "mode functions not orthonormal (residual {res:.3e}); repeated modes?"
            )));
        }
        Ok(b)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[[i64; 3]] {
        &self.modes
    }

    pub fn function(&self, j: usize) -> &Field {
        &self.functions[j]
    }

    /// `max |<e_i, e_j> - delta_ij|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for (i, a) in self.functions.iter().enumerate() {
            for (j, b) in self.functions.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                r = r.max((a.inner(b) - target).norm());
            }
        }
        r
    }

    /// Mode coefficients `<e_j, f>` and the norm of the part of `f` outside the span.
    pub fn project_field(&self, f: &Field) -> Result<(Vec<C64>, f64)> {
        self.grid.ensure_same(f.grid())?;
        let coeffs: Vec<C64> = self.functions.iter().map(|e| e.inner(f)).collect();
        let rest = f - &self.field_from(&coeffs);
        Ok((coeffs, rest.norm_l2()))
    }

    pub fn field_from(&self, coeffs: &[C64]) -> Field {
        let mut out = Field::zeros(self.grid);
        for (e, c) in self.functions.iter().zip(coeffs) {
            out = &out + &(e * *c);
        }
        out
    }

    /// `K_jl = int int conj(e_j(x)) conj(e_l(y)) k(x, y)`, the coefficients of
    /// `k = sum K_jl e_j(x) e_l(y)`, and the Hilbert-Schmidt norm of the remainder.
    pub fn project_kernel(&self, k: &Kernel) -> Result<(Array2<C64>, f64)> {
        self.grid.ensure_same(k.grid())?;
        let m = self.len();
        let h = self.grid.cell_volume();
        let kv = k.values();
        let mut coeffs = Array2::zeros((m, m));
        for j in 0..m {
            let ej = self.functions[j].values();
            // row_j(y) = sum_x conj(e_j(x)) k(x, y) h
            let row: Vec<C64> = (0..self.grid.len())
                .map(|y| {
                    (0..self.grid.len())
                        .map(|x| ej[x].conj() * kv[[x, y]])
                        .sum::<C64>()
                        * h
                })
                .collect();
            for l in 0..m {
                let el = self.functions[l].values();
                coeffs[[j, l]] = row.iter().zip(el).map(|(r, e)| r * e.conj()).sum::<C64>() * h;
            }
        }
        let rest = k - &self.kernel_from(&coeffs);
        Ok((coeffs, rest.norm_l2()))
    }

    /// `sum K_jl e_j(x) e_l(y)`.
    pub fn kernel_from(&self, coeffs: &Array2<C64>) -> Kernel {
        let mut out = Kernel::zeros(self.grid);
        for ((j, l), c) in coeffs.indexed_iter() {
            if *c != C64::new(0.0, 0.0) {
                out = &out + &(&self.functions[j].outer(&self.functions[l]) * *c);
            }
        }
        out
    }
}

/// Occupation vectors `(n_1, ..., n_M)` with `sum n_j <= n_max`, enumerated
/// lexicographically and ranked combinatorially.
#[derive(Debug, Clone)]
pub struct OccupationBasis {
    modes: usize,
    n_max: usize,
    states: Vec<u16>,
    /// `count[r][s]`: number of length-`r` vectors with sum `<= s`.
    count: Vec<Vec<usize>>,
}

/// Largest basis the oracle will build.
pub const MAX_STATES: usize = 4_000_000;

impl OccupationBasis {
    pub fn new(modes: usize, n_max: usize) -> Result<Self> {
        if modes == 0 {
            return Err(OracleError::InvalidParameter("need at least one mode".into()));
        }
        if n_max > u16::MAX as usize {
            return Err(OracleError::InvalidParameter(format!("cutoff {n_max} too large")));
        }
        let mut count = vec![vec![1usize; n_max + 1]; modes + 1];
        for r in 1..=modes {
            for s in 0..=n_max {
                // Choose the first entry v, recurse on the rest with budget s - v.
                count[r][s] = (0..=s).map(|v| count[r - 1][s - v]).sum();
            }
        }
        let total = count[modes][n_max];
        if total > MAX_STATES {
            return Err(OracleError::CutoffOverflow {
                states: total,
                limit: MAX_STATES,
            });
        }
        let mut states = Vec::with_capacity(total * modes);
        let mut cur = vec![0u16; modes];
        enumerate(&mut cur, 0, n_max, &mut states);
        debug_assert_eq!(states.len(), total * modes);
        Ok(Self {
            modes,
            n_max,
            states,
            count,
        })
    }

    /// `n_max` whose Poisson tail beyond it is negligible for the given mean occupation.
    pub fn cutoff_for(mean: f64) -> usize {
        (mean + 8.0 * mean.sqrt() + 10.0).ceil() as usize
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.modes
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, index: usize) -> &[u16] {
        &self.states[index * self.modes..(index + 1) * self.modes]
    }

    pub fn total(&self, index: usize) -> usize {
        self.state(index).iter().map(|&v| v as usize).sum()
    }

    /// Position of an occupation vector, `None` beyond the cutoff.
    pub fn rank(&self, occ: &[u16]) -> Option<usize> {
        let mut remaining = self.n_max;
        let mut index = 0;
        for (p, &v) in occ.iter().enumerate() {
            let v = v as usize;
            if v > remaining {
                return None;
            }
            let rest = self.modes - p - 1;
            for w in 0..v {
                index += self.count[rest][remaining - w];
            }
            remaining -= v;
        }
        Some(index)
    }

    /// Index of the empty state.
    pub fn vacuum(&self) -> usize {
        0
    }
}

fn enumerate(cur: &mut [u16], pos: usize, remaining: usize, out: &mut Vec<u16>) {
    if pos == cur.len() {
        out.extend_from_slice(cur);
        return;
    }
    for v in 0..=remaining {
        cur[pos] = v as u16;
        enumerate(cur, pos + 1, remaining - v, out);
    }
    cur[pos] = 0;
}

/// Applies a word of ladder operators to a basis state, rightmost first as in
/// the written product. Each letter is `(mode, creation)`. Returns the target
/// index and the amplitude, or `None` when the result vanishes or leaves the
/// truncated space.
pub(crate) fn apply_word(
    basis: &OccupationBasis,
    index: usize,
    word: &[(usize, bool)],
    scratch: &mut Vec<u16>,
) -> Option<(usize, f64)> {
    scratch.clear();
    scratch.extend_from_slice(basis.state(index));
    let mut total: usize = scratch.iter().map(|&v| v as usize).sum();
    let mut amp = 1.0;
    for &(mode, create) in word.iter().rev() {
        if create {
            if total == basis.n_max() {
                return None;
            }
            scratch[mode] += 1;
            total += 1;
            amp *= (scratch[mode] as f64).sqrt();
        } else {
            if scratch[mode] == 0 {
                return None;
            }
            amp *= (scratch[mode] as f64).sqrt();
            scratch[mode] -= 1;
            total -= 1;
        }
    }
    basis.rank(scratch).map(|i| (i, amp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn enumeration_and_rank_agree() {
        for (m, n) in [(1, 5), (2, 4), (3, 6), (4, 3)] {
            let b = OccupationBasis::new(m, n).unwrap();
            assert_eq!(b.len(), binom(n + m, m));
            for i in 0..b.len() {
                assert_eq!(b.rank(b.state(i)), Some(i));
                assert!(b.total(i) <= n);
            }
            let over = vec![n as u16 + 1; m];
            assert_eq!(b.rank(&over), None);
        }
        assert_eq!(OccupationBasis::new(3, 4).unwrap().state(0), &[0, 0, 0]);
    }

    #[test]
    fn lowest_modes_are_symmetric() {
        let g = Grid::new(1, 16, 2.0 * PI).unwrap();
        let b = ModeBasis::lowest(g, 3).unwrap();
        assert_eq!(b.modes(), &[[0, 0, 0], [1, 0, 0], [-1, 0, 0]]);
        assert!(b.orthonormality_residual() < 1e-12);
        assert!(ModeBasis::from_modes(g, vec![[1, 0, 0], [1, 0, 0]]).is_err());
    }

    #[test]
    fn projections_roundtrip() {
        let g = Grid::new(1, 16, 2.0 * PI).unwrap();
        let b = ModeBasis::lowest(g, 3).unwrap();
        let coeffs = vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.4), C64::new(0.0, -0.5)];
        let f = b.field_from(&coeffs);
        let (back, rest) = b.project_field(&f).unwrap();
        assert!(rest < 1e-12);
        for (a, c) in back.iter().zip(&coeffs) {
            assert!((a - c).norm() < 1e-12);
        }
        let k = Array2::from_shape_fn((3, 3), |(i, j)| C64::new((i + j) as f64 * 0.1, i as f64 - j as f64));
        let (kb, rest) = b.project_kernel(&b.kernel_from(&k)).unwrap();
        assert!(rest < 1e-12);
        assert!(kb.iter().zip(k.iter()).all(|(a, c)| (a - c).norm() < 1e-12));
        let outside = Field::plane_wave(g, &[3]);
        assert!((b.project_field(&outside).unwrap().1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ladder_words() {
        let b = OccupationBasis::new(2, 3).unwrap();
        let mut s = Vec::new();
        let two_one = b.rank(&[2, 1]).unwrap();
        // a_0 |2,1> = sqrt 2 |1,1>
        let (i, a) = apply_word(&b, two_one, &[(0, false)], &mut s).unwrap();
        assert_eq!(b.state(i), &[1, 1]);
        assert!((a - 2f64.sqrt()).abs() < 1e-15);
        // a*_1 a_0 |2,1> = sqrt 2 sqrt 2 |1,2>
        let (i, a) = apply_word(&b, two_one, &[(1, true), (0, false)], &mut s).unwrap();
        assert_eq!(b.state(i), &[1, 2]);
        assert!((a - 2.0).abs() < 1e-15);
        // a*_0 |2,1> leaves the cutoff.
        assert!(apply_word(&b, two_one, &[(0, true)], &mut s).is_none());
        assert!(apply_word(&b, b.vacuum(), &[(1, false)], &mut s).is_none());
    }
}
