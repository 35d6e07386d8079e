//! The truncated Fock space over a mode basis and its second-quantized operators.

use std::sync::Arc;

use hfbflow::potential::convolve;
use hfbflow::Field;
use ndarray::{Array2, Array4};
use num_complex::Complex64 as C64;

use crate::basis::{apply_word, ModeBasis, OccupationBasis};
use crate::error::{OracleError, Result};
use crate::operator::SparseOperator;
use crate::state::FockVector;

#[derive(Debug, Clone)]
pub struct FockSpace {
    modes: ModeBasis,
    basis: Arc<OccupationBasis>,
}

impl FockSpace {
    pub fn new(modes: ModeBasis, n_max: usize) -> Result<Self> {
        let basis = Arc::new(OccupationBasis::new(modes.len(), n_max)?);
        Ok(Self { modes, basis })
    }

    pub fn modes(&self) -> &ModeBasis {
        &self.modes
    }

    pub fn basis(&self) -> &Arc<OccupationBasis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn vacuum(&self) -> FockVector {
        FockVector::vacuum(self.basis.clone())
    }

    /// Sums `coeff * word` over all basis states; words are applied rightmost first.
    pub fn assemble(&self, terms: &[(C64, Vec<(usize, bool)>)]) -> SparseOperator {
        let mut trip = Vec::new();
        let mut scratch = Vec::with_capacity(self.basis.modes());
        for col in 0..self.basis.len() {
            for (coeff, word) in terms {
                if let Some((row, amp)) = apply_word(&self.basis, col, word, &mut scratch) {
                    trip.push((row, col, coeff * amp));
                }
            }
        }
        SparseOperator::from_triplets(self.basis.len(), trip)
    }

    /// Total particle number `sum b*_j b_j`.
    pub fn number_operator(&self) -> SparseOperator {
        let terms: Vec<_> = (0..self.modes.len())
            .map(|j| (C64::new(1.0, 0.0), vec![(j, true), (j, false)]))
            .collect();
        self.assemble(&terms)
            .into_hermitian()
            .expect("number operator is diagonal")
    }

    /// `H = sum_j (-|xi_j|^2) b*_j b_j - (1/2N) sum V_ijkl b*_i b*_j b_k b_l`.
    pub fn hamiltonian(&self, vn: &Field, particles: f64) -> Result<SparseOperator> {
        if !(particles > 0.0) {
            return Err(OracleError::InvalidParameter(format!(
                "particle number {particles} must be positive"
            )));
        }
        let grid = *self.modes.grid();
        grid.ensure_same(vn.grid())?;
        let m = self.modes.len();
        let mut terms = Vec::new();
        for j in 0..m {
            let xi = grid.wave_number_sq(grid.mode_flat(&self.modes.modes()[j][..grid.dim()]));
            terms.push((C64::new(-xi, 0.0), vec![(j, true), (j, false)]));
        }
        let v = interaction_elements(&self.modes, vn)?;
        let cutoff = 1e-14 * v.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for ((i, j, k, l), val) in v.indexed_iter() {
            if val.norm() > cutoff {
                terms.push((
                    -val / (2.0 * particles),
                    vec![(i, true), (j, true), (k, false), (l, false)],
                ));
            }
        }
        self.assemble(&terms).into_hermitian()
    }

    /// Hermitian `K` with `exp(iK) = exp(sqrt(N) sum (alpha_j b*_j - conj(alpha_j) b_j))`.
    pub fn displacement_generator(&self, alpha: &[C64], particles: f64) -> Result<SparseOperator> {
        if alpha.len() != self.modes.len() {
            return Err(OracleError::BasisMismatch);
        }
        let s = particles.sqrt();
        let mi = C64::new(0.0, -1.0);
        let mut terms = Vec::new();
        for (j, a) in alpha.iter().enumerate() {
            terms.push((mi * a * s, vec![(j, true)]));
            terms.push((-mi * a.conj() * s, vec![(j, false)]));
        }
        self.assemble(&terms).into_hermitian()
    }

    /// Hermitian `K` with `exp(iK) = exp(-B)`, where
    /// `B = (1/2) sum (conj(K_jl) b_j b_l - K_jl b*_j b*_l)`.
    pub fn pair_generator(&self, coeffs: &Array2<C64>) -> Result<SparseOperator> {
        let m = self.modes.len();
        if coeffs.dim() != (m, m) {
            return Err(OracleError::BasisMismatch);
        }
        // -B = (1/2) sum (K b* b* - conj(K) b b); K = -i(-B).
        let mi = C64::new(0.0, -0.5);
        let mut terms = Vec::new();
        for ((j, l), k) in coeffs.indexed_iter() {
            if k.norm() == 0.0 {
                continue;
            }
            terms.push((mi * k, vec![(j, true), (l, true)]));
            terms.push((-mi * k.conj(), vec![(j, false), (l, false)]));
        }
        self.assemble(&terms).into_hermitian()
    }
}

/// `V_ijkl = int int v(x - y) conj(e_i(x)) conj(e_j(y)) e_k(y) e_l(x)` by grid quadrature.
pub fn interaction_elements(modes: &ModeBasis, vn: &Field) -> Result<Array4<C64>> {
    modes.grid().ensure_same(vn.grid())?;
    let m = modes.len();
    let mut out = Array4::zeros((m, m, m, m));
    for j in 0..m {
        for k in 0..m {
            let pair = modes.function(j).conj().hadamard(modes.function(k));
            let smeared = convolve(vn, &pair)?;
            for i in 0..m {
                for l in 0..m {
                    out[[i, j, k, l]] = modes.function(i).inner(&modes.function(l).hadamard(&smeared));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hfbflow::potential::{build_vn, PotentialSpec};
    use hfbflow::Grid;
    use std::f64::consts::PI;

    fn line(n: usize) -> Grid {
        Grid::new(1, n, 2.0 * PI).unwrap()
    }

    #[test]
    fn free_single_mode_is_diagonal() {
        let g = line(16);
        let modes = ModeBasis::from_modes(g, vec![[2, 0, 0]]).unwrap();
        let space = FockSpace::new(modes, 6).unwrap();
        let h = space.hamiltonian(&Field::zeros(g), 4.0).unwrap();
        assert!(h.is_hermitian());
        let d = h.to_dense();
        for i in 0..space.dim() {
            let n = space.basis().total(i) as f64;
            for j in 0..space.dim() {
                let want = if i == j { -4.0 * n } else { 0.0 };
                assert!((d[[i, j]].re - want).abs() < 1e-12 && d[[i, j]].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_particle_sector_is_kinetic() {
        let g = line(32);
        let vn = build_vn(&PotentialSpec::gaussian(2.0, 0.4, 0.5, 4), &g).unwrap();
        let modes = ModeBasis::lowest(g, 5).unwrap();
        let space = FockSpace::new(modes.clone(), 3).unwrap();
        let h = space.hamiltonian(&vn, 4.0).unwrap();
        for j in 0..5 {
            let mut occ = vec![0u16; 5];
            occ[j] = 1;
            let v = FockVector::occupation(space.basis().clone(), &occ).unwrap();
            let hv = h.apply(v.amplitudes());
            let xi: i64 = modes.modes()[j].iter().map(|m| m * m).sum();
            let hv = FockVector::from_amplitudes(space.basis().clone(), hv).unwrap();
            let mut diff = hv;
            diff.add_scaled(C64::new(xi as f64, 0.0), &v).unwrap();
            assert!(diff.norm() < 1e-12, "mode {j}");
        }
    }

    #[test]
    fn two_particle_two_mode_sector_matches_hand_assembly() {
        let g = line(16);
        let particles = 3.0;
        let vn = build_vn(&PotentialSpec::gaussian(1.5, 0.5, 0.0, 3), &g).unwrap();
        let modes = ModeBasis::from_modes(g, vec![[0, 0, 0], [1, 0, 0]]).unwrap();
        let space = FockSpace::new(modes.clone(), 2).unwrap();
        let h = space.hamiltonian(&vn, particles).unwrap();

        // Direct double sums over the grid for V_ijkl.
        let n = g.len();
        let hh = g.cell_volume();
        let vv = |i: usize, j: usize, k: usize, l: usize| -> C64 {
            let (ei, ej, ek, el) = (
                modes.function(i).values(),
                modes.function(j).values(),
                modes.function(k).values(),
                modes.function(l).values(),
            );
            let mut s = C64::new(0.0, 0.0);
            for x in 0..n {
                for y in 0..n {
                    s += vn.values()[g.diff_index(x, y)] * ei[x].conj() * ej[y].conj() * ek[y] * el[x];
                }
            }
            s * hh * hh
        };
        // <s|H|t> on |2,0>, |1,1>, |0,2> from the ladder algebra by hand.
        let states: [[usize; 2]; 3] = [[2, 0], [1, 1], [0, 2]];
        let kinetic = [0.0, -1.0];
        let mut dense = Array2::<C64>::zeros((3, 3));
        for (r, s) in states.iter().enumerate() {
            for (c, t) in states.iter().enumerate() {
                let mut val = C64::new(0.0, 0.0);
                if r == c {
                    val += kinetic[0] * s[0] as f64 + kinetic[1] * s[1] as f64;
                }
                // <s| b*_i b*_j b_k b_l |t>: remove l then k from t, add j then i; compare with s.
                for i in 0..2 {
                    for j in 0..2 {
                        for k in 0..2 {
                            for l in 0..2 {
                                let mut occ = [t[0] as i64, t[1] as i64];
                                let mut amp = 1.0;
                                for (mode, up) in [(l, false), (k, false), (j, true), (i, true)] {
                                    if amp == 0.0 {
                                        break;
                                    }
                                    if up {
                                        occ[mode] += 1;
                                        amp *= (occ[mode] as f64).sqrt();
                                    } else {
                                        amp *= (occ[mode] as f64).sqrt();
                                        occ[mode] -= 1;
                                    }
                                }
                                if occ[0] == s[0] as i64 && occ[1] == s[1] as i64 && amp != 0.0 {
                                    val -= vv(i, j, k, l) * amp / (2.0 * particles);
                                }
                            }
                        }
                    }
                }
                dense[[r, c]] = val;
            }
        }
        let idx: Vec<usize> = states
            .iter()
            .map(|s| space.basis().rank(&[s[0] as u16, s[1] as u16]).unwrap())
            .collect();
        for r in 0..3 {
            for c in 0..3 {
                let got = h.get(idx[r], idx[c]);
                assert!((got - dense[[r, c]]).norm() < 1e-12, "({r},{c}): {got} vs {}", dense[[r, c]]);
            }
        }
        // Block diagonal in particle number.
        for r in 0..space.dim() {
            for c in 0..space.dim() {
                if space.basis().total(r) != space.basis().total(c) {
                    assert_eq!(h.get(r, c), C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn interaction_elements_have_exchange_symmetry() {
        let g = line(16);
        let vn = build_vn(&PotentialSpec::gaussian(1.0, 0.3, 0.5, 8), &g).unwrap();
        let modes = ModeBasis::lowest(g, 3).unwrap();
        let v = interaction_elements(&modes, &vn).unwrap();
        for ((i, j, k, l), z) in v.indexed_iter() {
            assert!((z - v[[j, i, l, k]]).norm() < 1e-12);
            assert!((z.conj() - v[[l, k, j, i]]).norm() < 1e-12);
        }
    }
}
