//! Dense state vectors over a truncated occupation basis.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::basis::{apply_word, OccupationBasis};
use crate::error::{OracleError, Result};

#[derive(Debug, Clone)]
pub struct FockVector {
    basis: Arc<OccupationBasis>,
    amps: Vec<C64>,
}

impl FockVector {
    pub fn zeros(basis: Arc<OccupationBasis>) -> Self {
        let amps = vec![C64::new(0.0, 0.0); basis.len()];
        Self { basis, amps }
    }

    pub fn vacuum(basis: Arc<OccupationBasis>) -> Self {
        let mut v = Self::zeros(basis);
        let i = v.basis.vacuum();
        v.amps[i] = C64::new(1.0, 0.0);
        v
    }

    /// The normalized occupation state `|n_1, ..., n_M>`.
    pub fn occupation(basis: Arc<OccupationBasis>, occ: &[u16]) -> Result<Self> {
        if occ.len() != basis.modes() {
            return Err(OracleError::BasisMismatch);
        }
        let i = basis.rank(occ).ok_or_else(|| {
            OracleError::InvalidParameter(format!("occupation {occ:?} is beyond the cutoff"))
        })?;
        let mut v = Self::zeros(basis);
        v.amps[i] = C64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn from_amplitudes(basis: Arc<OccupationBasis>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != basis.len() {
            return Err(OracleError::BasisMismatch);
        }
        Ok(Self { basis, amps })
    }

    pub fn basis(&self) -> &Arc<OccupationBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn ensure_compatible(&self, other: &FockVector) -> Result<()> {
        let same = Arc::ptr_eq(&self.basis, &other.basis)
            || (self.basis.modes() == other.basis.modes()
                && self.basis.n_max() == other.basis.n_max());
        if same {
            Ok(())
        } else {
            Err(OracleError::BasisMismatch)
        }
    }

    /// `<self, other>`, antilinear in `self`.
    pub fn inner(&self, other: &FockVector) -> Result<C64> {
        self.ensure_compatible(other)?;
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            basis: self.basis.clone(),
            amps: self.amps.iter().map(|a| a * s).collect(),
        }
    }

    pub fn add_scaled(&mut self, s: C64, other: &FockVector) -> Result<()> {
        self.ensure_compatible(other)?;
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += s * b;
        }
        Ok(())
    }

    /// Probability mass in each total-particle-number sector `0..=n_max`.
    pub fn sector_masses(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.basis.n_max() + 1];
        for (i, a) in self.amps.iter().enumerate() {
            out[self.basis.total(i)] += a.norm_sqr();
        }
        out
    }

    /// Mass in the two top occupation shells `sum n_j >= n_max - 1`, so that
    /// states of either particle-number parity register.
    pub fn tail_mass(&self) -> f64 {
        self.sector_masses().iter().rev().take(2).sum()
    }

    /// Mass in sectors with an odd number of particles.
    pub fn odd_sector_mass(&self) -> f64 {
        self.sector_masses().iter().skip(1).step_by(2).sum()
    }

    /// Occupation distribution of a single mode.
    pub fn mode_distribution(&self, mode: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.basis.n_max() + 1];
        for (i, a) in self.amps.iter().enumerate() {
            out[self.basis.state(i)[mode] as usize] += a.norm_sqr();
        }
        out
    }

    /// `b_mode` applied exactly; annihilation never leaves the truncated space.
    pub fn annihilate(&self, mode: usize) -> Self {
        self.ladder(mode, false)
    }

    /// `b*_mode` with the component in the top shell discarded.
    pub fn create(&self, mode: usize) -> Self {
        self.ladder(mode, true)
    }

    fn ladder(&self, mode: usize, create: bool) -> Self {
        assert!(mode < self.basis.modes(), "mode {mode} out of range");
        let mut out = Self::zeros(self.basis.clone());
        let mut scratch = Vec::with_capacity(self.basis.modes());
        let word = [(mode, create)];
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            if let Some((j, amp)) = apply_word(&self.basis, i, &word, &mut scratch) {
                out.amps[j] += a * amp;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_algebra() {
        let b = Arc::new(OccupationBasis::new(2, 6).unwrap());
        let v = FockVector::occupation(b.clone(), &[2, 1]).unwrap();
        // [b, b*] = 1 on a state well below the cutoff.
        let lhs = v.create(0).annihilate(0);
        let rhs = v.annihilate(0).create(0);
        let mut diff = lhs.clone();
        diff.add_scaled(C64::new(-1.0, 0.0), &rhs).unwrap();
        diff.add_scaled(C64::new(-1.0, 0.0), &v).unwrap();
        assert!(diff.norm() < 1e-14);
        assert!((lhs.inner(&v).unwrap().re - 3.0).abs() < 1e-14);
        assert_eq!(v.sector_masses()[3], 1.0);
        assert_eq!(v.mode_distribution(0)[2], 1.0);
        assert_eq!(v.odd_sector_mass(), 1.0);
        assert_eq!(FockVector::vacuum(b.clone()).tail_mass(), 0.0);
        let top = FockVector::occupation(b.clone(), &[6, 0]).unwrap();
        assert_eq!(top.tail_mass(), 1.0);
        let below = FockVector::occupation(b.clone(), &[5, 0]).unwrap();
        assert_eq!(below.tail_mass(), 1.0);
        assert_eq!(FockVector::occupation(b.clone(), &[4, 0]).unwrap().tail_mass(), 0.0);
        assert_eq!(top.create(1).norm(), 0.0);
        assert!(FockVector::occupation(b, &[7, 0]).is_err());
    }

    #[test]
    fn mismatched_bases_are_rejected() {
        let a = FockVector::vacuum(Arc::new(OccupationBasis::new(2, 3).unwrap()));
        let b = FockVector::vacuum(Arc::new(OccupationBasis::new(2, 4).unwrap()));
        assert!(matches!(a.inner(&b), Err(OracleError::BasisMismatch)));
        let c = FockVector::vacuum(Arc::new(OccupationBasis::new(2, 3).unwrap()));
        assert_eq!(a.inner(&c).unwrap(), C64::new(1.0, 0.0));
    }
}
