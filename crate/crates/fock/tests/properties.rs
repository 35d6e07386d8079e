use std::f64::consts::PI;

use hfbflow::potential::{build_vn, PotentialSpec};
use hfbflow::Grid;
use hfbflow_fock::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |c, i| c * (n - i) / (i + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ranks_invert_enumeration(modes in 1usize..5, n_max in 0usize..12) {
        let b = OccupationBasis::new(modes, n_max).unwrap();
        prop_assert_eq!(b.len(), binomial(n_max + modes, modes));
        for i in 0..b.len() {
            prop_assert_eq!(b.rank(b.state(i)), Some(i));
            prop_assert!(b.total(i) <= n_max);
        }
    }

    #[test]
    fn canonical_commutator_below_cutoff(occ in prop::collection::vec(0u16..4, 3), mode in 0usize..3) {
        let space = FockSpace::new(ModeBasis::lowest(Grid::new(1, 8, 2.0 * PI).unwrap(), 3).unwrap(), 12).unwrap();
        let psi = FockVector::occupation(space.basis().clone(), &occ).unwrap();
        let mut comm = psi.create(mode).annihilate(mode);
        comm.add_scaled(C64::new(-1.0, 0.0), &psi.annihilate(mode).create(mode)).unwrap();
        comm.add_scaled(C64::new(-1.0, 0.0), &psi).unwrap();
        prop_assert!(comm.norm() < 1e-12);
    }

    #[test]
    fn hamiltonian_keeps_particle_number(seed in 0u64..1000, n in 0usize..6) {
        let g = Grid::new(1, 16, 2.0 * PI).unwrap();
        let space = FockSpace::new(ModeBasis::lowest(g, 3).unwrap(), 6).unwrap();
        let spec = PotentialSpec::gaussian(2.0, 0.5, 0.5, 4);
        let h = space.hamiltonian(&build_vn(&spec, &g).unwrap(), 4.0).unwrap();
        let basis = space.basis().clone();
        let mut psi = FockVector::zeros(basis.clone());
        for (i, a) in psi.amplitudes_mut().iter_mut().enumerate() {
            if basis.total(i) == n {
                let t = (i as u64 * 31 + seed) as f64;
                *a = C64::new(t.sin(), t.cos());
            }
        }
        let out = h.apply(psi.amplitudes());
        for (i, a) in out.iter().enumerate() {
            if basis.total(i) != n {
                prop_assert!(a.norm() < 1e-12);
            }
        }
        prop_assert!(h.adjoint_residual() < 1e-12);
    }
}
