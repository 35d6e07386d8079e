use std::f64::consts::PI;

use hfbflow::bogoliubov::{closed_form_marginals, hyperbolic_from_k, MarginalOrder, PairKernel};
use hfbflow::dynamics::{conserved_energy, HfbState, Model};
use hfbflow::potential::{build_vn, PotentialSpec};
use hfbflow::{Field, Grid, Kernel};
use hfbflow_fock::*;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayD};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(n: usize) -> Grid {
    Grid::new(1, n, 2.0 * PI).unwrap()
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn cfg() -> PropagationConfig {
    PropagationConfig::default()
}

fn random_c(rng: &mut ChaCha8Rng, scale: f64) -> C64 {
    c(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

/// Random condensate and symmetric pair kernel in the span of `modes`, with
/// `||k||_HS = k_norm`.
fn random_data(modes: &ModeBasis, rng: &mut ChaCha8Rng, phi_norm: f64, k_norm: f64) -> (Field, PairKernel) {
    let m = modes.len();
    let alpha: Vec<C64> = (0..m).map(|_| random_c(rng, 1.0)).collect();
    let a = alpha.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let alpha: Vec<C64> = alpha.iter().map(|z| z * (phi_norm / a)).collect();
    let mut kc = Array2::<C64>::zeros((m, m));
    for i in 0..m {
        for j in i..m {
            let z = random_c(rng, 1.0);
            kc[[i, j]] = z;
            kc[[j, i]] = z;
        }
    }
    let f = kc.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    kc.mapv_inplace(|z| z * (k_norm / f));
    let k = PairKernel::new(modes.kernel_from(&kc)).unwrap();
    (modes.field_from(&alpha), k)
}

/// Space on the lowest `m` modes with the policy cutoff for the given data.
fn space_for(grid: Grid, m: usize, phi: &Field, k: &PairKernel, particles: f64, tail: f64) -> FockSpace {
    let modes = ModeBasis::lowest(grid, m).unwrap();
    FockSpace::new(modes, suggested_cutoff(phi, k, particles, tail).unwrap()).unwrap()
}

fn max_diff(a: &ArrayD<C64>, b: &ArrayD<C64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn kernel_array(k: &Kernel) -> ArrayD<C64> {
    k.values().clone().into_dyn()
}

/// `exp(i t H)` applied through a dense hermitian eigendecomposition.
fn dense_expi(h: &Array2<C64>, v: &[C64], t: f64) -> Vec<C64> {
    let n = h.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| h[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let q = &eig.eigenvectors;
    let coeffs: Vec<C64> = (0..n)
        .map(|k| (0..n).map(|r| q[(r, k)].conj() * v[r]).sum::<C64>() * C64::from_polar(1.0, t * eig.eigenvalues[k]))
        .collect();
    (0..n).map(|r| (0..n).map(|k| q[(r, k)] * coeffs[k]).sum()).collect()
}

#[test]
fn coherent_occupations_are_poisson() {
    let g = line(16);
    let modes = ModeBasis::from_modes(g, vec![[1, 0, 0]]).unwrap();
    let particles = 6.0;
    let amp = c(0.5, -0.6);
    let phi = &Field::plane_wave(g, &[1]) * amp;
    let mean = particles * amp.norm_sqr();
    let space = FockSpace::new(modes, OccupationBasis::cutoff_for(mean)).unwrap();
    let out = coherent_displace(&space, &space.vacuum(), &phi, particles, &cfg()).unwrap();
    assert!(out.projection_residual < 1e-12);
    let dist = out.state.mode_distribution(0);
    let mut tv = 0.0;
    let mut p = (-mean).exp();
    for (n, q) in dist.iter().enumerate() {
        if n > 0 {
            p *= mean / n as f64;
        }
        tv += (q - p).abs();
    }
    assert!(tv / 2.0 < 1e-8, "total variation {tv:.3e}");
    assert!(out.tail_mass < 1e-10);
    assert!(out.norm_drift < 1e-10);
}

#[test]
fn zero_data_leaves_states_unchanged() {
    let g = line(16);
    let space = FockSpace::new(ModeBasis::lowest(g, 3).unwrap(), 4).unwrap();
    let probe = hfbflow_fock::conjugation::probe_states(&space).pop().unwrap();
    let a = coherent_displace(&space, &probe, &Field::zeros(g), 5.0, &cfg()).unwrap();
    let b = pair_rotate(&space, &probe, &PairKernel::zero(g), &cfg()).unwrap();
    for v in [a.state, b.state] {
        assert!(fock_error(&probe, &v).unwrap().value < 1e-14);
    }
}

#[test]
fn displaced_number_matches_condensate_mass() {
    let g = line(32);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let modes = ModeBasis::lowest(g, 3).unwrap();
    let (phi, _) = random_data(&modes, &mut rng, 0.8, 0.1);
    let particles = 8.0;
    let space = space_for(g, 3, &phi, &PairKernel::zero(g), particles, 1e-12);
    let out = coherent_displace(&space, &space.vacuum(), &phi, particles, &cfg()).unwrap();
    let n = expectation(&space.number_operator(), &out.state).unwrap();
    let want = particles * phi.norm_l2().powi(2);
    assert!((n.re - want).abs() < 1e-8, "{} vs {want}", n.re);
    // <a_x> = sqrt(N) phi(x).
    let l01 = marginal(space.modes(), &out.state, 0, 1, particles).unwrap();
    assert!(max_diff(&l01, &phi.values().clone().into_dyn()) < 1e-8);
}

#[test]
fn single_mode_squeezing_matches_closed_form() {
    let g = line(16);
    let e = Field::plane_wave(g, &[0]);
    let lambda = C64::from_polar(0.7, 0.9);
    let k = PairKernel::rank_one(&e, lambda);
    let modes = ModeBasis::from_modes(g, vec![[0, 0, 0]]).unwrap();
    let space = FockSpace::new(modes.clone(), 80).unwrap();
    let out = pair_rotate(&space, &space.vacuum(), &k, &cfg()).unwrap();
    let (r, theta) = (lambda.norm(), lambda.arg());
    // Squeezed vacuum: c_{2n} = (e^{i theta} tanh r)^n sqrt((2n)!) / (2^n n!) / sqrt(cosh r).
    let mut coeff = c(1.0 / r.cosh().sqrt(), 0.0);
    let ratio = C64::from_polar(r.tanh(), theta);
    let amps = out.state.amplitudes();
    for n in 0..=25usize {
        if n > 0 {
            let f = ((2 * n - 1) as f64 * (2 * n) as f64).sqrt() / (2.0 * n as f64);
            coeff *= ratio * f;
        }
        let idx = space.basis().rank(&[2 * n as u16]).unwrap();
        assert!((amps[idx] - coeff).norm() < 1e-10, "n = {n}");
        assert_eq!(amps[space.basis().rank(&[2 * n as u16 + 1]).unwrap()], c(0.0, 0.0));
    }
    // <a a> = sh(2 lambda) / 2 and <a* a> = sinh^2 r.
    let t = mode_tensor(&out.state, 0, 2).unwrap();
    let want = C64::from_polar((2.0 * r).sinh() / 2.0, theta);
    assert!((t[[0, 0]] - want).norm() < 1e-10);
    let t = mode_tensor(&out.state, 1, 1).unwrap();
    assert!((t[[0, 0]].re - r.sinh().powi(2)).abs() < 1e-10);

    // Dense exponential of the same generator.
    let gen = space.pair_generator(&Array2::from_elem((1, 1), lambda)).unwrap();
    let vac = space.vacuum();
    let dense = dense_expi(&gen.to_dense(), vac.amplitudes(), 1.0);
    let err = dense.iter().zip(amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-10, "dense vs Krylov {err:.3e}");
}

#[test]
fn pair_rotation_of_vacuum_has_even_parity_and_expected_density() {
    let g = line(16);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let modes = ModeBasis::lowest(g, 3).unwrap();
    let (_, k) = random_data(&modes, &mut rng, 1.0, 0.8);
    let space = space_for(g, 3, &Field::zeros(g), &k, 1.0, 1e-12);
    let out = pair_rotate(&space, &space.vacuum(), &k, &cfg()).unwrap();
    assert_eq!(out.state.odd_sector_mass(), 0.0);
    assert!(out.projection_residual < 1e-12);
    assert!((out.state.norm() - 1.0).abs() < 1e-10 + out.tail_mass);
    let hp = hyperbolic_from_k(&k).unwrap();
    let particles = 2.5;
    let (gamma, lambda) = hfbflow_fock::marginal::one_body(space.modes(), &out.state, particles).unwrap();
    let want_gamma = &hp.u.conj().compose(&hp.u).unwrap() * (1.0 / particles);
    let want_lambda = &hp.s2 * (0.5 / particles);
    assert!(max_diff(&gamma.into_dyn(), &kernel_array(&want_gamma)) < 1e-9);
    assert!(max_diff(&lambda.into_dyn(), &kernel_array(&want_lambda)) < 1e-9);
}

#[test]
fn exact_evolution_matches_dense_eigensolver() {
    let g = line(16);
    let vn = build_vn(&PotentialSpec::gaussian(3.0, 0.5, 0.0, 2), &g).unwrap();
    let modes = ModeBasis::from_modes(g, vec![[0, 0, 0], [1, 0, 0]]).unwrap();
    let space = FockSpace::new(modes, 2).unwrap();
    let h = space.hamiltonian(&vn, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut amps: Vec<C64> = (0..space.dim()).map(|_| random_c(&mut rng, 1.0)).collect();
    let nrm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|z| *z /= nrm);
    let psi = FockVector::from_amplitudes(space.basis().clone(), amps).unwrap();
    let loose = PropagationConfig {
        tail_bound: f64::INFINITY,
        ..cfg()
    };
    let got = evolve_exact(&psi, &h, 0.3, &loose).unwrap();
    let want = dense_expi(&h.to_dense(), psi.amplitudes(), 0.3);
    let err = got.state.amplitudes().iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-9, "max amplitude error {err:.3e}");
    assert!(got.norm_drift < 1e-10);

    let same = evolve_exact(&psi, &h, 0.0, &loose).unwrap();
    assert_eq!(same.state.amplitudes(), psi.amplitudes());
}

#[test]
fn eigenvectors_only_rotate_in_phase() {
    let g = line(16);
    let vn = build_vn(&PotentialSpec::gaussian(2.0, 0.4, 0.0, 3), &g).unwrap();
    let space = FockSpace::new(ModeBasis::lowest(g, 3).unwrap(), 3).unwrap();
    let h = space.hamiltonian(&vn, 3.0).unwrap();
    let dense = h.to_dense();
    let n = space.dim();
    let eig = SymmetricEigen::new(DMatrix::from_fn(n, n, |i, j| dense[[i, j]]));
    let loose = PropagationConfig {
        tail_bound: f64::INFINITY,
        ..cfg()
    };
    for k in [0, n / 2, n - 1] {
        let v: Vec<C64> = (0..n).map(|r| eig.eigenvectors[(r, k)]).collect();
        let psi = FockVector::from_amplitudes(space.basis().clone(), v).unwrap();
        let out = evolve_exact(&psi, &h, 0.7, &loose).unwrap();
        let expected = psi.scaled(C64::from_polar(1.0, 0.7 * eig.eigenvalues[k]));
        let mut diff = out.state.clone();
        diff.add_scaled(c(-1.0, 0.0), &expected).unwrap();
        assert!(diff.norm() < 1e-10, "eigenvector {k}: {:.3e}", diff.norm());
    }
}

#[test]
fn number_and_energy_are_conserved_by_exact_flow() {
    let g = line(32);
    let particles = 4.0;
    let vn = build_vn(&PotentialSpec::gaussian(2.0, 0.4, 0.5, 4), &g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let modes = ModeBasis::lowest(g, 3).unwrap();
    let (phi, k) = random_data(&modes, &mut rng, 0.9, 0.4);
    let space = space_for(g, 3, &phi, &k, particles, 1e-12);
    let h = space.hamiltonian(&vn, particles).unwrap();
    let number = space.number_operator();
    let psi = quasi_free_state(&space, &phi, &k, particles, &cfg()).unwrap().state;
    let (n0, e0) = (expectation(&number, &psi).unwrap().re, expectation(&h, &psi).unwrap().re);
    let mut cur = psi;
    for _ in 0..4 {
        cur = evolve_exact(&cur, &h, 0.05, &cfg()).unwrap().state;
        let n = expectation(&number, &cur).unwrap().re;
        let e = expectation(&h, &cur).unwrap().re;
        assert!((n - n0).abs() < 1e-9 && (e - e0).abs() < 1e-9, "{n} {n0} {e} {e0}");
    }
}

#[test]
fn vacuum_has_no_correlations() {
    let g = line(8);
    let space = FockSpace::new(ModeBasis::lowest(g, 3).unwrap(), 4).unwrap();
    let vac = space.vacuum();
    for (m, n) in [(0, 1), (1, 1), (0, 2), (1, 2), (2, 2), (1, 3), (0, 4)] {
        let l = marginal(space.modes(), &vac, m, n, 3.0).unwrap();
        assert!(l.iter().all(|z| z.norm() == 0.0), "({m},{n})");
    }
    assert!((marginal(space.modes(), &vac, 0, 0, 3.0).unwrap().iter().next().unwrap().re - 1.0).abs() < 1e-15);
    assert!(matches!(
        marginal(space.modes(), &vac, 2, 3, 3.0),
        Err(OracleError::UnsupportedOrder { m: 2, n: 3 })
    ));
}

#[test]
fn coherent_marginals_factorize() {
    let g = line(16);
    let particles = 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let modes = ModeBasis::lowest(g, 3).unwrap();
    let (phi, _) = random_data(&modes, &mut rng, 0.7, 0.1);
    let space = space_for(g, 3, &phi, &PairKernel::zero(g), particles, 1e-12);
    let psi = coherent_displace(&space, &space.vacuum(), &phi, particles, &cfg()).unwrap().state;
    let l01 = marginal(space.modes(), &psi, 0, 1, particles).unwrap();
    let l11 = marginal(space.modes(), &psi, 1, 1, particles).unwrap();
    let l02 = marginal(space.modes(), &psi, 0, 2, particles).unwrap();
    assert!(max_diff(&l01, &phi.values().clone().into_dyn()) < 1e-9);
    assert!(max_diff(&l11, &kernel_array(&phi.conj().outer(&phi))) < 1e-9);
    assert!(max_diff(&l02, &kernel_array(&phi.outer(&phi))) < 1e-9);
}

#[test]
fn quasi_free_marginals_match_wick_forms() {
    let g = line(16);
    let particles = 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let modes = ModeBasis::lowest(g, 3).unwrap();
    let (phi, k) = random_data(&modes, &mut rng, 0.8, 0.5);
    let space = space_for(g, 3, &phi, &k, particles, 1e-12);
    let psi = quasi_free_state(&space, &phi, &k, particles, &cfg()).unwrap();
    assert!(psi.tail_mass < 1e-8);
    let psi = psi.state;

    let model = Model::new(g, PotentialSpec::gaussian(1.0, 0.5, 0.0, 4)).unwrap();
    let s = HfbState::from_pair_kernel(model, phi.clone(), &k).unwrap();
    let l11 = marginal(space.modes(), &psi, 1, 1, particles).unwrap();
    let l02 = marginal(space.modes(), &psi, 0, 2, particles).unwrap();
    assert!(max_diff(&l11, &kernel_array(&s.gamma)) < 1e-8);
    assert!(max_diff(&l02, &kernel_array(&s.lambda)) < 1e-8);

    let hp = hyperbolic_from_k(&k).unwrap();
    let c_kernel = hp.c();
    for (m, n, order) in [
        (1, 2, MarginalOrder::OneTwo),
        (2, 2, MarginalOrder::TwoTwo),
        (1, 3, MarginalOrder::OneThree),
    ] {
        let got = marginal(space.modes(), &psi, m, n, particles).unwrap();
        let want = closed_form_marginals(&phi, &hp.u, &c_kernel, particles, order).unwrap();
        let err = max_diff(&got, &want);
        assert!(err < 1e-8, "({m},{n}): {err:.3e}");
    }
}

#[test]
fn conjugation_identity_holds() {
    let g = line(16);
    let zero = FockSpace::new(ModeBasis::lowest(g, 3).unwrap(), 6).unwrap();
    let r = verify_conjugation(&zero, &PairKernel::zero(g), &cfg()).unwrap();
    assert!(r.residual < 1e-14);

    // One mode: exp(B) a exp(-B) = cosh|l| a + e^{i arg l} sinh|l| a*.
    let e = Field::plane_wave(g, &[1]);
    let lambda = C64::from_polar(0.9, -0.4);
    let single = FockSpace::new(ModeBasis::from_modes(g, vec![[1, 0, 0]]).unwrap(), 160).unwrap();
    let k = PairKernel::rank_one(&e, lambda);
    let r = verify_conjugation(&single, &k, &cfg()).unwrap();
    assert!(r.residual < 1e-9, "single mode residual {:.3e}", r.residual);
    let psi = FockVector::occupation(single.basis().clone(), &[1]).unwrap();
    let rot = pair_rotate(&single, &psi, &k, &cfg()).unwrap().state;
    let lhs = pair_unrotate(&single, &rot.annihilate(0), &k, &cfg()).unwrap().state;
    let mut rhs = psi.annihilate(0).scaled(c(lambda.norm().cosh(), 0.0));
    rhs.add_scaled(C64::from_polar(lambda.norm().sinh(), lambda.arg()), &psi.create(0)).unwrap();
    assert!(fock_error(&lhs, &rhs).unwrap().value < 1e-9);
    assert!((lhs.inner(&rhs).unwrap().im).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let modes = ModeBasis::lowest(g, 3).unwrap();
    let (_, k) = random_data(&modes, &mut rng, 1.0, 0.5);
    let space = space_for(g, 3, &Field::zeros(g), &k, 1.0, 1e-18);
    let r = verify_conjugation(&space, &k, &cfg()).unwrap();
    assert!(r.residual < 1e-8, "{:.3e} (tail {:.1e})", r.residual, r.tail_mass);
}

#[test]
fn cutoff_policy_bounds_the_realized_tail() {
    let g = line(16);
    let e = Field::plane_wave(g, &[0]);
    let k = PairKernel::rank_one(&e, c(0.6, 0.0));
    let dist = squeezed_number_distribution(&k, 200).unwrap();
    assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    let single = FockSpace::new(ModeBasis::from_modes(g, vec![[0, 0, 0]]).unwrap(), 120).unwrap();
    let psi = pair_rotate(&single, &single.vacuum(), &k, &cfg()).unwrap().state;
    let masses = psi.sector_masses();
    for n in 0..60 {
        assert!((masses[n] - dist[n]).abs() < 1e-12, "sector {n}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let modes = ModeBasis::lowest(g, 3).unwrap();
    let (phi, k) = random_data(&modes, &mut rng, 0.8, 0.6);
    let space = space_for(g, 3, &phi, &k, 4.0, 1e-10);
    let out = quasi_free_state(&space, &phi, &k, 4.0, &cfg()).unwrap();
    assert!(out.tail_mass < 1e-10, "{:.3e} at cutoff {}", out.tail_mass, space.basis().n_max());
}

#[test]
fn phase_distance_extremes() {
    let g = line(8);
    let space = FockSpace::new(ModeBasis::lowest(g, 2).unwrap(), 3).unwrap();
    let a = FockVector::occupation(space.basis().clone(), &[1, 0]).unwrap();
    let b = FockVector::occupation(space.basis().clone(), &[0, 1]).unwrap();
    let d = fock_error(&a, &a.scaled(C64::from_polar(1.0, 0.8))).unwrap();
    assert!(d.value < 1e-15);
    assert!((d.theta + 0.8).abs() < 1e-14);
    let d = fock_error(&a, &b).unwrap();
    assert!((d.value - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn energy_functional_equals_hamiltonian_expectation() {
    let g = line(32);
    let particles = 4.0;
    let spec = PotentialSpec::gaussian(3.0, 0.4, 0.5, 4);
    let vn = build_vn(&spec, &g).unwrap();
    let model = Model::new(g, spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let modes = ModeBasis::lowest(g, 3).unwrap();
    for _ in 0..3 {
        let (phi, k) = random_data(&modes, &mut rng, 1.0, 0.5);
        let space = space_for(g, 3, &phi, &k, particles, 1e-12);
        let h = space.hamiltonian(&vn, particles).unwrap();
        let psi = quasi_free_state(&space, &phi, &k, particles, &cfg()).unwrap().state;
        let fock = expectation(&h, &psi).unwrap();
        let s = HfbState::from_pair_kernel(model.clone(), phi, &k).unwrap();
        let e = conserved_energy(&s);
        assert!((fock.re - e).abs() < 1e-6 * e.abs().max(1.0), "{} vs {e}", fock.re);
        assert!(fock.im.abs() < 1e-10);
    }
}
