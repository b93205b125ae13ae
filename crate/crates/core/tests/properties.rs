//! Randomized invariants across the library.

use nalgebra::DMatrix;
use nespin::angular::{spin_operators, SpinQuantumNumber};
use nespin::breitrabi::{
    eigen_analytic, hamiltonian_matrix, level_energy, level_vector_at, subspace_params, Branch, Half, SpinSystemParams, SystemOperators,
};
use nespin::dynamics::{evolve, DriveSpec, DrivePolarization, IntegratorConfig};
use nespin::entangle::{concurrence, eigenstate_entanglement, eigenstate_entanglement_reduced, electron_nucleus_dims, negativity, negativity_on};
use nespin::noise::{bath_coherence, evolve_lindblad, lindblad, lindblad_z, BathSpec, NoiseAxis, NoiseSpec};
use nespin::spectra::{all_transitions, transition_frequency, TransitionKind};
use nespin::spinalg::{
    c, eigh, fidelity, hermitian_residual, kron, max_norm, partial_trace, random, trace, trace_distance, DensityOperator, Keep, Operator,
    SubsystemDims,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

prop_compose! {
    fn params()(k in 0u32..5, ge in 20.0..40.0f64, gn in 1.0..20.0f64, a in 10.0..2000.0f64) -> SpinSystemParams {
        SpinSystemParams::from_linear("random", 2 * k + 1, ge, gn, a).unwrap()
    }
}

prop_compose! {
    fn params_and_field()(p in params(), x in 0.0..3.0f64) -> (SpinSystemParams, f64) {
        let b0 = x * p.a_iso * (p.i() + 1.0) / p.gamma_e;
        (p, b0)
    }
}

fn min_eigenvalue(rho: &Operator) -> f64 {
    eigh(rho).unwrap().0.iter().cloned().fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigh_reconstructs(d in 1usize..40, seed in any::<u64>()) {
        let h = random::hermitian(d, &mut rng(seed));
        let (vals, vecs) = eigh(&h).unwrap();
        let back = &vecs * DMatrix::from_diagonal(&vals.map(c)) * vecs.adjoint();
        prop_assert!(max_norm(&(back - &h)) <= 1e-10 * max_norm(&h).max(1.0));
    }

    #[test]
    fn distance_and_fidelity_bounds(d in 2usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random::density(d, 1 + (seed as usize) % d, &mut r);
        let b = random::density(d, d, &mut r);
        let dist = trace_distance(&a, &b).unwrap();
        let fid = fidelity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&dist) && (0.0..=1.0).contains(&fid));
        prop_assert!(1.0 - fid <= dist + 1e-9 && dist <= (1.0 - fid * fid).max(0.0).sqrt() + 1e-9);
        prop_assert!(trace_distance(&a, &a).unwrap() <= 1e-12);
        prop_assert!((fidelity(&b, &b).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn partial_trace_keeps_trace(da in 1usize..5, db in 1usize..5, seed in any::<u64>()) {
        let rho = random::density(da * db, da * db, &mut rng(seed));
        for keep in [Keep::A, Keep::B] {
            let red = partial_trace(&rho, SubsystemDims::new(da, db), keep).unwrap();
            prop_assert!((trace(red.op()).re - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn kron_trace_factorizes(da in 1usize..5, db in 1usize..5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random::ginibre(da, da, &mut r);
        let b = random::ginibre(db, db, &mut r);
        prop_assert!((trace(&kron(&a, &b)) - trace(&a) * trace(&b)).norm() <= 1e-10);
    }

    #[test]
    fn angular_momentum_algebra(two_j in 1u32..=9) {
        let s = spin_operators(SpinQuantumNumber::new(two_j));
        let i = c(0.0) + nalgebra::Complex::i();
        prop_assert!(max_norm(&(&s.jx * &s.jy - &s.jy * &s.jx - &s.jz * i)) <= 1e-12);
        prop_assert!(max_norm(&(&s.jy * &s.jz - &s.jz * &s.jy - &s.jx * i)) <= 1e-12);
        prop_assert!(max_norm(&(&s.jz * &s.jx - &s.jx * &s.jz - &s.jy * i)) <= 1e-12);
        let j = two_j as f64 / 2.0;
        let cas = &s.jx * &s.jx + &s.jy * &s.jy + &s.jz * &s.jz;
        let d = s.jz.nrows();
        prop_assert!(max_norm(&(cas - Operator::identity(d, d) * c(j * (j + 1.0)))) <= 1e-12);
        prop_assert!(s.jplus.column(0).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn subspace_coefficients((p, b0) in params_and_field()) {
        let ops = SystemOperators::new(&p);
        for m in p.m_values() {
            let s = subspace_params(&p, b0, m).unwrap();
            let (a, b) = (s.a(), s.b());
            prop_assert!((a * a - b * b - s.theta.cos()).abs() <= 1e-12);
            prop_assert!((2.0 * a * b - s.theta.sin()).abs() <= 1e-12);
            if p.level_exists(m, Branch::Plus) && p.level_exists(m, Branch::Minus) {
                let vp = level_vector_at(&p, b0, m, Branch::Plus);
                let vm = level_vector_at(&p, b0, m, Branch::Minus);
                let zp = vp.dotc(&(&ops.sz * &vp)).re;
                let zm = vm.dotc(&(&ops.sz * &vm)).re;
                let off = vm.dotc(&(&ops.sz * &vp)).re;
                prop_assert!((zp - s.theta.cos() / 2.0).abs() <= 1e-12);
                prop_assert!((zm + s.theta.cos() / 2.0).abs() <= 1e-12);
                prop_assert!((off + s.theta.sin() / 2.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn branches_never_cross((p, b0) in params_and_field()) {
        prop_assume!(b0 > 0.0);
        let es = eigen_analytic(&p, b0).unwrap();
        let min_plus = es.levels.iter().filter(|l| l.branch == Branch::Plus).map(|l| l.energy).fold(f64::INFINITY, f64::min);
        let max_minus = es.levels.iter().filter(|l| l.branch == Branch::Minus && p.level_exists(l.m, Branch::Minus) && !p.is_edge(l.m))
            .map(|l| l.energy).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_plus > max_minus);
        // H₀ is traceless
        let sum: f64 = es.energies().iter().sum();
        prop_assert!(sum.abs() <= 1e-10 * p.a_iso * p.dim() as f64);
        prop_assert!((trace(&hamiltonian_matrix(&p, b0)).re - sum).abs() <= 1e-10 * p.a_iso * p.dim() as f64);
    }

    #[test]
    fn theta_decreases_with_field(p in params(), x in 0.0..2.0f64, dx in 1e-3..1.0f64) {
        let scale = p.a_iso / p.gamma_e;
        for m in p.m_values().into_iter().filter(|&m| !p.is_edge(m)) {
            let t1 = subspace_params(&p, x * scale, m).unwrap().theta;
            let t2 = subspace_params(&p, (x + dx) * scale, m).unwrap().theta;
            prop_assert!(t2 < t1);
        }
    }

    #[test]
    fn frequencies_match_energy_differences((p, b0) in params_and_field()) {
        for t in all_transitions(&p) {
            let (mu, bu) = t.upper();
            let (ml, bl) = t.lower();
            let de = (level_energy(&p, b0, mu, bu) - level_energy(&p, b0, ml, bl)).abs();
            let f = transition_frequency(&p, b0, &t).unwrap();
            prop_assert!((f - de).abs() <= 1e-10 * p.a_iso);
        }
    }

    #[test]
    fn entropy_routes_agree((p, b0) in params_and_field()) {
        for m in p.m_values() {
            for br in [Branch::Plus, Branch::Minus] {
                if p.level_exists(m, br) {
                    let closed = eigenstate_entanglement(&p, b0, m, br).unwrap();
                    let reduced = eigenstate_entanglement_reduced(&p, b0, m, br, 2).unwrap();
                    prop_assert!((closed - reduced).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn concurrence_is_local_unitary_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rho = random::density(4, 4, &mut r);
        let u = kron(&random::unitary(2, &mut r), &random::unitary(2, &mut r));
        let rotated = DensityOperator::new_unchecked(&u * rho.op() * u.adjoint());
        prop_assert!((concurrence(&rho).unwrap() - concurrence(&rotated).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn negativity_either_transpose(da in 2usize..4, db in 2usize..4, seed in any::<u64>()) {
        let rho = random::density(da * db, 1 + (seed as usize) % (da * db), &mut rng(seed));
        let dims = SubsystemDims::new(da, db);
        prop_assert!((negativity_on(&rho, dims, Keep::A).unwrap() - negativity_on(&rho, dims, Keep::B).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn concurrence_bounds_negativity(seed in any::<u64>()) {
        let rho = random::density(4, 1 + (seed as usize) % 4, &mut rng(seed));
        prop_assert!(concurrence(&rho).unwrap() >= negativity(&rho, SubsystemDims::new(2, 2)).unwrap() - 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lindblad_maps_states_to_states(b0 in 0.0..1.0f64, v in 0.1..3.0f64, kind in 0usize..4, tf in 0.0..100.0f64, seed in any::<u64>()) {
        let p = SpinSystemParams::si_p();
        let spec = match kind {
            0 => NoiseSpec::adiabatic_z(v),
            1 => NoiseSpec::diabatic_z(v),
            2 => NoiseSpec::new(NoiseAxis::Z, v, 1e-5),
            _ => NoiseSpec::diabatic_x(v),
        }.unwrap();
        let g = lindblad(&p, b0, &spec).unwrap();
        let rho = random::density(4, 1 + (seed as usize) % 4, &mut rng(seed));
        let out = evolve_lindblad(&g, &rho, tf / (v * v)).unwrap();
        prop_assert!((trace(out.op()).re - 1.0).abs() <= 1e-10);
        prop_assert!(min_eigenvalue(out.op()) >= -1e-7);
    }

    #[test]
    // non-degenerate fields only: at B₀ = 0 the zero-frequency sector mixes each F multiplet
    fn adiabatic_noise_keeps_populations(b0 in 0.01..0.5f64, seed in any::<u64>()) {
        let p = SpinSystemParams::si_bi();
        let v = 1.0;
        let g = lindblad_z(&p, b0, &NoiseSpec::adiabatic_z(v).unwrap()).unwrap();
        // states are expressed in the generator's eigenbasis
        let rho = random::density(20, 20, &mut rng(seed));
        let out = evolve_lindblad(&g, &rho, 50.0 / (v * v)).unwrap();
        for k in 0..20 {
            prop_assert!((rho.op()[(k, k)].re - out.op()[(k, k)].re).abs() <= 1e-9);
        }
    }

    #[test]
    fn driven_evolution_conserves_trace(b0 in 0.001..0.05f64, w1 in 1.0..30.0f64, seed in any::<u64>(), pol in 0usize..3) {
        let p = SpinSystemParams::si_p();
        let polarization = [DrivePolarization::Rh, DrivePolarization::Lh, DrivePolarization::Linear][pol];
        let t = nespin::spectra::TransitionLabel::new(TransitionKind::Pm, Half(0));
        let omega = transition_frequency(&p, b0, &t).unwrap();
        let d = DriveSpec::new(w1, omega, polarization, 0.002, 0.01).unwrap();
        let rho = random::density(4, 4, &mut rng(seed));
        let cfg = IntegratorConfig::default();
        let out = evolve(&p, b0, Some(&d), &rho, (0.0, 0.015), &cfg).unwrap();
        prop_assert!((trace(out.op()).re - 1.0).abs() <= 10.0 * cfg.rel_tol);
        prop_assert!(hermitian_residual(out.op()) <= 1e-14);
    }

    #[test]
    fn bath_coherence_bounded(seed in 0u64..1000, n in 1usize..5, b0 in 0.05..0.5f64) {
        let p = SpinSystemParams::si_bi();
        let t = nespin::spectra::TransitionLabel::new(TransitionKind::Pm, Half(-4));
        let bath = BathSpec::random(n, seed).unwrap();
        let tgrid: Vec<f64> = (0..15).map(|k| k as f64 * 0.7).collect();
        let l = bath_coherence(&p, b0, &t, &bath, &tgrid).unwrap();
        prop_assert!((l.values[0] - 1.0).abs() <= 1e-12);
        prop_assert!(l.values.iter().all(|&x| x <= 1.0 + 1e-12));
    }
}

#[test]
fn eigh_reconstructs_at_400() {
    let h = random::hermitian(400, &mut rng(3));
    let (vals, vecs) = eigh(&h).unwrap();
    let back = &vecs * DMatrix::from_diagonal(&vals.map(c)) * vecs.adjoint();
    assert!(max_norm(&(back - &h)) <= 1e-10 * max_norm(&h).max(1.0));
}

#[test]
fn no_mp_transitions_for_spin_half_nucleus() {
    let p = SpinSystemParams::si_p();
    assert!(all_transitions(&p).iter().all(|t| t.kind != TransitionKind::Mp));
    let dims = electron_nucleus_dims(&p);
    assert_eq!((dims.da, dims.db), (2, 2));
}
