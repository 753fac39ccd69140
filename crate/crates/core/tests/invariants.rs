mod common;

use common::vector_norm;
use proptest::prelude::*;
use starkprobe::dynamics::{diagonalize, evolve};
use starkprobe::estimation::probe_truth;
use starkprobe::fisher::{cfi, configuration_probs};
use starkprobe::num_complex::Complex64 as C64;
use starkprobe::open_dynamics::{integrate_master, jump_diagonals, IntegratorConfig};
use starkprobe::{DensityMatrix, DephasingSpec, InitialState, ProbeSpec, StarkProbe};

fn energy(h: &starkprobe::faer::Mat<f64>, psi: &[C64]) -> f64 {
    let n = psi.len();
    let mut e = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            e += psi[i].conj() * h[(i, j)] * psi[j];
        }
    }
    e.re
}

/// Chain length, excitation count and an initial pattern with that count.
fn probe_strategy() -> impl Strategy<Value = (usize, usize, Vec<bool>)> {
    (3usize..=9).prop_flat_map(|sites| {
        (1..sites).prop_flat_map(move |n| {
            Just((0..sites).map(|l| l < n).collect::<Vec<bool>>())
                .prop_shuffle()
                .prop_map(move |bits| (sites, n, bits))
        })
    })
}

fn pattern(bits: &[bool]) -> InitialState {
    InitialState::Pattern {
        bits: bits.iter().map(|&b| if b { "1" } else { "0" }).collect::<Vec<_>>().join(","),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn evolution_preserves_norm_and_energy(
        (sites, n, bits) in probe_strategy(),
        delta in 0.0f64..1.5,
        field in 0.01f64..4.0,
        t in 0.0f64..300.0,
    ) {
        let probe = StarkProbe::new(ProbeSpec::many_body(sites, n, delta, pattern(&bits))).unwrap();
        let h = probe.hamiltonian(field).unwrap();
        let d = diagonalize(&h).unwrap();
        let psi0 = probe.initial_state(field);
        let psi = evolve(&d, &psi0, t).unwrap();
        prop_assert!((psi.norm() - 1.0).abs() < 1e-10);
        let e0 = energy(h.matrix(), &psi0.amplitudes);
        let et = energy(h.matrix(), &psi.amplitudes);
        prop_assert!((e0 - et).abs() < 1e-9 * (1.0 + e0.abs()), "{e0} vs {et}");
    }

    #[test]
    fn mirrored_chain_has_mirrored_qfi(
        (sites, n, bits) in probe_strategy(),
        delta in 0.0f64..1.5,
        field in 0.01f64..4.0,
        t in 0.1f64..200.0,
    ) {
        let mirrored: Vec<bool> = bits.iter().rev().copied().collect();
        let a = StarkProbe::new(ProbeSpec::many_body(sites, n, delta, pattern(&bits))).unwrap();
        let b = StarkProbe::new(ProbeSpec::many_body(sites, n, delta, pattern(&mirrored))).unwrap();
        let qa = a.evolution(field).unwrap().qfi(t).unwrap();
        let qb = b.evolution(-field).unwrap().qfi(t).unwrap();
        prop_assert!((qa - qb).abs() <= 1e-7 * (1.0 + qa), "{qa} vs {qb}");
    }

    #[test]
    fn classical_information_never_exceeds_quantum(
        (sites, n, bits) in probe_strategy(),
        delta in 0.0f64..1.5,
        field in 0.01f64..4.0,
        t in 0.1f64..200.0,
    ) {
        let probe = StarkProbe::new(ProbeSpec::many_body(sites, n, delta, pattern(&bits))).unwrap();
        let evo = probe.evolution(field).unwrap();
        let (psi, dpsi) = (evo.state(t), evo.derivative(t));
        let fq = evo.qfi(t).unwrap();
        let fc = cfi(&configuration_probs(&psi, Some(&dpsi))).unwrap();
        prop_assert!(fc <= fq * (1.0 + 1e-8) + 1e-9, "F_C={fc} F_Q={fq}");
        prop_assert!(fq <= t * t * probe.seminorm().powi(2) * (1.0 + 1e-8));
    }

    #[test]
    fn field_sign_is_invisible_without_interactions(
        (sites, n, bits) in probe_strategy(),
        field in 0.01f64..4.0,
        t in 0.1f64..200.0,
    ) {
        let probe = StarkProbe::new(ProbeSpec::many_body(sites, n, 0.0, pattern(&bits))).unwrap();
        let plus = probe_truth(&probe, field, t).unwrap();
        let minus = probe_truth(&probe, -field, t).unwrap();
        for (a, b) in plus.p.iter().zip(&minus.p) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn interactions_break_the_field_sign_symmetry() {
    let probe = StarkProbe::new(ProbeSpec::many_body(6, 3, 1.0, InitialState::Neel)).unwrap();
    let plus = probe_truth(&probe, 0.5, 7.0).unwrap();
    let minus = probe_truth(&probe, -0.5, 7.0).unwrap();
    let gap: f64 = plus.p.iter().zip(&minus.p).map(|(a, b)| (a - b).abs()).sum();
    assert!(gap > 1e-3, "{gap}");
}

#[test]
fn dephased_states_stay_physical() {
    for probe in [
        StarkProbe::new(ProbeSpec::single_particle(12, InitialState::CentralSite)).unwrap(),
        StarkProbe::new(ProbeSpec::many_body(6, 3, 0.5, InitialState::Neel)).unwrap(),
    ] {
        let h = probe.hamiltonian(0.4).unwrap();
        let diags = jump_diagonals(starkprobe::DephasingForm::SigmaZ, &probe).unwrap();
        let rho0 = DensityMatrix::from_pure(&probe.initial_state(0.4).amplitudes, 0.0);
        let times: Vec<f64> = (0..=20).map(|k| 5.0 * k as f64).collect();
        let spec = DephasingSpec::sigma_z(0.03).unwrap();
        let traj = integrate_master(h.matrix(), &diags, &spec, &rho0, &times, &IntegratorConfig::default()).unwrap();
        let mut purity = 1.0 + 1e-8;
        for (rho, health) in &traj {
            assert!((rho.trace() - 1.0).abs() < 1e-8);
            assert!(rho.hermiticity_error() < 1e-10);
            assert!(health.min_eigenvalue >= -1e-8);
            assert!(rho.purity() <= purity);
            purity = rho.purity() + 1e-8;
        }
        // Long-time state approaches the maximally mixed one.
        let last = &traj.last().unwrap().0;
        assert!(last.purity() < 2.0 / probe.dim() as f64, "{}", last.purity());
    }
}

#[test]
fn states_from_the_probe_are_normalised() {
    let probe = StarkProbe::new(ProbeSpec::many_body(9, 3, 0.3, InitialState::Centered { excitations: 3 })).unwrap();
    let evo = probe.evolution(0.7).unwrap();
    assert!((vector_norm(&evo.state(123.0)) - 1.0).abs() < 1e-12);
}
