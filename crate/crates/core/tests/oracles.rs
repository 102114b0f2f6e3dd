//! Simulator, feature-map and kernel results checked against dense
//! reference computations and closed forms.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use qkernel::feature_maps::{
    build_3d_circuit, build_iqp_circuit, build_rotx_circuit, build_trotter_circuit,
    build_zz_circuit,
};
use qkernel::kernels::{check_psd, fidelity_kernel, gram_matrix, project_state, rbf_kernel};
use qkernel::seeding;
use qkernel::state::{run_circuit, GateKind};
use qkernel::validation::{self, dense};
use qkernel::{
    encode, FeatureMapFamily, FeatureMapSpec, Gate, KernelSpec, Pauli, ProjectionMode,
    ProjectionStrategy, Statevector,
};

fn max_diff(a: &[Complex64], b: &DVector<Complex64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `|⟨a|b⟩|²` for a simulator state and a dense vector.
fn overlap_sq(a: &Statevector, b: &DVector<Complex64>) -> f64 {
    a.amplitudes()
        .iter()
        .zip(b.iter())
        .map(|(x, y)| x.conj() * y)
        .sum::<Complex64>()
        .norm_sqr()
}

#[test]
fn rx_pi_matches_matrix_exponential() {
    let sim = run_circuit(1, &[Gate::Rx(0, PI)]).unwrap();
    let reference = dense::circuit_state(1, &[Gate::Rx(0, PI)]);
    assert!(max_diff(sim.amplitudes(), &reference) < 1e-12);
    assert!((sim.amplitudes()[1] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
}

#[test]
fn random_three_qubit_circuits_match_dense_products() {
    let mut rng = seeding::rng(2024);
    for _ in 0..100 {
        let gates: Vec<Gate> = (0..10).map(|_| dense::random_gate(&mut rng, 3)).collect();
        let sim = run_circuit(3, &gates).unwrap();
        let reference = dense::circuit_state(3, &gates);
        assert!(max_diff(sim.amplitudes(), &reference) < 1e-12);
    }
}

#[test]
fn partial_trace_matches_full_density_matrix() {
    let mut rng = seeding::rng(7);
    for _ in 0..20 {
        let s = dense::random_state(&mut rng, 3);
        let rho = s.reduced_density_matrix(&[0, 2]).unwrap();
        let reference =
            dense::partial_trace(&DVector::from_column_slice(s.amplitudes()), 3, &[0, 2]);
        for r in 0..4 {
            for c in 0..4 {
                assert!((rho.get(r, c) - reference[(r, c)]).norm() < 1e-12);
            }
        }
        rho.check_invariants().unwrap();
    }
}

#[test]
fn three_d_single_qubit_matches_rotation_product() {
    let x = FRAC_PI_2;
    let sim = encode(&FeatureMapSpec::new(FeatureMapFamily::ThreeD, 1), &[x]).unwrap();
    // RZ·RY·RX applied to |0⟩
    let u = dense::gate_matrix(&Gate::Rz(0, x), 1)
        * dense::gate_matrix(&Gate::Ry(0, x), 1)
        * dense::gate_matrix(&Gate::Rx(0, x), 1);
    let reference = u.column(0).into_owned();
    assert!(max_diff(sim.amplitudes(), &reference) < 1e-12);
}

#[test]
fn iqp_two_qubits_matches_diagonal_evolution() {
    let x = [0.8, 2.1];
    let sim = run_circuit(2, &build_iqp_circuit(&x, 1).unwrap()).unwrap();
    let z0 = dense::embed(2, &[(0, dense::pauli(Pauli::Z))]);
    let z1 = dense::embed(2, &[(1, dense::pauli(Pauli::Z))]);
    let zz = dense::embed(
        2,
        &[(0, dense::pauli(Pauli::Z)), (1, dense::pauli(Pauli::Z))],
    );
    let generator = (z0 * Complex64::from(x[0])
        + z1 * Complex64::from(x[1])
        + zz * Complex64::from(x[0] * x[1]))
        * Complex64::new(0.0, -1.0);
    let hh = dense::gate_matrix(&Gate::H(0), 2) * dense::gate_matrix(&Gate::H(1), 2);
    let reference = (dense::expm(&generator) * hh).column(0).into_owned();
    assert!((overlap_sq(&sim, &reference) - 1.0).abs() < 1e-12);
}

#[test]
fn trotter_two_qubits_matches_heisenberg_step() {
    let x = [0.3, 0.7];
    let tau = FRAC_PI_4;
    let sim = run_circuit(2, &build_trotter_circuit(&x, 1, tau).unwrap()).unwrap();
    // upload, then exp(−iτ(XX + YY + ZZ)); the three terms commute on two qubits
    let term = |p| dense::embed(2, &[(0, dense::pauli(p)), (1, dense::pauli(p))]);
    let h = term(Pauli::X) + term(Pauli::Y) + term(Pauli::Z);
    let evolution = dense::expm(&(h * Complex64::new(0.0, -tau)));
    let upload = dense::gate_matrix(&Gate::Rx(1, 2.0 * x[1]), 2)
        * dense::gate_matrix(&Gate::Rx(0, 2.0 * x[0]), 2);
    let reference = (evolution * upload).column(0).into_owned();
    assert!((overlap_sq(&sim, &reference) - 1.0).abs() < 1e-12);
    // the gate product itself, without the commuting-term shortcut
    let gates = build_trotter_circuit(&x, 1, tau).unwrap();
    assert!(max_diff(sim.amplitudes(), &dense::circuit_state(2, &gates)) < 1e-12);
}

#[test]
fn zz_map_matches_dense_products() {
    let x = [0.4, 1.3, 2.2];
    let gates = build_zz_circuit(&x, 2).unwrap();
    let sim = run_circuit(3, &gates).unwrap();
    assert!(max_diff(sim.amplitudes(), &dense::circuit_state(3, &gates)) < 1e-12);
}

#[test]
fn gate_counts_follow_structure() {
    for n in 2..=8 {
        let x = vec![0.5; n];
        let pairs = n * (n - 1) / 2;
        assert_eq!(build_rotx_circuit(&x).unwrap().len(), n);
        assert_eq!(build_3d_circuit(&x, false).unwrap().len(), 3 * n);
        assert_eq!(build_3d_circuit(&x, true).unwrap().len(), 4 * n);
        assert_eq!(
            build_zz_circuit(&x, 2).unwrap().len(),
            2 * (2 * n + 3 * pairs)
        );
        assert_eq!(build_iqp_circuit(&x, 2).unwrap().len(), 2 * (2 * n + pairs));
        assert_eq!(
            build_trotter_circuit(&x, 3, 1.0).unwrap().len(),
            n + 3 * (n - 1) * 15
        );
        assert!(build_rotx_circuit(&x)
            .unwrap()
            .iter()
            .all(|g| g.kind() == GateKind::Rx));
    }
}

#[test]
fn rotx_encoding_factorizes() {
    let mut rng = seeding::rng(11);
    for _ in 0..100 {
        let n = rng.gen_range(1..=5);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..PI)).collect();
        let state = encode(&FeatureMapSpec::new(FeatureMapFamily::RotX, n), &x).unwrap();
        // product of (cos x_j, −i sin x_j) factors, qubit 0 most significant
        for (idx, amp) in state.amplitudes().iter().enumerate() {
            let expected = (0..n).fold(Complex64::new(1.0, 0.0), |acc, j| {
                let bit = idx >> (n - 1 - j) & 1;
                acc * if bit == 0 {
                    Complex64::new(x[j].cos(), 0.0)
                } else {
                    Complex64::new(0.0, -x[j].sin())
                }
            });
            assert!((amp - expected).norm() < 1e-12);
        }
    }
}

#[test]
fn three_d_entanglement_depends_on_ring() {
    let mut rng = seeding::rng(5);
    let mut saw_mixed = false;
    for _ in 0..20 {
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..PI)).collect();
        let plain = encode(&FeatureMapSpec::new(FeatureMapFamily::ThreeD, 6), &x).unwrap();
        for q in 0..6 {
            assert!((plain.reduced_density_matrix(&[q]).unwrap().purity() - 1.0).abs() < 1e-9);
        }
        let ring = encode(
            &FeatureMapSpec::new(FeatureMapFamily::ThreeD, 6).with_ring(true),
            &x,
        )
        .unwrap();
        saw_mixed |=
            (0..6).any(|q| ring.reduced_density_matrix(&[q]).unwrap().purity() < 1.0 - 1e-3);
    }
    assert!(saw_mixed);
}

#[test]
fn every_encoding_is_normalized() {
    let mut rng = seeding::rng(8);
    for family in FeatureMapFamily::ALL {
        for _ in 0..10 {
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..PI)).collect();
            let s = encode(&FeatureMapSpec::new(family, 6), &x).unwrap();
            assert!((s.norm_sqr() - 1.0).abs() < 1e-10, "{family}");
        }
    }
}

#[test]
fn fidelity_rotx_closed_form() {
    let out = validation::rotx_identities(99, 100).unwrap();
    assert!(out.passed, "{out:?}");
    let map = FeatureMapSpec::new(FeatureMapFamily::RotX, 3);
    let (x, y) = ([0.1, 0.9, 2.0], [1.5, 0.2, 2.9]);
    let expected: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b): (&f64, &f64)| (a - b).cos().powi(2))
        .product();
    assert!((fidelity_kernel(&x, &y, &map).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn rotx_m1_projection_closed_form() {
    let x = [0.2, 1.1, 2.7];
    let s = encode(&FeatureMapSpec::new(FeatureMapFamily::RotX, 3), &x).unwrap();
    let f = project_state(
        &s,
        &ProjectionStrategy::new(ProjectionMode::M1, 3).unwrap(),
        None,
    )
    .unwrap();
    for (j, xj) in x.iter().enumerate() {
        let expected = [0.0, -(2.0 * xj).sin(), (2.0 * xj).cos()];
        for (got, want) in f.values()[3 * j..3 * j + 3].iter().zip(expected) {
            assert!((got - want).abs() < 1e-10);
        }
    }
}

fn random_rows(seed: u64, count: usize) -> Vec<Vec<f64>> {
    let mut rng = seeding::rng(seed);
    (0..count)
        .map(|_| (0..6).map(|_| rng.gen_range(0.0..PI)).collect())
        .collect()
}

#[test]
fn pqk_gram_equals_rbf_over_recomputed_projections() {
    let rows = random_rows(3, 50);
    let map = FeatureMapSpec::new(FeatureMapFamily::RotX, 6);
    let spec = KernelSpec::Projected {
        gamma: 0.8,
        feature_map: map.clone(),
        strategy: ProjectionMode::M1,
        shots: None,
    };
    let gram = gram_matrix(&rows, &spec).unwrap();
    let strategy = ProjectionStrategy::new(ProjectionMode::M1, 6).unwrap();
    let feats: Vec<Vec<f64>> = rows
        .iter()
        .map(|x| {
            project_state(&encode(&map, x).unwrap(), &strategy, None)
                .unwrap()
                .0
        })
        .collect();
    for i in 0..50 {
        for j in 0..50 {
            let direct = rbf_kernel(&feats[i], &feats[j], 0.8).unwrap();
            assert!((gram.get(i, j) - direct).abs() < 1e-12);
            assert_eq!(gram.get(i, j).to_bits(), direct.to_bits());
        }
    }
}

#[test]
fn exact_pqk_grams_are_psd() {
    let rows = random_rows(17, 100);
    for mode in ProjectionMode::ALL {
        for family in FeatureMapFamily::ALL {
            let spec = KernelSpec::Projected {
                gamma: 0.3,
                feature_map: FeatureMapSpec::new(family, 6),
                strategy: mode,
                shots: None,
            };
            let report = check_psd(&gram_matrix(&rows, &spec).unwrap(), -1e-8);
            assert!(
                report.passed,
                "{} min eigenvalue {}",
                spec.describe(),
                report.min_eigenvalue
            );
        }
    }
}

#[test]
fn sampled_gram_concentrates_on_exact() {
    // 65536 shots: per-entry deviation below 0.02 for (nearly) every seed
    let mut within = 0;
    let trials = 20;
    for seed in 0..trials {
        if validation::sampled_gram_deviation(seed, 20, 65536).unwrap() < 0.02 {
            within += 1;
        }
    }
    assert!(
        within as f64 / trials as f64 >= 0.99 - 1e-12,
        "{within}/{trials}"
    );
}

#[test]
fn shot_estimator_is_unbiased_and_scales() {
    let out = validation::shot_statistics(31).unwrap();
    assert!(out.passed, "{out:?}");
}

#[test]
fn simulator_and_rdm_checks_pass() {
    for out in [
        validation::simulator_oracle(1, 100).unwrap(),
        validation::rdm_oracle(2, 100).unwrap(),
    ] {
        assert!(out.passed, "{out:?}");
    }
}

#[test]
fn dense_partial_trace_of_bell_state() {
    let bell = run_circuit(
        2,
        &[
            Gate::H(0),
            Gate::Cnot {
                control: 0,
                target: 1,
            },
        ],
    )
    .unwrap();
    let reference = dense::partial_trace(&DVector::from_column_slice(bell.amplitudes()), 2, &[0]);
    let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]).map(Complex64::from);
    assert!((reference - expected).norm() < 1e-15);
}
