//! Property checks with independent oracles.
//!
//! The oracles here never call the simulator's bit-indexed kernels or the
//! SMO solver: gates are dense `2ⁿ × 2ⁿ` matrices built from matrix
//! exponentials of Pauli generators, partial traces go through an explicit
//! qubit-permutation matrix, and the SVM dual is solved by accelerated
//! projected gradient.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::feature_maps::{encode, FeatureMapFamily, FeatureMapSpec};
use crate::kernels::{
    check_psd, fidelity_kernel, gram_matrix, project_state, rbf_kernel, GramMatrix, KernelSpec,
    ProjectionMode, ProjectionStrategy, DEFAULT_PSD_TOLERANCE,
};
use crate::seeding;
use crate::state::{
    pauli_expectation, run_circuit, sampled_pauli_expectation, Gate, Pauli, PauliObservable,
    Statevector,
};
use crate::svm::{train_smo, TrainConfig};

type CMat = DMatrix<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Dense linear-algebra reference implementations.
pub mod dense {
    use super::*;

    pub fn pauli(p: Pauli) -> CMat {
        let i = Complex64::new(0.0, 1.0);
        match p {
            Pauli::X => CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]),
            Pauli::Y => CMat::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)]),
            Pauli::Z => CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]),
        }
    }

    /// `exp(a)` by scaling and squaring a truncated Taylor series.
    pub fn expm(a: &CMat) -> CMat {
        let norm = a.iter().map(|z| z.norm()).fold(0.0, f64::max) * a.nrows() as f64;
        let squarings = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as u32
        } else {
            0
        };
        let scaled = a / c(2f64.powi(squarings as i32));
        let n = a.nrows();
        let mut result = CMat::identity(n, n);
        let mut term = CMat::identity(n, n);
        for k in 1..30 {
            term = &term * &scaled / c(k as f64);
            result += &term;
        }
        for _ in 0..squarings {
            result = &result * &result;
        }
        result
    }

    /// Operator acting as `ops[q]` on each listed qubit and identity
    /// elsewhere, with qubit 0 as the leftmost tensor factor.
    pub fn embed(n: usize, ops: &[(usize, CMat)]) -> CMat {
        let mut out = CMat::identity(1, 1);
        for q in 0..n {
            let factor = ops
                .iter()
                .find(|(k, _)| *k == q)
                .map(|(_, m)| m.clone())
                .unwrap_or_else(|| CMat::identity(2, 2));
            out = out.kronecker(&factor);
        }
        out
    }

    fn rotation(n: usize, q: usize, p: Pauli, theta: f64) -> CMat {
        let gen = embed(n, &[(q, pauli(p))]);
        expm(&(gen * Complex64::new(0.0, -theta / 2.0)))
    }

    pub fn gate_matrix(gate: &Gate, n: usize) -> CMat {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match *gate {
            Gate::Rx(q, t) => rotation(n, q, Pauli::X, t),
            Gate::Ry(q, t) => rotation(n, q, Pauli::Y, t),
            Gate::Rz(q, t) => rotation(n, q, Pauli::Z, t),
            Gate::H(q) => embed(
                n,
                &[(q, CMat::from_row_slice(2, 2, &[c(h), c(h), c(h), c(-h)]))],
            ),
            Gate::SDag(q) => embed(
                n,
                &[(
                    q,
                    CMat::from_row_slice(
                        2,
                        2,
                        &[c(1.0), c(0.0), c(0.0), Complex64::new(0.0, -1.0)],
                    ),
                )],
            ),
            Gate::Phase(q, t) => embed(
                n,
                &[(
                    q,
                    CMat::from_row_slice(
                        2,
                        2,
                        &[c(1.0), c(0.0), c(0.0), Complex64::from_polar(1.0, t)],
                    ),
                )],
            ),
            Gate::Cnot { control, target } => {
                // |0⟩⟨0|_c ⊗ I + |1⟩⟨1|_c ⊗ X_t
                let p0 = CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
                let p1 = CMat::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(1.0)]);
                embed(n, &[(control, p0)]) + embed(n, &[(control, p1), (target, pauli(Pauli::X))])
            }
            Gate::Rzz(a, b, t) => {
                let gen = embed(n, &[(a, pauli(Pauli::Z)), (b, pauli(Pauli::Z))]);
                expm(&(gen * Complex64::new(0.0, -t / 2.0)))
            }
        }
    }

    /// `U_k ⋯ U_1 |0…0⟩` by dense matrix products.
    pub fn circuit_state(n: usize, gates: &[Gate]) -> DVector<Complex64> {
        let dim = 1 << n;
        let mut u = CMat::identity(dim, dim);
        for g in gates {
            u = gate_matrix(g, n) * u;
        }
        u.column(0).into_owned()
    }

    /// Partial trace onto `keep` via a qubit permutation that moves the kept
    /// qubits (in order) to the front, then a block trace.
    pub fn partial_trace(psi: &DVector<Complex64>, n: usize, keep: &[usize]) -> CMat {
        let dim = 1 << n;
        let rho = psi * psi.adjoint();
        let order: Vec<usize> = keep
            .iter()
            .cloned()
            .chain((0..n).filter(|q| !keep.contains(q)))
            .collect();
        // new position p holds old qubit order[p]
        let mut perm = CMat::zeros(dim, dim);
        for old in 0..dim {
            let mut new = 0;
            for (p, &q) in order.iter().enumerate() {
                if old >> (n - 1 - q) & 1 == 1 {
                    new |= 1 << (n - 1 - p);
                }
            }
            perm[(new, old)] = c(1.0);
        }
        let permuted = &perm * rho * perm.transpose();
        let kd = 1 << keep.len();
        let ed = dim / kd;
        CMat::from_fn(kd, kd, |a, b| {
            (0..ed).map(|e| permuted[(a * ed + e, b * ed + e)]).sum()
        })
    }

    pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Statevector {
        let amps: Vec<Complex64> = (0..1 << n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        Statevector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect())
            .expect("normalized by construction")
    }

    pub fn random_gate(rng: &mut ChaCha8Rng, n: usize) -> Gate {
        let q = rng.gen_range(0..n);
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI) * 2.0;
        let other = |rng: &mut ChaCha8Rng| (q + rng.gen_range(1..n)) % n;
        let choices = if n >= 2 { 8 } else { 6 };
        match rng.gen_range(0..choices) {
            0 => Gate::Rx(q, theta),
            1 => Gate::Ry(q, theta),
            2 => Gate::Rz(q, theta),
            3 => Gate::H(q),
            4 => Gate::SDag(q),
            5 => Gate::Phase(q, theta),
            6 => Gate::Cnot {
                control: q,
                target: other(rng),
            },
            _ => Gate::Rzz(q, other(rng), theta),
        }
    }
}

/// Solves the soft-margin SVM dual by accelerated projected gradient.
pub mod qp {
    use super::*;

    /// Euclidean projection onto `{0 ≤ α ≤ C, yᵀα = 0}` by bisection on the
    /// multiplier of the equality constraint.
    pub fn project(z: &[f64], y: &[f64], c_bound: f64) -> Vec<f64> {
        let at = |lambda: f64| -> Vec<f64> {
            z.iter()
                .zip(y)
                .map(|(zi, yi)| (zi - lambda * yi).clamp(0.0, c_bound))
                .collect()
        };
        let residual = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
        let span = z.iter().map(|v| v.abs()).fold(0.0, f64::max) + c_bound + 1.0;
        let (mut lo, mut hi) = (-span, span);
        // residual is non-increasing in λ
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual(&at(mid)) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi))
    }

    pub fn objective(q: &DMatrix<f64>, alpha: &[f64]) -> f64 {
        let a = DVector::from_column_slice(alpha);
        a.sum() - 0.5 * a.dot(&(q * &a))
    }

    /// Maximizes `Σα − ½αᵀQα` with `Q_ij = y_i y_j K_ij`: FISTA with
    /// gradient restarts, polished by solving the KKT system on the active
    /// set the iterates settle on.
    pub fn solve_dual(k: &GramMatrix, labels: &[i8], c_bound: f64) -> Vec<f64> {
        let n = labels.len();
        let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k.get(i, j));
        let lmax = q.clone().symmetric_eigenvalues().max().max(1e-12);
        let step = 1.0 / lmax;
        let mut x = vec![0.0; n];
        let mut z = x.clone();
        let mut t = 1.0f64;
        for iter in 1..=400_000 {
            let zv = DVector::from_column_slice(&z);
            let grad = &q * &zv - DVector::from_element(n, 1.0);
            let cand: Vec<f64> = z
                .iter()
                .zip(grad.iter())
                .map(|(zi, g)| zi - step * g)
                .collect();
            let next = project(&cand, &y, c_bound);
            let moved = next
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if moved < 1e-15 {
                x = next;
                break;
            }
            if iter % 500 == 0 {
                if let Some(exact) = polish(&q, &y, c_bound, &next) {
                    return exact;
                }
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            // restart momentum when it points uphill
            let uphill: f64 = grad
                .iter()
                .zip(next.iter().zip(&x))
                .map(|(g, (a, b))| g * (a - b))
                .sum();
            if uphill > 0.0 {
                t = 1.0;
                z = x.clone();
                continue;
            }
            z = next
                .iter()
                .zip(&x)
                .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
                .collect();
            x = next;
            t = t_next;
        }
        polish(&q, &y, c_bound, &x).unwrap_or(x)
    }

    /// Solves for the free multipliers and bias with the bound ones held
    /// where `alpha` has them; `None` unless the result satisfies the KKT
    /// conditions.
    fn polish(q: &DMatrix<f64>, y: &[f64], c_bound: f64, alpha: &[f64]) -> Option<Vec<f64>> {
        let n = y.len();
        let edge = 1e-7 * c_bound;
        let mut fixed = alpha.to_vec();
        let mut free = Vec::new();
        for i in 0..n {
            if alpha[i] <= edge {
                fixed[i] = 0.0;
            } else if alpha[i] >= c_bound - edge {
                fixed[i] = c_bound;
            } else {
                free.push(i);
            }
        }
        let m = free.len();
        let mut sol = fixed.clone();
        let bias;
        if m > 0 {
            // [Q_FF y_F; y_Fᵀ 0] [α_F; b] = [1 − Q_FB α_B; −y_Bᵀ α_B]
            let bound: Vec<usize> = (0..n).filter(|i| !free.contains(i)).collect();
            let mut a = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    a[(r, c)] = q[(i, j)];
                }
                a[(r, m)] = y[i];
                a[(m, r)] = y[i];
                rhs[r] = 1.0 - bound.iter().map(|&j| q[(i, j)] * fixed[j]).sum::<f64>();
            }
            rhs[m] = -bound.iter().map(|&j| y[j] * fixed[j]).sum::<f64>();
            // minimum-norm correction from the iterate, since Q_FF may be singular
            let mut current = DVector::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                current[r] = alpha[i];
            }
            let residual = &rhs - &a * &current;
            let solved = current + a.svd(true, true).solve(&residual, 1e-12).ok()?;
            for (r, &i) in free.iter().enumerate() {
                if solved[r] < -1e-12 || solved[r] > c_bound + 1e-12 {
                    return None;
                }
                sol[i] = solved[r].clamp(0.0, c_bound);
            }
            bias = solved[m];
        } else {
            if y.iter().zip(&fixed).map(|(a, b)| a * b).sum::<f64>().abs() > 1e-9 {
                return None;
            }
            bias = 0.0;
        }
        let sv = DVector::from_column_slice(&sol);
        let g = q * &sv - DVector::from_element(n, 1.0);
        let tol = 1e-9;
        let ok = (0..n).all(|i| {
            let r = g[i] + bias * y[i];
            if free.contains(&i) {
                r.abs() <= tol
            } else if sol[i] == 0.0 {
                r >= -tol
            } else {
                r <= tol
            }
        });
        // with no free multipliers the bias is any point of an interval
        let ok = ok
            || (m == 0 && {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..n {
                    // need g_i + b y_i ≥ 0 at zero and ≤ 0 at C
                    let want_ge = sol[i] == 0.0;
                    let bound = -g[i] * y[i];
                    if want_ge == (y[i] > 0.0) {
                        lo = lo.max(bound);
                    } else {
                        hi = hi.min(bound);
                    }
                }
                lo <= hi + tol
            });
        ok.then_some(sol)
    }

    /// Decision value `Σ α_j y_j k_j + b` with `b` averaged over free
    /// multipliers (midpoint of the feasible interval when none are free).
    pub fn decision(
        k: &GramMatrix,
        labels: &[i8],
        alpha: &[f64],
        c_bound: f64,
        row: &[f64],
    ) -> f64 {
        let n = labels.len();
        let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        let f = |i: usize| (0..n).map(|j| alpha[j] * y[j] * k.get(i, j)).sum::<f64>();
        let tol = 1e-8;
        let free: Vec<usize> = (0..n)
            .filter(|&i| alpha[i] > tol && alpha[i] < c_bound - tol)
            .collect();
        let bias = if !free.is_empty() {
            free.iter().map(|&i| y[i] - f(i)).sum::<f64>() / free.len() as f64
        } else {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..n {
                let v = y[i] - f(i);
                if (alpha[i] <= tol) == (y[i] > 0.0) {
                    lo = lo.max(v);
                } else {
                    hi = hi.min(v);
                }
            }
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo,
                _ => hi,
            }
        };
        (0..n).map(|j| alpha[j] * y[j] * row[j]).sum::<f64>() + bias
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Observed statistic (maximum error, minimum eigenvalue, ...).
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, metric: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            metric,
            threshold,
            detail,
        }
    }
}

fn max_abs_diff<'a>(
    a: impl Iterator<Item = &'a Complex64>,
    b: impl Iterator<Item = &'a Complex64>,
) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Random circuits on 1–3 qubits against dense matrix products.
pub fn simulator_oracle(seed: u64, circuits: usize) -> Result<CheckOutcome> {
    let mut rng = seeding::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..circuits {
        let n = rng.gen_range(1..=3);
        let len = rng.gen_range(1..=12);
        let gates: Vec<Gate> = (0..len).map(|_| dense::random_gate(&mut rng, n)).collect();
        let sim = run_circuit(n, &gates)?;
        let reference = dense::circuit_state(n, &gates);
        worst = worst.max(max_abs_diff(sim.amplitudes().iter(), reference.iter()));
    }
    Ok(CheckOutcome::new(
        "simulator_vs_dense",
        worst < 1e-12,
        worst,
        1e-12,
        format!("{circuits} random circuits, max amplitude error"),
    ))
}

/// Random partial traces against the permuted full density matrix, plus the
/// density-matrix invariants.
pub fn rdm_oracle(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = seeding::rng(seed);
    let mut worst = 0.0f64;
    let mut invariant_failures = 0;
    for _ in 0..cases {
        let n = rng.gen_range(2..=4);
        let state = dense::random_state(&mut rng, n);
        let m = rng.gen_range(1..=n.min(3));
        let mut qubits: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(qubits.as_mut_slice(), &mut rng);
        let keep = &qubits[..m];
        let rho = state.reduced_density_matrix(keep)?;
        let psi = DVector::from_column_slice(state.amplitudes());
        let reference = dense::partial_trace(&psi, n, keep);
        worst = worst.max(max_abs_diff(
            rho.entries().iter(),
            reference.transpose().iter(),
        ));
        if rho.check_invariants().is_err() {
            invariant_failures += 1;
        }
    }
    Ok(CheckOutcome::new(
        "rdm_vs_dense",
        worst < 1e-12 && invariant_failures == 0,
        worst,
        1e-12,
        format!("{cases} random partial traces, {invariant_failures} invariant failures"),
    ))
}

/// RotX closed forms: fidelity `Π cos²(x_j − y_j)` and M1 features
/// `(0, −sin 2x_j, cos 2x_j)`.
pub fn rotx_identities(seed: u64, cases: usize) -> Result<CheckOutcome> {
    let mut rng = seeding::rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.gen_range(1..=6);
        let map = FeatureMapSpec::new(FeatureMapFamily::RotX, n);
        let x: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0.0..std::f64::consts::PI))
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0.0..std::f64::consts::PI))
            .collect();
        let closed: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).cos().powi(2))
            .product();
        worst = worst.max((fidelity_kernel(&x, &y, &map)? - closed).abs());

        let strategy = ProjectionStrategy::new(ProjectionMode::M1, n)?;
        let feats = project_state(&encode(&map, &x)?, &strategy, None)?;
        for (j, &xj) in x.iter().enumerate() {
            let expected = [0.0, -(2.0 * xj).sin(), (2.0 * xj).cos()];
            for (k, e) in expected.iter().enumerate() {
                worst = worst.max((feats.values()[3 * j + k] - e).abs());
            }
        }
    }
    Ok(CheckOutcome::new(
        "rotx_closed_forms",
        worst < 1e-10,
        worst,
        1e-10,
        format!("{cases} random vector pairs"),
    ))
}

fn random_points(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| rng.gen_range(0.0..std::f64::consts::PI))
                .collect()
        })
        .collect()
}

/// PQK Gram versus RBF Gram over independently recomputed projected features.
pub fn pqk_rbf_equivalence(seed: u64, points: usize) -> Result<CheckOutcome> {
    let mut rng = seeding::rng(seed);
    let data = random_points(&mut rng, points, 6);
    let mut mismatches = 0usize;
    let mut total = 0usize;
    for (family, ring) in [
        (FeatureMapFamily::RotX, false),
        (FeatureMapFamily::ThreeD, true),
        (FeatureMapFamily::IQP, false),
    ] {
        let map = FeatureMapSpec::new(family, 6).with_ring(ring);
        for mode in ProjectionMode::ALL {
            let gamma = 0.37;
            let spec = KernelSpec::Projected {
                gamma,
                feature_map: map.clone(),
                strategy: mode,
                shots: None,
            };
            let gram = gram_matrix(&data, &spec)?;
            let strategy = ProjectionStrategy::new(mode, 6)?;
            let feats: Vec<Vec<f64>> = data
                .iter()
                .map(|x| Ok(project_state(&encode(&map, x)?, &strategy, None)?.0))
                .collect::<Result<_>>()?;
            for i in 0..points {
                for j in 0..points {
                    total += 1;
                    if gram.get(i, j).to_bits()
                        != rbf_kernel(&feats[i], &feats[j], gamma)?.to_bits()
                    {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    Ok(CheckOutcome::new(
        "pqk_equals_rbf_on_projections",
        mismatches == 0,
        mismatches as f64,
        0.0,
        format!("{total} entries compared bitwise"),
    ))
}

/// Minimum eigenvalue over every exact kernel kind on random points.
pub fn psd_all_kernels(seed: u64, points: usize) -> Result<CheckOutcome> {
    let mut rng = seeding::rng(seed);
    let data = random_points(&mut rng, points, 6);
    let mut specs = vec![KernelSpec::Rbf { gamma: 0.5 }];
    for family in FeatureMapFamily::ALL {
        for ring in [false, true] {
            if ring && family != FeatureMapFamily::ThreeD {
                continue;
            }
            let map = FeatureMapSpec::new(family, 6).with_ring(ring);
            specs.push(KernelSpec::Fidelity {
                feature_map: map.clone(),
            });
            for mode in ProjectionMode::ALL {
                specs.push(KernelSpec::Projected {
                    gamma: 0.2,
                    feature_map: map.clone(),
                    strategy: mode,
                    shots: None,
                });
            }
        }
    }
    let mut worst = f64::INFINITY;
    let mut worst_kernel = String::new();
    for spec in &specs {
        let gram = gram_matrix(&data, spec)?;
        gram.check_invariants(1e-9)?;
        let report = check_psd(&gram, DEFAULT_PSD_TOLERANCE);
        if report.min_eigenvalue < worst {
            worst = report.min_eigenvalue;
            worst_kernel = spec.describe();
        }
    }
    Ok(CheckOutcome::new(
        "gram_psd",
        worst >= DEFAULT_PSD_TOLERANCE,
        worst,
        DEFAULT_PSD_TOLERANCE,
        format!(
            "{} kernels over {points} points; lowest from {worst_kernel}",
            specs.len()
        ),
    ))
}

/// SMO against the projected-gradient oracle on small random problems, plus
/// the two-point analytic solution.
pub fn svm_oracle(seed: u64, datasets: usize) -> Result<CheckOutcome> {
    let mut rng = seeding::rng(seed);
    let mut worst_obj = 0.0f64;
    let mut disagreements = 0usize;
    let mut queries = 0usize;
    for _ in 0..datasets {
        let n = rng.gen_range(4..=12);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let mut labels: Vec<i8> = (0..n)
            .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
            .collect();
        labels[0] = 1;
        labels[1] = -1;
        let gamma = rng.gen_range(0.5..5.0);
        let c_bound = rng.gen_range(0.5..10.0);
        let spec = KernelSpec::Rbf { gamma };
        let k = gram_matrix(&pts, &spec)?;

        let model = train_smo(
            &k,
            &labels,
            &TrainConfig::new(c_bound).with_tolerance(1e-10),
        )?;
        let oracle = qp::solve_dual(&k, &labels, c_bound);
        let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k.get(i, j));
        worst_obj =
            worst_obj.max((qp::objective(&q, &model.alphas) - qp::objective(&q, &oracle)).abs());

        for gx in 0..9 {
            for gy in 0..9 {
                let query = [gx as f64 / 8.0 * 1.4 - 0.2, gy as f64 / 8.0 * 1.4 - 0.2];
                let row: Vec<f64> = pts
                    .iter()
                    .map(|p| rbf_kernel(p, &query, gamma))
                    .collect::<Result<_>>()?;
                let smo = model.predict(&row)?;
                let reference = crate::svm::sign(qp::decision(&k, &labels, &oracle, c_bound, &row));
                queries += 1;
                if smo != reference {
                    disagreements += 1;
                }
            }
        }
    }

    let two = GramMatrix::from_rows(vec![vec![1.0, -1.0], vec![-1.0, 1.0]])?;
    let analytic = train_smo(&two, &[-1, 1], &TrainConfig::new(10.0))?;
    let analytic_err = (analytic.alphas[0] - 0.5)
        .abs()
        .max((analytic.alphas[1] - 0.5).abs())
        .max(analytic.bias.abs());

    Ok(CheckOutcome::new(
        "smo_vs_qp_oracle",
        worst_obj <= 1e-6 && disagreements == 0 && analytic_err <= 1e-9,
        worst_obj,
        1e-6,
        format!(
            "{datasets} datasets; {disagreements}/{queries} prediction disagreements; two-point analytic error {analytic_err:.1e}"
        ),
    ))
}

/// Estimates of ⟨X⟩ on |0⟩ across `seeds` seeds at each shot count.
pub fn shot_estimates(seed: u64, shots: usize, seeds: usize) -> Result<Vec<f64>> {
    let zero = Statevector::zero(1)?;
    let x = PauliObservable::single(0, Pauli::X);
    (0..seeds)
        .map(|s| sampled_pauli_expectation(&zero, &x, shots, seeding::derive(seed, s as u64)))
        .collect()
}

fn mean_and_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Least-squares slope of `log(std)` against `log(shots)`.
pub fn shot_error_exponent(seed: u64, shot_counts: &[usize], seeds: usize) -> Result<f64> {
    let pts: Vec<(f64, f64)> = shot_counts
        .iter()
        .map(|&s| {
            let (_, sd) = mean_and_std(&shot_estimates(seed ^ s as u64, s, seeds)?);
            Ok(((s as f64).ln(), sd.ln()))
        })
        .collect::<Result<_>>()?;
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Unbiasedness within three standard errors and `1/√shots` error scaling.
pub fn shot_statistics(seed: u64) -> Result<CheckOutcome> {
    let seeds = 200;
    let shots = 4096;
    let (mean, _) = mean_and_std(&shot_estimates(seed, shots, seeds)?);
    // ⟨X⟩ on |0⟩: each shot is ±1 with variance 1
    let bound = 3.0 / ((seeds * shots) as f64).sqrt();
    let exponent = shot_error_exponent(seed, &[64, 256, 1024, 4096], seeds)?;
    let exact = {
        let rho = Statevector::zero(1)?.reduced_density_matrix(&[0])?;
        pauli_expectation(&rho, &PauliObservable::single(0, Pauli::X))?
    };
    Ok(CheckOutcome::new(
        "shot_estimator_statistics",
        (mean - exact).abs() <= bound && (exponent + 0.5).abs() <= 0.1,
        exponent,
        -0.5,
        format!("mean {mean:.3e} (bound {bound:.3e}); error exponent {exponent:.4}"),
    ))
}

/// Sampled PQK Gram against the exact one.
pub fn sampled_gram_deviation(seed: u64, points: usize, shots: usize) -> Result<f64> {
    let mut rng = seeding::rng(seed);
    let data = random_points(&mut rng, points, 6);
    let map = FeatureMapSpec::new(FeatureMapFamily::ThreeD, 6).with_ring(true);
    let exact = KernelSpec::Projected {
        gamma: 0.1,
        feature_map: map,
        strategy: ProjectionMode::M2,
        shots: None,
    };
    let sampled = exact.with_shots(Some(crate::kernels::ShotConfig { shots, seed }));
    let a = gram_matrix(&data, &exact)?;
    let b = gram_matrix(&data, &sampled)?;
    Ok(a.entries()
        .iter()
        .zip(b.entries())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Every check, in a fixed order.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        simulator_oracle(seeding::derive(seed, 1), 100)?,
        rdm_oracle(seeding::derive(seed, 2), 100)?,
        rotx_identities(seeding::derive(seed, 3), 100)?,
        pqk_rbf_equivalence(seeding::derive(seed, 4), 50)?,
        psd_all_kernels(seeding::derive(seed, 5), 200)?,
        svm_oracle(seeding::derive(seed, 6), 50)?,
        shot_statistics(seeding::derive(seed, 7))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_pauli_rotation() {
        // exp(−iπX/2) = −iX
        let m = dense::expm(
            &(dense::pauli(Pauli::X) * Complex64::new(0.0, -std::f64::consts::FRAC_PI_2)),
        );
        assert!(m[(0, 0)].norm() < 1e-14);
        assert!((m[(0, 1)] - Complex64::new(0.0, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn projection_is_feasible() {
        let y = [1.0, -1.0, 1.0, -1.0];
        let a = qp::project(&[3.0, -2.0, 0.5, 0.7], &y, 1.0);
        assert!(a.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(a.iter().zip(&y).map(|(a, y)| a * y).sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn qp_oracle_two_point() {
        let k = GramMatrix::from_rows(vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let a = qp::solve_dual(&k, &[-1, 1], 10.0);
        assert!((a[0] - 0.5).abs() < 1e-9 && (a[1] - 0.5).abs() < 1e-9);
    }
}
