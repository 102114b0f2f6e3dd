//! Dense statevector simulator.
//!
//! Qubit 0 is the most significant bit of the amplitude index: on three
//! qubits, index `0b100` is `|100⟩` with qubit 0 in state `|1⟩`.
//!
//! Rotations follow the half-angle convention `R_A(θ) = exp(−iθA/2)`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 12;

const NORM_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Wraps raw amplitudes; the length must be a power of two and the vector
    /// normalized within 1e-10.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::usage(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubit_count(n_qubits)?;
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::usage(format!(
                "state is not normalized (norm² = {norm})"
            )));
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Statevector) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::usage(format!(
                "inner product of {}-qubit and {}-qubit states",
                self.n_qubits, other.n_qubits
            )));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Returns `U_gate · self`.
    pub fn apply(&self, gate: &Gate) -> Result<Statevector> {
        let mut out = self.clone();
        out.apply_in_place(gate)?;
        Ok(out)
    }

    pub fn apply_in_place(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match *gate {
            Gate::Cnot { control, target } => {
                let cm = self.mask(control);
                let tm = self.mask(target);
                for idx in 0..self.amps.len() {
                    if idx & cm != 0 && idx & tm == 0 {
                        self.amps.swap(idx, idx | tm);
                    }
                }
            }
            Gate::Rzz(a, b, theta) => {
                let (am, bm) = (self.mask(a), self.mask(b));
                let even = Complex64::from_polar(1.0, -theta / 2.0);
                let odd = Complex64::from_polar(1.0, theta / 2.0);
                for (idx, amp) in self.amps.iter_mut().enumerate() {
                    let parity = ((idx & am) != 0) ^ ((idx & bm) != 0);
                    *amp *= if parity { odd } else { even };
                }
            }
            _ => {
                let m = gate.single_qubit_matrix().expect("single-qubit gate");
                let mask = self.mask(gate.qubits()[0]);
                for idx in 0..self.amps.len() {
                    if idx & mask == 0 {
                        let a0 = self.amps[idx];
                        let a1 = self.amps[idx | mask];
                        self.amps[idx] = m[0][0] * a0 + m[0][1] * a1;
                        self.amps[idx | mask] = m[1][0] * a0 + m[1][1] * a1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Partial trace of `|ψ⟩⟨ψ|` over every qubit not in `keep`.
    ///
    /// The order of `keep` fixes the basis ordering of the result: `keep[0]`
    /// is the most significant bit of the reduced index.
    pub fn reduced_density_matrix(&self, keep: &[usize]) -> Result<DensityMatrix> {
        check_subset(keep, self.n_qubits)?;
        let (kept_index, env_index) = self.split_indices(keep);
        let dim = kept_index.len();
        let mut entries = vec![ZERO; dim * dim];
        for r in 0..dim {
            for c in r..dim {
                let v: Complex64 = env_index
                    .iter()
                    .map(|&e| self.amps[kept_index[r] | e] * self.amps[kept_index[c] | e].conj())
                    .sum();
                entries[r * dim + c] = v;
                entries[c * dim + r] = v.conj();
            }
        }
        Ok(DensityMatrix {
            n_qubits: keep.len(),
            entries,
        })
    }

    /// Computational-basis outcome probabilities of the qubits in `qubits`,
    /// indexed with `qubits[0]` as the most significant bit.
    pub fn marginal_probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        check_subset(qubits, self.n_qubits)?;
        let (kept_index, env_index) = self.split_indices(qubits);
        Ok(kept_index
            .iter()
            .map(|&k| env_index.iter().map(|&e| self.amps[k | e].norm_sqr()).sum())
            .collect())
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    /// Full-register index offsets for every assignment of the kept qubits,
    /// and for every assignment of the remaining ones.
    fn split_indices(&self, keep: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let rest: Vec<usize> = (0..self.n_qubits).filter(|q| !keep.contains(q)).collect();
        let scatter = |qubits: &[usize]| -> Vec<usize> {
            (0..1usize << qubits.len())
                .map(|local| {
                    qubits.iter().enumerate().fold(0, |acc, (pos, &q)| {
                        if local & (1 << (qubits.len() - 1 - pos)) != 0 {
                            acc | self.mask(q)
                        } else {
                            acc
                        }
                    })
                })
                .collect()
        };
        (scatter(keep), scatter(&rest))
    }
}

/// Left-to-right application of `circuit` to `|0…0⟩`.
pub fn run_circuit(n_qubits: usize, circuit: &[Gate]) -> Result<Statevector> {
    let mut state = Statevector::zero(n_qubits)?;
    for gate in circuit {
        state.apply_in_place(gate)?;
    }
    Ok(state)
}

fn check_qubit_count(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::config(format!(
            "qubit count {n_qubits} outside 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

fn check_subset(qubits: &[usize], n_qubits: usize) -> Result<()> {
    if qubits.is_empty() {
        return Err(Error::usage("empty qubit subset"));
    }
    for (i, &q) in qubits.iter().enumerate() {
        if q >= n_qubits {
            return Err(Error::usage(format!(
                "qubit {q} out of range for a {n_qubits}-qubit state"
            )));
        }
        if qubits[..i].contains(&q) {
            return Err(Error::usage(format!("qubit {q} listed twice")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    H,
    SDag,
    Phase,
    Cnot,
    Rzz,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    Rx(usize, f64),
    Ry(usize, f64),
    Rz(usize, f64),
    H(usize),
    SDag(usize),
    /// `diag(1, e^{iθ})`.
    Phase(usize, f64),
    Cnot {
        control: usize,
        target: usize,
    },
    /// `exp(−iθ Z⊗Z / 2)`.
    Rzz(usize, usize, f64),
}

impl Gate {
    pub fn kind(&self) -> GateKind {
        match self {
            Gate::Rx(..) => GateKind::Rx,
            Gate::Ry(..) => GateKind::Ry,
            Gate::Rz(..) => GateKind::Rz,
            Gate::H(_) => GateKind::H,
            Gate::SDag(_) => GateKind::SDag,
            Gate::Phase(..) => GateKind::Phase,
            Gate::Cnot { .. } => GateKind::Cnot,
            Gate::Rzz(..) => GateKind::Rzz,
        }
    }

    /// Qubits acted on; for CNOT the control comes first.
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Rx(q, _)
            | Gate::Ry(q, _)
            | Gate::Rz(q, _)
            | Gate::H(q)
            | Gate::SDag(q)
            | Gate::Phase(q, _) => vec![q],
            Gate::Cnot { control, target } => vec![control, target],
            Gate::Rzz(a, b, _) => vec![a, b],
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx(_, t) | Gate::Ry(_, t) | Gate::Rz(_, t) | Gate::Phase(_, t) => Some(t),
            Gate::Rzz(_, _, t) => Some(t),
            Gate::H(_) | Gate::SDag(_) | Gate::Cnot { .. } => None,
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let qs = self.qubits();
        if let Some(&q) = qs.iter().find(|&&q| q >= n_qubits) {
            return Err(Error::usage(format!(
                "{:?} acts on qubit {q} of a {n_qubits}-qubit state",
                self.kind()
            )));
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(Error::usage(format!(
                "{:?} needs two distinct qubits, got {} twice",
                self.kind(),
                qs[0]
            )));
        }
        if let Some(t) = self.angle() {
            if !t.is_finite() {
                return Err(Error::usage(format!(
                    "{:?} angle is not finite",
                    self.kind()
                )));
            }
        }
        Ok(())
    }

    /// Row-major 2×2 unitary for single-qubit gates.
    pub fn single_qubit_matrix(&self) -> Option<[[Complex64; 2]; 2]> {
        let m = match *self {
            Gate::Rx(_, t) => {
                let (s, c) = (t / 2.0).sin_cos();
                [[c.into(), -I * s], [-I * s, c.into()]]
            }
            Gate::Ry(_, t) => {
                let (s, c) = (t / 2.0).sin_cos();
                [[c.into(), (-s).into()], [s.into(), c.into()]]
            }
            Gate::Rz(_, t) => [
                [Complex64::from_polar(1.0, -t / 2.0), ZERO],
                [ZERO, Complex64::from_polar(1.0, t / 2.0)],
            ],
            Gate::H(_) => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                [[h, h], [h, -h]]
            }
            Gate::SDag(_) => [[ONE, ZERO], [ZERO, -I]],
            Gate::Phase(_, t) => [[ONE, ZERO], [ZERO, Complex64::from_polar(1.0, t)]],
            Gate::Cnot { .. } | Gate::Rzz(..) => return None,
        };
        Some(m)
    }
}

/// Reduced state of a qubit subset; row-major `2^m × 2^m` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim() + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// `Tr ρ²`; 1 for pure states.
    pub fn purity(&self) -> f64 {
        // Tr(ρρ) = Σ |ρ_ij|² for Hermitian ρ
        self.entries.iter().map(|e| e.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in 0..d {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |r, c| self.get(r, c));
        m.symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Hermitian within 1e-10, unit trace within 1e-10, eigenvalues ≥ −1e-9.
    pub fn check_invariants(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::usage(format!(
                "density matrix not Hermitian ({herm:e})"
            )));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::usage(format!("density matrix trace {tr} != 1")));
        }
        let min = self.min_eigenvalue();
        if min < -1e-9 {
            return Err(Error::usage(format!(
                "density matrix eigenvalue {min:e} < 0"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// Tensor product of Pauli letters on an ordered qubit support.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliObservable {
    support: Vec<usize>,
    letters: Vec<Pauli>,
}

impl PauliObservable {
    pub fn new(support: Vec<usize>, letters: Vec<Pauli>) -> Result<Self> {
        if support.len() != letters.len() {
            return Err(Error::usage(format!(
                "{} support qubits but {} Pauli letters",
                support.len(),
                letters.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::usage("empty Pauli observable"));
        }
        for (i, q) in support.iter().enumerate() {
            if support[..i].contains(q) {
                return Err(Error::usage(format!(
                    "qubit {q} listed twice in observable"
                )));
            }
        }
        Ok(Self { support, letters })
    }

    pub fn single(qubit: usize, letter: Pauli) -> Self {
        Self {
            support: vec![qubit],
            letters: vec![letter],
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    /// Label such as `X0` or `Z2Z3`.
    pub fn label(&self) -> String {
        self.support
            .iter()
            .zip(&self.letters)
            .map(|(q, p)| format!("{p:?}{q}"))
            .collect()
    }
}

/// `Tr(O ρ)` with the observable's letters applied to `rho`'s qubits in
/// order, clamped to `[−1, 1]`.
pub fn pauli_expectation(rho: &DensityMatrix, obs: &PauliObservable) -> Result<f64> {
    let m = rho.n_qubits();
    if obs.letters.len() != m {
        return Err(Error::usage(format!(
            "{}-qubit observable on a {m}-qubit density matrix",
            obs.letters.len()
        )));
    }
    // O|b⟩ = phase(b)·|b ⊕ flip⟩, so Tr(Oρ) = Σ_b phase(b)·ρ[b, b ⊕ flip].
    let flip = obs
        .letters
        .iter()
        .enumerate()
        .fold(0usize, |acc, (pos, p)| {
            if matches!(p, Pauli::X | Pauli::Y) {
                acc | (1 << (m - 1 - pos))
            } else {
                acc
            }
        });
    let mut total = ZERO;
    for b in 0..rho.dim() {
        let mut phase = ONE;
        for (pos, p) in obs.letters.iter().enumerate() {
            let set = b & (1 << (m - 1 - pos)) != 0;
            phase *= match (p, set) {
                (Pauli::X, _) => ONE,
                (Pauli::Y, false) => I,
                (Pauli::Y, true) => -I,
                (Pauli::Z, false) => ONE,
                (Pauli::Z, true) => -ONE,
            };
        }
        total += phase * rho.get(b, b ^ flip);
    }
    debug_assert!(
        total.im.abs() < 1e-10,
        "Pauli expectation has imaginary part {}",
        total.im
    );
    Ok(total.re.clamp(-1.0, 1.0))
}

/// Finite-shot estimate of `⟨ψ|O|ψ⟩`.
///
/// Measured qubits are rotated into the observable's eigenbasis (X: H,
/// Y: S† then H), `shots` outcomes are drawn by inverse CDF from the exact
/// marginal distribution, and the mean ±1 parity is returned.
pub fn sampled_pauli_expectation(
    state: &Statevector,
    obs: &PauliObservable,
    shots: usize,
    seed: u64,
) -> Result<f64> {
    if shots == 0 {
        return Err(Error::usage("shot count must be at least 1"));
    }
    let mut rotated = state.clone();
    for (&q, p) in obs.support.iter().zip(&obs.letters) {
        match p {
            Pauli::X => rotated.apply_in_place(&Gate::H(q))?,
            Pauli::Y => {
                rotated.apply_in_place(&Gate::SDag(q))?;
                rotated.apply_in_place(&Gate::H(q))?;
            }
            Pauli::Z => {}
        }
    }
    let probs = rotated.marginal_probabilities(&obs.support)?;
    let cdf: Vec<f64> = probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    // guards u ≥ cdf.last() when the total probability rounds below 1
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);

    let mut rng = seeding::rng(seed);
    let mut sum: i64 = 0;
    for _ in 0..shots {
        let u: f64 = rng.gen();
        let outcome = cdf.partition_point(|&c| c <= u).min(last);
        sum += if outcome.count_ones() % 2 == 0 { 1 } else { -1 };
    }
    Ok(sum as f64 / shots as f64)
}
