//! Encoding circuits that map a classical feature vector `x ∈ ℝⁿ` onto an
//! `n`-qubit state `|φ(x)⟩ = U(x)|0…0⟩`.
//!
//! Gate angles follow the half-angle convention of [`crate::state`], so an
//! operator `exp(−i x X)` is emitted as `RX(2x)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{run_circuit, Gate, Statevector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureMapFamily {
    /// One `exp(−i x_j X_j)` rotation per qubit.
    RotX,
    /// RX, RY, RZ by `x_j` on each qubit, optionally followed by a CNOT ring.
    ThreeD,
    /// Second-order Pauli-Z evolution with full entanglement.
    ZZ,
    IQP,
    Trotterized,
}

impl FeatureMapFamily {
    pub const ALL: [FeatureMapFamily; 5] = [
        FeatureMapFamily::RotX,
        FeatureMapFamily::ThreeD,
        FeatureMapFamily::ZZ,
        FeatureMapFamily::IQP,
        FeatureMapFamily::Trotterized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureMapFamily::RotX => "RotX",
            FeatureMapFamily::ThreeD => "ThreeD",
            FeatureMapFamily::ZZ => "ZZ",
            FeatureMapFamily::IQP => "IQP",
            FeatureMapFamily::Trotterized => "Trotterized",
        }
    }
}

impl fmt::Display for FeatureMapFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureMapFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::config(format!("unknown feature map family {s:?}")))
    }
}

pub const DEFAULT_ZZ_REPS: usize = 2;
pub const DEFAULT_IQP_REPS: usize = 2;
pub const DEFAULT_TROTTER_STEPS: usize = 3;
pub const DEFAULT_EVOLUTION_TIME: f64 = FRAC_PI_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMapSpec {
    pub family: FeatureMapFamily,
    pub n_qubits: usize,
    /// ThreeD only.
    #[serde(default)]
    pub with_cnot_ring: bool,
    /// Repetitions for ZZ/IQP, Trotter steps for Trotterized.
    pub reps: usize,
    /// Trotterized only.
    pub evolution_time: f64,
}

impl FeatureMapSpec {
    /// Spec with the family's default repetitions and evolution time.
    pub fn new(family: FeatureMapFamily, n_qubits: usize) -> Self {
        let reps = match family {
            FeatureMapFamily::ZZ => DEFAULT_ZZ_REPS,
            FeatureMapFamily::IQP => DEFAULT_IQP_REPS,
            FeatureMapFamily::Trotterized => DEFAULT_TROTTER_STEPS,
            FeatureMapFamily::RotX | FeatureMapFamily::ThreeD => 1,
        };
        Self {
            family,
            n_qubits,
            with_cnot_ring: false,
            reps,
            evolution_time: DEFAULT_EVOLUTION_TIME,
        }
    }

    pub fn with_ring(mut self, ring: bool) -> Self {
        self.with_cnot_ring = ring;
        self
    }

    /// Short name used in result tables, e.g. `ThreeD+ring`.
    pub fn label(&self) -> String {
        if self.family == FeatureMapFamily::ThreeD && self.with_cnot_ring {
            "ThreeD+ring".to_string()
        } else {
            self.family.name().to_string()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > crate::state::MAX_QUBITS {
            return Err(Error::config(format!(
                "feature map qubit count {} outside 1..={}",
                self.n_qubits,
                crate::state::MAX_QUBITS
            )));
        }
        if self.with_cnot_ring && self.family != FeatureMapFamily::ThreeD {
            return Err(Error::config(format!(
                "with_cnot_ring only applies to ThreeD, not {}",
                self.family
            )));
        }
        if self.reps == 0 {
            return Err(Error::config("reps must be at least 1"));
        }
        if !self.evolution_time.is_finite() {
            return Err(Error::config("evolution_time must be finite"));
        }
        Ok(())
    }

    pub fn circuit(&self, x: &[f64]) -> Result<Vec<Gate>> {
        self.validate()?;
        check_len(x, self.n_qubits)?;
        match self.family {
            FeatureMapFamily::RotX => build_rotx_circuit(x),
            FeatureMapFamily::ThreeD => build_3d_circuit(x, self.with_cnot_ring),
            FeatureMapFamily::ZZ => build_zz_circuit(x, self.reps),
            FeatureMapFamily::IQP => build_iqp_circuit(x, self.reps),
            FeatureMapFamily::Trotterized => {
                build_trotter_circuit(x, self.reps, self.evolution_time)
            }
        }
    }
}

/// `|φ(x)⟩` for the given map.
pub fn encode(spec: &FeatureMapSpec, x: &[f64]) -> Result<Statevector> {
    run_circuit(spec.n_qubits, &spec.circuit(x)?)
}

fn check_len(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::usage(format!(
            "feature vector has {} entries, feature map expects {n}",
            x.len()
        )));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::usage(format!("non-finite feature value {v}")));
    }
    Ok(())
}

fn check_entangling(x: &[f64], what: &str) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::usage(format!(
            "{what} needs at least 2 qubits, got {}",
            x.len()
        )));
    }
    check_len(x, x.len())
}

/// `RX(2x_j)` on qubit `j`.
pub fn build_rotx_circuit(x: &[f64]) -> Result<Vec<Gate>> {
    check_len(x, x.len())?;
    if x.is_empty() {
        return Err(Error::usage("empty feature vector"));
    }
    Ok(x.iter()
        .enumerate()
        .map(|(j, &v)| Gate::Rx(j, 2.0 * v))
        .collect())
}

/// RX, RY, RZ by `x_j` on each qubit in turn; with `ring`, a closing
/// `CNOT(j, j+1 mod n)` chain.
pub fn build_3d_circuit(x: &[f64], ring: bool) -> Result<Vec<Gate>> {
    if ring {
        check_entangling(x, "ThreeD with CNOT ring")?;
    } else {
        check_len(x, x.len())?;
        if x.is_empty() {
            return Err(Error::usage("empty feature vector"));
        }
    }
    let n = x.len();
    let mut gates: Vec<Gate> = x
        .iter()
        .enumerate()
        .flat_map(|(j, &v)| [Gate::Rx(j, v), Gate::Ry(j, v), Gate::Rz(j, v)])
        .collect();
    if ring {
        gates.extend((0..n).map(|j| Gate::Cnot {
            control: j,
            target: (j + 1) % n,
        }));
    }
    Ok(gates)
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Per repetition: H layer, `PHASE(2x_j)` layer, then for every pair `i<j`
/// the `CNOT · PHASE(2(π−x_i)(π−x_j)) · CNOT` ladder.
pub fn build_zz_circuit(x: &[f64], reps: usize) -> Result<Vec<Gate>> {
    check_entangling(x, "ZZ feature map")?;
    check_reps(reps)?;
    let n = x.len();
    let mut gates = Vec::with_capacity(reps * (2 * n + 3 * n * (n - 1) / 2));
    for _ in 0..reps {
        gates.extend((0..n).map(Gate::H));
        gates.extend(x.iter().enumerate().map(|(j, &v)| Gate::Phase(j, 2.0 * v)));
        for (i, j) in pairs(n) {
            let cnot = Gate::Cnot {
                control: i,
                target: j,
            };
            gates.push(cnot);
            gates.push(Gate::Phase(j, 2.0 * (PI - x[i]) * (PI - x[j])));
            gates.push(cnot);
        }
    }
    Ok(gates)
}

/// Per repetition: H layer, `RZ(2x_j)` layer, `RZZ(2x_i x_j)` on every pair.
pub fn build_iqp_circuit(x: &[f64], reps: usize) -> Result<Vec<Gate>> {
    check_entangling(x, "IQP feature map")?;
    check_reps(reps)?;
    let n = x.len();
    let mut gates = Vec::with_capacity(reps * (2 * n + n * (n - 1) / 2));
    for _ in 0..reps {
        gates.extend((0..n).map(Gate::H));
        gates.extend(x.iter().enumerate().map(|(j, &v)| Gate::Rz(j, 2.0 * v)));
        gates.extend(pairs(n).map(|(i, j)| Gate::Rzz(i, j, 2.0 * x[i] * x[j])));
    }
    Ok(gates)
}

/// `RX(2x_j)` upload layer followed by `steps` first-order Trotter layers of
/// the nearest-neighbour line Hamiltonian `Σ_j X_jX_{j+1} + Y_jY_{j+1} + Z_jZ_{j+1}`
/// with step `τ = evolution_time / steps`.
pub fn build_trotter_circuit(x: &[f64], steps: usize, evolution_time: f64) -> Result<Vec<Gate>> {
    check_entangling(x, "Trotterized feature map")?;
    if steps == 0 {
        return Err(Error::usage("Trotter steps must be at least 1"));
    }
    if !evolution_time.is_finite() {
        return Err(Error::usage("evolution time must be finite"));
    }
    let n = x.len();
    let angle = 2.0 * evolution_time / steps as f64;
    let mut gates: Vec<Gate> = x
        .iter()
        .enumerate()
        .map(|(j, &v)| Gate::Rx(j, 2.0 * v))
        .collect();
    for _ in 0..steps {
        for a in 0..n - 1 {
            let b = a + 1;
            // XX: H⊗H · RZZ · H⊗H
            gates.extend([
                Gate::H(a),
                Gate::H(b),
                Gate::Rzz(a, b, angle),
                Gate::H(a),
                Gate::H(b),
            ]);
            // YY: V = H·S† maps Y to Z; undo with V† = S·H
            gates.extend([
                Gate::SDag(a),
                Gate::H(a),
                Gate::SDag(b),
                Gate::H(b),
                Gate::Rzz(a, b, angle),
                Gate::H(a),
                Gate::Phase(a, FRAC_PI_2),
                Gate::H(b),
                Gate::Phase(b, FRAC_PI_2),
            ]);
            gates.push(Gate::Rzz(a, b, angle));
        }
    }
    Ok(gates)
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::usage("reps must be at least 1"));
    }
    Ok(())
}
