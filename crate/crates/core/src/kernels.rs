//! Classical RBF, fidelity quantum and projected quantum kernels.
//!
//! Gram assembly encodes (and, for projected kernels, measures) every data
//! point exactly once. Entries are computed on the upper triangle and
//! mirrored, so `K[i][j]` and `K[j][i]` are the same float.

use std::fmt;
use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_maps::{encode, FeatureMapSpec};
use crate::seeding;
use crate::state::{
    pauli_expectation, sampled_pauli_expectation, Pauli, PauliObservable, Statevector,
};

pub const DEFAULT_PSD_TOLERANCE: f64 = -1e-8;

const PAULIS: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

/// Which reduced subsystems are measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProjectionMode {
    /// Single qubits with X, Y, Z.
    M1,
    /// Circularly adjacent pairs `(j, j+1 mod n)` with XX, YY, ZZ.
    M2,
    /// M1 features followed by M2 features.
    Union,
}

impl ProjectionMode {
    pub const ALL: [ProjectionMode; 3] = [
        ProjectionMode::M1,
        ProjectionMode::M2,
        ProjectionMode::Union,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProjectionMode::M1 => "M1",
            ProjectionMode::M2 => "M2",
            ProjectionMode::Union => "Union",
        }
    }
}

impl fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProjectionStrategy {
    pub mode: ProjectionMode,
    pub n_qubits: usize,
}

impl ProjectionStrategy {
    pub fn new(mode: ProjectionMode, n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::config("projection needs at least one qubit"));
        }
        if mode != ProjectionMode::M1 && n_qubits < 2 {
            return Err(Error::config(format!(
                "{mode} projection needs at least 2 qubits"
            )));
        }
        Ok(Self { mode, n_qubits })
    }

    /// Observables in feature order: subsets ascending, letters X, Y, Z.
    pub fn observables(&self) -> Vec<PauliObservable> {
        let n = self.n_qubits;
        let singles = (0..n).flat_map(|q| PAULIS.map(|p| PauliObservable::single(q, p)));
        let pairs = (0..n).flat_map(move |q| {
            PAULIS.map(|p| {
                PauliObservable::new(vec![q, (q + 1) % n], vec![p, p])
                    .expect("adjacent qubits are distinct for n >= 2")
            })
        });
        match self.mode {
            ProjectionMode::M1 => singles.collect(),
            ProjectionMode::M2 => pairs.collect(),
            ProjectionMode::Union => singles.chain(pairs).collect(),
        }
    }

    pub fn feature_count(&self) -> usize {
        match self.mode {
            ProjectionMode::M1 | ProjectionMode::M2 => 3 * self.n_qubits,
            ProjectionMode::Union => 6 * self.n_qubits,
        }
    }
}

/// Finite-shot measurement settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotConfig {
    pub shots: usize,
    pub seed: u64,
}

/// Expectation values of a strategy's observables, each in `[−1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedFeatures(pub Vec<f64>);

impl ProjectedFeatures {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Measures `state` on every observable of `strategy`. With `shots`, the
/// `k`-th observable is estimated from `shots.shots` samples seeded with
/// `derive(shots.seed, k)`.
pub fn project_state(
    state: &Statevector,
    strategy: &ProjectionStrategy,
    shots: Option<ShotConfig>,
) -> Result<ProjectedFeatures> {
    if strategy.n_qubits != state.n_qubits() {
        return Err(Error::usage(format!(
            "{}-qubit projection strategy on a {}-qubit state",
            strategy.n_qubits,
            state.n_qubits()
        )));
    }
    let values = strategy
        .observables()
        .iter()
        .enumerate()
        .map(|(k, obs)| match shots {
            None => {
                let rho = state.reduced_density_matrix(obs.support())?;
                pauli_expectation(&rho, obs)
            }
            Some(cfg) => sampled_pauli_expectation(
                state,
                obs,
                cfg.shots,
                seeding::derive(cfg.seed, k as u64),
            ),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectedFeatures(values))
}

fn squared_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::usage(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

fn gaussian(sq_dist: f64, gamma: f64) -> f64 {
    (-gamma * sq_dist).exp()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::usage(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    Ok(())
}

/// `exp(−γ‖x − y‖²)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(gaussian(squared_distance(x, y)?, gamma))
}

/// Gaussian kernel over projected features; same arithmetic as [`rbf_kernel`].
pub fn pqk_kernel(f: &ProjectedFeatures, g: &ProjectedFeatures, gamma: f64) -> Result<f64> {
    rbf_kernel(&f.0, &g.0, gamma)
}

/// `|⟨φ(y)|φ(x)⟩|²`.
pub fn fidelity_kernel(x: &[f64], y: &[f64], map: &FeatureMapSpec) -> Result<f64> {
    let (sx, sy) = (encode(map, x)?, encode(map, y)?);
    Ok(sy.inner(&sx)?.norm_sqr())
}

/// Kernel choice together with its fixed parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum KernelSpec {
    #[serde(rename = "RBF")]
    Rbf { gamma: f64 },
    #[serde(rename = "FidelityQK")]
    Fidelity { feature_map: FeatureMapSpec },
    #[serde(rename = "PQK")]
    Projected {
        gamma: f64,
        feature_map: FeatureMapSpec,
        strategy: ProjectionMode,
        #[serde(default)]
        shots: Option<ShotConfig>,
    },
}

impl KernelSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            KernelSpec::Rbf { .. } => "RBF",
            KernelSpec::Fidelity { .. } => "FidelityQK",
            KernelSpec::Projected { .. } => "PQK",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            KernelSpec::Rbf { gamma } | KernelSpec::Projected { gamma, .. } => Some(*gamma),
            KernelSpec::Fidelity { .. } => None,
        }
    }

    /// Copy with `gamma` replaced; a no-op for kernels without one.
    pub fn with_gamma(&self, new_gamma: f64) -> KernelSpec {
        let mut spec = self.clone();
        match &mut spec {
            KernelSpec::Rbf { gamma } | KernelSpec::Projected { gamma, .. } => *gamma = new_gamma,
            KernelSpec::Fidelity { .. } => {}
        }
        spec
    }

    pub fn with_shots(&self, new_shots: Option<ShotConfig>) -> KernelSpec {
        let mut spec = self.clone();
        if let KernelSpec::Projected { shots, .. } = &mut spec {
            *shots = new_shots;
        }
        spec
    }

    pub fn feature_map(&self) -> Option<&FeatureMapSpec> {
        match self {
            KernelSpec::Rbf { .. } => None,
            KernelSpec::Fidelity { feature_map } | KernelSpec::Projected { feature_map, .. } => {
                Some(feature_map)
            }
        }
    }

    pub fn strategy(&self) -> Option<ProjectionMode> {
        match self {
            KernelSpec::Projected { strategy, .. } => Some(*strategy),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(gamma) = self.gamma() {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::config(format!(
                    "kernel.gamma must be positive, got {gamma}"
                )));
            }
        }
        if let Some(map) = self.feature_map() {
            map.validate()?;
        }
        if let KernelSpec::Projected {
            feature_map,
            strategy,
            shots,
            ..
        } = self
        {
            ProjectionStrategy::new(*strategy, feature_map.n_qubits)?;
            if let Some(cfg) = shots {
                if cfg.shots == 0 {
                    return Err(Error::config("kernel.shots.shots must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// `RBF`, `FidelityQK[RotX]`, `PQK[ThreeD+ring,M2]`, ...
    pub fn describe(&self) -> String {
        match self {
            KernelSpec::Rbf { .. } => "RBF".to_string(),
            KernelSpec::Fidelity { feature_map } => format!("FidelityQK[{}]", feature_map.label()),
            KernelSpec::Projected {
                feature_map,
                strategy,
                shots,
                ..
            } => match shots {
                None => format!("PQK[{},{}]", feature_map.label(), strategy),
                Some(s) => format!(
                    "PQK[{},{},shots={}]",
                    feature_map.label(),
                    strategy,
                    s.shots
                ),
            },
        }
    }
}

/// Projected features of every row, computed in parallel. Row `i` uses shot
/// seed `seed ⊕ i` when sampling.
pub fn project_dataset(
    rows: &[Vec<f64>],
    map: &FeatureMapSpec,
    mode: ProjectionMode,
    shots: Option<ShotConfig>,
) -> Result<Vec<ProjectedFeatures>> {
    let strategy = ProjectionStrategy::new(mode, map.n_qubits)?;
    rows.par_iter()
        .enumerate()
        .map(|(i, x)| {
            let state = encode(map, x)?;
            let point_shots = shots.map(|s| ShotConfig {
                shots: s.shots,
                seed: seeding::point_seed(s.seed, i),
            });
            project_state(&state, &strategy, point_shots)
        })
        .collect()
}

/// Square kernel matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    size: usize,
    entries: Vec<f64>,
}

impl GramMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::usage("empty matrix"));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != size) {
            return Err(Error::usage(format!(
                "matrix is not square: {size} rows but a row of length {}",
                r.len()
            )));
        }
        Ok(Self {
            size,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    /// Fills the upper triangle with `f(i, j)` for `i ≤ j` and mirrors it.
    pub fn from_upper<F>(size: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync,
    {
        if size == 0 {
            return Err(Error::usage("empty dataset"));
        }
        let upper: Vec<Vec<f64>> = (0..size)
            .into_par_iter()
            .map(|i| (i..size).map(|j| f(i, j)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let mut entries = vec![0.0; size * size];
        for (i, row) in upper.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + off;
                entries[i * size + j] = v;
                entries[j * size + i] = v;
            }
        }
        Ok(Self { size, entries })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `K[idx, idx]`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> GramMatrix {
        let entries = idx
            .iter()
            .flat_map(|&i| idx.iter().map(move |&j| self.get(i, j)))
            .collect();
        GramMatrix {
            size: idx.len(),
            entries,
        }
    }

    /// Rows `K[r, cols]` for each `r` in `rows`.
    pub fn cross_rows(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&r| cols.iter().map(|&c| self.get(r, c)).collect())
            .collect()
    }

    /// Exact symmetry and unit diagonal within `diag_tol`.
    pub fn check_invariants(&self, diag_tol: f64) -> Result<()> {
        for i in 0..self.size {
            if (self.get(i, i) - 1.0).abs() > diag_tol {
                return Err(Error::usage(format!(
                    "K[{i}][{i}] = {} != 1",
                    self.get(i, i)
                )));
            }
            for j in 0..i {
                if self.get(i, j) != self.get(j, i) {
                    return Err(Error::usage(format!("K[{i}][{j}] != K[{j}][{i}]")));
                }
            }
        }
        Ok(())
    }

    /// Row-major CSV, every entry with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.size {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Parses [`GramMatrix::write_csv`] output; lines starting with `#` are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Ingestion(format!("bad Gram entry {t:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        GramMatrix::from_rows(rows)
    }

    /// `"GRAM"`, a length-prefixed UTF-8 metadata block, the size, then
    /// row-major entries. Integers are little-endian u64, entries
    /// little-endian f64.
    pub fn write_binary<W: Write>(&self, mut out: W, metadata: &str) -> std::io::Result<()> {
        out.write_all(b"GRAM")?;
        out.write_all(&(metadata.len() as u64).to_le_bytes())?;
        out.write_all(metadata.as_bytes())?;
        out.write_all(&(self.size as u64).to_le_bytes())?;
        for v in &self.entries {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads [`GramMatrix::write_binary`] output, returning the metadata too.
    pub fn read_binary<R: Read>(mut input: R) -> Result<(Self, String)> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"GRAM" {
            return Err(Error::Ingestion("missing GRAM magic".into()));
        }
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let mut metadata = vec![0u8; u64::from_le_bytes(word) as usize];
        input.read_exact(&mut metadata)?;
        let metadata = String::from_utf8(metadata)
            .map_err(|_| Error::Ingestion("Gram metadata is not UTF-8".into()))?;
        input.read_exact(&mut word)?;
        let size = u64::from_le_bytes(word) as usize;
        let mut entries = Vec::with_capacity(size * size);
        for _ in 0..size * size {
            input.read_exact(&mut word)?;
            entries.push(f64::from_le_bytes(word));
        }
        Ok((Self { size, entries }, metadata))
    }
}

/// Per-point kernel data that does not depend on `γ`.
///
/// Gaussian kernels keep the pairwise squared distances so a `γ` grid costs
/// one exponential per entry; the fidelity kernel keeps its finished Gram.
#[derive(Clone, Debug)]
pub enum PreparedKernel {
    Gaussian { sq_dist: GramMatrix },
    Fidelity { gram: GramMatrix },
}

impl PreparedKernel {
    pub fn new(rows: &[Vec<f64>], spec: &KernelSpec) -> Result<Self> {
        spec.validate()?;
        if rows.is_empty() {
            return Err(Error::usage("empty dataset"));
        }
        match spec {
            KernelSpec::Rbf { .. } => Ok(PreparedKernel::Gaussian {
                sq_dist: pairwise_sq_dist(rows)?,
            }),
            KernelSpec::Projected {
                feature_map,
                strategy,
                shots,
                ..
            } => {
                let feats: Vec<Vec<f64>> = project_dataset(rows, feature_map, *strategy, *shots)?
                    .into_iter()
                    .map(|f| f.0)
                    .collect();
                Ok(PreparedKernel::Gaussian {
                    sq_dist: pairwise_sq_dist(&feats)?,
                })
            }
            KernelSpec::Fidelity { feature_map } => {
                let states = rows
                    .par_iter()
                    .map(|x| encode(feature_map, x))
                    .collect::<Result<Vec<_>>>()?;
                let gram = GramMatrix::from_upper(states.len(), |i, j| {
                    Ok(states[j].inner(&states[i])?.norm_sqr())
                })?;
                Ok(PreparedKernel::Fidelity { gram })
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            PreparedKernel::Gaussian { sq_dist } => sq_dist.size(),
            PreparedKernel::Fidelity { gram } => gram.size(),
        }
    }

    /// Gram matrix at `gamma`; the fidelity kernel ignores it.
    pub fn gram(&self, gamma: Option<f64>) -> Result<GramMatrix> {
        match self {
            PreparedKernel::Gaussian { sq_dist } => {
                let gamma = gamma.ok_or_else(|| Error::usage("Gaussian kernel needs gamma"))?;
                check_gamma(gamma)?;
                Ok(GramMatrix {
                    size: sq_dist.size,
                    entries: sq_dist
                        .entries
                        .par_iter()
                        .map(|&d| gaussian(d, gamma))
                        .collect(),
                })
            }
            PreparedKernel::Fidelity { gram } => Ok(gram.clone()),
        }
    }
}

fn pairwise_sq_dist(rows: &[Vec<f64>]) -> Result<GramMatrix> {
    GramMatrix::from_upper(rows.len(), |i, j| squared_distance(&rows[i], &rows[j]))
}

/// Gram matrix of `spec` over `rows`.
pub fn gram_matrix(rows: &[Vec<f64>], spec: &KernelSpec) -> Result<GramMatrix> {
    PreparedKernel::new(rows, spec)?.gram(spec.gamma())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Smallest eigenvalue of the symmetrized matrix; passes when it is `≥ tol`.
pub fn check_psd(gram: &GramMatrix, tol: f64) -> PsdReport {
    let n = gram.size;
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (gram.get(i, j) + gram.get(j, i)));
    let min_eigenvalue = m
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    PsdReport {
        min_eigenvalue,
        tolerance: tol,
        passed: min_eigenvalue >= tol,
    }
}
