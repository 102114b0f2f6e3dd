//! Run configuration: JSON file plus `--dotted.key=value` overrides, merged
//! over documented defaults and validated before any work starts.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use qkernel::feature_maps::DEFAULT_EVOLUTION_TIME;
use qkernel::pipeline::{
    ColumnMap, CvOptions, HyperParams, ScalingMode, DEFAULT_FEATURES, DEFAULT_LABEL_COLUMN,
};
use qkernel::svm::{DEFAULT_ALPHA_TOL, DEFAULT_KKT_TOLERANCE, DEFAULT_MAX_PASSES};
use qkernel::{
    FeatureMapFamily, FeatureMapSpec, KernelSpec, ProjectionMode, ShotConfig, TrainConfig,
};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Encode,
    Gram,
    Cv,
    GridSearch,
    ShotSweep,
    Table2,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Encode => "encode",
            Command::Gram => "gram",
            Command::Cv => "cv",
            Command::GridSearch => "grid-search",
            Command::ShotSweep => "shot-sweep",
            Command::Table2 => "table2",
            Command::Validate => "validate",
        }
    }

    fn needs_dataset(self) -> bool {
        self != Command::Validate
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    #[serde(rename = "RBF")]
    Rbf,
    #[serde(rename = "FidelityQK")]
    Fidelity,
    #[serde(rename = "PQK")]
    Projected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub kernel: KernelConfig,
    pub svm: SvmConfig,
    pub cv: CvConfig,
    pub grid: GridConfig,
    pub shot_sweep: ShotSweepConfig,
    pub output_dir: PathBuf,
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    /// Feature names in qubit order.
    pub features: Vec<String>,
    /// Feature name → CSV header, for files with different column names.
    pub column_map: BTreeMap<String, String>,
    pub label_column: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub gamma: f64,
    pub feature_map: FeatureMapFamily,
    /// Defaults to the number of features.
    pub n_qubits: Option<usize>,
    /// ThreeD only; defaults to on.
    pub cnot_ring: Option<bool>,
    /// ZZ/IQP repetitions or Trotter steps; defaults per family.
    pub reps: Option<usize>,
    pub evolution_time: f64,
    pub strategy: ProjectionMode,
    /// Measurement shots per observable; `null` for exact expectations.
    pub shots: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmConfig {
    #[serde(rename = "C")]
    pub c: f64,
    pub kkt_tolerance: f64,
    pub max_passes: usize,
    pub max_iterations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
    pub scaling: ScalingMode,
    pub interval: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// `null` selects the default grid.
    #[serde(rename = "C")]
    pub c: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotSweepConfig {
    pub shots: Vec<usize>,
    /// Also cross-validate with exact expectations as a reference row.
    pub include_exact: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            dataset: DatasetConfig {
                path: None,
                features: DEFAULT_FEATURES.iter().map(|s| s.to_string()).collect(),
                column_map: BTreeMap::new(),
                label_column: DEFAULT_LABEL_COLUMN.to_string(),
            },
            kernel: KernelConfig {
                kind: KernelKind::Projected,
                gamma: 1.0,
                feature_map: FeatureMapFamily::ThreeD,
                n_qubits: None,
                cnot_ring: None,
                reps: None,
                evolution_time: DEFAULT_EVOLUTION_TIME,
                strategy: ProjectionMode::M2,
                shots: None,
            },
            svm: SvmConfig {
                c: 1.0,
                kkt_tolerance: DEFAULT_KKT_TOLERANCE,
                max_passes: DEFAULT_MAX_PASSES,
                max_iterations: None,
            },
            cv: CvConfig {
                k: 10,
                scaling: ScalingMode::Global,
                interval: (0.0, PI),
            },
            grid: GridConfig {
                c: None,
                gamma: None,
            },
            shot_sweep: ShotSweepConfig {
                shots: vec![
                    16, 32, 64, 128, 256, 512, 1024, 1500, 2048, 4096, 8192, 16384,
                ],
                include_exact: true,
            },
            output_dir: PathBuf::from("results"),
            jobs: None,
        }
    }
}

/// Keys whose values are free-form maps rather than fixed records.
const OPAQUE: &[&str] = &["dataset.column_map"];

/// Keys left out of the hash and the echo: they change where and how fast
/// a run happens, not what it computes.
const EXECUTION_ONLY: &[&str] = &["output_dir", "jobs"];

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Splits `key=value`, parsing the value as JSON when possible and as a
/// bare string otherwise.
pub fn parse_override(raw: &str) -> Result<(String, Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| config_error(format!("override {raw:?} is not of the form key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(config_error(format!(
            "override {raw:?} has an empty key segment"
        )));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.to_string(), value))
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            *node = Value::Object(Map::new());
        }
        node = node
            .as_object_mut()
            .expect("object")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    if !node.is_object() {
        *node = Value::Object(Map::new());
    }
    node.as_object_mut()
        .expect("object")
        .insert(parts[parts.len() - 1].to_string(), value);
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn all_paths(schema: &Value, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(map) = schema {
        for (k, v) in map {
            let path = join(prefix, k);
            out.push(path.clone());
            if !OPAQUE.contains(&path.as_str()) {
                all_paths(v, &path, out);
            }
        }
    }
}

/// Closest known keys: siblings first, then any key with a similar last
/// segment.
fn suggest(schema: &Value, prefix: &str, key: &str) -> Vec<String> {
    let distance = |candidate: &str| strsim::damerau_levenshtein(key, candidate);
    let close =
        |candidate: &str| distance(candidate) <= 2 || strsim::jaro_winkler(key, candidate) >= 0.9;
    let nearest = |candidates: Vec<(String, usize)>| {
        let best = candidates.iter().map(|c| c.1).min();
        candidates
            .into_iter()
            .filter(|c| Some(c.1) == best)
            .map(|c| c.0)
            .collect::<Vec<_>>()
    };
    if let Some(Value::Object(siblings)) = lookup(schema, prefix) {
        let found = nearest(
            siblings
                .keys()
                .filter(|k| close(k))
                .map(|k| (join(prefix, k), distance(k)))
                .collect(),
        );
        if !found.is_empty() {
            return found;
        }
    }
    let mut paths = Vec::new();
    all_paths(schema, "", &mut paths);
    nearest(
        paths
            .into_iter()
            .filter_map(|p| {
                let last = p.rsplit('.').next().unwrap_or(&p).to_string();
                close(&last).then(|| (p, distance(&last)))
            })
            .collect(),
    )
}

fn lookup<'a>(root: &'a Value, path: &str) -> Option<&'a Value> {
    if path.is_empty() {
        return Some(root);
    }
    path.split('.').try_fold(root, |node, part| node.get(part))
}

/// Rejects keys absent from the schema, suggesting the closest known key.
fn check_keys(root: &Value, schema: &Value, user: &Value, prefix: &str) -> Result<(), CliError> {
    let (Value::Object(known), Value::Object(given)) = (schema, user) else {
        return Ok(());
    };
    for (k, v) in given {
        let path = join(prefix, k);
        match known.get(k) {
            None => {
                let options = suggest(root, prefix, k);
                let hint = if options.is_empty() {
                    String::new()
                } else {
                    let quoted: Vec<String> = options.iter().map(|o| format!("{o:?}")).collect();
                    format!(" (did you mean {}?)", quoted.join(" or "))
                };
                return Err(config_error(format!("unknown key {path:?}{hint}")));
            }
            Some(sub) if !OPAQUE.contains(&path.as_str()) => check_keys(root, sub, v, &path)?,
            Some(_) => {}
        }
    }
    Ok(())
}

fn default_schema() -> Value {
    serde_json::to_value(RunConfig::default()).expect("default config serializes")
}

/// Builds the resolved configuration from an optional JSON file and
/// ordered `key=value` overrides (later ones win).
pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let schema = default_schema();
    let mut user = Value::Object(Map::new());
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| {
            config_error(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let parsed: Value = serde_json::from_str(&text).map_err(|e| {
            config_error(format!(
                "config file {} is not valid JSON: {e}",
                path.display()
            ))
        })?;
        if !parsed.is_object() {
            return Err(config_error(format!(
                "config file {} must hold a JSON object",
                path.display()
            )));
        }
        merge(&mut user, parsed);
    }
    for raw in overrides {
        let (key, value) = parse_override(raw)?;
        set_path(&mut user, &key, value);
    }
    check_keys(&schema, &schema, &user, "")?;

    let mut resolved = schema;
    merge(&mut resolved, user);
    serde_path_to_error::deserialize(resolved).map_err(|e| {
        let path = e.path().to_string();
        config_error(format!("{path}: {}", e.into_inner()))
    })
}

impl RunConfig {
    pub fn command(&self) -> Result<Command, CliError> {
        self.command.ok_or_else(|| {
            config_error("no command given (positional argument or \"command\" key)")
        })
    }

    pub fn column_map(&self) -> ColumnMap {
        ColumnMap(
            self.dataset
                .features
                .iter()
                .map(|f| {
                    (
                        f.clone(),
                        self.dataset
                            .column_map
                            .get(f)
                            .cloned()
                            .unwrap_or_else(|| f.clone()),
                    )
                })
                .collect(),
        )
    }

    pub fn n_qubits(&self) -> usize {
        self.kernel.n_qubits.unwrap_or(self.dataset.features.len())
    }

    pub fn feature_map(&self) -> FeatureMapSpec {
        let k = &self.kernel;
        let mut map = FeatureMapSpec::new(k.feature_map, self.n_qubits());
        map.with_cnot_ring = match k.cnot_ring {
            Some(ring) => ring,
            None => k.feature_map == FeatureMapFamily::ThreeD,
        };
        if let Some(reps) = k.reps {
            map.reps = reps;
        }
        map.evolution_time = k.evolution_time;
        map
    }

    /// Shot settings for single-kernel commands; the seed matches the
    /// shot-sweep row with the same count.
    pub fn shot_config(&self) -> Option<ShotConfig> {
        self.kernel.shots.map(|shots| ShotConfig {
            shots,
            seed: qkernel::pipeline::sweep_seed(self.seed, shots),
        })
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        match self.kernel.kind {
            KernelKind::Rbf => KernelSpec::Rbf {
                gamma: self.kernel.gamma,
            },
            KernelKind::Fidelity => KernelSpec::Fidelity {
                feature_map: self.feature_map(),
            },
            KernelKind::Projected => KernelSpec::Projected {
                gamma: self.kernel.gamma,
                feature_map: self.feature_map(),
                strategy: self.kernel.strategy,
                shots: self.shot_config(),
            },
        }
    }

    pub fn hyperparams(&self) -> HyperParams {
        HyperParams {
            c: self.svm.c,
            gamma: self.kernel.gamma,
        }
    }

    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            k: self.cv.k,
            seed: self.seed,
            scaling: self.cv.scaling,
            interval: self.cv.interval,
            train: TrainConfig {
                c: self.svm.c,
                kkt_tolerance: self.svm.kkt_tolerance,
                max_passes: self.svm.max_passes,
                max_iterations: self.svm.max_iterations,
                alpha_tol: DEFAULT_ALPHA_TOL,
            },
        }
    }

    pub fn c_grid(&self) -> Vec<f64> {
        self.grid
            .c
            .clone()
            .unwrap_or_else(qkernel::pipeline::default_c_grid)
    }

    pub fn gamma_grid(&self, spec: &KernelSpec) -> Vec<f64> {
        self.grid
            .gamma
            .clone()
            .unwrap_or_else(|| qkernel::pipeline::default_gamma_grid(spec))
    }

    /// Checks every field the command uses.
    pub fn validate(&self) -> Result<(), CliError> {
        let command = self.command()?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_error(format!(
                    "{name} must be a positive number, got {v}"
                )))
            }
        };
        if command.needs_dataset() && self.dataset.path.is_none() {
            return Err(config_error(format!(
                "dataset.path is required for {}",
                command.name()
            )));
        }
        if self.dataset.features.is_empty() {
            return Err(config_error(
                "dataset.features must name at least one column",
            ));
        }
        if let Some(extra) = self
            .dataset
            .column_map
            .keys()
            .find(|k| !self.dataset.features.contains(k))
        {
            return Err(config_error(format!(
                "dataset.column_map.{extra} is not one of dataset.features"
            )));
        }
        if self.jobs == Some(0) {
            return Err(config_error("jobs must be at least 1"));
        }
        positive("kernel.gamma", self.kernel.gamma)?;
        positive("svm.C", self.svm.c)?;
        positive("svm.kkt_tolerance", self.svm.kkt_tolerance)?;
        if self.svm.max_passes == 0 || self.svm.max_iterations == Some(0) {
            return Err(config_error(
                "svm.max_passes and svm.max_iterations must be at least 1",
            ));
        }
        if self.cv.k < 2 {
            return Err(config_error(format!(
                "cv.k must be at least 2, got {}",
                self.cv.k
            )));
        }
        let (lo, hi) = self.cv.interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(config_error(format!(
                "cv.interval needs finite lo < hi, got [{lo}, {hi}]"
            )));
        }
        for (name, grid) in [("grid.C", &self.grid.c), ("grid.gamma", &self.grid.gamma)] {
            if let Some(values) = grid {
                if values.is_empty() {
                    return Err(config_error(format!("{name} must not be empty")));
                }
                for v in values {
                    positive(name, *v)?;
                }
            }
        }
        if self.kernel.kind != KernelKind::Rbf {
            if self.n_qubits() != self.dataset.features.len() {
                return Err(config_error(format!(
                    "kernel.n_qubits is {} but dataset.features has {} columns",
                    self.n_qubits(),
                    self.dataset.features.len()
                )));
            }
            if self.kernel.cnot_ring == Some(true)
                && self.kernel.feature_map != FeatureMapFamily::ThreeD
            {
                return Err(config_error(format!(
                    "kernel.cnot_ring applies only to ThreeD, not {}",
                    self.kernel.feature_map
                )));
            }
            if self.kernel.reps == Some(0) {
                return Err(config_error("kernel.reps must be at least 1"));
            }
            if !self.kernel.evolution_time.is_finite() {
                return Err(config_error("kernel.evolution_time must be finite"));
            }
        }
        if self.kernel.shots == Some(0) {
            return Err(config_error("kernel.shots must be at least 1"));
        }
        if self.kernel.shots.is_some() && self.kernel.kind != KernelKind::Projected {
            return Err(config_error("kernel.shots applies only to kernel.kind PQK"));
        }
        self.kernel_spec()
            .validate()
            .map_err(|e| config_error(format!("kernel: {}", strip_category(&e))))?;
        match command {
            Command::Encode if self.kernel.kind != KernelKind::Projected => {
                return Err(config_error("encode needs kernel.kind PQK"));
            }
            Command::ShotSweep => {
                if self.kernel.kind != KernelKind::Projected {
                    return Err(config_error("shot-sweep needs kernel.kind PQK"));
                }
                let s = &self.shot_sweep.shots;
                if s.is_empty() || s[0] == 0 || s.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(config_error(
                        "shot_sweep.shots must be positive and strictly ascending",
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Resolved configuration as echoed into outputs: everything that
    /// determines the numbers.
    pub fn echo(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            for key in EXECUTION_ONLY {
                map.remove(*key);
            }
        }
        v
    }

    /// SHA-256 of the compact echo (keys sorted).
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.echo()).expect("echo serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }
}

fn strip_category(e: &qkernel::Error) -> String {
    match e {
        qkernel::Error::Config(m) | qkernel::Error::Usage(m) => m.clone(),
        other => other.to_string(),
    }
}
