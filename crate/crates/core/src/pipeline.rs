//! Experiment orchestration: dataset ingestion, min-max scaling, stratified
//! k-fold cross-validation, `(C, γ)` grid search and shot-count sweeps.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_maps::{FeatureMapFamily, FeatureMapSpec};
use crate::kernels::{
    GramMatrix, KernelSpec, PreparedKernel, ProjectionMode, ProjectionStrategy, ShotConfig,
};
use crate::seeding;
use crate::svm::{train_smo, TrainConfig};

/// Feature columns of the occupancy data, in qubit order.
pub const DEFAULT_FEATURES: [&str; 6] = ["illuminance", "blinds", "lamps", "rh", "co2", "temp"];
pub const DEFAULT_LABEL_COLUMN: &str = "occupancy";

/// Half-width multiplier of a two-sided 95% normal interval.
const Z95: f64 = 1.96;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    /// +1 occupied, −1 not occupied.
    pub labels: Vec<i8>,
    pub column_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<i8>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Ingestion("dataset has no rows".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::usage(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let d = column_names.len();
        if let Some(row) = features.iter().find(|r| r.len() != d) {
            return Err(Error::usage(format!(
                "row of width {} in a {d}-column dataset",
                row.len()
            )));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Ingestion("non-finite feature value".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::usage(format!("label {l} is not ±1")));
        }
        if !labels.contains(&1) || !labels.contains(&-1) {
            return Err(Error::DegenerateData(
                "dataset contains a single class".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            column_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.column_names.len()
    }

    /// `(negatives, positives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (self.len() - pos, pos)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_names.iter().position(|c| c == name)?;
        Some(self.features.iter().map(|r| r[j]).collect())
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::new(
            idx.iter().map(|&i| self.features[i].clone()).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
            self.column_names.clone(),
        )
    }
}

/// `(feature name, CSV column)` pairs; the feature order is the qubit order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap(pub Vec<(String, String)>);

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap(
            DEFAULT_FEATURES
                .iter()
                .map(|f| (f.to_string(), f.to_string()))
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_skipped: usize,
}

fn is_missing(field: &str) -> bool {
    matches!(
        field.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "n/a" | "nan" | "null" | "none" | "?"
    )
}

fn parse_label(raw: &str) -> Result<i8> {
    let t = raw.trim().to_ascii_lowercase();
    match t.as_str() {
        "1" | "1.0" | "+1" | "true" | "yes" | "occupied" => Ok(1),
        "0" | "0.0" | "-1" | "-1.0" | "false" | "no" | "not occupied" | "non-occupied"
        | "unoccupied" | "empty" => Ok(-1),
        _ => Err(Error::Ingestion(format!(
            "unrecognized label value {raw:?}"
        ))),
    }
}

/// Reads a headered CSV, keeping the mapped feature columns and the label.
/// Rows with a missing or non-numeric feature, or a missing label, are
/// skipped and counted.
pub fn load_dataset(
    path: &Path,
    columns: &ColumnMap,
    label_column: &str,
) -> Result<(Dataset, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Ingestion(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Ingestion(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let find = |col: &str| headers.iter().position(|h| h == col);
    let feature_idx = columns
        .0
        .iter()
        .map(|(feature, col)| {
            find(col).ok_or_else(|| {
                Error::Ingestion(format!("column {col:?} for feature {feature:?} not found"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let label_idx = find(label_column)
        .ok_or_else(|| Error::Ingestion(format!("label column {label_column:?} not found")))?;

    let mut report = LoadReport::default();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Ingestion(format!("malformed CSV row: {e}")))?;
        report.rows_read += 1;
        let label_raw = record.get(label_idx).unwrap_or("");
        let row: Option<Vec<f64>> = feature_idx
            .iter()
            .map(|&j| {
                let field = record.get(j).unwrap_or("");
                if is_missing(field) {
                    None
                } else {
                    field.parse::<f64>().ok().filter(|v| v.is_finite())
                }
            })
            .collect();
        match row {
            Some(row) if !is_missing(label_raw) => {
                labels.push(parse_label(label_raw)?);
                features.push(row);
            }
            _ => report.rows_skipped += 1,
        }
    }
    if features.is_empty() {
        return Err(Error::Ingestion(format!(
            "no usable rows in {}",
            path.display()
        )));
    }
    let names = columns.0.iter().map(|(f, _)| f.clone()).collect();
    Ok((Dataset::new(features, labels, names)?, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    /// Per-column `(min, max)` of the fitting rows.
    pub ranges: Vec<(f64, f64)>,
    pub interval: (f64, f64),
}

pub const DEFAULT_INTERVAL: (f64, f64) = (0.0, PI);

/// Per-column min/max of `rows`.
pub fn fit_scaler(rows: &[Vec<f64>], interval: (f64, f64)) -> Result<ScalerParams> {
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::config(format!(
            "scaling interval ({lo}, {hi}) needs lo < hi"
        )));
    }
    let first = rows
        .first()
        .ok_or_else(|| Error::usage("cannot fit a scaler on no rows"))?;
    let ranges = (0..first.len())
        .map(|j| {
            rows.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), r| {
                    (mn.min(r[j]), mx.max(r[j]))
                })
        })
        .collect();
    Ok(ScalerParams { ranges, interval })
}

impl ScalerParams {
    /// Affine map of each column onto the interval, clamped; constant
    /// columns map to the interval midpoint.
    pub fn apply(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (lo, hi) = self.interval;
        rows.iter()
            .map(|r| {
                r.iter()
                    .zip(&self.ranges)
                    .map(|(&v, &(mn, mx))| {
                        if mx > mn {
                            (lo + (v - mn) / (mx - mn) * (hi - lo)).clamp(lo, hi)
                        } else {
                            0.5 * (lo + hi)
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Where the scaler is fitted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingMode {
    /// Once, on the full dataset.
    #[default]
    Global,
    /// On each training fold only.
    FoldWise,
}

/// Splits indices into `k` stratified folds. Each class is shuffled with a
/// seeded generator and dealt round-robin, continuing the deal across
/// classes so fold sizes differ by at most one. Indices within a fold are
/// ascending.
pub fn stratified_folds(labels: &[i8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config(format!(
            "fold count must be at least 2, got {k}"
        )));
    }
    let mut folds = vec![Vec::new(); k];
    let mut rng = seeding::rng(seed);
    let mut next = 0;
    for class in [-1i8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::config(format!(
                "class {class:+} has {} members, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Fraction of matching positions.
pub fn accuracy(y_true: &[i8], y_pred: &[i8]) -> Result<f64> {
    if y_true.is_empty() || y_true.len() != y_pred.len() {
        return Err(Error::usage(format!(
            "accuracy needs equal non-empty inputs, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// `1.96 · s / √k` with `s` the sample standard deviation.
pub fn ci95_half_width(values: &[f64]) -> f64 {
    let k = values.len();
    if k < 2 || values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    Z95 * var.sqrt() / (k as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) || !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!(
                "C and gamma must be positive, got C={} gamma={}",
                self.c, self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvResult {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub ci_half_width: f64,
    pub hyperparams: HyperParams,
    pub kernel: String,
}

impl CvResult {
    fn from_folds(fold_accuracies: Vec<f64>, hyperparams: HyperParams, kernel: String) -> Self {
        let mean = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
        let ci_half_width = ci95_half_width(&fold_accuracies);
        Self {
            fold_accuracies,
            mean,
            ci_half_width,
            hyperparams,
            kernel,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub scaling: ScalingMode,
    pub interval: (f64, f64),
    /// Solver settings; `c` is overwritten per grid cell.
    pub train: TrainConfig,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            scaling: ScalingMode::Global,
            interval: DEFAULT_INTERVAL,
            train: TrainConfig::new(1.0),
        }
    }
}

/// Folds and γ-independent kernel data for one `(dataset, kernel)` pair,
/// reusable across every `(C, γ)` cell.
pub struct CvPlan<'a> {
    dataset: &'a Dataset,
    spec: KernelSpec,
    options: CvOptions,
    folds: Vec<Vec<usize>>,
    /// One entry in global mode, one per fold in fold-wise mode.
    prepared: Vec<PreparedKernel>,
}

impl<'a> CvPlan<'a> {
    pub fn new(dataset: &'a Dataset, spec: &KernelSpec, options: &CvOptions) -> Result<Self> {
        spec.validate()?;
        if let Some(map) = spec.feature_map() {
            if map.n_qubits != dataset.n_features() {
                return Err(Error::config(format!(
                    "feature map has {} qubits but the dataset has {} features",
                    map.n_qubits,
                    dataset.n_features()
                )));
            }
        }
        let folds = stratified_folds(&dataset.labels, options.k, options.seed)?;
        let prepared = match options.scaling {
            ScalingMode::Global => {
                let scaled =
                    fit_scaler(&dataset.features, options.interval)?.apply(&dataset.features);
                vec![PreparedKernel::new(&scaled, spec)?]
            }
            ScalingMode::FoldWise => folds
                .iter()
                .map(|test| {
                    let train = complement(test, dataset.len());
                    let train_rows: Vec<Vec<f64>> =
                        train.iter().map(|&i| dataset.features[i].clone()).collect();
                    let scaled =
                        fit_scaler(&train_rows, options.interval)?.apply(&dataset.features);
                    PreparedKernel::new(&scaled, spec)
                })
                .collect::<Result<_>>()?,
        };
        Ok(Self {
            dataset,
            spec: spec.clone(),
            options: options.clone(),
            folds,
            prepared,
        })
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// Full Gram matrix used for fold `fold` at `gamma`.
    pub fn gram_for_fold(&self, fold: usize, gamma: f64) -> Result<GramMatrix> {
        let prepared = match self.options.scaling {
            ScalingMode::Global => &self.prepared[0],
            ScalingMode::FoldWise => &self.prepared[fold],
        };
        prepared.gram(Some(gamma))
    }

    pub fn evaluate(&self, hp: HyperParams) -> Result<CvResult> {
        hp.validate()?;
        let shared = match self.options.scaling {
            ScalingMode::Global => Some(self.gram_for_fold(0, hp.gamma)?),
            ScalingMode::FoldWise => None,
        };
        let accuracies = (0..self.folds.len())
            .into_par_iter()
            .map(|f| {
                let owned;
                let gram = match &shared {
                    Some(g) => g,
                    None => {
                        owned = self.gram_for_fold(f, hp.gamma)?;
                        &owned
                    }
                };
                self.fold_accuracy(gram, f, hp.c).map_err(|e| Error::Fold {
                    fold: f,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CvResult::from_folds(
            accuracies,
            hp,
            self.spec.with_gamma(hp.gamma).describe(),
        ))
    }

    fn fold_accuracy(&self, gram: &GramMatrix, fold: usize, c: f64) -> Result<f64> {
        let test = &self.folds[fold];
        let train = complement(test, self.dataset.len());
        let train_labels: Vec<i8> = train.iter().map(|&i| self.dataset.labels[i]).collect();
        let mut cfg = self.options.train.clone();
        cfg.c = c;
        let model = train_smo(&gram.principal_submatrix(&train), &train_labels, &cfg)?;
        let predictions = model.predict_many(&gram.cross_rows(test, &train))?;
        let truth: Vec<i8> = test.iter().map(|&i| self.dataset.labels[i]).collect();
        accuracy(&truth, &predictions)
    }
}

/// Ascending indices in `0..n` not in the ascending list `taken`.
fn complement(taken: &[usize], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - taken.len());
    let mut t = taken.iter().peekable();
    for i in 0..n {
        if t.peek() == Some(&&i) {
            t.next();
        } else {
            out.push(i);
        }
    }
    out
}

/// k-fold cross-validation of one `(C, γ)` setting. `hp.gamma` replaces the
/// kernel's own γ; kernels without one ignore it.
pub fn cross_validate(
    dataset: &Dataset,
    spec: &KernelSpec,
    hp: HyperParams,
    options: &CvOptions,
) -> Result<CvResult> {
    CvPlan::new(dataset, spec, options)?.evaluate(hp)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub best: HyperParams,
    pub best_index: usize,
    pub table: Vec<CvResult>,
}

pub fn default_c_grid() -> Vec<f64> {
    vec![0.1, 1.0, 10.0, 100.0, 1000.0]
}

/// Standard γ grid; projected kernels also try `1 / feature count`, and
/// kernels without γ get a single inert cell.
pub fn default_gamma_grid(spec: &KernelSpec) -> Vec<f64> {
    let mut grid = vec![0.001, 0.01, 0.1, 1.0, 10.0];
    match spec {
        KernelSpec::Projected {
            feature_map,
            strategy,
            ..
        } => {
            let count = ProjectionStrategy {
                mode: *strategy,
                n_qubits: feature_map.n_qubits,
            }
            .feature_count();
            grid.push(1.0 / count as f64);
            grid.sort_by(f64::total_cmp);
        }
        KernelSpec::Fidelity { .. } => grid.truncate(1),
        KernelSpec::Rbf { .. } => {}
    }
    grid
}

/// Cross-validates every `(C, γ)` cell (C-major order) and keeps the best
/// mean accuracy; ties go to the smaller C, then the smaller γ.
pub fn grid_search(
    dataset: &Dataset,
    spec: &KernelSpec,
    c_grid: &[f64],
    gamma_grid: &[f64],
    options: &CvOptions,
) -> Result<GridResult> {
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::config(
            "grid search needs non-empty C and gamma grids",
        ));
    }
    let plan = CvPlan::new(dataset, spec, options)?;
    let gammas: &[f64] = if spec.gamma().is_some() {
        gamma_grid
    } else {
        &gamma_grid[..1]
    };
    let cells: Vec<HyperParams> = c_grid
        .iter()
        .flat_map(|&c| gammas.iter().map(move |&gamma| HyperParams { c, gamma }))
        .collect();
    let table = cells
        .par_iter()
        .map(|&hp| plan.evaluate(hp))
        .collect::<Result<Vec<_>>>()?;
    let best_index = select_best(&table);
    Ok(GridResult {
        best: table[best_index].hyperparams,
        best_index,
        table,
    })
}

fn select_best(table: &[CvResult]) -> usize {
    let mut best = 0;
    for (i, r) in table.iter().enumerate().skip(1) {
        let b = &table[best];
        let better = r.mean > b.mean
            || (r.mean == b.mean
                && (r.hyperparams.c < b.hyperparams.c
                    || (r.hyperparams.c == b.hyperparams.c
                        && r.hyperparams.gamma < b.hyperparams.gamma)));
        if better {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShotSweepRow {
    pub shots: usize,
    pub result: CvResult,
}

/// Shot seed used for the sweep point with `shots` samples.
pub fn sweep_seed(seed: u64, shots: usize) -> u64 {
    seeding::derive(seed, shots as u64)
}

/// Re-projects with `shots`-sample estimates for each count and
/// cross-validates at fixed `hp`. Folds are the same for every count.
pub fn shot_sweep(
    dataset: &Dataset,
    spec: &KernelSpec,
    hp: HyperParams,
    shot_counts: &[usize],
    options: &CvOptions,
) -> Result<Vec<ShotSweepRow>> {
    if !matches!(spec, KernelSpec::Projected { .. }) {
        return Err(Error::config("shot sweep requires a PQK kernel"));
    }
    if shot_counts.is_empty() || shot_counts[0] == 0 || shot_counts.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::config(
            "shot counts must be positive and strictly ascending",
        ));
    }
    shot_counts
        .iter()
        .map(|&shots| {
            let sampled = spec.with_shots(Some(ShotConfig {
                shots,
                seed: sweep_seed(options.seed, shots),
            }));
            Ok(ShotSweepRow {
                shots,
                result: cross_validate(dataset, &sampled, hp, options)?,
            })
        })
        .collect()
}

/// The 25 model configurations: PQK with M1, M2 and Union over six encodings,
/// the fidelity kernel over the same six, and the classical RBF SVM.
pub fn comparison_kernels(n_qubits: usize) -> Vec<KernelSpec> {
    let maps: Vec<FeatureMapSpec> = vec![
        FeatureMapSpec::new(FeatureMapFamily::RotX, n_qubits),
        FeatureMapSpec::new(FeatureMapFamily::ThreeD, n_qubits).with_ring(true),
        FeatureMapSpec::new(FeatureMapFamily::ThreeD, n_qubits),
        FeatureMapSpec::new(FeatureMapFamily::ZZ, n_qubits),
        FeatureMapSpec::new(FeatureMapFamily::IQP, n_qubits),
        FeatureMapSpec::new(FeatureMapFamily::Trotterized, n_qubits),
    ];
    let mut specs = Vec::new();
    for mode in ProjectionMode::ALL {
        for map in &maps {
            specs.push(KernelSpec::Projected {
                gamma: 1.0,
                feature_map: map.clone(),
                strategy: mode,
                shots: None,
            });
        }
    }
    for map in &maps {
        specs.push(KernelSpec::Fidelity {
            feature_map: map.clone(),
        });
    }
    specs.push(KernelSpec::Rbf { gamma: 1.0 });
    specs
}
