//! Subcommand implementations and their output files.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use qkernel::kernels::{check_psd, gram_matrix, project_dataset, DEFAULT_PSD_TOLERANCE};
use qkernel::pipeline::{
    comparison_kernels, cross_validate, fit_scaler, grid_search, load_dataset, shot_sweep,
    CvResult, Dataset, LoadReport,
};
use qkernel::validation;
use qkernel::{KernelSpec, ProjectionStrategy};

use crate::config::{Command, RunConfig};
use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identification carried by every output file.
#[derive(Clone, Debug, Serialize)]
struct Provenance {
    tool_version: &'static str,
    config_hash: String,
    seed: u64,
}

impl Provenance {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            tool_version: TOOL_VERSION,
            config_hash: cfg.hash(),
            seed: cfg.seed,
        }
    }

    /// First line of CSV outputs.
    fn comment(&self) -> String {
        format!(
            "# qkernel {} config_hash={} seed={}\n",
            self.tool_version, self.config_hash, self.seed
        )
    }
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    rows: usize,
    rows_skipped: usize,
    positive: usize,
    negative: usize,
}

impl DatasetSummary {
    fn new(data: &Dataset, report: LoadReport) -> Self {
        let (positive, negative) = data.class_counts();
        Self {
            rows: data.len(),
            rows_skipped: report.rows_skipped,
            positive,
            negative,
        }
    }
}

#[derive(Debug, Serialize)]
struct Row {
    kernel: &'static str,
    feature_map: Option<String>,
    strategy: Option<String>,
    #[serde(rename = "C")]
    c: f64,
    /// `null` for kernels without a bandwidth.
    gamma: Option<f64>,
    fold_accuracies: Vec<f64>,
    mean: f64,
    ci95_half_width: f64,
    /// Present only in shot sweeps; `null` marks the exact reference row.
    #[serde(skip_serializing_if = "Option::is_none")]
    shots: Option<Option<usize>>,
}

impl Row {
    fn new(spec: &KernelSpec, result: &CvResult) -> Self {
        Self {
            kernel: spec.kind_name(),
            feature_map: spec.feature_map().map(|m| m.label()),
            strategy: spec.strategy().map(|s| s.to_string()),
            c: result.hyperparams.c,
            gamma: spec.gamma().map(|_| result.hyperparams.gamma),
            fold_accuracies: result.fold_accuracies.clone(),
            mean: result.mean,
            ci95_half_width: result.ci_half_width,
            shots: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct Best {
    index: usize,
    #[serde(rename = "C")]
    c: f64,
    gamma: Option<f64>,
    mean: f64,
}

#[derive(Debug, Serialize)]
struct Results {
    experiment: &'static str,
    #[serde(flatten)]
    provenance: Provenance,
    config: Value,
    dataset: DatasetSummary,
    rows: Vec<Row>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best: Option<Best>,
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::create_dir_all(dir)
        .and_then(|()| std::fs::write(&path, bytes))
        .map_err(|source| CliError::Output { path, source })
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    text.into_bytes()
}

fn load(cfg: &RunConfig) -> Result<(Dataset, LoadReport), CliError> {
    let path = cfg.dataset.path.as_deref().expect("validated");
    let (data, report) = load_dataset(path, &cfg.column_map(), &cfg.dataset.label_column)?;
    let (pos, neg) = data.class_counts();
    eprintln!(
        "loaded {} rows from {} ({} skipped; {pos} positive, {neg} negative)",
        data.len(),
        path.display(),
        report.rows_skipped
    );
    Ok((data, report))
}

/// Features scaled with a scaler fitted on every row.
fn scaled_features(cfg: &RunConfig, data: &Dataset) -> Result<Vec<Vec<f64>>, CliError> {
    Ok(fit_scaler(&data.features, cfg.cv.interval)?.apply(&data.features))
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let command = cfg.command()?;
    let provenance = Provenance::new(cfg);
    let out = cfg.output_dir.as_path();
    #[derive(Serialize)]
    struct Echo<'a> {
        #[serde(flatten)]
        provenance: &'a Provenance,
        config: Value,
    }
    write_file(
        out,
        "resolved_config.json",
        &to_json(&Echo {
            provenance: &provenance,
            config: cfg.echo(),
        }),
    )?;
    match command {
        Command::Encode => encode(cfg, &provenance, out),
        Command::Gram => gram(cfg, &provenance, out),
        Command::Cv => cv(cfg, &provenance, out),
        Command::GridSearch => grid(cfg, &provenance, out),
        Command::ShotSweep => sweep(cfg, &provenance, out),
        Command::Table2 => table2(cfg, &provenance, out),
        Command::Validate => validate(cfg, &provenance, out),
    }
}

fn encode(cfg: &RunConfig, provenance: &Provenance, out: &Path) -> Result<(), CliError> {
    let (data, _) = load(cfg)?;
    let rows = scaled_features(cfg, &data)?;
    let map = cfg.feature_map();
    let strategy = ProjectionStrategy::new(cfg.kernel.strategy, map.n_qubits)?;
    let features = project_dataset(&rows, &map, cfg.kernel.strategy, cfg.shot_config())?;

    let mut csv = provenance.comment();
    let labels: Vec<String> = strategy.observables().iter().map(|o| o.label()).collect();
    writeln!(csv, "index,label,{}", labels.join(",")).expect("string write");
    for (i, f) in features.iter().enumerate() {
        let values: Vec<String> = f.values().iter().map(|v| v.to_string()).collect();
        writeln!(csv, "{i},{},{}", data.labels[i], values.join(",")).expect("string write");
    }
    write_file(out, "features.csv", csv.as_bytes())?;
    println!(
        "wrote {} projected feature vectors of length {} to {}",
        features.len(),
        labels.len(),
        out.join("features.csv").display()
    );
    Ok(())
}

fn gram(cfg: &RunConfig, provenance: &Provenance, out: &Path) -> Result<(), CliError> {
    let (data, report) = load(cfg)?;
    let rows = scaled_features(cfg, &data)?;
    let spec = cfg.kernel_spec();
    let gram = gram_matrix(&rows, &spec)?;
    let psd = check_psd(&gram, DEFAULT_PSD_TOLERANCE);

    let mut csv = provenance.comment().into_bytes();
    gram.write_csv(&mut csv).expect("in-memory write");
    write_file(out, "gram.csv", &csv)?;
    let metadata = serde_json::to_string(&serde_json::json!({
        "tool_version": provenance.tool_version,
        "config_hash": provenance.config_hash,
        "seed": provenance.seed,
        "kernel": spec.describe(),
    }))
    .expect("metadata serializes");
    let mut bin = Vec::new();
    gram.write_binary(&mut bin, &metadata)
        .expect("in-memory write");
    write_file(out, "gram.bin", &bin)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        experiment: &'static str,
        #[serde(flatten)]
        provenance: &'a Provenance,
        config: Value,
        dataset: DatasetSummary,
        kernel: String,
        size: usize,
        min_eigenvalue: f64,
        psd_tolerance: f64,
        psd: bool,
    }
    let summary = Summary {
        experiment: Command::Gram.name(),
        provenance,
        config: cfg.echo(),
        dataset: DatasetSummary::new(&data, report),
        kernel: spec.describe(),
        size: gram.size(),
        min_eigenvalue: psd.min_eigenvalue,
        psd_tolerance: DEFAULT_PSD_TOLERANCE,
        psd: psd.passed,
    };
    write_file(out, "gram.json", &to_json(&summary))?;
    println!("min eigenvalue: {:e}", psd.min_eigenvalue);
    Ok(())
}

fn results(
    cfg: &RunConfig,
    command: Command,
    provenance: &Provenance,
    dataset: DatasetSummary,
    rows: Vec<Row>,
    best: Option<Best>,
) -> Results {
    Results {
        experiment: command.name(),
        provenance: provenance.clone(),
        config: cfg.echo(),
        dataset,
        rows,
        best,
    }
}

fn print_row(row: &Row) {
    let mut label = row.kernel.to_string();
    if let Some(m) = &row.feature_map {
        let _ = write!(label, " {m}");
    }
    if let Some(s) = &row.strategy {
        let _ = write!(label, " {s}");
    }
    let gamma = row.gamma.map(|g| format!(" gamma={g}")).unwrap_or_default();
    println!(
        "{label}: C={}{gamma} accuracy {:.4} ± {:.4}",
        row.c, row.mean, row.ci95_half_width
    );
}

fn cv(cfg: &RunConfig, provenance: &Provenance, out: &Path) -> Result<(), CliError> {
    let (data, report) = load(cfg)?;
    let spec = cfg.kernel_spec();
    let result = cross_validate(&data, &spec, cfg.hyperparams(), &cfg.cv_options())?;
    let row = Row::new(&spec, &result);
    print_row(&row);
    let doc = results(
        cfg,
        Command::Cv,
        provenance,
        DatasetSummary::new(&data, report),
        vec![row],
        None,
    );
    write_file(out, "results.json", &to_json(&doc))
}

fn grid(cfg: &RunConfig, provenance: &Provenance, out: &Path) -> Result<(), CliError> {
    let (data, report) = load(cfg)?;
    let spec = cfg.kernel_spec();
    let found = grid_search(
        &data,
        &spec,
        &cfg.c_grid(),
        &cfg.gamma_grid(&spec),
        &cfg.cv_options(),
    )?;
    let rows: Vec<Row> = found.table.iter().map(|r| Row::new(&spec, r)).collect();
    let best = &rows[found.best_index];
    print_row(best);
    let best = Best {
        index: found.best_index,
        c: best.c,
        gamma: best.gamma,
        mean: best.mean,
    };
    let doc = results(
        cfg,
        Command::GridSearch,
        provenance,
        DatasetSummary::new(&data, report),
        rows,
        Some(best),
    );
    write_file(out, "results.json", &to_json(&doc))
}

fn sweep(cfg: &RunConfig, provenance: &Provenance, out: &Path) -> Result<(), CliError> {
    let (data, report) = load(cfg)?;
    let exact_spec = cfg.kernel_spec().with_shots(None);
    let options = cfg.cv_options();
    let hp = cfg.hyperparams();
    let mut rows = Vec::new();
    if cfg.shot_sweep.include_exact {
        let mut row = Row::new(
            &exact_spec,
            &cross_validate(&data, &exact_spec, hp, &options)?,
        );
        row.shots = Some(None);
        println!(
            "exact: accuracy {:.4} ± {:.4}",
            row.mean, row.ci95_half_width
        );
        rows.push(row);
    }
    let mut csv = provenance.comment();
    csv.push_str("shots,mean_accuracy,ci_half_width\n");
    for point in shot_sweep(&data, &exact_spec, hp, &cfg.shot_sweep.shots, &options)? {
        let mut row = Row::new(&exact_spec, &point.result);
        row.shots = Some(Some(point.shots));
        println!(
            "{} shots: accuracy {:.4} ± {:.4}",
            point.shots, row.mean, row.ci95_half_width
        );
        writeln!(csv, "{},{},{}", point.shots, row.mean, row.ci95_half_width)
            .expect("string write");
        rows.push(row);
    }
    let doc = results(
        cfg,
        Command::ShotSweep,
        provenance,
        DatasetSummary::new(&data, report),
        rows,
        None,
    );
    write_file(out, "results.json", &to_json(&doc))?;
    write_file(out, "shot_sweep.csv", csv.as_bytes())
}

fn table2(cfg: &RunConfig, provenance: &Provenance, out: &Path) -> Result<(), CliError> {
    let (data, report) = load(cfg)?;
    let options = cfg.cv_options();
    let specs = comparison_kernels(data.n_features());
    let mut rows = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        eprintln!("[{}/{}] {}", i + 1, specs.len(), spec.describe());
        let found = grid_search(&data, spec, &cfg.c_grid(), &cfg.gamma_grid(spec), &options)?;
        let row = Row::new(spec, &found.table[found.best_index]);
        print_row(&row);
        rows.push(row);
    }
    let doc = results(
        cfg,
        Command::Table2,
        provenance,
        DatasetSummary::new(&data, report),
        rows,
        None,
    );
    write_file(out, "results.json", &to_json(&doc))
}

fn validate(cfg: &RunConfig, provenance: &Provenance, out: &Path) -> Result<(), CliError> {
    let checks = validation::run_all(cfg.seed)?;
    for c in &checks {
        println!(
            "{} {}: metric {:e} (threshold {:e}); {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.metric,
            c.threshold,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();

    #[derive(Serialize)]
    struct Report<'a> {
        experiment: &'static str,
        #[serde(flatten)]
        provenance: &'a Provenance,
        config: Value,
        passed: bool,
        checks: &'a [validation::CheckOutcome],
    }
    let report = Report {
        experiment: Command::Validate.name(),
        provenance,
        config: cfg.echo(),
        passed: failed == 0,
        checks: &checks,
    };
    write_file(out, "validation.json", &to_json(&report))?;
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}
