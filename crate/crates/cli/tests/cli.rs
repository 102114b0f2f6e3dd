use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_qkernel");

/// Two occupancy-like classes separated mainly by illuminance and co2.
fn write_dataset(dir: &Path, rows: usize) -> PathBuf {
    let mut text = String::from("date,illuminance,blinds,lamps,rh,co2,temp,occupancy\n");
    for i in 0..rows {
        let occupied = i % 2 == 1;
        let wobble = |k: f64| ((i as f64 + 1.0) * k).sin();
        let (lux, co2) = if occupied {
            (320.0, 720.0)
        } else {
            (60.0, 450.0)
        };
        text.push_str(&format!(
            "t{i},{:.2},{:.2},{},{:.2},{:.1},{:.2},{}\n",
            lux + 80.0 * wobble(1.7),
            0.5 + 0.5 * wobble(2.3),
            i % 4,
            40.0 + 5.0 * wobble(0.9),
            co2 + 90.0 * wobble(3.1),
            22.0 + wobble(1.1),
            if occupied { 1 } else { 0 }
        ));
    }
    let path = dir.join("occupancy.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn arg(key: &str, value: impl AsRef<Path>) -> String {
    format!("--{key}={}", value.as_ref().display())
}

#[test]
fn minimal_config_applies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 40);
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"command": "cv", "dataset": {{"path": {:?}}}}}"#,
            data.display().to_string()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let res = run(&[&arg("config", &cfg), &arg("output_dir", &out)]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let echo = read_json(&out.join("resolved_config.json"));
    assert_eq!(echo["config"]["cv"]["k"], 10);
    assert_eq!(echo["config"]["kernel"]["kind"], "PQK");
    assert_eq!(echo["config"]["kernel"]["feature_map"], "ThreeD");
    assert_eq!(echo["config"]["kernel"]["strategy"], "M2");
    assert_eq!(echo["config"]["svm"]["C"], 1.0);
    assert_eq!(echo["config"]["cv"]["scaling"], "global");
    assert_eq!(echo["seed"], 0);
    let results = read_json(&out.join("results.json"));
    assert_eq!(
        results["rows"][0]["fold_accuracies"]
            .as_array()
            .unwrap()
            .len(),
        10
    );
    assert_eq!(results["rows"][0]["feature_map"], "ThreeD+ring");
}

#[test]
fn flag_overrides_file_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"command": "validate", "seed": 3}"#).unwrap();
    let out = dir.path().join("out");
    let res = run(&[&arg("config", &cfg), "--seed=7", &arg("output_dir", &out)]);
    assert!(res.status.success());
    assert_eq!(read_json(&out.join("resolved_config.json"))["seed"], 7);
    assert_eq!(read_json(&out.join("validation.json"))["seed"], 7);
}

#[test]
fn unknown_key_is_a_config_error_with_suggestion() {
    let res = run(&["cv", "--dataset.path=x.csv", "--kernel.gama=0.1"]);
    assert_eq!(res.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(
        stderr.contains("kernel.gama") && stderr.contains("\"kernel.gamma\""),
        "{stderr}"
    );
}

#[test]
fn type_mismatch_is_a_config_error_naming_the_field() {
    let res = run(&["cv", "--dataset.path=x.csv", "--cv.k=ten"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("cv.k"));
}

#[test]
fn invalid_value_is_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = run(&[
        "cv",
        "--dataset.path=missing.csv",
        "--svm.C=-1",
        &arg("output_dir", &out),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("svm.C"));
    assert!(!out.exists());
}

#[test]
fn missing_dataset_is_an_ingestion_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&[
        "cv",
        &arg("dataset.path", dir.path().join("nope.csv")),
        &arg("output_dir", dir.path().join("out")),
    ]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn missing_column_names_the_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 20);
    let text = std::fs::read_to_string(&data)
        .unwrap()
        .replacen("co2", "carbon", 1);
    std::fs::write(&data, text).unwrap();
    let res = run(&[
        "cv",
        &arg("dataset.path", &data),
        &arg("output_dir", dir.path().join("out")),
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("\"co2\""));

    // the same file works once the column is mapped
    let res = run(&[
        "cv",
        &arg("dataset.path", &data),
        r#"--dataset.column_map={"co2": "carbon"}"#,
        "--cv.k=5",
        &arg("output_dir", dir.path().join("out")),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
}

#[test]
fn solver_budget_exhaustion_is_a_convergence_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 30);
    let res = run(&[
        "cv",
        &arg("dataset.path", &data),
        "--kernel.kind=RBF",
        "--svm.max_iterations=1",
        "--svm.C=1000",
        "--cv.k=3",
        &arg("output_dir", dir.path().join("out")),
    ]);
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn gram_outputs_are_reproducible_and_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 24);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = run(&[
            "gram",
            &arg("dataset.path", &data),
            &arg("output_dir", out),
            "--seed=5",
        ]);
        assert!(res.status.success());
        assert!(String::from_utf8_lossy(&res.stdout).contains("min eigenvalue"));
    }
    for name in ["gram.csv", "gram.bin", "gram.json", "resolved_config.json"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let summary = read_json(&a.join("gram.json"));
    let hash = summary["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert_eq!(summary["size"], 24);
    assert!(summary["min_eigenvalue"].as_f64().unwrap() >= -1e-8);

    let csv = std::fs::read_to_string(a.join("gram.csv")).unwrap();
    assert!(csv.starts_with(&format!(
        "# qkernel {} config_hash={hash} seed=5",
        env!("CARGO_PKG_VERSION")
    )));
    let parsed = qkernel::GramMatrix::read_csv(csv.as_bytes()).unwrap();
    let (binary, metadata) =
        qkernel::GramMatrix::read_binary(std::fs::read(a.join("gram.bin")).unwrap().as_slice())
            .unwrap();
    assert_eq!(parsed, binary);
    let meta: Value = serde_json::from_str(&metadata).unwrap();
    assert_eq!(meta["config_hash"], hash.as_str());
    assert_eq!(meta["seed"], 5);
}

#[test]
fn encode_writes_projected_features() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 10);
    let out = dir.path().join("out");
    let res = run(&[
        "encode",
        &arg("dataset.path", &data),
        "--kernel.feature_map=RotX",
        "--kernel.strategy=Union",
        &arg("output_dir", &out),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let text = std::fs::read_to_string(out.join("features.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# qkernel"));
    let header: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(header.len(), 2 + 36);
    assert_eq!(&header[..5], ["index", "label", "X0", "Y0", "Z0"]);
    assert_eq!(header[2 + 18], "X0X1");
    assert_eq!(lines.len(), 12);
    for line in &lines[2..] {
        let values: Vec<f64> = line
            .split(',')
            .skip(2)
            .map(|v| v.parse().unwrap())
            .collect();
        assert!(values.iter().all(|v| (-1.0..=1.0).contains(v)));
        // RotX never populates ⟨X⟩
        assert!(values[0].abs() < 1e-12);
    }
}

#[test]
fn encode_rejects_non_projected_kernels() {
    let res = run(&["encode", "--dataset.path=x.csv", "--kernel.kind=RBF"]);
    assert_eq!(res.status.code(), Some(2));
}

fn check_row(row: &Value) {
    for key in [
        "kernel",
        "feature_map",
        "strategy",
        "C",
        "gamma",
        "fold_accuracies",
        "mean",
        "ci95_half_width",
    ] {
        assert!(row.get(key).is_some(), "row lacks {key}: {row}");
    }
    let folds: Vec<f64> = row["fold_accuracies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let mean = folds.iter().sum::<f64>() / folds.len() as f64;
    assert!((mean - row["mean"].as_f64().unwrap()).abs() < 1e-12);
    assert!(row["ci95_half_width"].as_f64().unwrap() >= 0.0);
}

fn check_header(doc: &Value, experiment: &str, seed: u64) {
    assert_eq!(doc["experiment"], experiment);
    assert_eq!(doc["seed"], seed);
    assert_eq!(doc["tool_version"], env!("CARGO_PKG_VERSION"));
    let hash = doc["config_hash"].as_str().unwrap();
    assert!(hash.len() == 64 && hash.chars().all(|c| c.is_ascii_hexdigit()));
    assert!(doc["config"].is_object());
}

#[test]
fn grid_search_reports_every_cell_and_the_best() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 40);
    let out = dir.path().join("out");
    let res = run(&[
        "grid-search",
        &arg("dataset.path", &data),
        "--kernel.kind=RBF",
        "--grid.C=[0.1,1,10]",
        "--grid.gamma=[0.01,1]",
        "--cv.k=4",
        "--seed=2",
        &arg("output_dir", &out),
    ]);
    assert!(res.status.success());
    let doc = read_json(&out.join("results.json"));
    check_header(&doc, "grid-search", 2);
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    rows.iter().for_each(check_row);
    assert_eq!(rows[0]["kernel"], "RBF");
    assert!(rows[0]["feature_map"].is_null() && rows[0]["strategy"].is_null());
    let best = &doc["best"];
    let idx = best["index"].as_u64().unwrap() as usize;
    let top = rows
        .iter()
        .map(|r| r["mean"].as_f64().unwrap())
        .fold(0.0, f64::max);
    assert_eq!(rows[idx]["mean"].as_f64().unwrap(), top);
    assert_eq!(best["C"], rows[idx]["C"]);
}

#[test]
fn fidelity_grid_has_one_gamma_cell_per_c() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 20);
    let out = dir.path().join("out");
    let res = run(&[
        "grid-search",
        &arg("dataset.path", &data),
        "--kernel.kind=FidelityQK",
        "--kernel.feature_map=RotX",
        "--cv.k=4",
        &arg("output_dir", &out),
    ]);
    assert!(res.status.success());
    let doc = read_json(&out.join("results.json"));
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows
        .iter()
        .all(|r| r["gamma"].is_null() && r["strategy"].is_null()));
}

#[test]
fn shot_sweep_writes_rows_and_plot_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 30);
    let out = dir.path().join("out");
    let res = run(&[
        "shot-sweep",
        &arg("dataset.path", &data),
        "--shot_sweep.shots=[32,512]",
        "--cv.k=3",
        &arg("output_dir", &out),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let doc = read_json(&out.join("results.json"));
    check_header(&doc, "shot-sweep", 0);
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    rows.iter().for_each(check_row);
    assert!(rows[0]["shots"].is_null());
    assert_eq!(rows[1]["shots"], 32);
    assert_eq!(rows[2]["shots"], 512);

    let csv = std::fs::read_to_string(out.join("shot_sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# qkernel"));
    assert_eq!(lines[1], "shots,mean_accuracy,ci_half_width");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("32,"));
}

#[test]
fn shot_sweep_rejects_unsorted_counts() {
    let res = run(&[
        "shot-sweep",
        "--dataset.path=x.csv",
        "--shot_sweep.shots=[512,32]",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn table2_has_every_comparison_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 24);
    let out = dir.path().join("out");
    let res = run(&[
        "table2",
        &arg("dataset.path", &data),
        "--cv.k=3",
        "--grid.C=[1]",
        "--grid.gamma=[0.5]",
        &arg("output_dir", &out),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let doc = read_json(&out.join("results.json"));
    check_header(&doc, "table2", 0);
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 25);
    rows.iter().for_each(check_row);
    let count = |kernel: &str| rows.iter().filter(|r| r["kernel"] == kernel).count();
    assert_eq!(
        (count("PQK"), count("FidelityQK"), count("RBF")),
        (18, 6, 1)
    );
    let starred = rows
        .iter()
        .filter(|r| r["feature_map"] == "ThreeD+ring" && r["strategy"] == "M2")
        .count();
    assert_eq!(starred, 1);
}

#[test]
fn job_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 30);
    let mut outputs = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("out{jobs}"));
        let res = run(&[
            "grid-search",
            &arg("dataset.path", &data),
            "--kernel.feature_map=IQP",
            "--kernel.strategy=M1",
            "--grid.C=[1,10]",
            "--cv.k=3",
            "--jobs",
            jobs,
            &arg("output_dir", &out),
        ]);
        assert!(res.status.success());
        outputs.push(std::fs::read(out.join("results.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn validate_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = run(&["validate", "--seed=11", &arg("output_dir", out)]);
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stdout)
        );
    }
    let report = read_json(&a.join("validation.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 7);
    assert_eq!(
        std::fs::read(a.join("validation.json")).unwrap(),
        std::fs::read(b.join("validation.json")).unwrap()
    );
}
