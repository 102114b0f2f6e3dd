//! Soft-margin kernel SVM trained on a precomputed Gram matrix.
//!
//! The dual problem
//!
//! ```text
//! max_α  Σ α_i − ½ Σ_ij α_i α_j y_i y_j K_ij
//! s.t.   0 ≤ α_i ≤ C,  Σ α_i y_i = 0
//! ```
//!
//! is solved by sequential minimal optimization. The solver keeps the
//! gradient `G = Qα − 1` (with `Q_ij = y_i y_j K_ij`) and works with the
//! bias-free violation scores `v_i = −y_i G_i`; a pair `(i, j)` can make
//! progress when `i` may move up, `j` may move down and `v_i > v_j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;

pub const DEFAULT_KKT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_PASSES: usize = 10;
pub const DEFAULT_ALPHA_TOL: f64 = 1e-8;

/// Curvature floor for pairs with `K_ii + K_jj − 2K_ij ≤ 0`.
const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub alphas: Vec<f64>,
    pub labels: Vec<i8>,
    pub support_indices: Vec<usize>,
    pub bias: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub dual_objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub c: f64,
    pub kkt_tolerance: f64,
    /// Consecutive full passes without an update before stopping.
    pub max_passes: usize,
    /// Pair-update budget; `None` means `1000 · N`.
    pub max_iterations: Option<usize>,
    pub alpha_tol: f64,
}

impl TrainConfig {
    pub fn new(c: f64) -> Self {
        Self {
            c,
            kkt_tolerance: DEFAULT_KKT_TOLERANCE,
            max_passes: DEFAULT_MAX_PASSES,
            max_iterations: None,
            alpha_tol: DEFAULT_ALPHA_TOL,
        }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.kkt_tolerance = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("C", self.c)?;
        positive("kkt_tolerance", self.kkt_tolerance)?;
        positive("alpha_tol", self.alpha_tol)?;
        if self.max_passes == 0 || self.max_iterations == Some(0) {
            return Err(Error::config(
                "max_passes and max_iterations must be at least 1",
            ));
        }
        Ok(())
    }
}

fn check_labels(labels: &[i8], size: usize) -> Result<()> {
    if labels.len() != size {
        return Err(Error::usage(format!(
            "{} labels for a {size}×{size} Gram matrix",
            labels.len()
        )));
    }
    if size < 2 {
        return Err(Error::DegenerateData(
            "need at least two training points".into(),
        ));
    }
    if let Some(l) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::usage(format!("label {l} is not ±1")));
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::DegenerateData(
            "training labels contain a single class".into(),
        ));
    }
    Ok(())
}

/// Trains with the uniform box `0 ≤ α_i ≤ C`.
pub fn train_smo(gram: &GramMatrix, labels: &[i8], config: &TrainConfig) -> Result<SvmModel> {
    let bounds = vec![config.c; labels.len()];
    train_smo_bounded(gram, labels, &bounds, config)
}

/// Trains with a per-point box `0 ≤ α_i ≤ bounds[i]` (a weighted soft margin).
/// `config.c` is recorded on the model but the bounds govern the solve.
pub fn train_smo_bounded(
    gram: &GramMatrix,
    labels: &[i8],
    bounds: &[f64],
    config: &TrainConfig,
) -> Result<SvmModel> {
    config.validate()?;
    check_labels(labels, gram.size())?;
    if bounds.len() != labels.len() || bounds.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
        return Err(Error::usage(
            "bounds must be positive, one per training point",
        ));
    }
    let n = labels.len();
    let mut solver = Solver::new(gram, labels, bounds, config.kkt_tolerance);
    let budget = config.max_iterations.unwrap_or(1000 * n);

    let mut examine_all = true;
    let mut idle_full_passes = 0;
    loop {
        let mut changed = 0;
        for i in 0..n {
            if !examine_all && !solver.is_free(i) {
                continue;
            }
            if solver.iterations >= budget {
                let gap = solver.kkt_gap();
                let best = solver.into_model(config)?;
                return Err(Error::Convergence {
                    iterations: budget,
                    gap,
                    best: Box::new(best),
                });
            }
            if solver.examine(i) {
                changed += 1;
            }
        }
        if examine_all {
            if changed == 0 {
                idle_full_passes += 1;
                if idle_full_passes >= config.max_passes {
                    break;
                }
            } else {
                idle_full_passes = 0;
            }
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
    }
    debug_assert!(solver.kkt_gap() <= config.kkt_tolerance);
    solver.into_model(config)
}

struct Solver<'a> {
    gram: &'a GramMatrix,
    y: Vec<f64>,
    labels: &'a [i8],
    upper: &'a [f64],
    alpha: Vec<f64>,
    grad: Vec<f64>,
    tol: f64,
    iterations: usize,
}

impl<'a> Solver<'a> {
    fn new(gram: &'a GramMatrix, labels: &'a [i8], upper: &'a [f64], tol: f64) -> Self {
        let n = labels.len();
        Self {
            gram,
            y: labels.iter().map(|&l| f64::from(l)).collect(),
            labels,
            upper,
            alpha: vec![0.0; n],
            grad: vec![-1.0; n],
            tol,
            iterations: 0,
        }
    }

    fn score(&self, i: usize) -> f64 {
        -self.y[i] * self.grad[i]
    }

    fn can_move_up(&self, i: usize) -> bool {
        if self.y[i] > 0.0 {
            self.alpha[i] < self.upper[i]
        } else {
            self.alpha[i] > 0.0
        }
    }

    fn can_move_down(&self, i: usize) -> bool {
        if self.y[i] > 0.0 {
            self.alpha[i] > 0.0
        } else {
            self.alpha[i] < self.upper[i]
        }
    }

    fn is_free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.upper[i]
    }

    /// `(max score over movable-up, its index, min score over movable-down, its index)`.
    fn extremes(&self) -> (f64, Option<usize>, f64, Option<usize>) {
        let (mut hi, mut hi_i) = (f64::NEG_INFINITY, None);
        let (mut lo, mut lo_i) = (f64::INFINITY, None);
        for i in 0..self.alpha.len() {
            let s = self.score(i);
            if self.can_move_up(i) && s > hi {
                hi = s;
                hi_i = Some(i);
            }
            if self.can_move_down(i) && s < lo {
                lo = s;
                lo_i = Some(i);
            }
        }
        (hi, hi_i, lo, lo_i)
    }

    fn kkt_gap(&self) -> f64 {
        let (hi, _, lo, _) = self.extremes();
        (hi - lo).max(0.0)
    }

    /// Pairs `i` with the partner that maximizes `|E_i − E_j|` if `i`
    /// violates the KKT conditions by more than the tolerance.
    fn examine(&mut self, i: usize) -> bool {
        let (hi, hi_i, lo, lo_i) = self.extremes();
        let s = self.score(i);
        if self.can_move_up(i) && s > lo + self.tol {
            if let Some(j) = lo_i {
                return self.take_step(i, j);
            }
        }
        if self.can_move_down(i) && s < hi - self.tol {
            if let Some(j) = hi_i {
                return self.take_step(j, i);
            }
        }
        false
    }

    /// Moves `y_i α_i` up and `y_j α_j` down by the same clipped amount.
    fn take_step(&mut self, i: usize, j: usize) -> bool {
        let gap = self.score(i) - self.score(j);
        if i == j || gap <= 0.0 {
            return false;
        }
        let k = self.gram;
        let eta = (k.get(i, i) + k.get(j, j) - 2.0 * k.get(i, j)).max(TAU);
        let room_i = if self.y[i] > 0.0 {
            self.upper[i] - self.alpha[i]
        } else {
            self.alpha[i]
        };
        let room_j = if self.y[j] > 0.0 {
            self.alpha[j]
        } else {
            self.upper[j] - self.alpha[j]
        };
        let step = (gap / eta).min(room_i).min(room_j);
        if step <= 0.0 {
            return false;
        }
        #[cfg(debug_assertions)]
        let before = self.objective_from_gradient();

        let old_i = self.alpha[i];
        let old_j = self.alpha[j];
        self.alpha[i] = if step == room_i {
            if self.y[i] > 0.0 {
                self.upper[i]
            } else {
                0.0
            }
        } else {
            (old_i + self.y[i] * step).clamp(0.0, self.upper[i])
        };
        self.alpha[j] = if step == room_j {
            if self.y[j] > 0.0 {
                0.0
            } else {
                self.upper[j]
            }
        } else {
            (old_j - self.y[j] * step).clamp(0.0, self.upper[j])
        };
        let di = (self.alpha[i] - old_i) * self.y[i];
        let dj = (self.alpha[j] - old_j) * self.y[j];
        if di == 0.0 && dj == 0.0 {
            return false;
        }
        for t in 0..self.grad.len() {
            self.grad[t] += self.y[t] * (k.get(t, i) * di + k.get(t, j) * dj);
        }
        self.iterations += 1;

        #[cfg(debug_assertions)]
        {
            let after = self.objective_from_gradient();
            debug_assert!(
                after >= before - 1e-9 * (1.0 + before.abs()),
                "dual objective decreased: {before} -> {after}"
            );
        }
        true
    }

    #[cfg(debug_assertions)]
    fn objective_from_gradient(&self) -> f64 {
        0.5 * self
            .alpha
            .iter()
            .zip(&self.grad)
            .map(|(a, g)| a * (1.0 - g))
            .sum::<f64>()
    }

    fn into_model(self, config: &TrainConfig) -> Result<SvmModel> {
        let bias = bias_with_bounds(
            self.gram,
            self.labels,
            &self.alpha,
            self.upper,
            config.alpha_tol,
        )?;
        let support_indices = support(&self.alpha, config.alpha_tol);
        Ok(SvmModel {
            dual_objective: dual_objective(self.gram, self.labels, &self.alpha),
            alphas: self.alpha,
            labels: self.labels.to_vec(),
            support_indices,
            bias,
            c: config.c,
        })
    }
}

fn support(alphas: &[f64], tol: f64) -> Vec<usize> {
    alphas
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > tol)
        .map(|(i, _)| i)
        .collect()
}

/// `Σ α_i − ½ Σ_ij α_i α_j y_i y_j K_ij`.
pub fn dual_objective(gram: &GramMatrix, labels: &[i8], alphas: &[f64]) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        let yi = f64::from(labels[i]);
        let inner: f64 = (0..n)
            .map(|j| alphas[j] * f64::from(labels[j]) * gram.get(i, j))
            .sum();
        quad += alphas[i] * yi * inner;
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// Bias `b*`: the mean of `y_i − Σ_j α_j y_j K_ij` over free support
/// vectors, or the midpoint of the feasible interval implied by the
/// bounded multipliers when none are free.
pub fn compute_bias(gram: &GramMatrix, labels: &[i8], alphas: &[f64], c: f64) -> Result<f64> {
    check_labels(labels, gram.size())?;
    if alphas.len() != labels.len() {
        return Err(Error::usage("one alpha per label required"));
    }
    let bounds = vec![c; labels.len()];
    bias_with_bounds(gram, labels, alphas, &bounds, DEFAULT_ALPHA_TOL)
}

fn bias_with_bounds(
    gram: &GramMatrix,
    labels: &[i8],
    alphas: &[f64],
    upper: &[f64],
    tol: f64,
) -> Result<f64> {
    if alphas.iter().all(|&a| a <= tol) {
        return Err(Error::DegenerateModel("no support vectors".into()));
    }
    let n = alphas.len();
    let score = |i: usize| -> f64 {
        let f: f64 = (0..n)
            .filter(|&j| alphas[j] != 0.0)
            .map(|j| alphas[j] * f64::from(labels[j]) * gram.get(i, j))
            .sum();
        f64::from(labels[i]) - f
    };

    let free: Vec<usize> = (0..n)
        .filter(|&i| alphas[i] > tol && alphas[i] < upper[i] - tol)
        .collect();
    if !free.is_empty() {
        return Ok(free.iter().map(|&i| score(i)).sum::<f64>() / free.len() as f64);
    }

    // At α = 0 the margin condition gives y(b − v) ≥ 0; at α = C, ≤ 0.
    let mut lower = f64::NEG_INFINITY;
    let mut upper_b = f64::INFINITY;
    for i in 0..n {
        let at_zero = alphas[i] <= tol;
        let positive = labels[i] > 0;
        let s = score(i);
        if at_zero == positive {
            lower = lower.max(s);
        } else {
            upper_b = upper_b.min(s);
        }
    }
    Ok(match (lower.is_finite(), upper_b.is_finite()) {
        (true, true) => 0.5 * (lower + upper_b),
        (true, false) => lower,
        (false, true) => upper_b,
        (false, false) => 0.0,
    })
}

impl SvmModel {
    /// `Σ_{i ∈ support} α_i y_i k(x_i, x) + b*` with `kernel_row[i] = k(x_i, x)`.
    pub fn decision_value(&self, kernel_row: &[f64]) -> Result<f64> {
        if kernel_row.len() != self.alphas.len() {
            return Err(Error::usage(format!(
                "kernel row of length {} for a model trained on {} points",
                kernel_row.len(),
                self.alphas.len()
            )));
        }
        let sum: f64 = self
            .support_indices
            .iter()
            .map(|&i| self.alphas[i] * f64::from(self.labels[i]) * kernel_row[i])
            .sum();
        Ok(sum + self.bias)
    }

    /// Sign of the decision value; exactly zero maps to +1.
    pub fn predict(&self, kernel_row: &[f64]) -> Result<i8> {
        Ok(sign(self.decision_value(kernel_row)?))
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<i8>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

pub fn sign(value: f64) -> i8 {
    if value >= 0.0 {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram_matrix, KernelSpec};

    fn linear_gram(xs: &[f64]) -> GramMatrix {
        GramMatrix::from_rows(
            xs.iter()
                .map(|a| xs.iter().map(|b| a * b).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_point_analytic_solution() {
        let k = linear_gram(&[-1.0, 1.0]);
        let m = train_smo(&k, &[-1, 1], &TrainConfig::new(10.0)).unwrap();
        assert!((m.alphas[0] - 0.5).abs() < 1e-9 && (m.alphas[1] - 0.5).abs() < 1e-9);
        assert!(m.bias.abs() < 1e-9);
        assert_eq!(m.support_indices, [0, 1]);
        // x = 0 → k(x_i, 0) = 0
        assert!(m.decision_value(&[0.0, 0.0]).unwrap().abs() < 1e-12);
        assert!((m.dual_objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bias_absorbs_shift() {
        let k = linear_gram(&[0.0, 2.0]);
        let m = train_smo(&k, &[-1, 1], &TrainConfig::new(100.0)).unwrap();
        assert!((m.bias + 1.0).abs() < 1e-9);
        assert!((compute_bias(&k, &[-1, 1], &m.alphas, 100.0).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn bias_fallback_without_free_vectors() {
        let k = linear_gram(&[-1.0, 1.0]);
        let m = train_smo(&k, &[-1, 1], &TrainConfig::new(0.1)).unwrap();
        assert_eq!(m.alphas, [0.1, 0.1]);
        let b = compute_bias(&k, &[-1, 1], &m.alphas, 0.1).unwrap();
        assert!(b.is_finite() && b.abs() < 1e-12);
        assert!(matches!(
            compute_bias(&k, &[-1, 1], &[0.0, 0.0], 0.1),
            Err(Error::DegenerateModel(_))
        ));
    }

    #[test]
    fn xor_is_separated_by_rbf() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let labels = [-1, -1, 1, 1];
        let k = gram_matrix(&pts, &KernelSpec::Rbf { gamma: 1.0 }).unwrap();
        let m = train_smo(&k, &labels, &TrainConfig::new(10.0).with_tolerance(1e-10)).unwrap();
        assert_eq!(m.support_indices.len(), 4);
        // by symmetry every α equals 1/(1 − e^{−1})²
        let expected = 1.0 / (1.0 - (-1.0f64).exp()).powi(2);
        for a in &m.alphas {
            assert!((a - expected).abs() < 1e-8, "{a} vs {expected}");
        }
        for (i, &l) in labels.iter().enumerate() {
            assert_eq!(m.predict(k.row(i)).unwrap(), l);
        }
    }

    #[test]
    fn free_vectors_sit_on_the_margin() {
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i as f64 * 0.77).sin(), (i as f64 * 1.3).cos()])
            .collect();
        let labels: Vec<i8> = (0..12).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let k = gram_matrix(&pts, &KernelSpec::Rbf { gamma: 2.0 }).unwrap();
        let cfg = TrainConfig::new(5.0);
        let m = train_smo(&k, &labels, &cfg).unwrap();
        let eq: f64 = m
            .alphas
            .iter()
            .zip(&labels)
            .map(|(a, &y)| a * f64::from(y))
            .sum();
        assert!(eq.abs() < 1e-8);
        for (i, &a) in m.alphas.iter().enumerate() {
            assert!((0.0..=5.0).contains(&a));
            if a > 1e-6 && a < 5.0 - 1e-6 {
                let f = m.decision_value(k.row(i)).unwrap();
                assert!((f - f64::from(labels[i])).abs() <= cfg.kkt_tolerance, "{f}");
            }
        }
    }

    #[test]
    fn rejects_degenerate_labels() {
        let k = linear_gram(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            train_smo(&k, &[1, 1, 1], &TrainConfig::new(1.0)),
            Err(Error::DegenerateData(_))
        ));
        assert!(matches!(
            train_smo(&k, &[1, -1], &TrainConfig::new(1.0)),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            train_smo(&k, &[1, -1, 1], &TrainConfig::new(0.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn iteration_budget_reports_best_iterate() {
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![i as f64 / 30.0, ((i * 7) % 11) as f64 / 11.0])
            .collect();
        let labels: Vec<i8> = (0..30)
            .map(|i| if (i * 5) % 7 < 3 { 1 } else { -1 })
            .collect();
        let k = gram_matrix(&pts, &KernelSpec::Rbf { gamma: 3.0 }).unwrap();
        let mut cfg = TrainConfig::new(100.0);
        cfg.max_iterations = Some(2);
        match train_smo(&k, &labels, &cfg) {
            Err(Error::Convergence {
                iterations, best, ..
            }) => {
                assert_eq!(iterations, 2);
                let eq: f64 = best
                    .alphas
                    .iter()
                    .zip(&labels)
                    .map(|(a, &y)| a * f64::from(y))
                    .sum();
                assert!(eq.abs() < 1e-12);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn sign_tie_break() {
        assert_eq!(sign(2.3), 1);
        assert_eq!(sign(-0.1), -1);
        assert_eq!(sign(0.0), 1);
        let m = SvmModel {
            alphas: vec![0.0, 0.0],
            labels: vec![-1, 1],
            support_indices: vec![],
            bias: 0.25,
            c: 1.0,
            dual_objective: 0.0,
        };
        assert_eq!(m.decision_value(&[0.3, 0.9]).unwrap(), 0.25);
        assert!(m.decision_value(&[0.3]).is_err());
    }

    #[test]
    fn model_json_keys() {
        let k = linear_gram(&[-1.0, 1.0]);
        let m = train_smo(&k, &[-1, 1], &TrainConfig::new(10.0)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "C",
                "alphas",
                "bias",
                "dual_objective",
                "labels",
                "support_indices"
            ]
        );
        let back: SvmModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
