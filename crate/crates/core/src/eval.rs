//! Cross-validation, (C, sigma) grid search, result tables and rank statistics.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{fit, FitError, FitReport, SolverConfig};
use crate::data::Dataset;
use crate::model::{ModelError, QuadraticSurfaceModel};

pub const METHOD_NAME: &str = "qshs";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("cannot score an empty prediction vector")]
    Empty,
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("class {label} has {count} samples; stratified {folds}-fold splits need at least 2")]
    ClassTooSmall { label: f64, count: usize, folds: usize },
    #[error("invalid arguments: {0}")]
    InvalidArgument(String),
    #[error("ragged score table: row {row} has {len} entries, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
    #[error("fold {fold} of repeat {repeat}: {source}")]
    Fold {
        repeat: usize,
        fold: usize,
        #[source]
        source: FitError,
    },
    #[error("grid cell C={penalty}, sigma={sigma}: {source}")]
    Cell {
        penalty: f64,
        sigma: f64,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn accuracy(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Number of samples with a nonzero multiplier.
pub fn nsv(report: &FitReport) -> usize {
    report.lambda.iter().filter(|&&l| l != 0.0).count()
}

pub fn predict_all(model: &QuadraticSurfaceModel, data: &Dataset) -> Result<Vec<f64>, ModelError> {
    data.features.row_iter().map(|x| model.predict(x)).collect()
}

/// Training-set (or any labelled set) accuracy of a model.
pub fn model_accuracy(model: &QuadraticSurfaceModel, data: &Dataset) -> Result<f64, EvalError> {
    accuracy(&predict_all(model, data)?, &data.labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self {
            folds: 10,
            repeats: 10,
            seed: 0,
        }
    }
}

impl CvPlan {
    pub fn new(folds: usize, repeats: usize, seed: u64) -> Result<Self, EvalError> {
        let plan = Self { folds, repeats, seed };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.folds < 2 {
            return Err(EvalError::InvalidPlan(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.repeats < 1 {
            return Err(EvalError::InvalidPlan("repeats must be at least 1".into()));
        }
        Ok(())
    }

    fn repeat_seed(&self, repeat: usize) -> u64 {
        self.seed.wrapping_add((repeat as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

/// Stratified split into `k` test folds; each fold's index list is sorted.
///
/// Within each class, fold sizes differ by at most one. A class needs at
/// least two members so that every training split still contains it.
pub fn stratified_folds(labels: &[f64], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidPlan(format!("folds must be at least 2, got {k}")));
    }
    if k > labels.len() {
        return Err(EvalError::InvalidPlan(format!(
            "{k} folds exceed {} samples",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    // continuing the round robin across classes keeps total fold sizes balanced
    let mut slot = 0;
    for class in [-1.0, 1.0] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < 2 {
            return Err(EvalError::ClassTooSmall {
                label: class,
                count: members.len(),
                folds: k,
            });
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub acc: f64,
    pub nsv: usize,
    pub iterations: usize,
    pub converged: bool,
    pub cpu_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub dataset: String,
    pub method: String,
    pub penalty: f64,
    pub sigma: f64,
    pub macc: f64,
    pub std_acc: f64,
    pub mnsv: f64,
    pub std_nsv: f64,
    pub cpu_seconds: f64,
    pub folds: Vec<FoldResult>,
}

impl EvalResult {
    pub fn converged_fraction(&self) -> f64 {
        if self.folds.is_empty() {
            return 0.0;
        }
        self.folds.iter().filter(|f| f.converged).count() as f64 / self.folds.len() as f64
    }

    /// The same result with every timing field zeroed, for determinism checks.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.cpu_seconds = 0.0;
        for f in &mut r.folds {
            f.cpu_seconds = 0.0;
        }
        r
    }

    pub fn row(&self) -> ResultRow {
        ResultRow {
            dataset: self.dataset.clone(),
            method: self.method.clone(),
            macc: self.macc,
            std_acc: self.std_acc,
            mnsv: self.mnsv,
            std_nsv: self.std_nsv,
            cpu_s: self.cpu_seconds,
            penalty: self.penalty,
            sigma: self.sigma,
        }
    }
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn run_fold(
    data: &Dataset,
    test: &[usize],
    cfg: &SolverConfig,
    repeat: usize,
    fold: usize,
) -> Result<FoldResult, EvalError> {
    let mut in_test = vec![false; data.len()];
    for &i in test {
        in_test[i] = true;
    }
    let train_idx: Vec<usize> = (0..data.len()).filter(|&i| !in_test[i]).collect();
    let train = data.subset(&train_idx);
    let test_set = data.subset(test);
    let start = Instant::now();
    let (model, report) = fit(&train, cfg).map_err(|source| EvalError::Fold {
        repeat,
        fold,
        source,
    })?;
    let acc = model_accuracy(&model, &test_set)?;
    let cpu_seconds = start.elapsed().as_secs_f64();
    Ok(FoldResult {
        repeat,
        fold,
        acc,
        nsv: nsv(&report),
        iterations: report.iterations,
        converged: report.converged,
        cpu_seconds,
    })
}

/// Repeated stratified k-fold cross-validation of one configuration.
pub fn cross_validate(data: &Dataset, plan: &CvPlan, cfg: &SolverConfig) -> Result<EvalResult, EvalError> {
    plan.validate()?;
    cfg.validate().map_err(|source| EvalError::Fold {
        repeat: 0,
        fold: 0,
        source,
    })?;
    let mut jobs = Vec::with_capacity(plan.folds * plan.repeats);
    for repeat in 0..plan.repeats {
        let folds = stratified_folds(&data.labels, plan.folds, plan.repeat_seed(repeat))?;
        for (fold, test) in folds.into_iter().enumerate() {
            jobs.push((repeat, fold, test));
        }
    }
    let folds = jobs
        .par_iter()
        .map(|(repeat, fold, test)| run_fold(data, test, cfg, *repeat, *fold))
        .collect::<Result<Vec<_>, _>>()?;
    let accs: Vec<f64> = folds.iter().map(|f| f.acc).collect();
    let nsvs: Vec<f64> = folds.iter().map(|f| f.nsv as f64).collect();
    let (macc, std_acc) = mean_std(&accs);
    let (mnsv, std_nsv) = mean_std(&nsvs);
    Ok(EvalResult {
        dataset: data.name.clone(),
        method: METHOD_NAME.to_string(),
        penalty: cfg.penalty,
        sigma: cfg.sigma,
        macc,
        std_acc,
        mnsv,
        std_nsv,
        cpu_seconds: folds.iter().map(|f| f.cpu_seconds).sum(),
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            c_values: (-7..=7).map(|e| 10f64.powi(e)).collect(),
            sigma_values: (-7..=7).map(|e| std::f64::consts::SQRT_2.powi(e)).collect(),
        }
    }
}

impl GridSpec {
    pub fn new(c_values: Vec<f64>, sigma_values: Vec<f64>) -> Result<Self, EvalError> {
        let g = Self {
            c_values,
            sigma_values,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        for (name, vals) in [("C", &self.c_values), ("sigma", &self.sigma_values)] {
            if vals.is_empty() {
                return Err(EvalError::InvalidGrid(format!("no {name} values")));
            }
            if let Some(v) = vals.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(EvalError::InvalidGrid(format!("{name} value {v} is not positive")));
            }
        }
        Ok(())
    }

    /// Cells in C-major order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.c_values
            .iter()
            .flat_map(|&c| self.sigma_values.iter().map(move |&s| (c, s)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best_penalty: f64,
    pub best_sigma: f64,
    pub best_index: usize,
    pub table: Vec<EvalResult>,
}

impl GridOutcome {
    pub fn best(&self) -> &EvalResult {
        &self.table[self.best_index]
    }
}

/// Index of the best row: highest mACC, then lowest mNSV, then smaller C, then smaller sigma.
pub fn select_best(table: &[EvalResult]) -> Option<usize> {
    (0..table.len()).min_by(|&i, &j| {
        let (a, b) = (&table[i], &table[j]);
        b.macc
            .total_cmp(&a.macc)
            .then(a.mnsv.total_cmp(&b.mnsv))
            .then(a.penalty.total_cmp(&b.penalty))
            .then(a.sigma.total_cmp(&b.sigma))
    })
}

pub fn grid_search(
    data: &Dataset,
    grid: &GridSpec,
    plan: &CvPlan,
    cfg: &SolverConfig,
) -> Result<GridOutcome, EvalError> {
    grid.validate()?;
    plan.validate()?;
    let table = grid
        .cells()
        .par_iter()
        .map(|&(penalty, sigma)| {
            let cell_cfg = SolverConfig {
                penalty,
                sigma,
                ..cfg.clone()
            };
            cross_validate(data, plan, &cell_cfg).map_err(|e| EvalError::Cell {
                penalty,
                sigma,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let best_index = select_best(&table).expect("grid is nonempty");
    Ok(GridOutcome {
        best_penalty: table[best_index].penalty,
        best_sigma: table[best_index].sigma,
        best_index,
        table,
    })
}

/// `q_alpha * sqrt(l (l + 1) / (6 h))`.
pub fn nemenyi_cd(methods: usize, datasets: usize, q_alpha: f64) -> Result<f64, EvalError> {
    if methods < 2 || datasets < 1 || !(q_alpha > 0.0 && q_alpha.is_finite()) {
        return Err(EvalError::InvalidArgument(format!(
            "need l >= 2, h >= 1, q > 0; got l={methods}, h={datasets}, q={q_alpha}"
        )));
    }
    let l = methods as f64;
    Ok(q_alpha * (l * (l + 1.0) / (6.0 * datasets as f64)).sqrt())
}

/// Average rank per method (row) over datasets (columns); rank 1 is the highest score, ties share the mid-rank.
pub fn average_ranks(scores: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
    let Some(first) = scores.first() else {
        return Ok(Vec::new());
    };
    let h = first.len();
    for (row, r) in scores.iter().enumerate() {
        if r.len() != h {
            return Err(EvalError::Ragged {
                row,
                len: r.len(),
                expected: h,
            });
        }
    }
    let l = scores.len();
    let mut totals = vec![0.0; l];
    #[allow(clippy::needless_range_loop)]
    for d in 0..h {
        let mut order: Vec<usize> = (0..l).collect();
        order.sort_by(|&a, &b| scores[b][d].total_cmp(&scores[a][d]));
        let mut start = 0;
        while start < l {
            let mut end = start + 1;
            while end < l && scores[order[end]][d] == scores[order[start]][d] {
                end += 1;
            }
            // positions start..end hold ranks start+1..=end
            let mid = (start + 1 + end) as f64 / 2.0;
            for &m in &order[start..end] {
                totals[m] += mid;
            }
            start = end;
        }
    }
    if h == 0 {
        return Ok(vec![0.0; l]);
    }
    Ok(totals.into_iter().map(|t| t / h as f64).collect())
}

/// One exported results line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    #[serde(rename = "mACC")]
    pub macc: f64,
    #[serde(rename = "stdACC")]
    pub std_acc: f64,
    #[serde(rename = "mNSV")]
    pub mnsv: f64,
    #[serde(rename = "stdNSV")]
    pub std_nsv: f64,
    pub cpu_s: f64,
    #[serde(rename = "C")]
    pub penalty: f64,
    pub sigma: f64,
}

pub fn write_results_csv<W: Write>(results: &[EvalResult], sink: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(sink);
    for r in results {
        w.serialize(r.row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_json<W: Write>(results: &[EvalResult], mut sink: W) -> Result<(), EvalError> {
    let rows: Vec<ResultRow> = results.iter().map(EvalResult::row).collect();
    serde_json::to_writer_pretty(&mut sink, &rows)?;
    sink.write_all(b"\n")?;
    Ok(())
}
