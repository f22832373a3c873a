//! Working-set ADMM for the 0-1 loss quadratic-surface SVM.
//!
//! The training problem, in vectorized form, is
//!
//! ```text
//! min  1/2 sum_i ||M_i w + b||^2 + C ||u_+||_0
//! s.t. u + A w + B b + c y = 1
//! ```
//!
//! with `w = hvec(W)`, `M_i = Mat(x_i)`, rows `A_i = y_i qvec(x_i)` and
//! `B_i = y_i x_i`. Each iteration
//!
//! 1. forms `v = 1 - A w - B b - c y - lambda / sigma`,
//! 2. takes the working set `T = {i : v_i in (0, sqrt(2C/sigma)]}`,
//! 3. sets `u = v` off `T` and `u = 0` on `T` (the 0-1 prox),
//! 4. solves `(G + sigma K_T' K_T) [w; b] = sigma K_T' d_T` with `K = [A B]`,
//!    directly when `(n^2+3n)/2 <= |T|`, by CG otherwise,
//! 5. updates `c` in closed form,
//! 6. moves `lambda` on `T` by `eta * sigma * residual` and zeroes it off `T`.
//!
//! The loop stops once the four P-stationarity residuals all fall below `tol`.
//!
//! Per-iteration cost: `O(N (n^2+3n)/2)` for `v`, `c` and `lambda`; the
//! `[w; b]` step costs `O(m^2 |T| + m^3)` on the direct path (`m = (n^2+3n)/2`)
//! and `O(m^2 q)` on the CG path. [`SolveStats`] counts the work actually done.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{apply_scaler, fit_scaler, DataError, Dataset};
use crate::linsolve::{conjugate_gradient, Cholesky, LinsolveError, DEFAULT_CG_TOL};
use crate::matrix::{axpy, dot, norm, Matrix};
use crate::model::{ModelError, QuadraticSurfaceModel, TrainingMeta};
use crate::prox::{in_working_band, prox, ProxParams};
use crate::quadmap::{half_len, mat_op, qvec_unchecked, unhvec_slice, HalfVector, MatOperator};

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("dataset must contain both classes")]
    SingleClass,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("linear solve failed at iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: LinsolveError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the `[w; b]` system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchPolicy {
    /// Direct when `(n^2+3n)/2 <= |T|`, CG otherwise.
    #[default]
    Auto,
    ForceDirect,
    ForceCg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Penalty `C` on the 0-1 loss.
    pub penalty: f64,
    /// Augmented Lagrangian penalty `sigma`.
    pub sigma: f64,
    /// Dual step size.
    pub eta: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Diagonal regularizer is `ridge_scale * (1 + trace(G) / m)`.
    pub ridge_scale: f64,
    pub cg_tol: f64,
    /// `None` means the system order.
    pub cg_max_iter: Option<usize>,
    pub branch: BranchPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            penalty: 1.0,
            sigma: 1.0,
            eta: 1.618,
            max_iter: 1000,
            tol: 1e-3,
            ridge_scale: 1e-10,
            cg_tol: DEFAULT_CG_TOL,
            cg_max_iter: None,
            branch: BranchPolicy::Auto,
        }
    }
}

impl SolverConfig {
    pub fn with_params(penalty: f64, sigma: f64) -> Self {
        Self {
            penalty,
            sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let positive = [
            ("C", self.penalty),
            ("sigma", self.sigma),
            ("eta", self.eta),
            ("tol", self.tol),
            ("cg_tol", self.cg_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FitError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.ridge_scale >= 0.0 && self.ridge_scale.is_finite()) {
            return Err(FitError::InvalidConfig(format!(
                "ridge_scale must be non-negative, got {}",
                self.ridge_scale
            )));
        }
        if self.cg_max_iter == Some(0) {
            return Err(FitError::InvalidConfig("cg_max_iter must be positive".into()));
        }
        Ok(())
    }

    fn prox_params(&self) -> ProxParams {
        ProxParams::from_sigma(self.sigma, self.penalty).expect("validated config")
    }
}

/// Precomputed matrices of a (scaled) training set.
#[derive(Debug, Clone)]
pub struct DesignMatrices {
    n: usize,
    /// `[A B]`, one row per sample.
    ab: Matrix,
    /// Unsigned `qvec` rows.
    s: Matrix,
    y: Vec<f64>,
    mats: Vec<MatOperator>,
    gram: Matrix,
}

impl DesignMatrices {
    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.n
    }

    /// `(n^2+n)/2`, the length of `hvec(W)`.
    pub fn half_len(&self) -> usize {
        half_len(self.n)
    }

    /// `(n^2+3n)/2`, the order of the `[w; b]` system.
    pub fn order(&self) -> usize {
        half_len(self.n) + self.n
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn qvec_rows(&self) -> &Matrix {
        &self.s
    }

    pub fn mat_operators(&self) -> &[MatOperator] {
        &self.mats
    }

    /// Row `i` of `[A B]`.
    pub fn ab_row(&self, i: usize) -> &[f64] {
        self.ab.row(i)
    }

    pub fn ab(&self) -> &Matrix {
        &self.ab
    }

    pub fn a(&self) -> Matrix {
        self.split_columns(0, self.half_len())
    }

    pub fn b(&self) -> Matrix {
        self.split_columns(self.half_len(), self.order())
    }

    fn split_columns(&self, from: usize, to: usize) -> Matrix {
        let rows: Vec<Vec<f64>> = self.ab.row_iter().map(|r| r[from..to].to_vec()).collect();
        if rows.is_empty() {
            Matrix::zeros(0, to - from)
        } else {
            Matrix::from_rows(&rows)
        }
    }

    /// `[A B] z`
    pub fn apply_ab(&self, z: &[f64]) -> Vec<f64> {
        self.ab.mul_vec(z)
    }
}

pub fn build_design(data: &Dataset) -> Result<DesignMatrices, FitError> {
    let n_samples = data.len();
    if n_samples < 2 {
        return Err(FitError::TooFewSamples(n_samples));
    }
    if !data.has_both_classes() {
        return Err(FitError::SingleClass);
    }
    let n = data.n_features();
    let h = half_len(n);
    let m = h + n;
    let mut ab = Matrix::zeros(n_samples, m);
    let mut s = Matrix::zeros(n_samples, h);
    let mut mats = Vec::with_capacity(n_samples);
    let mut gram = Matrix::zeros(m, m);
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(n + 1);
    for (i, (x, &y)) in data.features.row_iter().zip(&data.labels).enumerate() {
        let q = qvec_unchecked(x);
        let row = ab.row_mut(i);
        for (dst, &qk) in row[..h].iter_mut().zip(&q) {
            *dst = y * qk;
        }
        for (dst, &xk) in row[h..].iter_mut().zip(x) {
            *dst = y * xk;
        }
        s.row_mut(i).copy_from_slice(&q);
        let mi = mat_op(x).map_err(|_| DataError::NonFinite { row: i, col: 0 })?;
        // G += sum over rows r of [M_i I] of (row r)(row r)'
        for (r, mrow) in mi.rows().enumerate() {
            entries.clear();
            entries.extend_from_slice(mrow);
            entries.push((h + r, 1.0));
            for &(p, vp) in &entries {
                for &(q, vq) in &entries {
                    gram[(p, q)] += vp * vq;
                }
            }
        }
        mats.push(mi);
    }
    Ok(DesignMatrices {
        n,
        ab,
        s,
        y: data.labels.clone(),
        mats,
        gram,
    })
}

/// Current ADMM iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub w_tilde: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
    pub working_set: Vec<usize>,
    pub k: usize,
}

impl SolverState {
    /// All-zero start.
    pub fn zeros(d: &DesignMatrices) -> Self {
        Self {
            w_tilde: vec![0.0; d.half_len()],
            b: vec![0.0; d.n_features()],
            c: 0.0,
            u: vec![0.0; d.n_samples()],
            lambda: vec![0.0; d.n_samples()],
            working_set: Vec::new(),
            k: 0,
        }
    }

    /// `[w; b]`
    pub fn z(&self) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.w_tilde.len() + self.b.len());
        z.extend_from_slice(&self.w_tilde);
        z.extend_from_slice(&self.b);
        z
    }

    pub fn set_z(&mut self, z: &[f64]) {
        let h = self.w_tilde.len();
        self.w_tilde.copy_from_slice(&z[..h]);
        self.b.copy_from_slice(&z[h..]);
    }

    pub fn w_half(&self) -> HalfVector {
        HalfVector::new(self.b.len(), self.w_tilde.clone()).expect("consistent state")
    }
}

/// P-stationarity residuals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.theta1.max(self.theta2).max(self.theta3).max(self.theta4)
    }

    pub fn is_finite(&self) -> bool {
        [self.theta1, self.theta2, self.theta3, self.theta4]
            .iter()
            .all(|t| t.is_finite())
    }
}

/// Work counters for the `[w; b]` step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub direct_solves: usize,
    pub factorizations: usize,
    pub cg_solves: usize,
    pub cg_iterations: usize,
    pub cg_unconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Residuals,
    pub working_set: Vec<usize>,
    pub support_vectors: Vec<usize>,
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub stats: SolveStats,
    /// `max(theta)` after every iteration.
    pub history: Vec<f64>,
}

/// Raw solver output on a design, before it is wrapped into a model.
#[derive(Debug, Clone)]
pub struct Solution {
    pub state: SolverState,
    pub report: FitReport,
}

/// `v = 1 - A w - B b - c y - lambda / sigma`
pub fn compute_v(state: &SolverState, d: &DesignMatrices, cfg: &SolverConfig) -> Vec<f64> {
    let z = state.z();
    d.ab
        .row_iter()
        .zip(&d.y)
        .zip(&state.lambda)
        .map(|((row, &y), &l)| 1.0 - dot(row, &z) - state.c * y - l / cfg.sigma)
        .collect()
}

pub fn update_working_set(v: &[f64], cfg: &SolverConfig) -> Vec<usize> {
    let p = cfg.prox_params();
    v.iter()
        .enumerate()
        .filter(|(_, &vi)| in_working_band(vi, &p))
        .map(|(i, _)| i)
        .collect()
}

pub fn update_u(v: &[f64], working_set: &[usize]) -> Vec<f64> {
    let mut u = v.to_vec();
    for &i in working_set {
        u[i] = 0.0;
    }
    u
}

/// `c = -y'(A w + B b - 1 + u + lambda / sigma) / N`, with the new `w, b, u`.
pub fn update_c(state: &SolverState, d: &DesignMatrices, cfg: &SolverConfig) -> f64 {
    let z = state.z();
    let total: f64 = d
        .ab
        .row_iter()
        .zip(&d.y)
        .zip(state.u.iter().zip(&state.lambda))
        .map(|((row, &y), (&u, &l))| y * (dot(row, &z) - 1.0 + u + l / cfg.sigma))
        .sum();
    -total / d.n_samples() as f64
}

/// Dual ascent on the working set; zero elsewhere.
pub fn update_lambda(
    state: &SolverState,
    d: &DesignMatrices,
    cfg: &SolverConfig,
    working_set: &[usize],
) -> Vec<f64> {
    let z = state.z();
    let step = cfg.eta * cfg.sigma;
    let mut lambda = vec![0.0; d.n_samples()];
    for &i in working_set {
        let r = state.u[i] - 1.0 + dot(d.ab.row(i), &z) + state.c * d.y[i];
        lambda[i] = state.lambda[i] + step * r;
    }
    lambda
}

pub fn residuals(state: &SolverState, d: &DesignMatrices, cfg: &SolverConfig) -> Residuals {
    let t = &state.working_set;
    let z = state.z();

    let mut grad = d.gram.mul_vec(&z);
    for &i in t {
        axpy(state.lambda[i], d.ab.row(i), &mut grad);
    }
    let theta1 = norm(&grad) / (1.0 + norm(&z));

    let y_dot_lambda: f64 = t.iter().map(|&i| d.y[i] * state.lambda[i]).sum();
    let theta2 = y_dot_lambda.abs() / (1.0 + t.len() as f64);

    let feas: Vec<f64> = d
        .ab
        .row_iter()
        .zip(&d.y)
        .zip(&state.u)
        .map(|((row, &y), &u)| u - 1.0 + dot(row, &z) + state.c * y)
        .collect();
    let theta3 = norm(&feas) / (d.n_samples() as f64).sqrt();

    let gamma = 1.0 / cfg.sigma;
    let p = ProxParams::new(gamma, cfg.penalty).expect("validated config");
    let shifted: Vec<f64> = state
        .u
        .iter()
        .zip(&state.lambda)
        .map(|(&u, &l)| u - gamma * l)
        .collect();
    let proxed = prox(&shifted, &p);
    let gap: Vec<f64> = state.u.iter().zip(&proxed).map(|(a, b)| a - b).collect();
    let theta4 = norm(&gap) / (1.0 + norm(&state.u));

    Residuals {
        theta1,
        theta2,
        theta3,
        theta4,
    }
}

/// `1/2 sum_i ||M_i w + b||^2 + C #{i : u_i > 0}` at the feasible slacks
/// `u = 1 - A w - B b - c y`.
pub fn objective(state: &SolverState, d: &DesignMatrices, cfg: &SolverConfig) -> f64 {
    let reg: f64 = d
        .mats
        .iter()
        .map(|mi| {
            let mut r = mi.apply(&state.w_tilde);
            axpy(1.0, &state.b, &mut r);
            dot(&r, &r)
        })
        .sum();
    let z = state.z();
    let violations = d
        .ab
        .row_iter()
        .zip(&d.y)
        .filter(|(row, &y)| 1.0 - dot(row, &z) - state.c * y > 0.0)
        .count();
    0.5 * reg + cfg.penalty * violations as f64
}

fn ridge_for(d: &DesignMatrices, cfg: &SolverConfig) -> f64 {
    cfg.ridge_scale * (1.0 + d.gram.trace() / d.order() as f64)
}

/// The `[w; b]` subproblem, with the Cholesky factor kept while `T` is unchanged.
struct WbSolver<'a> {
    d: &'a DesignMatrices,
    cfg: &'a SolverConfig,
    ridge: f64,
    cached: Option<(Vec<usize>, Cholesky)>,
    stats: SolveStats,
}

impl<'a> WbSolver<'a> {
    fn new(d: &'a DesignMatrices, cfg: &'a SolverConfig) -> Self {
        Self {
            d,
            cfg,
            ridge: ridge_for(d, cfg),
            cached: None,
            stats: SolveStats::default(),
        }
    }

    fn use_direct(&self, t: &[usize]) -> bool {
        match self.cfg.branch {
            BranchPolicy::Auto => self.d.order() <= t.len(),
            BranchPolicy::ForceDirect => true,
            BranchPolicy::ForceCg => false,
        }
    }

    /// Reduced system matrix `G + sigma K_T' K_T` (ridge not included).
    fn reduced_matrix(&self, t: &[usize]) -> Matrix {
        let mut h = self.d.gram.clone();
        for &i in t {
            h.add_outer(self.cfg.sigma, self.d.ab.row(i));
        }
        h
    }

    fn rhs(&self, state: &SolverState, t: &[usize]) -> Vec<f64> {
        let sigma = self.cfg.sigma;
        let mut rhs = vec![0.0; self.d.order()];
        for &i in t {
            let di = -(state.u[i] + state.c * self.d.y[i] - 1.0 + state.lambda[i] / sigma);
            axpy(sigma * di, self.d.ab.row(i), &mut rhs);
        }
        rhs
    }

    fn solve(&mut self, state: &SolverState, t: &[usize]) -> Result<Vec<f64>, LinsolveError> {
        let m = self.d.order();
        if t.is_empty() {
            // zero right-hand side, unique solution
            return Ok(vec![0.0; m]);
        }
        let rhs = self.rhs(state, t);
        if self.use_direct(t) {
            self.stats.direct_solves += 1;
            let reuse = matches!(&self.cached, Some((cached_t, _)) if cached_t.as_slice() == t);
            if !reuse {
                let factor = Cholesky::factor(&self.reduced_matrix(t), self.ridge)?;
                self.stats.factorizations += 1;
                self.cached = Some((t.to_vec(), factor));
            }
            let (_, factor) = self.cached.as_ref().expect("factor cached above");
            Ok(factor.solve(&rhs))
        } else {
            self.stats.cg_solves += 1;
            let (d, sigma, ridge) = (self.d, self.cfg.sigma, self.ridge);
            let apply = |p: &[f64], out: &mut [f64]| {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = dot(d.gram.row(i), p) + ridge * p[i];
                }
                for &i in t {
                    let row = d.ab.row(i);
                    axpy(sigma * dot(row, p), row, out);
                }
            };
            let z0 = state.z();
            let out = conjugate_gradient(
                apply,
                &rhs,
                Some(&z0),
                self.cfg.cg_tol,
                self.cfg.cg_max_iter.unwrap_or(m),
                |_, _| {},
            )?;
            self.stats.cg_iterations += out.iterations;
            if !out.converged {
                self.stats.cg_unconverged += 1;
            }
            Ok(out.solution)
        }
    }
}

/// One-shot `[w; b]` update for a given working set (no factor caching).
///
/// `state.u` must already hold `u^{k+1}`.
pub fn update_wb(
    state: &SolverState,
    d: &DesignMatrices,
    cfg: &SolverConfig,
    working_set: &[usize],
) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    cfg.validate()?;
    let mut solver = WbSolver::new(d, cfg);
    let z = solver
        .solve(state, working_set)
        .map_err(|source| FitError::Solver {
            iteration: state.k,
            source,
        })?;
    let h = d.half_len();
    Ok((z[..h].to_vec(), z[h..].to_vec()))
}

/// `G + sigma K_T' K_T`, exposed for checks.
pub fn reduced_system_matrix(d: &DesignMatrices, cfg: &SolverConfig, working_set: &[usize]) -> Matrix {
    WbSolver::new(d, cfg).reduced_matrix(working_set)
}

/// One full ADMM iteration in place; returns the new residuals.
pub fn step(
    state: &mut SolverState,
    d: &DesignMatrices,
    cfg: &SolverConfig,
) -> Result<Residuals, FitError> {
    let mut solver = WbSolver::new(d, cfg);
    step_with(state, d, cfg, &mut solver)
}

fn step_with(
    state: &mut SolverState,
    d: &DesignMatrices,
    cfg: &SolverConfig,
    solver: &mut WbSolver<'_>,
) -> Result<Residuals, FitError> {
    let v = compute_v(state, d, cfg);
    let t = update_working_set(&v, cfg);
    state.u = update_u(&v, &t);
    let z = solver.solve(state, &t).map_err(|source| FitError::Solver {
        iteration: state.k,
        source,
    })?;
    state.set_z(&z);
    state.c = update_c(state, d, cfg);
    state.lambda = update_lambda(state, d, cfg, &t);
    state.working_set = t;
    state.k += 1;
    Ok(residuals(state, d, cfg))
}

/// Runs the ADMM loop on an already scaled design from the zero start.
pub fn solve(d: &DesignMatrices, cfg: &SolverConfig) -> Result<Solution, FitError> {
    solve_from(d, cfg, SolverState::zeros(d))
}

pub fn solve_from(
    d: &DesignMatrices,
    cfg: &SolverConfig,
    mut state: SolverState,
) -> Result<Solution, FitError> {
    cfg.validate()?;
    let mut solver = WbSolver::new(d, cfg);
    let mut res = residuals(&state, d, cfg);
    let mut history = Vec::new();
    let mut converged = false;
    while state.k < cfg.max_iter {
        res = step_with(&mut state, d, cfg, &mut solver)?;
        history.push(res.max());
        if res.max() < cfg.tol {
            converged = true;
            break;
        }
    }
    let support_vectors = state
        .lambda
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != 0.0)
        .map(|(i, _)| i)
        .collect();
    let report = FitReport {
        iterations: state.k,
        converged,
        residuals: res,
        working_set: state.working_set.clone(),
        support_vectors,
        lambda: state.lambda.clone(),
        objective: objective(&state, d, cfg),
        stats: solver.stats,
        history,
    };
    Ok(Solution { state, report })
}

/// Scales the data to `[-1, 1]`, trains, and returns the model with its report.
///
/// Hitting `max_iter` is not an error: the last iterate is returned with
/// `converged == false`.
pub fn fit(
    data: &Dataset,
    cfg: &SolverConfig,
) -> Result<(QuadraticSurfaceModel, FitReport), FitError> {
    cfg.validate()?;
    let scaler = fit_scaler(&data.features);
    let mut scaled = data.clone();
    scaled.features = apply_scaler(&scaler, &data.features)?;
    let design = build_design(&scaled)?;
    let Solution { state, report } = solve(&design, cfg)?;
    let n = design.n_features();
    let w = unhvec_slice(&state.w_tilde, n).expect("state length matches n");
    let mut model = QuadraticSurfaceModel::new(w, state.b.clone(), state.c, scaler)?;
    model.meta = TrainingMeta {
        penalty: cfg.penalty,
        sigma: cfg.sigma,
        eta: cfg.eta,
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        iterations: report.iterations,
        converged: report.converged,
        max_residual: report.residuals.max(),
        objective: report.objective,
        support_vectors: report.support_vectors.clone(),
        train_samples: data.len(),
        data_hash: data.content_hash(),
    };
    Ok((model, report))
}
