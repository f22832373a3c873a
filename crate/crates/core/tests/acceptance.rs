//! End-to-end acceptance checks. Each test writes one `criterion N: PASS|FAIL|SKIP` line
//! to stderr (uncaptured) and then asserts the same verdict.

#![allow(clippy::needless_range_loop)]

use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qshs::admm::{build_design, fit, solve, BranchPolicy, SolverConfig, SolverState, Solution};
use qshs::data::{
    apply_scaler, fit_scaler, gen_synthetic, inject_noise, load_csv, CsvOptions, Dataset, LabelRule, SyntheticKind,
};
use qshs::eval::{grid_search, model_accuracy, nemenyi_cd, CvPlan, GridSpec};
use qshs::prox::{prox_scalar, ProxParams};
use qshs::quadmap::{hvec, mat_op, qvec, unhvec, SymmetricMatrix};

// budgets are wall-clock, so criteria never overlap
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn verdict(id: u32, pass: bool, detail: &str) {
    report(&format!("criterion {id}: {} ({detail})", if pass { "PASS" } else { "FAIL" }));
}

const TAU: f64 = 1e-3;
const SEED: u64 = 7;

fn synthetic(kind: SyntheticKind) -> Dataset {
    gen_synthetic(kind, 300, 0.1, SEED).expect("synthetic data")
}

/// The data as the solver sees it, scaled to [-1, 1].
fn scaled(ds: &Dataset) -> Dataset {
    let scaler = fit_scaler(&ds.features);
    let mut out = ds.clone();
    out.features = apply_scaler(&scaler, &ds.features).expect("scaling");
    out
}

fn default_c_grid() -> Vec<f64> {
    (-7..=7).map(|e| 10f64.powi(e)).collect()
}

fn sqrt2_pow(k: i32) -> f64 {
    2f64.sqrt().powi(k)
}

// ---------------------------------------------------------------- criterion 1

fn naive_wx(w: &[Vec<f64>], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let value = w.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
    let scale = w.iter().map(|r| r.iter().zip(x).map(|(a, b)| (a * b).abs()).sum()).collect();
    (value, scale)
}

#[test]
fn criterion_1_operator_identities() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut roundtrip_ok = true;
    for pair in 0..200 {
        let n = 1 + pair % 6;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-2.0..2.0);
                dense[i][j] = v;
                dense[j][i] = v;
            }
        }
        let w = SymmetricMatrix::from_rows(&dense).unwrap();
        let h = hvec(&w);
        roundtrip_ok &= unhvec(&h, n).unwrap() == w;

        let lhs = mat_op(&x).unwrap().apply(h.values());
        let (rhs, scale) = naive_wx(&dense, &x);
        for k in 0..n {
            worst = worst.max((lhs[k] - rhs[k]).abs() / scale[k].max(f64::MIN_POSITIVE));
        }

        let q = qvec(&x).unwrap().dot(&h);
        let (half_form, half_scale) = {
            let mut v = 0.0;
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    v += 0.5 * x[i] * dense[i][j] * x[j];
                    s += (0.5 * x[i] * dense[i][j] * x[j]).abs();
                }
            }
            (v, s)
        };
        worst = worst.max((q - half_form).abs() / half_scale.max(f64::MIN_POSITIVE));
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && roundtrip_ok && elapsed < Duration::from_secs(1);
    verdict(
        1,
        pass,
        &format!("200 pairs, worst relative error {worst:.2e}, roundtrip exact: {roundtrip_ok}, {elapsed:.2?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_prox_matches_grid_minimization() {
    let _g = serial();
    let start = Instant::now();
    const STEP: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut ties = 0usize;
    let mut mismatches = 0usize;
    for _ in 0..10_000 {
        let v: f64 = rng.gen_range(-3.0..3.0);
        let gamma: f64 = rng.gen_range(0.05..5.0);
        let c: f64 = rng.gen_range(0.01..3.0);
        let objective = |u: f64| c * f64::from(u8::from(u > 0.0)) + (u - v) * (u - v) / (2.0 * gamma);

        let lo = ((v.min(0.0) - 1.0) / STEP).floor() as i64;
        let hi = ((v.max(0.0) + 1.0) / STEP).ceil() as i64;
        let mut best = (f64::INFINITY, 0.0);
        for k in lo..=hi {
            let u = k as f64 * STEP;
            let f = objective(u);
            if f < best.0 {
                best = (f, u);
            }
        }
        let p = prox_scalar(v, &ProxParams::new(gamma, c).unwrap());
        let gap = (p - best.1).abs();
        if gap <= STEP {
            worst = worst.max(gap);
        } else if (objective(p) - best.0).abs() <= STEP * STEP / (2.0 * gamma) {
            // both branches optimal up to the grid's own discretization error
            ties += 1;
        } else {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(30);
    verdict(
        2,
        pass,
        &format!("10000 triples, {mismatches} mismatches, {ties} near-ties, worst gap {worst:.1e}, {elapsed:.2?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criteria 3 and 4

/// P-stationarity residuals recomputed from the decision function, without the design matrices.
fn oracle_residuals(state: &SolverState, data: &Dataset, cfg: &SolverConfig) -> [f64; 4] {
    let n = data.n_features();
    let w = qshs::quadmap::unhvec_slice(&state.w_tilde, n).unwrap();
    let w_dense: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| w.get(i, j)).collect()).collect();
    let half = state.w_tilde.len();
    let mut grad = vec![0.0; half + n];
    // d/d[hvec W; b] of 0.5 * sum_i |W x_i + b|^2
    for x in data.features.row_iter() {
        let (wx, _) = naive_wx(&w_dense, x);
        let r: Vec<f64> = wx.iter().zip(&state.b).map(|(a, b)| a + b).collect();
        let mut idx = 0;
        for j in 0..n {
            for k in j..n {
                grad[idx] += if j == k { r[j] * x[j] } else { r[j] * x[k] + r[k] * x[j] };
                idx += 1;
            }
        }
        for j in 0..n {
            grad[half + j] += r[j];
        }
    }
    // plus sum_T lambda_i * d/dz (y_i f(x_i))
    for &i in &state.working_set {
        let x = data.sample(i);
        let scale = state.lambda[i] * data.labels[i];
        let mut idx = 0;
        for j in 0..n {
            for k in j..n {
                grad[idx] += scale * if j == k { 0.5 * x[j] * x[j] } else { x[j] * x[k] };
                idx += 1;
            }
        }
        for j in 0..n {
            grad[half + j] += scale * x[j];
        }
    }
    let l2 = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let z_norm = (state.w_tilde.iter().chain(&state.b).map(|a| a * a).sum::<f64>()).sqrt();
    let theta1 = l2(&grad) / (1.0 + z_norm);

    let y_lambda: f64 = state.working_set.iter().map(|&i| data.labels[i] * state.lambda[i]).sum();
    let theta2 = y_lambda.abs() / (1.0 + state.working_set.len() as f64);

    let feas: Vec<f64> = (0..data.len())
        .map(|i| {
            let x = data.sample(i);
            let f = 0.5 * w.quadratic_form(x) + state.b.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + state.c;
            state.u[i] - 1.0 + data.labels[i] * f
        })
        .collect();
    let theta3 = l2(&feas) / (data.len() as f64).sqrt();

    let gamma = 1.0 / cfg.sigma;
    let band = (2.0 * gamma * cfg.penalty).sqrt();
    let gap: Vec<f64> = state
        .u
        .iter()
        .zip(&state.lambda)
        .map(|(&u, &l)| {
            let s = u - gamma * l;
            let p = if s > 0.0 && s <= band { 0.0 } else { s };
            u - p
        })
        .collect();
    let theta4 = l2(&gap) / (1.0 + l2(&state.u));
    [theta1, theta2, theta3, theta4]
}

fn is_trivial(state: &SolverState) -> bool {
    state.w_tilde.iter().chain(&state.b).all(|v| *v == 0.0)
}

struct StationaryFit {
    kind: SyntheticKind,
    data: Dataset,
    cfg: SolverConfig,
    solution: Solution,
}

/// Cells tried in order: the default cell, then C-major over C = 1..1e7 and sigma = sqrt(2)^-7..sqrt(2)^22.
fn stationarity_cells() -> Vec<(f64, f64)> {
    let mut cells = vec![(1.0, 1.0)];
    for e in 0..=7 {
        for k in -7..=22 {
            cells.push((10f64.powi(e), sqrt2_pow(k)));
        }
    }
    cells
}

fn search_stationary(kind: SyntheticKind) -> (Option<StationaryFit>, usize, usize, Duration) {
    let data = scaled(&synthetic(kind));
    let design = build_design(&data).unwrap();
    let start = Instant::now();
    let mut trivial = 0;
    let cells = stationarity_cells();
    for (tried, &(penalty, sigma)) in cells.iter().enumerate() {
        let cfg = SolverConfig::with_params(penalty, sigma);
        let solution = solve(&design, &cfg).unwrap();
        if !solution.report.converged {
            continue;
        }
        if is_trivial(&solution.state) {
            trivial += 1;
            continue;
        }
        return (
            Some(StationaryFit {
                kind,
                data,
                cfg,
                solution,
            }),
            tried + 1,
            trivial,
            start.elapsed(),
        );
    }
    (None, cells.len(), trivial, start.elapsed())
}

#[test]
fn criterion_3_solver_stationarity() {
    let _g = serial();
    let mut all = true;
    for kind in SyntheticKind::ALL {
        let (found, tried, trivial, elapsed) = search_stationary(kind);
        let line = match &found {
            Some(fit) => {
                let r = fit.solution.report.residuals;
                let ours = [r.theta1, r.theta2, r.theta3, r.theta4];
                let oracle = oracle_residuals(&fit.solution.state, &fit.data, &fit.cfg);
                let agree = ours
                    .iter()
                    .zip(&oracle)
                    .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
                    .fold(0.0, f64::max);
                let ok = r.max() <= TAU
                    && fit.solution.report.iterations <= 1000
                    && agree <= 1e-12
                    && elapsed < Duration::from_secs(10);
                all &= ok;
                format!(
                    "  {kind}: {} at C={:e} sigma={:.4} after {} iterations, max theta {:.2e}, oracle agreement {agree:.1e}, {elapsed:.2?}",
                    if ok { "PASS" } else { "FAIL" },
                    fit.cfg.penalty,
                    fit.cfg.sigma,
                    fit.solution.report.iterations,
                    r.max()
                )
            }
            None => {
                all = false;
                format!(
                    "  {kind}: FAIL, no cell of {tried} reaches a non-trivial stationary point within 1000 iterations ({trivial} cells stop at W=0, b=0), {elapsed:.2?}"
                )
            }
        };
        report(&line);
    }
    verdict(3, all, "per-kind results above");
    assert!(all, "solver did not reach a non-trivial stationary point on every synthetic kind");
}

fn sv_geometry_violations(fit: &StationaryFit) -> (usize, usize) {
    let state = &fit.solution.state;
    let n = fit.data.n_features();
    let w = qshs::quadmap::unhvec_slice(&state.w_tilde, n).unwrap();
    let lower = -(2.0 * fit.cfg.penalty * fit.cfg.sigma).sqrt() - 10.0 * TAU;
    let mut bad = 0;
    let svs = &fit.solution.report.support_vectors;
    for &i in svs {
        let x = fit.data.sample(i);
        let f = 0.5 * w.quadratic_form(x) + state.b.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + state.c;
        let margin_ok = (fit.data.labels[i] * f - 1.0).abs() <= 10.0 * TAU;
        let l = state.lambda[i];
        let lambda_ok = l >= lower && l < 0.0;
        if !(margin_ok && lambda_ok) {
            bad += 1;
        }
    }
    (svs.len(), bad)
}

#[test]
fn criterion_4_support_vector_geometry() {
    let _g = serial();
    let mut checked = Vec::new();
    let mut unconverged = Vec::new();
    let mut all = true;
    for kind in SyntheticKind::ALL {
        match search_stationary(kind).0 {
            Some(fit) => {
                let (count, bad) = sv_geometry_violations(&fit);
                all &= bad == 0 && count > 0;
                checked.push(format!("{}: {bad}/{count} violations", fit.kind));
            }
            None => unconverged.push(kind.to_string()),
        }
    }
    // the circle reaches a stationary point with a longer budget; checked as extra evidence
    let data = scaled(&synthetic(SyntheticKind::Circle));
    let mut cfg = SolverConfig::with_params(1e7, 128.0);
    cfg.max_iter = 5000;
    let solution = solve(&build_design(&data).unwrap(), &cfg).unwrap();
    if solution.report.converged {
        let fit = StationaryFit {
            kind: SyntheticKind::Circle,
            data,
            cfg,
            solution,
        };
        let (count, bad) = sv_geometry_violations(&fit);
        all &= bad == 0 && count > 0;
        checked.push(format!("circle (K=5000): {bad}/{count} violations"));
    }
    let detail = format!(
        "{}; no converged fit within K=1000 for: {}",
        checked.join(", "),
        if unconverged.is_empty() { "none".into() } else { unconverged.join(", ") }
    );
    verdict(4, all, &detail);
    assert!(all);
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_separable_training_accuracy() {
    let _g = serial();
    let start = Instant::now();
    let mut all = true;
    let mut parts = Vec::new();
    for kind in SyntheticKind::ALL {
        let ds = synthetic(kind);
        let mut best = (-1.0, 0.0, 0.0);
        'search: for &c in &default_c_grid() {
            for k in -7..=7 {
                let sigma = sqrt2_pow(k);
                let (model, _) = fit(&ds, &SolverConfig::with_params(c, sigma)).unwrap();
                let acc = model_accuracy(&model, &ds).unwrap();
                if acc > best.0 {
                    best = (acc, c, sigma);
                }
                if acc == 1.0 {
                    break 'search;
                }
            }
        }
        all &= best.0 == 1.0;
        parts.push(format!("{kind} ACC={} at C={:e} sigma={:.4}", best.0, best.1, best.2));
    }
    verdict(5, all, &format!("{}; {:.2?}", parts.join(", "), start.elapsed()));
    assert!(all);
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_robust_to_flips_and_outliers() {
    let _g = serial();
    let start = Instant::now();
    let noisy = inject_noise(&synthetic(SyntheticKind::Circle), 2, 2, 11).unwrap();
    let plan = CvPlan::new(10, 1, 3).unwrap();
    let outcome = grid_search(&noisy, &GridSpec::default(), &plan, &SolverConfig::default()).unwrap();
    let best = outcome.best();
    let (model, _) = fit(&noisy, &SolverConfig::with_params(best.penalty, best.sigma)).unwrap();
    let clean = noisy.subset(&noisy.clean_indices());
    let acc = model_accuracy(&model, &clean).unwrap();
    let elapsed = start.elapsed();
    let pass = acc >= 0.98 && elapsed < Duration::from_secs(120);
    verdict(
        6,
        pass,
        &format!(
            "selected C={:e} sigma={:.4} (CV mACC {:.4}), clean-point ACC {acc:.4} on {} points, {elapsed:.2?}",
            best.penalty,
            best.sigma,
            best.macc,
            clean.len()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 7

fn uci_file(name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os("QSHS_UCI_DIR")?;
    let path = PathBuf::from(dir).join(name);
    path.exists().then_some(path)
}

#[test]
fn criterion_7_benchmark_reproduction() {
    let _g = serial();
    let (Some(heart), Some(banknote)) = (uci_file("heart_c.csv"), uci_file("banknote.csv")) else {
        report("criterion 7: SKIP (set QSHS_UCI_DIR to a directory with heart_c.csv and banknote.csv)");
        return;
    };
    let plan = CvPlan::new(10, 10, 0).unwrap();
    let run = |path: &PathBuf, rule: LabelRule| {
        let opts = CsvOptions {
            label_rule: rule,
            ..CsvOptions::default()
        };
        let ds = load_csv(path, &opts).unwrap();
        grid_search(&ds, &GridSpec::default(), &plan, &SolverConfig::default())
            .unwrap()
            .best()
            .clone()
    };
    let h = run(&heart, LabelRule::Negative("0".into()));
    let b = run(&banknote, LabelRule::Auto);
    let pass = h.macc >= 0.99 && (b.macc - 0.9929).abs() <= 0.02;
    verdict(
        7,
        pass,
        &format!(
            "heart-c mACC {:.4}+-{:.4} mNSV {:.1} cpu {:.1}s; banknote mACC {:.4}+-{:.4} mNSV {:.1} cpu {:.1}s",
            h.macc, h.std_acc, h.mnsv, h.cpu_seconds, b.macc, b.std_acc, b.mnsv, b.cpu_seconds
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_nemenyi_critical_difference() {
    let _g = serial();
    let cases = [(3, 14, 2.3440, 0.8859), (16, 12, 3.4260, 6.6589), (17, 12, 3.4580, 7.1288)];
    let mut all = true;
    let mut parts = Vec::new();
    for (l, h, q, expected) in cases {
        let cd = nemenyi_cd(l, h, q).unwrap();
        all &= (cd - expected).abs() <= 1e-3;
        parts.push(format!("l={l} h={h}: {cd:.4} vs {expected}"));
    }
    verdict(8, all, &parts.join(", "));
    assert!(all);
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_9_direct_and_cg_paths_agree() {
    let _g = serial();
    let start = Instant::now();
    let data = scaled(&synthetic(SyntheticKind::Parabola));
    let design = build_design(&data).unwrap();
    let run = |branch| {
        let mut cfg = SolverConfig::with_params(1e6, sqrt2_pow(19));
        cfg.branch = branch;
        solve(&design, &cfg).unwrap()
    };
    let auto = run(BranchPolicy::Auto);
    let direct = run(BranchPolicy::ForceDirect);
    let cg = run(BranchPolicy::ForceCg);
    let diff = direct
        .state
        .w_tilde
        .iter()
        .zip(&cg.state.w_tilde)
        .chain(direct.state.b.iter().zip(&cg.state.b))
        .chain(std::iter::once((&direct.state.c, &cg.state.c)))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let direct_taken = auto.report.stats.direct_solves > 0;
    let pass = direct_taken && cg.report.stats.direct_solves == 0 && diff <= 1e-5 && elapsed < Duration::from_secs(10);
    verdict(
        9,
        pass,
        &format!(
            "parabola, auto path used {} direct solves, max-norm gap {diff:.2e} over {} / {} iterations, {elapsed:.2?}",
            auto.report.stats.direct_solves, direct.report.iterations, cg.report.iterations
        ),
    );
    assert!(pass);
}
