//! Command-line front end: `gen`, `train`, `predict`, `cv`, `grid`,
//! `boundary` and `replay`.
//!
//! Every command writes a JSON run manifest next to its primary output.
//! Exit codes: 0 success, 1 replay mismatch, 2 usage, 3 data, 4 solver.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::admm::{fit, BranchPolicy, FitError, SolverConfig};
use crate::data::{
    gen_synthetic, inject_noise, load_csv, read_numeric_csv, CsvOptions, DataError, HeaderMode, LabelRule,
    SyntheticKind,
};
use crate::eval::{cross_validate, grid_search, model_accuracy, write_results_csv, write_results_json, CvPlan, EvalError, GridSpec};
use crate::model::{ModelError, QuadraticSurfaceModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error("replay produced different artifacts: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Io { .. } | CliError::Manifest { .. } => EXIT_DATA,
            CliError::Model(_) => EXIT_DATA,
            CliError::Fit(e) => fit_exit_code(e),
            CliError::Eval(e) => eval_exit_code(e),
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }
}

fn fit_exit_code(e: &FitError) -> i32 {
    match e {
        FitError::InvalidConfig(_) => EXIT_USAGE,
        FitError::Data(_) | FitError::SingleClass | FitError::TooFewSamples(_) => EXIT_DATA,
        FitError::Solver { .. } | FitError::Model(_) => EXIT_SOLVER,
    }
}

fn eval_exit_code(e: &EvalError) -> i32 {
    match e {
        EvalError::Fold { source, .. } => fit_exit_code(source),
        EvalError::Cell { source, .. } => eval_exit_code(source),
        EvalError::InvalidPlan(_) | EvalError::InvalidGrid(_) | EvalError::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "qshs", version, about = "Quadratic-surface SVM with the 0-1 loss")]
pub struct Cli {
    /// Where to write the run manifest (default: next to the primary output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic 2-D dataset.
    Gen(GenArgs),
    /// Train a model on a labelled CSV.
    Train(TrainArgs),
    /// Predict labels for a CSV.
    Predict(PredictArgs),
    /// Repeated k-fold cross-validation of one (C, sigma) cell.
    Cv(CvArgs),
    /// Cross-validated grid search over (C, sigma).
    Grid(GridArgs),
    /// Export the decision boundary of a 2-D model as CSV and SVG.
    Boundary(BoundaryArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, value_parser = parse_kind)]
    #[serde(serialize_with = "ser_display")]
    pub kind: SyntheticKind,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub flips: usize,
    #[arg(long, default_value_t = 0)]
    pub outliers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchArg {
    Auto,
    Direct,
    Cg,
}

impl From<BranchArg> for BranchPolicy {
    fn from(b: BranchArg) -> Self {
        match b {
            BranchArg::Auto => BranchPolicy::Auto,
            BranchArg::Direct => BranchPolicy::ForceDirect,
            BranchArg::Cg => BranchPolicy::ForceCg,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Penalty on the 0-1 loss.
    #[arg(long = "C", default_value_t = 1.0)]
    pub penalty: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.618)]
    pub eta: f64,
    #[arg(long = "max-iter", default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = BranchArg::Auto)]
    pub branch: BranchArg,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            penalty: self.penalty,
            sigma: self.sigma,
            eta: self.eta,
            max_iter: self.max_iter,
            tol: self.tol,
            branch: self.branch.into(),
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Label mapping: `auto`, `neg:<value>` or `ovr:<value>` (class vs rest).
    #[arg(long = "label-rule", default_value = "auto", value_parser = parse_label_rule)]
    #[serde(serialize_with = "ser_display")]
    pub label_rule: LabelRule,
}

impl InputArgs {
    fn load(&self) -> Result<crate::data::Dataset, CliError> {
        let opts = CsvOptions {
            label_rule: self.label_rule.clone(),
            ..CsvOptions::default()
        };
        Ok(load_csv(&self.data, &opts)?)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON fit report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with the model's features, optionally followed by a label column.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlanArgs {
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl PlanArgs {
    fn plan(&self) -> Result<CvPlan, CliError> {
        CvPlan::new(self.folds, self.repeats, self.seed).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Results CSV; a JSON twin is written with the `.json` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub plan: PlanArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated C values (default 1e-7..1e7, decades).
    #[arg(long = "grid-C", value_delimiter = ',')]
    pub grid_c: Option<Vec<f64>>,
    /// Comma-separated sigma values (default sqrt(2)^-7..sqrt(2)^7).
    #[arg(long = "grid-sigma", value_delimiter = ',')]
    pub grid_sigma: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundaryArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Samples to overlay; support vectors are marked when this is the training file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Grid cells per axis.
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long = "from")]
    pub from: PathBuf,
    /// Compare regenerated artifacts with the recorded digests.
    #[arg(long)]
    pub check: bool,
}

fn parse_kind(s: &str) -> Result<SyntheticKind, String> {
    s.parse().map_err(|e: DataError| e.to_string())
}

fn parse_label_rule(s: &str) -> Result<LabelRule, String> {
    s.parse()
}

fn ser_display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    /// False when the file embeds timings.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name; replay re-parses them.
    pub argv: Vec<String>,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<Artifact>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| io_err(path, source))?;
        serde_json::from_str(&text).map_err(|e| CliError::Manifest {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|source| io_err(path, source))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| io_err(dir, source))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|source| io_err(path, source))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|source| io_err(path, source))
}

fn default_manifest_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// What a command produced, before the manifest is written.
struct Outcome {
    primary: PathBuf,
    inputs: Vec<PathBuf>,
    artifacts: Vec<(PathBuf, bool)>,
    seed: Option<u64>,
    params: serde_json::Value,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    let tail: Vec<String> = argv.iter().skip(1).map(|s| s.to_string_lossy().into_owned()).collect();
    match execute(cli, tail) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Caps the global worker pool at `QSHS_THREADS` when set.
fn configure_threads() {
    if let Some(n) = std::env::var("QSHS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // a pool may already exist when run() is called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    let started = now_unix();
    let (name, outcome) = match cli.command {
        Command::Gen(a) => ("gen", cmd_gen(&a)?),
        Command::Train(a) => ("train", cmd_train(&a)?),
        Command::Predict(a) => ("predict", cmd_predict(&a)?),
        Command::Cv(a) => ("cv", cmd_cv(&a)?),
        Command::Grid(a) => ("grid", cmd_grid(&a)?),
        Command::Boundary(a) => ("boundary", cmd_boundary(&a)?),
        Command::Replay(a) => return cmd_replay(&a),
    };
    let manifest_path = cli.manifest.unwrap_or_else(|| default_manifest_path(&outcome.primary));
    let manifest = RunManifest {
        tool: "qshs".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        argv,
        params: outcome.params,
        seed: outcome.seed,
        inputs: outcome
            .inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.display().to_string(),
                    sha256: file_sha256(p)?,
                })
            })
            .collect::<Result<_, CliError>>()?,
        artifacts: outcome
            .artifacts
            .iter()
            .map(|(p, deterministic)| {
                Ok(Artifact {
                    path: p.display().to_string(),
                    sha256: file_sha256(p)?,
                    deterministic: *deterministic,
                })
            })
            .collect::<Result<_, CliError>>()?,
        started_unix: started,
        finished_unix: now_unix(),
    };
    let w = create(&manifest_path)?;
    let mut w = w;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| CliError::Manifest {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n").map_err(|source| io_err(&manifest_path, source))?;
    finish(w, &manifest_path)
}

fn params<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

pub fn cmd_gen_dataset(a: &GenArgs) -> Result<crate::data::Dataset, CliError> {
    let base = gen_synthetic(a.kind, a.n, a.margin, a.seed)?;
    if a.flips == 0 && a.outliers == 0 {
        return Ok(base);
    }
    // noise stream is decorrelated from the sampling stream
    Ok(inject_noise(&base, a.flips, a.outliers, a.seed ^ 0xF11B_5EED)?)
}

fn cmd_gen(a: &GenArgs) -> Result<Outcome, CliError> {
    let ds = cmd_gen_dataset(a)?;
    let w = create(&a.out)?;
    ds.write_csv(w)?;
    println!("wrote {} samples to {}", ds.len(), a.out.display());
    Ok(Outcome {
        primary: a.out.clone(),
        inputs: vec![],
        artifacts: vec![(a.out.clone(), true)],
        seed: Some(a.seed),
        params: params(a),
    })
}

fn cmd_train(a: &TrainArgs) -> Result<Outcome, CliError> {
    let ds = a.input.load()?;
    let cfg = a.solver.config();
    cfg.validate()?;
    let (model, report) = fit(&ds, &cfg)?;
    let acc = model_accuracy(&model, &ds)?;
    let r = report.residuals;
    println!("iterations: {}", report.iterations);
    println!("converged: {}", report.converged);
    println!(
        "residuals: theta1={:.3e} theta2={:.3e} theta3={:.3e} theta4={:.3e}",
        r.theta1, r.theta2, r.theta3, r.theta4
    );
    println!("objective: {}", report.objective);
    println!("nsv: {}", report.support_vectors.len());
    println!("train_acc: {acc:.6}");
    let w = create(&a.out)?;
    model.save(w)?;
    let mut artifacts = vec![(a.out.clone(), true)];
    if let Some(path) = &a.report {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| CliError::Manifest {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        finish(w, path)?;
        artifacts.push((path.clone(), true));
    }
    Ok(Outcome {
        primary: a.out.clone(),
        inputs: vec![a.input.data.clone()],
        artifacts,
        seed: None,
        params: params(a),
    })
}

fn load_model(path: &Path) -> Result<QuadraticSurfaceModel, CliError> {
    let f = File::open(path).map_err(|source| io_err(path, source))?;
    Ok(QuadraticSurfaceModel::load(std::io::BufReader::new(f))?)
}

fn cmd_predict(a: &PredictArgs) -> Result<Outcome, CliError> {
    let model = load_model(&a.model)?;
    let f = File::open(&a.data).map_err(|source| io_err(&a.data, source))?;
    let table = read_numeric_csv(f, HeaderMode::Auto)?;
    let n = model.dim();
    let mut w = create(&a.out)?;
    if table.rows() > 0 {
        let labelled = match table.cols() {
            c if c == n => false,
            c if c == n + 1 => true,
            c => {
                return Err(ModelError::Dimension {
                    expected: n,
                    found: c,
                }
                .into())
            }
        };
        writeln!(w, "prediction,decision_value").map_err(|s| io_err(&a.out, s))?;
        let mut hits = 0;
        for row in table.row_iter() {
            let x = &row[..n];
            let f = model.decision_value_raw(x)?;
            let p = crate::model::sign(f);
            if labelled && p == row[n] {
                hits += 1;
            }
            writeln!(w, "{},{}", p as i32, crate::data::format_float(f)).map_err(|s| io_err(&a.out, s))?;
        }
        if labelled {
            println!("acc: {:.6}", hits as f64 / table.rows() as f64);
        }
    }
    finish(w, &a.out)?;
    println!("wrote {} predictions to {}", table.rows(), a.out.display());
    Ok(Outcome {
        primary: a.out.clone(),
        inputs: vec![a.model.clone(), a.data.clone()],
        artifacts: vec![(a.out.clone(), true)],
        seed: None,
        params: params(a),
    })
}

fn json_twin(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_tables(results: &[crate::eval::EvalResult], out: &Path) -> Result<Vec<(PathBuf, bool)>, CliError> {
    let w = create(out)?;
    write_results_csv(results, w)?;
    let json = json_twin(out);
    let w = create(&json)?;
    write_results_json(results, w)?;
    Ok(vec![(out.to_path_buf(), false), (json, false)])
}

fn cmd_cv(a: &CvArgs) -> Result<Outcome, CliError> {
    let ds = a.input.load()?;
    let plan = a.plan.plan()?;
    let cfg = a.solver.config();
    cfg.validate()?;
    let result = cross_validate(&ds, &plan, &cfg)?;
    println!(
        "mACC {:.4} +- {:.4}  mNSV {:.2} +- {:.2}  cpu {:.3}s",
        result.macc, result.std_acc, result.mnsv, result.std_nsv, result.cpu_seconds
    );
    let artifacts = write_tables(std::slice::from_ref(&result), &a.out)?;
    Ok(Outcome {
        primary: a.out.clone(),
        inputs: vec![a.input.data.clone()],
        artifacts,
        seed: Some(a.plan.seed),
        params: params(a),
    })
}

fn cmd_grid(a: &GridArgs) -> Result<Outcome, CliError> {
    let ds = a.input.load()?;
    let plan = a.plan.plan()?;
    let defaults = GridSpec::default();
    let grid = GridSpec::new(
        a.grid_c.clone().unwrap_or(defaults.c_values),
        a.grid_sigma.clone().unwrap_or(defaults.sigma_values),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let cfg = a.solver.config();
    cfg.validate()?;
    let out = grid_search(&ds, &grid, &plan, &cfg)?;
    let best = out.best();
    println!(
        "best C={} sigma={}  mACC {:.4} +- {:.4}  mNSV {:.2}",
        best.penalty, best.sigma, best.macc, best.std_acc, best.mnsv
    );
    let artifacts = write_tables(&out.table, &a.out)?;
    Ok(Outcome {
        primary: a.out.clone(),
        inputs: vec![a.input.data.clone()],
        artifacts,
        seed: Some(a.plan.seed),
        params: params(a),
    })
}

/// Zero level set of `f` on a regular grid, as line segments.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    pub segments: Vec<[(f64, f64); 2]>,
}

/// Regular grid of values `f(x, y)` with `nx` by `ny` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[j][i] = f(xs[i], ys[j])`
    pub values: Vec<Vec<f64>>,
}

impl ValueGrid {
    pub fn sample<F: Fn(f64, f64) -> f64>(x: (f64, f64), y: (f64, f64), cells: usize, f: F) -> Self {
        let cells = cells.max(1);
        let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
            (0..=cells).map(|k| lo + (hi - lo) * k as f64 / cells as f64).collect()
        };
        let xs = axis(x);
        let ys = axis(y);
        let values = ys.iter().map(|&yy| xs.iter().map(|&xx| f(xx, yy)).collect()).collect();
        Self { xs, ys, values }
    }

    /// Largest `|f|` difference between corners of any one cell.
    pub fn cell_variation(&self, i: usize, j: usize) -> f64 {
        let c = [
            self.values[j][i],
            self.values[j][i + 1],
            self.values[j + 1][i],
            self.values[j + 1][i + 1],
        ];
        let hi = c.iter().cloned().fold(f64::MIN, f64::max);
        let lo = c.iter().cloned().fold(f64::MAX, f64::min);
        hi - lo
    }

    /// Marching squares on the zero level, with linear edge interpolation.
    pub fn zero_level(&self) -> LevelSet {
        let mut segments = Vec::new();
        let lerp = |(x0, y0, f0): (f64, f64, f64), (x1, y1, f1): (f64, f64, f64)| {
            let t = if f0 == f1 { 0.5 } else { f0 / (f0 - f1) };
            (x0 + t * (x1 - x0), y0 + t * (y1 - y0))
        };
        for j in 0..self.ys.len().saturating_sub(1) {
            for i in 0..self.xs.len().saturating_sub(1) {
                let p = |ii: usize, jj: usize| (self.xs[ii], self.ys[jj], self.values[jj][ii]);
                // corners counter-clockwise from bottom-left
                let corners = [p(i, j), p(i + 1, j), p(i + 1, j + 1), p(i, j + 1)];
                let mut hits = Vec::with_capacity(4);
                for e in 0..4 {
                    let (a, b) = (corners[e], corners[(e + 1) % 4]);
                    if (a.2 < 0.0) != (b.2 < 0.0) {
                        hits.push(lerp(a, b));
                    }
                }
                match hits.len() {
                    2 => segments.push([hits[0], hits[1]]),
                    4 => {
                        let centre: f64 = corners.iter().map(|c| c.2).sum::<f64>() / 4.0;
                        // saddle: join so that the centre's side stays connected
                        if (centre < 0.0) == (corners[0].2 < 0.0) {
                            segments.push([hits[0], hits[1]]);
                            segments.push([hits[2], hits[3]]);
                        } else {
                            segments.push([hits[0], hits[3]]);
                            segments.push([hits[1], hits[2]]);
                        }
                    }
                    _ => {}
                }
            }
        }
        LevelSet { segments }
    }
}

fn cmd_boundary(a: &BoundaryArgs) -> Result<Outcome, CliError> {
    let model = load_model(&a.model)?;
    if model.dim() != 2 {
        return Err(CliError::Usage(format!(
            "boundary export supports 2-feature models only; this model has {}",
            model.dim()
        )));
    }
    let samples = match &a.data {
        Some(p) => Some(load_csv(p, &CsvOptions::default())?),
        None => None,
    };
    let (lo, hi) = (model.scaler().min.clone(), model.scaler().max.clone());
    let pad = |k: usize| 0.1 * (hi[k] - lo[k]).abs().max(1e-9);
    let xr = (lo[0] - pad(0), hi[0] + pad(0));
    let yr = (lo[1] - pad(1), hi[1] + pad(1));
    let f = |x: f64, y: f64| model.decision_value_raw(&[x, y]).unwrap_or(f64::NAN);
    let grid = ValueGrid::sample(xr, yr, a.resolution, f);
    let level = grid.zero_level();

    let sv_set: Vec<usize> = match &samples {
        Some(ds) if ds.content_hash() == model.meta.data_hash => model.meta.support_vectors.clone(),
        _ => Vec::new(),
    };
    let mut w = create(&a.out)?;
    let mut text = String::from("kind,x1,x2,value,label,sv\n");
    for (j, &y) in grid.ys.iter().enumerate() {
        for (i, &x) in grid.xs.iter().enumerate() {
            let _ = writeln!(text, "grid,{x},{y},{},,", grid.values[j][i]);
        }
    }
    if let Some(ds) = &samples {
        for (k, x) in ds.features.row_iter().enumerate() {
            let is_sv = sv_set.binary_search(&k).is_ok();
            let _ = writeln!(
                text,
                "sample,{},{},{},{},{}",
                x[0],
                x[1],
                f(x[0], x[1]),
                ds.labels[k] as i32,
                u8::from(is_sv)
            );
        }
    }
    for s in &level.segments {
        for &(x, y) in s {
            let _ = writeln!(text, "level,{x},{y},{},,", f(x, y));
        }
    }
    w.write_all(text.as_bytes()).map_err(|s| io_err(&a.out, s))?;
    finish(w, &a.out)?;
    let mut artifacts = vec![(a.out.clone(), true)];
    if let Some(svg_path) = &a.svg {
        let svg = render_svg(xr, yr, &level, samples.as_ref(), &sv_set);
        let mut w = create(svg_path)?;
        w.write_all(svg.as_bytes()).map_err(|s| io_err(svg_path, s))?;
        finish(w, svg_path)?;
        artifacts.push((svg_path.clone(), true));
    }
    println!("{} level-set segments, {} support vectors marked", level.segments.len(), sv_set.len());
    let mut inputs = vec![a.model.clone()];
    inputs.extend(a.data.clone());
    Ok(Outcome {
        primary: a.out.clone(),
        inputs,
        artifacts,
        seed: None,
        params: params(a),
    })
}

fn render_svg(
    xr: (f64, f64),
    yr: (f64, f64),
    level: &LevelSet,
    samples: Option<&crate::data::Dataset>,
    svs: &[usize],
) -> String {
    const SIZE: f64 = 600.0;
    let px = |x: f64| (x - xr.0) / (xr.1 - xr.0) * SIZE;
    let py = |y: f64| SIZE - (y - yr.0) / (yr.1 - yr.0) * SIZE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(ds) = samples {
        for (k, x) in ds.features.row_iter().enumerate() {
            let (cx, cy) = (px(x[0]), py(x[1]));
            if ds.labels[k] > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<path d="M{:.2} {:.2}h6M{:.2} {:.2}v6" stroke="red" stroke-width="1.5"/>"#,
                    cx - 3.0,
                    cy,
                    cx,
                    cy - 3.0
                );
            } else {
                let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="none" stroke="blue"/>"#);
            }
            if svs.binary_search(&k).is_ok() {
                let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="6" fill="none" stroke="green" stroke-width="1.5"/>"#);
            }
        }
    }
    let mut d = String::new();
    for seg in &level.segments {
        let _ = write!(
            d,
            "M{:.2} {:.2}L{:.2} {:.2}",
            px(seg[0].0),
            py(seg[0].1),
            px(seg[1].0),
            py(seg[1].1)
        );
    }
    let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="black" stroke-width="2"/>"#);
    s.push_str("</svg>\n");
    s
}

fn cmd_replay(a: &ReplayArgs) -> Result<(), CliError> {
    let recorded = RunManifest::load(&a.from)?;
    let mut argv = vec!["qshs".to_string()];
    argv.extend(recorded.argv.iter().cloned());
    if !argv.iter().any(|s| s == "--manifest") {
        argv.push("--manifest".into());
        argv.push(a.from.display().to_string());
    }
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Manifest {
        path: a.from.display().to_string(),
        message: e.to_string(),
    })?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::Usage("a replay manifest cannot replay itself".into()));
    }
    execute(cli, recorded.argv.clone())?;
    if !a.check {
        return Ok(());
    }
    let mut diffs = Vec::new();
    for art in recorded.artifacts.iter().filter(|x| x.deterministic) {
        let now = file_sha256(Path::new(&art.path))?;
        if now != art.sha256 {
            diffs.push(art.path.clone());
        }
    }
    if diffs.is_empty() {
        println!("replay matches {} recorded artifacts", recorded.artifacts.iter().filter(|x| x.deterministic).count());
        Ok(())
    } else {
        Err(CliError::Mismatch(diffs.join(", ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marching_squares_circle() {
        let g = ValueGrid::sample((-1.0, 1.0), (-1.0, 1.0), 40, |x, y| x * x + y * y - 0.25);
        let level = g.zero_level();
        assert!(!level.segments.is_empty());
        for s in &level.segments {
            for &(x, y) in s {
                assert!(((x * x + y * y).sqrt() - 0.5).abs() < 0.05);
            }
        }
    }

    #[test]
    fn no_level_for_constant_sign() {
        let g = ValueGrid::sample((0.0, 1.0), (0.0, 1.0), 5, |_, _| 1.0);
        assert!(g.zero_level().segments.is_empty());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["qshs", "gen", "--kind", "spiral", "--out", "x.csv"]), EXIT_USAGE);
        assert_eq!(run(["qshs", "train", "--out", "m.json"]), EXIT_USAGE);
        assert_eq!(run(["qshs"]), EXIT_USAGE);
    }

    #[test]
    fn manifest_path_default() {
        assert_eq!(
            default_manifest_path(Path::new("out/c.csv")),
            PathBuf::from("out/c.csv.manifest.json")
        );
    }
}
