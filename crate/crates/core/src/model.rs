//! The learned classifier `f(x) = x'Wx/2 + b'x + c`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, FeatureScaler};
use crate::matrix::dot;
use crate::quadmap::{hvec, qvec_unchecked, unhvec_slice, HalfVector, SymmetricMatrix};

pub const MODEL_FORMAT: &str = "qshs-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: model has {expected} features, input has {found}")]
    Dimension { expected: usize, found: usize },
    #[error("malformed model file: {0}")]
    Parse(String),
    #[error("unsupported model format {format:?} version {version}")]
    Version { format: String, version: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<DataError> for ModelError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Dimension { expected, found } => ModelError::Dimension { expected, found },
            other => ModelError::Parse(other.to_string()),
        }
    }
}

/// Summary of the fit that produced a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub penalty: f64,
    pub sigma: f64,
    pub eta: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_residual: f64,
    pub objective: f64,
    pub support_vectors: Vec<usize>,
    pub train_samples: usize,
    pub data_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSurfaceModel {
    w: SymmetricMatrix,
    b: Vec<f64>,
    c: f64,
    scaler: FeatureScaler,
    pub meta: TrainingMeta,
}

/// Per-feature contribution `|w_ii| + |b_i|`, plus pairwise `|w_ij|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureReport {
    /// `(feature, score)`, best first, ties by index.
    pub ranking: Vec<(usize, f64)>,
    /// `interactions[i][j] = |w_ij|` for `i != j`, zero on the diagonal.
    pub interactions: Vec<Vec<f64>>,
}

impl QuadraticSurfaceModel {
    pub fn new(
        w: SymmetricMatrix,
        b: Vec<f64>,
        c: f64,
        scaler: FeatureScaler,
    ) -> Result<Self, ModelError> {
        let n = w.dim();
        for found in [b.len(), scaler.dim()] {
            if found != n {
                return Err(ModelError::Dimension { expected: n, found });
            }
        }
        Ok(Self {
            w,
            b,
            c,
            scaler,
            meta: TrainingMeta::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    pub fn w(&self) -> &SymmetricMatrix {
        &self.w
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn scaler(&self) -> &FeatureScaler {
        &self.scaler
    }

    fn check(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.dim() {
            return Err(ModelError::Dimension {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `f(x)` for an already scaled `x`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check(x)?;
        Ok(0.5 * self.w.quadratic_form(x) + dot(&self.b, x) + self.c)
    }

    /// `f(x)` through the vectorized form `qvec(x) . hvec(W) + b'x + c`.
    pub fn decision_value_vectorized(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check(x)?;
        Ok(dot(&qvec_unchecked(x), hvec(&self.w).values()) + dot(&self.b, x) + self.c)
    }

    /// `f` evaluated on a raw (unscaled) sample.
    pub fn decision_value_raw(&self, x_raw: &[f64]) -> Result<f64, ModelError> {
        let x = self.scaler.apply_row(x_raw)?;
        self.decision_value(&x)
    }

    /// Label of a raw sample; `f(x) == 0` goes to `+1`.
    pub fn predict(&self, x_raw: &[f64]) -> Result<f64, ModelError> {
        Ok(sign(self.decision_value_raw(x_raw)?))
    }

    pub fn feature_report(&self) -> FeatureReport {
        let n = self.dim();
        let mut ranking: Vec<(usize, f64)> = (0..n)
            .map(|i| (i, self.w.get(i, i).abs() + self.b[i].abs()))
            .collect();
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let interactions = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { self.w.get(i, j).abs() })
                    .collect()
            })
            .collect();
        FeatureReport {
            ranking,
            interactions,
        }
    }

    pub fn save<W: Write>(&self, sink: W) -> Result<(), ModelError> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            n: self.dim(),
            hvec_w: hvec(&self.w).into_values(),
            b: self.b.clone(),
            c: self.c,
            scaler_min: self.scaler.min.clone(),
            scaler_max: self.scaler.max.clone(),
            training_meta: self.meta.clone(),
        };
        serde_json::to_writer_pretty(sink, &file).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn load<R: Read>(source: R) -> Result<Self, ModelError> {
        let file: ModelFile =
            serde_json::from_reader(source).map_err(|e| ModelError::Parse(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ModelError::Version {
                format: file.format,
                version: file.version,
            });
        }
        let w = unhvec_slice(&file.hvec_w, file.n).map_err(|_| ModelError::Dimension {
            expected: crate::quadmap::half_len(file.n),
            found: file.hvec_w.len(),
        })?;
        if file.scaler_min.len() != file.scaler_max.len() {
            return Err(ModelError::Dimension {
                expected: file.scaler_min.len(),
                found: file.scaler_max.len(),
            });
        }
        let scaler = FeatureScaler {
            min: file.scaler_min,
            max: file.scaler_max,
        };
        let mut model = Self::new(w, file.b, file.c, scaler)?;
        model.meta = file.training_meta;
        Ok(model)
    }

    pub fn half_vector(&self) -> HalfVector {
        hvec(&self.w)
    }
}

#[inline]
pub fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    n: usize,
    hvec_w: Vec<f64>,
    b: Vec<f64>,
    c: f64,
    scaler_min: Vec<f64>,
    scaler_max: Vec<f64>,
    #[serde(default)]
    training_meta: TrainingMeta,
}
