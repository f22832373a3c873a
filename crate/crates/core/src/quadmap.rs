//! Vectorization operators for quadratic surfaces.
//!
//! A symmetric `n x n` matrix `W` is stored as its upper triangle in
//! row-major order (`hvec`). Two companion maps share that ordering:
//!
//! * `mat_op(x)` is the `n x n(n+1)/2` matrix with `mat_op(x) * hvec(W) == W x`;
//! * `qvec(x)` is the feature vector with `qvec(x) . hvec(W) == x'Wx / 2`.
//!
//! Every index computation goes through [`upper_index`], so the three
//! operators cannot drift apart.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadMapError {
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("input vector is empty")]
    Empty,
    #[error("non-finite entry at position {0}")]
    NonFinite(usize),
}

/// Length of the half-vectorization of an `n x n` symmetric matrix.
#[inline]
pub const fn half_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of `w[i][j]` (`i <= j`) inside `hvec(W)`.
#[inline]
pub const fn upper_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * (2 * n + 1 - i) / 2 + (j - i)
}

/// Position of `w[i][j]` for any `i, j`, using symmetry.
#[inline]
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    if i <= j {
        upper_index(n, i, j)
    } else {
        upper_index(n, j, i)
    }
}

/// Dense symmetric matrix, stored in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.entries[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, &d) in diag.iter().enumerate() {
            m.entries[i * n + i] = d;
        }
        m
    }

    /// Builds from row-major storage, rejecting any asymmetry (exact comparison).
    pub fn from_row_major(n: usize, entries: Vec<f64>) -> Result<Self, QuadMapError> {
        if entries.len() != n * n {
            return Err(QuadMapError::LengthMismatch {
                expected: n * n,
                actual: entries.len(),
            });
        }
        if let Some(p) = entries.iter().position(|v| !v.is_finite()) {
            return Err(QuadMapError::NonFinite(p));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(QuadMapError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, QuadMapError> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(QuadMapError::LengthMismatch {
                    expected: n,
                    actual: r.len(),
                });
            }
            entries.extend_from_slice(r);
        }
        Self::from_row_major(n, entries)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.entries
    }

    /// `W x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.entries[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(x)
                    .map(|(w, xj)| w * xj)
                    .sum()
            })
            .collect()
    }

    /// `x' W x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }
}

/// Upper triangle of a symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfVector {
    n: usize,
    values: Vec<f64>,
}

impl HalfVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; half_len(n)],
        }
    }

    pub fn new(n: usize, values: Vec<f64>) -> Result<Self, QuadMapError> {
        if values.len() != half_len(n) {
            return Err(QuadMapError::LengthMismatch {
                expected: half_len(n),
                actual: values.len(),
            });
        }
        Ok(Self { n, values })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Quadratic feature map of a sample: `[x1^2/2, x1 x2, ..., xn^2/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadFeature {
    n: usize,
    values: Vec<f64>,
}

impl QuadFeature {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `qvec(x) . hvec(W)`
    pub fn dot(&self, w: &HalfVector) -> f64 {
        self.values.iter().zip(&w.values).map(|(a, b)| a * b).sum()
    }
}

/// Sparse `n x n(n+1)/2` matrix operator of a sample.
///
/// Row `i` holds `n` entries: `x[j]` at column `sym_index(i, j)` for every `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatOperator {
    n: usize,
    // rows[i][j] = (column, value); the j-th entry of row i carries x[j].
    rows: Vec<Vec<(usize, f64)>>,
}

impl MatOperator {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        half_len(self.n)
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, f64)]> {
        self.rows.iter().map(|r| r.as_slice())
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    /// `Mat(x) * w`.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(col, v)| v * w[col]).sum())
            .collect()
    }

    /// `Mat(x)' * r`, accumulated into `out`.
    pub fn apply_transpose_add(&self, r: &[f64], out: &mut [f64]) {
        for (row, &ri) in self.rows.iter().zip(r) {
            for &(col, v) in row {
                out[col] += v * ri;
            }
        }
    }

    /// Dense row-major copy, mainly for checks.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.width()]; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(col, v) in row {
                dense[i][col] += v;
            }
        }
        dense
    }
}

fn check_vector(x: &[f64]) -> Result<(), QuadMapError> {
    if x.is_empty() {
        return Err(QuadMapError::Empty);
    }
    if let Some(p) = x.iter().position(|v| !v.is_finite()) {
        return Err(QuadMapError::NonFinite(p));
    }
    Ok(())
}

pub fn hvec(w: &SymmetricMatrix) -> HalfVector {
    let n = w.n;
    let mut values = Vec::with_capacity(half_len(n));
    for i in 0..n {
        for j in i..n {
            debug_assert_eq!(values.len(), upper_index(n, i, j));
            values.push(w.get(i, j));
        }
    }
    HalfVector { n, values }
}

pub fn unhvec(v: &HalfVector, n: usize) -> Result<SymmetricMatrix, QuadMapError> {
    unhvec_slice(v.values(), n)
}

pub fn unhvec_slice(v: &[f64], n: usize) -> Result<SymmetricMatrix, QuadMapError> {
    if v.len() != half_len(n) {
        return Err(QuadMapError::LengthMismatch {
            expected: half_len(n),
            actual: v.len(),
        });
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let val = v[upper_index(n, i, j)];
            entries[i * n + j] = val;
            entries[j * n + i] = val;
        }
    }
    Ok(SymmetricMatrix { n, entries })
}

pub fn mat_op(x: &[f64]) -> Result<MatOperator, QuadMapError> {
    check_vector(x)?;
    let n = x.len();
    let rows = (0..n)
        .map(|i| (0..n).map(|j| (sym_index(n, i, j), x[j])).collect())
        .collect();
    Ok(MatOperator { n, rows })
}

pub fn qvec(x: &[f64]) -> Result<QuadFeature, QuadMapError> {
    check_vector(x)?;
    Ok(QuadFeature {
        n: x.len(),
        values: qvec_unchecked(x),
    })
}

pub(crate) fn qvec_unchecked(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut values = Vec::with_capacity(half_len(n));
    for i in 0..n {
        for j in i..n {
            debug_assert_eq!(values.len(), upper_index(n, i, j));
            values.push(if i == j { 0.5 * x[i] * x[i] } else { x[i] * x[j] });
        }
    }
    values
}
