//! Symmetric positive (semi)definite solvers: dense Cholesky and plain CG.

use thiserror::Error;

use crate::matrix::{axpy, dot, norm, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinsolveError {
    #[error("system is not positive definite: non-positive pivot {value:e} at index {pivot}")]
    Singular { pivot: usize, value: f64 },
    #[error("conjugate gradient broke down at iteration {iteration} (residual {residual})")]
    Breakdown { iteration: usize, residual: f64 },
    #[error("dimension mismatch: matrix order {order}, right-hand side {rhs}")]
    Dimension { order: usize, rhs: usize },
}

/// `(matrix + ridge * I) z = rhs`.
#[derive(Debug, Clone, Copy)]
pub struct SpdSystem<'a> {
    pub matrix: &'a Matrix,
    pub rhs: &'a [f64],
    pub ridge: f64,
}

impl<'a> SpdSystem<'a> {
    pub fn new(matrix: &'a Matrix, rhs: &'a [f64], ridge: f64) -> Self {
        Self { matrix, rhs, ridge }
    }

    pub fn order(&self) -> usize {
        self.matrix.rows()
    }

    fn check(&self) -> Result<(), LinsolveError> {
        if self.matrix.rows() != self.matrix.cols() || self.matrix.rows() != self.rhs.len() {
            return Err(LinsolveError::Dimension {
                order: self.matrix.rows(),
                rhs: self.rhs.len(),
            });
        }
        Ok(())
    }

    /// `(matrix + ridge I) z`
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.matrix.row(i), z) + self.ridge * z[i];
        }
    }

    pub fn residual_norm(&self, z: &[f64]) -> f64 {
        let mut r = vec![0.0; z.len()];
        self.apply(z, &mut r);
        r.iter()
            .zip(self.rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Lower-triangular Cholesky factor `L L' = matrix + ridge I`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    order: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(matrix: &Matrix, ridge: f64) -> Result<Self, LinsolveError> {
        let m = matrix.rows();
        if matrix.cols() != m {
            return Err(LinsolveError::Dimension {
                order: m,
                rhs: matrix.cols(),
            });
        }
        let mut l = vec![0.0; m * m];
        for j in 0..m {
            let diag = matrix[(j, j)] + ridge - dot(&l[j * m..j * m + j], &l[j * m..j * m + j]);
            if !(diag > 0.0 && diag.is_finite()) {
                return Err(LinsolveError::Singular {
                    pivot: j,
                    value: diag,
                });
            }
            let ljj = diag.sqrt();
            l[j * m + j] = ljj;
            for i in (j + 1)..m {
                let s = matrix[(i, j)] - dot(&l[i * m..i * m + j], &l[j * m..j * m + j]);
                l[i * m + j] = s / ljj;
            }
        }
        Ok(Self { order: m, lower: l })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = self.order;
        let l = &self.lower;
        let mut z = rhs.to_vec();
        for i in 0..m {
            let s = dot(&l[i * m..i * m + i], &z[..i]);
            z[i] = (z[i] - s) / l[i * m + i];
        }
        for i in (0..m).rev() {
            let mut s = z[i];
            for k in (i + 1)..m {
                s -= l[k * m + i] * z[k];
            }
            z[i] = s / l[i * m + i];
        }
        z
    }
}

pub fn solve_direct(sys: &SpdSystem<'_>) -> Result<Vec<f64>, LinsolveError> {
    sys.check()?;
    Ok(Cholesky::factor(sys.matrix, sys.ridge)?.solve(sys.rhs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

pub const DEFAULT_CG_TOL: f64 = 1e-10;

/// CG on an explicit system. `max_iter` of `None` means the matrix order.
pub fn solve_cg(
    sys: &SpdSystem<'_>,
    tol: f64,
    max_iter: Option<usize>,
) -> Result<CgOutcome, LinsolveError> {
    sys.check()?;
    let m = sys.order();
    conjugate_gradient(
        |z, out| sys.apply(z, out),
        sys.rhs,
        None,
        tol,
        max_iter.unwrap_or(m),
        |_, _| {},
    )
}

/// Unpreconditioned CG for a symmetric positive semidefinite operator.
///
/// Stops once `||A z - rhs|| <= tol * (1 + ||rhs||)`. The recursively updated
/// residual is used for the test; `observe(k, z_k)` sees every iterate.
pub fn conjugate_gradient<A, O>(
    apply: A,
    rhs: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
    mut observe: O,
) -> Result<CgOutcome, LinsolveError>
where
    A: Fn(&[f64], &mut [f64]),
    O: FnMut(usize, &[f64]),
{
    let m = rhs.len();
    let target = tol * (1.0 + norm(rhs));
    let mut x = x0.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);
    let mut ap = vec![0.0; m];
    let mut r = rhs.to_vec();
    if x0.is_some() {
        apply(&x, &mut ap);
        for (ri, a) in r.iter_mut().zip(&ap) {
            *ri -= a;
        }
    }
    observe(0, &x);
    let mut rs = dot(&r, &r);
    if rs.sqrt() <= target {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            residual: rs.sqrt(),
            converged: true,
        });
    }
    let mut p = r.clone();
    for k in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            if pap == 0.0 && rs == 0.0 {
                break;
            }
            return Err(LinsolveError::Breakdown {
                iteration: k,
                residual: rs.sqrt(),
            });
        }
        let alpha = rs / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rs_new = dot(&r, &r);
        observe(k, &x);
        if !rs_new.is_finite() {
            return Err(LinsolveError::Breakdown {
                iteration: k,
                residual: rs_new.sqrt(),
            });
        }
        if rs_new.sqrt() <= target {
            return Ok(CgOutcome {
                solution: x,
                iterations: k,
                residual: rs_new.sqrt(),
                converged: true,
            });
        }
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs = rs_new;
    }
    Ok(CgOutcome {
        solution: x,
        iterations: max_iter,
        residual: rs.sqrt(),
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> Matrix {
        Matrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]])
    }

    #[test]
    fn direct_identity_and_2x2() {
        let eye = Matrix::identity(3);
        let r = [1.0, -2.0, 3.5];
        assert_eq!(solve_direct(&SpdSystem::new(&eye, &r, 0.0)).unwrap(), r.to_vec());
        let a = two_by_two();
        let z = solve_direct(&SpdSystem::new(&a, &[1.0, 2.0], 0.0)).unwrap();
        assert!((z[0] - 1.0 / 11.0).abs() < 1e-15);
        assert!((z[1] - 7.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn cg_identity_and_2x2() {
        let eye = Matrix::identity(4);
        let r = [1.0, 2.0, 3.0, 4.0];
        let out = solve_cg(&SpdSystem::new(&eye, &r, 0.0), DEFAULT_CG_TOL, None).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert_eq!(out.solution, r.to_vec());

        let a = two_by_two();
        let out = solve_cg(&SpdSystem::new(&a, &[1.0, 2.0], 0.0), DEFAULT_CG_TOL, None).unwrap();
        assert!(out.converged);
        assert!((out.solution[0] - 1.0 / 11.0).abs() < 1e-10);
        assert!((out.solution[1] - 7.0 / 11.0).abs() < 1e-10);
    }

    #[test]
    fn singular_reports_pivot() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let err = solve_direct(&SpdSystem::new(&a, &[1.0, 1.0], 0.0)).unwrap_err();
        assert!(matches!(err, LinsolveError::Singular { pivot: 1, .. }));
        // ridge repairs it
        assert!(solve_direct(&SpdSystem::new(&a, &[1.0, 1.0], 1e-6)).is_ok());
    }

    #[test]
    fn indefinite_cg_breaks_down() {
        let a = Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]);
        let err = solve_cg(&SpdSystem::new(&a, &[1.0, 0.0], 0.0), 1e-10, None).unwrap_err();
        assert!(matches!(err, LinsolveError::Breakdown { .. }));
    }

    #[test]
    fn cg_reports_iteration_cap() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ]);
        let out = solve_cg(&SpdSystem::new(&a, &[1.0, 2.0, 3.0], 0.0), 1e-14, Some(1)).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn dimension_mismatch() {
        let a = two_by_two();
        assert!(matches!(
            solve_direct(&SpdSystem::new(&a, &[1.0], 0.0)),
            Err(LinsolveError::Dimension { .. })
        ));
    }
}
