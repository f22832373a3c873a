//! Quadratic-surface SVM with the 0-1 loss, trained by a working-set ADMM.

pub mod admm;
pub mod cli;
pub mod data;
pub mod eval;
pub mod linsolve;
pub mod matrix;
pub mod model;
pub mod prox;
pub mod quadmap;
