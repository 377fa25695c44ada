//! Dense helpers: Kronecker products, column-stacking vectorization and a
//! guarded LU solve.
//!
//! `vec` stacks the columns of an `n × k` matrix, so entry `(s, i)` lands at
//! index `i·n + s`. With that convention `vec(A·X·Y) = (Yᵀ ⊗ A)·vec(X)`.

use nalgebra::{DMatrix, DVector};

use crate::beliefs::{BeliefMatrix, BeliefMode};
use crate::error::{Error, Result};
use crate::graph::Adjacency;

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn vec(x: &BeliefMatrix) -> DVector<f64> {
    let (n, k) = (x.n(), x.k());
    DVector::from_fn(n * k, |idx, _| x.get(idx % n, idx / n))
}

pub fn devec(v: &DVector<f64>, n: usize, k: usize, mode: BeliefMode) -> Result<BeliefMatrix> {
    if v.len() != n * k {
        return Err(Error::DimensionMismatch {
            what: "vectorized beliefs",
            expected: n * k,
            found: v.len(),
        });
    }
    let mut data = vec![0.0; n * k];
    for i in 0..k {
        for s in 0..n {
            data[s * k + i] = v[i * n + s];
        }
    }
    BeliefMatrix::from_vec(n, k, data, mode)
}

/// Materializes a sparse adjacency as a dense matrix.
pub fn adjacency_matrix<A: Adjacency + ?Sized>(g: &A) -> DMatrix<f64> {
    let n = g.node_count();
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        let (targets, weights) = g.row(s);
        for (&t, &w) in targets.iter().zip(weights) {
            m[(s, t)] = w;
        }
    }
    m
}

/// Solves `m·x = b` by LU, refusing matrices that are numerically singular.
pub fn solve(m: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if m.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let lu = m.lu();
    let pivots = lu.u().diagonal().abs();
    let (lo, hi) = (pivots.min(), pivots.max());
    if !(lo > hi * 1e-13) {
        return Err(Error::Singular);
    }
    lu.solve(b).ok_or(Error::Singular)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec_stacks_columns() {
        let x = BeliefMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]], BeliefMode::Residual).unwrap();
        let v = vec(&x);
        assert_eq!(v.as_slice(), &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
        assert_eq!(devec(&v, 3, 2, BeliefMode::Residual).unwrap(), x);
        assert!(devec(&v, 2, 2, BeliefMode::Residual).is_err());
    }

    #[test]
    fn kron_of_small_blocks() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::identity(2, 2);
        let k = kron(&a, &b);
        assert_eq!(k[(0, 2)], 2.0);
        assert_eq!(k[(3, 1)], 3.0);
        assert_eq!(k[(1, 2)], 0.0);
    }

    #[test]
    fn singular_is_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(solve(m, &DVector::from_element(2, 1.0)), Err(Error::Singular)));
        let x = solve(DMatrix::identity(2, 2) * 2.0, &DVector::from_element(2, 1.0)).unwrap();
        assert_eq!(x.as_slice(), &[0.5, 0.5]);
    }
}
