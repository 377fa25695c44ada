//! Linearized belief propagation.
//!
//! `LinBP` iterates `B̂ ← Ê + A·B̂·Ĥ − D·B̂·Ĥ²` and `LinBP*` drops the echo
//! term `D·B̂·Ĥ²`. Both are Jacobi iterations for the linear system
//! `(I − Ĥ⊗A + Ĥ²⊗D)·vec(B̂) = vec(Ê)`, which [`linbp_closed_form`] solves
//! directly for small problems.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beliefs::{BeliefMatrix, BeliefMode};
use crate::coupling::{residual_square, ResidualCoupling};
use crate::dense;
use crate::error::{Error, Result};
use crate::graph::{degree_vector, Adjacency, DegreeVector};

/// Largest `n·k` for which dense solves are attempted by default.
pub const DEFAULT_DENSE_LIMIT: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Linbp,
    LinbpStar,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Linbp => "linbp",
            Variant::LinbpStar => "linbp_star",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linbp" => Ok(Variant::Linbp),
            "linbp_star" | "linbp*" => Ok(Variant::LinbpStar),
            other => Err(Error::InvalidParameter(format!("unknown variant {other:?}"))),
        }
    }
}

/// `X ↦ A·X·R − D·X·S` on `n × k` matrices, never materialized.
///
/// For `LinBP`, `R = Ĥ` and `S = Ĥ²`; for `LinBP*` the second term is absent.
pub struct LinearOperator<'a, A: Adjacency + ?Sized> {
    g: &'a A,
    d: DegreeVector,
    right: DMatrix<f64>,
    echo: Option<DMatrix<f64>>,
}

impl<'a, A: Adjacency + ?Sized + Sync> LinearOperator<'a, A> {
    pub fn new(g: &'a A, r: &ResidualCoupling, variant: Variant) -> Self {
        Self::with_degrees(g, degree_vector(g), r, variant)
    }

    pub fn with_degrees(g: &'a A, d: DegreeVector, r: &ResidualCoupling, variant: Variant) -> Self {
        let echo = match variant {
            Variant::Linbp => Some(residual_square(r)),
            Variant::LinbpStar => None,
        };
        LinearOperator {
            g,
            d,
            right: r.scaled(),
            echo,
        }
    }

    /// Operator with arbitrary right factors, `X ↦ A·X·right − D·X·echo`.
    pub fn from_parts(g: &'a A, d: DegreeVector, right: DMatrix<f64>, echo: Option<DMatrix<f64>>) -> Self {
        LinearOperator { g, d, right, echo }
    }

    pub fn n(&self) -> usize {
        self.g.node_count()
    }

    pub fn k(&self) -> usize {
        self.right.nrows()
    }

    pub fn is_zero(&self) -> bool {
        let zero = |m: &DMatrix<f64>| m.iter().all(|&v| v == 0.0);
        self.g.entry_count() == 0 || (zero(&self.right) && self.echo.as_ref().is_none_or(zero))
    }

    fn apply_row(&self, s: usize, x: &[f64], out: &mut [f64]) {
        let k = self.k();
        let mut agg = vec![0.0; k];
        let (targets, weights) = self.g.row(s);
        for (&t, &w) in targets.iter().zip(weights) {
            for (a, v) in agg.iter_mut().zip(&x[t * k..(t + 1) * k]) {
                *a += w * v;
            }
        }
        let own = &x[s * k..(s + 1) * k];
        let ds = self.d[s];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut v = 0.0;
            for j in 0..k {
                v += agg[j] * self.right[(j, i)];
            }
            if let Some(echo) = &self.echo {
                let mut e = 0.0;
                for j in 0..k {
                    e += own[j] * echo[(j, i)];
                }
                v -= ds * e;
            }
            *slot = v;
        }
    }

    /// Writes `M(x)` into `out`; both are row-major `n × k`.
    pub fn apply_slice(&self, x: &[f64], out: &mut [f64], parallel: bool) {
        let k = self.k();
        if parallel {
            out.par_chunks_mut(k).enumerate().for_each(|(s, row)| self.apply_row(s, x, row));
        } else {
            out.chunks_mut(k).enumerate().for_each(|(s, row)| self.apply_row(s, x, row));
        }
    }

    pub fn apply(&self, x: &BeliefMatrix) -> BeliefMatrix {
        let mut out = BeliefMatrix::zeros(x.n(), x.k());
        self.apply_slice(x.data(), out.data_mut(), false);
        out
    }

    /// `Ê + M(B̂)`.
    pub fn step(&self, e: &BeliefMatrix, b: &BeliefMatrix, parallel: bool) -> Result<BeliefMatrix> {
        self.check(e)?;
        self.check(b)?;
        let mut out = BeliefMatrix::zeros(b.n(), b.k());
        self.apply_slice(b.data(), out.data_mut(), parallel);
        for (o, ev) in out.data_mut().iter_mut().zip(e.data()) {
            *o += ev;
        }
        Ok(out)
    }

    fn check(&self, x: &BeliefMatrix) -> Result<()> {
        if x.n() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "belief rows",
                expected: self.n(),
                found: x.n(),
            });
        }
        if x.k() != self.k() {
            return Err(Error::DimensionMismatch {
                what: "belief classes",
                expected: self.k(),
                found: x.k(),
            });
        }
        Ok(())
    }

    /// The `nk × nk` matrix of the operator in column-stacked coordinates,
    /// `Rᵀ⊗A − Sᵀ⊗D`.
    pub fn materialize(&self) -> DMatrix<f64> {
        let n = self.n();
        let k = self.k();
        let mut m = DMatrix::zeros(n * k, n * k);
        for i in 0..k {
            for j in 0..k {
                let r = self.right[(j, i)];
                if r != 0.0 {
                    for s in 0..n {
                        let (targets, weights) = self.g.row(s);
                        for (&t, &w) in targets.iter().zip(weights) {
                            m[(i * n + s, j * n + t)] += r * w;
                        }
                    }
                }
                if let Some(echo) = &self.echo {
                    let e = echo[(j, i)];
                    for s in 0..n {
                        m[(i * n + s, j * n + s)] -= e * self.d[s];
                    }
                }
            }
        }
        m
    }
}

/// One update `Ê + A·B̂·Ĥ (− D·B̂·Ĥ²)`.
pub fn linbp_step<A: Adjacency + ?Sized + Sync>(
    g: &A,
    d: &DegreeVector,
    r: &ResidualCoupling,
    e: &BeliefMatrix,
    b: &BeliefMatrix,
    variant: Variant,
) -> Result<BeliefMatrix> {
    LinearOperator::with_degrees(g, d.clone(), r, variant).step(e, b, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Measure the per-node change relative to the node's belief magnitude.
    pub relative: bool,
    /// Any belief magnitude above this aborts with a divergence error.
    pub cap: f64,
    pub parallel: bool,
}

impl Default for IterConfig {
    fn default() -> Self {
        IterConfig {
            max_iters: 100,
            tol: 1e-8,
            relative: false,
            cap: 1e100,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinbpOutcome {
    pub beliefs: BeliefMatrix,
    pub converged: bool,
    pub iters: usize,
    /// Change after each iteration.
    pub history: Vec<f64>,
}

/// Iterates an operator from `B̂ = 0` until the change drops below `tol`.
pub fn iterate_operator<A: Adjacency + ?Sized + Sync>(
    op: &LinearOperator<'_, A>,
    e: &BeliefMatrix,
    cfg: &IterConfig,
) -> Result<LinbpOutcome> {
    op.check(e)?;
    let e = e.to_residual();
    if op.is_zero() {
        return Ok(LinbpOutcome {
            beliefs: e.clone(),
            converged: cfg.max_iters > 0,
            iters: cfg.max_iters.min(1),
            history: vec![0.0; cfg.max_iters.min(1)],
        });
    }
    let mut b = BeliefMatrix::zeros(e.n(), e.k());
    let mut history = Vec::new();
    for iter in 1..=cfg.max_iters {
        let next = op.step(&e, &b, cfg.parallel)?;
        let change = if cfg.relative {
            next.max_relative_row_change(&b)
        } else {
            next.max_abs_diff(&b)
        };
        history.push(change);
        let peak = next.max_abs();
        if !(peak <= cfg.cap) {
            return Err(Error::Diverged { iteration: iter, change });
        }
        b = next;
        if change < cfg.tol {
            return Ok(LinbpOutcome {
                beliefs: b,
                converged: true,
                iters: iter,
                history,
            });
        }
    }
    Ok(LinbpOutcome {
        beliefs: b,
        converged: false,
        iters: cfg.max_iters,
        history,
    })
}

pub fn linbp_iterate<A: Adjacency + ?Sized + Sync>(
    g: &A,
    d: &DegreeVector,
    r: &ResidualCoupling,
    e: &BeliefMatrix,
    variant: Variant,
    cfg: &IterConfig,
) -> Result<LinbpOutcome> {
    iterate_operator(&LinearOperator::with_degrees(g, d.clone(), r, variant), e, cfg)
}

fn check_dense(n: usize, k: usize, limit: usize) -> Result<()> {
    let size = n * k;
    if size > limit {
        return Err(Error::SizeLimit { size, limit });
    }
    Ok(())
}

/// Solves `(I − Ĥᵀ⊗A + (Ĥ²)ᵀ⊗D)·vec(B̂) = vec(Ê)` densely.
pub fn linbp_closed_form<A: Adjacency + ?Sized + Sync>(
    g: &A,
    d: &DegreeVector,
    r: &ResidualCoupling,
    e: &BeliefMatrix,
    variant: Variant,
    dense_limit: usize,
) -> Result<BeliefMatrix> {
    let op = LinearOperator::with_degrees(g, d.clone(), r, variant);
    op.check(e)?;
    check_dense(op.n(), op.k(), dense_limit)?;
    let e = e.to_residual();
    let n = op.n();
    let system = DMatrix::identity(n * op.k(), n * op.k()) - op.materialize();
    let x = dense::solve(system, &dense::vec(&e))?;
    dense::devec(&x, n, op.k(), BeliefMode::Residual)
}

/// `Ĥ* = (I − Ĥ²)⁻¹·Ĥ`.
pub fn h_star(r: &ResidualCoupling) -> Result<DMatrix<f64>> {
    let k = r.k();
    let system = DMatrix::identity(k, k) - residual_square(r);
    let h = r.scaled();
    let mut out = DMatrix::zeros(k, k);
    for c in 0..k {
        let col = dense::solve(system.clone(), &DVector::from_column_slice(h.column(c).as_slice()))?;
        out.set_column(c, &col);
    }
    Ok(out)
}

/// Iterates the update before the small-coupling simplification:
/// `B̂ ← Ê + A·B̂·Ĥ* − D·B̂·Ĥ·Ĥ*` with `Ĥ* = (I − Ĥ²)⁻¹·Ĥ`.
pub fn linbp_nonsimplified<A: Adjacency + ?Sized + Sync>(
    g: &A,
    d: &DegreeVector,
    r: &ResidualCoupling,
    e: &BeliefMatrix,
    cfg: &IterConfig,
) -> Result<LinbpOutcome> {
    let hs = h_star(r)?;
    let echo = r.scaled() * &hs;
    let op = LinearOperator::from_parts(g, d.clone(), hs, Some(echo));
    iterate_operator(&op, e, cfg)
}

/// Two-class closed form on the first class column:
/// `b̂ = (I − c₁·A + c₂·D)⁻¹·ê` with `c₁ = 2ĥ/(1−4ĥ²)` and `c₂ = 4ĥ²/(1−4ĥ²)`.
pub fn binary_closed_form<A: Adjacency + ?Sized>(
    g: &A,
    d: &DegreeVector,
    h: f64,
    e_col: &[f64],
    dense_limit: usize,
) -> Result<Vec<f64>> {
    let n = g.node_count();
    if e_col.len() != n {
        return Err(Error::DimensionMismatch {
            what: "explicit belief column",
            expected: n,
            found: e_col.len(),
        });
    }
    if !(h.abs() < 0.5) {
        return Err(Error::InvalidParameter(format!("|h| = {} must be below 1/2", h.abs())));
    }
    check_dense(n, 1, dense_limit)?;
    let denom = 1.0 - 4.0 * h * h;
    let c1 = 2.0 * h / denom;
    let c2 = 4.0 * h * h / denom;
    let mut m = DMatrix::identity(n, n);
    for s in 0..n {
        let (targets, weights) = g.row(s);
        for (&t, &w) in targets.iter().zip(weights) {
            m[(s, t)] -= c1 * w;
        }
        m[(s, s)] += c2 * d[s];
    }
    let x = dense::solve(m, &DVector::from_column_slice(e_col))?;
    Ok(x.as_slice().to_vec())
}
