//! Loopy belief propagation with one shared coupling matrix.
//!
//! Messages are normalized to sum to `k` and kept as residuals `m̂ = m - 1`.
//! Products of factors are evaluated as sums of `log1p` terms relative to
//! their maximum, and `expm1` recovers the small deviations, so runs with a
//! tiny coupling scale keep full relative precision instead of drowning the
//! signal in rounding around `1/k`.
//!
//! An edge of weight `w` uses the coupling `1/k + w·Ĥ`, which reduces to `H`
//! for unit weights.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::beliefs::{BeliefMatrix, BeliefMode};
use crate::coupling::ResidualCoupling;
use crate::error::{Error, Result};
use crate::graph::{hop_distances, Adjacency, Graph, UNREACHABLE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Measure the per-node change relative to the node's belief magnitude.
    pub relative: bool,
    pub parallel: bool,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            max_iters: 100,
            tol: 1e-8,
            relative: false,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BpOutcome {
    pub beliefs: BeliefMatrix,
    pub converged: bool,
    pub iters: usize,
    /// Belief change after each iteration.
    pub history: Vec<f64>,
    /// Final residual messages, `k` values per directed entry in CSR order.
    pub messages: Vec<f64>,
    /// Nodes in components without any explicit belief.
    pub unlabeled: Vec<bool>,
    directed_entries: usize,
}

impl BpOutcome {
    /// Directed-edge message computations performed.
    pub fn edge_visits(&self) -> usize {
        self.directed_entries * self.iters
    }
}

/// Runs BP and returns normalized beliefs.
///
/// `e` may be given in either mode; unlabeled nodes carry the uniform row.
pub fn bp_run(g: &Graph, h: &ResidualCoupling, e: &BeliefMatrix, cfg: &BpConfig) -> Result<BpOutcome> {
    let mut out = bp_run_residual(g, h, e, cfg)?;
    out.beliefs = out.beliefs.to_normalized();
    Ok(out)
}

/// Runs BP and returns residual beliefs.
pub fn bp_run_residual(g: &Graph, h: &ResidualCoupling, e: &BeliefMatrix, cfg: &BpConfig) -> Result<BpOutcome> {
    let n = g.node_count();
    let k = h.k();
    if e.n() != n {
        return Err(Error::DimensionMismatch {
            what: "explicit belief rows",
            expected: n,
            found: e.n(),
        });
    }
    if e.k() != k {
        return Err(Error::DimensionMismatch {
            what: "explicit belief classes",
            expected: k,
            found: e.k(),
        });
    }
    let e_hat = e.to_residual();
    let kf = k as f64;
    for (s, row) in e_hat.rows().enumerate() {
        let sum: f64 = row.iter().sum();
        if sum.abs() > 1e-9 || row.iter().any(|&v| kf * v < -1.0 - 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "explicit beliefs of node {s} are not a probability distribution"
            )));
        }
    }
    let hh = h.scaled();
    let w_max = g.csr().weights().iter().copied().fold(0.0, f64::max);
    if g.entry_count() > 0 && 1.0 / kf + w_max * hh.min() < -1e-12 {
        return Err(Error::Domain(format!(
            "coupling 1/k + w·Ĥ has negative entries (weight {w_max}, min Ĥ {})",
            hh.min()
        )));
    }

    let ctx = Context::new(g, &hh, &e_hat);
    let entries = g.entry_count();
    let mut messages = vec![0.0; entries * k];
    let mut next_messages = vec![0.0; entries * k];
    let mut totals = vec![0.0; n * 2 * k];
    ctx.accumulate(&messages, &mut totals, cfg.parallel);
    let mut beliefs = e_hat.clone();
    let mut next_beliefs = BeliefMatrix::zeros(n, k);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iters = 0;

    while iters < cfg.max_iters {
        iters += 1;
        ctx.update_messages(&totals, &messages, &mut next_messages, cfg.parallel)?;
        std::mem::swap(&mut messages, &mut next_messages);
        ctx.accumulate(&messages, &mut totals, cfg.parallel);
        ctx.beliefs(&totals, next_beliefs.data_mut(), cfg.parallel)?;
        let change = if cfg.relative {
            next_beliefs.max_relative_row_change(&beliefs)
        } else {
            next_beliefs.max_abs_diff(&beliefs)
        };
        std::mem::swap(&mut beliefs, &mut next_beliefs);
        history.push(change);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if cfg.max_iters == 0 {
        converged = false;
    }

    let explicit = e_hat.explicit_nodes();
    let unlabeled = hop_distances(g, &explicit).iter().map(|&d| d == UNREACHABLE).collect();
    Ok(BpOutcome {
        beliefs: BeliefMatrix::from_vec(n, k, beliefs.data().to_vec(), BeliefMode::Residual)?,
        converged,
        iters,
        history,
        messages,
        unlabeled,
        directed_entries: entries,
    })
}

struct Context<'a> {
    g: &'a Graph,
    k: usize,
    hh: &'a DMatrix<f64>,
    /// `log1p(k·ê)` per node and class, `None` where the explicit belief is 0.
    log_e: Vec<Option<f64>>,
    source: Vec<usize>,
    reverse: Vec<usize>,
}

#[inline]
fn log_factor(x: f64) -> Option<f64> {
    (x > -1.0).then(|| x.ln_1p())
}

impl<'a> Context<'a> {
    fn new(g: &'a Graph, hh: &'a DMatrix<f64>, e_hat: &BeliefMatrix) -> Self {
        let k = hh.nrows();
        let kf = k as f64;
        let log_e = e_hat.data().iter().map(|&v| log_factor(kf * v)).collect();
        let csr = g.csr();
        let mut source = Vec::with_capacity(csr.entry_count());
        let mut reverse = Vec::with_capacity(csr.entry_count());
        for (s, t, _) in csr.entries() {
            source.push(s);
            reverse.push(csr.find(t, s).expect("graph is symmetric"));
        }
        Context {
            g,
            k,
            hh,
            log_e,
            source,
            reverse,
        }
    }

    /// Per node: `k` log sums followed by `k` zero-factor counts, over the
    /// explicit belief and all incoming messages.
    fn accumulate(&self, messages: &[f64], totals: &mut [f64], parallel: bool) {
        let k = self.k;
        let fill = |s: usize, out: &mut [f64]| {
            let (logs, zeros) = out.split_at_mut(k);
            for j in 0..k {
                match self.log_e[s * k + j] {
                    Some(l) => {
                        logs[j] = l;
                        zeros[j] = 0.0;
                    }
                    None => {
                        logs[j] = 0.0;
                        zeros[j] = 1.0;
                    }
                }
            }
            let start = self.g.csr().row_offsets()[s];
            for p in start..start + self.g.row(s).0.len() {
                let q = self.reverse[p];
                for j in 0..k {
                    match log_factor(messages[q * k + j]) {
                        Some(l) => logs[j] += l,
                        None => zeros[j] += 1.0,
                    }
                }
            }
        };
        if parallel {
            totals.par_chunks_mut(2 * k).enumerate().for_each(|(s, c)| fill(s, c));
        } else {
            totals.chunks_mut(2 * k).enumerate().for_each(|(s, c)| fill(s, c));
        }
    }

    /// Turns log sums into `u = exp(L - max L) - 1` and returns `mean(u)`.
    fn residual_product(&self, logs: &[f64], zeros: &[f64], u: &mut [f64]) -> Option<f64> {
        let mut top = f64::NEG_INFINITY;
        for j in 0..self.k {
            if zeros[j] == 0.0 {
                top = top.max(logs[j]);
            }
        }
        if top == f64::NEG_INFINITY {
            return None;
        }
        let mut sum = 0.0;
        for j in 0..self.k {
            u[j] = if zeros[j] == 0.0 { (logs[j] - top).exp_m1() } else { -1.0 };
            sum += u[j];
        }
        Some(sum / self.k as f64)
    }

    fn update_messages(&self, totals: &[f64], old: &[f64], new: &mut [f64], parallel: bool) -> Result<()> {
        let k = self.k;
        let weights = self.g.csr().weights();
        let compute = |p: usize, out: &mut [f64]| -> Result<()> {
            let s = self.source[p];
            let q = self.reverse[p];
            let mut logs = totals[s * 2 * k..s * 2 * k + k].to_vec();
            let mut zeros = totals[s * 2 * k + k..(s + 1) * 2 * k].to_vec();
            for j in 0..k {
                match log_factor(old[q * k + j]) {
                    Some(l) => logs[j] -= l,
                    None => zeros[j] -= 1.0,
                }
            }
            let mut u = vec![0.0; k];
            let mean = self.residual_product(&logs, &zeros, &mut u).ok_or_else(|| {
                Error::Domain(format!("message from node {s} vanishes in every class"))
            })?;
            let scale = weights[p] / (1.0 + mean);
            for (i, slot) in out.iter_mut().enumerate() {
                let mut v = 0.0;
                for (j, uj) in u.iter().enumerate() {
                    v += self.hh[(j, i)] * uj;
                }
                *slot = scale * v;
            }
            Ok(())
        };
        if parallel {
            new.par_chunks_mut(k).enumerate().try_for_each(|(p, c)| compute(p, c))
        } else {
            new.chunks_mut(k).enumerate().try_for_each(|(p, c)| compute(p, c))
        }
    }

    fn beliefs(&self, totals: &[f64], out: &mut [f64], parallel: bool) -> Result<()> {
        let k = self.k;
        let kf = k as f64;
        let compute = |s: usize, row: &mut [f64]| -> Result<()> {
            let t = &totals[s * 2 * k..(s + 1) * 2 * k];
            let mut u = vec![0.0; k];
            let mean = self
                .residual_product(&t[..k], &t[k..], &mut u)
                .ok_or_else(|| Error::Domain(format!("belief of node {s} vanishes in every class")))?;
            for (slot, uj) in row.iter_mut().zip(&u) {
                *slot = (uj - mean) / (kf * (1.0 + mean));
            }
            Ok(())
        };
        if parallel {
            out.par_chunks_mut(k).enumerate().try_for_each(|(s, c)| compute(s, c))
        } else {
            out.chunks_mut(k).enumerate().try_for_each(|(s, c)| compute(s, c))
        }
    }
}
