//! Top-belief sets, tie-aware precision and recall, and ε sweeps.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beliefs::BeliefMatrix;
use crate::bp::{bp_run_residual, BpConfig};
use crate::coupling::ResidualCoupling;
use crate::error::{Error, Result};
use crate::graph::{hop_distances, Adjacency, DegreeVector, Graph, UNREACHABLE};
use crate::linbp::{linbp_iterate, IterConfig, Variant};
use crate::sbp::{sbp_run, standardize, std_dev};

/// Per node, the classes attaining the maximum belief. An empty set marks a
/// node left out of comparisons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopBeliefAssignment {
    sets: Vec<Vec<usize>>,
}

impl TopBeliefAssignment {
    pub fn from_sets(sets: Vec<Vec<usize>>) -> Self {
        TopBeliefAssignment { sets }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn get(&self, v: usize) -> &[usize] {
        &self.sets[v]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Clears the sets of nodes where `keep` is false.
    pub fn restricted(mut self, keep: &[bool]) -> Self {
        for (set, &k) in self.sets.iter_mut().zip(keep) {
            if !k {
                set.clear();
            }
        }
        self
    }

    /// Number of (node, class) pairs.
    pub fn pair_count(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}

fn top_set(row: &[f64], tie_tol: f64) -> Vec<usize> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = row.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cutoff = max - tie_tol * scale;
    row.iter()
        .enumerate()
        .filter_map(|(i, &v)| (v >= cutoff).then_some(i))
        .collect()
}

/// Classes within `tie_tol` times the row's largest magnitude of its maximum.
pub fn top_beliefs(b: &BeliefMatrix, tie_tol: f64) -> TopBeliefAssignment {
    TopBeliefAssignment {
        sets: b.rows().map(|r| top_set(r, tie_tol)).collect(),
    }
}

/// As [`top_beliefs`], leaving out nodes where `include` is false.
pub fn top_beliefs_masked(b: &BeliefMatrix, tie_tol: f64, include: &[bool]) -> TopBeliefAssignment {
    top_beliefs(b, tie_tol).restricted(include)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QualityReport {
    pub recall: f64,
    pub precision: f64,
    /// Harmonic mean of precision and recall.
    pub accuracy: f64,
    pub gt_pairs: usize,
    pub other_pairs: usize,
    pub common_pairs: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

/// Compares two assignments as sets of (node, class) pairs.
///
/// Both must cover the same nodes and leave out the same nodes.
pub fn precision_recall(gt: &TopBeliefAssignment, other: &TopBeliefAssignment) -> Result<QualityReport> {
    if gt.len() != other.len() {
        return Err(Error::DimensionMismatch {
            what: "assignment nodes",
            expected: gt.len(),
            found: other.len(),
        });
    }
    let mut common = 0;
    for (v, (a, b)) in gt.sets.iter().zip(&other.sets).enumerate() {
        if a.is_empty() != b.is_empty() {
            return Err(Error::InvalidParameter(format!("node {v} is excluded from only one assignment")));
        }
        common += a.iter().filter(|c| b.contains(c)).count();
    }
    let (gt_pairs, other_pairs) = (gt.pair_count(), other.pair_count());
    let recall = ratio(common, gt_pairs);
    let precision = ratio(common, other_pairs);
    let accuracy = if recall + precision > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(QualityReport {
        recall,
        precision,
        accuracy,
        gt_pairs,
        other_pairs,
        common_pairs: common,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bp,
    Linbp,
    LinbpStar,
    Sbp,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bp => "bp",
            Method::Linbp => "linbp",
            Method::LinbpStar => "linbp_star",
            Method::Sbp => "sbp",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bp" => Ok(Method::Bp),
            "linbp" => Ok(Method::Linbp),
            "linbp_star" | "linbp*" => Ok(Method::LinbpStar),
            "sbp" => Ok(Method::Sbp),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

/// `points` values spaced evenly in log scale from `start` to `stop`.
pub fn log_grid(start: f64, stop: f64, points: usize) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop > 0.0 && start.is_finite() && stop.is_finite()) {
        return Err(Error::InvalidParameter(format!("grid bounds must be positive, got {start} and {stop}")));
    }
    match points {
        0 => Err(Error::InvalidParameter("grid needs at least one point".into())),
        1 => Ok(vec![start]),
        _ => {
            let (a, b) = (start.ln(), stop.ln());
            let last = points - 1;
            Ok((0..points)
                .map(|i| match i {
                    0 => start,
                    i if i == last => stop,
                    i => (a + (b - a) * i as f64 / last as f64).exp(),
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    /// Reference for recall and precision; always run.
    pub gt: Method,
    pub tie_tol: f64,
    /// Node whose belief spread is reported per row.
    pub probe: Option<usize>,
    /// Compare unlabeled nodes too.
    pub include_unlabeled: bool,
    pub bp: BpConfig,
    pub linbp: IterConfig,
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            methods: vec![Method::Bp, Method::Linbp, Method::LinbpStar, Method::Sbp],
            gt: Method::Bp,
            tie_tol: 0.0,
            probe: None,
            include_unlabeled: false,
            bp: BpConfig::default(),
            linbp: IterConfig::default(),
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub method: Method,
    pub converged: bool,
    pub iters: usize,
    /// Quality against the reference method; absent unless both converged.
    pub quality: Option<QualityReport>,
    pub max_std_dev_from_sbp: Option<f64>,
    pub sigma_probe: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub method: Method,
    pub convergent_points: usize,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub mean_recall: f64,
    pub min_recall: f64,
    pub mean_precision: f64,
    pub min_precision: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub gt: Method,
    pub rows: Vec<SweepRow>,
}

struct Run {
    beliefs: Option<BeliefMatrix>,
    converged: bool,
    iters: usize,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str =
        "epsilon,method,converged,iters,recall,precision,accuracy,max_std_dev_from_sbp,sigma_probe";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let mut out = String::new();
        let _ = writeln!(out, "{}", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.epsilon,
                r.method,
                r.converged,
                r.iters,
                opt(r.quality.map(|q| q.recall)),
                opt(r.quality.map(|q| q.precision)),
                opt(r.quality.map(|q| q.accuracy)),
                opt(r.max_std_dev_from_sbp),
                opt(r.sigma_probe),
            );
        }
        out
    }

    /// Mean and minimum quality per method over the rows that have one.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut methods: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        methods.sort();
        methods.dedup();
        methods
            .into_iter()
            .filter_map(|m| {
                let q: Vec<QualityReport> = self.rows.iter().filter(|r| r.method == m).filter_map(|r| r.quality).collect();
                if q.is_empty() {
                    return None;
                }
                let n = q.len() as f64;
                let mean = |f: fn(&QualityReport) -> f64| q.iter().map(f).sum::<f64>() / n;
                let min = |f: fn(&QualityReport) -> f64| q.iter().map(f).fold(f64::INFINITY, f64::min);
                Some(Aggregate {
                    method: m,
                    convergent_points: q.len(),
                    mean_accuracy: mean(|x| x.accuracy),
                    min_accuracy: min(|x| x.accuracy),
                    mean_recall: mean(|x| x.recall),
                    min_recall: min(|x| x.recall),
                    mean_precision: mean(|x| x.precision),
                    min_precision: min(|x| x.precision),
                })
            })
            .collect()
    }
}

fn run_method(method: Method, g: &Graph, d: &DegreeVector, r: &ResidualCoupling, e: &BeliefMatrix, cfg: &SweepConfig) -> Result<Run> {
    match method {
        Method::Bp => match bp_run_residual(g, r, e, &cfg.bp) {
            Ok(out) => Ok(Run {
                converged: out.converged,
                iters: out.iters,
                beliefs: Some(out.beliefs),
            }),
            Err(Error::Domain(_)) => Ok(Run {
                beliefs: None,
                converged: false,
                iters: 0,
            }),
            Err(err) => Err(err),
        },
        Method::Linbp | Method::LinbpStar => {
            let variant = if method == Method::Linbp { Variant::Linbp } else { Variant::LinbpStar };
            match linbp_iterate(g, d, r, e, variant, &cfg.linbp) {
                Ok(out) => Ok(Run {
                    converged: out.converged,
                    iters: out.iters,
                    beliefs: Some(out.beliefs),
                }),
                Err(Error::Diverged { iteration, .. }) => Ok(Run {
                    beliefs: None,
                    converged: false,
                    iters: iteration,
                }),
                Err(err) => Err(err),
            }
        }
        Method::Sbp => unreachable!("computed once outside the grid"),
    }
}

fn max_std_dev(b: &BeliefMatrix, sbp: &BeliefMatrix, keep: &[bool]) -> f64 {
    (0..b.n())
        .filter(|&v| keep[v])
        .map(|v| {
            standardize(b.row(v))
                .iter()
                .zip(standardize(sbp.row(v)))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Runs each method at each `ε` and compares it with the reference method.
///
/// SBP does not depend on `ε` and is computed once. Rows come out in grid
/// order, methods in the order given.
pub fn epsilon_sweep(
    g: &Graph,
    d: &DegreeVector,
    r_base: &ResidualCoupling,
    e: &BeliefMatrix,
    grid: &[f64],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if let Some(bad) = grid.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter(format!("grid value {bad} is not positive")));
    }
    if let Some(p) = cfg.probe {
        if p >= g.node_count() {
            return Err(Error::UnknownNode(p.to_string()));
        }
    }
    let e = e.to_residual();
    let keep: Vec<bool> = if cfg.include_unlabeled {
        vec![true; g.node_count()]
    } else {
        hop_distances(g, &e.explicit_nodes()).iter().map(|&l| l != UNREACHABLE).collect()
    };
    let sbp = sbp_run(g, r_base, &e)?;
    let sbp_beliefs = sbp.beliefs().clone();
    let mut methods = cfg.methods.clone();
    methods.dedup();

    let one = |&eps: &f64| -> Result<Vec<SweepRow>> {
        let r = r_base.with_epsilon(eps)?;
        let gt_run = match cfg.gt {
            Method::Sbp => Run {
                beliefs: Some(sbp_beliefs.clone()),
                converged: true,
                iters: 1,
            },
            m => run_method(m, g, d, &r, &e, cfg)?,
        };
        let gt_top = gt_run
            .converged
            .then(|| gt_run.beliefs.as_ref().map(|b| top_beliefs_masked(b, cfg.tie_tol, &keep)))
            .flatten();
        let mut rows = Vec::with_capacity(methods.len());
        for &m in &methods {
            let run = if m == cfg.gt {
                Run {
                    beliefs: gt_run.beliefs.clone(),
                    converged: gt_run.converged,
                    iters: gt_run.iters,
                }
            } else if m == Method::Sbp {
                Run {
                    beliefs: Some(sbp_beliefs.clone()),
                    converged: true,
                    iters: 1,
                }
            } else {
                run_method(m, g, d, &r, &e, cfg)?
            };
            let usable = run.beliefs.as_ref().filter(|_| run.converged);
            let quality = match (&gt_top, usable) {
                (Some(gt), Some(b)) => Some(precision_recall(gt, &top_beliefs_masked(b, cfg.tie_tol, &keep))?),
                _ => None,
            };
            rows.push(SweepRow {
                epsilon: eps,
                method: m,
                converged: run.converged,
                iters: run.iters,
                quality,
                max_std_dev_from_sbp: usable.map(|b| max_std_dev(b, &sbp_beliefs, &keep)),
                sigma_probe: usable.and_then(|b| cfg.probe.map(|p| std_dev(b.row(p)))),
            });
        }
        Ok(rows)
    };
    let per_eps: Vec<Result<Vec<SweepRow>>> = if cfg.parallel {
        grid.par_iter().map(one).collect()
    } else {
        grid.iter().map(one).collect()
    };
    let mut rows = Vec::new();
    for r in per_eps {
        rows.extend(r?);
    }
    Ok(SweepResult { gt: cfg.gt, rows })
}
