//! Convergence analysis for LinBP and LinBP*.
//!
//! The iteration `B̂ ← Ê + M(B̂)` converges iff `ρ(M) < 1`. For LinBP* the
//! radius factors as `ε·ρ(Ĥo)·ρ(A)`; for LinBP it is found by power iteration
//! on the matrix-free operator and the threshold by bisection on `ε`. Cheaper
//! norm-based sufficient thresholds are reported alongside.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coupling::{induced_inf, induced_one, norms_and_radius, mooij_constant, CouplingMatrix, NormReport, ResidualCoupling};
use crate::error::{Error, Result};
use crate::graph::{Adjacency, DegreeVector, Graph};
use crate::linbp::{LinearOperator, Variant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    pub tol: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            tol: 1e-8,
            max_steps: 10_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerEstimate {
    pub radius: f64,
    pub steps: usize,
    pub reliable: bool,
}

const MAX_RESTARTS: usize = 3;

/// Estimates the largest eigenvalue modulus of `apply` by power iteration,
/// using `‖M·x‖` for unit `x` as the estimate.
///
/// Starts from `start` when given, otherwise from a seeded random vector. If
/// the iterate collapses to zero the run restarts from a fresh random vector;
/// after repeated collapses the radius is reported as zero.
pub fn power_radius<F>(dim: usize, mut apply: F, start: Option<&[f64]>, cfg: &PowerConfig) -> (PowerEstimate, Vec<f64>)
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return (PowerEstimate { radius: 0.0, steps: 0, reliable: true }, Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let random = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let mut x = match start {
        Some(s) if s.len() == dim && s.iter().any(|&v| v != 0.0) => s.to_vec(),
        _ => random(&mut rng),
    };
    normalize(&mut x);
    let mut y = vec![0.0; dim];
    let mut previous = f64::NAN;
    let mut restarts = 0;
    let mut steps = 0;
    while steps < cfg.max_steps {
        steps += 1;
        apply(&x, &mut y);
        let norm = norm2(&y);
        if !(norm > 1e-300) {
            if restarts == MAX_RESTARTS {
                return (PowerEstimate { radius: 0.0, steps, reliable: true }, x);
            }
            restarts += 1;
            x = random(&mut rng);
            normalize(&mut x);
            previous = f64::NAN;
            continue;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        if (norm - previous).abs() <= cfg.tol * norm {
            return (PowerEstimate { radius: norm, steps, reliable: true }, x);
        }
        previous = norm;
    }
    let radius = if previous.is_nan() { 0.0 } else { previous };
    (PowerEstimate { radius, steps, reliable: false }, x)
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) {
    let n = norm2(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Spectral radius of a symmetric nonnegative adjacency matrix.
pub fn adjacency_radius<A: Adjacency + ?Sized>(g: &A, cfg: &PowerConfig) -> PowerEstimate {
    let n = g.node_count();
    // The shift by I keeps the Perron root strictly dominant on bipartite graphs.
    let apply = |x: &[f64], y: &mut [f64]| {
        for s in 0..n {
            let (targets, weights) = g.row(s);
            y[s] = x[s] + targets.iter().zip(weights).map(|(&t, &w)| w * x[t]).sum::<f64>();
        }
    };
    let start = vec![1.0; n];
    let (mut est, _) = power_radius(n, apply, Some(&start), cfg);
    est.radius = (est.radius - 1.0).max(0.0);
    if g.entry_count() == 0 {
        est.radius = 0.0;
    }
    est
}

/// Spectral radius of the LinBP operator at the coupling's current scale.
pub fn operator_radius<A: Adjacency + ?Sized + Sync>(
    op: &LinearOperator<'_, A>,
    start: Option<&[f64]>,
    cfg: &PowerConfig,
) -> (PowerEstimate, Vec<f64>) {
    let dim = op.n() * op.k();
    power_radius(dim, |x, y| op.apply_slice(x, y, false), start, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MooijBound {
    pub c: f64,
    pub rho_edge: f64,
    pub satisfied: bool,
    pub reliable: bool,
}

/// Mooij and Kappen's sufficient BP condition `c(H)·ρ(A_edge) < 1`.
///
/// `A_edge` links directed edge `u→v` to every `w→u` with `w ≠ v`; it is
/// applied implicitly in `O(|E|)` per step.
pub fn mooij_bp_bound(g: &Graph, h: &CouplingMatrix, cfg: &PowerConfig) -> Result<MooijBound> {
    let c = mooij_constant(h)?;
    if g.node_count() == 0 {
        return Err(Error::InvalidParameter("the graph has no nodes".into()));
    }
    let csr = g.csr();
    let m = csr.entry_count();
    let reverse: Vec<usize> = csr.entries().map(|(s, t, _)| csr.find(t, s).expect("graph is symmetric")).collect();
    let n = g.node_count();
    let offsets = csr.row_offsets();
    let apply = |x: &[f64], y: &mut [f64]| {
        let mut incoming = vec![0.0; n];
        for u in 0..n {
            for p in offsets[u]..offsets[u + 1] {
                incoming[u] += x[reverse[p]];
            }
        }
        for u in 0..n {
            for p in offsets[u]..offsets[u + 1] {
                // Row u→v sums the w→u entries except v→u; plus the identity shift.
                y[p] = incoming[u] - x[reverse[p]] + x[p];
            }
        }
    };
    let start = vec![1.0; m];
    let (est, _) = power_radius(m, apply, Some(&start), cfg);
    let rho_edge = if m == 0 { 0.0 } else { (est.radius - 1.0).max(0.0) };
    Ok(MooijBound {
        c,
        rho_edge,
        satisfied: c * rho_edge < 1.0,
        reliable: est.reliable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportConfig {
    pub power: PowerConfig,
    /// Relative width at which bisection stops.
    pub bisection_tol: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            power: PowerConfig::default(),
            bisection_tol: 1e-4,
        }
    }
}

/// Norms of a sparse symmetric matrix or a diagonal, min over the three.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparseNorms {
    pub frobenius: f64,
    pub induced_one: f64,
    pub induced_inf: f64,
    pub min_norm: f64,
}

impl SparseNorms {
    fn new(frobenius: f64, induced_one: f64, induced_inf: f64) -> Self {
        SparseNorms {
            frobenius,
            induced_one,
            induced_inf,
            min_norm: frobenius.min(induced_one).min(induced_inf),
        }
    }
}

pub fn adjacency_norms<A: Adjacency + ?Sized>(g: &A) -> SparseNorms {
    let n = g.node_count();
    let mut col = vec![0.0; n];
    let mut row_max = 0.0f64;
    let mut fro = 0.0;
    for s in 0..n {
        let (targets, weights) = g.row(s);
        let mut row = 0.0;
        for (&t, &w) in targets.iter().zip(weights) {
            row += w.abs();
            col[t] += w.abs();
            fro += w * w;
        }
        row_max = row_max.max(row);
    }
    SparseNorms::new(fro.sqrt(), col.iter().copied().fold(0.0, f64::max), row_max)
}

pub fn degree_norms(d: &DegreeVector) -> SparseNorms {
    let fro = d.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    let max = d.max();
    SparseNorms::new(fro, max, max)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub variant: Variant,
    /// Scale at which `rho` and `converges` are evaluated.
    pub epsilon: f64,
    pub rho: f64,
    pub rho_reliable: bool,
    pub converges: bool,
    /// Largest `ε` with `ρ(M) < 1`; infinite when no scale diverges.
    pub epsilon_exact: f64,
    /// Threshold from the min-norm bound on `Ĥo`, `A` and `D`.
    pub epsilon_sufficient: f64,
    /// Threshold from the induced-norm bound `ε‖Ĥo‖·‖A‖ < 1/2`; absent when
    /// `‖D‖ ≤ ‖A‖` fails for both induced norms.
    pub epsilon_simple: Option<f64>,
    /// Threshold from the exact radii of `Ĥo`, `A` and `D`.
    pub epsilon_spectral: f64,
    pub rho_coupling: f64,
    pub rho_adjacency: f64,
    pub rho_degree: f64,
    pub coupling_norms: NormReport,
    pub adjacency_norms: SparseNorms,
    pub degree_norms: SparseNorms,
    pub mooij: Option<MooijBound>,
    /// `(ε, ρ(M(ε)))` pairs evaluated during bisection.
    pub probes: Vec<(f64, f64)>,
}

fn fmt_threshold(v: f64) -> String {
    if v.is_infinite() {
        "unbounded".to_string()
    } else {
        format!("{v}")
    }
}

impl ConvergenceReport {
    pub fn with_mooij(mut self, mooij: Option<MooijBound>) -> Self {
        self.mooij = mooij;
        self
    }

    /// Flat `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("variant", self.variant.to_string());
        kv("epsilon", self.epsilon.to_string());
        kv("rho", self.rho.to_string());
        kv("rho_reliable", self.rho_reliable.to_string());
        kv("converges", self.converges.to_string());
        kv("epsilon_exact", fmt_threshold(self.epsilon_exact));
        kv("epsilon_sufficient", fmt_threshold(self.epsilon_sufficient));
        kv(
            "epsilon_simple",
            self.epsilon_simple.map_or_else(|| "n/a".to_string(), fmt_threshold),
        );
        kv("epsilon_spectral", fmt_threshold(self.epsilon_spectral));
        kv("rho_coupling", self.rho_coupling.to_string());
        kv("rho_adjacency", self.rho_adjacency.to_string());
        kv("rho_degree", self.rho_degree.to_string());
        kv("coupling_min_norm", self.coupling_norms.min_norm.to_string());
        kv("adjacency_min_norm", self.adjacency_norms.min_norm.to_string());
        kv("degree_min_norm", self.degree_norms.min_norm.to_string());
        match &self.mooij {
            Some(m) => {
                kv("mooij_c", m.c.to_string());
                kv("mooij_rho_edge", m.rho_edge.to_string());
                kv("mooij_bound_satisfied", m.satisfied.to_string());
            }
            None => kv("mooij_bound_satisfied", "n/a".to_string()),
        }
        out
    }

    /// One `epsilon,rho` row per bisection probe, sorted by `ε`.
    pub fn probes_csv(&self) -> String {
        let mut rows = self.probes.clone();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out = String::from("epsilon,rho\n");
        for (e, r) in rows {
            let _ = writeln!(out, "{e},{r}");
        }
        out
    }
}

/// Largest `x > 0` with `d·x² + a·x < 1`.
fn quadratic_threshold(a: f64, d: f64) -> f64 {
    if d == 0.0 {
        if a == 0.0 {
            f64::INFINITY
        } else {
            1.0 / a
        }
    } else {
        2.0 / (a + (a * a + 4.0 * d).sqrt())
    }
}

fn divide(x: f64, by: f64) -> f64 {
    if by == 0.0 {
        f64::INFINITY
    } else {
        x / by
    }
}

pub fn convergence_report(
    g: &Graph,
    d: &DegreeVector,
    r: &ResidualCoupling,
    variant: Variant,
    cfg: &ReportConfig,
) -> Result<ConvergenceReport> {
    if g.node_count() == 0 {
        return Err(Error::InvalidParameter("the graph has no nodes".into()));
    }
    if d.len() != g.node_count() {
        return Err(Error::DimensionMismatch {
            what: "degree vector",
            expected: g.node_count(),
            found: d.len(),
        });
    }
    let coupling_norms = norms_and_radius(r.base())?;
    let rho_h = coupling_norms.spectral_radius;
    let a_est = adjacency_radius(g, &cfg.power);
    let rho_a = a_est.radius;
    let rho_d = d.max();
    let a_norms = adjacency_norms(g);
    let d_norms = degree_norms(d);
    let mut reliable = a_est.reliable;

    let h = coupling_norms.min_norm;
    let epsilon_sufficient = match variant {
        Variant::LinbpStar => divide(1.0, h * a_norms.min_norm),
        Variant::Linbp => divide(quadratic_threshold(a_norms.min_norm, d_norms.min_norm), h),
    };
    let epsilon_simple = [
        (induced_one(r.base()), a_norms.induced_one, d_norms.induced_one),
        (induced_inf(r.base()), a_norms.induced_inf, d_norms.induced_inf),
    ]
    .iter()
    .filter(|(_, a, dn)| dn <= a)
    .map(|(hn, a, _)| divide(1.0, 2.0 * hn * a))
    .reduce(f64::max);
    let star_exact = divide(1.0, rho_h * rho_a);
    let epsilon_spectral = match variant {
        Variant::LinbpStar => star_exact,
        Variant::Linbp => divide(quadratic_threshold(rho_a, rho_d), rho_h),
    };

    let mut probes = Vec::new();
    let (rho, epsilon_exact) = match variant {
        Variant::LinbpStar => (r.epsilon() * rho_h * rho_a, star_exact),
        Variant::Linbp => {
            let mut warm: Option<Vec<f64>> = None;
            let mut radius_at = |eps: f64, probes: &mut Vec<(f64, f64)>, reliable: &mut bool| -> Result<f64> {
                let scaled = r.with_epsilon(eps)?;
                let op = LinearOperator::with_degrees(g, d.clone(), &scaled, Variant::Linbp);
                let (est, x) = operator_radius(&op, warm.as_deref(), &cfg.power);
                warm = Some(x);
                *reliable &= est.reliable;
                probes.push((eps, est.radius));
                Ok(est.radius)
            };
            let exact = if star_exact.is_infinite() {
                f64::INFINITY
            } else {
                let mut lo = 0.0;
                let mut hi = 10.0 * star_exact;
                let mut expansions = 0;
                while radius_at(hi, &mut probes, &mut reliable)? < 1.0 && expansions < 40 {
                    lo = hi;
                    hi *= 2.0;
                    expansions += 1;
                }
                if expansions == 40 {
                    f64::INFINITY
                } else {
                    while hi - lo > cfg.bisection_tol * 0.5 * (hi + lo) {
                        let mid = 0.5 * (lo + hi);
                        if radius_at(mid, &mut probes, &mut reliable)? < 1.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                }
            };
            let rho = radius_at(r.epsilon(), &mut probes, &mut reliable)?;
            probes.pop();
            (rho, exact)
        }
    };

    Ok(ConvergenceReport {
        variant,
        epsilon: r.epsilon(),
        rho,
        rho_reliable: reliable,
        converges: rho < 1.0,
        epsilon_exact,
        epsilon_sufficient,
        epsilon_simple,
        epsilon_spectral,
        rho_coupling: rho_h,
        rho_adjacency: rho_a,
        rho_degree: rho_d,
        coupling_norms,
        adjacency_norms: a_norms,
        degree_norms: d_norms,
        mooij: None,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::center;
    use crate::graph::degree_vector;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn fraud() -> ResidualCoupling {
        center(&CouplingMatrix::from_rows(&[&[0.6, 0.3, 0.1], &[0.3, 0.0, 0.7], &[0.1, 0.7, 0.2]]).unwrap())
    }

    fn triangle() -> Graph {
        Graph::from_unweighted(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn power_iteration_on_known_matrices() {
        let cfg = PowerConfig::default();
        let diag = [3.0, -5.0, 1.0];
        let (est, _) = power_radius(3, |x, y| (0..3).for_each(|i| y[i] = diag[i] * x[i]), None, &cfg);
        assert!(est.reliable);
        assert!((est.radius - 5.0).abs() < 1e-6);
        let (zero, _) = power_radius(4, |_, y| y.fill(0.0), None, &cfg);
        assert_eq!(zero.radius, 0.0);
        assert!(zero.reliable);
    }

    #[test]
    fn adjacency_radius_of_small_graphs() {
        let cfg = PowerConfig::default();
        assert!((adjacency_radius(&triangle(), &cfg).radius - 2.0).abs() < 1e-6);
        // Bipartite path a−b−c has eigenvalues ±√2 and 0.
        let path = Graph::from_unweighted(3, &[(0, 1), (1, 2)]).unwrap();
        assert!((adjacency_radius(&path, &cfg).radius - 2f64.sqrt()).abs() < 1e-6);
        assert_eq!(adjacency_radius(&Graph::empty(3), &cfg).radius, 0.0);
    }

    #[test]
    fn mooij_edge_matrix() {
        let cfg = PowerConfig::default();
        let h = CouplingMatrix::from_rows(&[&[0.8, 0.2], &[0.2, 0.8]]).unwrap();
        let single = Graph::from_unweighted(2, &[(0, 1)]).unwrap();
        let b = mooij_bp_bound(&single, &h, &cfg).unwrap();
        assert_eq!(b.rho_edge, 0.0);
        assert!(b.satisfied);

        let b = mooij_bp_bound(&triangle(), &h, &cfg).unwrap();
        assert!((b.rho_edge - 1.0).abs() < 1e-6);
        assert!((b.c - 0.6).abs() < 1e-12);
        assert!(b.satisfied);

        let uniform = CouplingMatrix::uniform(3).unwrap();
        let b = mooij_bp_bound(&triangle(), &uniform, &cfg).unwrap();
        assert_eq!(b.c, 0.0);
        assert!(b.satisfied);

        let fraud = CouplingMatrix::from_rows(&[&[0.6, 0.3, 0.1], &[0.3, 0.0, 0.7], &[0.1, 0.7, 0.2]]).unwrap();
        assert!(matches!(mooij_bp_bound(&triangle(), &fraud, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_coupling_is_unbounded() {
        let g = triangle();
        let zero = ResidualCoupling::new(DMatrix::zeros(3, 3), 1.0).unwrap();
        for variant in [Variant::Linbp, Variant::LinbpStar] {
            let rep = convergence_report(&g, &degree_vector(&g), &zero, variant, &ReportConfig::default()).unwrap();
            assert_eq!(rep.rho, 0.0);
            assert!(rep.converges);
            assert!(rep.epsilon_exact.is_infinite());
            assert!(rep.epsilon_sufficient.is_infinite());
            assert!(rep.to_text().contains("epsilon_exact = unbounded"));
        }
    }

    #[test]
    fn empty_graph_is_rejected() {
        let g = Graph::empty(0);
        assert!(convergence_report(&g, &degree_vector(&g), &fraud(), Variant::Linbp, &ReportConfig::default()).is_err());
    }

    #[test]
    fn exact_threshold_matches_dense_eigenvalues() {
        let g = Graph::from_unweighted(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]).unwrap();
        let d = degree_vector(&g);
        let rep = convergence_report(&g, &d, &fraud(), Variant::Linbp, &ReportConfig::default()).unwrap();
        let at = |eps: f64| {
            let r = fraud().with_epsilon(eps).unwrap();
            let m = LinearOperator::with_degrees(&g, d.clone(), &r, Variant::Linbp).materialize();
            m.symmetric_eigenvalues().amax()
        };
        assert!(at(rep.epsilon_exact * 0.999) < 1.0);
        assert!(at(rep.epsilon_exact * 1.001) > 1.0);
        assert!(rep.epsilon_simple.unwrap() <= rep.epsilon_sufficient);
        assert!(rep.epsilon_sufficient <= rep.epsilon_spectral);
        assert!(rep.epsilon_spectral <= rep.epsilon_exact);
        assert!(!rep.probes.is_empty());
        assert!(rep.probes_csv().starts_with("epsilon,rho\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn bounds_are_ordered(n in 3usize..12, extra in prop::collection::vec((0usize..12, 0usize..12), 0..20)) {
            let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
            for (a, b) in extra {
                let (a, b) = (a % n, b % n);
                if a != b && !edges.contains(&(a.min(b), a.max(b))) {
                    edges.push((a.min(b), a.max(b)));
                }
            }
            let g = Graph::from_unweighted(n, &edges).unwrap();
            let d = degree_vector(&g);
            for variant in [Variant::Linbp, Variant::LinbpStar] {
                let rep = convergence_report(&g, &d, &fraud(), variant, &ReportConfig::default()).unwrap();
                let simple = rep.epsilon_simple.unwrap();
                prop_assert!(simple <= rep.epsilon_sufficient * (1.0 + 1e-12));
                prop_assert!(rep.epsilon_sufficient <= rep.epsilon_exact * (1.0 + 1e-4));
            }
        }
    }
}
