//! Single-pass belief propagation.
//!
//! Every node takes its belief only from its nearest explicitly labeled
//! nodes: `b̂_t = Ĥ^g · Σ_p w_p·ê_p` over all shortest paths `p` of length
//! `g = g(t)`. Beliefs are computed level by level in one pass, and
//! [`SbpState`] keeps them current as explicit beliefs or edges are added.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::beliefs::{BeliefMatrix, SparseBeliefs};
use crate::coupling::ResidualCoupling;
use crate::error::{Error, Result};
use crate::graph::{hop_distances, Adjacency, DirectedGraph, Graph, NodeLabels, UNREACHABLE};

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Z-scores a vector with the population standard deviation.
///
/// A vector whose spread is at rounding level relative to its entries is
/// treated as constant and maps to zeros.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    let sigma = std_dev(x);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sigma > f64::EPSILON * scale) {
        return vec![0.0; x.len()];
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean) / sigma).collect()
}

/// Standardizes every row of a belief matrix.
pub fn standardize_rows(b: &BeliefMatrix) -> BeliefMatrix {
    let data = b.rows().flat_map(standardize).collect();
    BeliefMatrix::from_vec(b.n(), b.k(), data, b.mode()).expect("same shape")
}

/// Hop distance of every node to its nearest explicit node, grouped by level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeodesicIndex {
    g: Vec<u32>,
    levels: Vec<Vec<usize>>,
}

impl GeodesicIndex {
    pub const UNREACHABLE: u32 = UNREACHABLE;

    pub fn build<A: Adjacency + ?Sized>(g: &A, explicit: &[usize]) -> Self {
        Self::from_numbers(hop_distances(g, explicit))
    }

    pub fn from_numbers(g: Vec<u32>) -> Self {
        let mut levels: Vec<Vec<usize>> = Vec::new();
        for (v, &l) in g.iter().enumerate() {
            if l == UNREACHABLE {
                continue;
            }
            let l = l as usize;
            if levels.len() <= l {
                levels.resize_with(l + 1, Vec::new);
            }
            levels[l].push(v);
        }
        GeodesicIndex { g, levels }
    }

    pub fn get(&self, v: usize) -> u32 {
        self.g[v]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// `levels()[i]` lists the nodes at distance `i`, ascending.
    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn max_level(&self) -> Option<u32> {
        self.levels.len().checked_sub(1).map(|l| l as u32)
    }

    pub fn is_reachable(&self, v: usize) -> bool {
        self.g[v] != UNREACHABLE
    }
}

/// Writes `node TAB g`, with `-1` for unreachable nodes.
pub fn write_geodesic<W: Write>(gi: &GeodesicIndex, labels: &NodeLabels, mut out: W) -> Result<()> {
    for (v, &l) in gi.as_slice().iter().enumerate() {
        let l = if l == UNREACHABLE { -1 } else { i64::from(l) };
        writeln!(out, "{}\t{l}", labels.name(v))?;
    }
    Ok(())
}

pub fn read_geodesic<R: BufRead>(source: R, labels: &NodeLabels, n: usize) -> Result<GeodesicIndex> {
    let mut g = vec![None; n];
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Parse { line: i + 1, message };
        let (node, value) = line
            .split_once('\t')
            .ok_or_else(|| bad(format!("expected `node<TAB>g`, got {line:?}")))?;
        let v = labels
            .resolve(node.trim(), n)
            .ok_or_else(|| Error::UnknownNode(node.trim().to_string()))?;
        let l: i64 = value
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad geodesic number {value:?}")))?;
        let l = match l {
            -1 => UNREACHABLE,
            l if (0..i64::from(UNREACHABLE)).contains(&l) => l as u32,
            _ => return Err(bad(format!("bad geodesic number {l}"))),
        };
        if g[v].replace(l).is_some() {
            return Err(bad(format!("duplicate node {node}")));
        }
    }
    let g = g
        .into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| Error::InvalidParameter(format!("geodesic number missing for node {}", labels.name(v)))))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeodesicIndex::from_numbers(g))
}

/// Keeps only the entries `s→t` with `g(t) = g(s) + 1`.
pub fn modified_adjacency(g: &Graph, gi: &GeodesicIndex) -> DirectedGraph {
    let entries = g
        .csr()
        .entries()
        .filter(|&(s, t, _)| gi.is_reachable(s) && gi.get(t) == gi.get(s) + 1)
        .collect();
    DirectedGraph::from_entries(g.node_count(), entries).expect("subset of a valid graph")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeodesicChange {
    pub node: usize,
    pub old: u32,
    pub new: u32,
}

/// Telemetry of the most recent propagation or update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    /// Directed edges followed from a parent into a recomputed node.
    pub edge_visits: usize,
    /// Outer frontier iterations.
    pub iterations: usize,
    /// Belief recomputations, counting repeats.
    pub recomputed: usize,
    pub trace: Vec<GeodesicChange>,
}

/// Beliefs and geodesic numbers of a graph under single-pass propagation.
#[derive(Debug, Clone)]
pub struct SbpState {
    graph: Graph,
    coupling: ResidualCoupling,
    h: DMatrix<f64>,
    explicit: BeliefMatrix,
    beliefs: BeliefMatrix,
    geodesic: GeodesicIndex,
    stats: UpdateStats,
}

/// Runs single-pass propagation from the nonzero rows of `e`.
pub fn sbp_run(g: &Graph, r: &ResidualCoupling, e: &BeliefMatrix) -> Result<SbpState> {
    SbpState::run(g.clone(), r.clone(), e)
}

pub fn sbp_update_beliefs(mut state: SbpState, delta: &SparseBeliefs) -> Result<SbpState> {
    state.update_beliefs(delta)?;
    Ok(state)
}

pub fn sbp_update_edges(mut state: SbpState, new_edges: &[(usize, usize, f64)]) -> Result<SbpState> {
    state.update_edges(new_edges)?;
    Ok(state)
}

fn check_shape(g: &Graph, r: &ResidualCoupling, b: &BeliefMatrix, what: &'static str) -> Result<()> {
    if b.n() != g.node_count() {
        return Err(Error::DimensionMismatch {
            what,
            expected: g.node_count(),
            found: b.n(),
        });
    }
    if b.k() != r.k() {
        return Err(Error::DimensionMismatch {
            what: "belief classes",
            expected: r.k(),
            found: b.k(),
        });
    }
    Ok(())
}

impl SbpState {
    pub fn run(graph: Graph, coupling: ResidualCoupling, e: &BeliefMatrix) -> Result<Self> {
        check_shape(&graph, &coupling, e, "explicit belief rows")?;
        let explicit = e.to_residual();
        let geodesic = GeodesicIndex::build(&graph, &explicit.explicit_nodes());
        let n = graph.node_count();
        let mut state = SbpState {
            h: coupling.scaled(),
            beliefs: BeliefMatrix::zeros(n, coupling.k()),
            graph,
            coupling,
            explicit,
            geodesic,
            stats: UpdateStats::default(),
        };
        state.propagate();
        Ok(state)
    }

    /// Rebuilds a state from stored parts, checking that they agree.
    pub fn from_parts(
        graph: Graph,
        coupling: ResidualCoupling,
        explicit: BeliefMatrix,
        beliefs: BeliefMatrix,
        geodesic: GeodesicIndex,
    ) -> Result<Self> {
        check_shape(&graph, &coupling, &explicit, "explicit belief rows")?;
        check_shape(&graph, &coupling, &beliefs, "belief rows")?;
        if geodesic.len() != graph.node_count() {
            return Err(Error::DimensionMismatch {
                what: "geodesic numbers",
                expected: graph.node_count(),
                found: geodesic.len(),
            });
        }
        let explicit = explicit.to_residual();
        let expected = GeodesicIndex::build(&graph, &explicit.explicit_nodes());
        if let Some(v) = (0..graph.node_count()).find(|&v| expected.get(v) != geodesic.get(v)) {
            return Err(Error::InvalidParameter(format!(
                "stored geodesic number of node {} does not match the graph and explicit beliefs",
                graph.labels().name(v)
            )));
        }
        Ok(SbpState {
            h: coupling.scaled(),
            graph,
            coupling,
            explicit,
            beliefs: beliefs.to_residual(),
            geodesic,
            stats: UpdateStats::default(),
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn coupling(&self) -> &ResidualCoupling {
        &self.coupling
    }

    pub fn explicit(&self) -> &BeliefMatrix {
        &self.explicit
    }

    pub fn beliefs(&self) -> &BeliefMatrix {
        &self.beliefs
    }

    pub fn geodesic(&self) -> &GeodesicIndex {
        &self.geodesic
    }

    pub fn stats(&self) -> &UpdateStats {
        &self.stats
    }

    /// Edges traversed by the most recent operation.
    pub fn edge_visits(&self) -> usize {
        self.stats.edge_visits
    }

    /// True for nodes no explicit node can reach.
    pub fn unlabeled(&self) -> Vec<bool> {
        self.geodesic.as_slice().iter().map(|&l| l == UNREACHABLE).collect()
    }

    pub fn modified_adjacency(&self) -> DirectedGraph {
        modified_adjacency(&self.graph, &self.geodesic)
    }

    /// `(Σ_{parents s} w·b̂_s)·Ĥ` read from `source`.
    fn pull(&self, t: usize, source: &BeliefMatrix, visits: &mut usize) -> Vec<f64> {
        let k = self.coupling.k();
        let level = self.geodesic.get(t);
        let mut acc = vec![0.0; k];
        let (targets, weights) = self.graph.row(t);
        for (&s, &w) in targets.iter().zip(weights) {
            if level.checked_sub(1) == Some(self.geodesic.get(s)) {
                *visits += 1;
                for (a, v) in acc.iter_mut().zip(source.row(s)) {
                    *a += w * v;
                }
            }
        }
        (0..k)
            .map(|i| (0..k).map(|j| acc[j] * self.h[(j, i)]).sum())
            .collect()
    }

    fn propagate(&mut self) {
        let mut visits = 0;
        let mut beliefs = self.explicit.clone();
        let levels = self.geodesic.levels().to_vec();
        for level in levels.iter().skip(1) {
            for &t in level {
                let row = self.pull(t, &beliefs, &mut visits);
                beliefs.row_mut(t).copy_from_slice(&row);
            }
        }
        self.beliefs = beliefs;
        self.stats = UpdateStats {
            edge_visits: visits,
            iterations: levels.len().saturating_sub(1),
            recomputed: levels.iter().skip(1).map(Vec::len).sum(),
            trace: Vec::new(),
        };
    }

    fn set_level(&mut self, v: usize, new: u32, trace: &mut Vec<GeodesicChange>) {
        let old = self.geodesic.g[v];
        if old != new {
            self.geodesic.g[v] = new;
            trace.push(GeodesicChange { node: v, old, new });
        }
    }

    fn rebuild_levels(&mut self) {
        self.geodesic = GeodesicIndex::from_numbers(std::mem::take(&mut self.geodesic.g));
    }

    /// Adds or replaces explicit beliefs and repairs the affected region.
    pub fn update_beliefs(&mut self, delta: &SparseBeliefs) -> Result<&UpdateStats> {
        let n = self.graph.node_count();
        if delta.k() != self.coupling.k() {
            return Err(Error::DimensionMismatch {
                what: "belief classes",
                expected: self.coupling.k(),
                found: delta.k(),
            });
        }
        for (v, row) in delta.iter() {
            if v >= n {
                return Err(Error::UnknownNode(v.to_string()));
            }
            if row.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "node {} has an all-zero delta row; removing explicit beliefs is not supported",
                    self.graph.labels().name(v)
                )));
            }
        }
        let mut stats = UpdateStats::default();
        let mut frontier: Vec<usize> = Vec::with_capacity(delta.len());
        for (v, row) in delta.iter() {
            self.explicit.row_mut(v).copy_from_slice(row);
            self.beliefs.row_mut(v).copy_from_slice(row);
            self.set_level(v, 0, &mut stats.trace);
            frontier.push(v);
        }
        let mut i = 0u32;
        while !frontier.is_empty() {
            i += 1;
            let mut next = BTreeSet::new();
            for &s in &frontier {
                for &t in self.graph.row(s).0 {
                    if self.geodesic.get(t) >= i {
                        next.insert(t);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            stats.iterations += 1;
            for &t in &next {
                self.set_level(t, i, &mut stats.trace);
            }
            // Every parent at level i−1 is final once the previous round ends.
            for &t in &next {
                let row = self.pull(t, &self.beliefs, &mut stats.edge_visits);
                self.beliefs.row_mut(t).copy_from_slice(&row);
                stats.recomputed += 1;
            }
            frontier = next.into_iter().collect();
        }
        self.rebuild_levels();
        self.stats = stats;
        Ok(&self.stats)
    }

    /// Inserts undirected edges and repairs geodesic numbers and beliefs.
    ///
    /// Nodes may be recomputed more than once as shorter paths arrive in
    /// later rounds.
    pub fn update_edges(&mut self, new_edges: &[(usize, usize, f64)]) -> Result<&UpdateStats> {
        let graph = self.graph.with_added_edges(new_edges)?;
        self.graph = graph;
        let mut stats = UpdateStats::default();
        let g = |v: usize, gi: &GeodesicIndex| u64::from(gi.get(v));
        let mut cand: std::collections::BTreeMap<usize, u32> = Default::default();
        for &(a, b, _) in new_edges {
            for (s, t) in [(a, b), (b, a)] {
                if self.geodesic.is_reachable(s) && g(s, &self.geodesic) < g(t, &self.geodesic) {
                    let c = self.geodesic.get(s) + 1;
                    cand.entry(t).and_modify(|x| *x = (*x).min(c)).or_insert(c);
                }
            }
        }
        while !cand.is_empty() {
            stats.iterations += 1;
            for (&t, &c) in &cand {
                let new = self.geodesic.get(t).min(c);
                self.set_level(t, new, &mut stats.trace);
            }
            let snapshot = self.beliefs.clone();
            for &t in cand.keys() {
                let row = self.pull(t, &snapshot, &mut stats.edge_visits);
                self.beliefs.row_mut(t).copy_from_slice(&row);
                stats.recomputed += 1;
            }
            let mut next: std::collections::BTreeMap<usize, u32> = Default::default();
            for &s in cand.keys() {
                let gs = self.geodesic.get(s);
                for &t in self.graph.row(s).0 {
                    if self.geodesic.get(t) > gs {
                        next.entry(t).and_modify(|x| *x = (*x).min(gs + 1)).or_insert(gs + 1);
                    }
                }
            }
            cand = next;
        }
        self.rebuild_levels();
        self.stats = stats;
        Ok(&self.stats)
    }

    /// Appends isolated, unreachable nodes so later edges can reference them.
    pub fn add_isolated_nodes(&mut self, count: usize, names: Option<Vec<String>>) -> Result<()> {
        self.graph = self.graph.with_added_nodes(count, names)?;
        let n = self.graph.node_count();
        let k = self.coupling.k();
        let grow = |b: &BeliefMatrix| {
            let mut data = b.data().to_vec();
            data.resize(n * k, 0.0);
            BeliefMatrix::from_vec(n, k, data, b.mode()).expect("resized")
        };
        self.explicit = grow(&self.explicit);
        self.beliefs = grow(&self.beliefs);
        self.geodesic.g.resize(n, UNREACHABLE);
        self.rebuild_levels();
        Ok(())
    }
}
