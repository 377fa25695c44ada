//! Sparse weighted graphs in compressed-sparse-row form.
//!
//! [`Graph`] is the undirected network (every entry `s -> t` has a mirror
//! `t -> s` with the same weight). [`DirectedGraph`] drops the symmetry
//! requirement and is only produced by algorithms that orient edges, such as
//! the level-respecting adjacency of single-pass propagation.
//!
//! Edge counts reported anywhere in this crate are directed-entry counts, so an
//! undirected edge contributes two.

use std::borrow::Cow;
use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Row-compressed adjacency storage shared by [`Graph`] and [`DirectedGraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    row_offsets: Vec<usize>,
    col_targets: Vec<usize>,
    weights: Vec<f64>,
}

impl Csr {
    /// Builds a CSR from entries that are already sorted by `(row, col)`.
    fn from_sorted(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut row_offsets = vec![0usize; n + 1];
        for &(s, _, _) in entries {
            row_offsets[s + 1] += 1;
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Csr {
            row_offsets,
            col_targets: entries.iter().map(|e| e.1).collect(),
            weights: entries.iter().map(|e| e.2).collect(),
        }
    }

    fn empty(n: usize) -> Self {
        Csr {
            row_offsets: vec![0; n + 1],
            col_targets: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn entry_count(&self) -> usize {
        self.col_targets.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_targets(&self) -> &[usize] {
        &self.col_targets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Targets and weights of row `s`.
    #[inline]
    pub fn row(&self, s: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[s]..self.row_offsets[s + 1];
        (&self.col_targets[range.clone()], &self.weights[range])
    }

    /// Position of entry `s -> t` in the entry arrays.
    pub fn find(&self, s: usize, t: usize) -> Option<usize> {
        let start = self.row_offsets[s];
        let (targets, _) = self.row(s);
        targets.binary_search(&t).ok().map(|i| start + i)
    }

    /// Iterates all entries as `(source, target, weight)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.node_count()).flat_map(move |s| {
            let (targets, weights) = self.row(s);
            targets.iter().zip(weights).map(move |(&t, &w)| (s, t, w))
        })
    }

    fn transpose(&self) -> Csr {
        let mut entries: Vec<(usize, usize, f64)> = self.entries().map(|(s, t, w)| (t, s, w)).collect();
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        Csr::from_sorted(self.node_count(), &entries)
    }
}

/// Read access to a weighted sparse adjacency matrix.
///
/// Row `s` lists the entries `A(s, t)`; the product `A * X` therefore gathers
/// over row `s`.
pub trait Adjacency {
    fn csr(&self) -> &Csr;

    fn node_count(&self) -> usize {
        self.csr().node_count()
    }

    /// Number of stored directed entries.
    fn entry_count(&self) -> usize {
        self.csr().entry_count()
    }

    #[inline]
    fn row(&self, s: usize) -> (&[usize], &[f64]) {
        self.csr().row(s)
    }
}

/// Mapping between external node ids and dense internal indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum NodeLabels {
    /// External ids are the nonnegative integers `0..n` themselves.
    #[default]
    Identity,
    /// External ids are arbitrary tokens, indexed in first-seen order.
    Tokens {
        names: Vec<String>,
        index: HashMap<String, usize>,
    },
}

impl NodeLabels {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate node label {name}")));
            }
        }
        Ok(NodeLabels::Tokens { names, index })
    }

    /// Resolves an external id against a graph with `n` nodes.
    pub fn resolve(&self, id: &str, n: usize) -> Option<usize> {
        match self {
            NodeLabels::Identity => id.parse::<usize>().ok().filter(|&v| v < n),
            NodeLabels::Tokens { index, .. } => index.get(id).copied(),
        }
    }

    pub fn name(&self, v: usize) -> Cow<'_, str> {
        match self {
            NodeLabels::Identity => Cow::Owned(v.to_string()),
            NodeLabels::Tokens { names, .. } => Cow::Borrowed(&names[v]),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, NodeLabels::Identity)
    }

    fn push(&mut self, name: String) {
        if let NodeLabels::Tokens { names, index } = self {
            index.insert(name.clone(), names.len());
            names.push(name);
        }
    }
}

/// Undirected weighted graph. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    csr: Csr,
    labels: NodeLabels,
}

impl Adjacency for Graph {
    fn csr(&self) -> &Csr {
        &self.csr
    }
}

fn check_weight(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("edge weight {w} must be finite and positive")))
    }
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            csr: Csr::empty(n),
            labels: NodeLabels::Identity,
        }
    }

    /// Builds a graph from undirected edges, each listed once.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries = Vec::with_capacity(edges.len() * 2);
        for &(s, t, w) in edges {
            entries.push((s, t, w));
            entries.push((t, s, w));
        }
        Self::from_entries(n, entries, NodeLabels::Identity)
    }

    /// Builds a graph from unweighted undirected edges.
    pub fn from_unweighted(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let weighted: Vec<_> = edges.iter().map(|&(s, t)| (s, t, 1.0)).collect();
        Self::from_edges(n, &weighted)
    }

    /// Builds a graph from directed entries that must already be symmetric.
    pub fn from_entries(n: usize, mut entries: Vec<(usize, usize, f64)>, labels: NodeLabels) -> Result<Self> {
        let name = |v: usize| labels.name(v).into_owned();
        for &(s, t, w) in &entries {
            if s >= n || t >= n {
                return Err(Error::UnknownNode(s.max(t).to_string()));
            }
            if s == t {
                return Err(Error::SelfLoop { node: name(s) });
            }
            check_weight(w)?;
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::DuplicateEdge {
                    src: name(pair[0].0),
                    dst: name(pair[0].1),
                });
            }
        }
        let csr = Csr::from_sorted(n, &entries);
        for &(s, t, w) in &entries {
            let mirrored = csr.find(t, s).map(|p| csr.weights[p]);
            if mirrored != Some(w) {
                return Err(Error::Asymmetric { src: name(s), dst: name(t) });
            }
        }
        Ok(Graph { csr, labels })
    }

    pub fn labels(&self) -> &NodeLabels {
        &self.labels
    }

    /// Number of undirected edges (half the stored entries).
    pub fn edge_count(&self) -> usize {
        self.csr.entry_count() / 2
    }

    pub fn weight(&self, s: usize, t: usize) -> Option<f64> {
        self.csr.find(s, t).map(|p| self.csr.weights[p])
    }

    pub fn is_unweighted(&self) -> bool {
        self.csr.weights.iter().all(|&w| w == 1.0)
    }

    /// Undirected edges with `s < t`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.csr.entries().filter(|&(s, t, _)| s < t)
    }

    /// Returns a new graph with the given undirected edges added.
    pub fn with_added_edges(&self, new_edges: &[(usize, usize, f64)]) -> Result<Graph> {
        let n = self.node_count();
        let mut entries: Vec<_> = self.csr.entries().collect();
        for &(s, t, w) in new_edges {
            if s >= n || t >= n {
                return Err(Error::UnknownNode(s.max(t).to_string()));
            }
            entries.push((s, t, w));
            entries.push((t, s, w));
        }
        Graph::from_entries(n, entries, self.labels.clone())
    }

    /// Returns a new graph with `count` isolated nodes appended.
    pub fn with_added_nodes(&self, count: usize, names: Option<Vec<String>>) -> Result<Graph> {
        let n = self.node_count() + count;
        let mut labels = self.labels.clone();
        match (&mut labels, names) {
            (NodeLabels::Identity, None) => {}
            (NodeLabels::Tokens { .. }, Some(names)) if names.len() == count => {
                for name in names {
                    if labels.resolve(&name, n).is_some() {
                        return Err(Error::InvalidParameter(format!("node label {name} already exists")));
                    }
                    labels.push(name);
                }
            }
            _ => {
                return Err(Error::InvalidParameter(
                    "new node names are required exactly when the graph uses token labels".into(),
                ))
            }
        }
        Graph::from_entries(n, self.csr.entries().collect(), labels)
    }
}

/// Per-node sum of squared edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector(Vec<f64>);

impl DegreeVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for DegreeVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `d[s] = sum of w(s,t)^2` over the entries of row `s`.
pub fn degree_vector<A: Adjacency + ?Sized>(g: &A) -> DegreeVector {
    DegreeVector(
        (0..g.node_count())
            .map(|s| g.row(s).1.iter().map(|w| w * w).sum())
            .collect(),
    )
}

/// Weighted graph without the symmetry requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    csr: Csr,
}

impl Adjacency for DirectedGraph {
    fn csr(&self) -> &Csr {
        &self.csr
    }
}

impl DirectedGraph {
    pub fn from_entries(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(s, t, w) in &entries {
            if s >= n || t >= n {
                return Err(Error::UnknownNode(s.max(t).to_string()));
            }
            if s == t {
                return Err(Error::SelfLoop { node: s.to_string() });
            }
            check_weight(w)?;
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::DuplicateEdge {
                    src: pair[0].0.to_string(),
                    dst: pair[0].1.to_string(),
                });
            }
        }
        Ok(DirectedGraph {
            csr: Csr::from_sorted(n, &entries),
        })
    }

    pub fn transpose(&self) -> DirectedGraph {
        DirectedGraph {
            csr: self.csr.transpose(),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.csr.entries()
    }

    /// Kahn's algorithm; true when every node can be topologically ordered.
    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.node_count();
        let mut indegree = vec![0usize; n];
        for &t in self.csr.col_targets() {
            indegree[t] += 1;
        }
        let mut stack: Vec<usize> = (0..n).rev().filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = stack.pop() {
            order.push(v);
            for &t in self.row(v).0 {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    stack.push(t);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

/// Sentinel hop distance for nodes that no source can reach.
pub const UNREACHABLE: u32 = u32::MAX;

/// Multi-source breadth-first hop distances; unreachable nodes get [`UNREACHABLE`].
pub fn hop_distances<A: Adjacency + ?Sized>(g: &A, sources: &[usize]) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; g.node_count()];
    let mut frontier = Vec::with_capacity(sources.len());
    for &s in sources {
        if dist[s] != 0 {
            dist[s] = 0;
            frontier.push(s);
        }
    }
    let mut level = 0u32;
    while !frontier.is_empty() {
        level += 1;
        let mut next = Vec::new();
        for &s in &frontier {
            for &t in g.row(s).0 {
                if dist[t] == UNREACHABLE {
                    dist[t] = level;
                    next.push(t);
                }
            }
        }
        frontier = next;
    }
    dist
}

struct RawEdge {
    line: usize,
    src: String,
    dst: String,
    weight: f64,
}

/// Reads a tab-separated edge list: `src TAB dst [TAB weight]`.
///
/// Lines starting with `#` are comments. Two comment forms are also read as
/// node declarations so that isolated nodes survive a round trip:
/// `# nodes: N` (integer ids) and `# node: LABEL` (token ids, in order).
///
/// When every id parses as a nonnegative integer the ids are used as indices
/// directly; otherwise all ids are treated as tokens and indexed in
/// first-seen order. With `directed = false` each line is one undirected edge;
/// with `directed = true` each line is one entry and the file must list both
/// directions.
pub fn load_edge_list<R: BufRead>(source: R, directed: bool) -> Result<Graph> {
    let mut raw = Vec::new();
    let mut declared_count = 0usize;
    let mut declared_names: Vec<String> = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(count) = comment.strip_prefix("nodes:") {
                declared_count = count.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad node count {:?}", count.trim()),
                })?;
            } else if let Some(name) = comment.strip_prefix("node:") {
                declared_names.push(name.trim().to_string());
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected `src<TAB>dst[<TAB>weight]`, got {line:?}"),
            });
        }
        let weight = match fields.get(2) {
            Some(w) => w.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad weight {w:?}"),
            })?,
            None => 1.0,
        };
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("weight {weight} must be finite and positive"),
            });
        }
        raw.push(RawEdge {
            line: line_no,
            src: fields[0].to_string(),
            dst: fields[1].to_string(),
            weight,
        });
    }

    let numeric = declared_names.is_empty()
        && raw
            .iter()
            .all(|e| e.src.parse::<usize>().is_ok() && e.dst.parse::<usize>().is_ok());

    let (n, labels, ids): (usize, NodeLabels, Vec<(usize, usize)>) = if numeric {
        let ids: Vec<(usize, usize)> = raw
            .iter()
            .map(|e| (e.src.parse().unwrap(), e.dst.parse().unwrap()))
            .collect();
        let max_id = ids.iter().map(|&(s, t)| s.max(t) + 1).max().unwrap_or(0);
        (max_id.max(declared_count), NodeLabels::Identity, ids)
    } else {
        let mut labels = NodeLabels::from_names(Vec::new())?;
        for name in declared_names {
            if labels.resolve(&name, usize::MAX).is_none() {
                labels.push(name);
            }
        }
        let intern = |name: &str, labels: &mut NodeLabels| match labels.resolve(name, usize::MAX) {
            Some(v) => v,
            None => {
                labels.push(name.to_string());
                labels.resolve(name, usize::MAX).unwrap()
            }
        };
        let ids = raw
            .iter()
            .map(|e| (intern(&e.src, &mut labels), intern(&e.dst, &mut labels)))
            .collect();
        let n = match &labels {
            NodeLabels::Tokens { names, .. } => names.len(),
            NodeLabels::Identity => unreachable!(),
        };
        (n, labels, ids)
    };

    let mut entries = Vec::with_capacity(raw.len() * 2);
    let mut seen: HashMap<(usize, usize), usize> = HashMap::with_capacity(raw.len() * 2);
    for (e, &(s, t)) in raw.iter().zip(&ids) {
        if s == t {
            return Err(Error::SelfLoop { node: e.src.clone() });
        }
        let mut add = |a: usize, b: usize| -> Result<()> {
            if seen.insert((a, b), e.line).is_some() {
                return Err(Error::DuplicateEdge {
                    src: labels.name(a).into_owned(),
                    dst: labels.name(b).into_owned(),
                });
            }
            entries.push((a, b, e.weight));
            Ok(())
        };
        add(s, t)?;
        if !directed {
            add(t, s)?;
        }
    }
    Graph::from_entries(n, entries, labels)
}

/// Reads undirected edges between nodes that `labels` already knows.
pub fn read_edges_between<R: BufRead>(source: R, labels: &NodeLabels, n: usize) -> Result<Vec<(usize, usize, f64)>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected `src<TAB>dst[<TAB>weight]`, got {line:?}"),
            });
        }
        let resolve = |id: &str| labels.resolve(id, n).ok_or_else(|| Error::UnknownNode(id.to_string()));
        let (s, t) = (resolve(fields[0])?, resolve(fields[1])?);
        let w = match fields.get(2) {
            Some(w) => w.parse::<f64>().ok().filter(|w| w.is_finite() && *w > 0.0).ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("bad weight {w:?}"),
            })?,
            None => 1.0,
        };
        out.push((s, t, w));
    }
    Ok(out)
}

/// Writes the graph as an undirected edge list with node declarations.
pub fn write_edge_list<W: Write>(g: &Graph, mut out: W) -> Result<()> {
    match g.labels() {
        NodeLabels::Identity => writeln!(out, "# nodes: {}", g.node_count())?,
        NodeLabels::Tokens { names, .. } => {
            for name in names {
                writeln!(out, "# node: {name}")?;
            }
        }
    }
    for (s, t, w) in g.edges() {
        writeln!(out, "{}\t{}\t{}", g.labels().name(s), g.labels().name(t), w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Graph> {
        load_edge_list(text.as_bytes(), false)
    }

    #[test]
    fn path_is_symmetrized() {
        let g = load("0\t1\n1\t2").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.entry_count(), 4);
        assert_eq!(g.row(1).0, &[0, 2]);
    }

    #[test]
    fn empty_stream_gives_empty_graph() {
        let g = load("").unwrap();
        assert_eq!(g.node_count(), 0);
        assert!(degree_vector(&g).is_empty());
    }

    #[test]
    fn token_ids_get_first_seen_indices() {
        let g = load("a\tb\t2.5").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.weight(0, 1), Some(2.5));
        assert_eq!(g.weight(1, 0), Some(2.5));
        assert_eq!(g.labels().resolve("a", 2), Some(0));
        assert_eq!(g.labels().resolve("b", 2), Some(1));
        assert_eq!(degree_vector(&g).as_slice(), &[6.25, 6.25]);
    }

    #[test]
    fn comments_and_crlf_are_accepted() {
        let g = load("# header\r\n0\t1\t1.5\r\n\r\n# trailing\n").unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.weight(1, 0), Some(1.5));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match load("0\t1\n0 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(load("0\t1\tx"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(load("0\t1\t-1"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicates_and_self_loops_are_rejected() {
        assert!(matches!(load("0\t1\n1\t0"), Err(Error::DuplicateEdge { .. })));
        match load("x\ty\nz\tz") {
            Err(Error::SelfLoop { node }) => assert_eq!(node, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn directed_files_must_be_symmetric() {
        let g = load_edge_list("0\t1\n1\t0\n".as_bytes(), true).unwrap();
        assert_eq!(g.entry_count(), 2);
        assert!(matches!(
            load_edge_list("0\t1\n".as_bytes(), true),
            Err(Error::Asymmetric { .. })
        ));
        assert!(matches!(
            load_edge_list("0\t1\t2\n1\t0\t3\n".as_bytes(), true),
            Err(Error::Asymmetric { .. })
        ));
    }

    #[test]
    fn degree_of_unweighted_path() {
        let g = Graph::from_unweighted(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(degree_vector(&g).as_slice(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn node_declarations_keep_isolated_nodes() {
        let g = Graph::from_unweighted(5, &[(0, 3)]).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let back = load_edge_list(buf.as_slice(), false).unwrap();
        assert_eq!(back, g);

        let tokens = load("q\tp\np\tr").unwrap();
        let mut buf = Vec::new();
        write_edge_list(&tokens, &mut buf).unwrap();
        assert_eq!(load_edge_list(buf.as_slice(), false).unwrap(), tokens);
    }

    #[test]
    fn added_edges_and_nodes() {
        let g = Graph::from_unweighted(3, &[(0, 1)]).unwrap();
        let g2 = g.with_added_edges(&[(1, 2, 1.0)]).unwrap();
        assert_eq!(g2.edge_count(), 2);
        assert!(matches!(g.with_added_edges(&[(0, 1, 1.0)]), Err(Error::DuplicateEdge { .. })));
        assert!(matches!(g.with_added_edges(&[(0, 7, 1.0)]), Err(Error::UnknownNode(_))));
        let g3 = g.with_added_nodes(2, None).unwrap();
        assert_eq!(g3.node_count(), 5);
        assert_eq!(g3.edge_count(), 1);
    }

    #[test]
    fn edges_between_known_nodes() {
        let g = load("a\tb\nb\tc").unwrap();
        let edges = read_edges_between(&b"# new\na\tc\t0.5\n"[..], g.labels(), 3).unwrap();
        assert_eq!(edges, vec![(0, 2, 0.5)]);
        assert!(matches!(read_edges_between(&b"a\tz\n"[..], g.labels(), 3), Err(Error::UnknownNode(_))));
        assert!(read_edges_between(&b"a\tc\t-1\n"[..], g.labels(), 3).is_err());
    }

    #[test]
    fn hop_distances_from_two_sources() {
        let g = Graph::from_unweighted(6, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        assert_eq!(hop_distances(&g, &[0, 4]), vec![0, 1, 2, 1, 0, UNREACHABLE]);
    }

    #[test]
    fn transpose_and_acyclicity() {
        let dag = DirectedGraph::from_entries(3, vec![(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        assert!(dag.is_acyclic());
        let t = dag.transpose();
        assert_eq!(t.row(2), (&[1usize][..], &[2.0][..]));
        let cyclic = DirectedGraph::from_entries(2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(!cyclic.is_acyclic());
    }
}
