//! Synthetic inputs: Kronecker-power graphs and sampled explicit beliefs.

use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beliefs::{BeliefMatrix, SparseBeliefs};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeLabels};

/// Largest number of directed entries a generated graph may have.
pub const MAX_KRONECKER_ENTRIES: u64 = 1 << 28;

/// Symmetric 0/1 seed for Kronecker powers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedMatrix {
    rows: Vec<Vec<u8>>,
}

impl SeedMatrix {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::InvalidParameter(format!("seed matrix must be at least 2x2, got {m}x{m}")));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "seed matrix columns",
                    expected: m,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::InvalidParameter(format!("seed entry ({i},{j}) is {v}, expected 0 or 1")));
                }
                if rows[j][i] != v {
                    return Err(Error::Asymmetric {
                        src: i.to_string(),
                        dst: j.to_string(),
                    });
                }
            }
        }
        Ok(SeedMatrix { rows })
    }

    /// A center node linked to two leaves.
    pub fn star() -> Self {
        SeedMatrix {
            rows: vec![vec![0, 1, 1], vec![1, 0, 0], vec![1, 0, 0]],
        }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn nonzeros(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Reads whitespace-separated 0/1 rows; `#` starts a comment line.
    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<u8>().map_err(|_| Error::Parse {
                        line: i + 1,
                        message: format!("bad seed entry {tok:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        SeedMatrix::new(rows)
    }
}

#[derive(Debug, Clone)]
pub struct KroneckerGraph {
    pub graph: Graph,
    /// Nonzero entries of the product, self-loops included.
    pub entries_before: u64,
    pub self_loops_dropped: u64,
}

/// The `k`-fold Kronecker power of `seed`, with diagonal entries dropped.
pub fn kronecker_power(seed: &SeedMatrix, k: u32) -> Result<KroneckerGraph> {
    if k == 0 {
        return Err(Error::InvalidParameter("Kronecker power must be at least 1".into()));
    }
    let m = seed.size() as u64;
    let nz = seed.nonzeros();
    let overflow = |size: u64| Error::SizeLimit {
        size: usize::try_from(size).unwrap_or(usize::MAX),
        limit: MAX_KRONECKER_ENTRIES as usize,
    };
    let n = m.checked_pow(k).ok_or_else(|| overflow(u64::MAX))?;
    let entries_before = (nz.len() as u64).checked_pow(k).ok_or_else(|| overflow(u64::MAX))?;
    if entries_before > MAX_KRONECKER_ENTRIES || n > MAX_KRONECKER_ENTRIES {
        return Err(overflow(entries_before.max(n)));
    }
    if nz.is_empty() {
        return Ok(KroneckerGraph {
            graph: Graph::empty(n as usize),
            entries_before: 0,
            self_loops_dropped: 0,
        });
    }
    let mut entries = Vec::with_capacity(entries_before as usize);
    let mut digits = vec![0usize; k as usize];
    let mut loops = 0u64;
    loop {
        let (mut s, mut t) = (0usize, 0usize);
        for &d in &digits {
            let (i, j) = nz[d];
            s = s * m as usize + i;
            t = t * m as usize + j;
        }
        if s == t {
            loops += 1;
        } else {
            entries.push((s, t, 1.0));
        }
        let mut pos = digits.len();
        loop {
            if pos == 0 {
                let graph = Graph::from_entries(n as usize, entries, NodeLabels::Identity)?;
                return Ok(KroneckerGraph {
                    graph,
                    entries_before,
                    self_loops_dropped: loops,
                });
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < nz.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Named generator and seed; equal specs give identical outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub algorithm: String,
    pub seed: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        RngSpec {
            algorithm: "chacha8".to_string(),
            seed,
        }
    }

    pub fn rng(&self) -> Result<ChaCha8Rng> {
        if self.algorithm != "chacha8" {
            return Err(Error::InvalidParameter(format!("unsupported rng algorithm {:?}", self.algorithm)));
        }
        Ok(ChaCha8Rng::seed_from_u64(self.seed))
    }
}

/// How `fraction·n` becomes a node count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    /// Nearest integer, but at least one node for a positive fraction.
    #[default]
    Nearest,
    Ceil,
}

impl std::str::FromStr for Rounding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Rounding::Nearest),
            "ceil" => Ok(Rounding::Ceil),
            _ => Err(Error::InvalidParameter(format!("unknown rounding {s:?}"))),
        }
    }
}

pub fn explicit_count(n: usize, fraction: f64, rounding: Rounding) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("fraction {fraction} is outside [0, 1]")));
    }
    if fraction == 0.0 || n == 0 {
        return Ok(0);
    }
    let x = fraction * n as f64;
    let c = match rounding {
        Rounding::Nearest => x.round().max(1.0),
        // Forgive products like 0.07·100 that land a hair above an integer.
        Rounding::Ceil => (x - 1e-9 * x).ceil(),
    };
    Ok((c as usize).min(n))
}

#[derive(Debug, Clone)]
pub struct SampledBeliefs {
    pub beliefs: BeliefMatrix,
    /// Chosen nodes in ascending order with their rows in hundredths.
    pub hundredths: Vec<(usize, Vec<i32>)>,
}

impl SampledBeliefs {
    pub fn count(&self) -> usize {
        self.hundredths.len()
    }

    pub fn to_sparse(&self) -> SparseBeliefs {
        let mut out = SparseBeliefs::new(self.beliefs.k());
        for (v, _) in &self.hundredths {
            out.insert(*v, self.beliefs.row(*v).to_vec()).expect("row has k entries");
        }
        out
    }
}

/// `k − 1` grid values in `{−0.10, …, 0.10}` and their negated sum.
///
/// All-zero rows are redrawn so every chosen node carries a label.
fn sample_row<R: Rng>(k: usize, rng: &mut R) -> (Vec<i32>, Vec<f64>) {
    loop {
        let ints: Vec<i32> = (0..k - 1).map(|_| rng.random_range(-10..=10)).collect();
        if ints.iter().all(|&v| v == 0) {
            continue;
        }
        let mut values: Vec<f64> = ints.iter().map(|&v| f64::from(v) / 100.0).collect();
        let sum: f64 = values.iter().sum();
        values.push(-sum);
        let mut full = ints.clone();
        full.push(-ints.iter().sum::<i32>());
        return (full, values);
    }
}

fn sample_rows<R: Rng>(n: usize, k: usize, nodes: Vec<usize>, rng: &mut R) -> SampledBeliefs {
    let mut beliefs = BeliefMatrix::zeros(n, k);
    let mut hundredths = Vec::with_capacity(nodes.len());
    for v in nodes {
        let (ints, values) = sample_row(k, rng);
        beliefs.row_mut(v).copy_from_slice(&values);
        hundredths.push((v, ints));
    }
    SampledBeliefs { beliefs, hundredths }
}

/// Picks `fraction` of the `n` nodes uniformly and gives each a random
/// centered belief row.
pub fn sample_explicit_beliefs<R: Rng>(n: usize, fraction: f64, k: usize, rng: &mut R, rounding: Rounding) -> Result<SampledBeliefs> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 classes, got {k}")));
    }
    let count = explicit_count(n, fraction, rounding)?;
    let mut nodes = sample(rng, n, count).into_vec();
    nodes.sort_unstable();
    Ok(sample_rows(n, k, nodes, rng))
}

/// Like [`sample_explicit_beliefs`], restricted to nodes that are not yet
/// explicit in `existing`; the count is still a fraction of all nodes.
pub fn sample_belief_delta<R: Rng>(existing: &BeliefMatrix, fraction: f64, rng: &mut R, rounding: Rounding) -> Result<SampledBeliefs> {
    let (n, k) = (existing.n(), existing.k());
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 classes, got {k}")));
    }
    let free: Vec<usize> = existing
        .explicit_mask()
        .iter()
        .enumerate()
        .filter_map(|(v, &e)| (!e).then_some(v))
        .collect();
    let count = explicit_count(n, fraction, rounding)?;
    if count > free.len() {
        return Err(Error::InvalidParameter(format!(
            "asked for {count} new explicit nodes but only {} are unlabeled",
            free.len()
        )));
    }
    let mut nodes: Vec<usize> = sample(rng, free.len(), count).into_iter().map(|i| free[i]).collect();
    nodes.sort_unstable();
    Ok(sample_rows(n, k, nodes, rng))
}

/// Description of a generated data set, one JSON object per line.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationSummary {
    pub seed_matrix: SeedMatrix,
    pub power: u32,
    pub nodes: usize,
    pub entries_before: u64,
    pub entries_after: usize,
    pub self_loops_dropped: u64,
    pub classes: usize,
    pub fraction: f64,
    pub rounding: Rounding,
    pub explicit: usize,
    pub rng: RngSpec,
}

impl GenerationSummary {
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> Result<()> {
        let lines = [
            serde_json::json!({ "seed_matrix": self.seed_matrix.rows(), "power": self.power }),
            serde_json::json!({
                "nodes": self.nodes,
                "entries_before": self.entries_before,
                "entries_after": self.entries_after,
                "self_loops_dropped": self.self_loops_dropped,
            }),
            serde_json::json!({
                "classes": self.classes,
                "fraction": self.fraction,
                "rounding": self.rounding,
                "explicit": self.explicit,
            }),
            serde_json::json!({ "rng": self.rng }),
        ];
        for line in lines {
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Adjacency;
    use proptest::prelude::*;

    #[test]
    fn star_powers_follow_the_counts() {
        let g = kronecker_power(&SeedMatrix::star(), 5).unwrap();
        assert_eq!(g.graph.node_count(), 243);
        assert_eq!(g.entries_before, 1024);
        assert_eq!(g.self_loops_dropped, 0);
        assert_eq!(g.graph.entry_count(), 1024);
        for k in 1..=7u32 {
            let g = kronecker_power(&SeedMatrix::star(), k).unwrap();
            assert_eq!(g.graph.node_count(), 3usize.pow(k));
            assert_eq!(g.graph.entry_count(), 4usize.pow(k));
        }
    }

    #[test]
    fn first_power_is_the_seed() {
        let seed = SeedMatrix::new(vec![vec![1, 1, 0], vec![1, 0, 1], vec![0, 1, 0]]).unwrap();
        let g = kronecker_power(&seed, 1).unwrap();
        assert_eq!(g.entries_before, 5);
        assert_eq!(g.self_loops_dropped, 1);
        let edges: Vec<_> = g.graph.edges().map(|(s, t, _)| (s, t)).collect();
        assert_eq!(edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn single_edge_squared() {
        let seed = SeedMatrix::new(vec![vec![0, 1], vec![1, 0]]).unwrap();
        let g = kronecker_power(&seed, 2).unwrap();
        assert_eq!(g.graph.node_count(), 4);
        assert_eq!(g.graph.entry_count(), 4);
        let edges: Vec<_> = g.graph.edges().map(|(s, t, _)| (s, t)).collect();
        assert_eq!(edges, vec![(0, 3), (1, 2)]);
    }

    #[test]
    fn seed_validation_and_limits() {
        assert!(SeedMatrix::new(vec![vec![0]]).is_err());
        assert!(SeedMatrix::new(vec![vec![0, 1], vec![0, 0]]).is_err());
        assert!(SeedMatrix::new(vec![vec![0, 2], vec![2, 0]]).is_err());
        assert!(kronecker_power(&SeedMatrix::star(), 0).is_err());
        assert!(matches!(kronecker_power(&SeedMatrix::star(), 40), Err(Error::SizeLimit { .. })));
        let read = SeedMatrix::read(&b"# star\n0 1 1\n1 0 0\n1 0 0\n"[..]).unwrap();
        assert_eq!(read, SeedMatrix::star());
    }

    #[test]
    fn explicit_counts() {
        assert_eq!(explicit_count(243, 0.05, Rounding::Nearest).unwrap(), 12);
        assert_eq!(explicit_count(729, 0.05, Rounding::Nearest).unwrap(), 36);
        assert_eq!(explicit_count(243, 0.001, Rounding::Nearest).unwrap(), 1);
        assert_eq!(explicit_count(2187, 0.001, Rounding::Ceil).unwrap(), 3);
        assert_eq!(explicit_count(6561, 0.001, Rounding::Ceil).unwrap(), 7);
        assert_eq!(explicit_count(100, 0.07, Rounding::Ceil).unwrap(), 7);
        assert_eq!(explicit_count(243, 0.05, Rounding::Ceil).unwrap(), 13);
        assert_eq!(explicit_count(1, 1.0, Rounding::Nearest).unwrap(), 1);
        assert_eq!(explicit_count(50, 0.0, Rounding::Nearest).unwrap(), 0);
        assert!(explicit_count(50, 1.5, Rounding::Nearest).is_err());
        assert!(explicit_count(50, -0.1, Rounding::Nearest).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = RngSpec::new(42);
        let a = sample_explicit_beliefs(243, 0.05, 3, &mut spec.rng().unwrap(), Rounding::Nearest).unwrap();
        let b = sample_explicit_beliefs(243, 0.05, 3, &mut spec.rng().unwrap(), Rounding::Nearest).unwrap();
        assert_eq!(a.beliefs, b.beliefs);
        assert_eq!(a.count(), 12);
        assert_eq!(a.beliefs.explicit_nodes().len(), 12);
        let one = sample_explicit_beliefs(1, 1.0, 3, &mut spec.rng().unwrap(), Rounding::Nearest).unwrap();
        assert_eq!(one.beliefs.row(0).iter().sum::<f64>(), 0.0);
        assert!(RngSpec { algorithm: "pcg".into(), seed: 1 }.rng().is_err());
    }

    #[test]
    fn delta_avoids_explicit_nodes() {
        let mut rng = RngSpec::new(7).rng().unwrap();
        let base = sample_explicit_beliefs(100, 0.5, 3, &mut rng, Rounding::Nearest).unwrap();
        let delta = sample_belief_delta(&base.beliefs, 0.2, &mut rng, Rounding::Nearest).unwrap();
        assert_eq!(delta.count(), 20);
        let explicit = base.beliefs.explicit_mask();
        assert!(delta.hundredths.iter().all(|(v, _)| !explicit[*v]));
        assert!(sample_belief_delta(&base.beliefs, 0.6, &mut rng, Rounding::Nearest).is_err());
    }

    #[test]
    fn summary_lines_are_json() {
        let summary = GenerationSummary {
            seed_matrix: SeedMatrix::star(),
            power: 2,
            nodes: 9,
            entries_before: 16,
            entries_after: 16,
            self_loops_dropped: 0,
            classes: 3,
            fraction: 0.05,
            rounding: Rounding::Nearest,
            explicit: 1,
            rng: RngSpec::new(1),
        };
        let mut out = Vec::new();
        summary.write_json_lines(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        for line in text.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }

    proptest! {
        #[test]
        fn sampled_rows_sum_to_zero(seed in any::<u64>(), k in 2usize..6, n in 1usize..200, fraction in 0.0f64..=1.0) {
            let mut rng = RngSpec::new(seed).rng().unwrap();
            let s = sample_explicit_beliefs(n, fraction, k, &mut rng, Rounding::Nearest).unwrap();
            for (v, ints) in &s.hundredths {
                let row = s.beliefs.row(*v);
                prop_assert_eq!(row.iter().sum::<f64>(), 0.0);
                prop_assert_eq!(ints.iter().sum::<i32>(), 0);
                prop_assert!(ints[..k - 1].iter().all(|x| (-10..=10).contains(x)));
                for (x, i) in row.iter().zip(ints) {
                    prop_assert!((x * 100.0 - f64::from(*i)).abs() < 1e-9);
                }
            }
            let mut nodes: Vec<usize> = s.hundredths.iter().map(|(v, _)| *v).collect();
            nodes.dedup();
            prop_assert_eq!(nodes.len(), s.count());
        }

        #[test]
        fn powers_are_symmetric_and_loop_free(
            bits in prop::collection::vec(0u8..=1, 6),
            k in 1u32..4,
        ) {
            let rows = vec![
                vec![bits[0], bits[1], bits[2]],
                vec![bits[1], bits[3], bits[4]],
                vec![bits[2], bits[4], bits[5]],
            ];
            let seed = SeedMatrix::new(rows).unwrap();
            let nnz = seed.nonzeros().len() as u64;
            let g = kronecker_power(&seed, k).unwrap();
            prop_assert_eq!(g.graph.node_count(), 3usize.pow(k));
            prop_assert_eq!(g.entries_before, nnz.pow(k));
            prop_assert_eq!(g.entries_before, g.graph.entry_count() as u64 + g.self_loops_dropped);
        }
    }
}
