//! Per-node class beliefs and their TSV form.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::graph::NodeLabels;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeliefMode {
    /// Rows are probability distributions.
    Normalized,
    /// Rows are deviations from `1/k` and sum to zero.
    Residual,
}

/// Dense `n × k` belief matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
    mode: BeliefMode,
}

impl BeliefMatrix {
    pub fn zeros(n: usize, k: usize) -> Self {
        BeliefMatrix {
            n,
            k,
            data: vec![0.0; n * k],
            mode: BeliefMode::Residual,
        }
    }

    pub fn uniform(n: usize, k: usize) -> Self {
        BeliefMatrix {
            n,
            k,
            data: vec![1.0 / k as f64; n * k],
            mode: BeliefMode::Normalized,
        }
    }

    pub fn from_vec(n: usize, k: usize, data: Vec<f64>, mode: BeliefMode) -> Result<Self> {
        if data.len() != n * k {
            return Err(Error::DimensionMismatch {
                what: "belief data",
                expected: n * k,
                found: data.len(),
            });
        }
        Ok(BeliefMatrix { n, k, data, mode })
    }

    pub fn from_rows(rows: &[Vec<f64>], mode: BeliefMode) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "belief row",
                    expected: k,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(BeliefMatrix {
            n: rows.len(),
            k,
            data,
            mode,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> BeliefMode {
        self.mode
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.k..(s + 1) * self.k]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.k..(s + 1) * self.k]
    }

    pub fn get(&self, s: usize, i: usize) -> f64 {
        self.data[s * self.k + i]
    }

    pub fn set(&mut self, s: usize, i: usize, v: f64) {
        self.data[s * self.k + i] = v;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.k.max(1)).take(self.n)
    }

    fn shifted(&self, shift: f64, mode: BeliefMode) -> Self {
        BeliefMatrix {
            n: self.n,
            k: self.k,
            data: self.data.iter().map(|v| v + shift).collect(),
            mode,
        }
    }

    /// Adds `1/k` to a residual matrix; no-op on a normalized one.
    pub fn to_normalized(&self) -> Self {
        match self.mode {
            BeliefMode::Normalized => self.clone(),
            BeliefMode::Residual => self.shifted(1.0 / self.k as f64, BeliefMode::Normalized),
        }
    }

    /// Subtracts `1/k` from a normalized matrix; no-op on a residual one.
    pub fn to_residual(&self) -> Self {
        match self.mode {
            BeliefMode::Residual => self.clone(),
            BeliefMode::Normalized => self.shifted(-1.0 / self.k as f64, BeliefMode::Residual),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        assert_eq!(self.mode, BeliefMode::Residual, "only residual beliefs scale");
        BeliefMatrix {
            n: self.n,
            k: self.k,
            data: self.data.iter().map(|v| v * factor).collect(),
            mode: self.mode,
        }
    }

    /// True for rows that carry information: nonzero residual rows, or
    /// normalized rows that differ from the uniform distribution.
    pub fn explicit_mask(&self) -> Vec<bool> {
        let base = match self.mode {
            BeliefMode::Residual => 0.0,
            BeliefMode::Normalized => 1.0 / self.k as f64,
        };
        self.rows().map(|r| r.iter().any(|&v| v != base)).collect()
    }

    pub fn explicit_nodes(&self) -> Vec<usize> {
        self.explicit_mask()
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &BeliefMatrix) -> f64 {
        assert_eq!((self.n, self.k), (other.n, other.k));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest per-row change relative to the row's magnitude in `self`.
    ///
    /// Rows that are zero in both matrices contribute nothing; a row that
    /// became zero counts as a full change.
    pub fn max_relative_row_change(&self, previous: &BeliefMatrix) -> f64 {
        assert_eq!((self.n, self.k), (previous.n, previous.k));
        let mut worst = 0.0f64;
        for (now, before) in self.rows().zip(previous.rows()) {
            let scale = now.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = now.iter().zip(before).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if diff == 0.0 {
                continue;
            }
            worst = worst.max(if scale > 0.0 { diff / scale } else { 1.0 });
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Checks the row-sum invariant of the current mode.
    pub fn check_rows(&self, tol: f64) -> Result<()> {
        let target = match self.mode {
            BeliefMode::Residual => 0.0,
            BeliefMode::Normalized => 1.0,
        };
        for (s, row) in self.rows().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - target).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "belief row {s} sums to {sum}, expected {target}"
                )));
            }
            if self.mode == BeliefMode::Normalized && row.iter().any(|&v| v < -tol) {
                return Err(Error::InvalidParameter(format!("belief row {s} has a negative entry")));
            }
        }
        Ok(())
    }
}

/// Sparse residual rows keyed by node, used for explicit beliefs and deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBeliefs {
    k: usize,
    rows: BTreeMap<usize, Vec<f64>>,
}

impl SparseBeliefs {
    pub fn new(k: usize) -> Self {
        SparseBeliefs {
            k,
            rows: BTreeMap::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn insert(&mut self, node: usize, row: Vec<f64>) -> Result<()> {
        if row.len() != self.k {
            return Err(Error::DimensionMismatch {
                what: "belief row",
                expected: self.k,
                found: row.len(),
            });
        }
        self.rows.insert(node, row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows in ascending node order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&s, r)| (s, r.as_slice()))
    }

    pub fn to_dense(&self, n: usize) -> Result<BeliefMatrix> {
        let mut b = BeliefMatrix::zeros(n, self.k);
        for (s, row) in self.iter() {
            if s >= n {
                return Err(Error::UnknownNode(s.to_string()));
            }
            b.row_mut(s).copy_from_slice(row);
        }
        Ok(b)
    }
}

/// Reads `node TAB class TAB value` lines. Missing entries are zero.
pub fn read_sparse_beliefs<R: BufRead>(source: R, k: usize, labels: &NodeLabels, n: usize) -> Result<SparseBeliefs> {
    let mut out = SparseBeliefs::new(k);
    let mut seen = std::collections::HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected `node<TAB>class<TAB>value`, got {line:?}"),
            });
        }
        let node = labels
            .resolve(fields[0], n)
            .ok_or_else(|| Error::UnknownNode(fields[0].to_string()))?;
        let class: usize = fields[1].parse().ok().filter(|&c| c < k).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("class {:?} is not in 0..{k}", fields[1]),
        })?;
        let value: f64 = fields[2].parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("bad belief value {:?}", fields[2]),
        })?;
        if !seen.insert((node, class)) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate entry for node {} class {class}", fields[0]),
            });
        }
        out.rows.entry(node).or_insert_with(|| vec![0.0; k])[class] = value;
    }
    Ok(out)
}

/// Reads a full belief matrix.
///
/// In residual mode absent entries are zero. In normalized mode a node that
/// appears must list all `k` classes, and absent nodes get the uniform row.
pub fn read_beliefs<R: BufRead>(
    source: R,
    n: usize,
    k: usize,
    labels: &NodeLabels,
    mode: BeliefMode,
) -> Result<BeliefMatrix> {
    match mode {
        BeliefMode::Residual => read_sparse_beliefs(source, k, labels, n)?.to_dense(n),
        BeliefMode::Normalized => {
            let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
            let mut text = String::new();
            let mut reader = source;
            reader.read_to_string(&mut text)?;
            let sparse = read_sparse_beliefs(text.as_bytes(), k, labels, n)?;
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                if let Some(node) = line.split('\t').next().and_then(|id| labels.resolve(id.trim(), n)) {
                    *seen.entry(node).or_default() += 1;
                }
            }
            if let Some((&node, _)) = seen.iter().find(|(_, &c)| c != k) {
                return Err(Error::InvalidParameter(format!(
                    "normalized beliefs for node {} do not list all {k} classes",
                    labels.name(node)
                )));
            }
            let mut b = BeliefMatrix::uniform(n, k);
            for (s, row) in sparse.iter() {
                b.row_mut(s).copy_from_slice(row);
            }
            Ok(b)
        }
    }
}

/// Writes one line per `(node, class)`. With `skip_zero_rows`, residual rows
/// that are entirely zero are omitted.
pub fn write_beliefs<W: Write>(b: &BeliefMatrix, labels: &NodeLabels, skip_zero_rows: bool, mut out: W) -> Result<()> {
    for (s, row) in b.rows().enumerate() {
        if skip_zero_rows && row.iter().all(|&v| v == 0.0) {
            continue;
        }
        let name = labels.name(s);
        for (i, v) in row.iter().enumerate() {
            writeln!(out, "{name}\t{i}\t{v}")?;
        }
    }
    Ok(())
}

pub fn write_sparse_beliefs<W: Write>(b: &SparseBeliefs, labels: &NodeLabels, mut out: W) -> Result<()> {
    for (s, row) in b.iter() {
        let name = labels.name(s);
        for (i, v) in row.iter().enumerate() {
            writeln!(out, "{name}\t{i}\t{v}")?;
        }
    }
    Ok(())
}
