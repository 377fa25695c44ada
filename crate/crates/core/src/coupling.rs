//! Coupling-matrix algebra for k classes.
//!
//! A [`CouplingMatrix`] holds the symmetric, doubly stochastic `H`. Inference
//! works with the residual `Ĥ = ε·Ĥo` where `Ĥo = H - 1/k`, kept in
//! [`ResidualCoupling`] so that the scale is a run parameter rather than part
//! of the stored matrix.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    h: DMatrix<f64>,
}

impl CouplingMatrix {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::DimensionMismatch {
                what: "coupling matrix columns",
                expected: h.nrows(),
                found: h.ncols(),
            });
        }
        if h.nrows() == 0 {
            return Err(Error::InvalidParameter("coupling matrix needs at least one class".into()));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("coupling matrix has non-finite entries".into()));
        }
        Ok(CouplingMatrix { h })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let k = rows.len();
        for row in rows {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "coupling matrix row",
                    expected: k,
                    found: row.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }

    /// The matrix with every entry `1/k`.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(k, k, 1.0 / k as f64))
    }

    pub fn k(&self) -> usize {
        self.h.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Reads `k` on the first line followed by `k` rows of `k` numbers.
    pub fn read<R: BufRead>(source: R) -> Result<Self> {
        let mut lines = source
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .filter(|r| match r {
                Ok((_, l)) => !l.trim().is_empty() && !l.trim_start().starts_with('#'),
                Err(_) => true,
            });
        let (line_no, header) = lines.next().transpose()?.ok_or(Error::Parse {
            line: 1,
            message: "missing class count".into(),
        })?;
        let k: usize = header.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad class count {:?}", header.trim()),
        })?;
        if k == 0 {
            return Err(Error::Parse {
                line: line_no,
                message: "class count must be positive".into(),
            });
        }
        let mut values = Vec::with_capacity(k * k);
        for row in 0..k {
            let (line_no, text) = lines.next().transpose()?.ok_or(Error::Parse {
                line: line_no + row + 1,
                message: format!("expected {k} matrix rows, found {row}"),
            })?;
            let parsed: std::result::Result<Vec<f64>, _> = text.split_whitespace().map(str::parse::<f64>).collect();
            let parsed = parsed.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if parsed.len() != k {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {k} values, found {}", parsed.len()),
                });
            }
            values.extend(parsed);
        }
        if let Some((line_no, _)) = lines.next().transpose()? {
            return Err(Error::Parse {
                line: line_no,
                message: "trailing content after matrix".into(),
            });
        }
        Self::new(DMatrix::from_row_slice(k, k, &values))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.k())?;
        for i in 0..self.k() {
            let row: Vec<String> = (0..self.k()).map(|j| self.h[(i, j)].to_string()).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Residual coupling `Ĥ = epsilon · base`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCoupling {
    base: DMatrix<f64>,
    epsilon: f64,
}

impl ResidualCoupling {
    pub fn new(base: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        if base.nrows() != base.ncols() {
            return Err(Error::DimensionMismatch {
                what: "residual coupling columns",
                expected: base.nrows(),
                found: base.ncols(),
            });
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon {epsilon} must be positive")));
        }
        Ok(ResidualCoupling { base, epsilon })
    }

    pub fn k(&self) -> usize {
        self.base.nrows()
    }

    pub fn base(&self) -> &DMatrix<f64> {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.base.clone(), epsilon)
    }

    /// The effective matrix `ε·Ĥo`.
    pub fn scaled(&self) -> DMatrix<f64> {
        &self.base * self.epsilon
    }

    pub fn is_zero(&self) -> bool {
        self.base.iter().all(|&v| v == 0.0)
    }
}

impl From<&CouplingMatrix> for ResidualCoupling {
    fn from(h: &CouplingMatrix) -> Self {
        center(h)
    }
}

/// `Ĥo(i,j) = H(i,j) - 1/k` with `ε = 1`.
pub fn center(h: &CouplingMatrix) -> ResidualCoupling {
    let shift = 1.0 / h.k() as f64;
    ResidualCoupling {
        base: h.h.map(|v| v - shift),
        epsilon: 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { row: usize, sum: f64 },
    ColumnSum { column: usize, sum: f64 },
    Asymmetry { row: usize, column: usize },
    OutOfRange { row: usize, column: usize, value: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Violation::ColumnSum { column, sum } => write!(f, "column {column} sums to {sum}"),
            Violation::Asymmetry { row, column } => write!(f, "entries ({row},{column}) and ({column},{row}) differ"),
            Violation::OutOfRange { row, column, value } => write!(f, "entry ({row},{column}) = {value} outside [0,1]"),
        }
    }
}

/// Checks symmetry, double stochasticity and the `[0,1]` range. An empty list
/// means the matrix is valid.
pub fn validate(h: &CouplingMatrix, tol: f64) -> Vec<Violation> {
    let m = &h.h;
    let k = h.k();
    let mut out = Vec::new();
    for i in 0..k {
        let sum = m.row(i).sum();
        if (sum - 1.0).abs() > tol {
            out.push(Violation::RowSum { row: i, sum });
        }
    }
    for j in 0..k {
        let sum = m.column(j).sum();
        if (sum - 1.0).abs() > tol {
            out.push(Violation::ColumnSum { column: j, sum });
        }
    }
    for i in 0..k {
        for j in i + 1..k {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                out.push(Violation::Asymmetry { row: i, column: j });
            }
        }
    }
    for i in 0..k {
        for j in 0..k {
            let v = m[(i, j)];
            if v < -tol || v > 1.0 + tol {
                out.push(Violation::OutOfRange { row: i, column: j, value: v });
            }
        }
    }
    out
}

/// `(ε·Ĥo)²`.
pub fn residual_square(r: &ResidualCoupling) -> DMatrix<f64> {
    let h = r.scaled();
    &h * &h
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct NormReport {
    pub frobenius: f64,
    pub induced_one: f64,
    pub induced_inf: f64,
    pub min_norm: f64,
    pub spectral_radius: f64,
}

pub fn induced_one(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max)
}

pub fn induced_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max)
}

/// Largest eigenvalue modulus of a small dense matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let scale = m.amax();
    let symmetric = m
        .iter()
        .zip(m.transpose().iter())
        .all(|(a, b)| (a - b).abs() <= 1e-14 * scale.max(1.0));
    if symmetric {
        let sym = (m + m.transpose()) * 0.5;
        sym.symmetric_eigenvalues().amax()
    } else {
        m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub fn norms_and_radius(m: &DMatrix<f64>) -> Result<NormReport> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            what: "square matrix columns",
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let frobenius = m.norm();
    let induced_one = induced_one(m);
    let induced_inf = induced_inf(m);
    Ok(NormReport {
        frobenius,
        induced_one,
        induced_inf,
        min_norm: frobenius.min(induced_one).min(induced_inf),
        spectral_radius: spectral_radius(m),
    })
}

/// The constant `c(H)` used by Mooij and Kappen's sufficient condition for
/// loopy BP:
///
/// `max tanh(¼·ln(H(c1,d1)·H(c2,d2) / (H(c2,d1)·H(c1,d2))))`
///
/// over class pairs `c1 ≠ c2`, `d1 ≠ d2`. Undefined when `H` has a zero entry.
pub fn mooij_constant(h: &CouplingMatrix) -> Result<f64> {
    let m = &h.h;
    if let Some((idx, v)) = m.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        let k = h.k();
        return Err(Error::Domain(format!(
            "c(H) needs strictly positive entries, but H({},{}) = {v}",
            idx % k,
            idx / k
        )));
    }
    let k = h.k();
    let mut best = 0.0f64;
    for c1 in 0..k {
        for c2 in 0..k {
            if c1 == c2 {
                continue;
            }
            for d1 in 0..k {
                for d2 in 0..k {
                    if d1 == d2 {
                        continue;
                    }
                    let ratio = (m[(c1, d1)] * m[(c2, d2)]) / (m[(c2, d1)] * m[(c1, d2)]);
                    best = best.max((0.25 * ratio.ln()).tanh());
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fraud() -> CouplingMatrix {
        CouplingMatrix::from_rows(&[&[0.6, 0.3, 0.1], &[0.3, 0.0, 0.7], &[0.1, 0.7, 0.2]]).unwrap()
    }

    fn homophily() -> CouplingMatrix {
        CouplingMatrix::from_rows(&[&[0.8, 0.2], &[0.2, 0.8]]).unwrap()
    }

    #[test]
    fn centering_fraud_matrix() {
        let r = center(&fraud());
        let expected = [
            [0.2667, -0.0333, -0.2333],
            [-0.0333, -0.3333, 0.3667],
            [-0.2333, 0.3667, -0.1333],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.base()[(i, j)] - expected[i][j]).abs() < 1e-4);
            }
        }
        assert_eq!(r.epsilon(), 1.0);
    }

    #[test]
    fn centering_simple_cases() {
        assert!(center(&CouplingMatrix::uniform(4).unwrap()).is_zero());
        let r = center(&homophily());
        assert!((r.base() - DMatrix::from_row_slice(2, 2, &[0.3, -0.3, -0.3, 0.3])).amax() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(validate(&fraud(), 1e-9).is_empty());
        assert!(validate(&CouplingMatrix::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap(), 1e-9).is_empty());
        let bad = CouplingMatrix::from_rows(&[&[0.9, 0.2], &[0.1, 0.8]]).unwrap();
        let v = validate(&bad, 1e-9);
        assert!(v.iter().any(|x| matches!(x, Violation::RowSum { row: 0, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::Asymmetry { row: 0, column: 1 })));
    }

    #[test]
    fn squares() {
        let zero = ResidualCoupling::new(DMatrix::zeros(3, 3), 1.0).unwrap();
        assert_eq!(residual_square(&zero), DMatrix::zeros(3, 3));

        let h = 0.07;
        let r = ResidualCoupling::new(DMatrix::from_row_slice(2, 2, &[h, -h, -h, h]), 1.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[h * h, -h * h, -h * h, h * h]) * 2.0;
        assert!((residual_square(&r) - expected).amax() < 1e-15);

        assert!((residual_square(&center(&fraud()))[(0, 0)] - 0.1267).abs() < 1e-4);
    }

    #[test]
    fn norm_fixtures() {
        let f = norms_and_radius(center(&fraud()).base()).unwrap();
        assert!((f.spectral_radius - 0.629).abs() < 1e-3);

        let id = norms_and_radius(&DMatrix::identity(2, 2)).unwrap();
        assert!((id.spectral_radius - 1.0).abs() < 1e-15);
        assert_eq!(id.induced_one, 1.0);
        assert_eq!(id.induced_inf, 1.0);
        assert!((id.frobenius - 2f64.sqrt()).abs() < 1e-15);

        let m = DMatrix::from_row_slice(2, 2, &[0.3, -0.3, -0.3, 0.3]);
        let r = norms_and_radius(&m).unwrap();
        assert!((r.spectral_radius - 0.6).abs() < 1e-12);
        assert!((r.induced_one - 0.6).abs() < 1e-12);
        assert!((r.frobenius - 0.6).abs() < 1e-12);

        assert!(norms_and_radius(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn nonsymmetric_radius() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 4.0, 1.0, 0.0]);
        assert!((spectral_radius(&m) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mooij_fixtures() {
        assert_eq!(mooij_constant(&CouplingMatrix::uniform(3).unwrap()).unwrap(), 0.0);
        assert!((mooij_constant(&homophily()).unwrap() - 0.6).abs() < 1e-12);
        assert!(matches!(mooij_constant(&fraud()), Err(Error::Domain(_))));
    }

    #[test]
    fn coupling_file_round_trip() {
        let mut buf = Vec::new();
        fraud().write(&mut buf).unwrap();
        assert_eq!(CouplingMatrix::read(buf.as_slice()).unwrap(), fraud());
        assert!(matches!(CouplingMatrix::read("2\n0.5 0.5\n".as_bytes()), Err(Error::Parse { .. })));
        assert!(matches!(CouplingMatrix::read("2\n0.5 x\n0.5 0.5".as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    fn residual_strategy() -> impl Strategy<Value = DMatrix<f64>> {
        (2usize..6).prop_flat_map(|k| {
            prop::collection::vec(-1.0f64..1.0, k * k).prop_map(move |v| {
                let m = DMatrix::from_row_slice(k, k, &v);
                let sym = (&m + m.transpose()) * 0.5;
                // Project onto zero row and column sums.
                let j = DMatrix::from_element(k, k, 1.0 / k as f64);
                let p = DMatrix::identity(k, k) - j;
                &p * sym * &p
            })
        })
    }

    fn mooij_input() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
        (2usize..5).prop_flat_map(|k| {
            (
                prop::collection::vec(0.05f64..1.0, k * k),
                Just((0..k).collect::<Vec<_>>()).prop_shuffle(),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn radius_is_below_every_norm(m in residual_strategy()) {
            let r = norms_and_radius(&m).unwrap();
            prop_assert!(r.spectral_radius <= r.frobenius + 1e-12);
            prop_assert!(r.spectral_radius <= r.induced_one + 1e-12);
            prop_assert!(r.spectral_radius <= r.induced_inf + 1e-12);
            prop_assert!(r.min_norm <= r.frobenius && r.min_norm <= r.induced_one && r.min_norm <= r.induced_inf);
        }

        #[test]
        fn center_then_shift_is_identity(v in prop::collection::vec(0.0f64..1.0, 9)) {
            let h = CouplingMatrix::new(DMatrix::from_row_slice(3, 3, &v)).unwrap();
            let back = center(&h).base().map(|x| x + 1.0 / 3.0);
            prop_assert!((back - h.matrix()).amax() <= 1e-15);
        }

        #[test]
        fn square_scales_quadratically(m in residual_strategy(), eps in 1e-4f64..10.0) {
            let at_one = residual_square(&ResidualCoupling::new(m.clone(), 1.0).unwrap());
            let at_eps = residual_square(&ResidualCoupling::new(m, eps).unwrap());
            prop_assert!((at_eps - at_one * (eps * eps)).amax() <= 1e-12 * (1.0 + eps * eps));
        }

        #[test]
        fn mooij_is_permutation_invariant((v, perm) in mooij_input()) {
            let k = perm.len();
            let m = DMatrix::from_row_slice(k, k, &v);
            let sym = (&m + m.transpose()) * 0.5;
            let permuted = DMatrix::from_fn(k, k, |i, j| sym[(perm[i], perm[j])]);
            let a = mooij_constant(&CouplingMatrix::new(sym).unwrap()).unwrap();
            let b = mooij_constant(&CouplingMatrix::new(permuted).unwrap()).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
