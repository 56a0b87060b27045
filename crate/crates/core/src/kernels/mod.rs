//! Exact transition matrices and the set-localization transforms.
//!
//! Every kernel is a dense row-stochastic [`StochasticMatrix`] whose rows and
//! columns follow the canonical enumeration order of the originating space.
//! A CSR view of the nonzero entries is built on first use and drives the
//! heat-kernel propagation.

mod build;
mod transforms;

use std::io::{BufRead, Write};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg;
use crate::statespace::StationaryTable;

pub use build::{
    build_chain, build_kernel, build_labeled_kernel, build_shuffle_kernel, BuiltChain, ChainSpec,
    Space, Variant, DEFAULT_WORK_CAP,
};
pub use transforms::{additive_reversibilization, collapse, induce, modify, restrict, time_reversal};

/// Row-sum tolerance accepted at construction.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Detailed-balance tolerance.
pub const REVERSIBILITY_TOL: f64 = 1e-12;

/// Compressed rows of the nonzero entries.
#[derive(Debug, Clone)]
pub struct SparseRows {
    pub offsets: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl SparseRows {
    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }
}

#[derive(Debug, Clone)]
pub struct StochasticMatrix {
    n: usize,
    data: Vec<f64>,
    sparse: OnceLock<SparseRows>,
}

impl PartialEq for StochasticMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.data == other.data
    }
}

impl StochasticMatrix {
    pub fn from_dense(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        if n == 0 {
            return Err(Error::EmptySet);
        }
        for i in 0..n {
            let row = &data[i * n..(i + 1) * n];
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self {
            n,
            data,
            sparse: OnceLock::new(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            n,
            data,
            sparse: OnceLock::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn sparse(&self) -> &SparseRows {
        self.sparse.get_or_init(|| {
            let mut offsets = Vec::with_capacity(self.n + 1);
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            offsets.push(0);
            for i in 0..self.n {
                for (j, &v) in self.row(i).iter().enumerate() {
                    if v != 0.0 {
                        cols.push(j as u32);
                        vals.push(v);
                    }
                }
                offsets.push(cols.len());
            }
            SparseRows { offsets, cols, vals }
        })
    }

    /// `max_i |Σ_j P(i, j) − 1|`.
    pub fn max_row_error(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Row vector times matrix: `v P`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let sp = self.sparse();
        let mut out = vec![0.0; self.n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let (cols, vals) = sp.row(i);
            for (&j, &p) in cols.iter().zip(vals) {
                out[j as usize] += vi * p;
            }
        }
        out
    }

    /// Matrix times column vector: `P f`.
    pub fn right_mul(&self, f: &[f64]) -> Vec<f64> {
        let sp = self.sparse();
        (0..self.n)
            .map(|i| {
                let (cols, vals) = sp.row(i);
                cols.iter().zip(vals).map(|(&j, &p)| p * f[j as usize]).sum()
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.n != other.n {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV triples `row,col,prob` for the nonzero entries.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,prob")?;
        for i in 0..self.n {
            for (j, &v) in self.row(i).iter().enumerate() {
                if v != 0.0 {
                    writeln!(w, "{i},{j},{v:e}")?;
                }
            }
        }
        Ok(())
    }

    /// Reads the triple format written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(n: usize, r: R) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = || {
                parts
                    .next()
                    .ok_or_else(|| Error::Parse(format!("line {}: expected three fields", lineno + 1)))
            };
            let i: usize = next()?.trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let j: usize = next()?.trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            let v: f64 = next()?.trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            if i >= n || j >= n {
                return Err(Error::Parse(format!("line {}: index out of range", lineno + 1)));
            }
            data[i * n + j] += v;
        }
        Self::from_dense(n, data)
    }
}

/// Sorted set of state indices within a universe of `universe` states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSet {
    universe: usize,
    members: Vec<usize>,
}

impl StateSet {
    pub fn new(universe: usize, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.last().is_some_and(|&k| k >= universe) {
            return Err(Error::InvalidArgument("state index outside the space".into()));
        }
        Ok(Self { universe, members })
    }

    pub fn full(universe: usize) -> Self {
        Self {
            universe,
            members: (0..universe).collect(),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.universe];
        self.members.iter().for_each(|&k| m[k] = true);
        m
    }

    pub fn complement(&self) -> Self {
        let mask = self.mask();
        Self {
            universe: self.universe,
            members: (0..self.universe).filter(|&k| !mask[k]).collect(),
        }
    }
}

/// `Q(x, y) = π(x) P(x, y)`.
#[derive(Debug, Clone)]
pub struct EdgeMeasure<'a> {
    p: &'a StochasticMatrix,
    pi: &'a StationaryTable,
}

impl<'a> EdgeMeasure<'a> {
    pub fn new(p: &'a StochasticMatrix, pi: &'a StationaryTable) -> Self {
        Self { p, pi }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pi.get(x) * self.p.get(x, y)
    }

    /// `Q(A, B)`.
    pub fn flow(&self, a: &[usize], b: &[usize]) -> f64 {
        a.iter()
            .map(|&x| b.iter().map(|&y| self.get(x, y)).sum::<f64>())
            .sum()
    }

    pub fn total(&self) -> f64 {
        let n = self.p.size();
        (0..n).map(|x| (0..n).map(|y| self.get(x, y)).sum::<f64>()).sum()
    }
}

/// `‖πP − π‖₁`.
pub fn stationarity_residual(p: &StochasticMatrix, pi: &StationaryTable) -> f64 {
    pi.l1_distance(&p.left_mul(pi.as_slice()))
}

/// `max |π(x)P(x, y) − π(y)P(y, x)|`.
pub fn reversibility_residual(p: &StochasticMatrix, pi: &StationaryTable) -> f64 {
    let n = p.size();
    let mut worst = 0.0f64;
    for x in 0..n {
        for y in (x + 1)..n {
            let r = (pi.get(x) * p.get(x, y) - pi.get(y) * p.get(y, x)).abs();
            worst = worst.max(r);
        }
    }
    worst
}

pub fn reversibility_check(p: &StochasticMatrix, pi: &StationaryTable) -> bool {
    reversibility_residual(p, pi) <= REVERSIBILITY_TOL
}

pub fn kernel_irreducible(p: &StochasticMatrix) -> bool {
    linalg::strongly_connected(p.entries(), p.size())
}

/// Worst disagreement between the projected fine kernel and the coarse kernel.
pub fn lumping_check(fine: &StochasticMatrix, projection: &[usize], coarse: &StochasticMatrix) -> Result<f64> {
    let nc = coarse.size();
    if projection.len() != fine.size() {
        return Err(Error::InvalidArgument("projection must cover every fine state".into()));
    }
    let mut hit = vec![false; nc];
    for &c in projection {
        if c >= nc {
            return Err(Error::InvalidArgument("projection leaves the coarse space".into()));
        }
        hit[c] = true;
    }
    if hit.iter().any(|h| !h) {
        return Err(Error::InvalidArgument("projection is not surjective".into()));
    }
    let mut worst = 0.0f64;
    let mut lumped = vec![0.0; nc];
    for x in 0..fine.size() {
        lumped.iter_mut().for_each(|v| *v = 0.0);
        for (y, &p) in fine.row(x).iter().enumerate() {
            lumped[projection[y]] += p;
        }
        let cx = projection[x];
        for c in 0..nc {
            worst = worst.max((lumped[c] - coarse.get(cx, c)).abs());
        }
    }
    Ok(worst)
}
