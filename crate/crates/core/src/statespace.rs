//! Configuration spaces with fixed margins, the stationary law, and
//! centre sets.
//!
//! A [`Configuration`] is a `d × m` count matrix: `x(i, j)` balls of colour
//! `j` in urn `i`. Every urn holds `urn_size` balls and every colour has
//! `colour_count` balls. States are enumerated in lexicographic order of the
//! `(d-1)(m-1)` free cells (row-major), and that order is the canonical index
//! used by every kernel and every CSV file.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default enumeration cap for unlabeled spaces.
pub const DEFAULT_STATE_CAP: usize = 2_000_000;
/// Default enumeration cap for ordered (shuffle) spaces.
pub const DEFAULT_ORDERED_CAP: usize = 40_000;

const CENTRE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Margins {
    pub d: usize,
    pub m: usize,
    pub urn_size: usize,
    pub colour_count: usize,
}

impl Margins {
    pub fn new(d: usize, m: usize, urn_size: usize, colour_count: usize) -> Result<Self> {
        if d == 0 || m == 0 || urn_size == 0 || colour_count == 0 {
            return Err(Error::InvalidMargins(format!(
                "all margins must be positive (d={d}, m={m}, urn_size={urn_size}, colour_count={colour_count})"
            )));
        }
        if d * urn_size != m * colour_count {
            return Err(Error::InvalidMargins(format!(
                "ball count mismatch: d·urn_size = {} but m·colour_count = {}",
                d * urn_size,
                m * colour_count
            )));
        }
        Ok(Self {
            d,
            m,
            urn_size,
            colour_count,
        })
    }

    /// `d` urns of `mn` balls, `m` colours of `dn` balls.
    pub fn generalised(d: usize, m: usize, n: usize) -> Result<Self> {
        Self::new(d, m, m * n, d * n)
    }

    /// `d` urns and `d` colours, `n` balls each.
    pub fn balanced(d: usize, n: usize) -> Result<Self> {
        Self::new(d, d, n, n)
    }

    pub fn total(&self) -> usize {
        self.d * self.urn_size
    }

    /// Per-cell stationary mean `urn_size · colour_count / total`.
    pub fn target(&self) -> f64 {
        self.urn_size as f64 * self.colour_count as f64 / self.total() as f64
    }

    /// Reference scale `n` in the centre bounds: `urn_size / m`.
    pub fn scale(&self) -> f64 {
        self.urn_size as f64 / self.m as f64
    }
}

/// A `d × m` count matrix, stored row-major.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    d: usize,
    m: usize,
    counts: Vec<u32>,
}

impl Configuration {
    pub fn from_counts(d: usize, m: usize, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != d * m {
            return Err(Error::InvalidArgument(format!(
                "expected {} counts, got {}",
                d * m,
                counts.len()
            )));
        }
        Ok(Self { d, m, counts })
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let d = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if d == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("ragged or empty configuration".into()));
        }
        Ok(Self {
            d,
            m,
            counts: rows.concat(),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u32) {
        self.counts[i * self.m + j] = v;
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn counts_mut(&mut self) -> &mut [u32] {
        &mut self.counts
    }

    pub fn rows(&self) -> Vec<Vec<u32>> {
        self.counts.chunks(self.m).map(<[u32]>::to_vec).collect()
    }

    pub fn check_margins(&self, margins: &Margins) -> Result<()> {
        if self.d != margins.d || self.m != margins.m {
            return Err(Error::MarginViolation(format!(
                "shape {}×{} does not match margins {}×{}",
                self.d, self.m, margins.d, margins.m
            )));
        }
        for i in 0..self.d {
            let s: u64 = (0..self.m).map(|j| u64::from(self.get(i, j))).sum();
            if s != margins.urn_size as u64 {
                return Err(Error::MarginViolation(format!("urn {} holds {s} balls", i + 1)));
            }
        }
        for j in 0..self.m {
            let s: u64 = (0..self.d).map(|i| u64::from(self.get(i, j))).sum();
            if s != margins.colour_count as u64 {
                return Err(Error::MarginViolation(format!("colour {} has {s} balls", j + 1)));
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.rows())
    }
}

impl Serialize for Configuration {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Configuration {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<u32>>::deserialize(de)?;
        Configuration::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// `ln k!` for `k = 0..=max`.
#[derive(Debug, Clone)]
pub struct LogFactorials(Vec<f64>);

impl LogFactorials {
    pub fn new(max: usize) -> Self {
        let mut t = Vec::with_capacity(max + 1);
        t.push(0.0);
        let mut acc = 0.0f64;
        for k in 1..=max {
            acc += (k as f64).ln();
            t.push(acc);
        }
        Self(t)
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }
}

/// `ln π(x)` without re-validating margins.
pub fn log_stationary(x: &Configuration, margins: &Margins, lf: &LogFactorials) -> f64 {
    let mut acc = 0.0;
    for j in 0..margins.m {
        acc += lf.get(margins.colour_count);
        for i in 0..margins.d {
            acc -= lf.get(x.get(i, j) as usize);
        }
    }
    acc - lf.get(margins.total()) + margins.d as f64 * lf.get(margins.urn_size)
}

/// `π(x) = ∏_j multinomial(colour_count; x(·, j)) / multinomial(total; urn_size, …)`.
pub fn stationary_probability(x: &Configuration, margins: &Margins) -> Result<f64> {
    x.check_margins(margins)?;
    let lf = LogFactorials::new(margins.total());
    Ok(log_stationary(x, margins, &lf).exp())
}

/// Strictly positive probability vector indexed like its state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationaryTable {
    probs: Vec<f64>,
}

impl StationaryTable {
    pub fn from_vec(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptySet);
        }
        if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("stationary table must be strictly positive".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("stationary table sums to {s}")));
        }
        Ok(Self { probs })
    }

    /// Rescales a positive vector to a probability vector.
    pub fn normalized(mut probs: Vec<f64>) -> Result<Self> {
        let s: f64 = probs.iter().sum();
        if !(s > 0.0) {
            return Err(Error::InvalidArgument("cannot normalize a zero vector".into()));
        }
        probs.iter_mut().for_each(|p| *p /= s);
        Self::from_vec(probs)
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn mass(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.probs[i]).sum()
    }

    /// `π(· | A)` indexed by position in `set`.
    pub fn conditioned(&self, set: &[usize]) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        Self::normalized(set.iter().map(|&i| self.probs[i]).collect())
    }

    pub fn min(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.probs.iter().zip(other).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Enumerated state space with a stable index.
#[derive(Debug, Clone)]
pub struct StateSpace {
    margins: Margins,
    states: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
}

impl StateSpace {
    pub fn enumerate(margins: Margins, cap: usize) -> Result<Self> {
        let mut states = Vec::new();
        let mut cur = Configuration {
            d: margins.d,
            m: margins.m,
            counts: vec![0; margins.d * margins.m],
        };
        let mut col_rem: Vec<usize> = vec![margins.colour_count; margins.m];
        let mut overflow = false;
        fill(&margins, 0, 0, margins.urn_size, &mut col_rem, &mut cur, &mut |x| {
            if states.len() >= cap {
                overflow = true;
                return false;
            }
            states.push(x.clone());
            true
        });
        if overflow {
            return Err(Error::CapExceeded {
                what: "state space size",
                cap: cap as u128,
                needed: cap as u128 + 1,
            });
        }
        let index = states.iter().cloned().enumerate().map(|(k, x)| (x, k)).collect();
        Ok(Self {
            margins,
            states,
            index,
        })
    }

    pub fn margins(&self) -> &Margins {
        &self.margins
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Configuration] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &Configuration {
        &self.states[k]
    }

    pub fn index_of(&self, x: &Configuration) -> Option<usize> {
        self.index.get(x).copied()
    }

    pub fn stationary(&self) -> StationaryTable {
        let lf = LogFactorials::new(self.margins.total());
        let probs = self
            .states
            .iter()
            .map(|x| log_stationary(x, &self.margins, &lf).exp())
            .collect();
        StationaryTable { probs }
    }

    /// Indices of states in the centre set, ascending.
    pub fn centre_indices(&self, spec: &CentreSpec) -> Result<Vec<usize>> {
        let c = spec.resolve(&self.margins)?;
        Ok((0..self.len()).filter(|&k| c.contains(&self.states[k])).collect())
    }

    /// CSV manifest: `index,x_1_1,…,x_d_m,pi`.
    pub fn write_manifest<W: Write>(&self, pi: &StationaryTable, mut w: W) -> Result<()> {
        let mut header = vec!["index".to_string()];
        for i in 1..=self.margins.d {
            for j in 1..=self.margins.m {
                header.push(format!("x_{i}_{j}"));
            }
        }
        header.push("pi".into());
        writeln!(w, "{}", header.join(","))?;
        for (k, x) in self.states.iter().enumerate() {
            let cells: Vec<String> = x.counts.iter().map(u32::to_string).collect();
            writeln!(w, "{k},{},{:e}", cells.join(","), pi.get(k))?;
        }
        Ok(())
    }
}

/// Row-major fill; `rem` is the unfilled part of row `i`. Returns false to abort.
fn fill(
    mg: &Margins,
    i: usize,
    j: usize,
    rem: usize,
    col_rem: &mut [usize],
    cur: &mut Configuration,
    emit: &mut dyn FnMut(&Configuration) -> bool,
) -> bool {
    let (d, m) = (mg.d, mg.m);
    if i == d - 1 {
        for c in 0..m {
            cur.set(i, c, col_rem[c] as u32);
        }
        return emit(cur);
    }
    if j == m - 1 {
        if rem > col_rem[j] {
            return true;
        }
        cur.set(i, j, rem as u32);
        col_rem[j] -= rem;
        let ok = fill(mg, i + 1, 0, mg.urn_size, col_rem, cur, emit);
        col_rem[j] += rem;
        return ok;
    }
    let later: usize = col_rem[j + 1..].iter().sum();
    let lo = rem.saturating_sub(later);
    let hi = rem.min(col_rem[j]);
    for v in lo..=hi {
        cur.set(i, j, v as u32);
        col_rem[j] -= v;
        let ok = fill(mg, i, j + 1, rem - v, col_rem, cur, emit);
        col_rem[j] += v;
        if !ok {
            return false;
        }
    }
    true
}

/// Centre-set family. `Meso(L)`: every cell at least `target − L`;
/// `Centre(C)` is `Meso(C·√target)`; `Macro(δ)` is `Meso(δ·target)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CentreSpec {
    Meso(f64),
    Centre(f64),
    Macro(f64),
}

impl CentreSpec {
    pub fn resolve(&self, margins: &Margins) -> Result<ResolvedCentre> {
        let target = margins.target();
        let l = match *self {
            CentreSpec::Meso(l) => l,
            CentreSpec::Centre(c) => c * target.sqrt(),
            CentreSpec::Macro(delta) => {
                if !(delta > 0.0 && delta <= 1.0) {
                    return Err(Error::InvalidArgument(format!("macro delta {delta} outside (0, 1]")));
                }
                delta * target
            }
        };
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::InvalidArgument(format!("centre radius {l} must be nonnegative")));
        }
        Ok(ResolvedCentre {
            lower: target - l,
            radius: l,
        })
    }
}

/// A centre set reduced to its cellwise lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedCentre {
    pub lower: f64,
    pub radius: f64,
}

impl ResolvedCentre {
    #[inline]
    pub fn contains_counts(&self, counts: &[u32]) -> bool {
        counts.iter().all(|&c| f64::from(c) >= self.lower - CENTRE_SLACK)
    }

    #[inline]
    pub fn contains(&self, x: &Configuration) -> bool {
        self.contains_counts(&x.counts)
    }
}

pub fn in_centre(x: &Configuration, spec: &CentreSpec, margins: &Margins) -> Result<bool> {
    Ok(spec.resolve(margins)?.contains(x))
}

pub fn centre_mass(space: &StateSpace, pi: &StationaryTable, spec: &CentreSpec) -> Result<f64> {
    Ok(pi.mass(&space.centre_indices(spec)?))
}

pub fn l1_distance(x: &Configuration, y: &Configuration) -> Result<u64> {
    if x.d != y.d || x.m != y.m {
        return Err(Error::MarginViolation("configurations have different shapes".into()));
    }
    Ok(x.counts
        .iter()
        .zip(&y.counts)
        .map(|(&a, &b)| u64::from(a.abs_diff(b)))
        .sum())
}

/// `(dn)! / (n!)^d` computed exactly when it fits, saturating otherwise.
fn labeled_count(d: usize, n: usize) -> u128 {
    // product of binomials C(kn, n) for k = 1..d
    let mut total: u128 = 1;
    for k in 1..=d {
        let mut c: u128 = 1;
        for t in 0..n {
            c = match c.checked_mul((k * n - t) as u128) {
                Some(v) => v / (t as u128 + 1),
                None => return u128::MAX,
            };
        }
        total = match total.checked_mul(c) {
            Some(v) => v,
            None => return u128::MAX,
        };
    }
    total
}

/// Partitions of `dn` labeled balls into `d` urns of `n` each.
///
/// A state is the concatenation of the `d` urns, each sorted ascending. Ball
/// `b` has colour `b / n`, so the balanced projection is immediate.
#[derive(Debug, Clone)]
pub struct LabeledSpace {
    d: usize,
    n: usize,
    states: Vec<Vec<u16>>,
    index: HashMap<Vec<u16>, usize>,
}

impl LabeledSpace {
    pub fn enumerate(d: usize, n: usize, cap: usize) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::InvalidMargins("labeled space needs d, n ≥ 1".into()));
        }
        let needed = labeled_count(d, n);
        if needed > cap as u128 {
            return Err(Error::CapExceeded {
                what: "labeled state space size",
                cap: cap as u128,
                needed,
            });
        }
        let mut states = Vec::with_capacity(needed as usize);
        let mut cur = Vec::with_capacity(d * n);
        let mut used = vec![false; d * n];
        labeled_fill(d, n, &mut cur, &mut used, &mut states);
        let index = states.iter().cloned().enumerate().map(|(k, s)| (s, k)).collect();
        Ok(Self {
            d,
            n,
            states,
            index,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[u16] {
        &self.states[k]
    }

    pub fn index_of(&self, s: &[u16]) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Ball → colour count matrix under the balanced margins.
    pub fn project(&self, k: usize) -> Configuration {
        let (d, n) = (self.d, self.n);
        let mut counts = vec![0u32; d * d];
        for (pos, &b) in self.states[k].iter().enumerate() {
            counts[(pos / n) * d + b as usize / n] += 1;
        }
        Configuration { d, m: d, counts }
    }

    /// Index map into the enumerated balanced space.
    pub fn projection_to(&self, balanced: &StateSpace) -> Result<Vec<usize>> {
        (0..self.len())
            .map(|k| {
                balanced
                    .index_of(&self.project(k))
                    .ok_or_else(|| Error::InvalidArgument("projection leaves the balanced space".into()))
            })
            .collect()
    }
}

fn labeled_fill(d: usize, n: usize, cur: &mut Vec<u16>, used: &mut [bool], out: &mut Vec<Vec<u16>>) {
    let pos = cur.len();
    if pos == d * n {
        out.push(cur.clone());
        return;
    }
    // within an urn, balls increase; a new urn may start anywhere
    let start = if pos.is_multiple_of(n) { 0 } else { cur[pos - 1] as usize + 1 };
    for b in start..d * n {
        if !used[b] {
            used[b] = true;
            cur.push(b as u16);
            labeled_fill(d, n, cur, used, out);
            cur.pop();
            used[b] = false;
        }
    }
}

/// All arrangements of `dn` labeled cards into `d` ordered stacks of `n`.
/// Stack `i` occupies positions `i·n .. (i+1)·n`, top first.
#[derive(Debug, Clone)]
pub struct OrderedSpace {
    d: usize,
    n: usize,
    states: Vec<Vec<u16>>,
    index: HashMap<Vec<u16>, usize>,
}

impl OrderedSpace {
    pub fn enumerate(d: usize, n: usize, cap: usize) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::InvalidMargins("ordered space needs d, n ≥ 1".into()));
        }
        let k = d * n;
        let mut needed: u128 = 1;
        for t in 2..=k as u128 {
            needed = needed.saturating_mul(t);
        }
        if needed > cap as u128 {
            return Err(Error::CapExceeded {
                what: "ordered state space size",
                cap: cap as u128,
                needed,
            });
        }
        let mut states = Vec::with_capacity(needed as usize);
        let mut cur: Vec<u16> = (0..k as u16).collect();
        // lexicographic permutations
        loop {
            states.push(cur.clone());
            if !next_permutation(&mut cur) {
                break;
            }
        }
        let index = states.iter().cloned().enumerate().map(|(k, s)| (s, k)).collect();
        Ok(Self {
            d,
            n,
            states,
            index,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[u16] {
        &self.states[k]
    }

    pub fn index_of(&self, s: &[u16]) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Forgets the order within each stack.
    pub fn projection_to(&self, labeled: &LabeledSpace) -> Result<Vec<usize>> {
        if labeled.d != self.d || labeled.n != self.n {
            return Err(Error::InvalidArgument("ordered and labeled spaces differ in shape".into()));
        }
        let n = self.n;
        (0..self.len())
            .map(|k| {
                let mut s = self.states[k].clone();
                s.chunks_mut(n).for_each(<[u16]>::sort_unstable);
                labeled
                    .index_of(&s)
                    .ok_or_else(|| Error::InvalidArgument("projection leaves the labeled space".into()))
            })
            .collect()
    }
}

fn next_permutation(a: &mut [u16]) -> bool {
    let n = a.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}
