//! Permutation measures on the symmetric group `S_d` and the `d × d`
//! single-ball matrix they induce.
//!
//! Permutations are written in 1-based one-line notation at every public
//! boundary (`[2, 3, 1]` sends urn 1 to urn 2, urn 2 to urn 3 and urn 3 to
//! urn 1). Internally images are stored 0-based.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact;
use crate::kernels::StochasticMatrix;
use crate::statespace::StationaryTable;
use crate::linalg::{self, Complex64};

/// Largest `d` accepted by the exhaustive Cheeger search.
pub const CHEEGER_MAX_DEGREE: usize = 24;

const SYMMETRY_TOL: f64 = 1e-12;

/// A permutation of `{1, …, d}`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from 1-based one-line notation.
    pub fn from_one_line(images: &[usize]) -> Result<Self> {
        let d = images.len();
        let mut seen = vec![false; d];
        for &v in images {
            if v == 0 || v > d || seen[v - 1] {
                return Err(Error::NonBijective {
                    degree: d,
                    images: images.to_vec(),
                });
            }
            seen[v - 1] = true;
        }
        Ok(Self {
            images: images.iter().map(|v| v - 1).collect(),
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            images: (0..d).collect(),
        }
    }

    /// The cycle `(1 2 … d)`.
    pub fn cycle(d: usize) -> Self {
        Self {
            images: (0..d).map(|i| (i + 1) % d).collect(),
        }
    }

    /// The transposition swapping the 0-based points `a` and `b`.
    pub fn transposition(d: usize, a: usize, b: usize) -> Self {
        let mut images: Vec<usize> = (0..d).collect();
        images.swap(a, b);
        Self { images }
    }

    pub fn degree(&self) -> usize {
        self.images.len()
    }

    /// Image of the 0-based point `i`, 0-based.
    #[inline]
    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.images.len()];
        for (i, &j) in self.images.iter().enumerate() {
            inv[j] = i;
        }
        Self { images: inv }
    }

    /// 1-based one-line notation.
    pub fn one_line(&self) -> Vec<usize> {
        self.images.iter().map(|v| v + 1).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &j)| i == j)
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.one_line())
    }
}

/// One atom of a measure document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDoc {
    pub perm: Vec<usize>,
    pub weight: f64,
}

/// Serialized form of a permutation measure: `{"d": 3, "support": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureDoc {
    pub d: usize,
    pub support: Vec<AtomDoc>,
}

/// A probability measure on `S_d` with finitely many weighted atoms.
///
/// Construction normalizes the weights, merges duplicate permutations and
/// drops zero-weight atoms, so downstream code can assume a clean support.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationMeasure {
    d: usize,
    atoms: Vec<(Permutation, f64)>,
}

impl PermutationMeasure {
    pub fn new(d: usize, atoms: Vec<(Permutation, f64)>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidMeasure(format!("degree must be at least 2, got {d}")));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        let mut merged: BTreeMap<Permutation, f64> = BTreeMap::new();
        for (perm, w) in atoms {
            if perm.degree() != d {
                return Err(Error::DegreeMismatch {
                    expected: d,
                    found: perm.degree(),
                });
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidMeasure(format!("negative or non-finite weight {w}")));
            }
            *merged.entry(perm).or_insert(0.0) += w;
        }
        let total: f64 = merged.values().sum();
        if total <= 0.0 {
            return Err(Error::InvalidMeasure("all weights are zero".into()));
        }
        let atoms = merged
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(p, w)| (p, w / total))
            .collect();
        Ok(Self { d, atoms })
    }

    pub fn dirac(perm: Permutation) -> Self {
        let d = perm.degree();
        Self::new(d, vec![(perm, 1.0)]).expect("a single permutation is a valid measure")
    }

    pub fn identity(d: usize) -> Self {
        Self::dirac(Permutation::identity(d))
    }

    /// Dirac mass on the cycle `(1 2 … d)`.
    pub fn cyclic(d: usize) -> Self {
        Self::dirac(Permutation::cycle(d))
    }

    /// Uniform measure on the `d(d-1)/2` transpositions (the mean-field measure).
    pub fn transpositions(d: usize) -> Self {
        let mut atoms = Vec::new();
        for a in 0..d {
            for b in (a + 1)..d {
                atoms.push((Permutation::transposition(d, a, b), 1.0));
            }
        }
        Self::new(d, atoms).expect("transposition measure is valid for d >= 2")
    }

    /// Dirac mass on the swap `(1 2)` in `S_2`: the classical urn exchange.
    pub fn swap() -> Self {
        Self::dirac(Permutation::transposition(2, 0, 1))
    }

    pub fn from_doc(doc: &MeasureDoc) -> Result<Self> {
        let mut atoms = Vec::with_capacity(doc.support.len());
        for atom in &doc.support {
            if atom.perm.len() != doc.d {
                return Err(Error::DegreeMismatch {
                    expected: doc.d,
                    found: atom.perm.len(),
                });
            }
            atoms.push((Permutation::from_one_line(&atom.perm)?, atom.weight));
        }
        Self::new(doc.d, atoms)
    }

    pub fn to_doc(&self) -> MeasureDoc {
        MeasureDoc {
            d: self.d,
            support: self
                .atoms
                .iter()
                .map(|(p, w)| AtomDoc {
                    perm: p.one_line(),
                    weight: *w,
                })
                .collect(),
        }
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    pub fn atoms(&self) -> &[(Permutation, f64)] {
        &self.atoms
    }

    pub fn weight_of(&self, perm: &Permutation) -> f64 {
        self.atoms
            .iter()
            .find(|(p, _)| p == perm)
            .map_or(0.0, |(_, w)| *w)
    }
}

/// Parses a measure document (`{"d": .., "support": [{"perm": [..], "weight": ..}]}`).
pub fn parse_measure(doc: &serde_json::Value) -> Result<PermutationMeasure> {
    let doc: MeasureDoc = serde_json::from_value(doc.clone())?;
    PermutationMeasure::from_doc(&doc)
}

/// `μ(σ) = μ(σ⁻¹)` for every atom.
pub fn is_symmetric_measure(mu: &PermutationMeasure) -> bool {
    mu.atoms
        .iter()
        .all(|(p, w)| (mu.weight_of(&p.inverse()) - w).abs() <= SYMMETRY_TOL)
}

/// Doubly stochastic `d × d` matrix `U(i, j) = P_{σ∼μ}[σ(i) = j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleBallMatrix {
    d: usize,
    entries: Vec<f64>,
}

impl SingleBallMatrix {
    /// Wraps a row-major matrix, checking that it is doubly stochastic.
    pub fn from_entries(d: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries, got {}",
                d * d,
                entries.len()
            )));
        }
        if entries.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidArgument("negative or non-finite entry".into()));
        }
        for i in 0..d {
            let row: f64 = (0..d).map(|j| entries[i * d + j]).sum();
            let col: f64 = (0..d).map(|j| entries[j * d + i]).sum();
            if (row - 1.0).abs() > 1e-12 || (col - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "line {i} is not stochastic (row {row}, column {col})"
                )));
            }
        }
        Ok(Self { d, entries })
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.d + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn transpose(&self) -> Self {
        let d = self.d;
        let mut t = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                t[j * d + i] = self.entries[i * d + j];
            }
        }
        Self { d, entries: t }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.d).all(|i| (0..self.d).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn to_stochastic(&self) -> StochasticMatrix {
        StochasticMatrix::from_dense(self.d, self.entries.clone())
            .expect("single-ball matrix rows sum to one")
    }
}

pub fn single_ball_matrix(mu: &PermutationMeasure) -> SingleBallMatrix {
    let d = mu.degree();
    let mut entries = vec![0.0; d * d];
    for (sigma, w) in mu.atoms() {
        for i in 0..d {
            entries[i * d + sigma.apply(i)] += w;
        }
    }
    SingleBallMatrix { d, entries }
}

pub fn is_irreducible(u: &SingleBallMatrix) -> bool {
    linalg::strongly_connected(&u.entries, u.d)
}

/// Eigenvalues of `U`, sorted by decreasing real part.
pub fn eigenvalues(u: &SingleBallMatrix) -> Result<Vec<Complex64>> {
    linalg::general_eigenvalues(&u.entries, u.d)
}

/// `γ(U) = min{1 − Re λ}` over eigenvalues of non-constant eigenvectors.
///
/// For irreducible `U` the eigenvalue 1 is simple and belongs to the
/// constant vector; it is the one removed before minimizing.
pub fn spectral_gap(u: &SingleBallMatrix) -> Result<f64> {
    if !is_irreducible(u) {
        return Err(Error::Reducible("single-ball matrix has no unique stationary law".into()));
    }
    let ev = eigenvalues(u)?;
    Ok(gap_excluding_unit(&ev))
}

pub(crate) fn gap_excluding_unit(ev: &[Complex64]) -> f64 {
    let one = Complex64::new(1.0, 0.0);
    let unit = ev
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - one).norm().partial_cmp(&(b.1 - one).norm()).unwrap())
        .map(|(i, _)| i);
    ev.iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != unit)
        .map(|(_, z)| 1.0 - z.re)
        .fold(f64::INFINITY, f64::min)
}

/// `(U + Uᵀ) / 2`.
pub fn additive_symmetrization(u: &SingleBallMatrix) -> SingleBallMatrix {
    let d = u.d;
    let mut entries = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            entries[i * d + j] = 0.5 * (u.get(i, j) + u.get(j, i));
        }
    }
    SingleBallMatrix { d, entries }
}

/// Spectral gap `γ⁺` of the additive symmetrization (the Poincaré constant).
pub fn poincare_gap(u: &SingleBallMatrix) -> Result<f64> {
    let sym = additive_symmetrization(u);
    if !is_irreducible(&sym) {
        return Err(Error::Reducible("additive symmetrization is reducible".into()));
    }
    let ev = linalg::symmetric_eigenvalues(&sym.entries, sym.d);
    Ok(1.0 - ev[1])
}

/// Exact Cheeger constant under the uniform law on `[d]`, with a minimizing set
/// (0-based urns).
pub fn cheeger_minimizer(u: &SingleBallMatrix) -> Result<(f64, Vec<usize>)> {
    let d = u.d;
    if d > CHEEGER_MAX_DEGREE {
        return Err(Error::CapExceeded {
            what: "Cheeger enumeration degree",
            cap: CHEEGER_MAX_DEGREE as u128,
            needed: d as u128,
        });
    }
    let half = d / 2;
    let mut best = f64::INFINITY;
    let mut best_mask = 0u32;
    if d <= 16 {
        for mask in 1u32..(1u32 << d) {
            let size = mask.count_ones() as usize;
            if size > half {
                continue;
            }
            let mut flow = 0.0;
            for i in (0..d).filter(|i| mask >> i & 1 == 1) {
                for j in (0..d).filter(|j| mask >> j & 1 == 0) {
                    flow += u.get(i, j);
                }
            }
            let ratio = flow / size as f64;
            if ratio < best {
                best = ratio;
                best_mask = mask;
            }
        }
    } else {
        // Gray-code walk: one element enters or leaves per step, O(d) update.
        let mut mask = 0u32;
        let mut flow = 0.0f64;
        for step in 1u32..(1u32 << d) {
            let k = step.trailing_zeros() as usize;
            let bit = 1u32 << k;
            if mask & bit == 0 {
                for j in 0..d {
                    if j != k && mask >> j & 1 == 0 {
                        flow += u.get(k, j);
                    }
                    if mask >> j & 1 == 1 {
                        flow -= u.get(j, k);
                    }
                }
                mask |= bit;
            } else {
                mask &= !bit;
                for j in 0..d {
                    if j != k && mask >> j & 1 == 0 {
                        flow -= u.get(k, j);
                    }
                    if mask >> j & 1 == 1 {
                        flow += u.get(j, k);
                    }
                }
            }
            let size = mask.count_ones() as usize;
            if size >= 1 && size <= half {
                let ratio = flow / size as f64;
                if ratio < best {
                    best = ratio;
                    best_mask = mask;
                }
            }
        }
    }
    let set = (0..d).filter(|i| best_mask >> i & 1 == 1).collect();
    Ok((best.max(0.0), set))
}

pub fn cheeger_constant(u: &SingleBallMatrix) -> Result<f64> {
    cheeger_minimizer(u).map(|(v, _)| v)
}

/// Continuous-time `ε`-mixing time of the single-ball chain run at `rate`.
pub fn single_ball_mixing_time(u: &SingleBallMatrix, rate: f64, eps: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::InvalidArgument(format!("rate must be positive, got {rate}")));
    }
    if !is_irreducible(u) {
        return Err(Error::Reducible("single-ball matrix has no unique stationary law".into()));
    }
    let p = u.to_stochastic();
    let pi = StationaryTable::uniform(u.d);
    let opts = exact::MixingOptions {
        rel_tol: 1e-6,
        ..exact::MixingOptions::default()
    };
    Ok(exact::mixing_time_with(&p, &pi, eps, &opts)? / rate)
}

/// Spanning tree on `[d]` whose edges carry `U(i, j) ≥ Φ*/d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeavyTree {
    /// Undirected edges as 1-based urn pairs, in the order they were added.
    pub edges: Vec<(usize, usize)>,
    /// `U(i, j)` for the orientation the greedy step used.
    pub weights: Vec<f64>,
}

/// Grows the tree from urn 1, each time attaching the outside urn reached by
/// the heaviest `U(i, j)` with `i` already in the tree (ties to the smallest
/// pair).
pub fn heavy_spanning_tree(u: &SingleBallMatrix) -> Result<HeavyTree> {
    if !is_irreducible(u) {
        return Err(Error::Reducible("no spanning tree for a reducible single-ball chain".into()));
    }
    let d = u.d;
    let phi = cheeger_constant(u)?;
    let floor = phi / d as f64;
    let mut inside = vec![false; d];
    inside[0] = true;
    let mut tree = HeavyTree {
        edges: Vec::with_capacity(d - 1),
        weights: Vec::with_capacity(d - 1),
    };
    for _ in 1..d {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..d).filter(|&i| inside[i]) {
            for j in (0..d).filter(|&j| !inside[j]) {
                let w = u.get(i, j);
                if best.is_none_or(|(_, _, bw)| w > bw) {
                    best = Some((i, j, w));
                }
            }
        }
        let (i, j, w) = best.expect("some urn remains outside the tree");
        if w + 1e-12 < floor || w <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tree growth stalled: best edge weight {w} below Φ*/d = {floor}"
            )));
        }
        inside[j] = true;
        tree.edges.push((i + 1, j + 1));
        tree.weights.push(w);
    }
    Ok(tree)
}

/// Everything `analyze` reports about a single-ball matrix.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub d: usize,
    /// `(re, im)` pairs sorted by decreasing real part.
    pub eigenvalues: Vec<(f64, f64)>,
    pub gap: Option<f64>,
    pub poincare_gap: Option<f64>,
    pub cheeger: Option<f64>,
    pub irreducible: bool,
    pub symmetric_measure: bool,
    pub tree: Option<HeavyTree>,
}

pub fn spectral_report(mu: &PermutationMeasure) -> Result<SpectralReport> {
    let u = single_ball_matrix(mu);
    let irreducible = is_irreducible(&u);
    let ev = eigenvalues(&u)?;
    let cheeger = if u.d <= CHEEGER_MAX_DEGREE {
        Some(cheeger_constant(&u)?)
    } else {
        None
    };
    Ok(SpectralReport {
        d: u.d,
        eigenvalues: ev.iter().map(|z| (z.re, z.im)).collect(),
        gap: irreducible.then(|| gap_excluding_unit(&ev)),
        poincare_gap: poincare_gap(&u).ok(),
        cheeger,
        irreducible,
        symmetric_measure: is_symmetric_measure(mu),
        tree: if irreducible && cheeger.is_some() {
            Some(heavy_spanning_tree(&u)?)
        } else {
            None
        },
    })
}
