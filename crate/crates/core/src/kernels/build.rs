use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StochasticMatrix;
use crate::error::{Error, Result};
use crate::perms::PermutationMeasure;
use crate::statespace::{
    Configuration, LabeledSpace, Margins, OrderedSpace, StateSpace, StationaryTable, DEFAULT_ORDERED_CAP,
    DEFAULT_STATE_CAP,
};

/// Default bound on `|Ω| · (choices per state) · |supp μ|`.
pub const DEFAULT_WORK_CAP: u128 = 2_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Generalised,
    Balanced,
    Labeled,
    MeanField,
    Shuffle,
    RestrictedShuffle,
}

impl Variant {
    /// Variants whose state space is a labeled or ordered arrangement.
    pub fn is_labeled(self) -> bool {
        matches!(self, Variant::Labeled | Variant::Shuffle | Variant::RestrictedShuffle)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub margins: Margins,
    pub mu: PermutationMeasure,
    pub variant: Variant,
}

impl ChainSpec {
    /// Validates the variant's constraints. `MeanField` replaces `mu` with the
    /// uniform measure on transpositions.
    pub fn new(margins: Margins, mu: PermutationMeasure, variant: Variant) -> Result<Self> {
        let mu = if variant == Variant::MeanField {
            PermutationMeasure::transpositions(margins.d)
        } else {
            mu
        };
        if mu.degree() != margins.d {
            return Err(Error::DegreeMismatch {
                expected: margins.d,
                found: mu.degree(),
            });
        }
        let balanced = margins.d == margins.m && margins.urn_size == margins.colour_count;
        if (variant == Variant::Balanced || variant.is_labeled()) && !balanced {
            return Err(Error::InvalidMargins(format!(
                "{variant:?} needs d = m and urn_size = colour_count"
            )));
        }
        Ok(Self { margins, mu, variant })
    }

    pub fn generalised(d: usize, m: usize, n: usize, mu: PermutationMeasure) -> Result<Self> {
        Self::new(Margins::generalised(d, m, n)?, mu, Variant::Generalised)
    }

    pub fn balanced(d: usize, n: usize, mu: PermutationMeasure) -> Result<Self> {
        Self::new(Margins::balanced(d, n)?, mu, Variant::Balanced)
    }

    pub fn mean_field(d: usize, m: usize, n: usize) -> Result<Self> {
        let margins = Margins::generalised(d, m, n)?;
        Self::new(margins, PermutationMeasure::transpositions(d), Variant::MeanField)
    }

    /// Stack/urn size for labeled variants.
    pub fn n(&self) -> usize {
        self.margins.urn_size
    }
}

fn check_work(what: &'static str, states: usize, choices: u128, atoms: usize, cap: u128) -> Result<()> {
    let needed = (states as u128).saturating_mul(choices).saturating_mul(atoms as u128);
    if needed > cap {
        return Err(Error::CapExceeded { what, cap, needed });
    }
    Ok(())
}

fn assemble(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<StochasticMatrix> {
    let mut data = vec![0.0; n * n];
    for (i, row) in rows.into_iter().enumerate() {
        for (j, p) in row {
            data[i * n + j] += p;
        }
    }
    StochasticMatrix::from_dense(n, data)
}

/// Unlabeled kernel: one ball per urn, colour-weighted, moved by `σ ~ μ`.
pub fn build_kernel(spec: &ChainSpec, space: &StateSpace, work_cap: u128) -> Result<StochasticMatrix> {
    let mg = *space.margins();
    if mg != spec.margins {
        return Err(Error::InvalidArgument("state space margins differ from the chain spec".into()));
    }
    let (d, m) = (mg.d, mg.m);
    let choices = (m as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    check_work("kernel construction work", space.len(), choices, spec.mu.atoms().len(), work_cap)?;
    let size = mg.urn_size as f64;
    let rows: Vec<Vec<(usize, f64)>> = (0..space.len())
        .into_par_iter()
        .map(|k| {
            let x = space.state(k);
            let mut out = Vec::new();
            let mut c = vec![0usize; d];
            let mut y = x.clone();
            loop {
                let w: f64 = (0..d).map(|i| f64::from(x.get(i, c[i])) / size).product();
                if w > 0.0 {
                    for (sigma, mw) in spec.mu.atoms() {
                        y.counts_mut().copy_from_slice(x.counts());
                        for i in 0..d {
                            let v = y.get(i, c[i]);
                            y.set(i, c[i], v - 1);
                        }
                        for i in 0..d {
                            let t = sigma.apply(i);
                            let v = y.get(t, c[i]);
                            y.set(t, c[i], v + 1);
                        }
                        let j = space.index_of(&y).expect("moves preserve margins");
                        out.push((j, w * mw));
                    }
                }
                if !odometer(&mut c, m) {
                    break;
                }
            }
            out
        })
        .collect();
    assemble(space.len(), rows)
}

/// Advances `c ∈ [base]^len`; false after the last vector.
fn odometer(c: &mut [usize], base: usize) -> bool {
    for v in c.iter_mut() {
        *v += 1;
        if *v < base {
            return true;
        }
        *v = 0;
    }
    false
}

/// Labeled kernel: a uniform ball from each urn moves to urn `σ(i)`.
pub fn build_labeled_kernel(spec: &ChainSpec, space: &LabeledSpace, work_cap: u128) -> Result<StochasticMatrix> {
    let (d, n) = (space.d(), space.n());
    if d != spec.margins.d || n != spec.n() {
        return Err(Error::InvalidArgument("labeled space shape differs from the chain spec".into()));
    }
    let choices = (n as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    check_work("labeled kernel work", space.len(), choices, spec.mu.atoms().len(), work_cap)?;
    let w0 = 1.0 / choices as f64;
    let rows: Vec<Vec<(usize, f64)>> = (0..space.len())
        .into_par_iter()
        .map(|k| {
            let s = space.state(k);
            let mut out = Vec::new();
            let mut p = vec![0usize; d];
            let mut next = vec![0u16; d * n];
            loop {
                for (sigma, mw) in spec.mu.atoms() {
                    for i in 0..d {
                        let target = sigma.apply(i);
                        let urn = &mut next[target * n..(target + 1) * n];
                        // keep the untouched balls of the target urn, then add the arrival
                        let mut w = 0;
                        for (q, &b) in s[target * n..(target + 1) * n].iter().enumerate() {
                            if q != p[target] {
                                urn[w] = b;
                                w += 1;
                            }
                        }
                        urn[w] = s[i * n + p[i]];
                        urn.sort_unstable();
                    }
                    let j = space.index_of(&next).expect("moves preserve urn sizes");
                    out.push((j, w0 * mw));
                }
                if !odometer(&mut p, n) {
                    break;
                }
            }
            out
        })
        .collect();
    assemble(space.len(), rows)
}

/// Multi-stack random-to-random kernel.
///
/// Every drawn stack loses a uniform card; the card drawn from stack `i` is
/// inserted into stack `σ(i)` at one of its `n` slots, uniformly. The
/// restricted variant draws only from stacks with `σ(i) ≠ i`.
pub fn build_shuffle_kernel(spec: &ChainSpec, space: &OrderedSpace, work_cap: u128) -> Result<StochasticMatrix> {
    let (d, n) = (space.d(), space.n());
    if d != spec.margins.d || n != spec.n() {
        return Err(Error::InvalidArgument("ordered space shape differs from the chain spec".into()));
    }
    let restricted = match spec.variant {
        Variant::Shuffle => false,
        Variant::RestrictedShuffle => true,
        v => return Err(Error::InvalidArgument(format!("{v:?} is not a shuffle variant"))),
    };
    let per_stack = (n * n) as u128;
    let choices = per_stack.checked_pow(d as u32).unwrap_or(u128::MAX);
    check_work("shuffle kernel work", space.len(), choices, spec.mu.atoms().len(), work_cap)?;
    let rows: Vec<Vec<(usize, f64)>> = (0..space.len())
        .into_par_iter()
        .map(|k| {
            let s = space.state(k);
            let mut out = Vec::new();
            for (sigma, mw) in spec.mu.atoms() {
                let drawn: Vec<usize> = (0..d).filter(|&i| !restricted || sigma.apply(i) != i).collect();
                if drawn.is_empty() {
                    out.push((k, *mw));
                    continue;
                }
                let r = drawn.len();
                let w = mw / (per_stack as f64).powi(r as i32);
                // choice vector: (draw position, insert slot) per drawn stack
                let mut pick = vec![0usize; r];
                let mut slot = vec![0usize; r];
                let mut next = vec![0u16; d * n];
                loop {
                    next.copy_from_slice(s);
                    for (a, &i) in drawn.iter().enumerate() {
                        let target = sigma.apply(i);
                        let card = s[i * n + pick[a]];
                        // the target was drawn from too, so it holds n − 1 cards
                        let b = drawn.iter().position(|&t| t == target).expect("targets are drawn stacks");
                        let kept: Vec<u16> = s[target * n..(target + 1) * n]
                            .iter()
                            .enumerate()
                            .filter(|&(q, _)| q != pick[b])
                            .map(|(_, &c)| c)
                            .collect();
                        let stack = &mut next[target * n..(target + 1) * n];
                        let mut it = kept.into_iter();
                        for (q, cell) in stack.iter_mut().enumerate() {
                            *cell = if q == slot[a] { card } else { it.next().expect("n − 1 kept cards") };
                        }
                    }
                    let j = space.index_of(&next).expect("shuffles preserve stack sizes");
                    out.push((j, w));
                    if !odometer(&mut pick, n) && !odometer(&mut slot, n) {
                        break;
                    }
                }
            }
            out
        })
        .collect();
    assemble(space.len(), rows)
}

/// The enumerated space a chain lives on.
#[derive(Debug, Clone)]
pub enum Space {
    Unlabeled(StateSpace),
    Labeled(LabeledSpace),
    Ordered(OrderedSpace),
}

impl Space {
    pub fn len(&self) -> usize {
        match self {
            Space::Unlabeled(s) => s.len(),
            Space::Labeled(s) => s.len(),
            Space::Ordered(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Human-readable label of state `k`.
    pub fn label(&self, k: usize) -> String {
        match self {
            Space::Unlabeled(s) => format!("{:?}", s.state(k)),
            Space::Labeled(s) => format!("{:?}", s.state(k)),
            Space::Ordered(s) => format!("{:?}", s.state(k)),
        }
    }

    pub fn unlabeled(&self) -> Option<&StateSpace> {
        match self {
            Space::Unlabeled(s) => Some(s),
            _ => None,
        }
    }
}

/// A chain spec together with its space, kernel and stationary law.
#[derive(Debug, Clone)]
pub struct BuiltChain {
    pub spec: ChainSpec,
    pub space: Space,
    pub kernel: StochasticMatrix,
    pub pi: StationaryTable,
}

impl BuiltChain {
    pub fn configuration(&self, k: usize) -> Option<&Configuration> {
        self.space.unlabeled().map(|s| s.state(k))
    }
}

/// Enumerates the space and builds the kernel for any variant. `cap` bounds
/// the number of states (defaults depend on the variant when `None`).
pub fn build_chain(spec: &ChainSpec, cap: Option<usize>, work_cap: u128) -> Result<BuiltChain> {
    match spec.variant {
        Variant::Generalised | Variant::Balanced | Variant::MeanField => {
            let space = StateSpace::enumerate(spec.margins, cap.unwrap_or(DEFAULT_STATE_CAP))?;
            let kernel = build_kernel(spec, &space, work_cap)?;
            let pi = space.stationary();
            Ok(BuiltChain {
                spec: spec.clone(),
                space: Space::Unlabeled(space),
                kernel,
                pi,
            })
        }
        Variant::Labeled => {
            let space = LabeledSpace::enumerate(spec.margins.d, spec.n(), cap.unwrap_or(DEFAULT_STATE_CAP))?;
            let kernel = build_labeled_kernel(spec, &space, work_cap)?;
            let pi = StationaryTable::uniform(space.len());
            Ok(BuiltChain {
                spec: spec.clone(),
                space: Space::Labeled(space),
                kernel,
                pi,
            })
        }
        Variant::Shuffle | Variant::RestrictedShuffle => {
            let space = OrderedSpace::enumerate(spec.margins.d, spec.n(), cap.unwrap_or(DEFAULT_ORDERED_CAP))?;
            let kernel = build_shuffle_kernel(spec, &space, work_cap)?;
            let pi = StationaryTable::uniform(space.len());
            Ok(BuiltChain {
                spec: spec.clone(),
                space: Space::Ordered(space),
                kernel,
                pi,
            })
        }
    }
}
