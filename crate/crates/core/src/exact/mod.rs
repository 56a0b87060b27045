//! Heat kernels, total-variation curves and mixing times by uniformization.
//!
//! `H_t = e^{t(P−I)} = Σ_k Poisson_t(k) Pᵏ`. Poisson weights are computed in
//! log space and truncated on both sides so the discarded mass is below
//! `tol`; the kept weights are renormalized, so every evolved row is a
//! probability vector up to rounding.
//!
//! Mixing times bracket the crossing of the monotone distance `t ↦ d(t)` by
//! doubling from `t = 1`, then shrink the bracket by evaluating eight
//! interior points per sweep. Sweeps restart from the rows already evolved to
//! the left end of the bracket, so the total cost is a small multiple of one
//! evolution to the mixing time.

mod paths;
mod spectral;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{kernel_irreducible, BuiltChain, StochasticMatrix};
use crate::perms::{single_ball_matrix, single_ball_mixing_time};
use crate::statespace::StationaryTable;

pub use paths::{bfs_paths, congestion_from_list, congestion_ratio, congestion_ratio_with, ComparisonReport, PathFamily};
pub use spectral::{
    dirichlet_form, mixing_report, relaxation_time, reversible_gap, spectral_profile, spectral_profile_set,
    spectral_profile_set_modified, stationary_from_kernel, MixingReport, ProfilePoint, PROFILE_CAP,
};

/// Default Poisson truncation mass.
pub const DEFAULT_TRUNCATION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingOptions {
    /// Stop when `hi − lo ≤ rel_tol · hi`.
    pub rel_tol: f64,
    /// Poisson truncation mass per evolution.
    pub trunc_tol: f64,
    /// Give up when the bracket would exceed this time.
    pub max_time: f64,
}

impl Default for MixingOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-4,
            trunc_tol: DEFAULT_TRUNCATION,
            max_time: 1e9,
        }
    }
}

/// Normalized Poisson(t) weights on `first..first + w.len()`.
#[derive(Debug, Clone)]
struct PoissonWeights {
    first: usize,
    w: Vec<f64>,
}

impl PoissonWeights {
    fn new(t: f64, tol: f64) -> Self {
        if t <= 0.0 {
            return Self { first: 0, w: vec![1.0] };
        }
        let kmax = (t + 12.0 * t.sqrt() + 40.0).ceil() as usize;
        let ln_t = t.ln();
        let mut lw = Vec::with_capacity(kmax + 1);
        let mut ln_fact = 0.0f64;
        for k in 0..=kmax {
            if k > 0 {
                ln_fact += (k as f64).ln();
            }
            lw.push(-t + k as f64 * ln_t - ln_fact);
        }
        let w: Vec<f64> = lw.iter().map(|v| v.exp()).collect();
        let half = 0.5 * tol;
        let mut lo = 0;
        let mut acc = 0.0;
        while lo < kmax && acc + w[lo] <= half {
            acc += w[lo];
            lo += 1;
        }
        let mut hi = kmax;
        let mut acc = 0.0;
        while hi > lo && acc + w[hi] <= half {
            acc += w[hi];
            hi -= 1;
        }
        let kept = &w[lo..=hi];
        let s: f64 = kept.iter().sum();
        Self {
            first: lo,
            w: kept.iter().map(|v| v / s).collect(),
        }
    }

    fn last(&self) -> usize {
        self.first + self.w.len() - 1
    }
}

/// `ν e^{t(P−I)}` for every `t` in `times`, from one pass over the powers.
pub fn evolve(p: &StochasticMatrix, start: &[f64], times: &[f64], tol: f64) -> Vec<Vec<f64>> {
    let weights: Vec<PoissonWeights> = times.iter().map(|&t| PoissonWeights::new(t, tol)).collect();
    evolve_weighted(p, start, &weights)
}

fn evolve_weighted(p: &StochasticMatrix, start: &[f64], weights: &[PoissonWeights]) -> Vec<Vec<f64>> {
    let n = p.size();
    let sp = p.sparse();
    let kmax = weights.iter().map(PoissonWeights::last).max().unwrap_or(0);
    let mut out = vec![vec![0.0; n]; weights.len()];
    let mut v = start.to_vec();
    let mut next = vec![0.0; n];
    for k in 0..=kmax {
        for (acc, pw) in out.iter_mut().zip(weights) {
            if k >= pw.first && k <= pw.last() {
                let w = pw.w[k - pw.first];
                acc.iter_mut().zip(&v).for_each(|(a, b)| *a += w * b);
            }
        }
        if k == kmax {
            break;
        }
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let (cols, vals) = sp.row(i);
            for (&j, &pij) in cols.iter().zip(vals) {
                next[j as usize] += vi * pij;
            }
        }
        std::mem::swap(&mut v, &mut next);
    }
    out
}

/// Row `x` of `H_t`.
pub fn heat_kernel_row(p: &StochasticMatrix, x: usize, t: f64, tol: f64) -> Vec<f64> {
    let mut start = vec![0.0; p.size()];
    start[x] = 1.0;
    evolve(p, &start, &[t], tol).pop().expect("one time requested")
}

/// `‖μ − π‖_TV`.
pub fn tv_distance(mu: &[f64], pi: &StationaryTable) -> f64 {
    0.5 * pi.l1_distance(mu)
}

/// `max_y |μ(y)/π(y) − 1|`.
pub fn linf_ratio_distance(mu: &[f64], pi: &StationaryTable) -> f64 {
    mu.iter()
        .zip(pi.as_slice())
        .map(|(m, p)| (m / p - 1.0).abs())
        .fold(0.0, f64::max)
}

type Distance = fn(&[f64], &StationaryTable) -> f64;

/// All rows of `H_t` at one time `t`.
#[derive(Debug, Clone)]
struct HeatFlow {
    t: f64,
    rows: Vec<Vec<f64>>,
}

impl HeatFlow {
    fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|x| {
                let mut r = vec![0.0; n];
                r[x] = 1.0;
                r
            })
            .collect();
        Self { t: 0.0, rows }
    }

    /// Worst distance at `self.t + δ` for every `δ` in `deltas`.
    fn worst_at(&self, p: &StochasticMatrix, pi: &StationaryTable, deltas: &[f64], tol: f64, dist: Distance) -> Vec<f64> {
        let weights: Vec<PoissonWeights> = deltas.iter().map(|&t| PoissonWeights::new(t, tol)).collect();
        self.rows
            .par_iter()
            .map(|row| {
                evolve_weighted(p, row, &weights)
                    .iter()
                    .map(|r| dist(r, pi))
                    .collect::<Vec<f64>>()
            })
            .reduce(
                || vec![0.0; deltas.len()],
                |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect(),
            )
    }

    fn advance(&self, p: &StochasticMatrix, delta: f64, tol: f64) -> Self {
        let weights = [PoissonWeights::new(delta, tol)];
        let rows = self
            .rows
            .par_iter()
            .map(|row| evolve_weighted(p, row, &weights).pop().expect("one time"))
            .collect();
        Self {
            t: self.t + delta,
            rows,
        }
    }
}

/// Worst-case distance from every start state at each time (times in any order).
fn worst_many(p: &StochasticMatrix, pi: &StationaryTable, times: &[f64], tol: f64, dist: Distance) -> Vec<f64> {
    HeatFlow::identity(p.size()).worst_at(p, pi, times, tol, dist)
}

/// `d(t) = max_x ‖H_t(x, ·) − π‖_TV`.
pub fn worst_case_tv(p: &StochasticMatrix, pi: &StationaryTable, t: f64, tol: f64) -> f64 {
    worst_many(p, pi, &[t], tol, tv_distance)[0]
}

pub fn worst_case_tv_many(p: &StochasticMatrix, pi: &StationaryTable, times: &[f64], tol: f64) -> Vec<f64> {
    worst_many(p, pi, times, tol, tv_distance)
}

/// `max_{x,y} |H_t(x, y)/π(y) − 1|`.
pub fn worst_case_linf(p: &StochasticMatrix, pi: &StationaryTable, t: f64, tol: f64) -> f64 {
    worst_many(p, pi, &[t], tol, linf_ratio_distance)[0]
}

/// Sampled worst-case TV distances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TVCurve {
    pub times: Vec<f64>,
    pub worst_case_tv: Vec<f64>,
}

impl TVCurve {
    /// Columns `t,d_tv`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,d_tv")?;
        for (t, d) in self.times.iter().zip(&self.worst_case_tv) {
            writeln!(w, "{t},{d:e}")?;
        }
        Ok(())
    }
}

pub fn tv_curve(p: &StochasticMatrix, pi: &StationaryTable, times: &[f64], tol: f64) -> Result<TVCurve> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    if times.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("time grid must be finite, nonnegative and increasing".into()));
    }
    Ok(TVCurve {
        times: times.to_vec(),
        worst_case_tv: worst_case_tv_many(p, pi, times, tol),
    })
}

/// Log-spaced grid of `count` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn crossing_time(p: &StochasticMatrix, pi: &StationaryTable, eps: f64, opts: &MixingOptions, dist: Distance) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if pi.len() != p.size() {
        return Err(Error::InvalidArgument("stationary table and kernel differ in size".into()));
    }
    if !kernel_irreducible(p) {
        return Err(Error::Reducible("kernel is not irreducible; distance never vanishes".into()));
    }
    let tol = opts.trunc_tol;
    let mut lo = HeatFlow::identity(p.size());
    let d0 = lo.worst_at(p, pi, &[0.0], tol, dist)[0];
    if d0 <= eps {
        return Ok(0.0);
    }
    // doubling: after the loop d(lo.t) > eps ≥ d(hi)
    let mut hi = 1.0;
    loop {
        let delta = hi - lo.t;
        if lo.worst_at(p, pi, &[delta], tol, dist)[0] <= eps {
            break;
        }
        lo = lo.advance(p, delta, tol);
        hi *= 2.0;
        if hi > opts.max_time {
            return Err(Error::NoConvergence);
        }
    }
    const SPLIT: usize = 9;
    while hi - lo.t > opts.rel_tol * hi {
        let h = (hi - lo.t) / SPLIT as f64;
        let deltas: Vec<f64> = (1..SPLIT).map(|j| j as f64 * h).collect();
        let d = lo.worst_at(p, pi, &deltas, tol, dist);
        let above = d.iter().take_while(|&&v| v > eps).count();
        hi = if above < deltas.len() { lo.t + deltas[above] } else { hi };
        if above > 0 {
            lo = lo.advance(p, deltas[above - 1], tol);
        }
    }
    Ok(0.5 * (lo.t + hi))
}

/// `t_mix(ε) = inf{t : d(t) ≤ ε}` to relative accuracy `opts.rel_tol`.
pub fn mixing_time_with(p: &StochasticMatrix, pi: &StationaryTable, eps: f64, opts: &MixingOptions) -> Result<f64> {
    crossing_time(p, pi, eps, opts, tv_distance)
}

pub fn mixing_time(p: &StochasticMatrix, pi: &StationaryTable, eps: f64) -> Result<f64> {
    mixing_time_with(p, pi, eps, &MixingOptions::default())
}

/// `ℓ∞` mixing time: first `t` with `max_{x,y} |H_t(x,y)/π(y) − 1| ≤ ε`.
pub fn linf_mixing_time_with(p: &StochasticMatrix, pi: &StationaryTable, eps: f64, opts: &MixingOptions) -> Result<f64> {
    crossing_time(p, pi, eps, opts, linf_ratio_distance)
}

pub fn linf_mixing_time(p: &StochasticMatrix, pi: &StationaryTable, eps: f64) -> Result<f64> {
    linf_mixing_time_with(p, pi, eps, &MixingOptions::default())
}

/// `m·n·t_single(1/√n)`, the predicted cutoff location for an unlabeled chain.
pub fn predicted_location(chain: &BuiltChain) -> Result<f64> {
    let mg = chain.spec.margins;
    let n = mg.scale();
    let u = single_ball_matrix(&chain.spec.mu);
    let ts = single_ball_mixing_time(&u, 1.0, 1.0 / n.sqrt())?;
    Ok(mg.m as f64 * n * ts)
}

/// One row of a cutoff scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffRow {
    pub n: usize,
    pub states: usize,
    /// `t_mix(ε)` for the smaller `ε`.
    pub t_early: f64,
    /// `t_mix(1 − ε)`.
    pub t_late: f64,
    /// `t_mix(ε) / t_mix(1 − ε)`, at least 1.
    pub ratio: f64,
    pub predicted: f64,
    /// `t_mix(ε) / predicted`.
    pub location_ratio: f64,
}

/// Mixing times at `ε` and `1 − ε` (`ε < 1/2`) for each `(n, chain)`.
pub fn cutoff_ratio_scan(family: &[(usize, BuiltChain)], eps: f64) -> Result<Vec<CutoffRow>> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidArgument(format!("cutoff scan needs eps in (0, 1/2), got {eps}")));
    }
    family
        .iter()
        .map(|(n, c)| {
            let t_early = mixing_time(&c.kernel, &c.pi, eps)?;
            let t_late = mixing_time(&c.kernel, &c.pi, 1.0 - eps)?;
            let predicted = predicted_location(c)?;
            Ok(CutoffRow {
                n: *n,
                states: c.kernel.size(),
                t_early,
                t_late,
                ratio: t_early / t_late,
                predicted,
                location_ratio: t_early / predicted,
            })
        })
        .collect()
}

pub fn write_cutoff_csv<W: Write>(rows: &[CutoffRow], mut w: W) -> Result<()> {
    writeln!(w, "n,states,t_mix_eps,t_mix_1_minus_eps,ratio,predicted,location_ratio")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.n, r.states, r.t_early, r.t_late, r.ratio, r.predicted, r.location_ratio
        )?;
    }
    Ok(())
}
