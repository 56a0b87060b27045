//! Trajectory simulation with reproducible per-replicate random streams.
//!
//! Every variant projects to the same count process: a stack that draws and
//! reinserts into itself leaves its colour counts unchanged, exactly as an urn
//! whose ball stays put. Hitting, occupation and variance experiments therefore
//! run on counts for every variant; [`simulate_shuffle`] tracks cards.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{ChainSpec, Variant};
use crate::perms::Permutation;
use crate::statespace::{CentreSpec, Configuration, Margins, ResolvedCentre};

/// Default per-replicate jump budget.
pub const DEFAULT_JUMP_BUDGET: u64 = 1_000_000_000;

/// Replicate count, master seed and jump budget shared by every experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McOptions {
    pub replicates: usize,
    pub seed: u64,
    pub budget: u64,
}

impl McOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            budget: DEFAULT_JUMP_BUDGET,
        }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    fn validate(&self, min_replicates: usize) -> Result<()> {
        if self.replicates < min_replicates.max(1) {
            return Err(Error::InvalidArgument(format!(
                "need at least {} replicates, got {}",
                min_replicates.max(1),
                self.replicates
            )));
        }
        if self.budget == 0 {
            return Err(Error::InvalidArgument("jump budget must be positive".into()));
        }
        Ok(())
    }
}

/// The stream for replicate `r`: the master seed fixes the key, `r` selects
/// the ChaCha stream, so replicates never share randomness.
pub fn replicate_rng(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Runs `f` once per replicate; the output is ordered by replicate index and
/// independent of the thread count.
fn run_replicates<T, F>(opts: &McOptions, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    (0..opts.replicates)
        .into_par_iter()
        .map(|r| f(&mut replicate_rng(opts.seed, r as u64)))
        .collect()
}

/// A configuration together with its continuous clock and jump count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub counts: Configuration,
    pub clock: f64,
    pub jumps: u64,
}

impl SimState {
    pub fn new(counts: Configuration) -> Self {
        Self {
            counts,
            clock: 0.0,
            jumps: 0,
        }
    }
}

/// Samples `σ ~ μ` by inverse transform over the cumulative weights.
#[derive(Debug, Clone)]
struct PermSampler {
    perms: Vec<Permutation>,
    cumulative: Vec<f64>,
}

impl PermSampler {
    fn new(spec: &ChainSpec) -> Self {
        let mut acc = 0.0;
        let (perms, cumulative) = spec
            .mu
            .atoms()
            .iter()
            .map(|(p, w)| {
                acc += w;
                (p.clone(), acc)
            })
            .unzip();
        Self { perms, cumulative }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &Permutation {
        if self.perms.len() == 1 {
            return &self.perms[0];
        }
        let total = *self.cumulative.last().expect("a measure has atoms");
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u);
        &self.perms[k.min(self.perms.len() - 1)]
    }
}

/// Count-level dynamics of a chain spec.
#[derive(Debug, Clone)]
pub struct UrnSimulator {
    margins: Margins,
    sampler: PermSampler,
    colours: Vec<usize>,
}

impl UrnSimulator {
    pub fn new(spec: &ChainSpec) -> Self {
        Self {
            margins: spec.margins,
            sampler: PermSampler::new(spec),
            colours: vec![0; spec.margins.d],
        }
    }

    pub fn margins(&self) -> &Margins {
        &self.margins
    }

    /// Validated initial state.
    pub fn start(&self, counts: &Configuration) -> Result<SimState> {
        counts.check_margins(&self.margins)?;
        Ok(SimState::new(counts.clone()))
    }

    /// Advances the clock by an Exponential(1) holding time, then jumps.
    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut SimState, rng: &mut R) {
        let hold: f64 = Exp1.sample(rng);
        state.clock += hold;
        self.jump(state, rng);
    }

    /// One simultaneous move, leaving the clock alone.
    pub fn jump<R: Rng + ?Sized>(&mut self, state: &mut SimState, rng: &mut R) {
        let (d, m) = (self.margins.d, self.margins.m);
        let size = self.margins.urn_size as u32;
        // colours are drawn from the pre-move state for every urn
        for i in 0..d {
            let mut u = rng.random_range(0..size);
            let mut j = 0;
            loop {
                let c = state.counts.get(i, j);
                if u < c {
                    break;
                }
                u -= c;
                j += 1;
            }
            debug_assert!(j < m);
            self.colours[i] = j;
        }
        let sigma = self.sampler.sample(rng);
        for i in 0..d {
            let c = self.colours[i];
            let v = state.counts.get(i, c);
            state.counts.set(i, c, v - 1);
        }
        for i in 0..d {
            let (t, c) = (sigma.apply(i), self.colours[i]);
            let v = state.counts.get(t, c);
            state.counts.set(t, c, v + 1);
        }
        state.jumps += 1;
    }

    /// Runs to time `t`: the returned state is the one occupied at `t`.
    /// Returns false when the budget ran out first.
    pub fn run_until<R: Rng + ?Sized>(&mut self, state: &mut SimState, t: f64, budget: u64, rng: &mut R) -> bool {
        loop {
            let hold: f64 = Exp1.sample(rng);
            if state.clock + hold > t {
                return true;
            }
            if state.jumps >= budget {
                return false;
            }
            state.clock += hold;
            self.jump(state, rng);
        }
    }
}

/// Northwest-corner fill: colour 1 fills urn 1, spills into urn 2, and so on,
/// then colour 2 continues where colour 1 stopped.
pub fn adversarial_start(margins: &Margins) -> Result<Configuration> {
    let (d, m) = (margins.d, margins.m);
    let mut room = vec![margins.urn_size; d];
    let mut counts = vec![0u32; d * m];
    let mut i = 0;
    for j in 0..m {
        let mut left = margins.colour_count;
        while left > 0 {
            if i == d {
                return Err(Error::InvalidMargins("margins do not admit a filling".into()));
            }
            let put = left.min(room[i]);
            counts[i * m + j] += put as u32;
            room[i] -= put;
            left -= put;
            if room[i] == 0 {
                i += 1;
            }
        }
    }
    let x = Configuration::from_counts(d, m, counts)?;
    x.check_margins(margins)?;
    Ok(x)
}

/// Burn-in long enough to treat the end state as stationary: `10·mn·log n`.
pub fn default_burn_in(margins: &Margins) -> f64 {
    let n = margins.scale().max(2.0);
    10.0 * margins.urn_size as f64 * n.ln()
}

/// Order statistics of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> SampleSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let count = sorted.len();
    let mean = sorted.iter().sum::<f64>() / count as f64;
    let var = if count > 1 {
        sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
    } else {
        0.0
    };
    SampleSummary {
        count,
        mean,
        std_dev: var.sqrt(),
        min: sorted.first().copied().unwrap_or(f64::NAN),
        q25: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q75: quantile_sorted(&sorted, 0.75),
        max: sorted.last().copied().unwrap_or(f64::NAN),
    }
}

fn write_values<W: Write>(mut w: W, header: &str, values: &[f64]) -> Result<()> {
    writeln!(w, "replicate,{header}")?;
    for (r, v) in values.iter().enumerate() {
        writeln!(w, "{r},{v:e}")?;
    }
    Ok(())
}

/// Centre hitting times, one per replicate. A replicate that exhausted its
/// budget records the clock it reached and is flagged in `reached`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingSample {
    pub times: Vec<f64>,
    pub jumps: Vec<u64>,
    pub reached: Vec<bool>,
    pub centre: CentreSpec,
    pub start: Configuration,
    pub seed: u64,
    pub budget: u64,
}

impl HittingSample {
    pub fn is_partial(&self) -> bool {
        self.reached.iter().any(|r| !r)
    }

    pub fn summary(&self) -> SampleSummary {
        summarize(&self.times)
    }

    /// Fraction of replicates that hit by time `t`.
    pub fn ecdf(&self, t: f64) -> f64 {
        let hits = self.times.iter().zip(&self.reached).filter(|&(&s, &r)| r && s <= t).count();
        hits as f64 / self.times.len() as f64
    }

    /// Interquartile range over the median.
    pub fn relative_iqr(&self) -> f64 {
        let s = self.summary();
        (s.q75 - s.q25) / s.median
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_values(w, "hitting_time", &self.times)
    }
}

fn centre_for(spec: &ChainSpec, centre: &CentreSpec, start: &Configuration) -> Result<ResolvedCentre> {
    start.check_margins(&spec.margins)?;
    centre.resolve(&spec.margins)
}

/// First time each replicate enters the centre set.
pub fn hitting_time_centre(
    spec: &ChainSpec,
    centre: &CentreSpec,
    start: &Configuration,
    opts: &McOptions,
) -> Result<HittingSample> {
    opts.validate(1)?;
    let set = centre_for(spec, centre, start)?;
    let base = UrnSimulator::new(spec);
    let runs = run_replicates(opts, |rng| {
        let mut sim = base.clone();
        let mut state = SimState::new(start.clone());
        while !set.contains(&state.counts) {
            if state.jumps >= opts.budget {
                return (state.clock, state.jumps, false);
            }
            sim.step(&mut state, rng);
        }
        (state.clock, state.jumps, true)
    });
    Ok(HittingSample {
        times: runs.iter().map(|r| r.0).collect(),
        jumps: runs.iter().map(|r| r.1).collect(),
        reached: runs.iter().map(|r| r.2).collect(),
        centre: *centre,
        start: start.clone(),
        seed: opts.seed,
        budget: opts.budget,
    })
}

/// Fraction of the window `[t1, t2]` spent in the centre, per replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationSample {
    pub t1: f64,
    pub t2: f64,
    pub fractions: Vec<f64>,
    pub completed: Vec<bool>,
    pub centre: CentreSpec,
    pub start: Configuration,
    pub seed: u64,
    pub budget: u64,
}

impl OccupationSample {
    pub fn is_partial(&self) -> bool {
        self.completed.iter().any(|c| !c)
    }

    pub fn summary(&self) -> SampleSummary {
        summarize(&self.fractions)
    }

    /// Standard error of the mean fraction.
    pub fn mean_stderr(&self) -> f64 {
        self.summary().std_dev / (self.fractions.len() as f64).sqrt()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_values(w, "fraction", &self.fractions)
    }
}

/// Occupation of the centre over `[t1, t2]` measured from the start, using
/// the holding intervals of the jump chain. A positive `t1` doubles as burn-in.
pub fn occupation_fraction(
    spec: &ChainSpec,
    centre: &CentreSpec,
    start: &Configuration,
    window: (f64, f64),
    opts: &McOptions,
) -> Result<OccupationSample> {
    opts.validate(1)?;
    let (t1, t2) = window;
    if !(t1 >= 0.0 && t2 > t1 && t2.is_finite()) {
        return Err(Error::InvalidArgument(format!("window [{t1}, {t2}] must satisfy 0 ≤ t1 < t2 < ∞")));
    }
    let set = centre_for(spec, centre, start)?;
    let base = UrnSimulator::new(spec);
    let runs = run_replicates(opts, |rng| {
        let mut sim = base.clone();
        let mut state = SimState::new(start.clone());
        let mut inside = 0.0;
        loop {
            let hold: f64 = Exp1.sample(rng);
            let (a, b) = (state.clock, state.clock + hold);
            if set.contains(&state.counts) {
                inside += (b.min(t2) - a.max(t1)).max(0.0);
            }
            if b >= t2 {
                return ((inside / (t2 - t1)).clamp(0.0, 1.0), true);
            }
            if state.jumps >= opts.budget {
                return ((inside / (t2 - t1)).clamp(0.0, 1.0), false);
            }
            state.clock = b;
            sim.jump(&mut state, rng);
        }
    });
    Ok(OccupationSample {
        t1,
        t2,
        fractions: runs.iter().map(|r| r.0).collect(),
        completed: runs.iter().map(|r| r.1).collect(),
        centre: *centre,
        start: start.clone(),
        seed: opts.seed,
        budget: opts.budget,
    })
}

/// Per-cell moments of `X_t` across replicates, with jackknife standard
/// errors for the variances. Entries are row-major `d × m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceTable {
    pub t: f64,
    pub d: usize,
    pub m: usize,
    pub replicates: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub stderr: Vec<f64>,
    pub completed: bool,
}

impl VarianceTable {
    pub fn max_variance(&self) -> f64 {
        self.variance.iter().copied().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "urn,colour,mean,variance,stderr")?;
        for i in 0..self.d {
            for j in 0..self.m {
                let k = i * self.m + j;
                writeln!(w, "{},{},{:e},{:e},{:e}", i + 1, j + 1, self.mean[k], self.variance[k], self.stderr[k])?;
            }
        }
        Ok(())
    }
}

/// Unbiased sample variance and its delete-one jackknife standard error.
pub fn jackknife_variance(values: &[f64]) -> (f64, f64) {
    let r = values.len();
    if r < 3 {
        return (0.0, f64::NAN);
    }
    let centre = values.iter().sum::<f64>() / r as f64;
    // centred sums keep the leave-one-out updates well conditioned
    let (s1, s2) = values
        .iter()
        .map(|v| v - centre)
        .fold((0.0, 0.0), |(a, b), y| (a + y, b + y * y));
    let rf = r as f64;
    let full = (s2 - s1 * s1 / rf) / (rf - 1.0);
    let loo: Vec<f64> = values
        .iter()
        .map(|v| {
            let y = v - centre;
            let (a, b, k) = (s1 - y, s2 - y * y, rf - 1.0);
            (b - a * a / k) / (k - 1.0)
        })
        .collect();
    let mean_loo = loo.iter().sum::<f64>() / rf;
    let spread = loo.iter().map(|v| (v - mean_loo).powi(2)).sum::<f64>();
    (full.max(0.0), ((rf - 1.0) / rf * spread).sqrt())
}

/// Empirical `Var[X_t(i, j)]` per cell from `start`.
pub fn variance_probe(spec: &ChainSpec, start: &Configuration, t: f64, opts: &McOptions) -> Result<VarianceTable> {
    opts.validate(100)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time {t} must be finite and nonnegative")));
    }
    start.check_margins(&spec.margins)?;
    let base = UrnSimulator::new(spec);
    let runs = run_replicates(opts, |rng| {
        let mut sim = base.clone();
        let mut state = SimState::new(start.clone());
        let ok = sim.run_until(&mut state, t, opts.budget, rng);
        (state.counts, ok)
    });
    let (d, m) = (spec.margins.d, spec.margins.m);
    let cells = d * m;
    let mut mean = Vec::with_capacity(cells);
    let mut variance = Vec::with_capacity(cells);
    let mut stderr = Vec::with_capacity(cells);
    for k in 0..cells {
        let col: Vec<f64> = runs.iter().map(|(x, _)| f64::from(x.counts()[k])).collect();
        mean.push(col.iter().sum::<f64>() / col.len() as f64);
        let (v, se) = jackknife_variance(&col);
        variance.push(v);
        stderr.push(se);
    }
    Ok(VarianceTable {
        t,
        d,
        m,
        replicates: opts.replicates,
        mean,
        variance,
        stderr,
        completed: runs.iter().all(|r| r.1),
    })
}

/// Monte Carlo estimate of `P(τ_N ≤ εN²/α | Z₀ = 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitEstimate {
    pub n: usize,
    pub alpha: f64,
    pub eps: f64,
    pub horizon: f64,
    pub hits: usize,
    pub replicates: usize,
    pub estimate: f64,
    pub stderr: f64,
}

/// Rate-one reflected walk on `{1..N}` stepping right with probability
/// `1/2 + α/N`. A blocked move at an endpoint is a self-loop.
///
/// The number of jumps by the horizon is Poisson, so each replicate draws it
/// once and runs the jump chain, stopping early at `N`.
pub fn biased_walk_exit(n: usize, alpha: f64, eps: f64, opts: &McOptions) -> Result<ExitEstimate> {
    opts.validate(1)?;
    if n < 2 || !(alpha > 0.0 && alpha <= n as f64 / 2.0) {
        return Err(Error::InvalidArgument(format!("need N ≥ 2 and 0 < α ≤ N/2, got N = {n}, α = {alpha}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("ε = {eps} must be positive")));
    }
    let horizon = eps * (n * n) as f64 / alpha;
    let right = 0.5 + alpha / n as f64;
    let clock = Poisson::new(horizon).map_err(|e| Error::InvalidArgument(format!("horizon {horizon}: {e}")))?;
    let hits: Vec<bool> = run_replicates(opts, |rng| {
        let jumps = clock.sample(rng) as u64;
        let mut z = 1usize;
        for _ in 0..jumps.min(opts.budget) {
            if rng.random::<f64>() < right {
                z += 1;
                if z == n {
                    return true;
                }
            } else if z > 1 {
                z -= 1;
            }
        }
        false
    });
    let count = hits.iter().filter(|&&h| h).count();
    let r = opts.replicates as f64;
    let p = count as f64 / r;
    Ok(ExitEstimate {
        n,
        alpha,
        eps,
        horizon,
        hits: count,
        replicates: opts.replicates,
        estimate: p,
        stderr: (p * (1.0 - p) / r).sqrt(),
    })
}

/// Cards in `d` stacks of `n`; card `c` has colour `c / n`.
#[derive(Debug, Clone)]
pub struct ShuffleSimulator {
    d: usize,
    n: usize,
    restricted: bool,
    sampler: PermSampler,
    stacks: Vec<Vec<u32>>,
    drawn: Vec<(usize, u32)>,
}

impl ShuffleSimulator {
    /// Starts from the sorted deck: stack `i` holds cards `i·n .. (i+1)·n`.
    pub fn new(spec: &ChainSpec) -> Result<Self> {
        let restricted = match spec.variant {
            Variant::Shuffle => false,
            Variant::RestrictedShuffle => true,
            v => return Err(Error::InvalidArgument(format!("{v:?} is not a shuffle variant"))),
        };
        let (d, n) = (spec.margins.d, spec.n());
        let stacks = (0..d).map(|i| ((i * n) as u32..((i + 1) * n) as u32).collect()).collect();
        Ok(Self {
            d,
            n,
            restricted,
            sampler: PermSampler::new(spec),
            stacks,
            drawn: Vec::with_capacity(d),
        })
    }

    pub fn stacks(&self) -> &[Vec<u32>] {
        &self.stacks
    }

    /// Replaces the deck; every stack must hold `n` cards of a permutation
    /// of `0..dn`.
    pub fn set_stacks(&mut self, stacks: Vec<Vec<u32>>) -> Result<()> {
        let total = self.d * self.n;
        let mut seen = vec![false; total];
        if stacks.len() != self.d || stacks.iter().any(|s| s.len() != self.n) {
            return Err(Error::InvalidArgument("stack shape differs from the chain spec".into()));
        }
        for &c in stacks.iter().flatten() {
            let c = c as usize;
            if c >= total || seen[c] {
                return Err(Error::InvalidArgument("stacks are not a permutation of the deck".into()));
            }
            seen[c] = true;
        }
        self.stacks = stacks;
        Ok(())
    }

    /// Colour counts per stack, the balanced projection.
    pub fn composition(&self) -> Configuration {
        let mut counts = vec![0u32; self.d * self.d];
        for (i, s) in self.stacks.iter().enumerate() {
            for &c in s {
                counts[i * self.d + c as usize / self.n] += 1;
            }
        }
        Configuration::from_counts(self.d, self.d, counts).expect("shape is fixed")
    }

    /// One shuffle move: each drawing stack loses a uniform card, and the card
    /// from stack `i` enters stack `σ(i)` at a uniform slot.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let sigma = self.sampler.sample(rng).clone();
        self.drawn.clear();
        for i in 0..self.d {
            if self.restricted && sigma.apply(i) == i {
                continue;
            }
            let pos = rng.random_range(0..self.n);
            self.drawn.push((i, self.stacks[i].remove(pos)));
        }
        for k in 0..self.drawn.len() {
            let (i, card) = self.drawn[k];
            let slot = rng.random_range(0..self.n);
            self.stacks[sigma.apply(i)].insert(slot, card);
        }
    }
}

/// Per-step projected compositions of a shuffle trajectory, in jump time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShuffleTrajectory {
    pub d: usize,
    pub n: usize,
    pub steps: usize,
    pub seed: u64,
    /// Row-major `d × d` compositions, `steps + 1` of them.
    pub compositions: Vec<Vec<u32>>,
    /// Largest ℓ¹ change of the composition in one step.
    pub max_l1_change: u64,
    /// Steps whose composition change no urn move could produce.
    pub illegal_steps: usize,
    pub final_stacks: Vec<Vec<u32>>,
}

/// A composition change is legal when margins hold and every stack lost and
/// gained at most one card, so the ℓ¹ change is even and at most `2d`.
fn legal_change(before: &[u32], after: &[u32], d: usize, n: u32) -> (bool, u64) {
    let mut l1 = 0u64;
    let mut ok = true;
    for i in 0..d {
        let row: u64 = (0..d).map(|j| before[i * d + j].abs_diff(after[i * d + j]) as u64).sum();
        ok &= row <= 2 && (0..d).map(|j| after[i * d + j]).sum::<u32>() == n;
        l1 += row;
    }
    for j in 0..d {
        ok &= (0..d).map(|i| after[i * d + j]).sum::<u32>() == n;
    }
    (ok && l1.is_multiple_of(2), l1)
}

/// Evolves the card deck for `steps` moves from the sorted deck.
pub fn simulate_shuffle(spec: &ChainSpec, steps: usize, seed: u64) -> Result<ShuffleTrajectory> {
    let (d, n) = (spec.margins.d, spec.n());
    if d * n > 1_000_000 {
        return Err(Error::CapExceeded {
            what: "shuffle deck size",
            cap: 1_000_000,
            needed: (d * n) as u128,
        });
    }
    let mut sim = ShuffleSimulator::new(spec)?;
    let mut rng = replicate_rng(seed, 0);
    let mut compositions = Vec::with_capacity(steps + 1);
    compositions.push(sim.composition().counts().to_vec());
    let (mut max_l1, mut illegal) = (0u64, 0usize);
    for _ in 0..steps {
        sim.step(&mut rng);
        let next = sim.composition().counts().to_vec();
        let (ok, l1) = legal_change(compositions.last().expect("nonempty"), &next, d, n as u32);
        max_l1 = max_l1.max(l1);
        illegal += usize::from(!ok);
        compositions.push(next);
    }
    Ok(ShuffleTrajectory {
        d,
        n,
        steps,
        seed,
        compositions,
        max_l1_change: max_l1,
        illegal_steps: illegal,
        final_stacks: sim.stacks.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perms::PermutationMeasure;

    fn swap_chain(n: usize) -> ChainSpec {
        ChainSpec::generalised(2, 2, n, PermutationMeasure::swap()).unwrap()
    }

    #[test]
    fn adversarial_start_examples() {
        let x = adversarial_start(&Margins::generalised(2, 2, 2).unwrap()).unwrap();
        assert_eq!(x.rows(), vec![vec![4, 0], vec![0, 4]]);
        let x = adversarial_start(&Margins::generalised(3, 2, 1).unwrap()).unwrap();
        assert_eq!(x.rows(), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        let x = adversarial_start(&Margins::generalised(2, 2, 1).unwrap()).unwrap();
        assert_eq!(x.rows(), vec![vec![2, 0], vec![0, 2]]);
    }

    #[test]
    fn identity_measure_freezes_counts() {
        let spec = ChainSpec::generalised(3, 2, 4, PermutationMeasure::identity(3)).unwrap();
        let start = adversarial_start(&spec.margins).unwrap();
        let mut sim = UrnSimulator::new(&spec);
        let mut state = sim.start(&start).unwrap();
        let mut rng = replicate_rng(1, 0);
        for _ in 0..1000 {
            let before = state.clock;
            sim.step(&mut state, &mut rng);
            assert!(state.clock > before);
        }
        assert_eq!(state.counts, start);
        assert_eq!(state.jumps, 1000);
    }

    #[test]
    fn margins_conserved_along_long_trajectory() {
        let spec = ChainSpec::generalised(3, 2, 50, PermutationMeasure::cyclic(3)).unwrap();
        let mut sim = UrnSimulator::new(&spec);
        let mut state = sim.start(&adversarial_start(&spec.margins).unwrap()).unwrap();
        let mut rng = replicate_rng(2, 0);
        for _ in 0..1_000_000 {
            sim.step(&mut state, &mut rng);
        }
        state.counts.check_margins(&spec.margins).unwrap();
    }

    #[test]
    fn start_inside_centre_hits_at_zero() {
        let spec = swap_chain(10);
        let start = Configuration::from_rows(&[vec![10, 10], vec![10, 10]]).unwrap();
        let s = hitting_time_centre(&spec, &CentreSpec::Centre(1.0), &start, &McOptions::new(5, 3)).unwrap();
        assert!(s.times.iter().all(|&t| t == 0.0));
        assert!(!s.is_partial());
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let spec = ChainSpec::generalised(2, 2, 10, PermutationMeasure::identity(2)).unwrap();
        let start = adversarial_start(&spec.margins).unwrap();
        let opts = McOptions::new(3, 0).with_budget(100);
        let s = hitting_time_centre(&spec, &CentreSpec::Centre(1.0), &start, &opts).unwrap();
        assert!(s.is_partial());
        assert!(s.jumps.iter().all(|&j| j == 100));
    }

    #[test]
    fn zero_replicates_rejected() {
        let spec = swap_chain(2);
        let start = adversarial_start(&spec.margins).unwrap();
        assert!(hitting_time_centre(&spec, &CentreSpec::Centre(1.0), &start, &McOptions::new(0, 0)).is_err());
        assert!(variance_probe(&spec, &start, 1.0, &McOptions::new(99, 0)).is_err());
    }

    #[test]
    fn whole_space_occupation_is_one() {
        let spec = swap_chain(5);
        let start = adversarial_start(&spec.margins).unwrap();
        let s = occupation_fraction(&spec, &CentreSpec::Macro(1.0), &start, (0.0, 50.0), &McOptions::new(10, 4)).unwrap();
        assert!(s.fractions.iter().all(|&f| (f - 1.0).abs() < 1e-12));
    }

    #[test]
    fn variance_vanishes_at_time_zero() {
        let spec = swap_chain(6);
        let start = adversarial_start(&spec.margins).unwrap();
        let v = variance_probe(&spec, &start, 0.0, &McOptions::new(100, 5)).unwrap();
        assert!(v.variance.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn jackknife_matches_closed_form_for_normal_like_data() {
        let data: Vec<f64> = (0..1000).map(|k| ((k * 7919) % 1000) as f64).collect();
        let (v, se) = jackknife_variance(&data);
        let mean = data.iter().sum::<f64>() / 1000.0;
        let direct = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        assert!((v - direct).abs() < 1e-9 * direct);
        assert!(se > 0.0 && se < v);
    }

    #[test]
    fn strong_drift_reaches_the_end() {
        let e = biased_walk_exit(100, 50.0, 2.0, &McOptions::new(500, 6)).unwrap();
        assert!(e.estimate >= 0.99);
        assert!(biased_walk_exit(10, 6.0, 0.1, &McOptions::new(1, 0)).is_err());
    }

    #[test]
    fn restricted_identity_shuffle_is_frozen() {
        let spec = ChainSpec::new(Margins::balanced(3, 3).unwrap(), PermutationMeasure::identity(3), Variant::RestrictedShuffle)
            .unwrap();
        let t = simulate_shuffle(&spec, 1000, 7).unwrap();
        assert_eq!(t.final_stacks, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]]);
        assert_eq!(t.max_l1_change, 0);
    }

    #[test]
    fn shuffle_projection_moves_are_legal() {
        let spec = ChainSpec::new(Margins::balanced(4, 5).unwrap(), PermutationMeasure::cyclic(4), Variant::Shuffle).unwrap();
        let t = simulate_shuffle(&spec, 20_000, 8).unwrap();
        assert_eq!(t.illegal_steps, 0);
        assert!(t.max_l1_change <= 8);
    }

    #[test]
    fn replicates_do_not_depend_on_thread_count() {
        let spec = ChainSpec::generalised(3, 2, 30, PermutationMeasure::cyclic(3)).unwrap();
        let start = adversarial_start(&spec.margins).unwrap();
        let opts = McOptions::new(16, 9);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| hitting_time_centre(&spec, &CentreSpec::Centre(1.0), &start, &opts).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(
            a.times.iter().map(|t| t.to_bits()).collect::<Vec<_>>(),
            b.times.iter().map(|t| t.to_bits()).collect::<Vec<_>>()
        );
    }
}
