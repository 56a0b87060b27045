//! One function per subcommand. Each fills its defaults into the config
//! before running, so the manifest echoes exactly what was executed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Subcommand;
use serde::Serialize;
use serde_json::{json, Value};
use urnlab::exact::{
    congestion_from_list, congestion_ratio, cutoff_ratio_scan, linf_mixing_time_with, log_grid, mixing_time_with,
    relaxation_time, reversible_gap, spectral_profile, tv_curve, write_cutoff_csv, MixingOptions, DEFAULT_TRUNCATION,
    PROFILE_CAP,
};
use urnlab::kernels::{
    additive_reversibilization, build_chain, collapse, induce, lumping_check, modify, restrict,
    reversibility_residual, stationarity_residual, time_reversal, BuiltChain, ChainSpec, Space, StochasticMatrix,
    Variant, DEFAULT_WORK_CAP,
};
use urnlab::montecarlo::{
    biased_walk_exit, default_burn_in, hitting_time_centre, occupation_fraction, simulate_shuffle, variance_probe,
    McOptions, DEFAULT_JUMP_BUDGET,
};
use urnlab::perms::{single_ball_matrix, spectral_gap, spectral_report};
use urnlab::statespace::{CentreSpec, StationaryTable, DEFAULT_ORDERED_CAP};

use crate::config::{ExperimentConfig, GridDoc, StartDoc, StartKind, TransformKind};
use crate::error::{CliError, CliResult};
use crate::svg::{Plot, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Spectral report for the single-ball matrix of the measure.
    Analyze,
    /// Worst-case total variation distance on a time grid.
    ExactTv,
    /// Total variation and ℓ∞ mixing times, relaxation time and gap.
    MixingTime,
    /// Cutoff ratios t_mix(ε)/t_mix(1−ε) over a family of sizes.
    CutoffScan,
    /// Restricted, induced, collapsed, modified, reversed or reversibilized kernel.
    Transform,
    /// Spectral profile and modified profile at each δ.
    Profile,
    /// Congestion ratio of a source chain against a target chain.
    Compare,
    /// Monte Carlo hitting times of a centre set.
    McHit,
    /// Monte Carlo occupation fraction of a centre set over a window.
    McOccupation,
    /// Monte Carlo per-cell variance at a fixed time.
    McVariance,
    /// Exit probability of the biased reflected walk.
    BiasedWalk,
    /// Shuffle trajectory legality and exact lumping check.
    ShuffleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::ExactTv => "exact-tv",
            Command::MixingTime => "mixing-time",
            Command::CutoffScan => "cutoff-scan",
            Command::Transform => "transform",
            Command::Profile => "profile",
            Command::Compare => "compare",
            Command::McHit => "mc-hit",
            Command::McOccupation => "mc-occupation",
            Command::McVariance => "mc-variance",
            Command::BiasedWalk => "biased-walk",
            Command::ShuffleCheck => "shuffle-check",
        }
    }

    fn is_stochastic(self) -> bool {
        matches!(
            self,
            Command::McHit | Command::McOccupation | Command::McVariance | Command::BiasedWalk | Command::ShuffleCheck
        )
    }
}

/// Fills command defaults into `cfg`. Only absent keys are touched, so a
/// resolved config resolves to itself.
pub fn resolve(cmd: Command, cfg: &mut ExperimentConfig) -> CliResult<()> {
    cfg.validate()?;
    if cmd.is_stochastic() && cfg.seed.is_none() {
        return Err(CliError::Config(format!("{} needs a seed (config `seed` or --seed)", cmd.name())));
    }
    let exact = !matches!(cmd, Command::Analyze | Command::BiasedWalk) && !cmd.is_stochastic();
    if exact || cmd == Command::ShuffleCheck {
        cfg.work_cap.get_or_insert(DEFAULT_WORK_CAP as u64);
    }
    if matches!(cmd, Command::ExactTv | Command::MixingTime) {
        cfg.tol.get_or_insert(DEFAULT_TRUNCATION);
    }
    if cmd.is_stochastic() && cmd != Command::ShuffleCheck {
        cfg.budget.get_or_insert(DEFAULT_JUMP_BUDGET);
    }
    match cmd {
        Command::ExactTv if cfg.times.is_none() => {
            cfg.grid.get_or_insert(GridDoc {
                lo: 0.1,
                hi: 100.0,
                count: 30,
            });
        }
        Command::MixingTime => {
            cfg.eps.get_or_insert_with(|| vec![0.25]);
        }
        Command::CutoffScan => {
            cfg.eps.get_or_insert_with(|| vec![0.25]);
            cfg.ns.get_or_insert_with(|| vec![16, 64, 256]);
        }
        Command::Profile => {
            cfg.delta.get_or_insert_with(|| vec![0.1, 0.3, 0.5]);
            cfg.cap.get_or_insert(PROFILE_CAP);
        }
        Command::McHit | Command::McOccupation => {
            cfg.centre.get_or_insert(CentreSpec::Centre(10.0));
            cfg.start.get_or_insert(StartDoc::Named(StartKind::Adversarial));
            cfg.replicates.get_or_insert(200);
            if cmd == Command::McOccupation && cfg.window.is_none() {
                let burn = default_burn_in(&cfg.spec()?.chain()?.margins);
                cfg.window = Some([burn, 2.0 * burn]);
            }
        }
        Command::McVariance => {
            cfg.start.get_or_insert(StartDoc::Named(StartKind::Adversarial));
            cfg.replicates.get_or_insert(200);
            if cfg.t.is_none() {
                let mg = cfg.spec()?.chain()?.margins;
                cfg.t = Some(5.0 * mg.m as f64 * mg.scale());
            }
        }
        Command::BiasedWalk => {
            cfg.replicates.get_or_insert(1000);
        }
        Command::ShuffleCheck => {
            cfg.steps.get_or_insert(1000);
        }
        _ => {}
    }
    Ok(())
}

/// Output directory plus the list of files written so far.
pub struct Sink {
    dir: PathBuf,
    svg: bool,
    pub outputs: Vec<String>,
}

impl Sink {
    pub fn new(dir: PathBuf, svg: bool) -> CliResult<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            svg,
            outputs: Vec::new(),
        })
    }

    pub fn file(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> CliResult<()>) -> CliResult<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn plot(&mut self, name: &str, plot: &Plot<'_>) -> CliResult<()> {
        if !self.svg {
            return Ok(());
        }
        let text = plot.render();
        self.file(name, |w| Ok(w.write_all(text.as_bytes())?))
    }

    pub fn dir(&self) -> &PathBuf {
        &self.dir
    }
}

/// What a command produced. A command can finish its outputs and still end
/// with a nonzero status, for example a reducible measure or a partial sample.
pub struct Report {
    pub summary: Value,
    pub failure: Option<CliError>,
}

impl Report {
    fn ok(summary: impl Serialize) -> CliResult<Self> {
        Ok(Self {
            summary: serde_json::to_value(summary).map_err(|e| CliError::Config(e.to_string()))?,
            failure: None,
        })
    }

    fn with_failure(mut self, failure: Option<CliError>) -> Self {
        self.failure = failure;
        self
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    match cmd {
        Command::Analyze => analyze(cfg, sink),
        Command::ExactTv => exact_tv(cfg, sink),
        Command::MixingTime => mixing(cfg, sink),
        Command::CutoffScan => cutoff_scan(cfg, sink),
        Command::Transform => transform(cfg, sink),
        Command::Profile => profile(cfg, sink),
        Command::Compare => compare(cfg, sink),
        Command::McHit => mc_hit(cfg, sink),
        Command::McOccupation => mc_occupation(cfg, sink),
        Command::McVariance => mc_variance(cfg, sink),
        Command::BiasedWalk => biased_walk(cfg, sink),
        Command::ShuffleCheck => shuffle_check(cfg, sink),
    }
}

fn work_cap(cfg: &ExperimentConfig) -> u128 {
    u128::from(cfg.work_cap.unwrap_or(DEFAULT_WORK_CAP as u64))
}

fn build(cfg: &ExperimentConfig, spec: &ChainSpec) -> CliResult<BuiltChain> {
    Ok(build_chain(spec, cfg.cap, work_cap(cfg))?)
}

fn mc_options(cfg: &ExperimentConfig) -> CliResult<McOptions> {
    let replicates = *ExperimentConfig::require(&cfg.replicates, "replicates")?;
    let seed = *ExperimentConfig::require(&cfg.seed, "seed")?;
    Ok(McOptions::new(replicates, seed).with_budget(cfg.budget.unwrap_or(DEFAULT_JUMP_BUDGET)))
}

fn mixing_options(cfg: &ExperimentConfig) -> MixingOptions {
    MixingOptions {
        trunc_tol: cfg.tol.unwrap_or(DEFAULT_TRUNCATION),
        ..MixingOptions::default()
    }
}

fn analyze(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let spec = cfg.spec()?;
    let mu = spec.measure()?;
    let r = spectral_report(&mu)?;
    sink.file("eigenvalues.csv", |w| {
        writeln!(w, "index,re,im")?;
        for (k, (re, im)) in r.eigenvalues.iter().enumerate() {
            writeln!(w, "{k},{re:e},{im:e}")?;
        }
        Ok(())
    })?;
    let summary = json!({
        "d": r.d,
        "eigenvalues": r.eigenvalues,
        "gamma": r.gap,
        "gamma_plus": r.poincare_gap,
        "cheeger": r.cheeger,
        "irreducible": r.irreducible,
        "symmetric_measure": r.symmetric_measure,
        "tree": r.tree,
    });
    let failure = (!r.irreducible).then(|| CliError::Degenerate("single-ball matrix is reducible".into()));
    Ok(Report::ok(summary)?.with_failure(failure))
}

fn exact_tv(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let times = match (&cfg.times, &cfg.grid) {
        (Some(t), _) => t.clone(),
        (None, Some(g)) => {
            if g.count == 0 || !(g.lo > 0.0 && g.hi > g.lo) {
                return Err(CliError::Config("grid needs 0 < lo < hi and count ≥ 1".into()));
            }
            log_grid(g.lo, g.hi, g.count)
        }
        (None, None) => return Err(CliError::Config("exact-tv needs `times` or `grid`".into())),
    };
    let chain = build(cfg, &cfg.spec()?.chain()?)?;
    let curve = tv_curve(&chain.kernel, &chain.pi, &times, cfg.tol.unwrap_or(DEFAULT_TRUNCATION))?;
    sink.file("tv_curve.csv", |w| Ok(curve.write_csv(w)?))?;
    sink.plot(
        "tv_curve.svg",
        &Plot {
            title: "worst-case total variation distance",
            x_label: "t",
            y_label: "d(t)",
            log_x: times.first().is_some_and(|&t| t > 0.0),
            series: vec![Series {
                label: "d(t)",
                points: times.iter().copied().zip(curve.worst_case_tv.iter().copied()).collect(),
            }],
        },
    )?;
    Report::ok(json!({
        "states": chain.kernel.size(),
        "points": times.len(),
        "times": curve.times,
        "d_tv": curve.worst_case_tv,
    }))
}

fn mixing(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let eps = ExperimentConfig::require(&cfg.eps, "eps")?;
    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(CliError::Config("eps values must lie in (0, 1)".into()));
    }
    let chain = build(cfg, &cfg.spec()?.chain()?)?;
    let (p, pi) = (&chain.kernel, &chain.pi);
    let opts = mixing_options(cfg);
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        rows.push((e, mixing_time_with(p, pi, e, &opts)?, linf_mixing_time_with(p, pi, e, &opts)?));
    }
    let gap = reversible_gap(&additive_reversibilization(p, pi)?, pi)?;
    let t_rel = relaxation_time(p, pi).ok();
    sink.file("mixing.csv", |w| {
        writeln!(w, "eps,t_mix,t_mix_inf")?;
        for (e, t, ti) in &rows {
            writeln!(w, "{e},{t},{ti}")?;
        }
        Ok(())
    })?;
    Report::ok(json!({
        "states": p.size(),
        "t_mix": rows.iter().map(|r| [r.0, r.1]).collect::<Vec<_>>(),
        "t_mix_inf": rows.iter().map(|r| [r.0, r.2]).collect::<Vec<_>>(),
        "t_rel": t_rel,
        "gap": gap,
        "stationarity_residual": stationarity_residual(p, pi),
    }))
}

fn cutoff_scan(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let spec = cfg.spec()?;
    let ns = ExperimentConfig::require(&cfg.ns, "ns")?;
    let eps = ExperimentConfig::require(&cfg.eps, "eps")?;
    let &[eps] = eps.as_slice() else {
        return Err(CliError::Config("cutoff-scan takes exactly one eps".into()));
    };
    if ns.is_empty() {
        return Err(CliError::Config("ns must be nonempty".into()));
    }
    let family = ns
        .iter()
        .map(|&n| Ok((n, build(cfg, &spec.chain_for(n)?)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let rows = cutoff_ratio_scan(&family, eps)?;
    sink.file("cutoff.csv", |w| Ok(write_cutoff_csv(&rows, w)?))?;
    let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    sink.plot(
        "cutoff.svg",
        &Plot {
            title: "cutoff ratio and location ratio",
            x_label: "n",
            y_label: "ratio",
            log_x: true,
            series: vec![
                Series {
                    label: "t_mix(eps)/t_mix(1-eps)",
                    points: x.iter().copied().zip(rows.iter().map(|r| r.ratio)).collect(),
                },
                Series {
                    label: "t_mix(eps)/predicted",
                    points: x.iter().copied().zip(rows.iter().map(|r| r.location_ratio)).collect(),
                },
            ],
        },
    )?;
    Report::ok(json!({ "eps": eps, "rows": rows }))
}

/// Indices of the configured set, or the whole space when none is given.
fn selected_set(cfg: &ExperimentConfig, chain: &BuiltChain) -> CliResult<Vec<usize>> {
    match (&cfg.set, &chain.space) {
        (None, space) => Ok((0..space.len()).collect()),
        (Some(set), Space::Unlabeled(space)) => Ok(space.centre_indices(set)?),
        (Some(_), _) => Err(CliError::Config("`set` needs an unlabeled variant".into())),
    }
}

fn transform(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let kind = *ExperimentConfig::require(&cfg.transform, "transform")?;
    let chain = build(cfg, &cfg.spec()?.chain()?)?;
    let (p, pi) = (&chain.kernel, &chain.pi);
    let set = selected_set(cfg, &chain)?;
    if set.is_empty() {
        return Err(CliError::Degenerate("the selected set is empty".into()));
    }
    let (out, out_pi, kept): (StochasticMatrix, StationaryTable, Vec<usize>) = match kind {
        TransformKind::Restrict => (restrict(p, &set)?, pi.conditioned(&set)?, set.clone()),
        TransformKind::Induce => (induce(p, &set)?, pi.conditioned(&set)?, set.clone()),
        TransformKind::Modify => (modify(p, pi, &set)?, pi.conditioned(&set)?, set.clone()),
        TransformKind::Collapse => {
            let (k, table, rest) = collapse(p, pi, &set)?;
            (k, table, rest)
        }
        TransformKind::Reverse => (time_reversal(p, pi)?, pi.clone(), (0..p.size()).collect()),
        TransformKind::Reversibilize => (additive_reversibilization(p, pi)?, pi.clone(), (0..p.size()).collect()),
    };
    let max_diff = (out.size() == p.size()).then(|| out.max_abs_diff(p));
    sink.file("kernel.csv", |w| Ok(out.write_csv(w)?))?;
    sink.file("states.csv", |w| {
        writeln!(w, "index,original_index,pi")?;
        for k in 0..out.size() {
            let original = kept.get(k).map_or_else(|| "collapsed".to_string(), usize::to_string);
            writeln!(w, "{k},{original},{:e}", out_pi.get(k))?;
        }
        Ok(())
    })?;
    Report::ok(json!({
        "transform": kind,
        "original_states": p.size(),
        "states": out.size(),
        "set_size": set.len(),
        "max_diff_from_original": max_diff,
        "stationarity_residual": stationarity_residual(&out, &out_pi),
        "reversibility_residual": reversibility_residual(&out, &out_pi),
    }))
}

fn profile(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let deltas = ExperimentConfig::require(&cfg.delta, "delta")?;
    let cap = cfg.cap.unwrap_or(PROFILE_CAP);
    let chain = build(cfg, &cfg.spec()?.chain()?)?;
    let points = deltas
        .iter()
        .map(|&d| spectral_profile(&chain.kernel, &chain.pi, d, cap))
        .collect::<urnlab::Result<Vec<_>>>()?;
    sink.file("profile.csv", |w| {
        writeln!(w, "delta,lambda,lambda_modified")?;
        for pt in &points {
            let modified = pt.lambda_modified.map_or_else(String::new, |v| v.to_string());
            writeln!(w, "{},{},{modified}", pt.delta, pt.lambda)?;
        }
        Ok(())
    })?;
    Report::ok(json!({ "states": chain.kernel.size(), "points": points }))
}

fn compare(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let source = build(cfg, &cfg.spec()?.chain()?)?;
    let target_doc = ExperimentConfig::require(&cfg.target, "target")?;
    let target = build(cfg, &target_doc.chain()?)?;
    if target.kernel.size() != source.kernel.size() {
        return Err(CliError::Config("source and target must share one state space".into()));
    }
    let set = selected_set(cfg, &source)?;
    let whole = set.len() == source.kernel.size();
    let (tk, sk, pi) = if whole {
        (target.kernel.clone(), source.kernel.clone(), source.pi.clone())
    } else {
        (induce(&target.kernel, &set)?, induce(&source.kernel, &set)?, source.pi.conditioned(&set)?)
    };
    let report = match &cfg.paths {
        Some(paths) => {
            let list: Vec<_> = paths.iter().map(|p| (p.from, p.to, p.path.clone())).collect();
            congestion_from_list(&tk, &sk, &pi, &list)?
        }
        None => congestion_ratio(&tk, &sk, &pi)?,
    };
    sink.file("compare.csv", |w| {
        writeln!(w, "congestion,max_path_length,max_load,dirichlet_residual,probes")?;
        writeln!(
            w,
            "{},{},{},{:e},{}",
            report.congestion, report.max_path_length, report.max_load, report.dirichlet_residual, report.probes
        )?;
        Ok(())
    })?;
    Report::ok(json!({ "states": sk.size(), "report": report }))
}

fn partial(partial: bool, what: &str, budget: u64) -> Option<CliError> {
    partial.then(|| CliError::Budget(format!("{what}: some replicates exhausted the budget of {budget} jumps")))
}

fn mc_hit(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let spec = cfg.spec()?.chain()?;
    let opts = mc_options(cfg)?;
    let centre = ExperimentConfig::require(&cfg.centre, "centre")?;
    let start = ExperimentConfig::require(&cfg.start, "start")?.resolve(&spec.margins)?;
    let sample = hitting_time_centre(&spec, centre, &start, &opts)?;
    sink.file("hitting.csv", |w| Ok(sample.write_csv(w)?))?;
    let mut sorted = sample.times.clone();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() as f64;
    sink.plot(
        "hitting_ecdf.svg",
        &Plot {
            title: "empirical distribution of the hitting time",
            x_label: "t",
            y_label: "fraction hit",
            log_x: false,
            series: vec![Series {
                label: "ecdf",
                points: sorted.iter().enumerate().map(|(i, &t)| (t, (i + 1) as f64 / k)).collect(),
            }],
        },
    )?;
    let mg = spec.margins;
    let predicted = spectral_gap(&single_ball_matrix(&spec.mu))
        .ok()
        .map(|g| mg.m as f64 * mg.scale() / (2.0 * g) * mg.scale().ln());
    let report = Report::ok(json!({
        "replicates": opts.replicates,
        "summary": sample.summary(),
        "relative_iqr": sample.relative_iqr(),
        "unreached": sample.reached.iter().filter(|r| !**r).count(),
        "predicted_location": predicted,
    }))?;
    Ok(report.with_failure(partial(sample.is_partial(), "hitting", opts.budget)))
}

fn mc_occupation(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let spec = cfg.spec()?.chain()?;
    let opts = mc_options(cfg)?;
    let centre = ExperimentConfig::require(&cfg.centre, "centre")?;
    let start = ExperimentConfig::require(&cfg.start, "start")?.resolve(&spec.margins)?;
    let [t1, t2] = *ExperimentConfig::require(&cfg.window, "window")?;
    let sample = occupation_fraction(&spec, centre, &start, (t1, t2), &opts)?;
    sink.file("occupation.csv", |w| Ok(sample.write_csv(w)?))?;
    let report = Report::ok(json!({
        "replicates": opts.replicates,
        "window": [t1, t2],
        "summary": sample.summary(),
        "mean_stderr": sample.mean_stderr(),
    }))?;
    Ok(report.with_failure(partial(sample.is_partial(), "occupation", opts.budget)))
}

fn mc_variance(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let spec = cfg.spec()?.chain()?;
    let opts = mc_options(cfg)?;
    let start = ExperimentConfig::require(&cfg.start, "start")?.resolve(&spec.margins)?;
    let t = *ExperimentConfig::require(&cfg.t, "t")?;
    let table = variance_probe(&spec, &start, t, &opts)?;
    sink.file("variance.csv", |w| Ok(table.write_csv(w)?))?;
    let report = Report::ok(json!({
        "t": t,
        "replicates": table.replicates,
        "max_variance": table.max_variance(),
        "max_stderr": table.stderr.iter().copied().fold(0.0, f64::max),
    }))?;
    Ok(report.with_failure(partial(!table.completed, "variance", opts.budget)))
}

fn biased_walk(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let walk = ExperimentConfig::require(&cfg.walk, "walk")?;
    let opts = mc_options(cfg)?;
    let est = biased_walk_exit(walk.sites, walk.alpha, walk.eps, &opts)?;
    sink.file("biased_walk.csv", |w| {
        writeln!(w, "sites,alpha,eps,horizon,hits,replicates,estimate,stderr")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            est.n, est.alpha, est.eps, est.horizon, est.hits, est.replicates, est.estimate, est.stderr
        )?;
        Ok(())
    })?;
    Report::ok(est)
}

/// Lumping residual of the shuffle kernel onto the labeled kernel, or `None`
/// when either space is too large to enumerate.
fn exact_lumping(cfg: &ExperimentConfig, spec: &ChainSpec) -> CliResult<Option<f64>> {
    let cap = Some(cfg.cap.unwrap_or(DEFAULT_ORDERED_CAP));
    let labeled_spec = ChainSpec::new(spec.margins, spec.mu.clone(), Variant::Labeled)?;
    let built = build_chain(spec, cap, work_cap(cfg)).and_then(|fine| {
        build_chain(&labeled_spec, cap, work_cap(cfg)).map(|coarse| (fine, coarse))
    });
    let (fine, coarse) = match built {
        Ok(pair) => pair,
        Err(urnlab::Error::CapExceeded { .. }) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let (Space::Ordered(ordered), Space::Labeled(labeled)) = (&fine.space, &coarse.space) else {
        return Err(CliError::Config("shuffle-check needs a shuffle variant".into()));
    };
    let projection = ordered.projection_to(labeled)?;
    Ok(Some(lumping_check(&fine.kernel, &projection, &coarse.kernel)?))
}

fn shuffle_check(cfg: &ExperimentConfig, sink: &mut Sink) -> CliResult<Report> {
    let spec = cfg.spec()?.chain()?;
    if !matches!(spec.variant, Variant::Shuffle | Variant::RestrictedShuffle) {
        return Err(CliError::Config("shuffle-check needs a shuffle variant".into()));
    }
    let steps = *ExperimentConfig::require(&cfg.steps, "steps")?;
    let seed = *ExperimentConfig::require(&cfg.seed, "seed")?;
    let traj = simulate_shuffle(&spec, steps, seed)?;
    sink.file("shuffle_trajectory.csv", |w| {
        let mut header = vec!["step".to_string()];
        for i in 1..=traj.d {
            for j in 1..=traj.d {
                header.push(format!("x_{i}_{j}"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for (k, c) in traj.compositions.iter().enumerate() {
            let cells: Vec<String> = c.iter().map(u32::to_string).collect();
            writeln!(w, "{k},{}", cells.join(","))?;
        }
        Ok(())
    })?;
    let lumping = exact_lumping(cfg, &spec)?;
    Report::ok(json!({
        "d": traj.d,
        "n": traj.n,
        "steps": traj.steps,
        "max_l1_change": traj.max_l1_change,
        "illegal_steps": traj.illegal_steps,
        "lumping_residual": lumping,
    }))
}

/// Manifest written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a ExperimentConfig,
    pub outputs: &'a [String],
    pub csv_schema: u32,
    pub summary: &'a Value,
}

pub const CSV_SCHEMA: u32 = 1;
