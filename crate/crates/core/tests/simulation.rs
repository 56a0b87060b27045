mod common;

use std::collections::HashMap;

use urnlab::kernels::{build_chain, BuiltChain, ChainSpec, Variant, DEFAULT_WORK_CAP};
use urnlab::montecarlo::{
    adversarial_start, biased_walk_exit, default_burn_in, hitting_time_centre, occupation_fraction, replicate_rng,
    simulate_shuffle, variance_probe, McOptions, ShuffleSimulator, SimState, UrnSimulator,
};
use urnlab::perms::{cheeger_constant, single_ball_matrix, PermutationMeasure};
use urnlab::statespace::{centre_mass, CentreSpec, Configuration, LabeledSpace, Margins};

fn chain(spec: ChainSpec) -> BuiltChain {
    build_chain(&spec, None, DEFAULT_WORK_CAP).unwrap()
}

/// One-step frequencies from `start` against the kernel row, cell by cell.
fn assert_one_step_matches(c: &BuiltChain, start: &Configuration, trials: u64, seed: u64) {
    let space = c.space.unlabeled().unwrap();
    let x = space.index_of(start).unwrap();
    let mut sim = UrnSimulator::new(&c.spec);
    let mut rng = replicate_rng(seed, 0);
    let mut counts: HashMap<usize, u64> = HashMap::new();
    for _ in 0..trials {
        let mut state = SimState::new(start.clone());
        sim.jump(&mut state, &mut rng);
        *counts.entry(space.index_of(&state.counts).unwrap()).or_default() += 1;
    }
    for y in 0..space.len() {
        let seen = counts.get(&y).copied().unwrap_or(0);
        let p = c.kernel.get(x, y);
        assert!(
            common::within_three_sigma(seen, trials, p),
            "{:?} -> {:?}: {seen}/{trials} vs {p}",
            start,
            space.state(y)
        );
    }
}

#[test]
fn one_step_frequencies_match_kernel_rows() {
    let c = chain(ChainSpec::generalised(2, 2, 1, PermutationMeasure::swap()).unwrap());
    let middle = Configuration::from_rows(&[vec![1, 1], vec![1, 1]]).unwrap();
    let x = c.space.unlabeled().unwrap().index_of(&middle).unwrap();
    let row: Vec<f64> = (0..3).map(|y| c.kernel.get(x, y)).collect();
    assert_eq!(row.iter().filter(|&&p| (p - 0.25).abs() < 1e-15).count(), 2);
    assert_one_step_matches(&c, &middle, 100_000, 1);

    let c = chain(ChainSpec::generalised(3, 2, 1, PermutationMeasure::cyclic(3)).unwrap());
    assert_one_step_matches(&c, &adversarial_start(&c.spec.margins).unwrap(), 100_000, 2);

    let c = chain(ChainSpec::mean_field(3, 2, 2).unwrap());
    let x = Configuration::from_rows(&[vec![3, 1], vec![2, 2], vec![1, 3]]).unwrap();
    assert_one_step_matches(&c, &x, 100_000, 3);
}

#[test]
fn hitting_cdf_matches_absorbing_chain() {
    let c = chain(ChainSpec::generalised(2, 2, 4, PermutationMeasure::swap()).unwrap());
    let space = c.space.unlabeled().unwrap();
    let centre = CentreSpec::Centre(1.0);
    let target = space.centre_indices(&centre).unwrap();
    let start = adversarial_start(&c.spec.margins).unwrap();
    let x = space.index_of(&start).unwrap();
    let sample = hitting_time_centre(&c.spec, &centre, &start, &McOptions::new(20_000, 17)).unwrap();
    assert!(!sample.is_partial());
    for t in [0.5, 1.0, 2.0] {
        let exact = common::absorbing_cdf(&c.kernel, &target, x, t);
        let seen = (sample.ecdf(t) * 20_000.0).round() as u64;
        assert!(common::within_three_sigma(seen, 20_000, exact), "t = {t}: {seen} vs {exact}");
    }
}

#[test]
fn stationary_occupation_matches_exact_mass() {
    let c = chain(ChainSpec::generalised(2, 2, 4, PermutationMeasure::swap()).unwrap());
    let centre = CentreSpec::Centre(1.0);
    let exact = centre_mass(c.space.unlabeled().unwrap(), &c.pi, &centre).unwrap();
    let start = adversarial_start(&c.spec.margins).unwrap();
    let burn = default_burn_in(&c.spec.margins);
    let s = occupation_fraction(&c.spec, &centre, &start, (burn, burn + 100.0), &McOptions::new(2000, 23)).unwrap();
    let mean = s.summary().mean;
    assert!((mean - exact).abs() <= 3.0 * s.mean_stderr(), "{mean} vs {exact}");
}

#[test]
fn occupation_stays_high_near_the_centre() {
    let n = 10_000u32;
    let spec = ChainSpec::generalised(2, 2, n as usize, PermutationMeasure::swap()).unwrap();
    let start = Configuration::from_rows(&[vec![n, n], vec![n, n]]).unwrap();
    assert!(CentreSpec::Centre(2.0).resolve(&spec.margins).unwrap().contains(&start));
    let s = occupation_fraction(&spec, &CentreSpec::Centre(20.0), &start, (0.0, f64::from(n)), &McOptions::new(20, 29))
        .unwrap();
    assert!(s.summary().mean >= 0.9);
    assert!(s.fractions.iter().all(|f| (0.0..=1.0).contains(f)));
}

#[test]
fn late_variance_matches_stationary_variance() {
    let c = chain(ChainSpec::generalised(2, 2, 6, PermutationMeasure::swap()).unwrap());
    let space = c.space.unlabeled().unwrap();
    let mean: f64 = (0..space.len()).map(|k| c.pi.get(k) * f64::from(space.state(k).get(0, 0))).sum();
    let exact: f64 = (0..space.len())
        .map(|k| c.pi.get(k) * (f64::from(space.state(k).get(0, 0)) - mean).powi(2))
        .sum();
    let mg = c.spec.margins;
    let t = mg.urn_size as f64 * mg.scale().ln();
    let start = adversarial_start(&mg).unwrap();
    let v = variance_probe(&c.spec, &start, t, &McOptions::new(4000, 31)).unwrap();
    assert!((v.variance[0] - exact).abs() <= 3.0 * v.stderr[0], "{} ± {} vs {exact}", v.variance[0], v.stderr[0]);
}

#[test]
fn variance_stays_within_cheeger_bound() {
    let n = 1000;
    let spec = ChainSpec::generalised(3, 2, n, PermutationMeasure::cyclic(3)).unwrap();
    let phi = cheeger_constant(&single_ball_matrix(&spec.mu)).unwrap();
    let start = adversarial_start(&spec.margins).unwrap();
    let t = 5.0 * spec.margins.urn_size as f64;
    let v = variance_probe(&spec, &start, t, &McOptions::new(100, 37)).unwrap();
    assert!(v.completed);
    assert!(v.max_variance() <= 20.0 * n as f64 / phi);
}

#[test]
fn biased_walk_matches_exact_absorption() {
    // states 1, 2, 3 with 3 absorbing; blocked moves at 1 are self-loops
    let right = 0.5 + 1.0 / 3.0;
    let p = urnlab::kernels::StochasticMatrix::from_dense(
        3,
        vec![1.0 - right, right, 0.0, 1.0 - right, 0.0, right, 0.0, 0.0, 1.0],
    )
    .unwrap();
    let exact = common::absorbing_cdf(&p, &[2], 0, 0.3 * 9.0);
    let e = biased_walk_exit(3, 1.0, 0.3, &McOptions::new(100_000, 41)).unwrap();
    assert!(common::within_three_sigma(e.hits as u64, 100_000, exact), "{} vs {exact}", e.estimate);
}

#[test]
fn weak_drift_rarely_reaches_the_end() {
    let e = biased_walk_exit(2000, 4.0, 0.05, &McOptions::new(2000, 43)).unwrap();
    assert!(e.estimate <= 0.05, "{}", e.estimate);
}

#[test]
fn shuffle_projection_follows_labeled_kernel() {
    let margins = Margins::balanced(2, 2).unwrap();
    let spec = ChainSpec::new(margins, PermutationMeasure::swap(), Variant::Shuffle).unwrap();
    let labeled = chain(ChainSpec::new(margins, PermutationMeasure::swap(), Variant::Labeled).unwrap());
    let space = LabeledSpace::enumerate(2, 2, 100).unwrap();
    let project = |stacks: &[Vec<u32>]| {
        let mut s: Vec<u16> = Vec::new();
        for stack in stacks {
            let mut v: Vec<u16> = stack.iter().map(|&c| c as u16).collect();
            v.sort_unstable();
            s.extend(v);
        }
        space.index_of(&s).unwrap()
    };
    let mut sim = ShuffleSimulator::new(&spec).unwrap();
    let mut rng = replicate_rng(47, 0);
    let k = space.len();
    let mut counts = vec![0u64; k * k];
    let mut from = project(sim.stacks());
    for _ in 0..100_000 {
        sim.step(&mut rng);
        let to = project(sim.stacks());
        counts[from * k + to] += 1;
        from = to;
    }
    for x in 0..k {
        let visits: u64 = counts[x * k..(x + 1) * k].iter().sum();
        assert!(visits > 1000);
        for y in 0..k {
            assert!(common::within_three_sigma(counts[x * k + y], visits, labeled.kernel.get(x, y)), "{x} -> {y}");
        }
    }
}

#[test]
fn shuffle_trajectories_are_reproducible() {
    let spec = ChainSpec::new(Margins::balanced(3, 4).unwrap(), PermutationMeasure::cyclic(3), Variant::RestrictedShuffle)
        .unwrap();
    let a = simulate_shuffle(&spec, 5000, 53).unwrap();
    let b = simulate_shuffle(&spec, 5000, 53).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.illegal_steps, 0);
    assert_eq!(a.compositions.len(), 5001);
}
