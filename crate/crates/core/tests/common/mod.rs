//! Independent dense oracles shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use urnlab::kernels::StochasticMatrix;
use urnlab::perms::{Permutation, PermutationMeasure};
use urnlab::statespace::StationaryTable;

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// `exp(A)` by scaling and squaring around a 30-term Taylor series.
pub fn expm(a: &[f64], n: usize) -> Vec<f64> {
    let norm = (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let scale = 2f64.powi(-s);
    let scaled: Vec<f64> = a.iter().map(|v| v * scale).collect();
    let mut result = vec![0.0; n * n];
    let mut term = vec![0.0; n * n];
    for i in 0..n {
        result[i * n + i] = 1.0;
        term[i * n + i] = 1.0;
    }
    for k in 1..30 {
        term = matmul(&term, &scaled, n);
        term.iter_mut().for_each(|v| *v /= k as f64);
        result.iter_mut().zip(&term).for_each(|(r, t)| *r += t);
    }
    for _ in 0..s {
        result = matmul(&result, &result, n);
    }
    result
}

/// `exp(t (P − I))` as a dense row-major matrix.
pub fn heat_kernel(p: &StochasticMatrix, t: f64) -> Vec<f64> {
    let n = p.size();
    let mut a: Vec<f64> = p.entries().iter().map(|v| v * t).collect();
    for i in 0..n {
        a[i * n + i] -= t;
    }
    expm(&a, n)
}

pub fn worst_tv(p: &StochasticMatrix, pi: &StationaryTable, t: f64) -> f64 {
    let n = p.size();
    let h = heat_kernel(p, t);
    (0..n)
        .map(|x| 0.5 * (0..n).map(|y| (h[x * n + y] - pi.get(y)).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `inf{t : d(t) ≤ ε}` by doubling then bisection to absolute width `1e-9`.
pub fn mixing_time(p: &StochasticMatrix, pi: &StationaryTable, eps: f64) -> f64 {
    let mut hi = 1.0;
    while worst_tv(p, pi, hi) > eps {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-9 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if worst_tv(p, pi, mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `P(τ_A ≤ t | X₀ = x)` for the rate-one chain, with `A` made absorbing.
pub fn absorbing_cdf(p: &StochasticMatrix, absorbing: &[usize], x: usize, t: f64) -> f64 {
    let n = p.size();
    let mut data = p.entries().to_vec();
    for &a in absorbing {
        for y in 0..n {
            data[a * n + y] = if y == a { 1.0 } else { 0.0 };
        }
    }
    let q = StochasticMatrix::from_dense(n, data).unwrap();
    let h = heat_kernel(&q, t);
    absorbing.iter().map(|&a| h[x * n + a]).sum()
}

pub fn random_permutation<R: Rng>(d: usize, rng: &mut R) -> Permutation {
    let mut images: Vec<usize> = (1..=d).collect();
    images.shuffle(rng);
    Permutation::from_one_line(&images).unwrap()
}

/// Between one and four random atoms with random positive weights.
pub fn random_measure<R: Rng>(d: usize, rng: &mut R) -> PermutationMeasure {
    let k = rng.random_range(1..=4);
    let atoms = (0..k)
        .map(|_| (random_permutation(d, rng), rng.random_range(0.05..1.0)))
        .collect();
    PermutationMeasure::new(d, atoms).unwrap()
}

/// Three-sigma binomial band around `p` for `trials` draws.
pub fn within_three_sigma(count: u64, trials: u64, p: f64) -> bool {
    let f = count as f64 / trials as f64;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    (f - p).abs() <= 3.0 * sigma + 1e-12
}
