use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dirichlet_form;
use crate::error::{Error, Result};
use crate::kernels::StochasticMatrix;
use crate::statespace::StationaryTable;

const PROBES: usize = 100;
const PROBE_SEED: u64 = 0x00c0_ffee;

/// Canonical paths: for each source edge `(x, y)`, the target-graph vertex
/// sequence from `x` to `y`.
pub type PathFamily = BTreeMap<(usize, usize), Vec<usize>>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `B = max_e Q_t(e)⁻¹ Σ_{Γ ∋ e} Q_s(x, y) |Γ|`.
    pub congestion: f64,
    pub max_path_length: usize,
    /// Most paths through one target edge.
    pub max_load: usize,
    /// `max(0, E_s(f) − B·E_t(f))` over the probe functions.
    pub dirichlet_residual: f64,
    pub probes: usize,
}

fn successors(p: &StochasticMatrix) -> Vec<Vec<usize>> {
    let sp = p.sparse();
    (0..p.size())
        .map(|x| {
            let (cols, _) = sp.row(x);
            cols.iter().map(|&c| c as usize).filter(|&y| y != x).collect()
        })
        .collect()
}

/// Breadth-first shortest paths in the target graph, neighbours visited in
/// ascending index order, one path per off-diagonal source edge.
pub fn bfs_paths(target: &StochasticMatrix, source: &StochasticMatrix) -> Result<PathFamily> {
    let n = target.size();
    let succ = successors(target);
    let mut family = PathFamily::new();
    for x in 0..n {
        let wanted: Vec<usize> = (0..n).filter(|&y| y != x && source.get(x, y) > 0.0).collect();
        if wanted.is_empty() {
            continue;
        }
        let mut parent = vec![usize::MAX; n];
        parent[x] = x;
        let mut queue = VecDeque::from([x]);
        while let Some(u) = queue.pop_front() {
            for &v in &succ[u] {
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        for y in wanted {
            if parent[y] == usize::MAX {
                return Err(Error::Unreachable { from: x, to: y });
            }
            let mut path = vec![y];
            let mut cur = y;
            while cur != x {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            family.insert((x, y), path);
        }
    }
    Ok(family)
}

/// Congestion ratio with breadth-first default paths.
pub fn congestion_ratio(target: &StochasticMatrix, source: &StochasticMatrix, pi: &StationaryTable) -> Result<ComparisonReport> {
    let paths = bfs_paths(target, source)?;
    congestion_ratio_with(target, source, pi, &paths)
}

/// Congestion ratio for an explicit family given as `(x, y, path)` entries in
/// any order; a repeated `(x, y)` is rejected.
pub fn congestion_from_list(
    target: &StochasticMatrix,
    source: &StochasticMatrix,
    pi: &StationaryTable,
    list: &[(usize, usize, Vec<usize>)],
) -> Result<ComparisonReport> {
    let mut family = PathFamily::new();
    for (x, y, path) in list {
        if family.insert((*x, *y), path.clone()).is_some() {
            return Err(Error::MalformedPaths(format!("duplicate path for ({x}, {y})")));
        }
    }
    congestion_ratio_with(target, source, pi, &family)
}

pub fn congestion_ratio_with(
    target: &StochasticMatrix,
    source: &StochasticMatrix,
    pi: &StationaryTable,
    paths: &PathFamily,
) -> Result<ComparisonReport> {
    let n = target.size();
    if source.size() != n || pi.len() != n {
        return Err(Error::InvalidArgument("source, target and π must share one space".into()));
    }
    let mut load: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    let mut max_len = 0;
    for x in 0..n {
        for y in 0..n {
            if x == y || source.get(x, y) == 0.0 {
                continue;
            }
            let path = paths
                .get(&(x, y))
                .ok_or_else(|| Error::MalformedPaths(format!("no path for source edge ({x}, {y})")))?;
            if path.first() != Some(&x) || path.last() != Some(&y) || path.len() < 2 {
                return Err(Error::MalformedPaths(format!("path for ({x}, {y}) has wrong endpoints")));
            }
            let len = path.len() - 1;
            max_len = max_len.max(len);
            let weight = pi.get(x) * source.get(x, y) * len as f64;
            for w in path.windows(2) {
                let (u, v) = (w[0], w[1]);
                if u >= n || v >= n || u == v || target.get(u, v) == 0.0 {
                    return Err(Error::MalformedPaths(format!("({u}, {v}) is not a target edge")));
                }
                let e = load.entry((u, v)).or_insert((0.0, 0));
                e.0 += weight;
                e.1 += 1;
            }
        }
    }
    let mut congestion = 0.0f64;
    let mut max_load = 0;
    for (&(u, v), &(w, count)) in &load {
        congestion = congestion.max(w / (pi.get(u) * target.get(u, v)));
        max_load = max_load.max(count);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let mut residual = 0.0f64;
    for _ in 0..PROBES {
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let es = dirichlet_form(source, pi, &f, &f);
        let et = dirichlet_form(target, pi, &f, &f);
        residual = residual.max(es - congestion * et);
    }
    Ok(ComparisonReport {
        congestion,
        max_path_length: max_len,
        max_load,
        dirichlet_residual: residual.max(0.0),
        probes: PROBES,
    })
}
