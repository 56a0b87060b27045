use nalgebra::DMatrix;

use super::{stationarity_residual, StochasticMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::statespace::StationaryTable;

const STATIONARY_TOL: f64 = 1e-9;

fn check_subset(n: usize, a: &[usize]) -> Result<Vec<bool>> {
    if a.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut mask = vec![false; n];
    for &x in a {
        if x >= n {
            return Err(Error::InvalidArgument(format!("state {x} outside a space of {n}")));
        }
        if mask[x] {
            return Err(Error::InvalidArgument(format!("state {x} listed twice")));
        }
        mask[x] = true;
    }
    Ok(mask)
}

/// Chain that holds instead of leaving `A`. Output is indexed by position in `a`.
pub fn restrict(p: &StochasticMatrix, a: &[usize]) -> Result<StochasticMatrix> {
    check_subset(p.size(), a)?;
    let k = a.len();
    let mut data = vec![0.0; k * k];
    for (r, &x) in a.iter().enumerate() {
        let mut kept = 0.0;
        for (c, &y) in a.iter().enumerate() {
            if c != r {
                data[r * k + c] = p.get(x, y);
                kept += p.get(x, y);
            }
        }
        data[r * k + r] = (1.0 - kept).max(0.0);
    }
    StochasticMatrix::from_dense(k, data)
}

/// Chain watched only while in `A`: `P_AA + P_AC (I − P_CC)⁻¹ P_CA`.
pub fn induce(p: &StochasticMatrix, a: &[usize]) -> Result<StochasticMatrix> {
    let mask = check_subset(p.size(), a)?;
    let c: Vec<usize> = (0..p.size()).filter(|&x| !mask[x]).collect();
    let (k, m) = (a.len(), c.len());
    let mut out = vec![0.0; k * k];
    for (r, &x) in a.iter().enumerate() {
        for (s, &y) in a.iter().enumerate() {
            out[r * k + s] = p.get(x, y);
        }
    }
    if m > 0 {
        let lhs = DMatrix::from_fn(m, m, |i, j| f64::from(u8::from(i == j)) - p.get(c[i], c[j]));
        let rhs = DMatrix::from_fn(m, k, |i, j| p.get(c[i], a[j]));
        let h = linalg::solve(lhs, rhs)
            .map_err(|_| Error::Singular("complement of A is closed; induced chain undefined".into()))?;
        for (r, &x) in a.iter().enumerate() {
            for (i, &z) in c.iter().enumerate() {
                let pxz = p.get(x, z);
                if pxz != 0.0 {
                    for s in 0..k {
                        out[r * k + s] += pxz * h[(i, s)];
                    }
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v = v.max(0.0);
    }
    StochasticMatrix::from_dense(k, out)
}

/// Collapses `A` to one state placed last; the others keep ascending order.
/// Returns the kernel, its stationary law and the surviving original indices.
pub fn collapse(
    p: &StochasticMatrix,
    pi: &StationaryTable,
    a: &[usize],
) -> Result<(StochasticMatrix, StationaryTable, Vec<usize>)> {
    let n = p.size();
    let mask = check_subset(n, a)?;
    if a.len() == n {
        return Err(Error::InvalidArgument("cannot collapse the whole space".into()));
    }
    let rest: Vec<usize> = (0..n).filter(|&x| !mask[x]).collect();
    let k = rest.len() + 1;
    let ai = k - 1;
    let pa = pi.mass(a);
    let mut data = vec![0.0; k * k];
    for (r, &x) in rest.iter().enumerate() {
        for (s, &y) in rest.iter().enumerate() {
            data[r * k + s] = p.get(x, y);
        }
        data[r * k + ai] = a.iter().map(|&w| p.get(x, w)).sum();
    }
    for &w in a {
        let weight = pi.get(w) / pa;
        for (s, &y) in rest.iter().enumerate() {
            data[ai * k + s] += weight * p.get(w, y);
        }
        data[ai * k + ai] += weight * a.iter().map(|&v| p.get(w, v)).sum::<f64>();
    }
    let mut probs: Vec<f64> = rest.iter().map(|&x| pi.get(x)).collect();
    probs.push(pa);
    Ok((StochasticMatrix::from_dense(k, data)?, StationaryTable::normalized(probs)?, rest))
}

/// Modified chain on `M`: exits are redirected to `π(· | M)`, every move is
/// damped by `1/(p+1)`, and the entrance flow `Q(Mᶜ, y)` is spread from every
/// state. Output indexed by position in `macro_set`.
pub fn modify(p: &StochasticMatrix, pi: &StationaryTable, macro_set: &[usize]) -> Result<StochasticMatrix> {
    let n = p.size();
    let mask = check_subset(n, macro_set)?;
    let k = macro_set.len();
    let pm = pi.mass(macro_set);
    let outside: Vec<usize> = (0..n).filter(|&x| !mask[x]).collect();
    let exit: Vec<f64> = macro_set
        .iter()
        .map(|&x| outside.iter().map(|&z| p.get(x, z)).sum())
        .collect();
    let p_out: f64 = macro_set.iter().zip(&exit).map(|(&x, e)| pi.get(x) * e).sum::<f64>() / pm;
    let entrance: Vec<f64> = macro_set
        .iter()
        .map(|&y| outside.iter().map(|&z| pi.get(z) * p.get(z, y)).sum())
        .collect();
    let damp = 1.0 / (p_out + 1.0);
    let mut data = vec![0.0; k * k];
    for (r, &x) in macro_set.iter().enumerate() {
        for (s, &y) in macro_set.iter().enumerate() {
            let prime = p.get(x, y) + exit[r] * pi.get(y) / pm;
            data[r * k + s] = damp * (prime + entrance[s] / pm);
        }
    }
    StochasticMatrix::from_dense(k, data)
}

/// `P̃(x, y) = π(y) P(y, x) / π(x)`.
pub fn time_reversal(p: &StochasticMatrix, pi: &StationaryTable) -> Result<StochasticMatrix> {
    let n = p.size();
    check_stationary(p, pi)?;
    let mut data = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            data[x * n + y] = pi.get(y) * p.get(y, x) / pi.get(x);
        }
    }
    StochasticMatrix::from_dense(n, data)
}

/// `(P + P̃) / 2`.
pub fn additive_reversibilization(p: &StochasticMatrix, pi: &StationaryTable) -> Result<StochasticMatrix> {
    let n = p.size();
    check_stationary(p, pi)?;
    let mut data = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            data[x * n + y] = 0.5 * (p.get(x, y) + pi.get(y) * p.get(y, x) / pi.get(x));
        }
    }
    StochasticMatrix::from_dense(n, data)
}

fn check_stationary(p: &StochasticMatrix, pi: &StationaryTable) -> Result<()> {
    if pi.len() != p.size() {
        return Err(Error::InvalidArgument("stationary table and kernel differ in size".into()));
    }
    let r = stationarity_residual(p, pi);
    if r > STATIONARY_TOL {
        return Err(Error::NotStationary(r));
    }
    Ok(())
}
