use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::{linf_mixing_time, mixing_time};
use crate::error::{Error, Result};
use crate::kernels::{
    additive_reversibilization, kernel_irreducible, reversibility_residual, stationarity_residual, StochasticMatrix,
    REVERSIBILITY_TOL,
};
use crate::linalg;
use crate::statespace::StationaryTable;

/// Largest space searched exhaustively by [`spectral_profile`].
pub const PROFILE_CAP: usize = 18;

/// `⟨(I − P) f, g⟩_π`.
pub fn dirichlet_form(p: &StochasticMatrix, pi: &StationaryTable, f: &[f64], g: &[f64]) -> f64 {
    let pf = p.right_mul(f);
    (0..p.size()).map(|x| pi.get(x) * (f[x] - pf[x]) * g[x]).sum()
}

/// Spectral gap of a reversible kernel from `D^{1/2} P D^{-1/2}`.
pub fn reversible_gap(p: &StochasticMatrix, pi: &StationaryTable) -> Result<f64> {
    let r = reversibility_residual(p, pi);
    if r > REVERSIBILITY_TOL {
        return Err(Error::NotReversible(r));
    }
    let n = p.size();
    if n == 1 {
        return Err(Error::InvalidArgument("a one-state chain has no spectral gap".into()));
    }
    let s: Vec<f64> = pi.as_slice().iter().map(|v| v.sqrt()).collect();
    let mut a = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            a[x * n + y] = s[x] * p.get(x, y) / s[y];
        }
    }
    let ev = linalg::symmetric_eigenvalues(&a, n);
    Ok(1.0 - ev[1])
}

/// `t_rel = 1/γ` for a reversible kernel.
pub fn relaxation_time(p: &StochasticMatrix, pi: &StationaryTable) -> Result<f64> {
    let gap = reversible_gap(p, pi)?;
    if !(gap > 1e-14) {
        return Err(Error::Reducible("spectral gap vanishes".into()));
    }
    Ok(1.0 / gap)
}

/// Left fixed point of an irreducible kernel from one dense solve.
pub fn stationary_from_kernel(p: &StochasticMatrix) -> Result<StationaryTable> {
    if !kernel_irreducible(p) {
        return Err(Error::Reducible("stationary law is not unique".into()));
    }
    let n = p.size();
    // (Pᵀ − I) π = 0 with the last equation replaced by Σ π = 1
    let mut a = DMatrix::from_fn(n, n, |i, j| p.get(j, i) - f64::from(u8::from(i == j)));
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = linalg::solve_vec(a, b)?;
    let probs: Vec<f64> = x.iter().map(|v| v.max(f64::MIN_POSITIVE)).collect();
    StationaryTable::normalized(probs)
}

/// Mixing summary for one kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingReport {
    /// `(ε, t_mix(ε))`.
    pub t_mix: Vec<(f64, f64)>,
    /// `(ε, t_mix^∞(ε))`.
    pub t_mix_inf: Vec<(f64, f64)>,
    pub t_rel: Option<f64>,
    /// Gap of the additive reversibilization.
    pub gap: f64,
    pub stationarity_residual: f64,
}

pub fn mixing_report(p: &StochasticMatrix, pi: &StationaryTable, eps: &[f64]) -> Result<MixingReport> {
    let t_mix = eps
        .iter()
        .map(|&e| mixing_time(p, pi, e).map(|t| (e, t)))
        .collect::<Result<Vec<_>>>()?;
    let t_mix_inf = eps
        .iter()
        .map(|&e| linf_mixing_time(p, pi, e).map(|t| (e, t)))
        .collect::<Result<Vec<_>>>()?;
    let t_rel = relaxation_time(p, pi).ok();
    let sym = additive_reversibilization(p, pi)?;
    Ok(MixingReport {
        t_mix,
        t_mix_inf,
        t_rel,
        gap: reversible_gap(&sym, pi)?,
        stationarity_residual: stationarity_residual(p, pi),
    })
}

/// `D_A − D_A P⁺_{AA}` scaled to `D_A^{-1/2} (·) D_A^{-1/2}` is what `Λ(A)`
/// diagonalizes; this returns the unscaled Dirichlet block `L_A`.
fn dirichlet_block(sym: &StochasticMatrix, pi: &StationaryTable, a: &[usize]) -> DMatrix<f64> {
    let k = a.len();
    DMatrix::from_fn(k, k, |r, s| {
        let (x, y) = (a[r], a[s]);
        let diag = if r == s { pi.get(x) } else { 0.0 };
        diag - pi.get(x) * sym.get(x, y)
    })
}

fn sym_and_check(p: &StochasticMatrix, pi: &StationaryTable, a: &[usize]) -> Result<StochasticMatrix> {
    if a.is_empty() {
        return Err(Error::EmptySet);
    }
    if a.iter().any(|&x| x >= p.size()) {
        return Err(Error::InvalidArgument("state index outside the space".into()));
    }
    additive_reversibilization(p, pi)
}

fn smallest_symmetric(m: DMatrix<f64>) -> f64 {
    let m = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `Λ(A)`: least Rayleigh quotient `E(f, f)/⟨f, f⟩_π` over `f` vanishing off `A`.
pub fn spectral_profile_set(p: &StochasticMatrix, pi: &StationaryTable, a: &[usize]) -> Result<f64> {
    let sym = sym_and_check(p, pi, a)?;
    Ok(profile_set_sym(&sym, pi, a))
}

fn profile_set_sym(sym: &StochasticMatrix, pi: &StationaryTable, a: &[usize]) -> f64 {
    let l = dirichlet_block(sym, pi, a);
    let k = a.len();
    let s = DMatrix::from_fn(k, k, |r, c| {
        if r == c {
            1.0 / pi.get(a[r])
        } else {
            0.0
        }
    })
    .map(f64::sqrt);
    smallest_symmetric(&s * l * &s).max(0.0)
}

/// `Λ̃(A)`: least `E(f, f)/Var_π(f)` over `f` vanishing off `A`; `None` when
/// `A` is the whole space (constants have zero variance).
pub fn spectral_profile_set_modified(p: &StochasticMatrix, pi: &StationaryTable, a: &[usize]) -> Result<Option<f64>> {
    let sym = sym_and_check(p, pi, a)?;
    Ok(profile_set_modified_sym(&sym, pi, a))
}

fn profile_set_modified_sym(sym: &StochasticMatrix, pi: &StationaryTable, a: &[usize]) -> Option<f64> {
    if a.len() == sym.size() {
        return None;
    }
    let l = dirichlet_block(sym, pi, a);
    let k = a.len();
    let b = DMatrix::from_fn(k, k, |r, s| {
        let diag = if r == s { pi.get(a[r]) } else { 0.0 };
        diag - pi.get(a[r]) * pi.get(a[s])
    });
    let chol = Cholesky::new(b)?;
    let linv = chol.l().try_inverse()?;
    Some(smallest_symmetric(&linv * l * linv.transpose()).max(0.0))
}

/// `Λ(δ)` and `Λ̃(δ)` at one `δ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub delta: f64,
    /// `+∞` when no nonempty set has mass at most `δ`.
    pub lambda: f64,
    pub lambda_modified: Option<f64>,
}

/// Exhaustive minimization over supports of mass at most `δ`.
///
/// Both quotients can only decrease when the support grows, so only
/// inclusion-maximal admissible sets are examined.
pub fn spectral_profile(p: &StochasticMatrix, pi: &StationaryTable, delta: f64, cap: usize) -> Result<ProfilePoint> {
    let n = p.size();
    if n > cap {
        return Err(Error::CapExceeded {
            what: "spectral profile state count",
            cap: cap as u128,
            needed: n as u128,
        });
    }
    if n > 30 {
        return Err(Error::CapExceeded {
            what: "spectral profile state count",
            cap: 30,
            needed: n as u128,
        });
    }
    if delta >= 1.0 {
        return Ok(ProfilePoint {
            delta,
            lambda: 0.0,
            lambda_modified: None,
        });
    }
    let sym = additive_reversibilization(p, pi)?;
    let slack = 1e-12;
    let mut lambda = f64::INFINITY;
    let mut modified = f64::INFINITY;
    let mut found = false;
    for mask in 1u32..(1u32 << n) {
        let mass: f64 = (0..n).filter(|&x| mask >> x & 1 == 1).map(|x| pi.get(x)).sum();
        if mass > delta + slack {
            continue;
        }
        let maximal = (0..n).all(|x| mask >> x & 1 == 1 || mass + pi.get(x) > delta + slack);
        if !maximal {
            continue;
        }
        found = true;
        let a: Vec<usize> = (0..n).filter(|&x| mask >> x & 1 == 1).collect();
        lambda = lambda.min(profile_set_sym(&sym, pi, &a));
        if let Some(v) = profile_set_modified_sym(&sym, pi, &a) {
            modified = modified.min(v);
        }
    }
    Ok(ProfilePoint {
        delta,
        lambda,
        lambda_modified: found.then_some(modified),
    })
}
