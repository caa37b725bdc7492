//! Orthogonal Matching Pursuit with configurable stopping rules, an exhaustive
//! l0 oracle for tiny instances, and mutual coherence.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, least_squares, norm_l2, residual_norm, Mat, ZERO_NORM};

/// Stop when the best available correlation with the residual is this small.
pub const STAGNATION_CORRELATION: f64 = 1e-12;

/// Accepted deviation from unit norm for nonzero dictionary columns.
pub const UNIT_NORM_SLACK: f64 = 1e-6;

/// An atom whose component orthogonal to the selected atoms is below this
/// fraction of its norm adds nothing to the fit and ends the pursuit.
pub const DEPENDENT_ATOM_NORM: f64 = 1e-10;

/// Default residual tolerance for [`StoppingRule::Noiseless`].
pub const DEFAULT_NOISELESS_EPS: f64 = 1e-10;

/// Largest dictionary the exhaustive oracle will enumerate.
pub const ORACLE_MAX_ATOMS: usize = 24;
/// Largest support size the exhaustive oracle will enumerate.
pub const ORACLE_MAX_K: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// Known sparsity: stop once `s` atoms are selected.
    ExactSparsity(usize),
    /// Known noise level: stop once `||r||_2 <= t`.
    ResidualBound(f64),
    /// Noiseless signal: stop once `||r||_2 <= eps`.
    Noiseless(f64),
}

impl StoppingRule {
    pub fn noiseless() -> Self {
        StoppingRule::Noiseless(DEFAULT_NOISELESS_EPS)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StoppingRule::ExactSparsity(0) => Err(Error::InvalidArgument(
                "ExactSparsity needs s >= 1".into(),
            )),
            StoppingRule::ResidualBound(t) | StoppingRule::Noiseless(t)
                if !(t >= 0.0 && t.is_finite()) =>
            {
                Err(Error::InvalidArgument(format!(
                    "residual tolerance must be finite and >= 0, got {t}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn is_met(&self, selected: usize, residual: f64) -> bool {
        match *self {
            StoppingRule::ExactSparsity(s) => selected >= s,
            StoppingRule::ResidualBound(t) | StoppingRule::Noiseless(t) => residual <= t,
        }
    }
}

/// Why the pursuit loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Rule,
    IterationCap,
    Stagnation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    /// Selected column indices, in selection order.
    pub support: Vec<usize>,
    /// Dense coefficients, nonzero only on `support`.
    pub coeffs: Vec<f64>,
    pub final_residual_norm: f64,
    pub iterations: usize,
    /// `||r||_2` before the first iteration and after each one.
    pub residual_norms: Vec<f64>,
    pub termination: Termination,
}

impl SparseCode {
    fn empty(p: usize, y_norm: f64, termination: Termination) -> Self {
        SparseCode {
            support: Vec::new(),
            coeffs: vec![0.0; p],
            final_residual_norm: y_norm,
            iterations: 0,
            residual_norms: vec![y_norm],
            termination,
        }
    }
}

/// Checks that every column of `a` is unit-norm or zero and that at least
/// one is nonzero.
pub fn check_dictionary(a: &Mat) -> Result<()> {
    let mut any_nonzero = false;
    for (index, col) in a.columns().enumerate() {
        let norm = norm_l2(col);
        if !norm.is_finite() {
            return Err(Error::NonFinite { op: "omp_solve" });
        }
        if norm < ZERO_NORM {
            continue;
        }
        if (norm - 1.0).abs() > UNIT_NORM_SLACK {
            return Err(Error::UnnormalizedColumn { index, norm });
        }
        any_nonzero = true;
    }
    if !any_nonzero {
        return Err(Error::ZeroDictionary);
    }
    Ok(())
}

/// Greedy sparse approximation of `y` over the atoms of `a`.
///
/// Each iteration picks the atom with the largest `|<r, psi_i>|` (smallest
/// index on ties) and sets `r = y - A(S) x` for the least-squares `x` over all
/// selected atoms. The residual is tracked through an orthonormal basis of the
/// selected atoms, which gives the same `r` as refitting from scratch; the
/// returned coefficients come from one least-squares solve at the end.
///
/// The loop ends when `rule` is met, after `min(m, p)` atoms, or when the best
/// correlation drops to [`STAGNATION_CORRELATION`], hits an atom already
/// selected, or hits an atom that is numerically in the span of the selection.
pub fn omp_solve(a: &Mat, y: &[f64], rule: StoppingRule) -> Result<SparseCode> {
    rule.validate()?;
    let (m, p) = (a.rows(), a.cols());
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            op: "omp_solve",
            expected: m,
            found: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "omp_solve" });
    }
    check_dictionary(a)?;

    let cap = m.min(p);
    let mut residual = y.to_vec();
    let mut res_norm = norm_l2(y);
    let mut residual_norms = vec![res_norm];
    let mut support: Vec<usize> = Vec::new();
    let mut in_support = vec![false; p];
    // orthonormal basis of span(A(S)), kept in step with `support`
    let mut basis: Vec<Vec<f64>> = Vec::new();

    let termination = loop {
        if rule.is_met(support.len(), res_norm) {
            break Termination::Rule;
        }
        if support.len() >= cap {
            break Termination::IterationCap;
        }

        let mut best = 0;
        let mut best_corr = f64::NEG_INFINITY;
        for (j, col) in a.columns().enumerate() {
            let c = dot(col, &residual).abs();
            if c > best_corr {
                best = j;
                best_corr = c;
            }
        }
        if best_corr <= STAGNATION_CORRELATION || in_support[best] {
            break Termination::Stagnation;
        }
        let Some(q) = orthogonal_direction(&basis, a.col(best)) else {
            break Termination::Stagnation;
        };

        support.push(best);
        in_support[best] = true;
        // r = y - P_S y, with the projection extended by the new direction
        let c = dot(&q, &residual);
        axpy(-c, &q, &mut residual);
        basis.push(q);
        res_norm = norm_l2(&residual);
        residual_norms.push(res_norm);
    };

    if support.is_empty() {
        return Ok(SparseCode::empty(p, res_norm, termination));
    }
    // coefficients from a fresh least-squares fit on the selected atoms
    let sub = a.select_columns(&support);
    let x_s = least_squares(&sub, y)?;
    let mut coeffs = vec![0.0; p];
    for (&j, &v) in support.iter().zip(&x_s) {
        coeffs[j] = v;
    }
    Ok(SparseCode {
        iterations: support.len(),
        final_residual_norm: res_norm,
        support,
        coeffs,
        residual_norms,
        termination,
    })
}

/// Unit vector along the part of `atom` orthogonal to `basis`, or `None` if
/// that part is numerically zero. Gram-Schmidt is applied twice, which keeps
/// the basis orthogonal to working precision.
fn orthogonal_direction(basis: &[Vec<f64>], atom: &[f64]) -> Option<Vec<f64>> {
    let mut v = atom.to_vec();
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, &v);
            axpy(-c, q, &mut v);
        }
    }
    let n = norm_l2(&v);
    if n <= DEPENDENT_ATOM_NORM * norm_l2(atom) {
        return None;
    }
    v.iter_mut().for_each(|t| *t /= n);
    Some(v)
}

/// Exact l0 minimisation by enumeration, for verification on tiny problems.
///
/// Supports of size `1..=max_k` are visited in lexicographic order. The first
/// support of the smallest size with residual `<= eps` wins; if there is none,
/// the lowest-residual support of size `max_k` is returned.
pub fn l0_oracle(a: &Mat, y: &[f64], max_k: usize, eps: f64) -> Result<SparseCode> {
    let (m, p) = (a.rows(), a.cols());
    if p > ORACLE_MAX_ATOMS || max_k > ORACLE_MAX_K || max_k == 0 || p == 0 {
        return Err(Error::OracleGuard {
            p,
            max_k,
            max_p: ORACLE_MAX_ATOMS,
            max_k_limit: ORACLE_MAX_K,
        });
    }
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            op: "l0_oracle",
            expected: m,
            found: y.len(),
        });
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }

    let y_norm = norm_l2(y);
    if y_norm <= eps {
        return Ok(SparseCode::empty(p, y_norm, Termination::Rule));
    }

    let top = max_k.min(p);
    let mut fallback: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    for k in 1..=top {
        for support in (0..p).combinations(k) {
            let sub = a.select_columns(&support);
            let x = least_squares(&sub, y)?;
            let r = residual_norm(&sub, &x, y)?;
            if r <= eps {
                return Ok(scatter(p, support, x, r, Termination::Rule));
            }
            if k == top && fallback.as_ref().is_none_or(|(_, _, best)| r < *best) {
                fallback = Some((support, x, r));
            }
        }
    }
    let (support, x, r) = fallback.expect("at least one support of size max_k");
    Ok(scatter(p, support, x, r, Termination::IterationCap))
}

fn scatter(
    p: usize,
    support: Vec<usize>,
    x: Vec<f64>,
    residual: f64,
    termination: Termination,
) -> SparseCode {
    let mut coeffs = vec![0.0; p];
    for (&j, &v) in support.iter().zip(&x) {
        coeffs[j] = v;
    }
    SparseCode {
        iterations: support.len(),
        support,
        coeffs,
        final_residual_norm: residual,
        residual_norms: vec![residual],
        termination,
    }
}

/// Largest `|<psi_i, psi_j>|` over distinct nonzero columns.
pub fn mutual_coherence(a: &Mat) -> Result<f64> {
    let atoms: Vec<&[f64]> = a.columns().filter(|c| norm_l2(c) >= ZERO_NORM).collect();
    if atoms.len() < 2 {
        return Err(Error::TooFewAtoms(atoms.len()));
    }
    let mut mu: f64 = 0.0;
    for (i, u) in atoms.iter().enumerate() {
        for v in &atoms[i + 1..] {
            mu = mu.max(dot(u, v).abs());
        }
    }
    Ok(mu)
}

/// Sparsity level below which greedy recovery is guaranteed: `(1 + 1/mu) / 2`.
pub fn coherence_sparsity_bound(mu: f64) -> f64 {
    0.5 * (1.0 + 1.0 / mu)
}

/// Exact recovery condition for a support `S`:
/// `max_{j not in S} ||A(S)^+ psi_j||_1`. OMP recovers every signal supported
/// on `S` when this is below 1. Implied by `|S| < (1 + 1/mu) / 2`.
pub fn exact_recovery_coefficient(a: &Mat, support: &[usize]) -> Result<f64> {
    if support.is_empty() || support.iter().any(|&j| j >= a.cols()) {
        return Err(Error::InvalidArgument(format!(
            "support {support:?} is empty or out of range for {} columns",
            a.cols()
        )));
    }
    let sub = a.select_columns(support);
    let mut worst: f64 = 0.0;
    for j in (0..a.cols()).filter(|j| !support.contains(j)) {
        let x = least_squares(&sub, a.col(j))?;
        worst = worst.max(x.iter().map(|v| v.abs()).sum());
    }
    Ok(worst)
}
