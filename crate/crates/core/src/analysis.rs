//! Desk-scale checks of the recovery theory: eNSP certificates, the kernel
//! ratio infimum, the seven-by-eight toy example and descent diagnostics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gen::rng_from_seed;
use crate::objective::{count_nonzero, l1_norm, ratio_unchecked};
use crate::problem::{ProblemInstance, SolveResult, SolverConfig};
use crate::solver::{descent_rho_threshold, gram_extreme_eigenvalues, initial_rho};
use crate::{Matrix, Vector};

/// Largest signal length accepted by [`check_ensp`].
pub const MAX_ENSP_N: usize = 24;

/// Cap on the number of kernel vertices enumerated per certificate.
const MAX_VERTICES: usize = 200_000;

/// Orthonormal basis of `ker(A)` as the columns of an `n × k` matrix.
pub fn kernel_basis(a: &Matrix) -> Matrix {
    let n = a.ncols();
    let eig = a.tr_mul(a).symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let tol = 1e-10 * top.max(1e-300) * n as f64;
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= tol).collect();
    Matrix::from_fn(n, cols.len(), |r, c| eig.eigenvectors[(r, cols[c])])
}

fn sum_pow(v: &[f64], p: f64) -> f64 {
    v.iter().map(|t| t.abs().powf(p)).sum()
}

/// Margin `c·Σ|vᵢ|ᵖ − Σ_{i∈T}|vᵢ|ᵖ` at the worst support (the `s` largest
/// magnitudes). Negative exactly when the eNSP inequality fails for `v`.
fn ensp_margin(v: &[f64], s: usize, p: f64, c: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(v.iter().map(|t| t.abs().powf(p)));
    let total: f64 = scratch.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let s = s.min(scratch.len());
    if s < scratch.len() {
        scratch.select_nth_unstable_by(s, |x, y| y.total_cmp(x));
    }
    let top: f64 = scratch[..s].iter().sum();
    (c * total - top) / total
}

fn top_support(v: &[f64], s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    idx.truncate(s);
    idx.sort_unstable();
    idx
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Unit kernel vectors with at least `k − 1` zero coordinates: the
/// vertices of `ker(A) ∩ {‖v‖₁ ≤ 1}` up to scaling.
fn kernel_vertices(basis: &Matrix) -> Option<Vec<Vector>> {
    let (n, k) = basis.shape();
    if k == 0 || binomial(n, k - 1) > MAX_VERTICES {
        return None;
    }
    let mut out = Vec::new();
    for_each_subset(n, k - 1, |zeros| {
        let rows = Matrix::from_fn(zeros.len(), k, |r, c| basis[(zeros[r], c)]);
        let gram = rows.tr_mul(&rows);
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let scale = eig.eigenvalues.iter().cloned().fold(1.0_f64, f64::max);
        // skip degenerate zero sets whose restricted kernel is not a line
        if k > 1 && eig.eigenvalues[order[1]] <= 1e-12 * scale {
            return;
        }
        let coef = eig.eigenvectors.column(order[0]).into_owned();
        let v = basis * coef;
        let norm = v.norm();
        if norm > 0.0 {
            out.push(v / norm);
        }
    });
    Some(out)
}

fn random_unit(k: usize, rng: &mut impl rand::Rng) -> Vector {
    loop {
        let c = Vector::from_fn(k, |_, _| StandardNormal.sample(rng));
        let norm = c.norm();
        if norm > 0.0 {
            return c / norm;
        }
    }
}

/// Pattern search on the unit sphere of kernel coefficients, minimizing `f`.
fn pattern_search(mut c: Vector, f: &mut impl FnMut(&Vector) -> f64) -> (Vector, f64) {
    let k = c.len();
    let mut best = f(&c);
    let mut h = 0.25;
    while h > 1e-10 {
        let mut improved = false;
        for i in 0..k {
            for sign in [1.0, -1.0] {
                let mut trial = c.clone();
                trial[i] += sign * h;
                let norm = trial.norm();
                if norm == 0.0 {
                    continue;
                }
                trial /= norm;
                let val = f(&trial);
                if val < best {
                    best = val;
                    c = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (c, best)
}

/// Outcome of an eNSP test of order `s` with parameters `(c, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnspCertificate {
    pub s: usize,
    pub p: f64,
    pub c: f64,
    pub holds: bool,
    /// Kernel vector and support violating the inequality.
    pub witness: Option<(Vector, Vec<usize>)>,
    /// True when the kernel sphere was sampled rather than covered exactly.
    pub sampled: bool,
    pub kernel_dim: usize,
    /// Smallest normalized margin `(c‖v‖ₚᵖ − ‖v_T‖ₚᵖ)/‖v‖ₚᵖ` encountered.
    pub worst_margin: f64,
    pub note: Option<String>,
}

impl EnspCertificate {
    /// Re-evaluates the inequality `(1−c)^{1/p}‖v_T‖ₚ ≤ c^{1/p}‖v_{Tᶜ}‖ₚ` at
    /// the witness; `None` without a witness.
    pub fn witness_violates(&self) -> Option<bool> {
        let (v, t) = self.witness.as_ref()?;
        let inside: Vec<f64> = t.iter().map(|&i| v[i]).collect();
        let outside: Vec<f64> = (0..v.len()).filter(|i| !t.contains(i)).map(|i| v[i]).collect();
        let lhs = (1.0 - self.c).powf(1.0 / self.p) * sum_pow(&inside, self.p).powf(1.0 / self.p);
        let rhs = self.c.powf(1.0 / self.p) * sum_pow(&outside, self.p).powf(1.0 / self.p);
        Some(lhs > rhs)
    }
}

/// Tests the eNSP of order `s`: `(1−c)^{1/p}‖v_T‖ₚ ≤ c^{1/p}‖v_{Tᶜ}‖ₚ` for all
/// kernel vectors `v ≠ 0` and supports `|T| ≤ s`.
///
/// Supports are covered exactly (the worst `T` holds the `s` largest
/// entries). Kernel vectors are covered exactly for a one-dimensional
/// kernel and for `p = 1` (the worst direction is a vertex of the kernel
/// slice of the ℓ₁ ball); otherwise the sphere is sampled with pattern-search
/// refinement and the certificate is flagged `sampled`.
pub fn check_ensp(
    a: &Matrix,
    s: usize,
    p: f64,
    c: f64,
    n_kernel_samples: usize,
    seed: u64,
) -> Result<EnspCertificate> {
    let n = a.ncols();
    if n > MAX_ENSP_N {
        return Err(Error::param("A", "eNSP checks are limited to n ≤ 24"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::param("p", "must lie in (0, 1]"));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::param("c", "must lie in (0, 1)"));
    }
    if s == 0 || s > n {
        return Err(Error::param("s", "must lie in 1..=n"));
    }
    let basis = kernel_basis(a);
    let k = basis.ncols();
    let mut cert = EnspCertificate {
        s,
        p,
        c,
        holds: true,
        witness: None,
        sampled: false,
        kernel_dim: k,
        worst_margin: f64::INFINITY,
        note: None,
    };
    if k == 0 {
        cert.note = Some("trivial kernel; holds vacuously".into());
        return Ok(cert);
    }

    let mut scratch = Vec::with_capacity(n);
    let mut best_v: Option<Vector> = None;
    let mut consider = |v: &Vector, cert: &mut EnspCertificate, scratch: &mut Vec<f64>| {
        let margin = ensp_margin(v.as_slice(), s, p, c, scratch);
        if margin < cert.worst_margin {
            cert.worst_margin = margin;
            best_v = Some(v.clone());
        }
    };

    let vertices = kernel_vertices(&basis);
    let exact = k == 1 || (p == 1.0 && vertices.is_some());
    if let Some(vs) = &vertices {
        for v in vs {
            consider(v, &mut cert, &mut scratch);
        }
    }
    if !exact {
        cert.sampled = true;
        let mut rng = rng_from_seed(seed);
        let mut pool: Vec<(f64, Vector)> = Vec::new();
        for _ in 0..n_kernel_samples.max(1) {
            let coef = random_unit(k, &mut rng);
            let v = &basis * &coef;
            let margin = ensp_margin(v.as_slice(), s, p, c, &mut scratch);
            pool.push((margin, coef));
        }
        pool.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (_, coef) in pool.into_iter().take(8) {
            let mut f = |cf: &Vector| ensp_margin((&basis * cf).as_slice(), s, p, c, &mut Vec::new());
            let (coef, _) = pattern_search(coef, &mut f);
            consider(&(&basis * coef), &mut cert, &mut scratch);
        }
    }
    if exact && k == 1 {
        let v = basis.column(0).into_owned();
        consider(&v, &mut cert, &mut scratch);
    }

    // Tolerance for round-off in the margin of exact boundary cases.
    if cert.worst_margin < -1e-12 {
        let v = best_v.expect("a negative margin comes from a recorded vector");
        let t = top_support(v.as_slice(), s);
        cert.holds = false;
        cert.witness = Some((v, t));
    }
    Ok(cert)
}

/// Upper estimate of `inf_{v ∈ ker(A)∖{0}} ‖v‖ₚ/‖v‖₂` from kernel vertices,
/// `n_samples` random kernel directions and pattern-search refinement of
/// the best ones.
pub fn kernel_ratio_infimum(a: &Matrix, p: f64, n_samples: usize, seed: u64) -> Result<f64> {
    if !(p > 0.0 && p <= 2.0) {
        return Err(Error::param("p", "must lie in (0, 2]"));
    }
    let basis = kernel_basis(a);
    let k = basis.ncols();
    if k == 0 {
        return Err(Error::Degenerate("kernel of A is trivial".into()));
    }
    let ratio = |v: &Vector| sum_pow(v.as_slice(), p).powf(1.0 / p) / v.norm();
    let mut best = f64::INFINITY;
    if let Some(vs) = kernel_vertices(&basis) {
        for v in &vs {
            best = best.min(ratio(v));
        }
    }
    if k > 1 {
        let mut rng = rng_from_seed(seed);
        let mut pool: Vec<(f64, Vector)> = (0..n_samples.max(1))
            .map(|_| {
                let coef = random_unit(k, &mut rng);
                (ratio(&(&basis * &coef)), coef)
            })
            .collect();
        pool.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (_, coef) in pool.into_iter().take(8) {
            let mut f = |cf: &Vector| ratio(&(&basis * cf));
            let (_, val) = pattern_search(coef, &mut f);
            best = best.min(val);
        }
    } else {
        best = best.min(ratio(&basis.column(0).into_owned()));
    }
    // ‖v‖ₚ ≥ ‖v‖₂ for p ≤ 2; clamp rounding below the exact bound.
    Ok(best.max(1.0))
}

/// The 7 × 8 toy system whose solution set is `{x(σ) : σ ∈ ℝ}`.
pub fn toy_instance() -> ProblemInstance {
    #[rustfmt::skip]
    let a = Matrix::from_row_slice(7, 8, &[
         1.0, -1.0,  0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
         1.0,  0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
         0.0,  1.0,  1.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        -2.0, -2.0,  0.0, 0.0, 1.0, 0.0, 0.0, 0.0,
        -1.0, -1.0,  0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
        -1.0,  0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0,
        -2.0,  0.0,  0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    ]);
    let b = Vector::from_vec(vec![0.0, 0.0, 20.0, 40.0, 16.0, 25.0, 39.0]);
    let x0 = toy_family(0.0);
    ProblemInstance::new(a, b)
        .and_then(|inst| inst.with_ground_truth(x0))
        .expect("toy instance is well formed")
}

/// `x(σ) = (σ, σ, σ, 20 − 2σ, 40 + 4σ, 16 + 2σ, 25 + 2σ, 39 + 2σ)`.
pub fn toy_family(sigma: f64) -> Vector {
    Vector::from_vec(vec![
        sigma,
        sigma,
        sigma,
        20.0 - 2.0 * sigma,
        40.0 + 4.0 * sigma,
        16.0 + 2.0 * sigma,
        25.0 + 2.0 * sigma,
        39.0 + 2.0 * sigma,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyScanRow {
    pub sigma: f64,
    pub ratio: f64,
    pub l1: f64,
    pub l1_minus_l2: f64,
    pub nnz: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyScan {
    /// Grid argmin of the `ℓ½/ℓ₂` ratio.
    pub best_sigma: f64,
    pub best_sigma_l1: f64,
    pub best_sigma_l1_minus_l2: f64,
    pub table: Vec<ToyScanRow>,
}

fn argmin_sigma(table: &[ToyScanRow], key: impl Fn(&ToyScanRow) -> f64) -> f64 {
    table
        .iter()
        .min_by(|a, b| key(a).total_cmp(&key(b)))
        .map(|r| r.sigma)
        .unwrap_or(0.0)
}

/// Evaluates the ratio, ℓ₁ and ℓ₁−ℓ₂ along `x(σ)` for `σ = i·step` in
/// `[start, end]`; integer ticks make `σ = 0` an exact grid point.
pub fn toy_example_scan(start: f64, end: f64, step: f64) -> Result<ToyScan> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::param("step", "must be positive"));
    }
    if !(start <= -15.0 && end >= 25.0) {
        return Err(Error::param("sigma grid", "must cover [-15, 25]"));
    }
    let lo = (start / step).ceil() as i64;
    let hi = (end / step).floor() as i64;
    if hi - lo > 100_000_000 {
        return Err(Error::param("step", "grid is too fine"));
    }
    let table: Vec<ToyScanRow> = (lo..=hi)
        .map(|i| {
            let sigma = i as f64 * step;
            let x = toy_family(sigma);
            let l1 = l1_norm(x.as_slice());
            ToyScanRow {
                sigma,
                ratio: ratio_unchecked(x.as_slice()),
                l1,
                l1_minus_l2: l1 - x.norm(),
                nnz: count_nonzero(x.as_slice(), 0.0),
            }
        })
        .collect();
    Ok(ToyScan {
        best_sigma: argmin_sigma(&table, |r| r.ratio),
        best_sigma_l1: argmin_sigma(&table, |r| r.l1),
        best_sigma_l1_minus_l2: argmin_sigma(&table, |r| r.l1_minus_l2),
        table,
    })
}

/// Descent and rate diagnostics of a nested ADMM run.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentReport {
    pub lambda_min: f64,
    pub lipschitz: f64,
    pub rho_threshold: f64,
    pub rho: f64,
    pub rho_satisfies_threshold: bool,
    /// Increases of the augmented Lagrangian beyond `1e-8 (1 + |L₀|)`.
    pub monotonicity_violations: usize,
    /// Fitted linear rate of the tail of `‖xₖ₊₁ − xₖ‖₂`.
    pub rate: Option<f64>,
    pub converged_immediately: bool,
    pub iterations: usize,
}

impl DescentReport {
    /// Line-delimited `key=value` text.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let rate = self.rate.map_or_else(|| String::from("none"), |r| format!("{r:.6e}"));
        let _ = writeln!(out, "lambda_min={:.6e}", self.lambda_min);
        let _ = writeln!(out, "lipschitz={:.6e}", self.lipschitz);
        let _ = writeln!(out, "rho_threshold={:.6e}", self.rho_threshold);
        let _ = writeln!(out, "rho={:.6e}", self.rho);
        let _ = writeln!(out, "rho_satisfies_threshold={}", self.rho_satisfies_threshold);
        let _ = writeln!(out, "monotonicity_violations={}", self.monotonicity_violations);
        let _ = writeln!(out, "rate={rate}");
        let _ = writeln!(out, "converged_immediately={}", self.converged_immediately);
        let _ = writeln!(out, "iterations={}", self.iterations);
        out
    }
}

/// Least-squares slope of `ln yₖ` against `k`, returned as `exp(slope)`.
fn fit_rate(tail: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(i, v)| (i as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let len = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some((sxy / sxx).exp())
}

/// Checks the penalty against the descent threshold, counts increases of
/// the augmented Lagrangian and fits a linear rate to the last
/// `max(10, 20%)` step lengths.
pub fn descent_report(
    result: &SolveResult,
    instance: &ProblemInstance,
    config: &SolverConfig,
) -> Result<DescentReport> {
    if result.lagrangian_trace.len() < 3 || result.step_trace.len() < 3 {
        return Err(Error::Degenerate("descent report needs at least 3 iterations".into()));
    }
    let (lambda_min, lipschitz) = gram_extreme_eigenvalues(instance);
    let rho_threshold = descent_rho_threshold(lambda_min, lipschitz);
    let rho = initial_rho(config, instance);
    let l = &result.lagrangian_trace;
    let slack = 1e-8 * (1.0 + l[0].abs());
    let monotonicity_violations = l.windows(2).filter(|w| w[1] > w[0] + slack).count();

    let steps = &result.step_trace;
    let scale = steps.iter().cloned().fold(0.0_f64, f64::max);
    let objective_flat = result
        .objective_trace
        .windows(2)
        .all(|w| (w[1] - w[0]).abs() <= 1e-15 * (1.0 + w[0].abs()));
    let converged_immediately = scale == 0.0 || objective_flat && l.windows(2).all(|w| w[0] == w[1]);
    let tail_len = (steps.len() / 5).max(10).min(steps.len());
    let rate = if converged_immediately {
        None
    } else {
        fit_rate(&steps[steps.len() - tail_len..])
    };
    Ok(DescentReport {
        lambda_min,
        lipschitz,
        rho_threshold,
        rho,
        rho_satisfies_threshold: rho > rho_threshold,
        monotonicity_violations,
        rate,
        converged_immediately,
        iterations: result.outer_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{gen_matrix, MatrixKind};
    use crate::problem::{AdaptivePenalty, PenaltyScale, Termination};
    use core::f64::consts::PI;
    use proptest::prelude::*;

    #[test]
    fn full_rank_holds_vacuously() {
        let a = Matrix::identity(4, 4);
        let cert = check_ensp(&a, 2, 1.0, 0.5, 10, 1).unwrap();
        assert!(cert.holds);
        assert_eq!(cert.kernel_dim, 0);
        assert!(cert.note.is_some());
    }

    #[test]
    fn two_column_example() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        for (c, expected) in [(0.3, false), (0.49, false), (0.5, true), (0.7, true)] {
            let cert = check_ensp(&a, 1, 1.0, c, 10, 2).unwrap();
            assert_eq!(cert.holds, expected, "c = {c}");
            assert!(!cert.sampled);
            if !expected {
                assert_eq!(cert.witness_violates(), Some(true));
            }
        }
    }

    #[test]
    fn rejects_large_n() {
        assert!(check_ensp(&Matrix::zeros(2, 25), 1, 1.0, 0.5, 10, 0).is_err());
    }

    /// Independent plain-NSP oracle: for every zero set Z of size k − 1 the
    /// null space of [A; E_Z] is computed from scratch, and the NSP of order
    /// s is tested at each resulting vertex over all s-subsets T.
    fn nsp_oracle(a: &Matrix, s: usize) -> bool {
        let (m, n) = a.shape();
        let rank = a.clone().svd(false, false).rank(1e-10);
        let k = n - rank;
        if k == 0 {
            return true;
        }
        let mut holds = true;
        for_each_subset(n, k - 1, |zeros| {
            let mut stacked = Matrix::zeros(m + zeros.len(), n);
            stacked.view_mut((0, 0), (m, n)).copy_from(a);
            for (r, &z) in zeros.iter().enumerate() {
                stacked[(m + r, z)] = 1.0;
            }
            let eig = stacked.tr_mul(&stacked).symmetric_eigen();
            let mut vals: Vec<(f64, usize)> =
                eig.eigenvalues.iter().cloned().zip(0..n).collect();
            vals.sort_by(|x, y| x.0.total_cmp(&y.0));
            if vals[1].0 <= 1e-10 {
                return;
            }
            let v = eig.eigenvectors.column(vals[0].1).into_owned();
            for_each_subset(n, s, |t| {
                let inside: f64 = t.iter().map(|&i| v[i].abs()).sum();
                let total: f64 = v.iter().map(|x| x.abs()).sum();
                if inside > total - inside + 1e-10 * total {
                    holds = false;
                }
            });
        });
        holds
    }

    #[test]
    fn nsp_agrees_with_oracle() {
        let mut disagreements = 0;
        let mut positives = 0;
        for seed in 0..100 {
            let a = gen_matrix(MatrixKind::Gaussian { r: 0.0 }, 4, 8, 1000 + seed).unwrap();
            let s = 1 + (seed as usize % 2);
            let cert = check_ensp(&a, s, 1.0, 0.5, 200, seed).unwrap();
            let oracle = nsp_oracle(&a, s);
            positives += oracle as usize;
            if cert.holds != oracle {
                disagreements += 1;
            }
        }
        assert_eq!(disagreements, 0);
        assert!(positives > 0 && positives < 100, "{positives}");
    }

    #[test]
    fn sampled_certificate_flags() {
        let a = gen_matrix(MatrixKind::Gaussian { r: 0.0 }, 5, 9, 12).unwrap();
        let cert = check_ensp(&a, 1, 0.5, 0.5, 500, 3).unwrap();
        assert!(cert.sampled);
        assert_eq!(cert.kernel_dim, 4);
        if !cert.holds {
            assert_eq!(cert.witness_violates(), Some(true));
        }
    }

    #[test]
    fn kernel_ratio_trivial_cases() {
        // ker = span(e₁)
        let mut a = Matrix::zeros(3, 4);
        for i in 0..3 {
            a[(i, i + 1)] = 1.0;
        }
        assert!((kernel_ratio_infimum(&a, 0.5, 100, 1).unwrap() - 1.0).abs() < 1e-12);

        // ker = span(1) in ℝ⁵: rows e₁ − e_{i+1}
        let mut b = Matrix::zeros(4, 5);
        for i in 0..4 {
            b[(i, 0)] = 1.0;
            b[(i, i + 1)] = -1.0;
        }
        let r = kernel_ratio_infimum(&b, 1.0, 100, 2).unwrap();
        assert!((r - 5f64.sqrt()).abs() < 1e-10);
        assert!(kernel_ratio_infimum(&Matrix::identity(3, 3), 1.0, 10, 0).is_err());
    }

    #[test]
    fn kernel_ratio_matches_angular_grid() {
        let a = gen_matrix(MatrixKind::Gaussian { r: 0.0 }, 6, 8, 21).unwrap();
        let basis = kernel_basis(&a);
        assert_eq!(basis.ncols(), 2);
        for p in [0.5, 1.0] {
            let mut oracle = f64::INFINITY;
            for i in 0..10_000 {
                let t = PI * i as f64 / 10_000.0;
                let v = basis.column(0) * t.cos() + basis.column(1) * t.sin();
                let val = sum_pow(v.as_slice(), p).powf(1.0 / p) / v.norm();
                oracle = oracle.min(val);
            }
            // the grid misses the cusps where a coordinate vanishes; add them
            for r in 0..8 {
                let t = (-basis[(r, 0)]).atan2(basis[(r, 1)]);
                let v = basis.column(0) * t.cos() + basis.column(1) * t.sin();
                oracle = oracle.min(sum_pow(v.as_slice(), p).powf(1.0 / p) / v.norm());
            }
            let est = kernel_ratio_infimum(&a, p, 200, 5).unwrap();
            assert!(est <= oracle + 1e-9, "p {p}: {est} vs {oracle}");
            assert!((est - oracle).abs() < 1e-3, "p {p}: {est} vs {oracle}");
        }
    }

    #[test]
    fn toy_family_solves_system() {
        let inst = toy_instance();
        assert_eq!(kernel_basis(inst.a()).ncols(), 1);
        for i in -1500..=2500 {
            let sigma = i as f64 * 0.01;
            let r = inst.residual(&toy_family(sigma)).unwrap();
            assert!(r.norm() < 1e-10);
        }
    }

    #[test]
    fn toy_scan_argmins() {
        let scan = toy_example_scan(-15.0, 25.0, 0.01).unwrap();
        assert_eq!(scan.best_sigma, 0.0);
        assert!(scan.best_sigma_l1 != 0.0);
        assert!((scan.best_sigma_l1 + 10.0).abs() < 1e-9);
        let row0 = scan.table.iter().find(|r| r.sigma == 0.0).unwrap();
        assert_eq!(row0.nnz, 5);
        for target in [-10.0, 10.0] {
            let row = scan.table.iter().find(|r| (r.sigma - target).abs() < 1e-9).unwrap();
            assert_eq!(row.nnz, 7);
        }
        assert!(toy_example_scan(-10.0, 25.0, 0.01).is_err());
    }

    #[test]
    fn rho_threshold_identity() {
        let inst = ProblemInstance::new(Matrix::identity(3, 3), Vector::from_element(3, 1.0)).unwrap();
        let (lmin, lmax) = gram_extreme_eigenvalues(&inst);
        assert!((descent_rho_threshold(lmin, lmax) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_trace_converges_immediately() {
        let inst = ProblemInstance::new(Matrix::identity(2, 2), Vector::zeros(2)).unwrap();
        let mut r = SolveResult::empty(2);
        r.objective_trace = vec![1.0; 4];
        r.lagrangian_trace = vec![1.0; 4];
        r.step_trace = vec![0.0; 4];
        r.termination = Termination::Stalled;
        let rep = descent_report(&r, &inst, &SolverConfig::default()).unwrap();
        assert!(rep.converged_immediately);
        assert_eq!(rep.rate, None);
        assert!(rep.to_key_value().contains("converged_immediately=true"));
        r.step_trace.truncate(2);
        assert!(descent_report(&r, &inst, &SolverConfig::default()).is_err());
    }

    #[test]
    fn rate_fit_recovers_geometric_decay() {
        let tail: Vec<f64> = (0..30).map(|k| 3.0 * 0.7f64.powi(k)).collect();
        assert!((fit_rate(&tail).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn descent_above_threshold_is_monotone() {
        use crate::gen::{generate, Amplitude, GeneratorSpec};
        let spec = GeneratorSpec {
            kind: MatrixKind::Gaussian { r: 0.0 },
            m: 20,
            n: 50,
            sparsity: 3,
            min_separation: 1,
            noise_db: None,
            seed: 31,
            amplitude: Amplitude::StandardNormal,
        };
        let inst = generate(&spec).unwrap();
        let (lmin, lmax) = gram_extreme_eigenvalues(&inst);
        let cfg = SolverConfig {
            zeta: 1e-3,
            rho0: 1.1 * descent_rho_threshold(lmin, lmax),
            rho_scale: PenaltyScale::Absolute,
            adaptive_penalty: AdaptivePenalty::Off,
            max_total_iters: Some(200),
            ..SolverConfig::default()
        };
        let r = crate::solver::admm_solve_from(&inst, &cfg, &Vector::zeros(50)).unwrap();
        let rep = descent_report(&r, &inst, &cfg).unwrap();
        assert!(rep.rho_satisfies_threshold);
        assert_eq!(rep.monotonicity_violations, 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kernel_ratio_at_least_one(seed in 0u64..100_000, p in 0.2..1.0f64) {
            let a = gen_matrix(MatrixKind::Gaussian { r: 0.0 }, 4, 7, seed).unwrap();
            let r = kernel_ratio_infimum(&a, p, 64, seed).unwrap();
            prop_assert!(r >= 1.0);
            prop_assert!(r <= 7f64.powf(1.0 / p - 0.5) + 1e-9);
        }

        #[test]
        fn violated_certificates_carry_witness(seed in 0u64..100_000, c in 0.05..0.95f64) {
            let a = gen_matrix(MatrixKind::Gaussian { r: 0.0 }, 3, 6, seed).unwrap();
            let cert = check_ensp(&a, 1, 1.0, c, 50, seed).unwrap();
            prop_assert_eq!(cert.holds, cert.witness.is_none());
            if let Some(violates) = cert.witness_violates() {
                prop_assert!(violates);
            }
        }
    }
}
