//! Competitor and initializer solvers: ℓ₁ by ADMM, ℓ₁−ℓ₂ by DCA and
//! IRLS-ℓₚ.

use alloc::vec::Vec;

use nalgebra::Cholesky;
use num_traits::Float;

use crate::error::{ensure_len, Error, Result};
use crate::objective::l1_norm;
use crate::problem::{ProblemInstance, SolveResult, SolverConfig, Termination};
use crate::solver::YUpdateFactorization;
use crate::{Matrix, Vector};

/// Solver families used as competitors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    L1Admm,
    L1MinusL2Dca,
    IrlsLp { p: f64 },
}

impl BaselineKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BaselineKind::IrlsLp { p } if !(p > 0.0 && p < 1.0) => {
                Err(Error::param("p", "must lie in (0, 1)"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::L1Admm => "l1",
            BaselineKind::L1MinusL2Dca => "l1-l2",
            BaselineKind::IrlsLp { .. } => "irls-lp",
        }
    }
}

/// Fixed ADMM penalty of the ℓ₁ solver relative to `ζ`. Residual balancing
/// drives the penalty up on near-noiseless problems and stalls progress, so
/// the ℓ₁ ADMM keeps it fixed.
const L1_RHO_PER_ZETA: f64 = 100.0;

/// Inner tolerance of the DCA subproblems.
const DCA_INNER_TOL: f64 = 1e-6;

fn soft_threshold(v: &Vector, level: f64) -> Vector {
    v.map(|t| {
        let mag = t.abs() - level;
        if mag > 0.0 {
            mag.copysign(t)
        } else {
            0.0
        }
    })
}

fn relative_change(step: f64, norm: f64) -> f64 {
    if norm > 0.0 {
        step / norm
    } else if step == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn check_finite(v: &Vector, iteration: usize) -> Result<()> {
    if v.iter().all(|t| t.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged { iteration })
    }
}

struct LassoRun {
    z: Vector,
    dual: Vector,
    trace: Vec<f64>,
    steps: Vec<f64>,
    iters: usize,
    termination: Termination,
}

/// ADMM for `min ζ‖x‖₁ + wᵀx + ½‖Ax − b‖²` in scaled form with penalty
/// `100 ζ`, started from `z = z0`, `u = 0`.
#[allow(clippy::too_many_arguments)]
fn lasso_admm(
    instance: &ProblemInstance,
    atb: &Vector,
    fact: &mut YUpdateFactorization,
    zeta: f64,
    tilt: Option<&Vector>,
    z0: &Vector,
    tol: f64,
    cap: usize,
) -> Result<LassoRun> {
    let a = instance.a();
    let rho = L1_RHO_PER_ZETA * zeta;
    let mut z = z0.clone();
    let mut u = Vector::zeros(instance.n());
    let mut trace = Vec::new();
    let mut steps = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut iters = 0;
    let linear = match tilt {
        Some(w) => atb - w,
        None => atb.clone(),
    };
    for k in 1..=cap.max(1) {
        let rhs = &linear + (&z - &u) * rho;
        let x = fact.solve_shifted(a, &rhs, rho)?;
        let z_next = soft_threshold(&(&x + &u), zeta / rho);
        let gap = &x - &z_next;
        u += &gap;
        check_finite(&u, k)?;
        check_finite(&z_next, k)?;

        let step = (&z_next - &z).norm();
        let primal = gap.norm();
        z = z_next;
        iters = k;
        let mut value = zeta * l1_norm(z.as_slice()) + instance.data_fit(&z)?;
        if let Some(w) = tilt {
            value += w.dot(&z);
        }
        trace.push(value);
        steps.push(step);

        if relative_change(step.max(primal), z.norm()) < tol {
            termination = Termination::Stalled;
            break;
        }
    }
    Ok(LassoRun {
        dual: u * rho,
        z,
        trace,
        steps,
        iters,
        termination,
    })
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta > 0.0 && zeta.is_finite() {
        Ok(())
    } else {
        Err(Error::param("zeta", "must be positive and finite"))
    }
}

fn result_from(x: Vector, dual: Vector, trace: Vec<f64>, steps: Vec<f64>) -> SolveResult {
    let n = x.len();
    let mut r = SolveResult::empty(n);
    r.y = x.clone();
    r.x = x;
    r.lambda = dual;
    r.outer_iters = trace.len();
    r.objective_trace = trace;
    r.step_trace = steps;
    r
}

/// `min ζ‖x‖₁ + ½‖Ax − b‖²` by ADMM with soft-thresholding, started from zero.
///
/// Uses `y_solver`, `rel_change_tol` and the iteration cap of `config`;
/// `config.zeta` is ignored in favour of `zeta`.
pub fn solve_l1(instance: &ProblemInstance, zeta: f64, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    check_zeta(zeta)?;
    let n = instance.n();
    let atb = instance.a().tr_mul(instance.b());
    let mut fact = YUpdateFactorization::new(instance.a(), config.y_solver);
    let run = lasso_admm(
        instance,
        &atb,
        &mut fact,
        zeta,
        None,
        &Vector::zeros(n),
        config.rel_change_tol,
        config.outer_cap(n),
    )?;
    let mut r = result_from(run.z, run.dual, run.trace, run.steps);
    r.termination = run.termination;
    r.total_inner_iters = run.iters;
    Ok(r)
}

/// `ζ(‖x‖₁ − ‖x‖₂) + ½‖Ax − b‖²`.
pub fn l1_minus_l2_objective(instance: &ProblemInstance, zeta: f64, x: &Vector) -> Result<f64> {
    ensure_len("x", instance.n(), x.len())?;
    Ok(zeta * (l1_norm(x.as_slice()) - x.norm()) + instance.data_fit(x)?)
}

/// DCA for `min ζ(‖x‖₁ − ‖x‖₂) + ½‖Ax − b‖²` from `x0`.
///
/// Each step linearizes `−ζ‖x‖₂` at the current iterate (subgradient zero at
/// the origin) and solves the tilted ℓ₁ problem by ADMM, warm-started from
/// the current iterate, to relative tolerance `1e-6`. A step that raises the
/// objective is discarded and ends the run.
pub fn solve_l1_minus_l2_dca(
    instance: &ProblemInstance,
    zeta: f64,
    config: &SolverConfig,
    x0: &Vector,
) -> Result<SolveResult> {
    config.validate()?;
    check_zeta(zeta)?;
    let n = instance.n();
    ensure_len("x0", n, x0.len())?;
    let atb = instance.a().tr_mul(instance.b());
    let mut fact = YUpdateFactorization::new(instance.a(), config.y_solver);
    let cap = config.outer_cap(n);
    let inner_cap = config.max_outer.min((5 * n).max(1000));

    let mut x = x0.clone();
    let mut value = l1_minus_l2_objective(instance, zeta, &x)?;
    let mut dual = Vector::zeros(n);
    let mut trace = Vec::new();
    let mut steps = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut inner_total = 0;
    for k in 1..=cap {
        let norm = x.norm();
        let tilt = if norm > 0.0 {
            Some(&x * (-zeta / norm))
        } else {
            None
        };
        let run = lasso_admm(
            instance,
            &atb,
            &mut fact,
            zeta,
            tilt.as_ref(),
            &x,
            DCA_INNER_TOL,
            inner_cap,
        )?;
        inner_total += run.iters;
        check_finite(&run.z, k)?;
        let next_value = l1_minus_l2_objective(instance, zeta, &run.z)?;
        if next_value > value {
            termination = Termination::Stalled;
            break;
        }
        let step = (&run.z - &x).norm();
        x = run.z;
        dual = run.dual;
        value = next_value;
        trace.push(value);
        steps.push(step);
        if relative_change(step, x.norm()) < config.rel_change_tol {
            termination = Termination::Stalled;
            break;
        }
    }
    let mut r = result_from(x, dual, trace, steps);
    r.termination = termination;
    r.total_inner_iters = inner_total;
    Ok(r)
}

/// Minimum-norm least-squares solution `A⁺b`.
pub fn pseudoinverse_solution(instance: &ProblemInstance) -> Result<Vector> {
    let svd = instance.a().clone().svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(instance.b(), tol)
        .map_err(|_| Error::Factorization("SVD of A did not converge"))
}

/// Options of [`solve_irls_lp`] beyond the shared configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub p: f64,
    /// Sparsity estimate for the smoothing schedule; `None` decays the
    /// smoothing by a factor of 10 per iteration.
    pub sparsity: Option<usize>,
    /// Equality-constrained iterations (`Ax = b`) instead of the penalized
    /// form; defaults to the instance being noiseless.
    pub equality_constrained: bool,
}

impl IrlsOptions {
    pub fn for_instance(instance: &ProblemInstance, p: f64, sparsity: Option<usize>) -> Self {
        Self {
            p,
            sparsity,
            equality_constrained: instance.noise_db().is_none(),
        }
    }
}

/// `Σ(xᵢ² + ε²)^{p/2}`.
fn smoothed_penalty(x: &Vector, eps: f64, p: f64) -> f64 {
    x.iter().map(|v| (v * v + eps * eps).powf(0.5 * p)).sum()
}

/// Solves `(A Q Aᵀ + μI) z = rhs`, adding a relative jitter when the
/// weighted Gram matrix is numerically singular.
fn weighted_gram_solve(aq: &Matrix, a: &Matrix, mu: f64, rhs: &Vector) -> Option<Vector> {
    let gram = aq * a.transpose();
    let scale = (0..gram.nrows()).map(|i| gram[(i, i)]).fold(0.0_f64, f64::max);
    for jitter in [0.0, 1e-14, 1e-12, 1e-10] {
        let mut g = gram.clone();
        let shift = mu + jitter * scale;
        for i in 0..g.nrows() {
            g[(i, i)] += shift;
        }
        if let Some(chol) = Cholesky::new(g) {
            let z = chol.solve(rhs);
            if z.iter().all(|v| v.is_finite()) {
                return Some(z);
            }
        }
    }
    None
}

/// IRLS for `ℓₚ` sparse recovery, started from the pseudoinverse solution.
///
/// With weights `qᵢ = (xᵢ² + ε²)^{1−p/2}` each iteration sets
/// `x = QAᵀ(AQAᵀ + μI)⁻¹b` with `μ = 0` (equality constrained) or `μ = ζp`
/// (penalized). The smoothing follows `ε ← min(ε, 0.1·|x|₍ₛ₊₁₎)` from
/// `ε = 1`, applied once `‖Δx‖₂ < √ε/100`. The objective trace records the smoothed objective, which is
/// nonincreasing.
pub fn solve_irls_lp(
    instance: &ProblemInstance,
    options: IrlsOptions,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    BaselineKind::IrlsLp { p: options.p }.validate()?;
    let n = instance.n();
    if let Some(s) = options.sparsity {
        if s >= n {
            return Err(Error::param("sparsity", "must be below n"));
        }
    }
    let p = options.p;
    let zeta = config.zeta;
    let mu = if options.equality_constrained {
        0.0
    } else {
        zeta * p
    };
    let smoothed = |x: &Vector, eps: f64| -> Result<f64> {
        let pen = smoothed_penalty(x, eps, p);
        if options.equality_constrained {
            Ok(pen)
        } else {
            Ok(zeta * pen + instance.data_fit(x)?)
        }
    };

    let a = instance.a();
    let b = instance.b();
    let mut x = pseudoinverse_solution(instance)?;
    let mut eps = 1.0_f64;
    let mut trace = Vec::new();
    let mut steps = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut sorted = Vec::with_capacity(n);
    for k in 1..=config.outer_cap(n) {
        let q = x.map(|v| (v * v + eps * eps).powf(1.0 - 0.5 * p));
        let mut aq = a.clone();
        for (j, mut col) in aq.column_iter_mut().enumerate() {
            col *= q[j];
        }
        let Some(z) = weighted_gram_solve(&aq, a, mu, b) else {
            termination = Termination::Stalled;
            break;
        };
        let x_next = aq.tr_mul(&z);
        check_finite(&x_next, k)?;
        let step = (&x_next - &x).norm();
        x = x_next;

        sorted.clear();
        sorted.extend(x.iter().map(|v| v.abs()));
        eps = match options.sparsity {
            // shrink only once the iterate has settled at the current level
            Some(s) if step < eps.sqrt() / 100.0 => {
                sorted.select_nth_unstable_by(s, |u, v| v.total_cmp(u));
                eps.min(0.1 * sorted[s])
            }
            Some(_) => eps,
            None => 0.1 * eps,
        };
        trace.push(smoothed(&x, eps)?);
        steps.push(step);

        let xmax = sorted.iter().cloned().fold(0.0_f64, f64::max);
        if relative_change(step, x.norm()) < config.rel_change_tol || eps <= 1e-14 * xmax {
            termination = if eps <= 1e-14 * xmax {
                Termination::Converged
            } else {
                Termination::Stalled
            };
            break;
        }
    }
    let mut r = result_from(x, Vector::zeros(n), trace, steps);
    r.termination = termination;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{derive_seed, gen_matrix, gen_signal, MatrixKind};
    use alloc::vec;
    use proptest::prelude::*;

    fn capped(iters: usize) -> SolverConfig {
        SolverConfig {
            max_total_iters: Some(iters),
            ..SolverConfig::default()
        }
    }

    fn random_instance(m: usize, n: usize, s: usize, seed: u64) -> ProblemInstance {
        let a = gen_matrix(MatrixKind::Gaussian { r: 0.0 }, m, n, derive_seed(seed, &[1])).unwrap();
        let x = gen_signal(n, s, 1, derive_seed(seed, &[2])).unwrap();
        let b = &a * &x;
        ProblemInstance::new(a, b).unwrap().with_ground_truth(x).unwrap()
    }

    #[test]
    fn l1_zero_observation() {
        let inst = random_instance(5, 12, 2, 1);
        let zero = ProblemInstance::new(inst.a().clone(), Vector::zeros(5)).unwrap();
        let r = solve_l1(&zero, 0.1, &SolverConfig::default()).unwrap();
        assert_eq!(r.x, Vector::zeros(12));
    }

    #[test]
    fn l1_scalar_soft_threshold() {
        let inst = ProblemInstance::new(
            Matrix::from_element(1, 1, 1.0),
            Vector::from_element(1, 1.0),
        )
        .unwrap();
        let r = solve_l1(&inst, 0.1, &capped(10_000)).unwrap();
        assert!((r.x[0] - 0.9).abs() < 1e-7, "{}", r.x[0]);
    }

    #[test]
    fn l1_orthonormal_matches_soft_threshold() {
        // Q from a QR factorization of a random square matrix.
        let g = gen_matrix(MatrixKind::Gaussian { r: 0.0 }, 6, 6, 3).unwrap();
        let q = g.qr().q();
        let b = Vector::from_vec(vec![0.5, -2.0, 0.05, 1.2, -0.3, 0.0]);
        let inst = ProblemInstance::new(q.clone(), b.clone()).unwrap();
        let zeta = 0.25;
        let r = solve_l1(&inst, zeta, &capped(20_000)).unwrap();
        let oracle = soft_threshold(&q.tr_mul(&b), zeta);
        assert!((r.x - oracle).norm() < 1e-6);
    }

    #[test]
    fn dca_from_zero_starts_with_l1() {
        let inst = random_instance(8, 20, 2, 4);
        let cfg = capped(4000);
        let l1 = solve_l1(&inst, 0.05, &cfg).unwrap();
        let one_step = SolverConfig {
            max_total_iters: Some(1),
            ..cfg.clone()
        };
        // One DCA step from zero is the ℓ₁ problem, solved here at 1e-6.
        let dca = solve_l1_minus_l2_dca(&inst, 0.05, &one_step, &Vector::zeros(20));
        let dca = dca.unwrap();
        assert!((dca.x - l1.x).norm() < 1e-4);
    }

    #[test]
    fn dca_zero_observation() {
        let inst = random_instance(5, 12, 2, 5);
        let zero = ProblemInstance::new(inst.a().clone(), Vector::zeros(5)).unwrap();
        let r = solve_l1_minus_l2_dca(&zero, 0.1, &capped(100), &Vector::zeros(12)).unwrap();
        assert_eq!(r.x, Vector::zeros(12));
    }

    #[test]
    fn dca_monotone_on_toy() {
        let inst = crate::analysis::toy_instance();
        let zeta = 1e-2;
        let r = solve_l1_minus_l2_dca(&inst, zeta, &capped(200), &Vector::zeros(8)).unwrap();
        assert!(!r.objective_trace.is_empty());
        for w in r.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()));
        }
    }

    #[test]
    fn irls_zero_observation() {
        let inst = random_instance(6, 16, 2, 6);
        let zero = ProblemInstance::new(inst.a().clone(), Vector::zeros(6)).unwrap();
        let r = solve_irls_lp(&zero, IrlsOptions::for_instance(&zero, 0.5, Some(2)), &capped(100));
        assert_eq!(r.unwrap().x, Vector::zeros(16));
    }

    #[test]
    fn irls_sparse_fixed_point() {
        // Square invertible A: the unique feasible point is the solution.
        let a = gen_matrix(MatrixKind::Gaussian { r: 0.0 }, 5, 5, 7).unwrap();
        let x = Vector::from_vec(vec![0.0, 1.5, 0.0, -2.0, 0.0]);
        let inst = ProblemInstance::new(a.clone(), &a * &x).unwrap();
        let r = solve_irls_lp(&inst, IrlsOptions::for_instance(&inst, 0.5, Some(2)), &capped(50)).unwrap();
        assert!((r.x - x).norm() < 1e-8);
    }

    #[test]
    fn irls_recovers_low_sparsity() {
        let mut ok = 0;
        for seed in 0..10 {
            let inst = random_instance(8, 32, 2, 100 + seed);
            let truth = inst.ground_truth().unwrap().clone();
            let r = solve_irls_lp(&inst, IrlsOptions::for_instance(&inst, 0.5, Some(2)), &SolverConfig::default())
                .unwrap();
            if (r.x - &truth).norm() / truth.norm() <= 1e-3 {
                ok += 1;
            }
        }
        assert!(ok >= 8, "{ok}/10");
    }

    #[test]
    fn irls_rejects_bad_p() {
        let inst = random_instance(4, 8, 1, 8);
        for p in [0.0, 1.0, -0.5] {
            assert!(solve_irls_lp(&inst, IrlsOptions::for_instance(&inst, p, None), &capped(5)).is_err());
        }
    }

    #[test]
    fn pseudoinverse_is_min_norm_feasible() {
        let inst = random_instance(4, 9, 2, 9);
        let x = pseudoinverse_solution(&inst).unwrap();
        assert!(inst.residual(&x).unwrap().norm() < 1e-10);
        let oracle = inst.a().tr_mul(
            &(inst.a() * inst.a().transpose()).lu().solve(inst.b()).unwrap(),
        );
        assert!((x - oracle).norm() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn irls_trace_nonincreasing(seed in 0u64..10_000, noisy in any::<bool>()) {
            let inst = random_instance(10, 30, 3, seed);
            let opts = IrlsOptions {
                p: 0.5,
                sparsity: Some(3),
                equality_constrained: !noisy,
            };
            let cfg = SolverConfig { zeta: 1e-3, max_total_iters: Some(150), ..SolverConfig::default() };
            let r = solve_irls_lp(&inst, opts, &cfg).unwrap();
            for w in r.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()), "{} -> {}", w[0], w[1]);
            }
        }

        #[test]
        fn dca_trace_nonincreasing(seed in 0u64..10_000) {
            let inst = random_instance(10, 30, 3, seed);
            let cfg = SolverConfig { max_total_iters: Some(150), ..SolverConfig::default() };
            let r = solve_l1_minus_l2_dca(&inst, 1e-3, &cfg, &Vector::zeros(30)).unwrap();
            for w in r.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()));
            }
        }

        #[test]
        fn soft_threshold_is_l1_prox(v in -5.0..5.0f64, level in 0.0..3.0f64) {
            let out = soft_threshold(&Vector::from_element(1, v), level)[0];
            let obj = |x: f64| 0.5 * (x - v) * (x - v) + level * x.abs();
            for d in [-1e-3, 1e-3] {
                prop_assert!(obj(out) <= obj(out + d) + 1e-15);
            }
        }
    }
}
