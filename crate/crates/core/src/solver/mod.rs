//! Nested ADMM for `min ζ·ratio(x) + ½‖Ax − b‖²`.
//!
//! The outer loop splits `x = y` and alternates
//!
//! ```text
//! x ← argmin ζ·ratio(x) + (ρ/2)‖x − θ‖²,   θ = y − λ/ρ   (inner ADMM)
//! y ← (I + AᵀA/ρ)⁻¹(Aᵀb/ρ + λ/ρ + x)                     (closed form)
//! λ ← λ + ρ(x − y)
//! ```
//!
//! The `x`-subproblem is itself split as `x = u` and solved by an inner
//! ADMM whose steps are half-thresholding and a scalar quintic root.

mod inner;
mod yupdate;

use alloc::vec::Vec;

use num_traits::Float;

pub use inner::{inner_admm_solve, inner_x_update, InnerOptions, InnerOutcome, InnerState};
pub use yupdate::{y_update, YUpdateFactorization};

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::objective::ratio_unchecked;
use crate::problem::{
    AdaptivePenalty, InnerStart, PenaltyScale, ProblemInstance, SolveResult, SolverConfig,
    Termination,
};
use crate::{Matrix, Vector};

/// Residual-balancing update of a penalty parameter.
pub fn adapt_penalty(rho: f64, primal_res: f64, dual_res: f64, policy: AdaptivePenalty) -> f64 {
    match policy {
        AdaptivePenalty::Off => rho,
        AdaptivePenalty::ResidualBalance {
            mu,
            tau_incr,
            tau_decr,
        } => {
            if primal_res > mu * dual_res {
                rho * tau_incr
            } else if dual_res > mu * primal_res {
                rho / tau_decr
            } else {
                rho
            }
        }
    }
}

/// Merit function `ζ·ratio(x) + ½‖Ax − b‖² + (ρ/2)‖x − y‖²`.
pub fn merit_value(
    x: &Vector,
    y: &Vector,
    rho: f64,
    zeta: f64,
    instance: &ProblemInstance,
) -> Result<f64> {
    ensure_len("y", instance.n(), y.len())?;
    let h = crate::objective::objective_h(instance, zeta, x)?;
    Ok(h + 0.5 * rho * (x - y).norm_squared())
}

/// Augmented Lagrangian `ζ·ratio(x) + ½‖Ay − b‖² + ⟨λ, x − y⟩ + (ρ/2)‖x − y‖²`.
pub fn augmented_lagrangian(
    x: &Vector,
    y: &Vector,
    lambda: &Vector,
    rho: f64,
    zeta: f64,
    instance: &ProblemInstance,
) -> Result<f64> {
    ensure_len("x", instance.n(), x.len())?;
    ensure_len("lambda", instance.n(), lambda.len())?;
    let gap = x - y;
    Ok(zeta * ratio_unchecked(x.as_slice())
        + instance.data_fit(y)?
        + lambda.dot(&gap)
        + 0.5 * rho * gap.norm_squared())
}

/// Outer iterate `(xᵏ, yᵏ, λᵏ, ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterState {
    pub x: Vector,
    pub y: Vector,
    pub lambda: Vector,
    pub rho: f64,
    pub k: usize,
}

/// Diagnostics of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterStep {
    pub objective: f64,
    pub lagrangian: f64,
    /// `‖xₖ₊₁ − yₖ₊₁‖₂`.
    pub primal_residual: f64,
    /// `ρ‖yₖ₊₁ − yₖ‖₂`.
    pub dual_residual: f64,
    /// `‖xₖ₊₁ − xₖ‖₂`.
    pub step: f64,
    pub inner_iters: usize,
    /// The inner result raised the `x`-subproblem objective and was discarded.
    pub x_step_rejected: bool,
    /// `ρ` used during this iteration.
    pub rho: f64,
}

/// Stateful driver of the nested ADMM; [`admm_solve`] runs it to termination.
#[derive(Debug, Clone)]
pub struct NestedAdmm<'a> {
    instance: &'a ProblemInstance,
    config: SolverConfig,
    atb: Vector,
    fact: YUpdateFactorization,
    state: OuterState,
    gamma: f64,
    inner_warm: Option<(Vector, Vector)>,
}

impl<'a> NestedAdmm<'a> {
    pub fn new(
        instance: &'a ProblemInstance,
        config: &SolverConfig,
        x0: Vector,
        y0: Vector,
        lambda0: Vector,
    ) -> Result<Self> {
        config.validate()?;
        let n = instance.n();
        ensure_len("x0", n, x0.len())?;
        ensure_len("y0", n, y0.len())?;
        ensure_len("lambda0", n, lambda0.len())?;
        ensure_finite(x0.as_slice())?;
        ensure_finite(y0.as_slice())?;
        ensure_finite(lambda0.as_slice())?;
        Ok(Self {
            instance,
            config: config.clone(),
            atb: instance.a().tr_mul(instance.b()),
            fact: YUpdateFactorization::new(instance.a(), config.y_solver),
            state: OuterState {
                x: x0,
                y: y0,
                lambda: lambda0,
                rho: initial_rho(config, instance),
                k: 0,
            },
            gamma: config.gamma0,
            inner_warm: None,
        })
    }

    pub fn state(&self) -> &OuterState {
        &self.state
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lagrangian(&self) -> Result<f64> {
        let s = &self.state;
        augmented_lagrangian(&s.x, &s.y, &s.lambda, s.rho, self.config.zeta, self.instance)
    }

    fn subproblem_value(&self, x: &Vector, theta: &Vector) -> f64 {
        self.config.zeta * ratio_unchecked(x.as_slice())
            + 0.5 * self.state.rho * (x - theta).norm_squared()
    }

    /// Performs one outer iteration.
    pub fn step(&mut self) -> Result<OuterStep> {
        let cfg = &self.config;
        let rho = self.state.rho;
        let theta = &self.state.y - &self.state.lambda / rho;

        let warm = match cfg.inner_start {
            InnerStart::Warm => self.inner_warm.take(),
            InnerStart::Cold => None,
        };
        let opts = InnerOptions {
            max_iter: cfg.max_inner,
            eps_inner: cfg.eps_inner,
            u_weight: cfg.u_weight,
            adaptive: cfg.adaptive_penalty,
        };
        let outcome = inner_admm_solve(&theta, rho, self.gamma, cfg.zeta, warm, opts)
            .map_err(|e| match e {
                Error::Diverged { .. } => Error::Diverged {
                    iteration: self.state.k + 1,
                },
                other => other,
            })?;
        self.gamma = outcome.state.gamma;
        let inner_iters = outcome.iters;
        let InnerState { x: candidate, u, vartheta, .. } = outcome.state;
        if cfg.inner_start == InnerStart::Warm {
            self.inner_warm = Some((u, vartheta));
        }

        let rejected = cfg.x_step_safeguard
            && self.subproblem_value(&candidate, &theta)
                > self.subproblem_value(&self.state.x, &theta);
        let x_next = if rejected {
            self.state.x.clone()
        } else {
            candidate
        };

        let y_next = yupdate::y_update_with_atb(
            &x_next,
            &self.state.lambda,
            rho,
            self.instance.a(),
            &self.atb,
            &mut self.fact,
        )?;
        let gap = &x_next - &y_next;
        let lambda_next = &self.state.lambda + &gap * rho;

        let k = self.state.k + 1;
        if x_next
            .iter()
            .chain(y_next.iter())
            .chain(lambda_next.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Diverged { iteration: k });
        }

        let step = (&x_next - &self.state.x).norm();
        let dual_residual = rho * (&y_next - &self.state.y).norm();
        let primal_residual = gap.norm();
        self.state = OuterState {
            x: x_next,
            y: y_next,
            lambda: lambda_next,
            rho,
            k,
        };
        let lagrangian = self.lagrangian()?;
        let objective = cfg.zeta * ratio_unchecked(self.state.x.as_slice())
            + self.instance.data_fit(&self.state.x)?;

        let next_rho = adapt_penalty(rho, primal_residual, dual_residual, cfg.adaptive_penalty);
        if next_rho != rho {
            self.state.rho = next_rho;
            self.fact.invalidate();
        }

        Ok(OuterStep {
            objective,
            lagrangian,
            primal_residual,
            dual_residual,
            step,
            inner_iters,
            x_step_rejected: rejected,
            rho,
        })
    }

    /// Iterates until the primal residual, the relative-change rule or the
    /// iteration cap stops the run.
    pub fn run(mut self) -> Result<SolveResult> {
        let n = self.instance.n();
        let cap = self.config.outer_cap(n);
        let l0 = self.lagrangian()?;
        let slack = 1e-8 * (1.0 + l0.abs());

        let mut result = SolveResult::empty(n);
        let mut termination = Termination::MaxIters;
        let mut prev: Option<(f64, f64)> = None;
        for _ in 0..cap {
            let info = self.step()?;
            result.objective_trace.push(info.objective);
            result.lagrangian_trace.push(info.lagrangian);
            result.step_trace.push(info.step);
            result.total_inner_iters += info.inner_iters;
            if let Some((prev_l, prev_rho)) = prev {
                if prev_rho == info.rho && info.lagrangian > prev_l + slack {
                    result.descent_violations += 1;
                }
            }
            prev = Some((info.lagrangian, info.rho));

            if info.primal_residual < self.config.eps_out {
                termination = Termination::Converged;
                break;
            }
            let xnorm = self.state.x.norm();
            let rel = if xnorm > 0.0 {
                info.step / xnorm
            } else if info.step == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            // A rejected x-step leaves x unchanged without signalling convergence.
            if !info.x_step_rejected && rel < self.config.rel_change_tol {
                termination = Termination::Stalled;
                break;
            }
        }
        result.outer_iters = self.state.k;
        result.termination = termination;
        let OuterState { x, y, lambda, .. } = self.state;
        result.x = x;
        result.y = y;
        result.lambda = lambda;
        Ok(result)
    }
}

/// Runs the nested ADMM from `(x0, y0, λ0)`.
pub fn admm_solve(
    instance: &ProblemInstance,
    config: &SolverConfig,
    x0: &Vector,
    y0: &Vector,
    lambda0: &Vector,
) -> Result<SolveResult> {
    NestedAdmm::new(instance, config, x0.clone(), y0.clone(), lambda0.clone())?.run()
}

/// Runs the nested ADMM from `x0 = y0 = start` and `λ0 = Aᵀ(A·start − b)`,
/// the multiplier consistent with the `y`-optimality condition.
pub fn admm_solve_from(
    instance: &ProblemInstance,
    config: &SolverConfig,
    start: &Vector,
) -> Result<SolveResult> {
    let lambda0 = instance.data_fit_gradient(start)?;
    admm_solve(instance, config, start, start, &lambda0)
}

/// Outer penalty at the first iteration.
pub fn initial_rho(config: &SolverConfig, instance: &ProblemInstance) -> f64 {
    match config.rho_scale {
        PenaltyScale::Absolute => config.rho0,
        PenaltyScale::GramRelative => {
            let lg = gram_spectral_norm(instance.a());
            // A = 0 has no scale; fall back to the absolute value.
            if lg > 0.0 {
                config.rho0 * lg
            } else {
                config.rho0
            }
        }
    }
}

/// `λ_max(AᵀA)`: dense eigenvalues of the smaller Gram matrix up to
/// 2048 rows, power iteration beyond.
pub fn gram_spectral_norm(a: &Matrix) -> f64 {
    let (m, n) = a.shape();
    if m.min(n) <= 2048 {
        let small = if m < n { a * a.transpose() } else { a.tr_mul(a) };
        return small
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max);
    }
    let mut v = Vector::from_fn(n, |i, _| 1.0 + (i % 7) as f64 / 7.0);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..200 {
        let w = a.tr_mul(&(a * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - est).abs() <= 1e-10 * next.abs() {
            est = next;
            break;
        }
        est = next;
    }
    est
}

/// Extreme eigenvalues `(λ_min, λ_max)` of `AᵀA`.
pub fn gram_extreme_eigenvalues(instance: &ProblemInstance) -> (f64, f64) {
    let a = instance.a();
    let (m, n) = a.shape();
    // AᵀA and AAᵀ share their nonzero spectrum; AᵀA is singular when m < n.
    let small = if m < n { a * a.transpose() } else { a.tr_mul(a) };
    let eig = small.symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let min = if m < n {
        0.0
    } else {
        eig.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0)
    };
    (min, max)
}

/// Penalty above which the augmented Lagrangian is nonincreasing:
/// `(−λ_min + √(λ_min² + 8 L_g²)) / 2` with `L_g = λ_max(AᵀA)`.
pub fn descent_rho_threshold(lambda_min: f64, lipschitz: f64) -> f64 {
    (-lambda_min + (lambda_min * lambda_min + 8.0 * lipschitz * lipschitz).sqrt()) / 2.0
}

/// Collected per-iteration diagnostics; used by tests and the CLI.
pub fn run_with_trace(
    instance: &ProblemInstance,
    config: &SolverConfig,
    start: &Vector,
    iterations: usize,
) -> Result<Vec<(OuterState, OuterStep)>> {
    let lambda0 = instance.data_fit_gradient(start)?;
    let mut admm = NestedAdmm::new(instance, config, start.clone(), start.clone(), lambda0)?;
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let step = admm.step()?;
        out.push((admm.state().clone(), step));
    }
    Ok(out)
}
