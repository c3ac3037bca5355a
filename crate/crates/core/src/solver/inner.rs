use num_traits::Float;

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::problem::{AdaptivePenalty, UWeight};
use crate::prox::{half_threshold_vector, solve_u_subproblem, HalfThresholdParams};
use crate::Vector;

use super::adapt_penalty;

/// Iterate of the inner ADMM that solves the outer `x`-subproblem
/// `min ζ·ratio(x) + (ρ/2)‖x − θᵏ‖²` through the split `x = u`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerState {
    pub x: Vector,
    pub u: Vector,
    pub vartheta: Vector,
    pub gamma: f64,
    /// `θᵏ = yᵏ − λᵏ/ρ`, fixed for one inner solve.
    pub theta_k: Vector,
    pub t: usize,
}

impl InnerState {
    /// Cold start: `u₀ = θᵏ`, `ϑ₀ = 0`.
    pub fn cold(theta_k: Vector, gamma: f64) -> Self {
        let n = theta_k.len();
        Self {
            x: Vector::zeros(n),
            u: theta_k.clone(),
            vartheta: Vector::zeros(n),
            gamma,
            theta_k,
            t: 0,
        }
    }
}

/// Shrinkage level `δ̃ = 2ζ / ((γ + ρ)‖uₜ‖₂^{1/2})`.
///
/// `‖θᵏ‖₂` stands in for `‖uₜ‖₂` when `uₜ = 0`; when both vanish the
/// shrinkage is switched off.
pub(crate) fn delta_tilde(state: &InnerState, rho: f64, zeta: f64) -> f64 {
    let mut scale = state.u.norm();
    if scale == 0.0 {
        scale = state.theta_k.norm();
    }
    if scale == 0.0 {
        return 0.0;
    }
    2.0 * zeta / ((state.gamma + rho) * scale.sqrt())
}

fn x_step(state: &InnerState, rho: f64, zeta: f64) -> Result<(Vector, f64)> {
    let gamma = state.gamma;
    let dt = delta_tilde(state, rho, zeta);
    // m = (ρθ + γp) / (γ + ρ) with p = u − ϑ/γ
    let p = &state.u - &state.vartheta / gamma;
    let m = (&state.theta_k * rho + p * gamma) / (gamma + rho);
    let x = half_threshold_vector(&m, HalfThresholdParams::new(dt)?)?;
    Ok((x, dt))
}

/// One inner `x`-step: coordinate-wise half-thresholding of
/// `mₜ = (ρθᵏ + γpₜ)/(γ + ρ)` at level `δ̃`.
pub fn inner_x_update(state: &InnerState, rho: f64, zeta: f64) -> Result<Vector> {
    ensure_len("u", state.theta_k.len(), state.u.len())?;
    ensure_len("vartheta", state.theta_k.len(), state.vartheta.len())?;
    Ok(x_step(state, rho, zeta)?.0)
}

/// Options of one inner solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    pub max_iter: usize,
    pub eps_inner: f64,
    pub u_weight: UWeight,
    pub adaptive: AdaptivePenalty,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            eps_inner: 1e-8,
            u_weight: UWeight::Gamma,
            adaptive: AdaptivePenalty::Off,
        }
    }
}

/// Final inner iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub state: InnerState,
    pub iters: usize,
    /// `‖xₜ − uₜ‖₂` at exit.
    pub residual: f64,
}

/// Runs the inner ADMM from `warm = (u, ϑ)` (or the cold start) until
/// `‖xₜ₊₁ − uₜ₊₁‖₂ < eps_inner` or `max_iter` iterations.
pub fn inner_admm_solve(
    theta_k: &Vector,
    rho: f64,
    gamma: f64,
    zeta: f64,
    warm: Option<(Vector, Vector)>,
    options: InnerOptions,
) -> Result<InnerOutcome> {
    ensure_finite(theta_k.as_slice())?;
    if !(rho > 0.0 && gamma > 0.0 && zeta > 0.0) {
        return Err(Error::param("rho/gamma/zeta", "must be positive"));
    }
    let mut state = match warm {
        Some((u, vartheta)) => {
            ensure_len("warm u", theta_k.len(), u.len())?;
            ensure_len("warm vartheta", theta_k.len(), vartheta.len())?;
            InnerState {
                x: Vector::zeros(theta_k.len()),
                u,
                vartheta,
                gamma,
                theta_k: theta_k.clone(),
                t: 0,
            }
        }
        None => InnerState::cold(theta_k.clone(), gamma),
    };

    let mut residual = f64::INFINITY;
    for _ in 0..options.max_iter.max(1) {
        let (x, dt) = x_step(&state, rho, zeta)?;
        let c: f64 = x.iter().map(|v| v.abs().sqrt()).sum();
        let d = &x + &state.vartheta / state.gamma;
        let weight = match options.u_weight {
            UWeight::DeltaTilde if dt > 0.0 => dt,
            _ => state.gamma,
        };
        let u_next = solve_u_subproblem(&d, c, zeta, weight)?;
        let gap = &x - &u_next;
        state.vartheta.axpy(state.gamma, &gap, 1.0);
        state.t += 1;
        if x.iter().chain(u_next.iter()).chain(state.vartheta.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: state.t });
        }
        residual = gap.norm();
        let dual = state.gamma * (&u_next - &state.u).norm();
        state.x = x;
        state.u = u_next;
        if residual < options.eps_inner {
            break;
        }
        state.gamma = adapt_penalty(state.gamma, residual, dual, options.adaptive);
    }
    Ok(InnerOutcome {
        iters: state.t,
        residual,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Full inner x-objective for n = 1:
    /// ζ|x|^{1/2}/|u|^{1/2} + (ρ/2)(x − θ)² + ϑ(x − u) + (γ/2)(x − u)².
    fn inner_x_objective(x: f64, s: &InnerState, rho: f64, zeta: f64) -> f64 {
        let (u, th, v, g) = (s.u[0], s.theta_k[0], s.vartheta[0], s.gamma);
        zeta * x.abs().sqrt() / u.abs().sqrt()
            + 0.5 * rho * (x - th) * (x - th)
            + v * (x - u)
            + 0.5 * g * (x - u) * (x - u)
    }

    #[test]
    fn scalar_x_step_matches_grid_oracle() {
        let cases = [
            (1.3, 0.7, 0.4, -0.2, 0.9, 2.0),
            (0.2, -1.5, 0.8, 0.5, 1.7, 0.3),
            (2.0, 0.05, 0.1, 0.0, 0.5, 4.0),
        ];
        for (theta, u, vartheta, _unused, gamma, zeta) in cases {
            let state = InnerState {
                x: Vector::zeros(1),
                u: Vector::from_vec(vec![u]),
                vartheta: Vector::from_vec(vec![vartheta]),
                gamma,
                theta_k: Vector::from_vec(vec![theta]),
                t: 0,
            };
            let rho = 1.1;
            let x = inner_x_update(&state, rho, zeta).unwrap()[0];
            let mut best = f64::INFINITY;
            for i in 0..=800_000 {
                let z = -4.0 + 1e-5 * i as f64;
                best = best.min(inner_x_objective(z, &state, rho, zeta));
            }
            let ours = inner_x_objective(x, &state, rho, zeta);
            assert!(ours <= best + 1e-9, "theta {theta}: {ours} vs {best}");
        }
    }

    #[test]
    fn vanishing_zeta_returns_m() {
        let state = InnerState {
            x: Vector::zeros(3),
            u: Vector::from_vec(vec![1.0, -2.0, 0.5]),
            vartheta: Vector::from_vec(vec![0.1, 0.2, -0.3]),
            gamma: 2.0,
            theta_k: Vector::from_vec(vec![0.4, -1.0, 3.0]),
            t: 0,
        };
        let rho = 0.5;
        let p = &state.u - &state.vartheta / state.gamma;
        let m = (&state.theta_k * rho + p * state.gamma) / (state.gamma + rho);
        let x = inner_x_update(&state, rho, 1e-15).unwrap();
        assert!((x - m).norm() < 1e-9);
    }

    #[test]
    fn zero_center_maps_to_zero() {
        let state = InnerState::cold(Vector::zeros(4), 1.0);
        assert_eq!(inner_x_update(&state, 1.0, 0.3).unwrap(), Vector::zeros(4));
    }

    #[test]
    fn zero_theta_is_a_fixed_point() {
        let out = inner_admm_solve(
            &Vector::zeros(5),
            1.0,
            1.0,
            0.1,
            Some((Vector::zeros(5), Vector::zeros(5))),
            InnerOptions::default(),
        )
        .unwrap();
        assert_eq!(out.iters, 1);
        assert_eq!(out.state.x, Vector::zeros(5));
    }

    #[test]
    fn small_zeta_recovers_center() {
        let theta = Vector::from_vec(vec![1.7]);
        let out = inner_admm_solve(&theta, 1.0, 1.0, 1e-9, None, InnerOptions::default()).unwrap();
        assert!((out.state.x[0] - 1.7).abs() < 1e-6, "{}", out.state.x[0]);
    }

    #[test]
    fn two_dimensional_solve_meets_stopping_rule() {
        let theta = Vector::from_vec(vec![1.2, -0.4]);
        let opts = InnerOptions {
            max_iter: 500,
            eps_inner: 1e-8,
            ..InnerOptions::default()
        };
        let out = inner_admm_solve(&theta, 2.0, 3.0, 0.05, None, opts).unwrap();
        assert!(out.iters < 500);
        assert!((&out.state.x - &out.state.u).norm() < 1e-8);
    }
}
