//! Scalar half-thresholding and the `u`-subproblem of the inner ADMM.
//!
//! Half-thresholding solves `min_x (x − m)² + δ̃ |x|^{1/2}` in closed form;
//! the `u`-step reduces to the root of `τ⁵ − τ³ = κ` on `(1, ∞)`.

use core::f64::consts::PI;

use num_traits::Float;

use crate::error::{ensure_finite, Error, Result};
use crate::Vector;

/// Shrinkage level `δ̃` together with its hard threshold `(∛54 / 4) δ̃^{2/3}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfThresholdParams {
    delta_tilde: f64,
    threshold: f64,
}

impl HalfThresholdParams {
    /// `delta_tilde = 0` is accepted and yields the identity map.
    pub fn new(delta_tilde: f64) -> Result<Self> {
        if !(delta_tilde >= 0.0 && delta_tilde.is_finite()) {
            return Err(Error::param("delta_tilde", "must be finite and nonnegative"));
        }
        Ok(Self {
            delta_tilde,
            threshold: threshold_for(delta_tilde),
        })
    }

    pub fn delta_tilde(&self) -> f64 {
        self.delta_tilde
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

fn threshold_for(delta_tilde: f64) -> f64 {
    54.0_f64.cbrt() / 4.0 * delta_tilde.powf(2.0 / 3.0)
}

/// Global minimizer of `(x − m)² + δ̃ |x|^{1/2}`.
///
/// Returns exactly zero when `|m|` is at or below the threshold.
pub fn half_threshold_scalar(m: f64, params: HalfThresholdParams) -> Result<f64> {
    if !m.is_finite() {
        return Err(Error::NonFinite { index: 0 });
    }
    Ok(half_threshold_unchecked(m, params))
}

#[inline]
fn half_threshold_unchecked(m: f64, params: HalfThresholdParams) -> f64 {
    let mag = m.abs();
    if mag <= params.threshold {
        return 0.0;
    }
    let arg = (params.delta_tilde / 8.0) * (mag / 3.0).powf(-1.5);
    let phi = arg.clamp(-1.0, 1.0).acos();
    let x = 2.0 / 3.0 * mag * (1.0 + (2.0 * PI / 3.0 - 2.0 * phi / 3.0).cos());
    x.copysign(m)
}

/// Coordinate-wise [`half_threshold_scalar`].
pub fn half_threshold_vector(m: &Vector, params: HalfThresholdParams) -> Result<Vector> {
    ensure_finite(m.as_slice())?;
    Ok(m.map(|v| half_threshold_unchecked(v, params)))
}

/// Unique root of `τ⁵ − τ³ = κ` in `(1, ∞)` for `κ > 0`.
///
/// Safeguarded Newton: iterates that leave the current bracket are replaced
/// by bisection, so every iterate stays inside `(1, 1 + κ^{1/5} + κ^{1/3}]`.
pub fn quintic_root(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::param("kappa", "must be positive and finite"));
    }
    // f(τ) = τ³(τ − 1)(τ + 1) − κ avoids cancellation near τ = 1.
    let f = |t: f64| t * t * t * (t - 1.0) * (t + 1.0) - kappa;
    let df = |t: f64| t * t * (5.0 * t * t - 3.0);

    let mut lo = 1.0_f64;
    let mut hi = 1.0 + kappa.powf(0.2) + kappa.cbrt();
    let tol = 1e-13 * kappa.max(1.0);

    let mut t = (1.0 + kappa.powf(0.2)).max(1.5).min(hi);
    for _ in 0..200 {
        let ft = f(t);
        if ft.abs() <= tol {
            break;
        }
        if ft < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - ft / df(t);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == t || hi - lo <= f64::EPSILON * hi {
            break;
        }
        t = next;
    }
    if t <= 1.0 {
        // κ below ~1e-16 leaves no representable root above 1 with a
        // nonnegative residual; take the next float.
        t = 1.0 + f64::EPSILON;
    }
    Ok(t)
}

/// Minimizer of `ζ c / ‖u‖₂^{1/2} + (w/2) ‖u − d‖₂²` where `w = weight`.
///
/// * `c = 0` returns `d`.
/// * `d = 0`, `c > 0` returns `r e₁` with `r = (ζ c / (2 w))^{2/5}`.
/// * otherwise returns `τ d` with `τ` the root of `τ⁵ − τ³ = ζ c / (2 w ‖d‖₂^{5/2})`.
pub fn solve_u_subproblem(d: &Vector, c: f64, zeta: f64, weight: f64) -> Result<Vector> {
    ensure_finite(d.as_slice())?;
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::param("c", "must be finite and nonnegative"));
    }
    if !(zeta > 0.0 && weight > 0.0) || !zeta.is_finite() || !weight.is_finite() {
        return Err(Error::param("zeta/weight", "must be positive and finite"));
    }
    if c == 0.0 {
        return Ok(d.clone());
    }
    let eta = d.norm();
    if eta == 0.0 {
        let mut e = Vector::zeros(d.len());
        if !e.is_empty() {
            e[0] = (zeta * c / (2.0 * weight)).powf(0.4);
        }
        return Ok(e);
    }
    let kappa = zeta * c / (2.0 * weight * eta.powf(2.5));
    if kappa == 0.0 || !kappa.is_finite() {
        if kappa == 0.0 {
            return Ok(d.clone());
        }
        return Err(Error::Degenerate("u-subproblem scale overflow".into()));
    }
    let tau = quintic_root(kappa)?;
    Ok(d * tau)
}
