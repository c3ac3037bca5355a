//! Shared domain types: problem instances, solver configuration and results.

use alloc::vec::Vec;

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::{Matrix, Vector};

/// A sparse recovery instance `b = A x (+ e)`.
///
/// Immutable after construction; the sensing matrix is stored dense and
/// column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    a: Matrix,
    b: Vector,
    ground_truth: Option<Vector>,
    noise_db: Option<f64>,
    seed: u64,
}

impl ProblemInstance {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(Error::param("A", "matrix must have at least one row and column"));
        }
        ensure_len("b", m, b.len())?;
        ensure_finite(a.as_slice())?;
        ensure_finite(b.as_slice())?;
        Ok(Self {
            a,
            b,
            ground_truth: None,
            noise_db: None,
            seed: 0,
        })
    }

    pub fn with_ground_truth(mut self, x: Vector) -> Result<Self> {
        ensure_len("ground truth", self.n(), x.len())?;
        ensure_finite(x.as_slice())?;
        self.ground_truth = Some(x);
        Ok(self)
    }

    pub fn with_noise_db(mut self, noise_db: Option<f64>) -> Self {
        self.noise_db = noise_db;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn ground_truth(&self) -> Option<&Vector> {
        self.ground_truth.as_ref()
    }

    pub fn noise_db(&self) -> Option<f64> {
        self.noise_db
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of measurements.
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// Signal length.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// `A x - b`.
    pub fn residual(&self, x: &Vector) -> Result<Vector> {
        ensure_len("x", self.n(), x.len())?;
        Ok(&self.a * x - &self.b)
    }

    /// `½‖Ax − b‖²`.
    pub fn data_fit(&self, x: &Vector) -> Result<f64> {
        Ok(0.5 * self.residual(x)?.norm_squared())
    }

    /// `Aᵀ(Ax − b)`, the gradient of the data fit.
    pub fn data_fit_gradient(&self, x: &Vector) -> Result<Vector> {
        let r = self.residual(x)?;
        Ok(self.a.tr_mul(&r))
    }
}

/// Penalty adaptation rule applied to both the outer `ρ` and inner `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptivePenalty {
    Off,
    /// Residual balancing: grow the penalty when the primal residual
    /// dominates by more than `mu`, shrink it when the dual residual does.
    ResidualBalance { mu: f64, tau_incr: f64, tau_decr: f64 },
}

impl AdaptivePenalty {
    pub const fn residual_balance() -> Self {
        AdaptivePenalty::ResidualBalance {
            mu: 10.0,
            tau_incr: 2.0,
            tau_decr: 2.0,
        }
    }
}

/// Unit of the initial outer penalty `rho0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyScale {
    /// `ρ = rho0`.
    Absolute,
    /// `ρ = rho0 · λ_max(AᵀA)`, so the penalty tracks the scale of the data
    /// fit. The default `rho0 = 1.5` sits above the descent threshold
    /// `(√8 / 2) λ_max(AᵀA)` of wide matrices.
    GramRelative,
}

/// How the `y`-update linear system `(I + AᵀA/ρ) y = r` is solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YSolver {
    /// Factorization of the smaller Gram system when `m ≤ 2048`,
    /// conjugate gradient otherwise.
    Auto,
    /// Cholesky factorization; Sherman–Morrison–Woodbury reduction to the
    /// `m × m` system when `m ≤ n`, the `n × n` system otherwise.
    SmwFactorization,
    /// Conjugate gradient on the `n × n` system. `max_iter = None` means `10 n`.
    ConjugateGradient { tol: f64, max_iter: Option<usize> },
}

/// Initialization of the inner `(u, ϑ)` pair at each outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStart {
    /// Re-initialize every outer iteration: `u₀ = θᵏ`, `ϑ₀ = 0`.
    Cold,
    /// Carry `(u, ϑ)` over from the previous outer iteration.
    Warm,
}

/// Quadratic weight of the inner `u`-subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UWeight {
    /// The inner penalty `γ`; makes inner fixed points stationary for the
    /// `x`-subproblem.
    Gamma,
    /// The shrinkage level `δ̃` of the current `x`-step.
    DeltaTilde,
}

/// Tunables of the nested ADMM and of the baseline solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub zeta: f64,
    pub rho0: f64,
    pub rho_scale: PenaltyScale,
    pub gamma0: f64,
    pub eps_out: f64,
    pub eps_inner: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub rel_change_tol: f64,
    /// Cap on outer iterations; `None` means `5 n`.
    pub max_total_iters: Option<usize>,
    pub adaptive_penalty: AdaptivePenalty,
    pub y_solver: YSolver,
    pub inner_start: InnerStart,
    pub u_weight: UWeight,
    /// Reject an inner result that does not lower the `x`-subproblem
    /// objective and keep the previous `x`.
    pub x_step_safeguard: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            zeta: 1e-5,
            rho0: 1.5,
            rho_scale: PenaltyScale::GramRelative,
            gamma0: 1.0,
            eps_out: 1e-8,
            eps_inner: 1e-8,
            max_outer: 100_000,
            max_inner: 50,
            rel_change_tol: 1e-8,
            max_total_iters: None,
            adaptive_penalty: AdaptivePenalty::Off,
            y_solver: YSolver::Auto,
            inner_start: InnerStart::Cold,
            u_weight: UWeight::Gamma,
            x_step_safeguard: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("zeta", self.zeta),
            ("rho0", self.rho0),
            ("gamma0", self.gamma0),
            ("eps_out", self.eps_out),
            ("eps_inner", self.eps_inner),
            ("rel_change_tol", self.rel_change_tol),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::param(name, "must be positive and finite"));
            }
        }
        if self.max_outer == 0 {
            return Err(Error::param("max_outer", "must be positive"));
        }
        if self.max_inner == 0 {
            return Err(Error::param("max_inner", "must be positive"));
        }
        if self.max_total_iters == Some(0) {
            return Err(Error::param("max_total_iters", "must be positive"));
        }
        if let AdaptivePenalty::ResidualBalance {
            mu,
            tau_incr,
            tau_decr,
        } = self.adaptive_penalty
        {
            if !(mu > 1.0 && tau_incr > 1.0 && tau_decr > 1.0) {
                return Err(Error::param(
                    "adaptive_penalty",
                    "mu, tau_incr and tau_decr must exceed 1",
                ));
            }
        }
        if let YSolver::ConjugateGradient { tol, max_iter } = self.y_solver {
            if !(tol > 0.0) || max_iter == Some(0) {
                return Err(Error::param("y_solver", "CG tolerance and cap must be positive"));
            }
        }
        Ok(())
    }

    /// Effective outer iteration cap for a problem with `n` unknowns.
    pub fn outer_cap(&self, n: usize) -> usize {
        let total = self.max_total_iters.unwrap_or(5 * n).max(1);
        self.max_outer.min(total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Primal residual `‖x − y‖₂` dropped below `eps_out`.
    Converged,
    /// Iteration caps exhausted.
    MaxIters,
    /// Relative change `‖xₖ − xₖ₋₁‖₂ / ‖xₖ‖₂` dropped below `rel_change_tol`.
    Stalled,
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: Vector,
    pub y: Vector,
    pub lambda: Vector,
    /// Model objective after every outer iteration.
    pub objective_trace: Vec<f64>,
    /// Augmented Lagrangian after every outer iteration (ADMM solvers only).
    pub lagrangian_trace: Vec<f64>,
    /// `‖xₖ₊₁ − xₖ‖₂` after every outer iteration.
    pub step_trace: Vec<f64>,
    pub termination: Termination,
    pub outer_iters: usize,
    pub total_inner_iters: usize,
    /// Number of augmented-Lagrangian increases beyond `1e-8 (1 + |L⁰|)`.
    pub descent_violations: usize,
}

impl SolveResult {
    pub(crate) fn empty(n: usize) -> Self {
        Self {
            x: Vector::zeros(n),
            y: Vector::zeros(n),
            lambda: Vector::zeros(n),
            objective_trace: Vec::new(),
            lagrangian_trace: Vec::new(),
            step_trace: Vec::new(),
            termination: Termination::MaxIters,
            outer_iters: 0,
            total_inner_iters: 0,
            descent_violations: 0,
        }
    }
}
