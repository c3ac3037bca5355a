use num_traits::Float;
use nalgebra::{Cholesky, Dyn};

use crate::error::{ensure_len, Error, Result};
use crate::problem::{ProblemInstance, YSolver};
use crate::{Matrix, Vector};

/// Row count above which [`YSolver::Auto`] switches to conjugate gradient.
const AUTO_CG_ROWS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Strategy {
    Factorization,
    Cg { tol: f64, max_iter: Option<usize> },
}

/// Cached solver for `(I + AᵀA/ρ) y = r`.
///
/// With `m ≤ n` the Sherman–Morrison–Woodbury identity
/// `(I + AᵀA/ρ)⁻¹ = I − Aᵀ(ρI + AAᵀ)⁻¹A` reduces the work to an `m × m`
/// Cholesky factor; tall matrices factor `ρI + AᵀA` directly. The factor is
/// rebuilt whenever `ρ` changes.
#[derive(Debug, Clone)]
pub struct YUpdateFactorization {
    strategy: Strategy,
    wide: bool,
    gram: Option<Matrix>,
    chol: Option<Cholesky<f64, Dyn>>,
    rho_at_factorization: Option<f64>,
    cg_iterations: usize,
}

impl YUpdateFactorization {
    pub fn new(a: &Matrix, solver: YSolver) -> Self {
        let (m, n) = a.shape();
        let strategy = match solver {
            YSolver::SmwFactorization => Strategy::Factorization,
            YSolver::ConjugateGradient { tol, max_iter } => Strategy::Cg { tol, max_iter },
            YSolver::Auto if m <= AUTO_CG_ROWS => Strategy::Factorization,
            YSolver::Auto => Strategy::Cg {
                tol: 1e-10,
                max_iter: None,
            },
        };
        Self {
            strategy,
            wide: m <= n,
            gram: None,
            chol: None,
            rho_at_factorization: None,
            cg_iterations: 0,
        }
    }

    pub fn uses_factorization(&self) -> bool {
        self.strategy == Strategy::Factorization
    }

    /// `ρ` of the cached factor, if any.
    pub fn rho_at_factorization(&self) -> Option<f64> {
        self.rho_at_factorization
    }

    /// Drops the cached factor.
    pub fn invalidate(&mut self) {
        self.chol = None;
        self.rho_at_factorization = None;
    }

    /// Total CG iterations spent so far (zero for the factorization path).
    pub fn cg_iterations(&self) -> usize {
        self.cg_iterations
    }

    /// Solves `(I + AᵀA/ρ) y = rhs`.
    pub fn solve(&mut self, a: &Matrix, rhs: &Vector, rho: f64) -> Result<Vector> {
        ensure_len("rhs", a.ncols(), rhs.len())?;
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::param("rho", "must be positive and finite"));
        }
        match self.strategy {
            Strategy::Factorization => self.solve_factored(a, rhs, rho),
            Strategy::Cg { tol, max_iter } => {
                let cap = max_iter.unwrap_or(10 * a.ncols()).max(1);
                let (y, iters) = conjugate_gradient(a, rhs, rho, tol, cap);
                self.cg_iterations += iters;
                Ok(y)
            }
        }
    }

    /// Solves `(ρI + AᵀA) x = rhs`.
    pub fn solve_shifted(&mut self, a: &Matrix, rhs: &Vector, rho: f64) -> Result<Vector> {
        Ok(self.solve(a, rhs, rho)? / rho)
    }

    fn factor(&mut self, a: &Matrix, rho: f64) -> Result<()> {
        if self.rho_at_factorization == Some(rho) && self.chol.is_some() {
            return Ok(());
        }
        let gram = self.gram.get_or_insert_with(|| {
            if self.wide {
                a * a.transpose()
            } else {
                a.tr_mul(a)
            }
        });
        let mut shifted = gram.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += rho;
        }
        let chol = Cholesky::new(shifted)
            .ok_or(Error::Factorization("shifted Gram matrix is not positive definite"))?;
        self.chol = Some(chol);
        self.rho_at_factorization = Some(rho);
        Ok(())
    }

    fn solve_factored(&mut self, a: &Matrix, rhs: &Vector, rho: f64) -> Result<Vector> {
        self.factor(a, rho)?;
        let chol = self.chol.as_ref().expect("factor populated the cache");
        if self.wide {
            let ar = a * rhs;
            let z = chol.solve(&ar);
            Ok(rhs - a.tr_mul(&z))
        } else {
            Ok(chol.solve(rhs) * rho)
        }
    }
}

/// CG on `(I + AᵀA/ρ) y = r` started from `y₀ = r`, stopping at
/// `‖residual‖₂ ≤ tol ‖r‖₂`.
fn conjugate_gradient(a: &Matrix, rhs: &Vector, rho: f64, tol: f64, cap: usize) -> (Vector, usize) {
    let apply = |v: &Vector| -> Vector { v + a.tr_mul(&(a * v)) / rho };
    let target = tol * rhs.norm();
    let mut y = rhs.clone();
    let mut r = rhs - apply(&y);
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut iters = 0;
    while rr.sqrt() > target && iters < cap {
        let ap = apply(&p);
        let alpha = rr / p.dot(&ap);
        y.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_next = r.norm_squared();
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
        iters += 1;
    }
    (y, iters)
}

/// Closed-form `y`-step: `(I + AᵀA/ρ)⁻¹(Aᵀb/ρ + λ/ρ + x_next)`.
pub fn y_update(
    x_next: &Vector,
    lambda: &Vector,
    rho: f64,
    instance: &ProblemInstance,
    fact: &mut YUpdateFactorization,
) -> Result<Vector> {
    let atb = instance.a().tr_mul(instance.b());
    y_update_with_atb(x_next, lambda, rho, instance.a(), &atb, fact)
}

pub(crate) fn y_update_with_atb(
    x_next: &Vector,
    lambda: &Vector,
    rho: f64,
    a: &Matrix,
    atb: &Vector,
    fact: &mut YUpdateFactorization,
) -> Result<Vector> {
    ensure_len("x", a.ncols(), x_next.len())?;
    ensure_len("lambda", a.ncols(), lambda.len())?;
    let rhs = (atb + lambda) / rho + x_next;
    fact.solve(a, &rhs, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(m: usize, n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Matrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
    }

    fn random_vector(n: usize, seed: u64) -> Vector {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
    }

    /// Dense oracle: LU solve of the explicit n × n system.
    fn dense_y(a: &Matrix, b: &Vector, lambda: &Vector, x: &Vector, rho: f64) -> Vector {
        let n = a.ncols();
        let sys = Matrix::identity(n, n) + a.tr_mul(a) / rho;
        let rhs = (a.tr_mul(b) + lambda) / rho + x;
        sys.lu().solve(&rhs).unwrap()
    }

    #[test]
    fn smw_matches_dense_solve() {
        let a = random_matrix(4, 8, 1);
        let b = random_vector(4, 2);
        let lambda = random_vector(8, 3);
        let x = random_vector(8, 4);
        let inst = ProblemInstance::new(a.clone(), b.clone()).unwrap();
        for rho in [0.3, 1.0, 17.0] {
            let mut fact = YUpdateFactorization::new(&a, YSolver::SmwFactorization);
            let y = y_update(&x, &lambda, rho, &inst, &mut fact).unwrap();
            let oracle = dense_y(&a, &b, &lambda, &x, rho);
            assert!((y - oracle).norm() < 1e-10);
        }
    }

    #[test]
    fn tall_and_cg_paths_match_dense_solve() {
        let a = random_matrix(12, 5, 5);
        let b = random_vector(12, 6);
        let lambda = random_vector(5, 7);
        let x = random_vector(5, 8);
        let inst = ProblemInstance::new(a.clone(), b.clone()).unwrap();
        let oracle = dense_y(&a, &b, &lambda, &x, 2.0);
        for solver in [
            YSolver::SmwFactorization,
            YSolver::ConjugateGradient { tol: 1e-13, max_iter: None },
        ] {
            let mut fact = YUpdateFactorization::new(&a, solver);
            let y = y_update(&x, &lambda, 2.0, &inst, &mut fact).unwrap();
            assert!((y - &oracle).norm() < 1e-10, "{solver:?}");
        }
    }

    #[test]
    fn zero_matrix_is_identity_system() {
        let a = Matrix::zeros(3, 6);
        let inst = ProblemInstance::new(a.clone(), Vector::from_element(3, 1.0)).unwrap();
        let lambda = random_vector(6, 9);
        let x = random_vector(6, 10);
        let mut fact = YUpdateFactorization::new(&a, YSolver::Auto);
        let y = y_update(&x, &lambda, 4.0, &inst, &mut fact).unwrap();
        assert!((y - (&lambda / 4.0 + &x)).norm() < 1e-14);
    }

    #[test]
    fn large_rho_tends_to_x() {
        let a = random_matrix(5, 9, 11);
        let inst = ProblemInstance::new(a.clone(), random_vector(5, 12)).unwrap();
        let x = random_vector(9, 13);
        let lambda = random_vector(9, 14);
        let mut fact = YUpdateFactorization::new(&a, YSolver::Auto);
        let y = y_update(&x, &lambda, 1e9, &inst, &mut fact).unwrap();
        assert!((y - &x).norm() < 1e-6);
    }

    #[test]
    fn cache_tracks_rho() {
        let a = random_matrix(3, 7, 15);
        let mut fact = YUpdateFactorization::new(&a, YSolver::Auto);
        let r = random_vector(7, 16);
        fact.solve(&a, &r, 1.0).unwrap();
        assert_eq!(fact.rho_at_factorization(), Some(1.0));
        fact.solve(&a, &r, 2.0).unwrap();
        assert_eq!(fact.rho_at_factorization(), Some(2.0));
        fact.invalidate();
        assert_eq!(fact.rho_at_factorization(), None);
    }
}
