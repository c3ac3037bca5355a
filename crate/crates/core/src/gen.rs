//! Reproducible instance generators.
//!
//! Every generator is a pure function of its parameters and a `u64` seed.
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`), seeded
//! through [`derive_seed`], so instances are identical across platforms and
//! thread counts.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::problem::ProblemInstance;
use crate::{Matrix, Vector};

/// Sensing matrix family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixKind {
    /// Rows i.i.d. `N(0, Σ)` with unit diagonal and constant off-diagonal `r`.
    Gaussian { r: f64 },
    /// `aᵢ = cos(2iπω/F)/√m` with `ω ~ U([0,1]^m)`; larger `F` is more coherent.
    OversampledDct { f: f64 },
}

/// Distribution of the nonzero ground-truth amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Amplitude {
    #[default]
    StandardNormal,
    /// Random sign times a log-uniform magnitude on `[1, 10³]`.
    HighDynamicRange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub kind: MatrixKind,
    pub m: usize,
    pub n: usize,
    pub sparsity: usize,
    /// Minimum index distance between support entries; `1` disables it.
    pub min_separation: usize,
    /// Measurement SNR in dB; `None` is noiseless.
    pub noise_db: Option<f64>,
    pub seed: u64,
    pub amplitude: Amplitude,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::param("m/n", "must be positive"));
        }
        if self.sparsity == 0 || self.sparsity > self.n {
            return Err(Error::param("sparsity", "must lie in 1..=n"));
        }
        if self.min_separation == 0 {
            return Err(Error::param("min_separation", "must be positive"));
        }
        check_kind(self.kind)?;
        if self.min_separation > 1 {
            let required = self.sparsity * self.min_separation;
            if required > self.n {
                return Err(Error::InfeasibleSupport {
                    required,
                    n: self.n,
                });
            }
        }
        Ok(())
    }
}

fn check_kind(kind: MatrixKind) -> Result<()> {
    match kind {
        MatrixKind::Gaussian { r } if !(0.0..1.0).contains(&r) => {
            Err(Error::param("r", "must lie in [0, 1)"))
        }
        MatrixKind::OversampledDct { f } if !(f > 0.0 && f.is_finite()) => {
            Err(Error::param("F", "must be positive"))
        }
        _ => Ok(()),
    }
}

const MATRIX_STREAM: u64 = 1;
const SIGNAL_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a master seed and a path of indices
/// (for example `[cell, trial]`).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// The generator used everywhere in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Draws a sensing matrix of the given family.
pub fn gen_matrix(kind: MatrixKind, m: usize, n: usize, seed: u64) -> Result<Matrix> {
    check_kind(kind)?;
    let mut rng = rng_from_seed(seed);
    Ok(match kind {
        MatrixKind::Gaussian { r } => {
            let (a, c) = ((1.0 - r).sqrt(), r.sqrt());
            let mut mat = Matrix::zeros(m, n);
            for i in 0..m {
                let w: f64 = StandardNormal.sample(&mut rng);
                for j in 0..n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mat[(i, j)] = a * z + c * w;
                }
            }
            mat
        }
        MatrixKind::OversampledDct { f } => {
            let omega: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let scale = 1.0 / (m as f64).sqrt();
            // column index is 1-based
            Matrix::from_fn(m, n, |row, col| {
                scale * (2.0 * (col + 1) as f64 * PI * omega[row] / f).cos()
            })
        }
    })
}

/// Uniformly random support of size `s` with pairwise distance `≥ min_sep`.
///
/// Uses the bijection between such supports and plain `s`-subsets of
/// `{0, …, n − (s−1)(min_sep−1) − 1}`: the `k`-th smallest element is shifted
/// by `k·(min_sep − 1)`.
pub fn sample_support<R: Rng + ?Sized>(
    n: usize,
    s: usize,
    min_sep: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if s == 0 || min_sep == 0 {
        return Err(Error::param("s/L", "must be positive"));
    }
    if min_sep > 1 && s * min_sep > n {
        return Err(Error::InfeasibleSupport {
            required: s * min_sep,
            n,
        });
    }
    if s > n {
        return Err(Error::InfeasibleSupport { required: s, n });
    }
    let reduced = n - (s - 1) * (min_sep - 1);
    let mut idx = rand::seq::index::sample(rng, reduced, s).into_vec();
    idx.sort_unstable();
    for (k, i) in idx.iter_mut().enumerate() {
        *i += k * (min_sep - 1);
    }
    Ok(idx)
}

/// Sparse ground truth with standard normal nonzeros.
pub fn gen_signal(n: usize, s: usize, min_sep: usize, seed: u64) -> Result<Vector> {
    gen_signal_with(n, s, min_sep, seed, Amplitude::StandardNormal)
}

pub fn gen_signal_with(
    n: usize,
    s: usize,
    min_sep: usize,
    seed: u64,
    amplitude: Amplitude,
) -> Result<Vector> {
    let mut rng = rng_from_seed(seed);
    let support = sample_support(n, s, min_sep, &mut rng)?;
    let mut x = Vector::zeros(n);
    for i in support {
        x[i] = match amplitude {
            Amplitude::StandardNormal => StandardNormal.sample(&mut rng),
            Amplitude::HighDynamicRange => {
                let mag = 10f64.powf(3.0 * rng.random::<f64>());
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        };
    }
    Ok(x)
}

/// Adds Gaussian noise rescaled so that `10 log₁₀(‖b‖²/‖e‖²) = snr_db` exactly.
///
/// `snr_db = +∞` returns `b_clean` unchanged.
pub fn add_noise(b_clean: &Vector, snr_db: f64, seed: u64) -> Result<Vector> {
    if snr_db == f64::INFINITY {
        return Ok(b_clean.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::param("snr_db", "must be finite or +inf"));
    }
    let norm = b_clean.norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("cannot set an SNR for a zero signal".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut e = Vector::from_fn(b_clean.len(), |_, _| StandardNormal.sample(&mut rng));
    let enorm = e.norm();
    if enorm == 0.0 {
        return Err(Error::Degenerate("sampled an all-zero noise vector".into()));
    }
    e *= norm * 10f64.powf(-snr_db / 20.0) / enorm;
    Ok(b_clean + e)
}

/// Generates the full instance described by `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<ProblemInstance> {
    spec.validate()?;
    let a = gen_matrix(
        spec.kind,
        spec.m,
        spec.n,
        derive_seed(spec.seed, &[MATRIX_STREAM]),
    )?;
    let x = gen_signal_with(
        spec.n,
        spec.sparsity,
        spec.min_separation,
        derive_seed(spec.seed, &[SIGNAL_STREAM]),
        spec.amplitude,
    )?;
    let clean = &a * &x;
    let b = match spec.noise_db {
        Some(db) => add_noise(&clean, db, derive_seed(spec.seed, &[NOISE_STREAM]))?,
        None => clean,
    };
    Ok(ProblemInstance::new(a, b)?
        .with_ground_truth(x)?
        .with_noise_db(spec.noise_db)
        .with_seed(spec.seed))
}

/// [`generate`] restricted to the Gaussian family.
pub fn gen_gaussian(spec: &GeneratorSpec) -> Result<ProblemInstance> {
    match spec.kind {
        MatrixKind::Gaussian { .. } => generate(spec),
        _ => Err(Error::param("kind", "expected a Gaussian generator")),
    }
}

/// [`generate`] restricted to the oversampled DCT family.
pub fn gen_dct(spec: &GeneratorSpec) -> Result<ProblemInstance> {
    match spec.kind {
        MatrixKind::OversampledDct { .. } => generate(spec),
        _ => Err(Error::param("kind", "expected an oversampled DCT generator")),
    }
}

/// Largest normalized inner product between distinct columns.
pub fn mutual_coherence(a: &Matrix) -> f64 {
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut best = 0.0_f64;
    for i in 0..a.ncols() {
        for j in (i + 1)..a.ncols() {
            let denom = norms[i] * norms[j];
            if denom > 0.0 {
                best = best.max(a.column(i).dot(&a.column(j)).abs() / denom);
            }
        }
    }
    best
}
