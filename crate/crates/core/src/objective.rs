//! The scale-invariant `ℓ½/ℓ₂` ratio and the regularized least-squares objective.

use num_traits::Float;

use crate::error::{ensure_finite, ensure_len, Result};
use crate::problem::ProblemInstance;
use crate::Vector;

/// Above this length the numerator uses compensated summation.
const COMPENSATED_SUM_LEN: usize = 1_000_000;

/// `Σ√|xᵢ| / (Σxᵢ²)^{1/4}`, equal to `1` at the zero vector.
pub fn ratio_half_over_two(x: &[f64]) -> Result<f64> {
    ensure_finite(x)?;
    Ok(ratio_unchecked(x))
}

/// Same as [`ratio_half_over_two`] without the finiteness scan; used on
/// solver iterates that are checked elsewhere.
pub(crate) fn ratio_unchecked(x: &[f64]) -> f64 {
    // Rescaling by the largest magnitude keeps Σxᵢ² away from overflow and
    // underflow; the ratio is invariant under it.
    let scale = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 1.0;
    }
    let (num, den) = if x.len() > COMPENSATED_SUM_LEN {
        let num = neumaier_sum(x.iter().map(|v| (v.abs() / scale).sqrt()));
        let den = neumaier_sum(x.iter().map(|v| (v / scale) * (v / scale)));
        (num, den)
    } else {
        x.iter().fold((0.0, 0.0), |(num, den), v| {
            let t = v / scale;
            (num + t.abs().sqrt(), den + t * t)
        })
    };
    num / den.sqrt().sqrt()
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `ℋ(x) = ζ·ratio(x) + ½‖Ax − b‖²`.
pub fn objective_h(instance: &ProblemInstance, zeta: f64, x: &Vector) -> Result<f64> {
    ensure_len("x", instance.n(), x.len())?;
    ensure_finite(x.as_slice())?;
    Ok(zeta * ratio_unchecked(x.as_slice()) + instance.data_fit(x)?)
}

/// `‖x‖₁`.
pub fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// `‖x‖₂`.
pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Number of entries with `|xᵢ| > tol`.
pub fn count_nonzero(x: &[f64], tol: f64) -> usize {
    x.iter().filter(|v| v.abs() > tol).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    #[test]
    fn zero_vector_convention() {
        assert_eq!(ratio_half_over_two(&[0.0; 7]).unwrap(), 1.0);
    }

    #[test]
    fn single_nonzero_is_one() {
        for c in [-3.5, 1e-9, 2.0, 1e12] {
            let mut x = vec![0.0; 5];
            x[3] = c;
            let r = ratio_half_over_two(&x).unwrap();
            assert!((r - 1.0).abs() < 1e-14, "c = {c}: {r}");
        }
    }

    #[test]
    fn all_ones() {
        // Σ√1 = 4, (Σ1)^{1/4} = 4^{1/4}
        let expected = 4.0 / 4.0_f64.powf(0.25);
        let r = ratio_half_over_two(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((r - expected).abs() < 1e-14);
        assert!((r - 2.8284).abs() < 1e-4);
    }

    #[test]
    fn toy_solution_at_sigma_zero() {
        let x = [0.0, 0.0, 0.0, 20.0, 40.0, 16.0, 25.0, 39.0];
        let num = 20f64.sqrt() + 40f64.sqrt() + 4.0 + 5.0 + 39f64.sqrt();
        let den = 4402f64.sqrt().sqrt();
        let r = ratio_half_over_two(&x).unwrap();
        assert!((r - num / den).abs() < 1e-13);
        assert!((r - 3.1971).abs() < 1e-4);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(ratio_half_over_two(&[1.0, f64::NAN]).is_err());
        assert!(ratio_half_over_two(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn compensated_path_agrees() {
        let x: Vec<f64> = (0..1_000_001).map(|i| ((i % 17) as f64) - 8.0).collect();
        // Exact tallies: 58 823 full periods of −8..=8 plus the prefix −8..=1.
        let mut counts = [58_823u64; 17];
        for c in counts.iter_mut().take(10) {
            *c += 1;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (k, c) in counts.iter().enumerate() {
            let v = k as f64 - 8.0;
            num += *c as f64 * v.abs().sqrt();
            den += *c as f64 * v * v;
        }
        let plain = num / den.sqrt().sqrt();
        let r = ratio_half_over_two(&x).unwrap();
        assert!((r - plain).abs() / plain < 1e-12);
    }

    #[test]
    fn objective_examples() {
        let a = crate::Matrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, -1.0]);
        let zero = ProblemInstance::new(a.clone(), Vector::zeros(2)).unwrap();
        assert_eq!(objective_h(&zero, 0.3, &Vector::zeros(3)).unwrap(), 0.3);

        let x = Vector::from_vec(vec![1.0, 2.0, 0.0]);
        let b = &a * &x;
        let exact = ProblemInstance::new(a, b).unwrap();
        let h = objective_h(&exact, 0.7, &x).unwrap();
        assert!((h - 0.7 * ratio_half_over_two(x.as_slice()).unwrap()).abs() < 1e-15);
        assert!(objective_h(&exact, 0.7, &Vector::zeros(2)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn ratio_bounds(x in prop::collection::vec(-1e3..1e3f64, 1..64)) {
            prop_assume!(x.iter().any(|v| *v != 0.0));
            let n = x.len() as f64;
            let r = ratio_half_over_two(&x).unwrap();
            prop_assert!(r >= 1.0 - 1e-12);
            prop_assert!(r <= n.powf(0.75) * (1.0 + 1e-12));
        }

        #[test]
        fn scale_invariance(
            x in prop::collection::vec(-1e3..1e3f64, 1..64),
            c in prop_oneof![-1e6..-1e-6f64, 1e-6..1e6f64],
        ) {
            let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
            let r0 = ratio_half_over_two(&x).unwrap();
            let r1 = ratio_half_over_two(&scaled).unwrap();
            prop_assert!((r0 - r1).abs() <= 1e-12 * r0);
        }

        #[test]
        fn permutation_invariance(
            x in prop::collection::vec(-1e3..1e3f64, 1..32),
            seed in any::<u64>(),
        ) {
            let mut perm = x.clone();
            // Fisher-Yates driven by a simple LCG keeps the test self-contained.
            let mut s = seed;
            for i in (1..perm.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                perm.swap(i, j);
            }
            let r0 = ratio_half_over_two(&x).unwrap();
            let r1 = ratio_half_over_two(&perm).unwrap();
            prop_assert!((r0 - r1).abs() <= 1e-12 * r0);
        }
    }
}
