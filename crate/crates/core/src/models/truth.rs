//! Limiting covariances `Σ = A⁻¹ S A⁻¹` of averaged SGD for each model.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::normal::{cdf, pdf};
use super::{sigmoid, ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, OuterSum};

/// Monte-Carlo draws for the logistic ground truth.
pub const LOGISTIC_MC_DRAWS: usize = 1_000_000;
/// Fixed seed of the logistic ground-truth oracle.
pub const LOGISTIC_ORACLE_SEED: u64 = 0x05EE_D0FA_11CE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub sigma: DMatrix<f64>,
    pub provenance: Provenance,
}

/// τ-expectile `x₀` of `N(0, 1)`: the root of
/// `τ E(ε − x₀)⁺ = (1 − τ) E(x₀ − ε)⁺`.
pub fn gaussian_expectile(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    // E(ε − x)⁺ = φ(x) − xΦ(−x),  E(x − ε)⁺ = φ(x) + xΦ(x); h decreases in x
    let h = |x: f64| tau * (pdf(x) - x * cdf(-x)) - (1.0 - tau) * (pdf(x) + x * cdf(x));
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = h(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Scalar `(A, S)` of the expectile sandwich at `(x*, x₀^τ)`.
///
/// `A = 2[(1 − τ) + (2τ − 1)Φ(−x₀)]` and `S = 4(τ²α₊ + (1 − τ)²α₋)` with
/// `α₊ = E[(ε − x₀)² 1{ε > x₀}] = Φ(−x₀)(1 + x₀²) − x₀φ(x₀)` and
/// `α₋ = E[(ε − x₀)² 1{ε < x₀}] = Φ(x₀)(1 + x₀²) + x₀φ(x₀)`.
pub fn expectile_sandwich(tau: f64) -> Result<(f64, f64)> {
    let x0 = gaussian_expectile(tau)?;
    let a = 2.0 * ((1.0 - tau) + (2.0 * tau - 1.0) * cdf(-x0));
    let alpha_plus = cdf(-x0) * (1.0 + x0 * x0) - x0 * pdf(x0);
    let alpha_minus = cdf(x0) * (1.0 + x0 * x0) + x0 * pdf(x0);
    let s = 4.0 * (tau * tau * alpha_plus + (1.0 - tau).powi(2) * alpha_minus);
    Ok((a, s))
}

/// `Σ = Â⁻¹` with `Â = M⁻¹ Σₘ σ'(aₘᵀx*) aₘaₘᵀ`; the logistic model is well
/// specified so `A = S`.
pub fn logistic_sigma_mc(x_star: &DVector<f64>, draws: usize, seed: u64) -> Result<DMatrix<f64>> {
    if draws == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    let d = x_star.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gram = OuterSum::gram(d);
    let mut a = DVector::zeros(d);
    for _ in 0..draws {
        for v in a.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let s = sigmoid(a.dot(x_star));
        a *= (s * (1.0 - s)).sqrt();
        gram.push(&a, None);
    }
    let a_hat = symmetrize(&(gram.total() / draws as f64));
    let inv = a_hat
        .cholesky()
        .ok_or(Error::SingularHessian {
            condition: f64::INFINITY,
        })?
        .inverse();
    Ok(symmetrize(&inv))
}

pub fn ground_truth_sigma(model: &ModelSpec) -> Result<GroundTruth> {
    let p = model.dim();
    let analytic = |sigma| GroundTruth {
        sigma,
        provenance: Provenance::Analytic,
    };
    Ok(match model.kind() {
        ModelKind::Linear => analytic(DMatrix::identity(p, p) * model.noise_variance()),
        ModelKind::Mean => analytic(DMatrix::from_element(1, 1, model.noise_variance())),
        ModelKind::Expectile => {
            let (a, s) = expectile_sandwich(model.tau())?;
            analytic(DMatrix::identity(p, p) * (s / (a * a)))
        }
        ModelKind::Logistic => GroundTruth {
            sigma: logistic_sigma_mc(model.x_star(), LOGISTIC_MC_DRAWS, LOGISTIC_ORACLE_SEED)?,
            provenance: Provenance::MonteCarlo,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expectile_median_is_zero() {
        assert_eq!(gaussian_expectile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn expectile_reference_values() {
        // 40-digit root of the first-order condition
        let x = gaussian_expectile(0.75).unwrap();
        assert!((x - 0.436_326_563_793_651_6).abs() < 1e-12, "{x}");
        let x = gaussian_expectile(0.1).unwrap();
        assert!((x + 0.861_592_112_415_828_8).abs() < 1e-12, "{x}");
    }

    #[test]
    fn expectile_antisymmetry() {
        for tau in [0.01, 0.1, 0.25, 0.4, 0.6, 0.9] {
            let a = gaussian_expectile(tau).unwrap();
            let b = gaussian_expectile(1.0 - tau).unwrap();
            assert!((a + b).abs() < 1e-12, "{tau}");
        }
    }

    #[test]
    fn expectile_rejects_bad_tau() {
        assert!(gaussian_expectile(0.0).is_err());
        assert!(gaussian_expectile(1.0).is_err());
    }

    #[test]
    fn expectile_sandwich_values() {
        let (a, s) = expectile_sandwich(0.5).unwrap();
        assert!((a - 1.0).abs() < 1e-15);
        assert!((s - 1.0).abs() < 1e-15);
        // A, S at τ = 0.25 from a 40-digit evaluation
        let (a, s) = expectile_sandwich(0.25).unwrap();
        assert!((a - 0.831_299_905_706_456_2).abs() < 1e-12);
        assert!((s - 0.769_814_158_708_930_8).abs() < 1e-12);
    }

    #[test]
    fn linear_truth_is_identity() {
        let gt = ground_truth_sigma(&ModelSpec::linear(5).unwrap()).unwrap();
        assert_eq!(gt.sigma, DMatrix::identity(5, 5));
        assert_eq!(gt.provenance, Provenance::Analytic);
        let gt = ground_truth_sigma(&ModelSpec::mean(1.0).unwrap()).unwrap();
        assert_eq!(gt.sigma[(0, 0)], 1.0);
    }

    #[test]
    fn logistic_zero_truth_is_four_identity() {
        // σ'(0) = 1/4 so A = I/4 and Σ = 4I
        let sigma = logistic_sigma_mc(&DVector::zeros(2), 200_000, 1).unwrap();
        assert!((sigma - DMatrix::identity(2, 2) * 4.0).norm() < 0.1);
    }
}
