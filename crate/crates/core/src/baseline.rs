//! Comparison estimators: online batch-means and the plug-in sandwich.

use nalgebra::{DMatrix, DVector};

use crate::debias::CovEstimate;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{shift_outer, symmetrize, OuterSum};

/// Largest accepted condition number of the averaged Hessian.
pub const MAX_CONDITION: f64 = 1e12;

/// Online batch-means estimator
///
/// ```text
/// Σ̂_bm = Σᵢ (Sᵢ − ℓᵢx̄)(Sᵢ − ℓᵢx̄)ᵀ / Σᵢ ℓᵢ
/// ```
///
/// expanded so that centering at the final `x̄` needs no history. Window sums
/// are stored relative to a reference point that moves to the latest batch
/// mean at power-of-two step counts, as in the de-biased accumulator.
#[derive(Debug, Clone)]
pub struct BatchMeansAccumulator {
    reference: DVector<f64>,
    // Σ S'S'ᵀ and Σ ℓS' with S' = S − ℓc
    outer: OuterSum,
    weighted_sum: DVector<f64>,
    len_sum: u64,
    len_sq_sum: u128,
    n: u64,
}

impl BatchMeansAccumulator {
    pub fn new(p: usize) -> Self {
        Self {
            reference: DVector::zeros(p),
            outer: OuterSum::gram(p),
            weighted_sum: DVector::zeros(p),
            len_sum: 0,
            len_sq_sum: 0,
            n: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weighted_sum.len()
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn weight_sum(&self) -> u64 {
        self.len_sum
    }

    fn rebase(&mut self, to: &DVector<f64>) {
        let delta = to - &self.reference;
        let l2 = self.len_sq_sum as f64;
        let b = &self.weighted_sum;
        self.outer
            .update_total(|m| shift_outer(m, b, b, &delta, l2));
        self.weighted_sum.axpy(-l2, &delta, 1.0);
        self.reference.copy_from(to);
    }

    pub fn accumulate(&mut self, batch_sum: &DVector<f64>, len: u64) -> Result<()> {
        check_dim(self.dim(), batch_sum.len())?;
        if len == 0 {
            return Err(Error::InvalidParameter(
                "batch length must be positive".into(),
            ));
        }
        if (self.n + 1).is_power_of_two() {
            self.rebase(&(batch_sum / len as f64));
        }
        let mut sr = batch_sum.clone();
        sr.axpy(-(len as f64), &self.reference, 1.0);
        self.outer.push(&sr, None);
        self.weighted_sum.axpy(len as f64, &sr, 1.0);
        self.len_sum += len;
        self.len_sq_sum += (len as u128) * (len as u128);
        self.n += 1;
        Ok(())
    }

    pub fn finalize(&self, x_bar: &DVector<f64>) -> Result<CovEstimate> {
        if self.n == 0 {
            return Err(Error::Empty);
        }
        check_dim(self.dim(), x_bar.len())?;
        let outer = self.outer.total();
        let b = &self.weighted_sum;
        let xb = x_bar - &self.reference;
        let l2 = self.len_sq_sum as f64;
        let p = self.dim();
        let num = DMatrix::from_fn(p, p, |j, k| {
            outer[(j, k)] - b[j] * xb[k] - xb[j] * b[k] + l2 * xb[j] * xb[k]
        });
        Ok(CovEstimate {
            sigma_hat: symmetrize(&num) / self.len_sum as f64,
            n: self.n,
        })
    }
}

/// Two-pass batch-means evaluation from stored history.
pub fn direct_batch_means(
    history: &[DVector<f64>],
    lengths: &[u64],
    batch_sums: &[DVector<f64>],
) -> Result<CovEstimate> {
    let n = history.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    if lengths.len() != n || batch_sums.len() != n {
        return Err(Error::InconsistentHistory(format!(
            "{n} iterates, {} lengths, {} batch sums",
            lengths.len(),
            batch_sums.len()
        )));
    }
    let p = history[0].len();
    let mean = history.iter().fold(DVector::zeros(p), |a, x| a + x) / n as f64;
    let mut num = DMatrix::zeros(p, p);
    let mut weight = 0u64;
    for (s, &len) in batch_sums.iter().zip(lengths) {
        let c = s - &mean * len as f64;
        num += &c * c.transpose();
        weight += len;
    }
    Ok(CovEstimate {
        sigma_hat: symmetrize(&num) / weight as f64,
        n: n as u64,
    })
}

/// Plug-in sandwich estimator `Â⁻¹ Ŝ Â⁻¹` from running means of stochastic
/// Hessians and gradient outer products evaluated at `xᵢ₋₁`.
#[derive(Debug, Clone)]
pub struct PluginAccumulator {
    a_hat: DMatrix<f64>,
    s_hat: DMatrix<f64>,
    n: u64,
}

impl PluginAccumulator {
    pub fn new(p: usize) -> Self {
        Self {
            a_hat: DMatrix::zeros(p, p),
            s_hat: DMatrix::zeros(p, p),
            n: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn a_hat(&self) -> &DMatrix<f64> {
        &self.a_hat
    }

    pub fn s_hat(&self) -> &DMatrix<f64> {
        &self.s_hat
    }

    pub fn accumulate(&mut self, gradient: &DVector<f64>, hessian: &DMatrix<f64>) -> Result<()> {
        let p = self.a_hat.nrows();
        check_dim(p, gradient.len())?;
        check_dim(p, hessian.nrows())?;
        check_dim(p, hessian.ncols())?;
        self.n += 1;
        let w = 1.0 / self.n as f64;
        // running means: m ← m + (v − m)/n
        self.a_hat.zip_apply(hessian, |m, h| *m += w * (h - *m));
        for k in 0..p {
            for j in 0..p {
                let g = gradient[j] * gradient[k];
                let m = &mut self.s_hat[(j, k)];
                *m += w * (g - *m);
            }
        }
        Ok(())
    }

    pub fn finalize(&self) -> Result<CovEstimate> {
        if self.n == 0 {
            return Err(Error::Empty);
        }
        let a = symmetrize(&self.a_hat);
        let sv = a.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let condition = if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::SingularHessian { condition });
        }
        let lu = a.lu();
        let left = lu
            .solve(&self.s_hat)
            .ok_or(Error::SingularHessian { condition })?;
        // Â symmetric: (Â⁻¹ Ŝ) Â⁻¹ = (Â⁻¹ (Â⁻¹ Ŝ)ᵀ)ᵀ
        let both = lu
            .solve(&left.transpose())
            .ok_or(Error::SingularHessian { condition })?;
        Ok(CovEstimate {
            sigma_hat: symmetrize(&both.transpose()),
            n: self.n,
        })
    }
}
