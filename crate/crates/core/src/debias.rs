//! De-biased online covariance estimator.
//!
//! Expanding the centered estimator
//!
//! ```text
//! n Σ̂ₙ = Σᵢ (xᵢ − x̄)(Sᵢ − ℓᵢx̄)ᵀ + (Sᵢ − ℓᵢx̄)(xᵢ − x̄)ᵀ − (xᵢ − x̄)(xᵢ − x̄)ᵀ
//! ```
//!
//! with `Sᵢ` the window sum of length `ℓᵢ` gives
//!
//! ```text
//! n Σ̂ₙ = P + Pᵀ − W x̄ᵀ − x̄ Wᵀ + q x̄x̄ᵀ − Q
//! P = Σ xᵢSᵢᵀ,  W = Σ (ℓᵢxᵢ + Sᵢ),  Q = Σ xᵢxᵢᵀ,  q = Σ (2ℓᵢ + 1)
//! ```
//!
//! so the four accumulators are all that is kept between steps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::batch::BatchSnapshot;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{shift_outer, symmetrize, OuterSum};

/// Which length multiplies `x̄` in the centered window term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthConvention {
    /// Number of iterates actually summed in the window (`|Bᵢ|`).
    #[default]
    Batch,
    /// Current-block length `i − a + 1` while the sum still spans two blocks.
    /// Not translation invariant; kept for comparison only.
    CurrentBlock,
}

impl LengthConvention {
    pub fn weight(self, snapshot: &BatchSnapshot) -> u64 {
        match self {
            LengthConvention::Batch => snapshot.batch_len,
            LengthConvention::CurrentBlock => snapshot.block_len,
        }
    }
}

/// A covariance estimate after `n` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub sigma_hat: DMatrix<f64>,
    pub n: u64,
}

impl CovEstimate {
    pub fn dim(&self) -> usize {
        self.sigma_hat.nrows()
    }

    /// Diagonal entries, with the number of negative ones replaced by zero.
    pub fn floored_diagonal(&self) -> (DVector<f64>, usize) {
        let mut floored = 0;
        let diag = self.sigma_hat.diagonal().map(|v| {
            if v < 0.0 {
                floored += 1;
                0.0
            } else {
                v
            }
        });
        (diag, floored)
    }
}

/// Streaming state of the de-biased estimator.
///
/// The sums are kept relative to a reference point `c` that is moved to the
/// newest iterate whenever the step count reaches a power of two; the shift
/// is applied to the sums exactly. This leaves the estimate unchanged and
/// keeps the terms that cancel in `P + Pᵀ − … − Q` at the scale of the
/// fluctuations instead of `ℓ‖x‖²`.
#[derive(Debug, Clone)]
pub struct DebiasAccumulator {
    reference: DVector<f64>,
    // Σ x'S'ᵀ and Σ x'x'ᵀ with x' = x − c, S' = S − ℓc
    cross: OuterSum,
    gram: OuterSum,
    len_x: DVector<f64>,
    sum_s: DVector<f64>,
    sum_x: DVector<f64>,
    len_sum: u64,
    n: u64,
}

impl DebiasAccumulator {
    pub fn new(p: usize) -> Self {
        Self {
            reference: DVector::zeros(p),
            cross: OuterSum::general(p),
            gram: OuterSum::gram(p),
            len_x: DVector::zeros(p),
            sum_s: DVector::zeros(p),
            sum_x: DVector::zeros(p),
            len_sum: 0,
            n: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.reference.len()
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// `P = Σ xᵢSᵢᵀ`
    pub fn p(&self) -> DMatrix<f64> {
        let mut p = self.cross.total();
        let c = -&self.reference;
        shift_outer(&mut p, &self.len_x, &self.sum_s, &c, self.len_sum as f64);
        p
    }

    /// `Q = Σ xᵢxᵢᵀ`
    pub fn q_matrix(&self) -> DMatrix<f64> {
        let mut q = self.gram.total();
        let c = -&self.reference;
        shift_outer(&mut q, &self.sum_x, &self.sum_x, &c, self.n as f64);
        q
    }

    /// `W = Σ (ℓᵢxᵢ + Sᵢ)`
    pub fn w(&self) -> DVector<f64> {
        &self.len_x + &self.sum_s + &self.reference * (2 * self.len_sum) as f64
    }

    /// `q = Σ (2ℓᵢ + 1)`
    pub fn q(&self) -> u64 {
        2 * self.len_sum + self.n
    }

    fn rebase(&mut self, to: &DVector<f64>) {
        let delta = to - &self.reference;
        let l = self.len_sum as f64;
        let n = self.n as f64;
        let (len_x, sum_s, sum_x) = (&self.len_x, &self.sum_s, &self.sum_x);
        self.cross
            .update_total(|m| shift_outer(m, len_x, sum_s, &delta, l));
        self.gram
            .update_total(|m| shift_outer(m, sum_x, sum_x, &delta, n));
        self.len_x.axpy(-l, &delta, 1.0);
        self.sum_s.axpy(-l, &delta, 1.0);
        self.sum_x.axpy(-n, &delta, 1.0);
        self.reference.copy_from(to);
    }

    pub fn accumulate(
        &mut self,
        x: &DVector<f64>,
        batch_sum: &DVector<f64>,
        len: u64,
    ) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), batch_sum.len())?;
        if (self.n + 1).is_power_of_two() {
            self.rebase(x);
        }
        let xr = x - &self.reference;
        let mut sr = batch_sum.clone();
        sr.axpy(-(len as f64), &self.reference, 1.0);
        self.cross.push(&xr, Some(&sr));
        self.gram.push(&xr, None);
        self.len_x.axpy(len as f64, &xr, 1.0);
        self.sum_s += &sr;
        self.sum_x += &xr;
        self.len_sum += len;
        self.n += 1;
        Ok(())
    }

    pub fn accumulate_snapshot(
        &mut self,
        x: &DVector<f64>,
        snapshot: &BatchSnapshot,
        convention: LengthConvention,
    ) -> Result<()> {
        self.accumulate(x, &snapshot.batch_sum, convention.weight(snapshot))
    }

    /// `Σ̂ = (P + Pᵀ − W x̄ᵀ − x̄ Wᵀ + q x̄x̄ᵀ − Q) / n`.
    pub fn finalize(&self, x_bar: &DVector<f64>) -> Result<CovEstimate> {
        if self.n == 0 {
            return Err(Error::Empty);
        }
        check_dim(self.dim(), x_bar.len())?;
        let p = self.cross.total();
        let q_mat = self.gram.total();
        let w = &self.len_x + &self.sum_s;
        let xb = x_bar - &self.reference;
        let q = self.q() as f64;
        let dim = self.dim();
        // the shifted form equals the original one up to D cᵀ + c Dᵀ, D = Σx − n x̄
        let d = &self.sum_x - &xb * self.n as f64;
        let c = &self.reference;
        let v = DMatrix::from_fn(dim, dim, |j, k| {
            p[(j, k)] + p[(k, j)] - w[j] * xb[k] - xb[j] * w[k] + q * xb[j] * xb[k]
                - q_mat[(j, k)]
                - d[j] * c[k]
                - c[j] * d[k]
        });
        Ok(CovEstimate {
            sigma_hat: symmetrize(&v) / self.n as f64,
            n: self.n,
        })
    }
}

/// Window sums `Σ_{k=i−ℓᵢ+1}^{i} xₖ` recomputed from the full history.
pub fn window_sums(history: &[DVector<f64>], lengths: &[u64]) -> Result<Vec<DVector<f64>>> {
    if history.len() != lengths.len() {
        return Err(Error::InconsistentHistory(format!(
            "{} iterates but {} lengths",
            history.len(),
            lengths.len()
        )));
    }
    history
        .iter()
        .enumerate()
        .map(|(idx, x)| {
            let len = lengths[idx] as usize;
            if len == 0 || len > idx + 1 {
                return Err(Error::InconsistentHistory(format!(
                    "length {len} at step {}",
                    idx + 1
                )));
            }
            Ok(history[idx + 1 - len..=idx]
                .iter()
                .fold(DVector::zeros(x.len()), |acc, v| acc + v))
        })
        .collect()
}

/// Two-pass evaluation of the centered estimator from stored history.
pub fn direct_estimate(
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
    let mut mean = DVector::zeros(p);
    for x in history {
        check_dim(p, x.len())?;
        mean += x;
    }
    mean /= n as f64;

    let mut total = DMatrix::zeros(p, p);
    for ((x, &len), s) in history.iter().zip(lengths).zip(batch_sums) {
        check_dim(p, s.len())?;
        let dx = x - &mean;
        let ds = s - &mean * len as f64;
        total += &dx * ds.transpose() + &ds * dx.transpose() - &dx * dx.transpose();
    }
    Ok(CovEstimate {
        sigma_hat: symmetrize(&total) / n as f64,
        n: n as u64,
    })
}

/// Uncentered scalar estimator `n⁻¹ Σ [2xᵢ Σ_{k∈Bᵢ} xₖ − xᵢ²]` for a stream
/// whose mean is known to be zero.
pub fn oracle_mean_estimator(history: &[f64], lengths: &[u64]) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::Empty);
    }
    if history.len() != lengths.len() {
        return Err(Error::InconsistentHistory(format!(
            "{} iterates but {} lengths",
            history.len(),
            lengths.len()
        )));
    }
    let mut prefix = Vec::with_capacity(history.len() + 1);
    prefix.push(0.0);
    for &x in history {
        prefix.push(prefix.last().unwrap() + x);
    }
    let mut total = 0.0;
    for (idx, (&x, &len)) in history.iter().zip(lengths).enumerate() {
        let len = len as usize;
        if len == 0 || len > idx + 1 {
            return Err(Error::InconsistentHistory(format!(
                "length {len} at step {}",
                idx + 1
            )));
        }
        let window = prefix[idx + 1] - prefix[idx + 1 - len];
        total += 2.0 * x * window - x * x;
    }
    Ok(total / history.len() as f64)
}
