//! Convergence-rate study of the uncentered estimator on the scalar mean model.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::experiment::run_rng;
use crate::sgd::{SgdState, StepSchedule};

/// OLS slope of `log(value)` (or `log(value / ln n)`) against `log n`.
pub fn fit_log_slope(points: &[(f64, f64)], correct_log: bool) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(
            "slope fit needs at least 3 points".into(),
        ));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidParameter(
            "n must be strictly increasing".into(),
        ));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(n, value) in points {
        if !(value > 0.0) || !(n > 1.0 || !correct_log) || !(n > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cannot take logs at n={n}, value={value}"
            )));
        }
        let v = if correct_log { value / n.ln() } else { value };
        xs.push(n.ln());
        ys.push(v.ln());
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: u64,
    pub mse: f64,
    /// Standard error of the MSE across seeds.
    pub mse_se: f64,
    pub mean_estimate: f64,
}

/// Mean model `ξ = e`, `E e² = σ`, with batch sizes `ℓᵢ = ⌈c · i^α ln i⌉`
/// (clamped to `[1, i]`) and the uncentered estimator
/// `σ̂ₙ = n⁻¹ Σ [2xᵢ Σ_{k∈Bᵢ} xₖ − xᵢ²]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRateStudy {
    pub eta: f64,
    pub alpha: f64,
    pub noise_variance: f64,
    pub batch_factor: f64,
    pub sizes: Vec<u64>,
    pub seeds: usize,
    pub master_seed: u64,
}

impl Default for MeanRateStudy {
    fn default() -> Self {
        Self {
            eta: 0.5,
            alpha: 0.505,
            noise_variance: 1.0,
            batch_factor: 2.0,
            sizes: (12..=17).map(|k| 1u64 << k).collect(),
            seeds: 200,
            master_seed: 0,
        }
    }
}

impl MeanRateStudy {
    pub fn batch_len(&self, i: u64) -> u64 {
        if i <= 1 {
            return 1;
        }
        let x = i as f64;
        let raw = (self.batch_factor * x.powf(self.alpha) * x.ln()).ceil() as u64;
        raw.clamp(1, i)
    }

    /// `σ̂ₙ` at every requested size along one SGD path.
    pub fn estimates_for_seed(&self, seed_index: u64) -> Result<Vec<f64>> {
        let schedule = StepSchedule::new(self.eta, self.alpha)?;
        let n_max = *self
            .sizes
            .last()
            .ok_or_else(|| Error::InvalidParameter("no sizes".into()))?;
        let mut rng = run_rng(self.master_seed, seed_index);
        let sd = self.noise_variance.sqrt();
        let mut state = SgdState::zeros(1);
        let mut grad = nalgebra::DVector::zeros(1);
        let mut prefix = Vec::with_capacity(n_max as usize + 1);
        prefix.push(0.0f64);
        let mut total = 0.0;
        let mut out = Vec::with_capacity(self.sizes.len());
        let mut next = self.sizes.iter().peekable();
        for i in 1..=n_max {
            let xi: f64 = sd * rng.sample::<f64, _>(StandardNormal);
            grad[0] = state.x()[0] - xi;
            state.step(&schedule, &grad)?;
            let x = state.x()[0];
            prefix.push(prefix[i as usize - 1] + x);
            let len = self.batch_len(i);
            let window = prefix[i as usize] - prefix[(i - len) as usize];
            total += 2.0 * x * window - x * x;
            if next.peek() == Some(&&i) {
                next.next();
                out.push(total / i as f64);
            }
        }
        Ok(out)
    }

    pub fn run(&self, threads: Option<usize>) -> Result<Vec<RatePoint>> {
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) || self.sizes.first() == Some(&0) {
            return Err(Error::InvalidParameter(
                "sizes must be positive and increasing".into(),
            ));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidParameter("need at least one seed".into()));
        }
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            builder = builder.num_threads(t.max(1));
        }
        let pool = builder
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        let per_seed: Vec<Vec<f64>> = pool.install(|| {
            (0..self.seeds as u64)
                .into_par_iter()
                .map(|s| self.estimates_for_seed(s))
                .collect::<Result<_>>()
        })?;
        let k = self.seeds as f64;
        Ok(self
            .sizes
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                let sq: Vec<f64> = per_seed
                    .iter()
                    .map(|v| (v[j] - self.noise_variance).powi(2))
                    .collect();
                let mse = sq.iter().sum::<f64>() / k;
                let var = sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
                RatePoint {
                    n,
                    mse,
                    mse_se: (var / k).sqrt(),
                    mean_estimate: per_seed.iter().map(|v| v[j]).sum::<f64>() / k,
                }
            })
            .collect())
    }
}
