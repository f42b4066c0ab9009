//! Regression models used to benchmark the estimators.
//!
//! Each model supplies a data generator, the stochastic gradient and Hessian
//! of its loss, the true parameter, and the limiting covariance of averaged
//! SGD. Covariates are `a ~ N(0, I_d)` and the true slope is the arithmetic
//! sequence from 0 to 1 of length `d`.

pub mod normal;
mod truth;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use truth::{
    expectile_sandwich, gaussian_expectile, ground_truth_sigma, logistic_sigma_mc, GroundTruth,
    Provenance, LOGISTIC_MC_DRAWS, LOGISTIC_ORACLE_SEED,
};

/// Normal variate generator used by every sampler.
pub const NORMAL_SAMPLER: &str = "ziggurat (rand_distr::StandardNormal)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `(aᵀx − b)²/2`, `b ~ N(aᵀx*, σ²)`
    Linear,
    /// `log(1 + exp(−b aᵀx))`, `b ∈ {−1, 1}`
    Logistic,
    /// `|τ − 1{b < aᵀx + x₀}| (b − aᵀx − x₀)²` over `(x, x₀)`
    Expectile,
    /// `(ξ − x)²/2`, `ξ = x* + e`
    Mean,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Linear,
        ModelKind::Logistic,
        ModelKind::Expectile,
        ModelKind::Mean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Logistic => "logistic",
            ModelKind::Expectile => "expectile",
            ModelKind::Mean => "mean",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model {s:?}")))
    }
}

/// One draw `ξ = (a, b)`. The mean model leaves `a` empty and stores `ξ` in `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub a: DVector<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    kind: ModelKind,
    d: usize,
    tau: f64,
    noise_variance: f64,
    x_star: DVector<f64>,
}

/// `0, 1/(d−1), …, 1`; a single coordinate is 0.
pub fn arithmetic_truth(d: usize) -> DVector<f64> {
    if d == 1 {
        return DVector::zeros(1);
    }
    DVector::from_fn(d, |j, _| j as f64 / (d - 1) as f64)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᵗ)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl ModelSpec {
    pub fn linear(d: usize) -> Result<Self> {
        Self::regression(ModelKind::Linear, d, 0.5)
    }

    pub fn logistic(d: usize) -> Result<Self> {
        Self::regression(ModelKind::Logistic, d, 0.5)
    }

    pub fn expectile(d: usize, tau: f64) -> Result<Self> {
        Self::regression(ModelKind::Expectile, d, tau)
    }

    /// Scalar mean model with `E e² = noise_variance` and `x* = 0`.
    pub fn mean(noise_variance: f64) -> Result<Self> {
        if !(noise_variance.is_finite() && noise_variance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        Ok(Self {
            kind: ModelKind::Mean,
            d: 1,
            tau: 0.5,
            noise_variance,
            x_star: DVector::zeros(1),
        })
    }

    /// Builds any model kind; `tau` only matters for expectile regression.
    pub fn new(kind: ModelKind, d: usize, tau: f64) -> Result<Self> {
        match kind {
            ModelKind::Mean => Self::mean(1.0),
            _ => Self::regression(kind, d, tau),
        }
    }

    fn regression(kind: ModelKind, d: usize, tau: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must lie in (0, 1), got {tau}"
            )));
        }
        let slope = arithmetic_truth(d);
        let x_star = if kind == ModelKind::Expectile {
            let x0 = gaussian_expectile(tau)?;
            DVector::from_iterator(d + 1, slope.iter().copied().chain(std::iter::once(x0)))
        } else {
            slope
        };
        Ok(Self {
            kind,
            d,
            tau,
            noise_variance: 1.0,
            x_star,
        })
    }

    /// Replaces the noise variance of the linear or mean model.
    pub fn with_noise_variance(mut self, variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be positive, got {variance}"
            )));
        }
        if !matches!(self.kind, ModelKind::Linear | ModelKind::Mean) {
            return Err(Error::InvalidParameter(format!(
                "{} model has fixed noise",
                self.kind
            )));
        }
        self.noise_variance = variance;
        Ok(self)
    }

    /// Replaces the true parameter (mean model only).
    pub fn with_truth(mut self, x_star: DVector<f64>) -> Result<Self> {
        if self.kind != ModelKind::Mean {
            return Err(Error::InvalidParameter(
                "only the mean model accepts a custom truth".into(),
            ));
        }
        check_dim(1, x_star.len())?;
        self.x_star = x_star;
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Covariate dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Parameter dimension (`d + 1` for expectile regression).
    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn has_hessian(&self) -> bool {
        true
    }

    pub fn empty_observation(&self) -> Observation {
        let len = if self.kind == ModelKind::Mean {
            0
        } else {
            self.d
        };
        Observation {
            a: DVector::zeros(len),
            b: 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Observation {
        let mut obs = self.empty_observation();
        self.sample_into(rng, &mut obs);
        obs
    }

    /// Draws a fresh observation into `obs` without allocating.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, obs: &mut Observation) {
        match self.kind {
            ModelKind::Mean => {
                let e: f64 = rng.sample(StandardNormal);
                obs.b = self.x_star[0] + self.noise_variance.sqrt() * e;
            }
            ModelKind::Linear | ModelKind::Expectile | ModelKind::Logistic => {
                for v in obs.a.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let signal = obs.a.dot(&self.x_star.rows(0, self.d));
                obs.b = match self.kind {
                    ModelKind::Logistic => {
                        let u: f64 = rng.random();
                        if u < sigmoid(signal) {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    ModelKind::Linear => {
                        let e: f64 = rng.sample(StandardNormal);
                        signal + self.noise_variance.sqrt() * e
                    }
                    // intercept is the τ-expectile of the noise, not part of the mean
                    _ => signal + rng.sample::<f64, _>(StandardNormal),
                };
            }
        }
    }

    fn slope_dot(&self, x: &DVector<f64>, obs: &Observation) -> f64 {
        obs.a.dot(&x.rows(0, self.d))
    }

    /// Expectile residual `b − aᵀx − x₀` and weight `|τ − 1{residual < 0}|`.
    fn expectile_parts(&self, x: &DVector<f64>, obs: &Observation) -> (f64, f64) {
        let r = obs.b - self.slope_dot(x, obs) - x[self.d];
        let w = if r < 0.0 { 1.0 - self.tau } else { self.tau };
        (r, w)
    }

    pub fn loss(&self, x: &DVector<f64>, obs: &Observation) -> f64 {
        match self.kind {
            ModelKind::Linear => 0.5 * (self.slope_dot(x, obs) - obs.b).powi(2),
            ModelKind::Logistic => softplus(-obs.b * self.slope_dot(x, obs)),
            ModelKind::Expectile => {
                let (r, w) = self.expectile_parts(x, obs);
                w * r * r
            }
            ModelKind::Mean => 0.5 * (obs.b - x[0]).powi(2),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>, obs: &Observation) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        self.gradient_into(x, obs, &mut g);
        g
    }

    /// Writes `∇f(x, ξ)` into `out`.
    pub fn gradient_into(&self, x: &DVector<f64>, obs: &Observation, out: &mut DVector<f64>) {
        match self.kind {
            ModelKind::Mean => out[0] = x[0] - obs.b,
            ModelKind::Linear => {
                let r = self.slope_dot(x, obs) - obs.b;
                out.copy_from(&obs.a);
                *out *= r;
            }
            ModelKind::Logistic => {
                let c = -obs.b * sigmoid(-obs.b * self.slope_dot(x, obs));
                out.copy_from(&obs.a);
                *out *= c;
            }
            ModelKind::Expectile => {
                let (r, w) = self.expectile_parts(x, obs);
                let c = -2.0 * w * r;
                for j in 0..self.d {
                    out[j] = c * obs.a[j];
                }
                out[self.d] = c;
            }
        }
    }

    /// Stochastic Hessian; for expectile regression it is defined off the kink.
    pub fn hessian(&self, x: &DVector<f64>, obs: &Observation) -> DMatrix<f64> {
        match self.kind {
            ModelKind::Mean => DMatrix::from_element(1, 1, 1.0),
            ModelKind::Linear => &obs.a * obs.a.transpose(),
            ModelKind::Logistic => {
                let s = sigmoid(self.slope_dot(x, obs));
                &obs.a * obs.a.transpose() * (s * (1.0 - s))
            }
            ModelKind::Expectile => {
                let (_, w) = self.expectile_parts(x, obs);
                let ext = DVector::from_iterator(
                    self.d + 1,
                    obs.a.iter().copied().chain(std::iter::once(1.0)),
                );
                &ext * ext.transpose() * (2.0 * w)
            }
        }
    }
}
