//! Averaged SGD with polynomially decaying step sizes.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Learning-rate rule `ηᵢ = η · (i + k)^(−α)` with `η > 0`, `α ∈ (0.5, 1)`
/// and index offset `k` (zero unless the schedule resumes after `k` steps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    eta: f64,
    alpha: f64,
    #[serde(default)]
    offset: u64,
}

impl StepSchedule {
    pub fn new(eta: f64, alpha: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must be positive, got {eta}"
            )));
        }
        if !(alpha > 0.5 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0.5, 1), got {alpha}"
            )));
        }
        Ok(Self {
            eta,
            alpha,
            offset: 0,
        })
    }

    /// The same schedule continued after `offset` earlier steps.
    pub fn with_offset(self, offset: u64) -> Self {
        Self { offset, ..self }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Step size at iteration `i ≥ 1`.
    pub fn step_size(&self, i: u64) -> Result<f64> {
        if i == 0 {
            return Err(Error::ZeroIteration);
        }
        Ok(self.eta * ((i + self.offset) as f64).powf(-self.alpha))
    }
}

/// Current iterate `xᵢ`, its running average `x̄ᵢ = i⁻¹ Σₖ xₖ`, and `i`.
///
/// The average starts at `x₁`; the initial point `x₀` is never averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    i: u64,
    x: DVector<f64>,
    x_bar: DVector<f64>,
}

impl SgdState {
    pub fn new(x0: DVector<f64>) -> Self {
        let p = x0.len();
        Self {
            i: 0,
            x: x0,
            x_bar: DVector::zeros(p),
        }
    }

    pub fn zeros(p: usize) -> Self {
        Self::new(DVector::zeros(p))
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn iteration(&self) -> u64 {
        self.i
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn x_bar(&self) -> &DVector<f64> {
        &self.x_bar
    }

    /// One SGD update `xᵢ = xᵢ₋₁ − ηᵢ g` followed by the running-average update.
    pub fn step(&mut self, schedule: &StepSchedule, gradient: &DVector<f64>) -> Result<()> {
        check_dim(self.dim(), gradient.len())?;
        let i = self.i + 1;
        let eta = schedule.step_size(i)?;
        self.x.axpy(-eta, gradient, 1.0);
        self.advance_average(i);
        Ok(())
    }

    /// Records an externally produced iterate as `xᵢ` and updates the average.
    pub fn push_iterate(&mut self, x: &DVector<f64>) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        self.x.copy_from(x);
        self.advance_average(self.i + 1);
        Ok(())
    }

    fn advance_average(&mut self, i: u64) {
        let w = ((i - 1) as f64) / (i as f64);
        // x̄ ← ((i − 1) x̄ + x) / i
        for (avg, &xi) in self.x_bar.iter_mut().zip(self.x.iter()) {
            *avg = w * *avg + xi / i as f64;
        }
        self.i = i;
    }
}
