use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::models::normal;

/// Per-coordinate intervals `x̄ⱼ ± z √(max(Σ̂ⱼⱼ, 0)/n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    pub bounds: Vec<(f64, f64)>,
    /// Diagonal entries that were negative and floored at zero.
    pub floored: usize,
}

impl IntervalSet {
    pub fn contains(&self, x_star: &DVector<f64>) -> Vec<bool> {
        self.bounds
            .iter()
            .zip(x_star.iter())
            .map(|(&(lo, hi), &x)| lo <= x && x <= hi)
            .collect()
    }
}

/// `(1 − q)` confidence intervals for each coordinate of the averaged iterate.
pub fn confidence_interval(
    x_bar: &DVector<f64>,
    sigma_hat: &DMatrix<f64>,
    n: u64,
    q: f64,
) -> Result<IntervalSet> {
    check_dim(x_bar.len(), sigma_hat.nrows())?;
    if n == 0 {
        return Err(Error::InvalidParameter("interval needs n ≥ 1".into()));
    }
    let z = normal::quantile(1.0 - q / 2.0)?;
    let mut floored = 0;
    let bounds = x_bar
        .iter()
        .enumerate()
        .map(|(j, &center)| {
            let var = sigma_hat[(j, j)];
            if var < 0.0 {
                floored += 1;
            }
            let half = z * (var.max(0.0) / n as f64).sqrt();
            (center - half, center + half)
        })
        .collect();
    Ok(IntervalSet { bounds, floored })
}

/// Empirical coverage with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub rate: f64,
    pub std_err: f64,
    pub trials: usize,
}

impl Coverage {
    pub fn from_hits<'a>(hits: impl IntoIterator<Item = &'a [bool]>) -> Coverage {
        let (mut covered, mut trials) = (0usize, 0usize);
        for set in hits {
            covered += set.iter().filter(|&&h| h).count();
            trials += set.len();
        }
        if trials == 0 {
            return Coverage {
                rate: f64::NAN,
                std_err: f64::NAN,
                trials,
            };
        }
        let rate = covered as f64 / trials as f64;
        Coverage {
            rate,
            std_err: (rate * (1.0 - rate) / trials as f64).sqrt(),
            trials,
        }
    }
}

/// Fraction of (run, coordinate) pairs whose interval contains `x*ⱼ`.
pub fn coverage(intervals: &[IntervalSet], x_star: &DVector<f64>) -> f64 {
    let hits: Vec<Vec<bool>> = intervals.iter().map(|s| s.contains(x_star)).collect();
    Coverage::from_hits(hits.iter().map(Vec::as_slice)).rate
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_variance_interval() {
        let set =
            confidence_interval(&DVector::zeros(1), &DMatrix::identity(1, 1), 100, 0.05).unwrap();
        let (lo, hi) = set.bounds[0];
        // z₀.₉₇₅ = 1.959963984540054
        assert!((hi - 0.195_996_398_454_005_4).abs() < 1e-12);
        assert_eq!(lo, -hi);
    }

    #[test]
    fn zero_and_negative_variance() {
        let x = DVector::from_vec(vec![0.3, -1.0]);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, -2.0]));
        let set = confidence_interval(&x, &s, 10, 0.05).unwrap();
        assert_eq!(set.bounds, vec![(0.3, 0.3), (-1.0, -1.0)]);
        assert_eq!(set.floored, 1);
    }

    #[test]
    fn width_scales_with_root_variance_over_n() {
        let x = DVector::zeros(1);
        let w = |var: f64, n: u64| {
            let s = confidence_interval(&x, &DMatrix::from_element(1, 1, var), n, 0.1).unwrap();
            s.bounds[0].1 - s.bounds[0].0
        };
        assert!((w(4.0, 100) / w(1.0, 100) - 2.0).abs() < 1e-12);
        assert!((w(1.0, 100) / w(1.0, 400) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_extremes() {
        let truth = DVector::from_vec(vec![1.0, 2.0]);
        let wide = confidence_interval(
            &DVector::zeros(2),
            &(DMatrix::identity(2, 2) * 1e30),
            10,
            0.05,
        )
        .unwrap();
        assert_eq!(coverage(&[wide.clone(), wide], &truth), 1.0);
        let point =
            confidence_interval(&DVector::zeros(2), &DMatrix::zeros(2, 2), 10, 0.05).unwrap();
        assert_eq!(coverage(&[point], &truth), 0.0);
    }

    #[test]
    fn coverage_standard_error() {
        let hits = [vec![true, false], vec![true, true]];
        let c = Coverage::from_hits(hits.iter().map(Vec::as_slice));
        assert_eq!(c.rate, 0.75);
        assert!((c.std_err - (0.75f64 * 0.25 / 4.0).sqrt()).abs() < 1e-15);
        assert!(Coverage::from_hits(std::iter::empty()).rate.is_nan());
    }
}
