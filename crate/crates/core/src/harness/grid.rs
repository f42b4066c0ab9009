//! Standard experiment grids with reference results for comparison.

use crate::harness::experiment::{EstimatorKind, ExperimentConfig};
use crate::models::ModelKind;

/// SGD steps discarded before every grid run. At d ≥ 20 the first steps
/// with `η = 0.5` are expansive (`η‖a‖² ≫ 2`) and the resulting transient
/// dominates every uncentered covariance estimate for the listed `n`.
pub const GRID_BURN_IN: u64 = 5_000;

/// Mean and standard deviation of the Frobenius error.
pub type MeanSd = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub model: ModelKind,
    pub d: usize,
    pub checkpoints: [u64; 3],
    pub reference_debias: [MeanSd; 3],
    pub reference_bm: [MeanSd; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCell {
    pub model: ModelKind,
    pub d: usize,
    pub n: u64,
    pub batch_c: f64,
    pub reference_debias: f64,
    pub reference_bm: f64,
}

pub fn checkpoints_for(d: usize) -> Option<[u64; 3]> {
    match d {
        5 => Some([15_000, 30_000, 60_000]),
        20 => Some([50_000, 100_000, 200_000]),
        50 => Some([125_000, 250_000, 500_000]),
        _ => None,
    }
}

pub fn table_cells() -> Vec<TableCell> {
    use ModelKind::*;
    let cell = |model, d, db: [MeanSd; 3], bm: [MeanSd; 3]| TableCell {
        model,
        d,
        checkpoints: checkpoints_for(d).unwrap(),
        reference_debias: db,
        reference_bm: bm,
    };
    vec![
        cell(
            Linear,
            5,
            [(1.55, 0.36), (1.39, 0.35), (1.21, 0.26)],
            [(1.79, 0.45), (1.76, 0.48), (1.65, 0.42)],
        ),
        cell(
            Logistic,
            5,
            [(10.62, 0.92), (9.78, 0.89), (8.99, 0.92)],
            [(11.08, 1.07), (10.72, 1.30), (10.21, 1.64)],
        ),
        cell(
            Expectile,
            5,
            [(1.87, 0.34), (1.68, 0.28), (1.51, 0.24)],
            [(2.19, 0.40), (2.20, 0.49), (2.15, 0.49)],
        ),
        cell(
            Linear,
            20,
            [(4.96, 0.52), (4.34, 0.41), (3.82, 0.33)],
            [(6.51, 0.95), (5.95, 0.82), (5.66, 0.74)],
        ),
        cell(
            Logistic,
            20,
            [(38.19, 1.33), (36.01, 1.33), (33.92, 1.28)],
            [(43.50, 3.16), (42.57, 3.34), (41.98, 3.51)],
        ),
        cell(
            Expectile,
            20,
            [(5.10, 0.49), (4.53, 0.39), (4.02, 0.29)],
            [(6.89, 0.93), (6.45, 0.80), (6.18, 0.77)],
        ),
        cell(
            Linear,
            50,
            [(9.96, 0.52), (8.63, 0.37), (7.91, 0.32)],
            [(14.37, 1.22), (13.31, 0.98), (12.68, 0.91)],
        ),
        cell(
            Logistic,
            50,
            [(96.07, 3.69), (94.09, 2.90), (92.78, 2.59)],
            [(124.77, 8.48), (122.90, 6.96), (122.14, 7.12)],
        ),
        cell(
            Expectile,
            50,
            [(9.94, 0.49), (8.76, 0.38), (8.12, 0.35)],
            [(15.10, 1.22), (14.15, 1.02), (13.62, 0.97)],
        ),
    ]
}

pub fn coverage_cells() -> Vec<CoverageCell> {
    use ModelKind::*;
    let cell = |model, d, n, batch_c, db, bm| CoverageCell {
        model,
        d,
        n,
        batch_c,
        reference_debias: db,
        reference_bm: bm,
    };
    vec![
        cell(Linear, 5, 60_000, 0.5, 0.9236, 0.8796),
        cell(Linear, 20, 200_000, 0.5, 0.9321, 0.8946),
        cell(Linear, 50, 500_000, 0.5, 0.9390, 0.9127),
        cell(Logistic, 5, 20_000, 4.0, 0.8872, 0.8536),
        cell(Logistic, 20, 200_000, 0.5, 0.8514, 0.8178),
        cell(Logistic, 50, 500_000, 0.5, 0.8517, 0.8305),
        cell(Expectile, 5, 60_000, 0.5, 0.9033, 0.8580),
        cell(Expectile, 20, 200_000, 0.5, 0.9127, 0.8809),
        cell(Expectile, 50, 500_000, 0.5, 0.9203, 0.8949),
    ]
}

impl TableCell {
    /// Expectile rows depend on an unreported level τ and are compared by
    /// ordering only.
    pub fn value_matched(&self) -> bool {
        self.model != ModelKind::Expectile
    }

    pub fn config(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.model = self.model;
        cfg.d = self.d;
        cfg.n = self.checkpoints[2];
        cfg.checkpoints = self.checkpoints.to_vec();
        cfg.estimators = vec![EstimatorKind::Debias, EstimatorKind::Bm];
        cfg.burn_in = GRID_BURN_IN;
        cfg
    }
}

impl CoverageCell {
    pub fn config(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.model = self.model;
        cfg.d = self.d;
        cfg.n = self.n;
        cfg.batch_c = self.batch_c;
        cfg.checkpoints = vec![self.n];
        cfg.estimators = vec![EstimatorKind::Debias, EstimatorKind::Bm];
        cfg.burn_in = GRID_BURN_IN;
        cfg
    }
}
