//! Replicated SGD runs with streaming covariance estimation.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{BatchMeansAccumulator, PluginAccumulator};
use crate::batch::{BatchScaling, BatchWindow, BlockBatcher, PolynomialBlocks};
use crate::debias::{CovEstimate, DebiasAccumulator, LengthConvention};
use crate::error::{Error, Result};
use crate::harness::ci::confidence_interval;
use crate::linalg::ErrorNorm;
use crate::models::{ground_truth_sigma, GroundTruth, ModelKind, ModelSpec};
use crate::sgd::{SgdState, StepSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Debias,
    Bm,
    Plugin,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [
        EstimatorKind::Debias,
        EstimatorKind::Bm,
        EstimatorKind::Plugin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Debias => "debias",
            EstimatorKind::Bm => "bm",
            EstimatorKind::Plugin => "plugin",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator {s:?}")))
    }
}

/// Window used by the batch-means baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BmWindow {
    /// Current block of `aₘ = ⌊c · m^β⌋`.
    #[default]
    Polynomial,
    /// The same two-block window as the de-biased estimator.
    Shared,
}

fn default_tau() -> f64 {
    0.25
}
fn default_one() -> f64 {
    1.0
}
fn default_eta() -> f64 {
    0.5
}
fn default_alpha() -> f64 {
    0.505
}
fn default_batch_c() -> f64 {
    0.5
}
fn default_level() -> f64 {
    0.95
}
fn default_true() -> bool {
    true
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Debias, EstimatorKind::Bm]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    #[serde(default = "default_d")]
    pub d: usize,
    /// Expectile level.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Noise variance of the linear and mean models.
    #[serde(default = "default_one")]
    pub noise_variance: f64,
    pub n: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_batch_c")]
    pub batch_c: f64,
    #[serde(default)]
    pub batch_scaling: BatchScaling,
    #[serde(default)]
    pub length_convention: LengthConvention,
    #[serde(default)]
    pub bm_window: BmWindow,
    #[serde(default = "default_one")]
    pub bm_scale: f64,
    /// Defaults to `2 / (1 − α)`.
    #[serde(default)]
    pub bm_exponent: Option<f64>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub seed: u64,
    /// Iterations at which estimates are recorded; defaults to `[n]`.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    #[serde(default = "default_level")]
    pub nominal_level: f64,
    #[serde(default)]
    pub error_norm: ErrorNorm,
    /// Initial iterate; zero when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// SGD steps taken from `x0` and discarded before the recorded stream
    /// starts; the step schedule continues from step `burn_in + 1`.
    #[serde(default)]
    pub burn_in: u64,
    #[serde(default = "default_true")]
    pub record_timing: bool,
    #[serde(default)]
    pub save_sigma: bool,
}

fn default_d() -> usize {
    5
}
fn default_reps() -> usize {
    100
}

impl ExperimentConfig {
    pub fn new(model: ModelKind, d: usize, n: u64) -> Self {
        Self {
            model,
            d,
            tau: default_tau(),
            noise_variance: 1.0,
            n,
            reps: default_reps(),
            eta: default_eta(),
            alpha: default_alpha(),
            batch_c: default_batch_c(),
            batch_scaling: BatchScaling::default(),
            length_convention: LengthConvention::default(),
            bm_window: BmWindow::default(),
            bm_scale: 1.0,
            bm_exponent: None,
            estimators: default_estimators(),
            seed: 0,
            checkpoints: vec![n],
            nominal_level: default_level(),
            error_norm: ErrorNorm::default(),
            x0: None,
            burn_in: 0,
            record_timing: true,
            save_sigma: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if cfg.checkpoints.is_empty() {
            cfg.checkpoints = vec![cfg.n];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec = ModelSpec::new(self.model, self.d, self.tau)?;
        match self.model {
            ModelKind::Linear | ModelKind::Mean => spec.with_noise_variance(self.noise_variance),
            _ => Ok(spec),
        }
    }

    pub fn bm_exponent(&self) -> f64 {
        self.bm_exponent
            .unwrap_or_else(|| PolynomialBlocks::default_exponent(self.alpha))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.estimators.is_empty() {
            return bad("no estimators selected".into());
        }
        if self.checkpoints.is_empty() {
            return bad("no checkpoints".into());
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return bad("checkpoints must be strictly increasing".into());
        }
        if self.checkpoints[0] == 0 || *self.checkpoints.last().unwrap() > self.n {
            return bad(format!("checkpoints must lie in [1, {}]", self.n));
        }
        if !(self.nominal_level > 0.0 && self.nominal_level < 1.0) {
            return bad(format!(
                "nominal level {} outside (0, 1)",
                self.nominal_level
            ));
        }
        StepSchedule::new(self.eta, self.alpha)?;
        if !(self.batch_c > 0.0) || !(self.bm_scale > 0.0) || !(self.bm_exponent() > 1.0) {
            return bad("batch constants must be positive and the BM exponent above 1".into());
        }
        let model = self.model_spec()?;
        if let Some(x0) = &self.x0 {
            if x0.len() != model.dim() {
                return bad(format!(
                    "x0 has {} entries, model needs {}",
                    x0.len(),
                    model.dim()
                ));
            }
        }
        if self.estimators.contains(&EstimatorKind::Plugin) && !model.has_hessian() {
            return bad(format!(
                "{} model has no Hessian for the plug-in estimator",
                self.model
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub estimator: EstimatorKind,
    /// `None` when the estimator could not be evaluated (singular plug-in Hessian).
    pub error: Option<f64>,
    pub hits: Vec<bool>,
    pub floored: usize,
    pub sigma_hat: Option<DMatrix<f64>>,
}

impl EstimateRecord {
    pub fn hit_count(&self) -> usize {
        self.hits.iter().filter(|&&h| h).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub n: u64,
    pub x_bar: DVector<f64>,
    pub estimates: Vec<EstimateRecord>,
}

impl CheckpointRecord {
    pub fn estimate(&self, kind: EstimatorKind) -> Option<&EstimateRecord> {
        self.estimates.iter().find(|e| e.estimator == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_index: u64,
    pub checkpoints: Vec<CheckpointRecord>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub model: ModelSpec,
    pub truth: GroundTruth,
    pub records: Vec<RunRecord>,
}

/// Generator for replication `run_index`: the master seed selects the key and
/// the run index selects an independent ChaCha stream.
pub fn run_rng(master_seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}

/// Runs every replication on `threads` worker threads (all cores when `None`).
/// Results do not depend on the thread count.
pub fn run_experiment(
    config: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ExperimentResult> {
    config.validate()?;
    let model = config.model_spec()?;
    let truth = ground_truth_sigma(&model)?;
    let records = run_replications(config, &model, &truth, threads)?;
    Ok(ExperimentResult {
        config: config.clone(),
        model,
        truth,
        records,
    })
}

/// Same as [`run_experiment`] with a precomputed ground truth.
pub fn run_replications(
    config: &ExperimentConfig,
    model: &ModelSpec,
    truth: &GroundTruth,
    threads: Option<usize>,
) -> Result<Vec<RunRecord>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..config.reps as u64)
            .into_par_iter()
            .map(|r| run_single(config, model, truth, r))
            .collect()
    })
}

enum BmSource {
    Polynomial(PolynomialBlocks),
    Shared,
}

/// One replication: sample → gradient → SGD step → batch windows →
/// accumulators, finalizing at each checkpoint.
pub fn run_single(
    config: &ExperimentConfig,
    model: &ModelSpec,
    truth: &GroundTruth,
    run_index: u64,
) -> Result<RunRecord> {
    let start = Instant::now();
    let p = model.dim();
    let base = StepSchedule::new(config.eta, config.alpha)?;
    let mut rng = run_rng(config.seed, run_index);
    let mut state = match &config.x0 {
        Some(x0) => SgdState::new(DVector::from_column_slice(x0)),
        None => SgdState::zeros(p),
    };
    let mut obs = model.empty_observation();
    let mut grad = DVector::zeros(p);
    for _ in 0..config.burn_in {
        model.sample_into(&mut rng, &mut obs);
        model.gradient_into(state.x(), &obs, &mut grad);
        state.step(&base, &grad)?;
    }
    if config.burn_in > 0 {
        state = SgdState::new(state.x().clone());
    }
    let schedule = base.with_offset(config.burn_in);
    let want = |k| config.estimators.contains(&k);
    let mut debias = want(EstimatorKind::Debias).then(|| DebiasAccumulator::new(p));
    let mut bm = want(EstimatorKind::Bm).then(|| BatchMeansAccumulator::new(p));
    let mut plugin = want(EstimatorKind::Plugin).then(|| PluginAccumulator::new(p));
    let needs_blocks = debias.is_some() || (bm.is_some() && config.bm_window == BmWindow::Shared);
    let mut blocks = if needs_blocks {
        Some(BlockBatcher::new(
            p,
            config.alpha,
            config.batch_c,
            config.batch_scaling,
        )?)
    } else {
        None
    };
    let mut bm_source = match config.bm_window {
        BmWindow::Polynomial if bm.is_some() => BmSource::Polynomial(PolynomialBlocks::new(
            p,
            config.bm_scale,
            config.bm_exponent(),
        )?),
        _ => BmSource::Shared,
    };

    let mut checkpoints = Vec::with_capacity(config.checkpoints.len());
    let mut next_cp = config.checkpoints.iter().copied().peekable();

    for i in 1..=config.n {
        model.sample_into(&mut rng, &mut obs);
        model.gradient_into(state.x(), &obs, &mut grad);
        if let Some(acc) = plugin.as_mut() {
            let h = model.hessian(state.x(), &obs);
            acc.accumulate(&grad, &h)?;
        }
        state.step(&schedule, &grad)?;
        let x = state.x();
        if let Some(batcher) = blocks.as_mut() {
            let snap = batcher.update(i, x)?;
            if let Some(acc) = debias.as_mut() {
                acc.accumulate_snapshot(x, snap, config.length_convention)?;
            }
            if let (Some(acc), BmSource::Shared) = (bm.as_mut(), &bm_source) {
                acc.accumulate(&snap.batch_sum, snap.batch_len)?;
            }
        }
        if let (Some(acc), BmSource::Polynomial(window)) = (bm.as_mut(), &mut bm_source) {
            let snap = window.update(i, x)?;
            acc.accumulate(&snap.batch_sum, snap.batch_len)?;
        }

        if next_cp.peek() == Some(&i) {
            next_cp.next();
            let x_bar = state.x_bar();
            let mut estimates = Vec::new();
            for kind in EstimatorKind::ALL {
                let est = match kind {
                    EstimatorKind::Debias => debias.as_ref().map(|a| a.finalize(x_bar)),
                    EstimatorKind::Bm => bm.as_ref().map(|a| a.finalize(x_bar)),
                    EstimatorKind::Plugin => plugin.as_ref().map(|a| a.finalize()),
                };
                if let Some(est) = est {
                    estimates.push(score(kind, est, x_bar, i, config, model, truth)?);
                }
            }
            checkpoints.push(CheckpointRecord {
                n: i,
                x_bar: x_bar.clone(),
                estimates,
            });
        }
    }

    let wall_ms = if config.record_timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(RunRecord {
        run_index,
        checkpoints,
        wall_ms,
    })
}

fn score(
    kind: EstimatorKind,
    est: Result<CovEstimate>,
    x_bar: &DVector<f64>,
    n: u64,
    config: &ExperimentConfig,
    model: &ModelSpec,
    truth: &GroundTruth,
) -> Result<EstimateRecord> {
    let est = match est {
        Ok(est) => est,
        Err(Error::SingularHessian { .. }) => {
            return Ok(EstimateRecord {
                estimator: kind,
                error: None,
                hits: Vec::new(),
                floored: 0,
                sigma_hat: None,
            })
        }
        Err(e) => return Err(e),
    };
    let error = config.error_norm.distance(&est.sigma_hat, &truth.sigma);
    let intervals = confidence_interval(x_bar, &est.sigma_hat, n, 1.0 - config.nominal_level)?;
    Ok(EstimateRecord {
        estimator: kind,
        error: Some(error),
        hits: intervals.contains(model.x_star()),
        floored: intervals.floored,
        sigma_hat: config.save_sigma.then_some(est.sigma_hat),
    })
}
