#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sgdinfer::batch::{BatchScaling, BatchWindow, BlockBatcher};
use sgdinfer::debias::{DebiasAccumulator, LengthConvention};
use sgdinfer::models::{ModelKind, Observation};
use sgdinfer::{BatchMeansAccumulator, ModelSpec, SgdState, StepSchedule};

/// A recorded SGD path with the streaming batch windows seen along it.
pub struct Stream {
    pub history: Vec<DVector<f64>>,
    pub lengths: Vec<u64>,
    pub batch_sums: Vec<DVector<f64>>,
}

impl Stream {
    pub fn mean(&self) -> DVector<f64> {
        let p = self.history[0].len();
        self.history.iter().fold(DVector::zeros(p), |a, x| a + x) / self.history.len() as f64
    }

    pub fn map(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Vec<DVector<f64>> {
        self.history.iter().map(f).collect()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Linear-model SGD path of length `n` in dimension `p`.
pub fn sgd_stream(p: usize, n: u64, batch_c: f64, scaling: BatchScaling, seed: u64) -> Stream {
    let model = ModelSpec::linear(p).unwrap();
    let schedule = StepSchedule::new(0.5, 0.505).unwrap();
    let mut rng = rng(seed);
    let mut state = SgdState::zeros(p);
    let mut batcher = BlockBatcher::new(p, 0.505, batch_c, scaling).unwrap();
    let mut s = Stream {
        history: Vec::new(),
        lengths: Vec::new(),
        batch_sums: Vec::new(),
    };
    for i in 1..=n {
        let obs = model.sample(&mut rng);
        let g = model.gradient(state.x(), &obs);
        state.step(&schedule, &g).unwrap();
        let snap = batcher.update(i, state.x()).unwrap();
        s.history.push(state.x().clone());
        s.lengths.push(snap.batch_len);
        s.batch_sums.push(snap.batch_sum.clone());
    }
    s
}

/// Random stream `n ≤ 5000`, `p ∈ {1, 2, 5}`, with a random batch constant and scaling.
pub fn random_stream(case: u64) -> Stream {
    let mut r = rng(0xE0_0000 + case);
    let p = [1, 2, 5][r.random_range(0..3)];
    let n = r.random_range(2..=5000);
    let c = [0.5, 1.0, 4.0][r.random_range(0..3)];
    let scaling = if r.random_bool(0.5) {
        BatchScaling::Anchor
    } else {
        BatchScaling::Threshold
    };
    sgd_stream(p, n, c, scaling, case)
}

/// Recursive de-biased estimate over `history` with externally supplied windows.
pub fn recursive_debias(
    history: &[DVector<f64>],
    sums: &[DVector<f64>],
    lengths: &[u64],
) -> DebiasAccumulator {
    let p = history[0].len();
    let mut acc = DebiasAccumulator::new(p);
    for ((x, s), &l) in history.iter().zip(sums).zip(lengths) {
        acc.accumulate(x, s, l).unwrap();
    }
    acc
}

pub fn recursive_bm(sums: &[DVector<f64>], lengths: &[u64]) -> BatchMeansAccumulator {
    let mut acc = BatchMeansAccumulator::new(sums[0].len());
    for (s, &l) in sums.iter().zip(lengths) {
        acc.accumulate(s, l).unwrap();
    }
    acc
}

pub fn mean_of(xs: &[DVector<f64>]) -> DVector<f64> {
    xs.iter().fold(DVector::zeros(xs[0].len()), |a, x| a + x) / xs.len() as f64
}

pub fn normal_vector(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample(StandardNormal))
}

/// Centered sample covariance of the iterates; the natural scale of the estimators.
pub fn iterate_scale(history: &[DVector<f64>]) -> f64 {
    let mean = mean_of(history);
    let p = mean.len();
    let mut c = nalgebra::DMatrix::zeros(p, p);
    for x in history {
        let d = x - &mean;
        c += &d * d.transpose();
    }
    (c / history.len() as f64).norm()
}

/// `‖a − b‖_F / max(‖b‖_F, scale)`. With every window spanning the whole
/// history the estimate telescopes to exactly zero and a plain relative
/// error would compare rounding noise.
pub fn scaled_error(a: &DMatrix<f64>, b: &DMatrix<f64>, scale: f64) -> f64 {
    (a - b).norm() / b.norm().max(scale)
}

pub const DEFAULT_CONVENTION: LengthConvention = LengthConvention::Batch;

pub fn models() -> Vec<ModelSpec> {
    vec![
        ModelSpec::linear(5).unwrap(),
        ModelSpec::logistic(5).unwrap(),
        ModelSpec::expectile(5, 0.25).unwrap(),
        ModelSpec::mean(2.0).unwrap(),
    ]
}

/// Random point with the observation kept at least `margin` away from the
/// expectile kink.
pub fn smooth_point(model: &ModelSpec, r: &mut ChaCha8Rng) -> (DVector<f64>, Observation) {
    loop {
        let x = model.x_star() + normal_vector(r, model.dim());
        let obs = model.sample(r);
        if model.kind() != ModelKind::Expectile {
            return (x, obs);
        }
        let resid = obs.b - obs.a.dot(&x.rows(0, model.d())) - x[model.d()];
        if resid.abs() > 1e-2 {
            return (x, obs);
        }
    }
}

pub fn max_gradient_fd_error(model: &ModelSpec, points: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..points {
        let (x, obs) = smooth_point(model, &mut r);
        let g = model.gradient(&x, &obs);
        let fd = DVector::from_fn(model.dim(), |j, _| {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[j] += h;
            dn[j] -= h;
            (model.loss(&up, &obs) - model.loss(&dn, &obs)) / (2.0 * h)
        });
        worst = worst.max((&g - &fd).norm() / g.norm().max(1.0));
    }
    worst
}

pub fn max_hessian_fd_error(model: &ModelSpec, points: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..points {
        let (x, obs) = smooth_point(model, &mut r);
        let hess = model.hessian(&x, &obs);
        let p = model.dim();
        let mut fd = DMatrix::zeros(p, p);
        for j in 0..p {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[j] += h;
            dn[j] -= h;
            let col = (model.gradient(&up, &obs) - model.gradient(&dn, &obs)) / (2.0 * h);
            fd.set_column(j, &col);
        }
        worst = worst.max((&hess - &fd).norm() / hess.norm().max(1.0));
    }
    worst
}

/// Sandwich `Â⁻¹ŜÂ⁻¹` from stochastic Hessians and gradients at the truth.
pub fn monte_carlo_sandwich(model: &ModelSpec, draws: usize, seed: u64) -> DMatrix<f64> {
    let p = model.dim();
    let mut r = rng(seed);
    let mut a = DMatrix::zeros(p, p);
    let mut s = DMatrix::zeros(p, p);
    let mut obs = model.empty_observation();
    for _ in 0..draws {
        model.sample_into(&mut r, &mut obs);
        a += model.hessian(model.x_star(), &obs);
        let g = model.gradient(model.x_star(), &obs);
        s += &g * g.transpose();
    }
    let a_inv = (a / draws as f64).try_inverse().unwrap();
    &a_inv * (s / draws as f64) * &a_inv
}
