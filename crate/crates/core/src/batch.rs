//! Block-based batching of SGD iterates.
//!
//! Block anchors `a₁ = 1 < a₂ < …` partition the iterate stream. The batch at
//! step `i` spans the previous block and the current one up to `i`, so only
//! two partial sums (`S₀` for the previous block and `S₁` for the current
//! block) have to be kept:
//!
//! ```text
//!   … | a_{m-1} ........ a_m - 1 | a_m ...... i | …
//!       └──────── S₀ ──────────┘ └─── S₁ ────┘
//!   batch sum = S₀ + S₁,  ℓᵢ = i − a_{m−1} + 1
//! ```
//!
//! A new block opens once the current block length reaches
//! `⌊C · i^α · ln i⌋`. With `C = 1` the anchors are `1, 2, 3, 4, 8, …` for
//! `α = 0.505`. [`BatchScaling`] selects how `C ≠ 1` is applied.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Block-length trigger `⌊C · i^α · ln i⌋` (natural log). Zero at `i ≤ 1`.
pub fn threshold(i: u64, alpha: f64, scale: f64) -> u64 {
    if i <= 1 {
        return 0;
    }
    let x = i as f64;
    (scale * x.powf(alpha) * x.ln()).floor().max(0.0) as u64
}

/// Smallest `a > prev` with `a − prev + 1 ≥ ⌊a^α ln a⌋`.
///
/// Once `⌊(prev+1)^α ln(prev+1)⌋ ≥ 2` and the trigger grows by at most one
/// per step, the returned anchor satisfies the condition with equality.
pub fn next_anchor(prev: u64, alpha: f64) -> u64 {
    let mut a = prev + 1;
    while a - prev + 1 < threshold(a, alpha, 1.0) {
        a += 1;
    }
    a
}

/// How the batch-size constant `C` enters the block construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchScaling {
    /// Anchors are `⌊C · a⁰ₘ⌋` where `a⁰` is the unscaled anchor sequence.
    #[default]
    Anchor,
    /// A block resets once `i − a + 1 ≥ ⌊C · i^α · ln i⌋`.
    Threshold,
}

/// Window sum and lengths after processing iterate `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSnapshot {
    pub index: u64,
    /// Sum of the iterates in the window.
    pub batch_sum: DVector<f64>,
    /// Number of iterates in the window (`|Bᵢ|`).
    pub batch_len: u64,
    /// Length of the current block only, `i − a + 1`.
    pub block_len: u64,
}

impl BatchSnapshot {
    fn empty(p: usize) -> Self {
        Self {
            index: 0,
            batch_sum: DVector::zeros(p),
            batch_len: 0,
            block_len: 0,
        }
    }
}

/// A streaming batch construction fed one iterate per step.
pub trait BatchWindow {
    /// Feeds `xᵢ`; must be called with `i = 1, 2, …` in order.
    fn update(&mut self, i: u64, x: &DVector<f64>) -> Result<&BatchSnapshot>;

    fn snapshot(&self) -> &BatchSnapshot;
}

/// Unscaled anchors mapped through `a ↦ ⌊C·a⌋`, dropping repeats.
#[derive(Debug, Clone)]
struct ScaledAnchors {
    alpha: f64,
    scale: f64,
    base: u64,
    last: u64,
}

impl ScaledAnchors {
    fn new(alpha: f64, scale: f64) -> Self {
        Self {
            alpha,
            scale,
            base: 1,
            last: 1,
        }
    }

    /// Next real anchor strictly after the previous one.
    fn next(&mut self) -> u64 {
        loop {
            self.base = next_anchor(self.base, self.alpha);
            let real = (self.scale * self.base as f64).floor() as u64;
            if real > self.last {
                self.last = real;
                return real;
            }
        }
    }
}

/// Online two-block batching used by the de-biased estimator.
#[derive(Debug, Clone)]
pub struct BlockBatcher {
    alpha: f64,
    scale: f64,
    scaling: BatchScaling,
    anchor: u64,
    prev_block_len: u64,
    prev_sum: DVector<f64>,
    cur_sum: DVector<f64>,
    anchors: ScaledAnchors,
    next_anchor: u64,
    snapshot: BatchSnapshot,
}

impl BlockBatcher {
    pub fn new(p: usize, alpha: f64, scale: f64, scaling: BatchScaling) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "batch constant must be positive, got {scale}"
            )));
        }
        let mut anchors = ScaledAnchors::new(alpha, scale);
        let next_anchor = anchors.next();
        Ok(Self {
            alpha,
            scale,
            scaling,
            anchor: 1,
            prev_block_len: 0,
            prev_sum: DVector::zeros(p),
            cur_sum: DVector::zeros(p),
            anchors,
            next_anchor,
            snapshot: BatchSnapshot::empty(p),
        })
    }

    /// Start index `a` of the current block.
    pub fn anchor(&self) -> u64 {
        self.anchor
    }

    fn opens_block(&mut self, i: u64) -> bool {
        if i == 1 {
            return true;
        }
        match self.scaling {
            BatchScaling::Threshold => i - self.anchor + 1 >= threshold(i, self.alpha, self.scale),
            BatchScaling::Anchor => {
                if i == self.next_anchor {
                    self.next_anchor = self.anchors.next();
                    true
                } else {
                    false
                }
            }
        }
    }
}

impl BatchWindow for BlockBatcher {
    fn update(&mut self, i: u64, x: &DVector<f64>) -> Result<&BatchSnapshot> {
        check_dim(self.cur_sum.len(), x.len())?;
        let expected = self.snapshot.index + 1;
        if i != expected {
            return Err(Error::OutOfOrder { expected, got: i });
        }
        if self.opens_block(i) {
            self.prev_block_len = i - self.anchor;
            self.anchor = i;
            std::mem::swap(&mut self.prev_sum, &mut self.cur_sum);
            self.cur_sum.copy_from(x);
        } else {
            self.cur_sum += x;
        }
        let block_len = i - self.anchor + 1;
        let snap = &mut self.snapshot;
        snap.index = i;
        snap.block_len = block_len;
        snap.batch_len = self.prev_block_len + block_len;
        snap.batch_sum.copy_from(&self.prev_sum);
        snap.batch_sum += &self.cur_sum;
        Ok(&self.snapshot)
    }

    fn snapshot(&self) -> &BatchSnapshot {
        &self.snapshot
    }
}

/// Blocks at `aₘ = ⌊C · m^β⌋` with the window running from the current block
/// start to `i`. This is the batching of the non-overlapping online
/// batch-means estimator.
#[derive(Debug, Clone)]
pub struct PolynomialBlocks {
    scale: f64,
    exponent: f64,
    m: u64,
    anchor: u64,
    next_anchor: u64,
    snapshot: BatchSnapshot,
}

impl PolynomialBlocks {
    pub fn new(p: usize, scale: f64, exponent: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0 && exponent.is_finite() && exponent > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "polynomial blocks need scale > 0 and exponent > 1, got ({scale}, {exponent})"
            )));
        }
        let mut blocks = Self {
            scale,
            exponent,
            m: 1,
            anchor: 1,
            next_anchor: 1,
            snapshot: BatchSnapshot::empty(p),
        };
        blocks.next_anchor = blocks.advance();
        Ok(blocks)
    }

    /// Exponent `β = 2 / (1 − α)` used by default for step decay `α`.
    pub fn default_exponent(alpha: f64) -> f64 {
        2.0 / (1.0 - alpha)
    }

    fn advance(&mut self) -> u64 {
        loop {
            self.m += 1;
            let a = (self.scale * (self.m as f64).powf(self.exponent)).floor() as u64;
            if a > self.anchor {
                return a;
            }
        }
    }
}

impl BatchWindow for PolynomialBlocks {
    fn update(&mut self, i: u64, x: &DVector<f64>) -> Result<&BatchSnapshot> {
        check_dim(self.snapshot.batch_sum.len(), x.len())?;
        let expected = self.snapshot.index + 1;
        if i != expected {
            return Err(Error::OutOfOrder { expected, got: i });
        }
        if i == 1 || i == self.next_anchor {
            if i > 1 {
                self.anchor = i;
                self.next_anchor = self.advance();
            }
            self.snapshot.batch_sum.copy_from(x);
        } else {
            self.snapshot.batch_sum += x;
        }
        let snap = &mut self.snapshot;
        snap.index = i;
        snap.block_len = i - self.anchor + 1;
        snap.batch_len = snap.block_len;
        Ok(&self.snapshot)
    }

    fn snapshot(&self) -> &BatchSnapshot {
        &self.snapshot
    }
}

/// Two-block batch sizes `ℓ₁..ℓₙ` under the unscaled anchor construction.
pub fn exact_batch_lengths(alpha: f64, n: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(n as usize);
    let (mut prev, mut cur) = (1u64, 1u64);
    let mut next = next_anchor(1, alpha);
    for i in 1..=n {
        if i == next {
            prev = cur;
            cur = i;
            next = next_anchor(i, alpha);
        }
        out.push(i - prev + 1);
    }
    out
}

/// A step whose batch size falls outside `[⌊i^α ln i⌋, 2⌊i^α ln i⌋]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundViolation {
    pub index: u64,
    pub len: u64,
    pub lower: u64,
    pub upper: u64,
}

/// Checks `⌊i^α ln i⌋ ≤ ℓᵢ ≤ 2⌊i^α ln i⌋ + slack` over `(i, ℓᵢ)` pairs.
pub fn bound_violations(
    trace: impl IntoIterator<Item = (u64, u64)>,
    alpha: f64,
    upper_slack: u64,
) -> Vec<BoundViolation> {
    trace
        .into_iter()
        .filter_map(|(i, len)| {
            let lower = threshold(i, alpha, 1.0);
            let upper = 2 * lower + upper_slack;
            (len < lower || len > upper).then_some(BoundViolation {
                index: i,
                len,
                lower,
                upper,
            })
        })
        .collect()
}

pub fn batch_bounds_check(trace: impl IntoIterator<Item = (u64, u64)>, alpha: f64) -> bool {
    bound_violations(trace, alpha, 0).is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn threshold_values() {
        assert_eq!(threshold(1, 0.505, 1.0), 0);
        // 8^0.505 · ln 8 = 5.9430195…
        assert_eq!(threshold(8, 0.505, 1.0), 5);
        assert_eq!(threshold(8, 0.505, 0.5), 2);
    }

    #[test]
    fn block_starts_for_unit_scale() {
        for scaling in [BatchScaling::Anchor, BatchScaling::Threshold] {
            let mut b = BlockBatcher::new(1, 0.505, 1.0, scaling).unwrap();
            let mut starts = Vec::new();
            for i in 1..=20 {
                b.update(i, &scalar(0.0)).unwrap();
                if b.anchor() == i {
                    starts.push(i);
                }
            }
            assert_eq!(&starts[..5], &[1, 2, 3, 4, 8], "{scaling:?}");
        }
    }

    #[test]
    fn first_step_resets() {
        let mut b = BlockBatcher::new(2, 0.505, 0.5, BatchScaling::Anchor).unwrap();
        let x = DVector::from_vec(vec![3.0, -1.0]);
        let snap = b.update(1, &x).unwrap();
        assert_eq!(snap.batch_sum, x);
        assert_eq!((snap.batch_len, snap.block_len), (1, 1));
    }

    #[test]
    fn constant_stream_sums_to_length_times_value() {
        for (scale, scaling) in [
            (0.5, BatchScaling::Anchor),
            (0.5, BatchScaling::Threshold),
            (4.0, BatchScaling::Anchor),
        ] {
            let mut b = BlockBatcher::new(1, 0.505, scale, scaling).unwrap();
            for i in 1..=3000 {
                let snap = b.update(i, &scalar(2.5)).unwrap();
                assert_eq!(snap.batch_sum[0], 2.5 * snap.batch_len as f64);
            }
        }
    }

    #[test]
    fn window_sum_matches_history() {
        let mut b = BlockBatcher::new(1, 0.6, 0.5, BatchScaling::Anchor).unwrap();
        let mut hist = Vec::new();
        for i in 1..=5000u64 {
            let v = ((i as f64) * 0.37).sin() + 0.01 * i as f64;
            hist.push(v);
            let snap = b.update(i, &scalar(v)).unwrap();
            let l = snap.batch_len as usize;
            assert!(l >= 1 && l <= i as usize);
            let direct: f64 = hist[hist.len() - l..].iter().sum();
            assert!((snap.batch_sum[0] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn length_grows_within_block_and_drops_at_reset() {
        let mut b = BlockBatcher::new(1, 0.505, 1.0, BatchScaling::Threshold).unwrap();
        let mut prev: Option<(u64, u64)> = None;
        for i in 1..=20_000 {
            let snap = b.update(i, &scalar(1.0)).unwrap().clone();
            if let Some((len, block)) = prev {
                if snap.block_len == 1 {
                    assert_eq!(snap.batch_len, block + 1);
                } else {
                    assert_eq!(snap.batch_len, len + 1);
                }
            }
            prev = Some((snap.batch_len, snap.block_len));
        }
    }

    #[test]
    fn rejects_out_of_order() {
        let mut b = BlockBatcher::new(1, 0.505, 1.0, BatchScaling::Anchor).unwrap();
        b.update(1, &scalar(1.0)).unwrap();
        assert!(matches!(
            b.update(3, &scalar(1.0)),
            Err(Error::OutOfOrder {
                expected: 2,
                got: 3
            })
        ));
        let mut pb = PolynomialBlocks::new(1, 1.0, 4.0).unwrap();
        assert!(pb.update(2, &scalar(1.0)).is_err());
    }

    #[test]
    fn scaled_anchors_are_strictly_increasing() {
        let mut a = ScaledAnchors::new(0.505, 0.5);
        let mut last = 1;
        for _ in 0..200 {
            let next = a.next();
            assert!(next > last);
            last = next;
        }
    }

    #[test]
    fn polynomial_blocks_follow_power_law() {
        let mut pb = PolynomialBlocks::new(1, 1.0, 3.0).unwrap();
        let mut starts = Vec::new();
        for i in 1..=200 {
            let snap = pb.update(i, &scalar(1.0)).unwrap();
            assert_eq!(snap.batch_sum[0], snap.batch_len as f64);
            if snap.block_len == 1 {
                starts.push(i);
            }
        }
        assert_eq!(starts, vec![1, 8, 27, 64, 125]);
    }

    #[test]
    fn unit_lengths_violate_lower_bound() {
        let trace = (10..1000).map(|i| (i, 1));
        assert!(!batch_bounds_check(trace, 0.505));
    }

    #[test]
    fn exact_lengths_respect_bounds_past_small_indices() {
        let lens = exact_batch_lengths(0.505, 100_000);
        let trace = (3..=100_000u64).map(|i| (i, lens[(i - 1) as usize]));
        assert!(batch_bounds_check(trace, 0.505));
    }
}
