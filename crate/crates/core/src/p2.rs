//! Streaming quantile estimation with the P² algorithm (five markers,
//! piecewise-parabolic height adjustment) and the quartile tracker built on
//! top of it.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::term::Quartile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum QuantileError {
    #[error("observation is not finite")]
    NonFinite,
    #[error("estimator has no observations")]
    Empty,
    #[error("target probability must lie in (0, 1)")]
    InvalidProbability,
}

/// Exact nearest-rank quantile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = libm::ceil(p * sorted.len() as f64) as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Single-quantile P² estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P2Estimator {
    p: f64,
    heights: [f64; 5],
    positions: [i64; 5],
    desired: [f64; 5],
    count: u64,
}

impl P2Estimator {
    pub fn new(p: f64) -> Result<Self, QuantileError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(QuantileError::InvalidProbability);
        }
        Ok(Self {
            p,
            heights: [0.0; 5],
            positions: [1, 2, 3, 4, 5],
            desired: [1.0, 1.0 + 2.0 * p, 1.0 + 4.0 * p, 3.0 + 2.0 * p, 5.0],
            count: 0,
        })
    }

    pub fn probability(&self) -> f64 {
        self.p
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn heights(&self) -> &[f64; 5] {
        &self.heights
    }

    pub fn positions(&self) -> &[i64; 5] {
        &self.positions
    }

    pub fn observe(&mut self, x: f64) -> Result<(), QuantileError> {
        if !x.is_finite() {
            return Err(QuantileError::NonFinite);
        }
        if self.count < 5 {
            // Insertion into the sorted initial buffer.
            let n = self.count as usize;
            let at = self.heights[..n].partition_point(|&h| h <= x);
            self.heights.copy_within(at..n, at + 1);
            self.heights[at] = x;
            self.count += 1;
            return Ok(());
        }
        self.count += 1;

        let h = &mut self.heights;
        let cell = if x < h[0] {
            h[0] = x;
            0
        } else if x >= h[4] {
            h[4] = x;
            3
        } else {
            // h[k] <= x < h[k+1]
            (0..4).find(|&k| x < h[k + 1]).unwrap_or(3)
        };
        for pos in &mut self.positions[cell + 1..] {
            *pos += 1;
        }
        let step = [0.0, self.p / 2.0, self.p, (1.0 + self.p) / 2.0, 1.0];
        for (d, s) in self.desired.iter_mut().zip(step) {
            *d += s;
        }

        for i in 1..4 {
            let delta = self.desired[i] - self.positions[i] as f64;
            let gap_up = self.positions[i + 1] - self.positions[i];
            let gap_down = self.positions[i - 1] - self.positions[i];
            if (delta >= 1.0 && gap_up > 1) || (delta <= -1.0 && gap_down < -1) {
                let dir: i64 = if delta >= 0.0 { 1 } else { -1 };
                let candidate = self.parabolic(i, dir as f64);
                self.heights[i] = if self.heights[i - 1] < candidate && candidate < self.heights[i + 1] {
                    candidate
                } else {
                    self.linear(i, dir)
                };
                self.positions[i] += dir;
            }
        }
        Ok(())
    }

    fn parabolic(&self, i: usize, d: f64) -> f64 {
        let (q, n) = (&self.heights, &self.positions);
        let (n_prev, n_cur, n_next) = (n[i - 1] as f64, n[i] as f64, n[i + 1] as f64);
        q[i] + d / (n_next - n_prev)
            * ((n_cur - n_prev + d) * (q[i + 1] - q[i]) / (n_next - n_cur)
                + (n_next - n_cur - d) * (q[i] - q[i - 1]) / (n_cur - n_prev))
    }

    fn linear(&self, i: usize, d: i64) -> f64 {
        let j = (i as i64 + d) as usize;
        let (q, n) = (&self.heights, &self.positions);
        q[i] + d as f64 * (q[j] - q[i]) / (n[j] - n[i]) as f64
    }

    /// Current estimate: the exact nearest-rank quantile while at most five
    /// observations are buffered, the middle marker afterwards.
    pub fn estimate(&self) -> Result<f64, QuantileError> {
        match self.count {
            0 => Err(QuantileError::Empty),
            n @ 1..=5 => Ok(nearest_rank(&self.heights[..n as usize], self.p)),
            _ => Ok(self.heights[2]),
        }
    }
}

/// Quartile estimates plus running extremes for one scalar stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileTracker {
    markers: [P2Estimator; 3],
    min: f64,
    max: f64,
    count: u64,
    max_label: bool,
}

impl QuartileTracker {
    /// `max_label` enables the MAX label for values at the running maximum.
    pub fn new(max_label: bool) -> Self {
        let est = |p| P2Estimator::new(p).expect("valid probability");
        Self {
            markers: [est(0.25), est(0.5), est(0.75)],
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            count: 0,
            max_label,
        }
    }

    pub fn max_label(&self) -> bool {
        self.max_label
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn min(&self) -> Option<f64> {
        (self.count > 0).then_some(self.min)
    }

    pub fn max(&self) -> Option<f64> {
        (self.count > 0).then_some(self.max)
    }

    pub fn markers(&self) -> &[P2Estimator; 3] {
        &self.markers
    }

    pub fn observe(&mut self, x: f64) -> Result<(), QuantileError> {
        if !x.is_finite() {
            return Err(QuantileError::NonFinite);
        }
        for m in &mut self.markers {
            m.observe(x)?;
        }
        self.min = self.min.min(x);
        self.max = self.max.max(x);
        self.count += 1;
        Ok(())
    }

    /// Forgets every observation; the MAX setting is kept.
    pub fn reset(&mut self) {
        *self = Self::new(self.max_label);
    }

    /// (Q1, median, Q3) estimates, made monotone by carrying the larger
    /// lower estimate upward when the independent estimators cross.
    pub fn estimates(&self) -> Result<[f64; 3], QuantileError> {
        let lo = self.markers[0].estimate()?;
        let mid = self.markers[1].estimate()?.max(lo);
        let hi = self.markers[2].estimate()?.max(mid);
        Ok([lo, mid, hi])
    }

    /// Label of `x` against the current estimates. `x` is expected to have
    /// been observed already.
    pub fn quartile_of(&self, x: f64) -> Result<Quartile, QuantileError> {
        let [lo, mid, hi] = self.estimates()?;
        Ok(if self.max_label && x >= self.max {
            Quartile::Max
        } else if x <= lo {
            Quartile::Q1
        } else if x <= mid {
            Quartile::Q2
        } else if x <= hi {
            Quartile::Q3
        } else {
            Quartile::Q4
        })
    }

    /// Observes `x` and labels it.
    pub fn observe_and_label(&mut self, x: f64) -> Result<Quartile, QuantileError> {
        self.observe(x)?;
        self.quartile_of(x)
    }
}

/// Collects the sample and sorts it; used by callers that want the exact
/// quantile alongside the estimate.
pub fn sorted_sample(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
