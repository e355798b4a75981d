//! Weighted empirical CDFs, weighted quantiles and the composite interval
//! built from up to three parts: `{0}`, `{1}` and an inner interval for the
//! event `0 < M_∞ < 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::PolarizationEstimate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfintError {
    #[error("all weights are zero")]
    AllWeightsZero,
    #[error("{samples} samples but {weights} weights")]
    LengthMismatch { samples: usize, weights: usize },
    #[error("invalid sample or weight: {0}")]
    InvalidInput(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("the estimate carries no replication records")]
    MissingRecords,
}

/// Right-continuous step CDF of a weighted sample. Zero-weight samples are
/// dropped and ties are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCdf {
    points: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
    total_weight: f64,
}

impl WeightedCdf {
    pub fn new(samples: &[f64], weights: &[f64]) -> Result<WeightedCdf, ConfintError> {
        if samples.len() != weights.len() {
            return Err(ConfintError::LengthMismatch {
                samples: samples.len(),
                weights: weights.len(),
            });
        }
        let mut pairs = Vec::with_capacity(samples.len());
        for (&x, &w) in samples.iter().zip(weights) {
            if !x.is_finite() || !w.is_finite() || w < 0.0 {
                return Err(ConfintError::InvalidInput(format!("sample {x}, weight {w}")));
            }
            if w > 0.0 {
                pairs.push((x, w));
            }
        }
        if pairs.is_empty() {
            return Err(ConfintError::AllWeightsZero);
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match points.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => points.push((x, w)),
            }
        }
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for &(_, w) in &points {
            acc += w;
            cumulative.push(acc);
        }
        Ok(WeightedCdf {
            points,
            total_weight: acc,
            cumulative,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// `F(x) = Σ_{x_j <= x} w_j / Σ w_j`.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.points.partition_point(|p| p.0 <= x);
        if i == 0 {
            0.0
        } else {
            self.cumulative[i - 1] / self.total_weight
        }
    }

    /// The smallest support point `x` with `F(x) >= p`; `p` is clamped into
    /// `[0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        let total = self.total_weight;
        let i = self.cumulative.partition_point(|&c| c / total < p);
        self.points[i.min(self.points.len() - 1)].0
    }

    /// `[q_{(1-θ)/2}, q_{(1+θ)/2}]`.
    pub fn inner_interval(&self, theta: f64) -> (f64, f64) {
        let theta = theta.clamp(0.0, 1.0);
        (self.quantile((1.0 - theta) / 2.0), self.quantile((1.0 + theta) / 2.0))
    }
}

pub fn weighted_cdf(samples: &[f64], weights: &[f64]) -> Result<WeightedCdf, ConfintError> {
    WeightedCdf::new(samples, weights)
}

pub fn weighted_quantile(cdf: &WeightedCdf, p: f64) -> f64 {
    cdf.quantile(p)
}

pub fn inner_interval(cdf: &WeightedCdf, theta: f64) -> (f64, f64) {
    cdf.inner_interval(theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub includes_zero: bool,
    pub includes_one: bool,
    pub inner: Option<(f64, f64)>,
    /// Which of the seven cases produced the interval.
    pub case_id: u8,
    pub theta_used: Option<f64>,
    pub alpha: f64,
    /// `θ` fell outside `[0, 1]` and was clamped.
    pub theta_clamped: bool,
    /// Set when an inner part was required but every `u01_t` weight was
    /// zero, so the barrier-only case `case_id` was used instead.
    pub fell_through_from: Option<u8>,
}

impl ConfidenceInterval {
    pub fn part_count(&self) -> usize {
        self.includes_zero as usize + self.includes_one as usize + self.inner.is_some() as usize
    }

    /// Membership with barrier parts widened to `[0, eps]` and `[1 - eps, 1]`.
    pub fn contains(&self, x: f64, barrier_eps: f64) -> bool {
        (self.includes_zero && x <= barrier_eps)
            || (self.includes_one && x >= 1.0 - barrier_eps)
            || self.inner.is_some_and(|(lo, hi)| lo <= x && x <= hi)
    }
}

/// Case selection on `(u0, u1, u01)` at level `1 - alpha`; returns the case
/// and, for cases with an inner part, the unclamped `θ`.
pub fn select_case(u0: f64, u1: f64, u01: f64, alpha: f64) -> (u8, Option<f64>) {
    let level = 1.0 - alpha;
    if u0 >= level {
        (1, None)
    } else if u1 >= level {
        (2, None)
    } else if u01 >= level {
        (3, Some(level / u01))
    } else if u0.max(u1) < level && u0 + u1 >= level && u01 < u0.min(u1) {
        (4, None)
    } else if u0.max(u01) < level && u0 + u01 >= level && u1 < u0.min(u01) {
        (5, Some((level - u0) / u01))
    } else if u01.max(u1) < level && u01 + u1 >= level && u0 < u01.min(u1) {
        (6, Some((level - u1) / u01))
    } else {
        (7, Some((level - u0 - u1) / u01))
    }
}

fn barrier_parts(case_id: u8) -> (bool, bool) {
    match case_id {
        1 | 5 => (true, false),
        2 | 6 => (false, true),
        4 | 7 => (true, true),
        _ => (false, false),
    }
}

/// The composite interval of level `1 - alpha` for an estimate. The inner
/// part uses the records' `m_t` weighted by `u01_t`.
pub fn composite_interval(
    est: &PolarizationEstimate,
    alpha: f64,
) -> Result<ConfidenceInterval, ConfintError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConfintError::InvalidAlpha(alpha));
    }
    let (case_id, theta) = select_case(est.u0, est.u1, est.u01, alpha);
    let (includes_zero, includes_one) = barrier_parts(case_id);
    let Some(theta) = theta else {
        return Ok(ConfidenceInterval {
            includes_zero,
            includes_one,
            inner: None,
            case_id,
            theta_used: None,
            alpha,
            theta_clamped: false,
            fell_through_from: None,
        });
    };
    if est.records.is_empty() {
        return Err(ConfintError::MissingRecords);
    }
    let samples: Vec<f64> = est.records.iter().map(|r| r.m_t).collect();
    let weights: Vec<f64> = est.records.iter().map(|r| r.u01_t).collect();
    match WeightedCdf::new(&samples, &weights) {
        Ok(cdf) => {
            let clamped = !(0.0..=1.0).contains(&theta);
            let theta = if theta.is_nan() { 1.0 } else { theta.clamp(0.0, 1.0) };
            Ok(ConfidenceInterval {
                includes_zero,
                includes_one,
                inner: Some(cdf.inner_interval(theta)),
                case_id,
                theta_used: Some(theta),
                alpha,
                theta_clamped: clamped,
                fell_through_from: None,
            })
        }
        Err(ConfintError::AllWeightsZero) => {
            let fallback = match case_id {
                5 => 1,
                6 => 2,
                _ => 4,
            };
            let (includes_zero, includes_one) = barrier_parts(fallback);
            Ok(ConfidenceInterval {
                includes_zero,
                includes_one,
                inner: None,
                case_id: fallback,
                theta_used: None,
                alpha,
                theta_clamped: false,
                fell_through_from: Some(case_id),
            })
        }
        Err(e) => Err(e),
    }
}
