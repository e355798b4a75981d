//! Barrier bounds, Monte Carlo estimates of the polarization probabilities
//! and the certified fixation lower bound.
//!
//! For the martingale `M = Z̃`, `P(M_∞ = 0 | F_t) <= exp(-2 M_t² / Σ_{k>=t} r_k²)`
//! and symmetrically for the barrier 1. Averaging these bounds over `K`
//! simulated continuations from an observed snapshot gives the estimators
//! `U'_0`, `U'_1` and `U'_(0,1) = 1 - U'_0 - U'_1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::netgraph::ValidatedMatrix;
use crate::rspsim::{continue_batch, Barrier, Kernel, NetworkSnapshot, SimError};
use crate::seq::{ReinforcementSequence, SeqError, TailFamily, TailSum, DEFAULT_TAIL_REL_TOL};
use crate::streams::SeedKey;

pub const DEFAULT_TRUNC_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_RECORDS: usize = 1_000_000;
pub const DEFAULT_MAX_TERMS: usize = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("negative tail sum {0}")]
    NegativeTail(f64),
    #[error("mean {0} outside [0, 1]")]
    InvalidMean(f64),
    #[error("the tail sum of r_n^2 diverges")]
    DivergentTail,
    #[error("sequence has no declared asymptotics")]
    UnknownTail,
    #[error("horizon {t} is not after snapshot step {step}")]
    InvalidHorizon { t: usize, step: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sum of memory products diverges: the fixation bound does not apply")]
    DivergentMemory,
    #[error("snapshot is not interior (z_tilde = {0})")]
    NotInterior(f64),
    #[error("{requested} records exceed the limit of {limit}")]
    TooManyRecords { requested: usize, limit: usize },
}

impl From<SeqError> for EstimateError {
    fn from(e: SeqError) -> Self {
        match e {
            SeqError::UnknownTail => EstimateError::UnknownTail,
            other => EstimateError::InvalidParameter(other.to_string()),
        }
    }
}

impl From<SimError> for EstimateError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::HorizonNotAfterSnapshot { t, step } => EstimateError::InvalidHorizon { t, step },
            other => EstimateError::InvalidParameter(other.to_string()),
        }
    }
}

/// `(exp(-2m²/tail), exp(-2(1-m)²/tail))`, with `m = 0` giving `u0 = 1`
/// and `tail = 0` giving the limits `0` (for `m > 0`) and `1` (for `m = 0`).
pub fn hoeffding_bounds(m: f64, tail: f64) -> Result<(f64, f64), EstimateError> {
    if !(0.0..=1.0).contains(&m) {
        return Err(EstimateError::InvalidMean(m));
    }
    if tail < 0.0 || tail.is_nan() {
        return Err(EstimateError::NegativeTail(tail));
    }
    let one = |d: f64| {
        if d == 0.0 {
            1.0
        } else if tail == 0.0 {
            0.0
        } else {
            (-2.0 * d * d / tail).exp()
        }
    };
    Ok((one(m), one(1.0 - m)))
}

/// `2η² / ln(1/ε)`.
pub fn horizon_threshold(eta: f64, eps: f64) -> f64 {
    2.0 * eta * eta / (1.0 / eps).ln()
}

/// Smallest `t` with `Σ_{k>=t} r_k² < 2η²/ln(1/ε)`.
pub fn min_horizon(seq: &ReinforcementSequence, eta: f64, eps: f64) -> Result<usize, EstimateError> {
    if !(eta > 0.0) {
        return Err(EstimateError::InvalidParameter(format!("eta must be > 0, got {eta}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(EstimateError::InvalidParameter(format!(
            "eps must lie in (0, 1), got {eps}"
        )));
    }
    let threshold = horizon_threshold(eta, eps);
    let tail = |t: usize| -> Result<f64, EstimateError> {
        match seq.tail_sq_sum(t, DEFAULT_TAIL_REL_TOL)? {
            TailSum::Finite(x) => Ok(x),
            TailSum::Divergent => Err(EstimateError::DivergentTail),
        }
    };
    if tail(0)? < threshold {
        return Ok(0);
    }
    let mut hi = 1usize;
    while tail(hi)? >= threshold {
        search_guard(hi)?;
        hi *= 2;
    }
    let mut lo = hi / 2;
    // tail(lo) >= threshold > tail(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if tail(mid)? < threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn search_guard(t: usize) -> Result<(), EstimateError> {
    if t > (1usize << 50) {
        return Err(EstimateError::InvalidParameter(
            "tail never drops below the threshold".into(),
        ));
    }
    Ok(())
}

/// Per-continuation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub m_t: f64,
    pub u0_t: f64,
    pub u1_t: f64,
    pub u01_t: f64,
}

impl ReplicationRecord {
    pub fn from_bounds(m_t: f64, u0_t: f64, u1_t: f64) -> Self {
        ReplicationRecord {
            m_t,
            u0_t,
            u1_t,
            u01_t: (1.0 - u0_t - u1_t).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationEstimate {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub u0: f64,
    pub u1: f64,
    pub u01: f64,
    /// The averaged bounds summed above one and were rescaled.
    pub normalized: bool,
    pub records: Vec<ReplicationRecord>,
    pub seed: Option<SeedKey>,
}

impl PolarizationEstimate {
    /// Averages `records` in order. When the averages of `u0_t` and `u1_t`
    /// sum above one (as seen by `1 - u0 - u1 < 0`) they are rescaled to sum to one and `u01` is set to 0.
    pub fn from_records(
        n: usize,
        t: usize,
        records: Vec<ReplicationRecord>,
        seed: Option<SeedKey>,
    ) -> Result<PolarizationEstimate, EstimateError> {
        if records.is_empty() {
            return Err(EstimateError::InvalidParameter("no replication records".into()));
        }
        let k = records.len();
        let (mut s0, mut s1) = (0.0, 0.0);
        for r in &records {
            s0 += r.u0_t;
            s1 += r.u1_t;
        }
        let (mut u0, mut u1) = (s0 / k as f64, s1 / k as f64);
        let mut normalized = false;
        let u01 = if 1.0 - u0 - u1 < 0.0 {
            let s = u0 + u1;
            u0 /= s;
            u1 = 1.0 - u0;
            normalized = true;
            0.0
        } else {
            1.0 - u0 - u1
        };
        Ok(PolarizationEstimate {
            n,
            t,
            k,
            u0,
            u1,
            u01,
            normalized,
            records,
            seed,
        })
    }
}

/// Monte Carlo estimate from `k` continuations of `snapshot` to time `t`;
/// continuation `j` runs on `key.rng(j)`.
#[allow(clippy::too_many_arguments)]
pub fn mc_estimate(
    snapshot: &NetworkSnapshot,
    matrix: &ValidatedMatrix,
    seq: &ReinforcementSequence,
    t: usize,
    k: usize,
    key: SeedKey,
    exec: Execution,
) -> Result<PolarizationEstimate, EstimateError> {
    let kernel = Kernel::new(matrix, seq);
    mc_estimate_with_kernel(&kernel, snapshot, t, k, key, exec)
}

pub fn mc_estimate_with_kernel(
    kernel: &Kernel<'_>,
    snapshot: &NetworkSnapshot,
    t: usize,
    k: usize,
    key: SeedKey,
    exec: Execution,
) -> Result<PolarizationEstimate, EstimateError> {
    if k == 0 {
        return Err(EstimateError::InvalidParameter("K must be >= 1".into()));
    }
    if k > DEFAULT_MAX_RECORDS {
        return Err(EstimateError::TooManyRecords {
            requested: k,
            limit: DEFAULT_MAX_RECORDS,
        });
    }
    if t <= snapshot.step {
        return Err(EstimateError::InvalidHorizon {
            t,
            step: snapshot.step,
        });
    }
    let tail = match kernel.seq().tail_sq_sum(t, DEFAULT_TAIL_REL_TOL)? {
        TailSum::Finite(x) => x,
        TailSum::Divergent => return Err(EstimateError::DivergentTail),
    };
    let ends = continue_batch(kernel, snapshot, t, key, k, exec)?;
    let records = ends
        .iter()
        .map(|s| {
            let (u0, u1) = hoeffding_bounds(s.z_tilde, tail)?;
            Ok(ReplicationRecord::from_bounds(s.z_tilde, u0, u1))
        })
        .collect::<Result<Vec<_>, EstimateError>>()?;
    PolarizationEstimate::from_records(snapshot.step, t, records, Some(key))
}

/// `J(a) = Σ_{m>=a} Π_{k=a}^{m-1} (1 - r_k)` bracketed from closed forms of
/// the tail family. `None` when the bracket is not yet valid at `a`.
fn memory_tail_bracket(family: TailFamily, a: usize) -> Option<(f64, f64)> {
    match family {
        TailFamily::Zero => None,
        TailFamily::Constant { r } => {
            if r > 0.0 {
                Some((1.0 / r, 1.0 / r))
            } else {
                None
            }
        }
        TailFamily::PowerLaw { c, gamma, b } => {
            if a == 0 {
                return None;
            }
            let r_a = c / (b + a as f64).powf(gamma);
            if r_a >= 1.0 {
                return None;
            }
            if gamma == 1.0 {
                // Π_{k=a}^{m-1} (1 - c/(b+k)) is a Gamma ratio and the sum
                // telescopes to (b + a - 1)/(c - 1).
                if c <= 1.0 {
                    return None;
                }
                let j = (b + a as f64 - 1.0) / (c - 1.0);
                return Some((j, j));
            }
            let lambda_low = 1.0 / (1.0 - r_a);
            // Upper: Π <= exp(-∫_a^m f), sum <= 1 + I(a, 1).
            // Lower: Π >= exp(-λ ∫_{a-1}^{m-1} f), sum >= I(a - 1, λ).
            let up = 1.0 + integral_envelope(c, gamma, b, a as f64, 1.0)?.1;
            let low = integral_envelope(c, gamma, b, a as f64 - 1.0, lambda_low)?.0;
            Some((low, up))
        }
    }
}

/// Bracket of `I(u, λ) = ∫_u^∞ exp(-λ ∫_u^y c/(b+x)^γ dx) dy`.
fn integral_envelope(c: f64, gamma: f64, b: f64, u: f64, lambda: f64) -> Option<(f64, f64)> {
    let lc = lambda * c;
    if gamma == 1.0 {
        if lc <= 1.0 {
            return None;
        }
        let v = (b + u) / (lc - 1.0);
        return Some((v, v));
    }
    if gamma > 1.0 {
        return None;
    }
    let beta = 1.0 - gamma;
    let w0 = (b + u).powf(beta);
    let a_coef = lc / beta;
    let p = gamma / beta;
    let ratio = p / (a_coef * w0);
    if ratio >= 1.0 {
        return None;
    }
    let base = w0.powf(p) / lc;
    let low = if p >= 1.0 { base * (1.0 + ratio) } else { base };
    let up = base / (1.0 - ratio);
    Some((low, up))
}

/// Certified lower bound on `P(Z̃_∞ = barrier | F_s)` at the snapshot step
/// `s`:
///
/// `Π_{n>=s} (1 - min(M Π_{k=s}^{n-1}(1 - r_k) / v_min, 1))`
///
/// with `M = Z̃_s` for the barrier 0 and `M = 1 - Z̃_s` for the barrier 1.
/// The product is evaluated directly until the closed-form bracket on the
/// remaining factor is narrower than `trunc_tol`; the lower end of that
/// bracket is always applied. The truncation point does not depend on `M`,
/// so the bound is monotone in `M`.
///
/// This is a rigorous but non-consistent bound: it does not converge to the
/// true probability as data accrue.
pub fn fixation_lower_bound(
    snapshot: &NetworkSnapshot,
    seq: &ReinforcementSequence,
    v_min: f64,
    barrier: Barrier,
    trunc_tol: f64,
) -> Result<f64, EstimateError> {
    fixation_lower_bound_capped(snapshot, seq, v_min, barrier, trunc_tol, DEFAULT_MAX_TERMS)
}

pub fn fixation_lower_bound_capped(
    snapshot: &NetworkSnapshot,
    seq: &ReinforcementSequence,
    v_min: f64,
    barrier: Barrier,
    trunc_tol: f64,
    max_terms: usize,
) -> Result<f64, EstimateError> {
    if !(v_min > 0.0 && v_min <= 1.0) {
        return Err(EstimateError::InvalidParameter(format!(
            "v_min must lie in (0, 1], got {v_min}"
        )));
    }
    if !(trunc_tol > 0.0) {
        return Err(EstimateError::InvalidParameter(format!(
            "trunc_tol must be > 0, got {trunc_tol}"
        )));
    }
    let zt = snapshot.z_tilde;
    if !(zt > 0.0 && zt < 1.0) {
        return Err(EstimateError::NotInterior(zt));
    }
    let model = seq.tail_model().ok_or(EstimateError::UnknownTail)?;
    if seq.memory_sum_diverges()? {
        return Err(EstimateError::DivergentMemory);
    }
    let m = match barrier {
        Barrier::Zero => zt,
        Barrier::One => 1.0 - zt,
    };
    let scale = m / v_min;
    let ref_scale = 1.0 / v_min;
    let s = snapshot.step;
    let mut log_lb = 0.0f64;
    let mut log_q = 0.0f64;
    let mut n = s;
    let mut next_check = s;
    loop {
        let q = log_q.exp();
        let x_ref = ref_scale * q;
        if n >= next_check && n >= model.start && x_ref < 1.0 {
            if let Some((j_low, j_up)) = memory_tail_bracket(model.family, n) {
                // Remaining factor F = Π_{m>=n} (1 - x_m), x_m <= x_n < 1:
                // ln F ∈ [-T_up/(1 - x_n), -T_low], T = scale q J(n).
                let width_ref = ref_scale * q * (j_up / (1.0 - x_ref) - j_low);
                if width_ref < trunc_tol || n - s >= max_terms {
                    let x = scale * q;
                    let lo = -scale * q * j_up / (1.0 - x);
                    return Ok((log_lb + lo).exp());
                }
            }
            next_check = n + ((n - s) / 8).max(64);
        }
        if n - s >= max_terms.saturating_mul(2) {
            return Err(EstimateError::InvalidParameter(
                "fixation bound did not reach its truncation point".into(),
            ));
        }
        let x = scale * q;
        if x >= 1.0 {
            return Ok(0.0);
        }
        log_lb += (-x).ln_1p();
        log_q += (-seq.r(n)).ln_1p();
        n += 1;
    }
}
