//! Analytic classification of the polarization regime.
//!
//! Verdicts depend only on the sequence family and the matrix metadata.
//! The numeric series tables in [`diagnose_conditions`] accompany a verdict
//! but never override it: a finite scan cannot decide convergence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgraph::ValidatedMatrix;
use crate::rspsim::z_weights;
use crate::seq::{Family, KahanSum, ReinforcementSequence, SeqError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegimeError {
    #[error("sequence family has no declared asymptotics")]
    UnknownFamily,
    #[error("gamma = {0} is outside the classification table (needs gamma > 0)")]
    OutOfTable(f64),
    #[error("initial mean has {got} components, matrix has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("initial mean component {0} outside [0, 1]")]
    InvalidInitialMean(f64),
}

impl From<SeqError> for RegimeError {
    fn from(_: SeqError) -> Self {
        RegimeError::UnknownFamily
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Synchronization {
    GuaranteedAperiodic,
    GuaranteedPeriodicCondition,
    NotGuaranteed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarizationClass {
    /// `P(Z_∞ ∈ {0, 1}) = 0`.
    Zero,
    /// Both barriers and the interior have positive probability.
    InteriorPositiveBothBarriers,
    /// `P(Z_∞ ∈ {0, 1}) = 1`.
    AlmostSure,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub synchronization: Synchronization,
    pub polarization_class: PolarizationClass,
    pub p_one_if_almost_sure: Option<f64>,
    /// `Some(true)` when the interior limit law is known to be atomless;
    /// `None` when no sufficient condition applies.
    pub atomless_interior: Option<bool>,
    pub notes: Vec<String>,
}

/// Synchronization guarantee from aperiodicity and divergence of `Σ r_n`
/// or `Σ r_n (1 - r_n)`.
pub fn check_synchronization(
    aperiodic: bool,
    seq: &ReinforcementSequence,
) -> Result<Synchronization, RegimeError> {
    let sum = seq.sum_diverges()?;
    let sum_var = seq.sum_r_one_minus_r_diverges()?;
    Ok(if aperiodic && sum {
        Synchronization::GuaranteedAperiodic
    } else if sum_var {
        Synchronization::GuaranteedPeriodicCondition
    } else {
        Synchronization::NotGuaranteed
    })
}

/// The `(c, γ)` table for `r_n ~ c n^{-γ}`.
pub fn classify_power_law(c: f64, gamma: f64) -> Result<PolarizationClass, RegimeError> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(RegimeError::OutOfTable(gamma));
    }
    Ok(if gamma > 1.0 {
        PolarizationClass::Zero
    } else if gamma == 1.0 {
        if c <= 1.0 {
            PolarizationClass::Zero
        } else {
            PolarizationClass::InteriorPositiveBothBarriers
        }
    } else if gamma > 0.5 {
        PolarizationClass::InteriorPositiveBothBarriers
    } else {
        PolarizationClass::AlmostSure
    })
}

fn atomless(gamma: f64) -> Option<bool> {
    (gamma > 0.5 && gamma <= 1.0).then_some(true)
}

/// Regime report for `seq` on `matrix` with mean initial condition
/// `z0_mean`.
pub fn classify(
    seq: &ReinforcementSequence,
    z0_mean: &[f64],
    matrix: &ValidatedMatrix,
) -> Result<RegimeReport, RegimeError> {
    if z0_mean.len() != matrix.n_agents() {
        return Err(RegimeError::DimensionMismatch {
            expected: matrix.n_agents(),
            got: z0_mean.len(),
        });
    }
    if let Some(&x) = z0_mean.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(RegimeError::InvalidInitialMean(x));
    }
    let mut notes = Vec::new();
    let synchronization = match check_synchronization(matrix.aperiodic(), seq) {
        Ok(s) => s,
        Err(_) => Synchronization::NotGuaranteed,
    };
    let v = z_weights(matrix);
    let p_one = v
        .iter()
        .zip(z0_mean)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .clamp(0.0, 1.0);

    if !matrix.irreducible() {
        notes.push("interaction matrix is reducible: no common limit is guaranteed".into());
        return Ok(RegimeReport {
            synchronization,
            polarization_class: PolarizationClass::Inconclusive,
            p_one_if_almost_sure: None,
            atomless_interior: None,
            notes,
        });
    }

    let (class, atomless_interior) = match seq.family() {
        Family::PowerLaw { c, gamma, .. } => {
            let class = classify_power_law(*c, *gamma)?;
            notes.push(format!("r_n ~ {c} n^-{gamma}"));
            match class {
                PolarizationClass::Zero if *gamma > 1.0 => {
                    notes.push("sum of r_n converges: the memory product stays positive".into())
                }
                PolarizationClass::Zero => notes.push(
                    "gamma = 1 and c <= 1: r_n = O(exp(-S_n) S_n), polarization negligible".into(),
                ),
                PolarizationClass::InteriorPositiveBothBarriers => notes.push(
                    "sum of memory products converges: fixation on either barrier has positive probability"
                        .into(),
                ),
                PolarizationClass::AlmostSure => notes.push(
                    "sum of r_n^2 diverges: the limit lies on a barrier almost surely".into(),
                ),
                PolarizationClass::Inconclusive => {}
            }
            (class, atomless(*gamma))
        }
        Family::Constant { r } if *r > 0.0 => {
            notes.push("constant r > 0: sum of r_n^2 diverges".into());
            (PolarizationClass::AlmostSure, None)
        }
        Family::Constant { .. } | Family::Zero => {
            notes.push("r_n = 0: the state never moves".into());
            (PolarizationClass::Zero, None)
        }
        Family::Custom { .. } => {
            notes.push("custom sequence: classification needs a convergent perturbation test".into());
            (PolarizationClass::Inconclusive, None)
        }
    };
    if synchronization == Synchronization::NotGuaranteed {
        notes.push("synchronization is not guaranteed".into());
    }
    Ok(RegimeReport {
        synchronization,
        polarization_class: class,
        p_one_if_almost_sure: (class == PolarizationClass::AlmostSure).then_some(p_one),
        atomless_interior,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

impl Verdict {
    fn from_divergence(d: Result<bool, SeqError>) -> Verdict {
        match d {
            Ok(true) => Verdict::Divergent,
            Ok(false) => Verdict::Convergent,
            Err(_) => Verdict::Inconclusive,
        }
    }
}

/// Partial sums of one series at geometric checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTable {
    pub verdict: Verdict,
    /// `(n, Σ_{k<=n} term_k)`.
    pub partial_sums: Vec<(usize, f64)>,
}

impl SeriesTable {
    /// Relative growth between the last two checkpoints.
    pub fn last_relative_change(&self) -> Option<f64> {
        let k = self.partial_sums.len();
        if k < 2 {
            return None;
        }
        let (a, b) = (self.partial_sums[k - 2].1, self.partial_sums[k - 1].1);
        if a == 0.0 {
            return Some(if b == 0.0 { 0.0 } else { f64::INFINITY });
        }
        Some((b - a) / a)
    }

    /// Whether the numeric table agrees with the verdict: convergent series
    /// change by less than 1% over the last interval, divergent ones grow by
    /// more than 10%.
    pub fn consistent(&self) -> Option<bool> {
        let change = self.last_relative_change()?;
        match self.verdict {
            Verdict::Convergent => Some(change < 0.01),
            Verdict::Divergent => Some(change > 0.10),
            Verdict::Inconclusive => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub horizon: usize,
    /// `Σ r_n`.
    pub sum_r: SeriesTable,
    /// `Σ r_n²`.
    pub sum_r_sq: SeriesTable,
    /// `Σ_n Π_{k<=n} (1 - r_k)`.
    pub sum_memory: SeriesTable,
    /// `(n, r_n / (exp(-S_n) S_n))`, skipping points where `S_n = 0`.
    pub cond_zero_ratio: Vec<(usize, f64)>,
    pub cond_zero_ratio_max: Option<f64>,
}

impl ConditionsReport {
    /// The scan bound used for the negligible-polarization condition: the
    /// maximum ratio is at most ten times its value at the first checkpoint.
    pub fn cond_zero_ratio_bounded(&self) -> Option<bool> {
        let first = self.cond_zero_ratio.first()?.1;
        Some(self.cond_zero_ratio_max? <= 10.0 * first)
    }
}

/// Checkpoints `10², 10³, ...` up to `horizon`, plus `horizon` itself.
pub fn geometric_checkpoints(horizon: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut c = 100usize;
    while c <= horizon {
        out.push(c);
        c = match c.checked_mul(10) {
            Some(x) => x,
            None => break,
        };
    }
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

/// Numeric evidence for the series conditions up to `horizon` (at least
/// `10²`), together with the analytic verdicts when the family is known.
pub fn diagnose_conditions(seq: &ReinforcementSequence, horizon: usize) -> ConditionsReport {
    let horizon = horizon.max(100);
    let checkpoints = geometric_checkpoints(horizon);
    let mut s = KahanSum::default();
    let mut sq = KahanSum::default();
    let mut mem = KahanSum::default();
    let mut log_mem = KahanSum::default();
    let (mut t_r, mut t_sq, mut t_mem) = (Vec::new(), Vec::new(), Vec::new());
    let mut ratios = Vec::new();
    let mut ratio_max: Option<f64> = None;
    let mut next = 0;
    for n in 0..=horizon {
        let r = seq.r(n);
        s.add(r);
        sq.add(r * r);
        log_mem.add((-r).ln_1p());
        mem.add(log_mem.value().exp());
        let sn = s.value();
        if n >= checkpoints[0] && sn > 0.0 {
            let ratio = if r == 0.0 {
                0.0
            } else {
                (r.ln() + sn - sn.ln()).exp()
            };
            ratio_max = Some(ratio_max.map_or(ratio, |m: f64| m.max(ratio)));
            if n == checkpoints[next] {
                ratios.push((n, ratio));
            }
        }
        if n == checkpoints[next] {
            t_r.push((n, sn));
            t_sq.push((n, sq.value()));
            t_mem.push((n, mem.value()));
            next += 1;
            if next == checkpoints.len() {
                break;
            }
        }
    }
    ConditionsReport {
        horizon,
        sum_r: SeriesTable {
            verdict: Verdict::from_divergence(seq.sum_diverges()),
            partial_sums: t_r,
        },
        sum_r_sq: SeriesTable {
            verdict: Verdict::from_divergence(seq.sq_sum_diverges()),
            partial_sums: t_sq,
        },
        sum_memory: SeriesTable {
            verdict: Verdict::from_divergence(seq.memory_sum_diverges()),
            partial_sums: t_mem,
        },
        cond_zero_ratio: ratios,
        cond_zero_ratio_max: ratio_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::{mean_field, validate_matrix, DEFAULT_COLUMN_TOL};
    use crate::seq::SequenceSpec;

    fn mf3() -> ValidatedMatrix {
        validate_matrix(&mean_field(3), DEFAULT_COLUMN_TOL).unwrap()
    }

    fn cycle2() -> ValidatedMatrix {
        validate_matrix(&[vec![0.0, 1.0], vec![1.0, 0.0]], DEFAULT_COLUMN_TOL).unwrap()
    }

    #[test]
    fn synchronization_flags() {
        let fig1 = SequenceSpec::power_law(1.0, 0.75, 0.1).build().unwrap();
        assert_eq!(
            check_synchronization(true, &fig1).unwrap(),
            Synchronization::GuaranteedAperiodic
        );
        let half = SequenceSpec::constant(0.5).build().unwrap();
        assert_eq!(
            check_synchronization(false, &half).unwrap(),
            Synchronization::GuaranteedPeriodicCondition
        );
        let zero = SequenceSpec::zero().build().unwrap();
        assert_eq!(
            check_synchronization(false, &zero).unwrap(),
            Synchronization::NotGuaranteed
        );
        let unknown = SequenceSpec::new(Family::Custom {
            table: vec![0.5],
            tail: None,
        })
        .build()
        .unwrap();
        assert_eq!(
            check_synchronization(true, &unknown),
            Err(RegimeError::UnknownFamily)
        );
    }

    #[test]
    fn table_examples() {
        let m = mf3();
        let z0 = [0.5; 3];
        let zero = SequenceSpec::power_law(0.8, 1.0, 1.0).build().unwrap();
        let r = classify(&zero, &z0, &m).unwrap();
        assert_eq!(r.polarization_class, PolarizationClass::Zero);
        assert_eq!(r.atomless_interior, Some(true));
        let interior = SequenceSpec::power_law(1.0, 0.75, 0.1).build().unwrap();
        assert_eq!(
            classify(&interior, &z0, &m).unwrap().polarization_class,
            PolarizationClass::InteriorPositiveBothBarriers
        );
        let as_ = SequenceSpec::power_law(1.0, 0.4, 1.0).build().unwrap();
        let r = classify(&as_, &z0, &m).unwrap();
        assert_eq!(r.polarization_class, PolarizationClass::AlmostSure);
        assert!((r.p_one_if_almost_sure.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.atomless_interior, None);
        assert_eq!(classify_power_law(1.0, 0.0), Err(RegimeError::OutOfTable(0.0)));
        assert_eq!(classify_power_law(1.0, -1.0), Err(RegimeError::OutOfTable(-1.0)));
    }

    #[test]
    fn boundary_c_one_is_zero() {
        assert_eq!(classify_power_law(1.0, 1.0).unwrap(), PolarizationClass::Zero);
        assert_eq!(classify_power_law(1.0 + 1e-12, 1.0).unwrap(),
            PolarizationClass::InteriorPositiveBothBarriers);
        assert_eq!(classify_power_law(3.0, 0.5).unwrap(), PolarizationClass::AlmostSure);
    }

    #[test]
    fn periodic_and_reducible_matrices() {
        let c = SequenceSpec::constant(0.5).build().unwrap();
        let r = classify(&c, &[0.25, 0.75], &cycle2()).unwrap();
        assert_eq!(r.synchronization, Synchronization::GuaranteedPeriodicCondition);
        assert_eq!(r.polarization_class, PolarizationClass::AlmostSure);
        assert!((r.p_one_if_almost_sure.unwrap() - 0.5).abs() < 1e-12);
        let id = validate_matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]], DEFAULT_COLUMN_TOL).unwrap();
        let r = classify(&c, &[0.25, 0.75], &id).unwrap();
        assert_eq!(r.polarization_class, PolarizationClass::Inconclusive);
        assert!(classify(&c, &[0.5], &id).is_err());
    }

    #[test]
    fn diagnose_examples() {
        let fig1 = SequenceSpec::power_law(1.0, 0.75, 0.1).build().unwrap();
        let d = diagnose_conditions(&fig1, 100_000);
        assert_eq!(d.sum_r_sq.verdict, Verdict::Convergent);
        assert_eq!(d.sum_memory.verdict, Verdict::Convergent);
        assert_eq!(d.sum_r.verdict, Verdict::Divergent);
        assert_eq!(d.sum_r.partial_sums.len(), 4);
        let c = SequenceSpec::constant(0.5).build().unwrap();
        let d = diagnose_conditions(&c, 1000);
        assert_eq!(d.sum_r_sq.verdict, Verdict::Divergent);
        assert_eq!(d.sum_memory.verdict, Verdict::Convergent);
        // Σ_{n>=0} 2^{-(n+1)} = 1
        assert!((d.sum_memory.partial_sums.last().unwrap().1 - 1.0).abs() < 1e-12);
        let custom = SequenceSpec::new(Family::Custom {
            table: vec![0.3; 10],
            tail: None,
        })
        .build()
        .unwrap();
        let d = diagnose_conditions(&custom, 100);
        assert_eq!(d.sum_r.verdict, Verdict::Inconclusive);
        assert_eq!(d.sum_r.consistent(), None);
    }

    #[test]
    fn checkpoints() {
        assert_eq!(geometric_checkpoints(100), vec![100]);
        assert_eq!(geometric_checkpoints(5000), vec![100, 1000, 5000]);
        assert_eq!(geometric_checkpoints(10_000), vec![100, 1000, 10_000]);
    }
}
