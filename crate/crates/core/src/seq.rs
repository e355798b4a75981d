//! Reinforcement sequences `(r_n)` and the derived series the dynamics and
//! the estimators consume: partial sums, memory products, tail sums of
//! squares and the urn weights `(α_n, s_n)`.
//!
//! Every family is capped: `r_n = min(raw_n, cap)` with `cap < 1`, so the
//! dynamics stay well defined even when the raw formula exceeds one at small
//! `n` (e.g. `1/(0.1 + n)^0.75` at `n = 0`). The number of capped terms is
//! exposed so reports can disclose it.
//!
//! Memory products are carried in log space, `Σ log1p(-r_k)`. For very long
//! horizons `memory_product` may underflow to `0.0`; consumers treat `0.0`
//! as "below representable", never as an exact barrier.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CAP: f64 = 0.99;
pub const DEFAULT_HORIZON: usize = 100_000;
pub const DEFAULT_TAIL_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeqError {
    #[error("invalid sequence parameter: {0}")]
    InvalidParameter(String),
    #[error("custom sequence has no declared asymptotic family")]
    UnknownTail,
    #[error("partial sum is zero at n = {0}")]
    ZeroDenominator(usize),
}

/// Closed-form families usable as the whole sequence or as the declared tail
/// of a custom table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TailFamily {
    /// `raw_n = c / (b + n)^gamma`.
    PowerLaw { c: f64, gamma: f64, b: f64 },
    Constant { r: f64 },
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    PowerLaw {
        c: f64,
        gamma: f64,
        b: f64,
    },
    Constant {
        r: f64,
    },
    Zero,
    /// Explicit values for `n < table.len()`. Beyond the table the declared
    /// `tail` family supplies the values; with no declared tail the last
    /// table value is held and every asymptotic operation refuses.
    Custom {
        table: Vec<f64>,
        #[serde(default)]
        tail: Option<TailFamily>,
    },
}

impl From<TailFamily> for Family {
    fn from(t: TailFamily) -> Self {
        match t {
            TailFamily::PowerLaw { c, gamma, b } => Family::PowerLaw { c, gamma, b },
            TailFamily::Constant { r } => Family::Constant { r },
            TailFamily::Zero => Family::Zero,
        }
    }
}

impl TailFamily {
    fn raw(&self, n: usize) -> f64 {
        match *self {
            TailFamily::PowerLaw { c, gamma, b } => c / (b + n as f64).powf(gamma),
            TailFamily::Constant { r } => r,
            TailFamily::Zero => 0.0,
        }
    }

    fn validate(&self) -> Result<(), SeqError> {
        match *self {
            TailFamily::PowerLaw { c, gamma, b } => {
                if !(c.is_finite() && c > 0.0) {
                    return Err(SeqError::InvalidParameter(format!("c must be > 0, got {c}")));
                }
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(SeqError::InvalidParameter(format!(
                        "gamma must be > 0, got {gamma}"
                    )));
                }
                if !(b.is_finite() && b > 0.0) {
                    return Err(SeqError::InvalidParameter(format!("b must be > 0, got {b}")));
                }
            }
            TailFamily::Constant { r } => {
                if !(0.0..1.0).contains(&r) {
                    return Err(SeqError::InvalidParameter(format!(
                        "constant r must lie in [0, 1), got {r}"
                    )));
                }
            }
            TailFamily::Zero => {}
        }
        Ok(())
    }
}

/// Serializable description of a sequence: family, cap and the horizon up to
/// which prefix tables are precomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_cap() -> f64 {
    DEFAULT_CAP
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

impl SequenceSpec {
    pub fn new(family: Family) -> Self {
        SequenceSpec {
            family,
            cap: DEFAULT_CAP,
            horizon: DEFAULT_HORIZON,
        }
    }

    pub fn power_law(c: f64, gamma: f64, b: f64) -> Self {
        Self::new(Family::PowerLaw { c, gamma, b })
    }

    pub fn constant(r: f64) -> Self {
        Self::new(Family::Constant { r })
    }

    pub fn zero() -> Self {
        Self::new(Family::Zero)
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn build(&self) -> Result<ReinforcementSequence, SeqError> {
        ReinforcementSequence::new(self.clone())
    }
}

/// Result of a tail sum that may diverge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailSum {
    Finite(f64),
    Divergent,
}

impl TailSum {
    pub fn finite(self) -> Option<f64> {
        match self {
            TailSum::Finite(x) => Some(x),
            TailSum::Divergent => None,
        }
    }
}

/// Asymptotic description used by bounds that need closed forms: from index
/// `start` on, `r_k = family.raw(k)` exactly (no capping, no table).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailModel {
    pub family: TailFamily,
    pub start: usize,
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// A validated reinforcement sequence with memoized prefix tables.
#[derive(Debug, Clone)]
pub struct ReinforcementSequence {
    spec: SequenceSpec,
    values: Vec<f64>,
    partial: Vec<f64>,
    log_memory: Vec<f64>,
    capped_terms: usize,
}

impl ReinforcementSequence {
    pub fn new(spec: SequenceSpec) -> Result<Self, SeqError> {
        if !(spec.cap > 0.0 && spec.cap < 1.0) {
            return Err(SeqError::InvalidParameter(format!(
                "cap must lie in (0, 1), got {}",
                spec.cap
            )));
        }
        match &spec.family {
            Family::PowerLaw { c, gamma, b } => TailFamily::PowerLaw {
                c: *c,
                gamma: *gamma,
                b: *b,
            }
            .validate()?,
            Family::Constant { r } => TailFamily::Constant { r: *r }.validate()?,
            Family::Zero => {}
            Family::Custom { table, tail } => {
                if table.is_empty() && tail.is_none() {
                    return Err(SeqError::InvalidParameter(
                        "custom sequence needs a table or a declared tail".into(),
                    ));
                }
                if let Some((i, x)) = table
                    .iter()
                    .enumerate()
                    .find(|(_, x)| !(x.is_finite() && **x >= 0.0 && **x < 1.0))
                {
                    return Err(SeqError::InvalidParameter(format!(
                        "custom value r[{i}] = {x} outside [0, 1)"
                    )));
                }
                if let Some(t) = tail {
                    t.validate()?;
                }
            }
        }
        let mut seq = ReinforcementSequence {
            spec,
            values: Vec::new(),
            partial: Vec::new(),
            log_memory: Vec::new(),
            capped_terms: 0,
        };
        let horizon = seq.spec.horizon;
        seq.values = (0..=horizon).map(|n| seq.compute(n)).collect();
        let mut s = KahanSum::default();
        let mut lp = KahanSum::default();
        seq.partial = Vec::with_capacity(horizon + 1);
        seq.log_memory = Vec::with_capacity(horizon + 1);
        for &r in &seq.values {
            s.add(r);
            lp.add((-r).ln_1p());
            seq.partial.push(s.value());
            seq.log_memory.push(lp.value());
        }
        seq.capped_terms = seq.count_capped();
        Ok(seq)
    }

    pub fn spec(&self) -> &SequenceSpec {
        &self.spec
    }

    pub fn family(&self) -> &Family {
        &self.spec.family
    }

    pub fn cap(&self) -> f64 {
        self.spec.cap
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    /// Number of indices where the raw value exceeded the cap.
    pub fn capped_terms(&self) -> usize {
        self.capped_terms
    }

    fn raw_uncapped(&self, n: usize) -> f64 {
        match &self.spec.family {
            Family::PowerLaw { c, gamma, b } => c / (b + n as f64).powf(*gamma),
            Family::Constant { r } => *r,
            Family::Zero => 0.0,
            Family::Custom { table, tail } => {
                if n < table.len() {
                    table[n]
                } else if let Some(t) = tail {
                    t.raw(n)
                } else {
                    *table.last().expect("validated non-empty")
                }
            }
        }
    }

    /// The value before capping.
    pub fn raw(&self, n: usize) -> f64 {
        self.raw_uncapped(n)
    }

    fn compute(&self, n: usize) -> f64 {
        self.raw_uncapped(n).min(self.spec.cap)
    }

    fn count_capped(&self) -> usize {
        let cap = self.spec.cap;
        match &self.spec.family {
            Family::PowerLaw { c, gamma, b } => {
                // raw is decreasing; raw(n) > cap iff b + n < (c/cap)^(1/γ).
                let bound = (c / cap).powf(1.0 / gamma) - b;
                if bound <= 0.0 {
                    0
                } else {
                    let mut k = bound.ceil() as usize;
                    while k > 0 && self.raw_uncapped(k - 1) <= cap {
                        k -= 1;
                    }
                    while self.raw_uncapped(k) > cap {
                        k += 1;
                    }
                    k
                }
            }
            Family::Constant { r } => {
                if *r > cap {
                    usize::MAX
                } else {
                    0
                }
            }
            Family::Zero => 0,
            Family::Custom { table, tail } => {
                let in_table = table.iter().filter(|&&x| x > cap).count();
                let tail_capped = match tail {
                    Some(t @ TailFamily::PowerLaw { .. }) => {
                        let mut k = table.len();
                        let mut extra = 0;
                        while t.raw(k) > cap {
                            k += 1;
                            extra += 1;
                        }
                        extra
                    }
                    Some(TailFamily::Constant { r }) if *r > cap => usize::MAX,
                    _ => 0,
                };
                in_table.saturating_add(tail_capped)
            }
        }
    }

    /// `r_n = min(raw_n, cap)`, always in `[0, 1)`.
    #[inline]
    pub fn r(&self, n: usize) -> f64 {
        match self.values.get(n) {
            Some(&x) => x,
            None => self.compute(n),
        }
    }

    /// The precomputed values `r_0..=r_horizon`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Σ_{k=0}^{n} r_k`.
    pub fn partial_sum(&self, n: usize) -> f64 {
        if let Some(&s) = self.partial.get(n) {
            return s;
        }
        let h = self.spec.horizon;
        let mut acc = KahanSum::default();
        acc.add(self.partial[h]);
        for k in h + 1..=n {
            acc.add(self.compute(k));
        }
        acc.value()
    }

    /// `Σ_{k=0}^{n} ln(1 - r_k)`.
    pub fn log_memory_product(&self, n: usize) -> f64 {
        if let Some(&s) = self.log_memory.get(n) {
            return s;
        }
        let h = self.spec.horizon;
        let mut acc = KahanSum::default();
        acc.add(self.log_memory[h]);
        for k in h + 1..=n {
            acc.add((-self.compute(k)).ln_1p());
        }
        acc.value()
    }

    /// `Π_{k=0}^{n} (1 - r_k)`; may underflow to `0.0` for huge `n`.
    pub fn memory_product(&self, n: usize) -> f64 {
        self.log_memory_product(n).exp()
    }

    /// `Σ_{k=from}^{to-1} ln(1 - r_k)`, zero when `to <= from`.
    pub fn log_memory_between(&self, from: usize, to: usize) -> f64 {
        if to <= from {
            return 0.0;
        }
        let upper = self.log_memory_product(to - 1);
        let lower = if from == 0 {
            0.0
        } else {
            self.log_memory_product(from - 1)
        };
        upper - lower
    }

    /// Where the sequence follows a closed-form family exactly, and from
    /// which index. `None` for custom tables without a declared tail.
    pub fn tail_model(&self) -> Option<TailModel> {
        let family = match &self.spec.family {
            Family::PowerLaw { c, gamma, b } => TailFamily::PowerLaw {
                c: *c,
                gamma: *gamma,
                b: *b,
            },
            Family::Constant { r } => TailFamily::Constant { r: *r },
            Family::Zero => TailFamily::Zero,
            Family::Custom { tail, .. } => (*tail)?,
        };
        let table_len = match &self.spec.family {
            Family::Custom { table, .. } => table.len(),
            _ => 0,
        };
        let mut start = table_len;
        if let TailFamily::Constant { r } = family {
            if r > self.spec.cap {
                // Capped forever: the sequence is the constant `cap`.
                return Some(TailModel {
                    family: TailFamily::Constant { r: self.spec.cap },
                    start,
                });
            }
        }
        while family.raw(start) > self.spec.cap {
            start += 1;
        }
        Some(TailModel { family, start })
    }

    fn require_tail(&self) -> Result<TailModel, SeqError> {
        self.tail_model().ok_or(SeqError::UnknownTail)
    }

    /// Whether `Σ r_n` diverges.
    pub fn sum_diverges(&self) -> Result<bool, SeqError> {
        Ok(match self.require_tail()?.family {
            TailFamily::PowerLaw { gamma, .. } => gamma <= 1.0,
            TailFamily::Constant { r } => r > 0.0,
            TailFamily::Zero => false,
        })
    }

    /// Whether `Σ r_n (1 - r_n)` diverges. With `r_n <= cap < 1` this is
    /// equivalent to divergence of `Σ r_n`.
    pub fn sum_r_one_minus_r_diverges(&self) -> Result<bool, SeqError> {
        self.sum_diverges()
    }

    /// Whether `Σ r_n²` diverges.
    pub fn sq_sum_diverges(&self) -> Result<bool, SeqError> {
        Ok(match self.require_tail()?.family {
            TailFamily::PowerLaw { gamma, .. } => 2.0 * gamma <= 1.0,
            TailFamily::Constant { r } => r > 0.0,
            TailFamily::Zero => false,
        })
    }

    /// Whether `Σ_n Π_{k<=n} (1 - r_k)` diverges.
    pub fn memory_sum_diverges(&self) -> Result<bool, SeqError> {
        Ok(match self.require_tail()?.family {
            TailFamily::PowerLaw { c, gamma, .. } => {
                if gamma < 1.0 {
                    false
                } else if gamma == 1.0 {
                    c <= 1.0
                } else {
                    true
                }
            }
            TailFamily::Constant { r } => r == 0.0,
            TailFamily::Zero => true,
        })
    }

    /// `Σ_{k=n}^{∞} r_k²` with relative error at most `rel_tol`.
    ///
    /// Power-law tails are summed directly up to an index `M` and the
    /// remainder is bracketed by the trapezoid sandwich
    /// `∫_M^∞ f + f(M)/2 + E`, `E ∈ [-f'(M+1)/12, (f''(M) - f'(M))/12]`,
    /// valid because `f(x) = c²(b+x)^{-2γ}` is completely monotone.
    pub fn tail_sq_sum(&self, n: usize, rel_tol: f64) -> Result<TailSum, SeqError> {
        if !(rel_tol > 0.0) {
            return Err(SeqError::InvalidParameter(format!(
                "rel_tol must be > 0, got {rel_tol}"
            )));
        }
        let model = self.require_tail()?;
        let start = model.start.max(n);
        let mut head = KahanSum::default();
        for k in (n..start).rev() {
            let r = self.r(k);
            head.add(r * r);
        }
        let rest = match model.family {
            TailFamily::Zero => 0.0,
            TailFamily::Constant { r } => {
                if r == 0.0 {
                    0.0
                } else {
                    return Ok(TailSum::Divergent);
                }
            }
            TailFamily::PowerLaw { c, gamma, b } => {
                if 2.0 * gamma <= 1.0 {
                    return Ok(TailSum::Divergent);
                }
                power_law_sq_tail(c, gamma, b, start, head.value(), rel_tol)
            }
        };
        head.add(rest);
        Ok(TailSum::Finite(head.value()))
    }

    /// Urn weights from the closed form: `s_n = s0 / Π_{k<n}(1 - r_k)` and
    /// `α_n = s_n r_{n-1}`.
    pub fn urn_weights(&self, s0: f64, n: usize) -> Result<(f64, f64), SeqError> {
        if !(s0 > 0.0) {
            return Err(SeqError::InvalidParameter(format!("s0 must be > 0, got {s0}")));
        }
        if n == 0 {
            return Err(SeqError::InvalidParameter("urn weights start at n = 1".into()));
        }
        let s_n = s0 * (-self.log_memory_product(n - 1)).exp();
        Ok((s_n * self.r(n - 1), s_n))
    }

    /// The urn weights produced by the recursion `α_{n+1} = s_n r_n/(1 - r_n)`,
    /// `s_{n+1} = s_n + α_{n+1}`, yielding `(α_n, s_n)` for `n = 1, 2, ...`.
    pub fn urn_recursion(&self, s0: f64) -> UrnRecursion<'_> {
        UrnRecursion {
            seq: self,
            n: 0,
            s: s0,
        }
    }

    /// `r_n / (exp(-S_n) S_n)` with `S_n = Σ_{k<=n} r_k`; bounded in `n`
    /// exactly when the "negligible polarization" growth condition holds.
    pub fn cond_zero_ratio(&self, n: usize) -> Result<f64, SeqError> {
        let s = self.partial_sum(n);
        if s <= 0.0 {
            return Err(SeqError::ZeroDenominator(n));
        }
        let r = self.r(n);
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok((r.ln() + s - s.ln()).exp())
    }
}

fn power_law_sq_tail(c: f64, gamma: f64, b: f64, start: usize, head: f64, rel_tol: f64) -> f64 {
    let p = 2.0 * gamma;
    let c2 = c * c;
    let f = |x: f64| c2 * (b + x).powf(-p);
    let df = |x: f64| -p * c2 * (b + x).powf(-p - 1.0);
    let d2f = |x: f64| p * (p + 1.0) * c2 * (b + x).powf(-p - 2.0);
    let integral = |x: f64| c2 * (b + x).powf(1.0 - p) / (p - 1.0);
    let remainder = |m: usize| {
        let x = m as f64;
        let lo = integral(x) + f(x) / 2.0 - df(x + 1.0) / 12.0;
        let hi = integral(x) + f(x) / 2.0 + (d2f(x) - df(x)) / 12.0;
        (lo, hi)
    };
    let mut m = start.max(1);
    loop {
        let (lo, hi) = remainder(m);
        if (hi - lo) / 2.0 <= rel_tol * (head + lo) || m > (1usize << 40) {
            break;
        }
        m = m.saturating_mul(2);
    }
    let mut direct = KahanSum::default();
    for k in (start..m).rev() {
        let r = c / (b + k as f64).powf(gamma);
        direct.add(r * r);
    }
    let (lo, hi) = remainder(m);
    direct.add(0.5 * (lo + hi));
    direct.value()
}

pub struct UrnRecursion<'a> {
    seq: &'a ReinforcementSequence,
    n: usize,
    s: f64,
}

impl Iterator for UrnRecursion<'_> {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        let r = self.seq.r(self.n);
        let alpha = self.s * r / (1.0 - r);
        self.s += alpha;
        self.n += 1;
        Some((alpha, self.s))
    }
}
