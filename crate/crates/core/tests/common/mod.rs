#![allow(dead_code)]

use rspnet::netgraph::{mean_field, validate_matrix, ValidatedMatrix, DEFAULT_COLUMN_TOL};
use rspnet::{ReinforcementSequence, SequenceSpec};

/// Double-double number `hi + lo` with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn add_f(self, x: f64) -> Dd {
        self.add(Dd::from(x))
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn mul_f(self, x: f64) -> Dd {
        self.mul(Dd::from(x))
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// `1 - x` for `x` in double-double.
pub fn one_minus(x: f64) -> Dd {
    Dd::ONE.add(Dd::from(-x))
}

/// Neumaier summation, independent of the crate's accumulator.
pub fn neumaier<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in it {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn mf3() -> ValidatedMatrix {
    validate_matrix(&mean_field(3), DEFAULT_COLUMN_TOL).unwrap()
}

pub fn fig1() -> ReinforcementSequence {
    SequenceSpec::power_law(1.0, 0.75, 0.1).build().unwrap()
}

/// The capped c = 1, gamma = 0.75, b = 0.1 sequence evaluated independently.
pub fn fig1_r(k: usize) -> f64 {
    (1.0 / (0.1 + k as f64).powf(0.75)).min(0.99)
}
