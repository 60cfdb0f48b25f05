//! Interval arithmetic over exact rationals.

use std::fmt;

use thiserror::Error;

use crate::numeric::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntervalError {
    #[error("empty interval: lower bound {lo} exceeds upper bound {hi}")]
    Empty { lo: Box<Rational>, hi: Box<Rational> },
    #[error("division by an interval containing zero: {0}")]
    DivisionByZero(Box<Interval>),
    #[error("operator needs a second operand")]
    MissingOperand,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
}

/// Closed interval `[lo, hi]` with `lo <= hi`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Interval {
    lo: Rational,
    hi: Rational,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Result<Self, IntervalError> {
        if lo > hi {
            return Err(IntervalError::Empty { lo: Box::new(lo), hi: Box::new(hi) });
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(value: Rational) -> Self {
        Interval { lo: value.clone(), hi: value }
    }

    pub fn lo(&self) -> &Rational {
        &self.lo
    }

    pub fn hi(&self) -> &Rational {
        &self.hi
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains_value(&self, v: &Rational) -> bool {
        &self.lo <= v && v <= &self.hi
    }

    pub fn contains_zero(&self) -> bool {
        !self.lo.is_positive() && !self.hi.is_negative()
    }

    /// Whether `inner` is a subset of `self`.
    pub fn contains(&self, inner: &Interval) -> bool {
        self.lo <= inner.lo && inner.hi <= self.hi
    }

    pub fn max_abs(&self) -> Rational {
        self.lo.abs().max(self.hi.abs())
    }

    /// Smallest magnitude; zero when the interval straddles zero.
    pub fn min_abs(&self) -> Rational {
        if self.contains_zero() {
            Rational::zero()
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    /// Inflates both bounds by `err >= 0`.
    pub fn widen(&self, err: &Rational) -> Interval {
        debug_assert!(!err.is_negative());
        Interval { lo: &self.lo - err, hi: &self.hi + err }
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: (&self.lo).min(&other.lo).clone(), hi: (&self.hi).max(&other.hi).clone() }
    }

    pub fn midpoint(&self) -> Rational {
        (&self.lo + &self.hi) * Rational::new(1, 2).unwrap()
    }

    pub fn radius(&self) -> Rational {
        (&self.hi - &self.lo) * Rational::new(1, 2).unwrap()
    }

    pub fn neg(&self) -> Interval {
        Interval { lo: -&self.hi, hi: -&self.lo }
    }

    pub fn add(&self, other: &Interval) -> Interval {
        Interval { lo: &self.lo + &other.lo, hi: &self.hi + &other.hi }
    }

    pub fn sub(&self, other: &Interval) -> Interval {
        Interval { lo: &self.lo - &other.hi, hi: &self.hi - &other.lo }
    }

    pub fn mul(&self, other: &Interval) -> Interval {
        let products = [&self.lo * &other.lo, &self.lo * &other.hi, &self.hi * &other.lo, &self.hi * &other.hi];
        hull_of(products)
    }

    pub fn recip(&self) -> Result<Interval, IntervalError> {
        if self.contains_zero() {
            return Err(IntervalError::DivisionByZero(Box::new(self.clone())));
        }
        // 1/x is monotone decreasing on each sign-definite half line.
        let lo = self.hi.recip().expect("nonzero");
        let hi = self.lo.recip().expect("nonzero");
        Ok(Interval { lo, hi })
    }

    pub fn div(&self, other: &Interval) -> Result<Interval, IntervalError> {
        Ok(self.mul(&other.recip()?))
    }

    pub fn apply(&self, op: ArithOp, other: Option<&Interval>) -> Result<Interval, IntervalError> {
        let rhs = || other.ok_or(IntervalError::MissingOperand);
        match op {
            ArithOp::Neg => Ok(self.neg()),
            ArithOp::Add => Ok(self.add(rhs()?)),
            ArithOp::Sub => Ok(self.sub(rhs()?)),
            ArithOp::Mul => Ok(self.mul(rhs()?)),
            ArithOp::Div => self.div(rhs()?),
        }
    }
}

fn hull_of<const N: usize>(values: [Rational; N]) -> Interval {
    let mut iter = values.into_iter();
    let first = iter.next().expect("non-empty");
    let (lo, hi) = iter
        .fold((first.clone(), first), |(lo, hi), v| (if v < lo { v.clone() } else { lo }, if v > hi { v } else { hi }));
    Interval { lo, hi }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(lo: i64, hi: i64) -> Interval {
        Interval::new(Rational::from(lo), Rational::from(hi)).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(iv(1, 2).add(&iv(3, 4)), iv(4, 6));
        assert_eq!(iv(1, 2).sub(&iv(3, 4)), iv(-3, -1));
        assert_eq!(iv(-1, 2).mul(&iv(-3, 4)), iv(-6, 8));
        assert!(matches!(iv(1, 1).div(&iv(-1, 2)), Err(IntervalError::DivisionByZero(_))));
        assert!(iv(1, 1).div(&iv(0, 2)).is_err());
        assert_eq!(
            iv(1, 1).div(&iv(2, 4)).unwrap(),
            Interval::new(Rational::new(1, 4).unwrap(), Rational::new(1, 2).unwrap()).unwrap()
        );
        assert_eq!(iv(1, 2).neg(), iv(-2, -1));
        assert!(Interval::new(Rational::from(2), Rational::from(1)).is_err());
        assert_eq!(iv(1, 2).apply(ArithOp::Add, None), Err(IntervalError::MissingOperand));
    }

    #[test]
    fn magnitudes() {
        assert_eq!(iv(-3, 2).max_abs(), Rational::from(3));
        assert_eq!(iv(-3, 2).min_abs(), Rational::zero());
        assert_eq!(iv(2, 5).min_abs(), Rational::from(2));
        assert_eq!(iv(-5, -2).min_abs(), Rational::from(2));
    }

    #[test]
    fn widen_and_contains() {
        let q = Rational::new(1, 4).unwrap();
        let w = iv(1, 2).widen(&q);
        assert_eq!(w.lo(), &Rational::new(3, 4).unwrap());
        assert_eq!(w.hi(), &Rational::new(9, 4).unwrap());
        assert_eq!(iv(0, 0).widen(&Rational::zero()), iv(0, 0));
        let e = Rational::pow2(-52);
        let w = iv(-1, 1).widen(&e);
        assert_eq!(w.hi(), &(Rational::one() + e.clone()));
        assert!(iv(0, 10).contains(&iv(1, 2)));
        assert!(!iv(1, 2).contains(&iv(0, 3)));
        assert!(iv(1, 2).contains(&iv(1, 2)));
    }

    #[test]
    fn no_correlation_tracking() {
        let a = iv(0, 1);
        let d = a.sub(&a);
        assert!(d.contains(&iv(0, 0)));
        assert_ne!(d, iv(0, 0));
    }

    fn rat() -> impl Strategy<Value = Rational> {
        (-64i64..64, 1i64..16).prop_map(|(n, d)| Rational::new(n, d).unwrap())
    }

    fn interval() -> impl Strategy<Value = Interval> {
        (rat(), rat()).prop_map(|(a, b)| Interval::new(a.clone().min(b.clone()), a.max(b)).unwrap())
    }

    const OPS: [ArithOp; 5] = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div, ArithOp::Neg];

    proptest! {
        #[test]
        fn results_are_well_formed(a in interval(), b in interval()) {
            for op in OPS {
                if let Ok(r) = a.apply(op, Some(&b)) {
                    prop_assert!(r.lo() <= r.hi());
                }
            }
        }

        #[test]
        fn monotone_under_inclusion(a in interval(), b in interval(), ea in 0i64..4, eb in 0i64..4) {
            let a2 = a.widen(&Rational::from(ea));
            let b2 = b.widen(&Rational::from(eb));
            for op in OPS {
                if let Ok(big) = a2.apply(op, Some(&b2)) {
                    let small = a.apply(op, Some(&b)).unwrap();
                    prop_assert!(big.contains(&small));
                }
            }
        }
    }
}
