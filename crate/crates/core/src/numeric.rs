//! Exact rational numbers and the finite-precision lattice.
//!
//! Every range bound, error bound and constant in a certificate is a
//! [`Rational`]. Values are kept in lowest terms with a positive denominator,
//! so structural equality is mathematical equality.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::interval::Interval;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid numeric literal `{0}`")]
    InvalidLiteral(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrecisionError {
    #[error("{0} is not a floating-point precision")]
    NotAFloat(Precision),
    #[error("cannot join {0} and {1}")]
    IncompatibleJoin(Precision, Precision),
    #[error("fixed-point word length must be at least 2, got {0}")]
    WordLengthTooSmall(u32),
}

/// Arbitrary-precision rational, always gcd-normalized.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> Result<Self, NumericError> {
        let denom = denom.into();
        if denom.is_zero() {
            return Err(NumericError::DivisionByZero);
        }
        // `Ratio::new` reduces and moves the sign to the numerator.
        Ok(Rational(BigRational::new(numer.into(), denom)))
    }

    pub fn from_integer(value: impl Into<BigInt>) -> Self {
        Rational(BigRational::from_integer(value.into()))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    /// Exact `2^exp` for any signed exponent.
    pub fn pow2(exp: i64) -> Self {
        let mag = BigInt::one() << exp.unsigned_abs();
        if exp >= 0 {
            Rational(BigRational::from_integer(mag))
        } else {
            Rational(BigRational::new_raw(BigInt::one(), mag))
        }
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    pub fn checked_div(&self, other: &Self) -> Result<Self, NumericError> {
        if other.is_zero() {
            return Err(NumericError::DivisionByZero);
        }
        Ok(Rational(&self.0 / &other.0))
    }

    pub fn recip(&self) -> Result<Self, NumericError> {
        Rational::one().checked_div(self)
    }

    /// Multiplication by `2^exp`.
    pub fn scale_pow2(&self, exp: i64) -> Self {
        if let Some((n, e)) = self.dyadic_parts() {
            return Rational::from_dyadic(n.clone(), e + exp);
        }
        let shift = exp.unsigned_abs();
        let (n, d) = (self.numer().clone(), self.denom().clone());
        if exp >= 0 {
            Rational(BigRational::new(n << shift, d))
        } else {
            Rational(BigRational::new(n, d << shift))
        }
    }

    /// `n / d` for `d > 0`, reduced with the fast gcd.
    fn reduce(n: BigInt, d: BigInt) -> Self {
        let g = gcd(&n, &d);
        if g.is_one() {
            Rational(BigRational::new_raw(n, d))
        } else {
            Rational(BigRational::new_raw(n / &g, d / &g))
        }
    }

    /// `(n, e)` with `self = n * 2^e` when the denominator is a power of two.
    pub fn dyadic_parts(&self) -> Option<(&BigInt, i64)> {
        let d = self.denom();
        let tz = d.trailing_zeros().unwrap_or(0);
        (d.bits() == tz + 1).then(|| (self.numer(), -(tz as i64)))
    }

    /// `n * 2^exp` in lowest terms, without a gcd computation.
    pub fn from_dyadic(n: BigInt, exp: i64) -> Self {
        let Some(tz) = n.trailing_zeros() else {
            return Rational::zero();
        };
        let (n, exp) = if exp < 0 {
            let s = (tz as i64).min(-exp);
            (n >> s as u64, exp + s)
        } else {
            (n, exp)
        };
        if exp >= 0 {
            Rational(BigRational::from_integer(n << exp as u64))
        } else {
            Rational(BigRational::new_raw(n, BigInt::one() << (-exp) as u64))
        }
    }

    /// Largest integer `<= self`.
    pub fn floor(&self) -> BigInt {
        self.numer().div_floor(self.denom())
    }

    /// `floor(log2(|self|))`; `None` for zero.
    pub fn floor_log2(&self) -> Option<i64> {
        if self.is_zero() {
            return None;
        }
        let n = self.numer().abs();
        let d = self.denom();
        let mut e = n.bits() as i64 - d.bits() as i64;
        // 2^e <= n/d < 2^(e+1) after at most one correction step
        let lhs = |e: i64| {
            if e >= 0 {
                n.cmp(&(d << e as u64))
            } else {
                (&n << (-e) as u64).cmp(d)
            }
        };
        if lhs(e) == Ordering::Less {
            e -= 1;
        }
        Some(e)
    }

    /// Nearest `f64`, for display only.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Exact value of a finite `f64`.
    pub fn from_f64(value: f64) -> Option<Self> {
        BigRational::from_float(value).map(Rational)
    }

    /// Parses `n`, `n/d`, or an exact decimal literal such as `-1.25e-3`.
    pub fn parse(text: &str) -> Result<Self, NumericError> {
        let invalid = || NumericError::InvalidLiteral(text.to_string());
        if let Some((n, d)) = text.split_once('/') {
            let n = parse_integer(n).ok_or_else(invalid)?;
            if d.starts_with(['+', '-']) {
                return Err(invalid());
            }
            let d = parse_integer(d).ok_or_else(invalid)?;
            return Rational::new(n, d);
        }
        let (mantissa, exponent) = match text.find(['e', 'E']) {
            Some(i) => {
                let exp: i64 = text[i + 1..].parse().map_err(|_| invalid())?;
                (&text[..i], exp)
            }
            None => (text, 0),
        };
        let (int_part, frac_part) = match mantissa.split_once('.') {
            Some((i, f)) => (i, f),
            None => (mantissa, ""),
        };
        let (negative, int_digits) = match int_part.as_bytes().first() {
            Some(b'-') => (true, &int_part[1..]),
            Some(b'+') => (false, &int_part[1..]),
            _ => (false, int_part),
        };
        let all_digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
        if int_digits.is_empty() && frac_part.is_empty()
            || !all_digits(int_digits)
            || !all_digits(frac_part)
            || exponent.unsigned_abs() > 100_000
        {
            return Err(invalid());
        }
        let digits: BigInt = format!("0{int_digits}{frac_part}").parse().map_err(|_| invalid())?;
        let scale = exponent - frac_part.len() as i64;
        let ten = BigInt::from(10);
        let pow = num_traits::pow(ten, scale.unsigned_abs() as usize);
        let value = if scale >= 0 { Rational::from_integer(digits * pow) } else { Rational::new(digits, pow)? };
        Ok(if negative { -value } else { value })
    }
}

fn parse_integer(text: &str) -> Option<BigInt> {
    let digits = text.strip_prefix(['-', '+']).unwrap_or(text);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse().ok()
}

impl FromStr for Rational {
    type Err = NumericError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rational::parse(s)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl From<i64> for Rational {
    fn from(value: i64) -> Self {
        Rational::from_integer(value)
    }
}

// Dyadic operands (the common case for rounded values) skip the gcd.
fn add_ref(a: &Rational, b: &Rational) -> Rational {
    match (a.dyadic_parts(), b.dyadic_parts()) {
        (Some((n1, e1)), Some((n2, e2))) => {
            let e = e1.min(e2);
            Rational::from_dyadic((n1 << (e1 - e) as u64) + (n2 << (e2 - e) as u64), e)
        }
        _ => {
            let (n1, d1, n2, d2) = (a.numer(), a.denom(), b.numer(), b.denom());
            if d1 == d2 {
                return Rational::reduce(n1 + n2, d1.clone());
            }
            Rational::reduce(n1 * d2 + n2 * d1, d1 * d2)
        }
    }
}

fn mul_ref(a: &Rational, b: &Rational) -> Rational {
    match (a.dyadic_parts(), b.dyadic_parts()) {
        (Some((n1, e1)), Some((n2, e2))) => Rational::from_dyadic(n1 * n2, e1 + e2),
        _ => {
            let (n1, d1, n2, d2) = (a.numer(), a.denom(), b.numer(), b.denom());
            let g1 = gcd(n1, d2);
            let g2 = gcd(n2, d1);
            let n = (n1 / &g1) * (n2 / &g2);
            let d = (d1 / &g2) * (d2 / &g1);
            Rational(BigRational::new_raw(n, d))
        }
    }
}

/// Non-negative gcd; one Euclid step brings a large/small pair down to `u64`.
fn gcd(a: &BigInt, b: &BigInt) -> BigInt {
    fn small(x: &BigInt) -> Option<u64> {
        x.magnitude().to_u64()
    }
    fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    }
    match (small(a), small(b)) {
        (Some(x), Some(y)) => BigInt::from(gcd_u64(x, y)),
        (Some(0), None) => b.abs(),
        (None, Some(0)) => a.abs(),
        (Some(x), None) => BigInt::from(gcd_u64(x, (b.magnitude() % x).to_u64().expect("below modulus"))),
        (None, Some(y)) => BigInt::from(gcd_u64(y, (a.magnitude() % y).to_u64().expect("below modulus"))),
        (None, None) => a.gcd(b),
    }
}

fn sub_ref(a: &Rational, b: &Rational) -> Rational {
    add_ref(a, &-b)
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $imp:ident) => {
        impl $trait<&Rational> for &Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                $imp(self, rhs)
            }
        }
        impl $trait<Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                $imp(&self, &rhs)
            }
        }
        impl $trait<&Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                $imp(&self, rhs)
            }
        }
    };
}

forward_binop!(Add, add, add_ref);
forward_binop!(Sub, sub, sub_ref);
forward_binop!(Mul, mul, mul_ref);

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl std::iter::Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Self {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

/// Machine precision of a value or operation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Precision {
    F16,
    F32,
    F64,
    /// Two's-complement word of `word` bits with `frac` fractional bits.
    Fixed {
        word: u32,
        frac: i32,
    },
    /// Infinite precision: real-valued semantics.
    Real,
}

/// IEEE 754 binary format parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FloatFormat {
    /// Significand bits including the hidden bit.
    pub precision: u32,
    pub min_exp: i64,
    pub max_exp: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FloatLimits {
    pub min_normal: Rational,
    pub max_finite: Rational,
}

impl Precision {
    pub fn fixed(word: u32, frac: i32) -> Result<Self, PrecisionError> {
        if word < 2 {
            return Err(PrecisionError::WordLengthTooSmall(word));
        }
        Ok(Precision::Fixed { word, frac })
    }

    pub fn is_float(self) -> bool {
        matches!(self, Precision::F16 | Precision::F32 | Precision::F64)
    }

    pub fn is_fixed(self) -> bool {
        matches!(self, Precision::Fixed { .. })
    }

    pub fn float_format(self) -> Result<FloatFormat, PrecisionError> {
        let (precision, max_exp) = match self {
            Precision::F16 => (11, 15),
            Precision::F32 => (24, 127),
            Precision::F64 => (53, 1023),
            other => return Err(PrecisionError::NotAFloat(other)),
        };
        Ok(FloatFormat { precision, min_exp: 1 - max_exp, max_exp })
    }

    /// Unit roundoff for round-to-nearest: `2^-p` for a `p`-bit significand.
    pub fn machine_epsilon(self) -> Result<Rational, PrecisionError> {
        let fmt = self.float_format()?;
        Ok(Rational::pow2(-(fmt.precision as i64)))
    }

    pub fn float_limits(self) -> Result<FloatLimits, PrecisionError> {
        let fmt = self.float_format()?;
        let min_normal = Rational::pow2(fmt.min_exp);
        // (2 - 2^(1-p)) * 2^emax
        let max_finite =
            (Rational::from_integer(2) - Rational::pow2(1 - fmt.precision as i64)) * Rational::pow2(fmt.max_exp);
        Ok(FloatLimits { min_normal, max_finite })
    }

    /// Largest magnitude representable in a fixed-point format.
    pub fn fixed_max(self) -> Option<Rational> {
        match self {
            Precision::Fixed { word, frac } => {
                let top = (BigInt::one() << (word - 1)) - 1;
                Some(Rational::from_integer(top).scale_pow2(-(frac as i64)))
            }
            _ => None,
        }
    }

    fn float_rank(self) -> Option<u8> {
        match self {
            Precision::F16 => Some(0),
            Precision::F32 => Some(1),
            Precision::F64 => Some(2),
            Precision::Real => Some(3),
            Precision::Fixed { .. } => None,
        }
    }

    /// Least upper bound: the more precise float, or the fixed format with the
    /// wider integer part.
    pub fn join(self, other: Precision) -> Result<Precision, PrecisionError> {
        match (self, other) {
            (Precision::Fixed { word: w1, frac: f1 }, Precision::Fixed { word: w2, frac: f2 }) if w1 == w2 => {
                Ok(Precision::Fixed { word: w1, frac: f1.min(f2) })
            }
            _ => match (self.float_rank(), other.float_rank()) {
                (Some(a), Some(b)) => Ok(if a >= b { self } else { other }),
                _ => Err(PrecisionError::IncompatibleJoin(self, other)),
            },
        }
    }

    /// Whether values of `other` are implicitly convertible to `self`
    /// without loss, i.e. `self ⊔ other = self`.
    pub fn subsumes(self, other: Precision) -> bool {
        self.join(other).map(|j| j == self).unwrap_or(false)
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::F16 => f.write_str("F16"),
            Precision::F32 => f.write_str("F32"),
            Precision::F64 => f.write_str("F64"),
            Precision::Fixed { word, frac } => write!(f, "(fixed {word} {frac})"),
            Precision::Real => f.write_str("REAL"),
        }
    }
}

/// Worst-case roundoff committed when a value in `range` is rounded to `prec`.
///
/// Floats use the relative model `|x| * eps`; fixed-point truncation loses at
/// most one unit in the last place regardless of magnitude.
pub fn static_error(range: &Interval, prec: Precision) -> Rational {
    match prec {
        Precision::Real => Rational::zero(),
        Precision::Fixed { frac, .. } => Rational::pow2(-(frac as i64)),
        float => range.max_abs() * float.machine_epsilon().expect("float precision"),
    }
}
