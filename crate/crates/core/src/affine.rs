//! Affine arithmetic: `center + Σ coeff_i · ε_i` with shared noise symbols
//! `ε_i ∈ [-1, 1]`. Linear operations are exact; products and quotients add
//! one fresh symbol bounding the nonlinear remainder.

use std::collections::BTreeMap;
use std::fmt;

use crate::interval::{ArithOp, Interval, IntervalError};
use crate::numeric::Rational;

pub type NoiseId = u64;

/// Hands out noise symbols; one allocator per analysis run.
#[derive(Debug, Default)]
pub struct NoiseAllocator {
    next: NoiseId,
}

impl NoiseAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self) -> NoiseId {
        let id = self.next;
        self.next += 1;
        id
    }

    pub fn allocated(&self) -> NoiseId {
        self.next
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct AffineForm {
    center: Rational,
    terms: BTreeMap<NoiseId, Rational>,
}

impl AffineForm {
    pub fn constant(value: Rational) -> Self {
        AffineForm { center: value, terms: BTreeMap::new() }
    }

    pub fn from_parts(center: Rational, terms: impl IntoIterator<Item = (NoiseId, Rational)>) -> Self {
        let terms = terms.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        AffineForm { center, terms }
    }

    /// Midpoint plus one fresh symbol spanning the radius.
    pub fn from_interval(range: &Interval, alloc: &mut NoiseAllocator) -> Self {
        let mut form = AffineForm::constant(range.midpoint());
        let radius = range.radius();
        if !radius.is_zero() {
            form.terms.insert(alloc.fresh(), radius);
        }
        form
    }

    pub fn center(&self) -> &Rational {
        &self.center
    }

    pub fn terms(&self) -> &BTreeMap<NoiseId, Rational> {
        &self.terms
    }

    /// Sum of absolute coefficients.
    pub fn radius(&self) -> Rational {
        self.terms.values().map(Rational::abs).sum()
    }

    pub fn to_interval(&self) -> Interval {
        let r = self.radius();
        Interval::new(&self.center - &r, &self.center + &r).expect("radius is non-negative")
    }

    /// Value of the form for a concrete assignment of noise symbols; symbols
    /// missing from `assignment` count as zero.
    pub fn evaluate(&self, assignment: &BTreeMap<NoiseId, Rational>) -> Rational {
        self.terms.iter().fold(self.center.clone(), |acc, (id, c)| match assignment.get(id) {
            Some(e) => acc + c * e,
            None => acc,
        })
    }

    pub fn neg(&self) -> AffineForm {
        AffineForm { center: -&self.center, terms: self.terms.iter().map(|(k, v)| (*k, -v)).collect() }
    }

    fn combine(&self, other: &AffineForm, sign: &Rational) -> AffineForm {
        let mut terms = self.terms.clone();
        for (id, c) in &other.terms {
            let entry = terms.entry(*id).or_insert_with(Rational::zero);
            *entry = &*entry + &(c * sign);
        }
        terms.retain(|_, c| !c.is_zero());
        AffineForm { center: &self.center + &(&other.center * sign), terms }
    }

    pub fn add(&self, other: &AffineForm) -> AffineForm {
        self.combine(other, &Rational::one())
    }

    pub fn sub(&self, other: &AffineForm) -> AffineForm {
        self.combine(other, &-Rational::one())
    }

    pub fn scale(&self, k: &Rational) -> AffineForm {
        AffineForm::from_parts(&self.center * k, self.terms.iter().map(|(id, c)| (*id, c * k)))
    }

    pub fn add_constant(&self, k: &Rational) -> AffineForm {
        AffineForm { center: &self.center + k, terms: self.terms.clone() }
    }

    /// `a0·b + b0·a − a0·b0` plus a fresh symbol of magnitude `rad(a)·rad(b)`.
    pub fn mul(&self, other: &AffineForm, alloc: &mut NoiseAllocator) -> AffineForm {
        let linear =
            other.scale(&self.center).add(&self.scale(&other.center)).add_constant(&-(&self.center * &other.center));
        let quad = self.radius() * other.radius();
        with_noise(linear, quad, alloc)
    }

    /// Min-range linearization of `1/x` over the concretization of `self`.
    pub fn recip(&self, alloc: &mut NoiseAllocator) -> Result<AffineForm, IntervalError> {
        let range = self.to_interval();
        if range.contains_zero() {
            return Err(IntervalError::DivisionByZero(Box::new(range)));
        }
        if range.hi().is_negative() {
            return Ok(self.neg().recip(alloc)?.neg());
        }
        let (l, u) = (range.lo(), range.hi());
        // On [l, u] with 0 < l: slope -1/u²; 1/x - αx is decreasing there, so
        // the deviation from the line is extremal at the endpoints.
        let inv_u = u.recip().expect("u > 0");
        let alpha = -(&inv_u * &inv_u);
        let at_l = l.recip().expect("l > 0") - &alpha * l;
        let at_u = &inv_u - &(&alpha * u);
        let half = Rational::new(1, 2).unwrap();
        let zeta = (&at_l + &at_u) * &half;
        let delta = (&at_l - &at_u) * &half;
        let approx = self.scale(&alpha).add_constant(&zeta);
        Ok(with_noise(approx, delta, alloc))
    }

    pub fn div(&self, other: &AffineForm, alloc: &mut NoiseAllocator) -> Result<AffineForm, IntervalError> {
        let inv = other.recip(alloc)?;
        Ok(self.mul(&inv, alloc))
    }

    pub fn apply(
        &self,
        op: ArithOp,
        other: Option<&AffineForm>,
        alloc: &mut NoiseAllocator,
    ) -> Result<AffineForm, IntervalError> {
        let rhs = || other.ok_or(IntervalError::MissingOperand);
        match op {
            ArithOp::Neg => Ok(self.neg()),
            ArithOp::Add => Ok(self.add(rhs()?)),
            ArithOp::Sub => Ok(self.sub(rhs()?)),
            ArithOp::Mul => Ok(self.mul(rhs()?, alloc)),
            ArithOp::Div => self.div(rhs()?, alloc),
        }
    }
}

fn with_noise(mut form: AffineForm, magnitude: Rational, alloc: &mut NoiseAllocator) -> AffineForm {
    if !magnitude.is_zero() {
        form.terms.insert(alloc.fresh(), magnitude);
    }
    form
}

impl fmt::Debug for AffineForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.center)?;
        for (id, c) in &self.terms {
            write!(f, " + {c}·e{id}")?;
        }
        Ok(())
    }
}
