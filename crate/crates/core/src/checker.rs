//! Certificate validation: type inference (vT), real-range enclosure (vR),
//! machine representability (vFR) and roundoff error bounds (vE).
//!
//! Every validator reads the *encoded* results of a node's children and checks
//! only the node itself, so a failure points at the first node whose claim
//! does not follow from its inputs.

use std::collections::HashMap;
use std::fmt;

use crate::affine::{AffineForm, NoiseAllocator};
use crate::ast::{Binding, Cmd, Expr, ExprMap, Precondition, Var};
use crate::interval::{ArithOp, Interval, IntervalError};
use crate::numeric::{static_error, Precision, Rational};

/// Program plus analysis results to be checked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub program: Cmd,
    /// Types of free variables (and of every node, for fixed-point programs).
    pub gamma: ExprMap<Precision>,
    pub precond: Precondition,
    pub ranges: ExprMap<Interval>,
    pub errors: ExprMap<Rational>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Validator {
    Ssa,
    Types,
    Ranges,
    FpRanges,
    Errors,
    Parse,
}

impl Validator {
    pub fn tag(self) -> &'static str {
        match self {
            Validator::Ssa => "SSA",
            Validator::Types => "vT",
            Validator::Ranges => "vR",
            Validator::FpRanges => "vFR",
            Validator::Errors => "vE",
            Validator::Parse => "parse",
        }
    }
}

impl fmt::Display for Validator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub validator: Validator,
    pub expr: Option<Expr>,
    pub detail: String,
}

impl Failure {
    fn at(validator: Validator, expr: &Expr, detail: impl Into<String>) -> Self {
        Failure { validator, expr: Some(expr.clone()), detail: detail.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.expr {
            Some(e) => write!(f, "{} at {}: {}", self.validator, e, self.detail),
            None => write!(f, "{}: {}", self.validator, self.detail),
        }
    }
}

/// Range arithmetic used to recompute real-valued ranges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RangeDomain {
    Ia,
    Aa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CheckDomain {
    Ia,
    Aa,
    /// Accept if either IA or AA accepts the whole range analysis.
    Portfolio,
}

impl fmt::Display for CheckDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckDomain::Ia => "ia",
            CheckDomain::Aa => "aa",
            CheckDomain::Portfolio => "portfolio",
        })
    }
}

impl From<RangeDomain> for CheckDomain {
    fn from(d: RangeDomain) -> Self {
        match d {
            RangeDomain::Ia => CheckDomain::Ia,
            RangeDomain::Aa => CheckDomain::Aa,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckReport {
    pub failures: Vec<Failure>,
    /// The domain whose range validation was accepted; `Portfolio` when a
    /// portfolio check found neither acceptable.
    pub domain_used: CheckDomain,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failures_from(&self, validator: Validator) -> impl Iterator<Item = &Failure> {
        self.failures.iter().filter(move |f| f.validator == validator)
    }
}

fn is_fixed_program(gamma: &ExprMap<Precision>, program: &Cmd) -> bool {
    gamma.iter().any(|(_, p)| p.is_fixed())
        || program.bindings().any(|(_, p, _)| p.is_fixed())
        || program.unique_subexprs().into_iter().any(|e| match e {
            Expr::Const(p, _) | Expr::Downcast(p, _) => p.is_fixed(),
            _ => false,
        })
}

/// Infers the full type map from the partial map `gamma`.
///
/// Float types are inferred bottom-up with implicit upcasts; decreasing
/// precision needs an explicit cast. Fixed-point programs must type every
/// operation in `gamma`, and only word-length compatibility is checked.
pub fn validate_types(gamma: &ExprMap<Precision>, program: &Cmd) -> Result<ExprMap<Precision>, Vec<Failure>> {
    let fixed = is_fixed_program(gamma, program);
    let bindings = program.binding_map();
    let mut types: ExprMap<Precision> = ExprMap::new();
    let mut failures = Vec::new();
    let fail = |e: &Expr, msg: String| Failure::at(Validator::Types, e, msg);

    for e in program.unique_subexprs() {
        let children: Option<Vec<Precision>> = e.children().iter().map(|c| types.get(c).copied()).collect();
        let Some(children) = children else {
            continue; // a child already failed
        };
        let inferred = match e {
            Expr::Var(v) => {
                match bindings.get(v) {
                    Some(Binding { prec, bound }) => {
                        let Some(&bound_ty) = types.get(bound) else { continue };
                        let ok = if fixed { *prec == bound_ty } else { prec.subsumes(bound_ty) };
                        if !ok {
                            failures.push(fail(
                            e,
                            format!("`{v}` declared {prec} but bound to a {bound_ty} value; an explicit cast is required"),
                        ));
                            continue;
                        }
                        *prec
                    }
                    None => match gamma.get(e) {
                        Some(p) => *p,
                        None => {
                            failures.push(fail(e, format!("no precision given for free variable `{v}`")));
                            continue;
                        }
                    },
                }
            }
            Expr::Const(p, _) => *p,
            Expr::Neg(_) => children[0],
            Expr::Binop(..) | Expr::Fma(..) => {
                let joined = children[1..].iter().try_fold(children[0], |acc, p| acc.join(*p));
                let joined = match joined {
                    Ok(j) => j,
                    Err(err) => {
                        failures.push(fail(e, err.to_string()));
                        continue;
                    }
                };
                if fixed {
                    match gamma.get(e) {
                        Some(p) if p.join(joined).is_ok() => *p,
                        Some(p) => {
                            failures.push(fail(e, format!("{p} incompatible with operand type {joined}")));
                            continue;
                        }
                        None => {
                            failures.push(fail(e, "fixed-point operation without a type".to_string()));
                            continue;
                        }
                    }
                } else {
                    joined
                }
            }
            Expr::Downcast(target, _) => {
                let from = children[0];
                let ok = match (from, *target) {
                    (Precision::Fixed { word: a, .. }, Precision::Fixed { word: b, .. }) => a == b,
                    _ => from.subsumes(*target),
                };
                if !ok {
                    failures.push(fail(e, format!("cast from {from} to {target} does not decrease precision")));
                    continue;
                }
                *target
            }
        };
        if let Some(declared) = gamma.get(e) {
            if *declared != inferred {
                failures.push(fail(e, format!("declared {declared} but inferred {inferred}")));
                continue;
            }
        }
        types.insert(e.clone(), inferred);
    }
    if failures.is_empty() {
        Ok(types)
    } else {
        Err(failures)
    }
}

/// Why a single node's range could not be recomputed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum StepError {
    MissingChild,
    MissingPrecondition(Var),
    DivisionByZero(Box<Interval>),
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::MissingChild => f.write_str("missing range for an operand"),
            StepError::MissingPrecondition(v) => write!(f, "no precondition for free variable `{v}`"),
            StepError::DivisionByZero(den) => write!(f, "real-valued denominator range {den} contains zero"),
        }
    }
}

impl From<IntervalError> for StepError {
    fn from(e: IntervalError) -> Self {
        match e {
            IntervalError::DivisionByZero(i) => StepError::DivisionByZero(i),
            _ => StepError::MissingChild,
        }
    }
}

/// Interval enclosure of `e` from the ranges of its children.
pub(crate) fn ia_step<'a>(
    e: &Expr,
    bindings: &HashMap<Var, Binding>,
    precond: &Precondition,
    range_of: impl Fn(&Expr) -> Option<&'a Interval>,
) -> Result<Interval, StepError> {
    let r = |c: &Expr| range_of(c).ok_or(StepError::MissingChild);
    Ok(match e {
        Expr::Var(v) => match bindings.get(v) {
            Some(b) => r(&b.bound)?.clone(),
            None => precond.get(v).cloned().ok_or_else(|| StepError::MissingPrecondition(v.clone()))?,
        },
        Expr::Const(_, v) => Interval::point(v.clone()),
        Expr::Neg(a) => r(a)?.neg(),
        Expr::Downcast(_, a) => r(a)?.clone(),
        Expr::Binop(op, a, b) => r(a)?.apply(op.arith(), Some(r(b)?))?,
        Expr::Fma(a, b, c) => r(a)?.mul(r(b)?).add(r(c)?),
    })
}

/// Affine form of `e` from the forms of its children.
pub(crate) fn aa_step(
    e: &Expr,
    bindings: &HashMap<Var, Binding>,
    precond: &Precondition,
    forms: &HashMap<Expr, AffineForm>,
    alloc: &mut NoiseAllocator,
) -> Result<AffineForm, StepError> {
    let f = |c: &Expr| forms.get(c).ok_or(StepError::MissingChild);
    Ok(match e {
        Expr::Var(v) => match bindings.get(v) {
            Some(b) => f(&b.bound)?.clone(),
            None => {
                let p = precond.get(v).ok_or_else(|| StepError::MissingPrecondition(v.clone()))?;
                AffineForm::from_interval(p, alloc)
            }
        },
        Expr::Const(_, v) => AffineForm::constant(v.clone()),
        Expr::Neg(a) => f(a)?.neg(),
        Expr::Downcast(_, a) => f(a)?.clone(),
        Expr::Binop(op, a, b) => f(a)?.apply(op.arith(), Some(f(b)?), alloc)?,
        Expr::Fma(a, b, c) => {
            let prod = f(a)?.mul(f(b)?, alloc);
            prod.apply(ArithOp::Add, Some(f(c)?), alloc)?
        }
    })
}

/// Checks every encoded range against the interval enclosure recomputed
/// from the encoded ranges of its children.
pub fn validate_ranges_ia(program: &Cmd, precond: &Precondition, ranges: &ExprMap<Interval>) -> Vec<Failure> {
    let bindings = program.binding_map();
    let mut failures = Vec::new();
    for e in program.unique_subexprs() {
        let Some(claimed) = ranges.get(e) else {
            failures.push(Failure::at(Validator::Ranges, e, "no range in certificate"));
            continue;
        };
        match ia_step(e, &bindings, precond, |c| ranges.get(c)) {
            Ok(enclosure) => {
                if !claimed.contains(&enclosure) {
                    failures.push(Failure::at(
                        Validator::Ranges,
                        e,
                        format!("[IA] claimed range {claimed} does not enclose {enclosure}"),
                    ));
                }
            }
            // reported at the child
            Err(StepError::MissingChild) => {}
            Err(err) => failures.push(Failure::at(Validator::Ranges, e, format!("[IA] {err}"))),
        }
    }
    failures
}

/// Checks every encoded range against affine arithmetic recomputed from the
/// precondition; let-bound variables share the form of their definition.
pub fn validate_ranges_aa(program: &Cmd, precond: &Precondition, ranges: &ExprMap<Interval>) -> Vec<Failure> {
    let bindings = program.binding_map();
    let mut forms = HashMap::new();
    let mut alloc = NoiseAllocator::new();
    let mut failures = Vec::new();
    for e in program.unique_subexprs() {
        let form = match aa_step(e, &bindings, precond, &forms, &mut alloc) {
            Ok(form) => form,
            Err(StepError::MissingChild) => continue,
            Err(err) => {
                failures.push(Failure::at(Validator::Ranges, e, format!("[AA] {err}")));
                continue;
            }
        };
        let enclosure = form.to_interval();
        match ranges.get(e) {
            None => failures.push(Failure::at(Validator::Ranges, e, "no range in certificate")),
            Some(claimed) if !claimed.contains(&enclosure) => failures.push(Failure::at(
                Validator::Ranges,
                e,
                format!("[AA] claimed range {claimed} does not enclose {enclosure}"),
            )),
            Some(_) => {}
        }
        forms.insert(e.clone(), form);
    }
    failures
}

/// Range validation in the requested domain, returning the domain that
/// accepted (or `Portfolio` if neither did).
pub fn validate_ranges(
    program: &Cmd,
    precond: &Precondition,
    ranges: &ExprMap<Interval>,
    domain: CheckDomain,
) -> (Vec<Failure>, CheckDomain) {
    match domain {
        CheckDomain::Ia => (validate_ranges_ia(program, precond, ranges), CheckDomain::Ia),
        CheckDomain::Aa => (validate_ranges_aa(program, precond, ranges), CheckDomain::Aa),
        CheckDomain::Portfolio => {
            let ia = validate_ranges_ia(program, precond, ranges);
            if ia.is_empty() {
                return (ia, CheckDomain::Ia);
            }
            let aa = validate_ranges_aa(program, precond, ranges);
            if aa.is_empty() {
                return (aa, CheckDomain::Aa);
            }
            // report each rejection once, tagged with the domain(s) behind it
            let mut merged: Vec<Failure> = Vec::with_capacity(ia.len() + aa.len());
            for f in ia {
                let both = aa.contains(&f);
                let tag = if both { "ia, aa" } else { "ia" };
                merged.push(Failure { detail: format!("{} ({tag})", f.detail), ..f });
            }
            for f in aa {
                if !merged.iter().any(|m| m.expr == f.expr && m.detail == format!("{} (ia, aa)", f.detail)) {
                    merged.push(Failure { detail: format!("{} (aa)", f.detail), ..f });
                }
            }
            (merged, CheckDomain::Portfolio)
        }
    }
}

/// Machine-range check: for each node the finite-precision range (real range
/// widened by the error bound) must be representable at the node's type, and
/// no finite-precision denominator may be zero.
pub fn validate_fp_ranges(
    program: &Cmd,
    types: &ExprMap<Precision>,
    ranges: &ExprMap<Interval>,
    errors: &ExprMap<Rational>,
) -> Vec<Failure> {
    let mut failures = Vec::new();
    let fp_range = |e: &Expr| Some(ranges.get(e)?.widen(&errors.get(e)?.clone().max(Rational::zero())));
    for e in program.unique_subexprs() {
        let (Some(fp), Some(&ty)) = (fp_range(e), types.get(e)) else {
            failures.push(Failure::at(Validator::FpRanges, e, "missing range, error or type"));
            continue;
        };
        if let Some(msg) = representability_problem(&fp, ty) {
            failures.push(Failure::at(Validator::FpRanges, e, msg));
        }
        if let Expr::Binop(crate::ast::BinOp::Div, _, den) = e {
            if let Some(den_fp) = fp_range(den) {
                if den_fp.contains_zero() {
                    failures.push(Failure::at(
                        Validator::FpRanges,
                        e,
                        format!("finite-precision denominator range {den_fp} contains zero"),
                    ));
                }
            }
        }
    }
    failures
}

/// Describes why values in `fp` may not be representable at `ty`.
pub fn representability_problem(fp: &Interval, ty: Precision) -> Option<String> {
    match ty {
        Precision::Real => None,
        Precision::Fixed { .. } => {
            let max = ty.fixed_max().expect("fixed");
            (fp.max_abs() > max).then(|| format!("range {fp} exceeds fixed-point bound {max} of {ty}"))
        }
        float => {
            let limits = float.float_limits().expect("float");
            let mag = fp.max_abs();
            if mag > limits.max_finite {
                Some(format!("range {fp} may overflow {ty}"))
            } else if !mag.is_zero() && mag < limits.min_normal {
                Some(format!("range {fp} contains no normal {ty} value"))
            } else {
                None
            }
        }
    }
}

/// Why a node's required error could not be computed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum RuleError {
    Missing(&'static str),
    DivisionByZero(Box<Interval>),
}

impl fmt::Display for RuleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleError::Missing(what) => write!(f, "missing {what}"),
            RuleError::DivisionByZero(den) => write!(f, "denominator range {den} may contain zero"),
        }
    }
}

/// Propagated error of `a * b` given operand ranges and error bounds.
fn mul_propagation(ra: &Interval, ea: &Rational, rb: &Interval, eb: &Rational) -> Rational {
    ra.max_abs() * eb + rb.max_abs() * ea + ea * eb
}

/// Smallest sound error bound for `e`, reading ranges, types and operand
/// errors from the given maps.
pub(crate) fn required_error(
    e: &Expr,
    bindings: &HashMap<Var, Binding>,
    types: &ExprMap<Precision>,
    ranges: &ExprMap<Interval>,
    errors: &ExprMap<Rational>,
) -> Result<Rational, RuleError> {
    let range = |x: &Expr| ranges.get(x).ok_or(RuleError::Missing("range"));
    let err = |x: &Expr| errors.get(x).ok_or(RuleError::Missing("operand error"));
    let ty = |x: &Expr| types.get(x).copied().ok_or(RuleError::Missing("type"));
    // new roundoff of an operation whose exact finite result lies in R(e) ± prop
    let with_rounding = |prop: Rational| -> Result<Rational, RuleError> {
        let rounding = static_error(&range(e)?.widen(&prop), ty(e)?);
        Ok(prop + rounding)
    };
    match e {
        Expr::Var(v) => match bindings.get(v) {
            Some(b) => Ok(err(&b.bound)?.clone()),
            None => Ok(static_error(range(e)?, ty(e)?)),
        },
        Expr::Const(..) => Ok(static_error(range(e)?, ty(e)?)),
        Expr::Neg(a) => Ok(err(a)?.clone()),
        Expr::Downcast(target, a) => {
            let ea = err(a)?;
            Ok(ea + &static_error(&range(a)?.widen(ea), *target))
        }
        Expr::Binop(op, a, b) => {
            let (ea, eb) = (err(a)?, err(b)?);
            let prop = match op {
                crate::ast::BinOp::Add | crate::ast::BinOp::Sub => ea + eb,
                crate::ast::BinOp::Mul => mul_propagation(range(a)?, ea, range(b)?, eb),
                crate::ast::BinOp::Div => {
                    let (ra, rb) = (range(a)?, range(b)?);
                    let fb = rb.widen(eb);
                    let (min_real, min_fp) = (rb.min_abs(), fb.min_abs());
                    if min_real.is_zero() {
                        return Err(RuleError::DivisionByZero(Box::new(rb.clone())));
                    }
                    if min_fp.is_zero() {
                        return Err(RuleError::DivisionByZero(Box::new(fb)));
                    }
                    // |1/x - 1/y| = |x - y| / |x·y|
                    let inv_err = eb.checked_div(&(min_real * min_fp)).expect("nonzero");
                    let inv_range = rb.recip().expect("zero excluded");
                    mul_propagation(ra, ea, &inv_range, &inv_err)
                }
            };
            with_rounding(prop)
        }
        Expr::Fma(a, b, c) => {
            let prop = mul_propagation(range(a)?, err(a)?, range(b)?, err(b)?) + err(c)?;
            with_rounding(prop)
        }
    }
}

/// Checks that every encoded error bound dominates the bound derived from
/// the encoded errors of its operands.
pub fn validate_errors(
    program: &Cmd,
    types: &ExprMap<Precision>,
    ranges: &ExprMap<Interval>,
    errors: &ExprMap<Rational>,
) -> Vec<Failure> {
    let bindings = program.binding_map();
    let mut failures = Vec::new();
    for e in program.unique_subexprs() {
        let Some(claimed) = errors.get(e) else {
            failures.push(Failure::at(Validator::Errors, e, "no error bound in certificate"));
            continue;
        };
        if claimed.is_negative() {
            failures.push(Failure::at(Validator::Errors, e, format!("negative error bound {claimed}")));
            continue;
        }
        match required_error(e, &bindings, types, ranges, errors) {
            Ok(required) if claimed < &required => failures.push(Failure::at(
                Validator::Errors,
                e,
                format!("error bound {claimed} below required {required}"),
            )),
            Ok(_) => {}
            Err(RuleError::Missing("operand error")) => {}
            Err(other) => failures.push(Failure::at(Validator::Errors, e, other.to_string())),
        }
    }
    failures
}

/// Runs SSA, type, range, machine-range and error validation, collecting
/// every failure.
pub fn check_certificate(cert: &Certificate, domain: CheckDomain) -> CheckReport {
    let mut failures = Vec::new();
    if let Err(violation) = cert.program.ssa_check() {
        failures.push(Failure {
            validator: Validator::Ssa,
            expr: Some(Expr::Var(violation.0.clone())),
            detail: violation.to_string(),
        });
    }
    let types = validate_types(&cert.gamma, &cert.program);
    let (range_failures, domain_used) = validate_ranges(&cert.program, &cert.precond, &cert.ranges, domain);
    match types {
        Ok(types) => {
            failures.extend(range_failures);
            failures.extend(validate_fp_ranges(&cert.program, &types, &cert.ranges, &cert.errors));
            failures.extend(validate_errors(&cert.program, &types, &cert.ranges, &cert.errors));
        }
        Err(type_failures) => {
            failures.extend(type_failures);
            failures.extend(range_failures);
        }
    }
    CheckReport { failures, domain_used }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::BinOp;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d).unwrap()
    }

    fn iv(lo: Rational, hi: Rational) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn int(lo: i64, hi: i64) -> Interval {
        iv(Rational::from(lo), Rational::from(hi))
    }

    fn x() -> Expr {
        Expr::var("x")
    }

    fn y() -> Expr {
        Expr::var("y")
    }

    fn gamma(entries: &[(&str, Precision)]) -> ExprMap<Precision> {
        entries.iter().map(|(n, p)| (Expr::var(n), *p)).collect()
    }

    fn precond(entries: &[(&str, Interval)]) -> Precondition {
        entries.iter().map(|(n, i)| (Var::new(n), i.clone())).collect()
    }

    #[test]
    fn types_with_implicit_upcast() {
        let sum = Expr::add(x(), y());
        let t =
            validate_types(&gamma(&[("x", Precision::F32), ("y", Precision::F64)]), &Cmd::Ret(sum.clone())).unwrap();
        assert_eq!(t.get(&x()), Some(&Precision::F32));
        assert_eq!(t.get(&y()), Some(&Precision::F64));
        assert_eq!(t.get(&sum), Some(&Precision::F64));
    }

    #[test]
    fn types_with_explicit_downcast() {
        let e = Expr::add(Expr::downcast(Precision::F32, x()), Expr::constant(Precision::F32, Rational::one()));
        let t = validate_types(&gamma(&[("x", Precision::F64)]), &Cmd::Ret(e.clone())).unwrap();
        assert_eq!(t.get(&e), Some(&Precision::F32));
    }

    #[test]
    fn types_reject_implicit_decrease() {
        let prog = Cmd::let_in("z", Precision::F32, x(), Cmd::Ret(Expr::var("z")));
        let err = validate_types(&gamma(&[("x", Precision::F64)]), &prog).unwrap_err();
        assert_eq!(err[0].validator, Validator::Types);
        assert_eq!(err[0].expr, Some(Expr::var("z")));
        // widening assignment is fine
        let up = Cmd::let_in("z", Precision::F64, x(), Cmd::Ret(Expr::var("z")));
        assert!(validate_types(&gamma(&[("x", Precision::F32)]), &up).is_ok());
        // an upward cast is not a downcast
        let cast = Cmd::Ret(Expr::downcast(Precision::F64, x()));
        assert!(validate_types(&gamma(&[("x", Precision::F32)]), &cast).is_err());
    }

    #[test]
    fn types_missing_and_contradicting() {
        assert!(validate_types(&ExprMap::new(), &Cmd::Ret(x())).is_err());
        let sum = Expr::add(x(), y());
        let mut g = gamma(&[("x", Precision::F32), ("y", Precision::F32)]);
        g.insert(sum.clone(), Precision::F64);
        assert!(validate_types(&g, &Cmd::Ret(sum)).is_err());
        let mixed = Cmd::Ret(Expr::add(x(), y()));
        let g = gamma(&[("x", Precision::F32), ("y", Precision::Fixed { word: 16, frac: 8 })]);
        assert!(validate_types(&g, &mixed).is_err());
    }

    #[test]
    fn fixed_programs_need_full_gamma() {
        let fx = |f| Precision::Fixed { word: 16, frac: f };
        let sum = Expr::add(x(), y());
        let prog = Cmd::Ret(sum.clone());
        let mut g = gamma(&[("x", fx(8)), ("y", fx(10))]);
        assert!(validate_types(&g, &prog).is_err());
        g.insert(sum.clone(), fx(7));
        assert_eq!(validate_types(&g, &prog).unwrap().get(&sum), Some(&fx(7)));
        g.insert(sum, Precision::Fixed { word: 32, frac: 7 });
        assert!(validate_types(&g, &prog).is_err());
    }

    #[test]
    fn ia_range_examples() {
        let xx = Expr::add(x(), x());
        let prog = Cmd::Ret(xx.clone());
        let p = precond(&[("x", int(1, 2))]);
        let mut r: ExprMap<Interval> = [(x(), int(1, 2)), (xx.clone(), int(2, 4))].into_iter().collect();
        assert!(validate_ranges_ia(&prog, &p, &r).is_empty());
        r.insert(xx.clone(), iv(Rational::from(2), q(39, 10)));
        let f = validate_ranges_ia(&prog, &p, &r);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].expr, Some(xx));
    }

    #[test]
    fn ia_real_division_by_zero() {
        let one = Expr::constant(Precision::F64, Rational::one());
        let inv = Expr::div(one.clone(), x());
        let prog = Cmd::Ret(inv.clone());
        let p = precond(&[("x", int(-1, 1))]);
        let r: ExprMap<Interval> =
            [(x(), int(-1, 1)), (one, int(1, 1)), (inv.clone(), int(-100, 100))].into_iter().collect();
        let f = validate_ranges_ia(&prog, &p, &r);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].expr, Some(inv));
        assert!(f[0].detail.contains("zero"));
    }

    #[test]
    fn aa_tracks_correlation() {
        let d = Expr::sub(x(), x());
        let prog = Cmd::Ret(d.clone());
        let p = precond(&[("x", int(0, 1))]);
        let r: ExprMap<Interval> = [(x(), int(0, 1)), (d, int(0, 0))].into_iter().collect();
        assert!(validate_ranges_aa(&prog, &p, &r).is_empty());
        assert_eq!(validate_ranges_ia(&prog, &p, &r).len(), 1);
        let (f, used) = validate_ranges(&prog, &p, &r, CheckDomain::Portfolio);
        assert!(f.is_empty());
        assert_eq!(used, CheckDomain::Aa);
    }

    #[test]
    fn aa_rejects_tight_square() {
        let sq = Expr::mul(x(), x());
        let prog = Cmd::Ret(sq.clone());
        let p = precond(&[("x", int(-1, 1))]);
        let r: ExprMap<Interval> = [(x(), int(-1, 1)), (sq, int(0, 1))].into_iter().collect();
        assert_eq!(validate_ranges_aa(&prog, &p, &r).len(), 1);
    }

    #[test]
    fn let_bound_ranges_come_from_definition() {
        let sq = Expr::mul(x(), x());
        let t = Expr::var("t");
        let prog = Cmd::let_in("t", Precision::F64, sq.clone(), Cmd::Ret(t.clone()));
        let p = precond(&[("x", int(1, 2))]);
        let mut r: ExprMap<Interval> =
            [(x(), int(1, 2)), (sq, int(1, 4)), (t.clone(), int(1, 4))].into_iter().collect();
        assert!(validate_ranges_ia(&prog, &p, &r).is_empty());
        r.insert(t.clone(), int(1, 3));
        assert_eq!(validate_ranges_ia(&prog, &p, &r)[0].expr, Some(t));
    }

    #[test]
    fn fp_range_examples() {
        let prog = Cmd::Ret(x());
        let types = gamma(&[("x", Precision::F64)]);
        let errs: ExprMap<Rational> = [(x(), Rational::zero())].into_iter().collect();
        let ok: ExprMap<Interval> = [(x(), int(1, 2))].into_iter().collect();
        assert!(validate_fp_ranges(&prog, &types, &ok, &errs).is_empty());
        let tiny: ExprMap<Interval> = [(x(), iv(Rational::pow2(-1080), Rational::pow2(-1060)))].into_iter().collect();
        assert_eq!(validate_fp_ranges(&prog, &types, &tiny, &errs).len(), 1);
        let zero: ExprMap<Interval> = [(x(), int(0, 0))].into_iter().collect();
        assert!(validate_fp_ranges(&prog, &types, &zero, &errs).is_empty());
        let huge: ExprMap<Interval> = [(x(), iv(Rational::zero(), Rational::pow2(1024)))].into_iter().collect();
        assert_eq!(validate_fp_ranges(&prog, &types, &huge, &errs).len(), 1);
        let fx = gamma(&[("x", Precision::Fixed { word: 8, frac: 4 })]);
        assert_eq!(validate_fp_ranges(&prog, &fx, &[(x(), int(0, 8))].into_iter().collect(), &errs).len(), 1);
        assert!(validate_fp_ranges(&prog, &fx, &[(x(), int(0, 7))].into_iter().collect(), &errs).is_empty());
    }

    #[test]
    fn fp_division_by_zero() {
        let quot = Expr::div(x(), y());
        let prog = Cmd::Ret(quot.clone());
        let types: ExprMap<Precision> =
            [(x(), Precision::F64), (y(), Precision::F64), (quot.clone(), Precision::F64)].into_iter().collect();
        let ranges: ExprMap<Interval> = [
            (x(), int(1, 1)),
            (y(), iv(Rational::pow2(-50), Rational::one())),
            (quot.clone(), iv(Rational::one(), Rational::pow2(50))),
        ]
        .into_iter()
        .collect();
        let errors: ExprMap<Rational> =
            [(x(), Rational::zero()), (y(), Rational::pow2(-49)), (quot.clone(), Rational::one())]
                .into_iter()
                .collect();
        let f = validate_fp_ranges(&prog, &types, &ranges, &errors);
        assert!(f.iter().any(|f| f.expr.as_ref() == Some(&quot) && f.detail.contains("denominator")));
    }

    fn add_certificate(err_sum: Rational) -> (Cmd, ExprMap<Precision>, ExprMap<Interval>, ExprMap<Rational>) {
        let sum = Expr::add(x(), y());
        let prog = Cmd::Ret(sum.clone());
        let types: ExprMap<Precision> =
            [(x(), Precision::F64), (y(), Precision::F64), (sum.clone(), Precision::F64)].into_iter().collect();
        let ranges: ExprMap<Interval> =
            [(x(), int(1, 2)), (y(), int(1, 2)), (sum.clone(), int(2, 4))].into_iter().collect();
        let errors: ExprMap<Rational> =
            [(x(), Rational::zero()), (y(), Rational::zero()), (sum, err_sum)].into_iter().collect();
        (prog, types, ranges, errors)
    }

    #[test]
    fn add_rule_example() {
        // hand evaluation: 0 + 0 + maxAbs([2,4]) * 2^-53 = 2^-51
        let sum = Expr::add(x(), y());
        let (prog, types, ranges, errors) = add_certificate(Rational::pow2(-51));
        let bindings = prog.binding_map();
        assert_eq!(required_error(&sum, &bindings, &types, &ranges, &errors).unwrap(), Rational::pow2(-51));
        let f = validate_errors(&prog, &types, &ranges, &errors);
        // only the inputs fail: exact inputs are not representation-free
        assert!(f.iter().all(|f| f.expr.as_ref() != Some(&sum)));

        let (prog, types, ranges, errors) = add_certificate(Rational::pow2(-52));
        let f = validate_errors(&prog, &types, &ranges, &errors);
        assert!(f.iter().any(|f| f.expr.as_ref() == Some(&sum)));
    }

    #[test]
    fn negation_adds_no_error() {
        let n = Expr::neg(x());
        let prog = Cmd::Ret(n.clone());
        let types: ExprMap<Precision> = [(x(), Precision::F64), (n.clone(), Precision::F64)].into_iter().collect();
        let ranges: ExprMap<Interval> = [(x(), int(1, 2)), (n.clone(), int(-2, -1))].into_iter().collect();
        let e = Rational::pow2(-52);
        let errors: ExprMap<Rational> = [(x(), e.clone()), (n, e)].into_iter().collect();
        assert!(validate_errors(&prog, &types, &ranges, &errors).is_empty());
    }

    #[test]
    fn required_error_is_monotone_in_operand_errors() {
        let ops = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];
        for op in ops {
            let e = Expr::binop(op, x(), y());
            let prog = Cmd::Ret(e.clone());
            let bindings = prog.binding_map();
            let types: ExprMap<Precision> =
                [(x(), Precision::F32), (y(), Precision::F32), (e.clone(), Precision::F32)].into_iter().collect();
            let range_e = int(1, 2).apply(op.arith(), Some(&int(1, 2))).unwrap();
            let ranges: ExprMap<Interval> =
                [(x(), int(1, 2)), (y(), int(1, 2)), (e.clone(), range_e)].into_iter().collect();
            let mut prev = Rational::zero();
            for k in 0..6 {
                let eps = Rational::pow2(-30 + k * 3);
                let errors: ExprMap<Rational> = [(x(), eps.clone()), (y(), eps)].into_iter().collect();
                let req = required_error(&e, &bindings, &types, &ranges, &errors).unwrap();
                assert!(req >= prev, "{op:?}");
                prev = req;
            }
        }
    }

    #[test]
    fn report_collects_ssa_and_other_failures() {
        let prog = Cmd::let_in("x", Precision::F64, x(), Cmd::Ret(Expr::var("x")));
        let cert = Certificate {
            program: prog,
            gamma: gamma(&[("x", Precision::F64)]),
            precond: precond(&[("x", int(1, 2))]),
            ranges: ExprMap::new(),
            errors: ExprMap::new(),
        };
        let report = check_certificate(&cert, CheckDomain::Ia);
        assert!(!report.passed());
        assert!(report.failures_from(Validator::Ssa).count() == 1);
        assert!(report.failures.len() > 1);
    }
}
