//! Sampling harness comparing exact and finite-precision evaluation against
//! a certificate's claimed error bound, and certificate mutations for
//! negative tests.

use std::fmt;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::ast::{BinOp, Expr, Var};
use crate::checker::{validate_types, Certificate, Failure};
use crate::interval::Interval;
use crate::numeric::{Precision, Rational};
use crate::semantics::{round_to, Env, EvalError, Plan};

/// Largest number of free variables whose corners are all enumerated.
pub const MAX_CORNER_VARS: usize = 10;

/// Grid resolution: samples are drawn from `2^GRID_BITS + 1` points.
const GRID_BITS: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Strategy {
    UniformDyadic,
    /// All corners of the precondition box (up to ten variables), then uniform samples.
    #[default]
    EndpointsPlusUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleConfig {
    pub count: usize,
    pub seed: u64,
    pub strategy: Strategy,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { count: 10_000, seed: 0, strategy: Strategy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    ErrorExceeded {
        observed: Rational,
        bound: Rational,
    },
    NonFinite,
    /// A subnormal result at a node whose finite range is entirely normal.
    Subnormal(Expr),
    Eval(EvalError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub sample: usize,
    pub inputs: Vec<(Var, Rational)>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sample {} (", self.sample)?;
        for (i, (v, x)) in self.inputs.iter().enumerate() {
            let sep = if i == 0 { "" } else { ", " };
            write!(f, "{sep}{v} = {x}")?;
        }
        write!(f, "): ")?;
        match &self.kind {
            ViolationKind::ErrorExceeded { observed, bound } => {
                write!(f, "error {:e} exceeds bound {:e}", observed.to_f64(), bound.to_f64())
            }
            ViolationKind::NonFinite => write!(f, "overflow"),
            ViolationKind::Subnormal(e) => write!(f, "subnormal result at {e}"),
            ViolationKind::Eval(err) => write!(f, "{err}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleReport {
    pub samples: usize,
    pub violations: Vec<Violation>,
    pub max_observed_error: Rational,
    /// `max_observed_error / ε(ret)`; `None` when the bound is zero.
    pub bound_tightness: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("sample count must be positive")]
    ZeroCount,
    #[error("type inference failed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Types(Vec<Failure>),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no precondition for free variable `{0}`")]
    MissingPrecondition(Var),
    #[error("no error bound for the returned expression")]
    MissingBound,
}

/// Dyadic sampling grid inside one variable's range: points
/// `(base + j) * 2^step` for `0 <= j <= span`.
#[derive(Debug, Clone)]
struct Axis {
    var: Var,
    range: Interval,
    grid: Option<(BigInt, u128, i64)>,
}

impl Axis {
    fn new(var: Var, range: Interval) -> Self {
        let grid = (!range.is_point()).then(|| {
            let width = range.hi() - range.lo();
            // resolution well below the grid spacing
            let step = width.floor_log2().expect("nonempty") - GRID_BITS as i64 - 8;
            let index = |x: &Rational| x.scale_pow2(-step);
            let base = -(-index(range.lo())).floor(); // ceiling
            let top = index(range.hi()).floor();
            let span = (top - &base).to_u128().expect("span fits the grid");
            (base, span, step)
        });
        Axis { var, range, grid }
    }

    /// Grid point `k / 2^GRID_BITS` of the way through the range.
    fn point(&self, k: u64) -> Rational {
        match &self.grid {
            None => self.range.lo().clone(),
            Some((base, span, step)) => {
                let offset = (span * k as u128) >> GRID_BITS;
                Rational::from_dyadic(base + BigInt::from(offset), *step)
            }
        }
    }
}

fn draw(index: usize, seed: u64, axes: &[Axis], corners: usize) -> Vec<(Var, Rational)> {
    if index < corners {
        return axes
            .iter()
            .enumerate()
            .map(|(bit, a)| {
                let x = if index >> bit & 1 == 1 { a.range.hi() } else { a.range.lo() };
                (a.var.clone(), x.clone())
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    axes.iter().map(|a| (a.var.clone(), a.point(rng.gen_range(0..=1u64 << GRID_BITS)))).collect()
}

/// Evaluates the certificate's program on sampled inputs and records every
/// sample whose finite-precision result deviates from the exact one by more
/// than the claimed bound, overflows, or goes subnormal where the certified
/// ranges rule that out.
///
/// Results are deterministic for a given seed regardless of scheduling.
pub fn sample_check(cert: &Certificate, cfg: &SampleConfig) -> Result<SampleReport, OracleError> {
    if cfg.count == 0 {
        return Err(OracleError::ZeroCount);
    }
    let types = validate_types(&cert.gamma, &cert.program).map_err(OracleError::Types)?;
    let plan = Plan::new(&cert.program)?;
    let bound = cert.errors.get(cert.program.ret_expr()).cloned().ok_or(OracleError::MissingBound)?;
    let axes: Vec<Axis> = cert
        .program
        .free_vars()
        .into_iter()
        .map(|v| match cert.precond.get(&v) {
            Some(r) => Ok(Axis::new(v, r.clone())),
            None => Err(OracleError::MissingPrecondition(v)),
        })
        .collect::<Result<_, _>>()?;
    let input_types: Vec<Precision> =
        axes.iter().map(|a| types.get(&Expr::Var(a.var.clone())).copied().expect("typed")).collect();

    // nodes where every value in the certified finite range is normal
    let promised_normal: Vec<bool> = plan
        .exprs()
        .iter()
        .map(|e| {
            let (Some(r), Some(err), Some(limits)) =
                (cert.ranges.get(e), cert.errors.get(e), types.get(e).and_then(|t| t.float_limits().ok()))
            else {
                return false;
            };
            !err.is_negative() && r.widen(err).min_abs() >= limits.min_normal
        })
        .collect();

    let corners = match cfg.strategy {
        Strategy::EndpointsPlusUniform if axes.len() <= MAX_CORNER_VARS => 1usize << axes.len(),
        _ => 0,
    };
    let total = cfg.count.max(corners);

    let outcomes: Vec<(Rational, Option<Violation>)> = (0..total)
        .into_par_iter()
        .map(|i| {
            let inputs = draw(i, cfg.seed, &axes, corners);
            let violation = |kind| Some(Violation { sample: i, inputs: inputs.clone(), kind });
            let mut real_env = Env::new();
            let mut fin_env = Env::new();
            for ((v, x), ty) in inputs.iter().zip(&input_types) {
                real_env.bind(v.clone(), x.clone(), Precision::Real);
                fin_env.bind(v.clone(), round_to(x, *ty).value, *ty);
            }
            let real = match plan.eval_real(&real_env) {
                Ok(r) => r,
                Err(e) => return (Rational::zero(), violation(ViolationKind::Eval(e))),
            };
            let mut tiny_at = None;
            let finite = plan.eval_finite_observed(&fin_env, &types, |node, _, flags| {
                if flags.subnormal && promised_normal[node] && tiny_at.is_none() {
                    tiny_at = Some(node);
                }
            });
            let finite = match finite {
                Ok(f) => f,
                Err(e) => return (Rational::zero(), violation(ViolationKind::Eval(e))),
            };
            if finite.non_finite {
                return (Rational::zero(), violation(ViolationKind::NonFinite));
            }
            let observed = (&real - &finite.value).abs();
            if let Some(node) = tiny_at {
                return (observed, violation(ViolationKind::Subnormal(plan.exprs()[node].clone())));
            }
            if observed > bound {
                let kind = ViolationKind::ErrorExceeded { observed: observed.clone(), bound: bound.clone() };
                return (observed, violation(kind));
            }
            (observed, None)
        })
        .collect();

    let mut max_observed_error = Rational::zero();
    let mut violations = Vec::new();
    for (err, v) in outcomes {
        if err > max_observed_error {
            max_observed_error = err;
        }
        violations.extend(v);
    }
    let bound_tightness = max_observed_error.checked_div(&bound).ok();
    Ok(SampleReport { samples: total, violations, max_observed_error, bound_tightness })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MutationKind {
    /// Multiply `ε(node)` by `factor` in `(0, 1)`.
    ShrinkError { node: Expr, factor: Rational },
    /// Scale the radius of `R(node)` by `factor` in `[0, 1)` about its midpoint.
    ShrinkRange { node: Expr, factor: Rational },
    /// Give the first division's denominator an error bound large enough
    /// that its finite range reaches zero, keeping its real range.
    FlipDenominatorZero,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MutationError {
    #[error("{0} has no entry in the certificate")]
    NodeNotFound(Expr),
    #[error("factor {0} is outside the allowed range")]
    InvalidFactor(Rational),
    #[error("program has no division")]
    NoDivision,
}

/// Returns a copy of `cert` with one claim weakened or falsified.
pub fn mutate(cert: &Certificate, kind: &MutationKind) -> Result<Certificate, MutationError> {
    let mut out = cert.clone();
    match kind {
        MutationKind::ShrinkError { node, factor } => {
            if !factor.is_positive() || factor >= &Rational::one() {
                return Err(MutationError::InvalidFactor(factor.clone()));
            }
            let err = out.errors.get_mut(node).ok_or_else(|| MutationError::NodeNotFound(node.clone()))?;
            *err = &*err * factor;
        }
        MutationKind::ShrinkRange { node, factor } => {
            if factor.is_negative() || factor >= &Rational::one() {
                return Err(MutationError::InvalidFactor(factor.clone()));
            }
            let range = out.ranges.get_mut(node).ok_or_else(|| MutationError::NodeNotFound(node.clone()))?;
            let (mid, rad) = (range.midpoint(), range.radius() * factor);
            *range = Interval::new(&mid - &rad, mid + rad).expect("radius is non-negative");
        }
        MutationKind::FlipDenominatorZero => {
            let den = cert
                .program
                .unique_subexprs()
                .into_iter()
                .find_map(|e| match e {
                    Expr::Binop(BinOp::Div, _, den) => Some((**den).clone()),
                    _ => None,
                })
                .ok_or(MutationError::NoDivision)?;
            let range = cert.ranges.get(&den).ok_or_else(|| MutationError::NodeNotFound(den.clone()))?;
            let reach = range.min_abs() * Rational::from(2);
            out.errors.insert(den, reach);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::{analyze, AnalysisConfig};
    use crate::ast::{Cmd, ExprMap, Precondition};
    use crate::checker::{check_certificate, CheckDomain, Validator};

    fn int(lo: i64, hi: i64) -> Interval {
        Interval::new(Rational::from(lo), Rational::from(hi)).unwrap()
    }

    fn quotient_cert(prec: Precision) -> Certificate {
        let prog = Cmd::let_in(
            "t",
            prec,
            Expr::mul(Expr::var("x"), Expr::var("y")),
            Cmd::Ret(Expr::div(
                Expr::var("t"),
                Expr::add(Expr::var("y"), Expr::constant(prec, Rational::new(1, 10).unwrap())),
            )),
        );
        let pre: Precondition = [(Var::new("x"), int(-3, 5)), (Var::new("y"), int(1, 2))].into_iter().collect();
        let gamma: ExprMap<Precision> = [(Expr::var("x"), prec), (Expr::var("y"), prec)].into_iter().collect();
        analyze(&prog, &pre, &gamma, &AnalysisConfig::default()).unwrap()
    }

    #[test]
    fn grid_points_stay_inside() {
        let r = Interval::new(Rational::new(1, 10).unwrap(), Rational::new(3, 10).unwrap()).unwrap();
        let axis = Axis::new(Var::new("x"), r.clone());
        for k in [0, 1, 12345, 1 << 39, (1 << GRID_BITS) - 1, 1 << GRID_BITS] {
            let x = axis.point(k);
            assert!(r.contains_value(&x), "{x}");
            let d = Rational::from_integer(x.denom().clone());
            assert_eq!(Rational::pow2(d.floor_log2().unwrap()), d, "not dyadic: {x}");
        }
    }

    #[test]
    fn generated_certificates_have_no_violations() {
        for prec in [Precision::F16, Precision::F32, Precision::F64] {
            let cert = quotient_cert(prec);
            let report = sample_check(&cert, &SampleConfig { count: 500, ..SampleConfig::default() }).unwrap();
            assert!(report.violations.is_empty(), "{prec}: {}", report.violations[0]);
            let t = report.bound_tightness.unwrap();
            assert!(t.is_positive() && t <= Rational::one(), "{prec}: {t}");
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let cert = quotient_cert(Precision::F32);
        let cfg = SampleConfig { count: 200, seed: 7, strategy: Strategy::UniformDyadic };
        assert_eq!(sample_check(&cert, &cfg).unwrap(), sample_check(&cert, &cfg).unwrap());
    }

    #[test]
    fn corners_always_run() {
        let cert = quotient_cert(Precision::F64);
        let cfg = SampleConfig { count: 1, ..SampleConfig::default() };
        assert_eq!(sample_check(&cert, &cfg).unwrap().samples, 4);
        assert_eq!(sample_check(&cert, &SampleConfig { count: 0, ..cfg }), Err(OracleError::ZeroCount));
    }

    #[test]
    fn zero_bound_is_violated() {
        let mut cert = quotient_cert(Precision::F32);
        let ret = cert.program.ret_expr().clone();
        cert.errors.insert(ret, Rational::zero());
        let report = sample_check(&cert, &SampleConfig { count: 100, ..SampleConfig::default() }).unwrap();
        assert!(!report.violations.is_empty());
        assert_eq!(report.bound_tightness, None);
    }

    #[test]
    fn mutations_are_rejected() {
        let cert = quotient_cert(Precision::F64);
        let ret = cert.program.ret_expr().clone();
        let half = Rational::new(1, 2).unwrap();
        let shrunk = mutate(&cert, &MutationKind::ShrinkError { node: ret.clone(), factor: half.clone() }).unwrap();
        let report = check_certificate(&shrunk, CheckDomain::Ia);
        assert!(report.failures.iter().any(|f| f.validator == Validator::Errors && f.expr.as_ref() == Some(&ret)));

        let narrowed = mutate(&cert, &MutationKind::ShrinkRange { node: ret.clone(), factor: half.clone() }).unwrap();
        assert!(check_certificate(&narrowed, CheckDomain::Ia).failures_from(Validator::Ranges).count() > 0);

        let flipped = mutate(&cert, &MutationKind::FlipDenominatorZero).unwrap();
        let report = check_certificate(&flipped, CheckDomain::Ia);
        assert_eq!(report.failures_from(Validator::Ranges).count(), 0);
        assert!(report.failures_from(Validator::FpRanges).count() > 0);

        assert!(mutate(&cert, &MutationKind::ShrinkError { node: Expr::var("nope"), factor: half }).is_err());
        assert!(mutate(&cert, &MutationKind::ShrinkError { node: ret, factor: Rational::one() }).is_err());
    }
}
