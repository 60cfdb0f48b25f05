//! Certificate generation: bottom-up range and error analysis whose results
//! the checker accepts by construction.

use std::collections::HashMap;

use thiserror::Error;

use crate::affine::NoiseAllocator;
use crate::ast::{Cmd, Expr, ExprMap, Precondition, Var};
use crate::checker::{
    aa_step, ia_step, required_error, validate_fp_ranges, validate_types, Certificate, Failure, RangeDomain, StepError,
};
use crate::interval::Interval;
use crate::numeric::{Precision, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum InputErrorPolicy {
    /// Free variables carry the representation error of their type.
    #[default]
    Representation,
    /// Free variables are assumed exactly representable.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisConfig {
    pub range_domain: RangeDomain,
    /// Type of free variables missing from the type map.
    pub default_precision: Precision,
    pub input_errors: InputErrorPolicy,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            range_domain: RangeDomain::Ia,
            default_precision: Precision::F64,
            input_errors: InputErrorPolicy::Representation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("program is not in SSA form: `{0}` is bound twice or shadows a free variable")]
    NotSsa(Var),
    #[error("type inference failed: {}", join_failures(.0))]
    Types(Vec<Failure>),
    #[error("no precondition for free variable `{0}`")]
    MissingPrecondition(Var),
    #[error("denominator range {range} of {node} contains zero")]
    DivisionByZero { node: Expr, range: Box<Interval> },
    #[error("results not representable: {}", join_failures(.0))]
    NotRepresentable(Vec<Failure>),
    #[error("range {range} of {node} needs more than {word} bits")]
    RangeTooLarge { node: Expr, range: Box<Interval>, word: u32 },
    #[error("word length {0} is too small for fixed-point formats")]
    WordLength(u32),
}

fn join_failures(failures: &[Failure]) -> String {
    failures.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl AnalysisError {
    /// Node the error is attributed to, if any.
    pub fn node(&self) -> Option<&Expr> {
        match self {
            AnalysisError::DivisionByZero { node, .. } | AnalysisError::RangeTooLarge { node, .. } => Some(node),
            AnalysisError::Types(f) | AnalysisError::NotRepresentable(f) => f.first().and_then(|f| f.expr.as_ref()),
            _ => None,
        }
    }
}

fn step_error(node: &Expr, err: StepError) -> AnalysisError {
    match err {
        StepError::MissingPrecondition(v) => AnalysisError::MissingPrecondition(v),
        StepError::DivisionByZero(range) => AnalysisError::DivisionByZero { node: node.clone(), range },
        StepError::MissingChild => unreachable!("children are analyzed first"),
    }
}

/// Real-valued ranges of every node in the chosen domain.
pub fn analyze_ranges(
    program: &Cmd,
    precond: &Precondition,
    domain: RangeDomain,
) -> Result<ExprMap<Interval>, AnalysisError> {
    let bindings = program.binding_map();
    let mut ranges = ExprMap::new();
    match domain {
        RangeDomain::Ia => {
            for e in program.unique_subexprs() {
                let r = ia_step(e, &bindings, precond, |c| ranges.get(c)).map_err(|err| step_error(e, err))?;
                ranges.insert(e.clone(), r);
            }
        }
        RangeDomain::Aa => {
            let mut forms = HashMap::new();
            let mut alloc = NoiseAllocator::new();
            for e in program.unique_subexprs() {
                let form = aa_step(e, &bindings, precond, &forms, &mut alloc).map_err(|err| step_error(e, err))?;
                ranges.insert(e.clone(), form.to_interval());
                forms.insert(e.clone(), form);
            }
        }
    }
    Ok(ranges)
}

/// Certificate without the final representability check.
fn analyze_unchecked(
    program: &Cmd,
    precond: &Precondition,
    gamma: &ExprMap<Precision>,
    cfg: &AnalysisConfig,
) -> Result<(Certificate, ExprMap<Precision>), AnalysisError> {
    program.ssa_check().map_err(|v| AnalysisError::NotSsa(v.0))?;
    let mut gamma = gamma.clone();
    let bindings = program.binding_map();
    for v in program.free_vars() {
        let key = Expr::Var(v);
        if !gamma.contains_key(&key) {
            gamma.insert(key, cfg.default_precision);
        }
    }
    let types = validate_types(&gamma, program).map_err(AnalysisError::Types)?;
    let ranges = analyze_ranges(program, precond, cfg.range_domain)?;
    let mut errors = ExprMap::new();
    for e in program.unique_subexprs() {
        let free_input = matches!(e, Expr::Var(v) if !bindings.contains_key(v));
        let err = if free_input && cfg.input_errors == InputErrorPolicy::Exact {
            Rational::zero()
        } else {
            match required_error(e, &bindings, &types, &ranges, &errors) {
                Ok(err) => err,
                Err(crate::checker::RuleError::DivisionByZero(range)) => {
                    return Err(AnalysisError::DivisionByZero { node: e.clone(), range })
                }
                Err(other) => unreachable!("analysis maps are complete: {other}"),
            }
        };
        errors.insert(e.clone(), err);
    }
    let cert = Certificate { program: program.clone(), gamma, precond: precond.clone(), ranges, errors };
    Ok((cert, types))
}

/// Computes ranges and error bounds for every subexpression.
///
/// The emitted error bounds are exactly the checker's required bounds, so
/// the certificate passes `check_certificate` in the same range domain.
/// Fails if some result may not be representable at its type.
pub fn analyze(
    program: &Cmd,
    precond: &Precondition,
    gamma: &ExprMap<Precision>,
    cfg: &AnalysisConfig,
) -> Result<Certificate, AnalysisError> {
    let (cert, types) = analyze_unchecked(program, precond, gamma, cfg)?;
    let failures = validate_fp_ranges(&cert.program, &types, &cert.ranges, &cert.errors);
    if !failures.is_empty() {
        return Err(AnalysisError::NotRepresentable(failures));
    }
    Ok(cert)
}

/// Fixed-point program with every node typed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedAssignment {
    /// Program with constant, let and cast annotations set to the chosen formats.
    pub program: Cmd,
    /// Type of every node of `program`.
    pub gamma: ExprMap<Precision>,
    /// Fractional bits chosen for each node of the original program.
    pub formats: ExprMap<Precision>,
}

/// Largest fractional bit count `f <= word - 1` such that `mag` fits in
/// `Fixed(word, f)`.
pub fn frac_bits_for(mag: &Rational, word: u32) -> Option<i32> {
    let max_int = Rational::from((1i64 << (word - 1)) - 1);
    let mut f = word as i32 - 1;
    if !mag.is_zero() {
        // start near the answer, then settle exactly
        let lg = mag.floor_log2().expect("nonzero");
        f = f.min(word as i32 - 2 - lg as i32);
        while f < word as i32 - 1 && mag.scale_pow2(f as i64 + 1) <= max_int {
            f += 1;
        }
        while mag.scale_pow2(f as i64) > max_int {
            f -= 1;
        }
    }
    (f >= 1).then_some(f)
}

/// Rewrites annotations of `program` to fixed-point formats from `fracs`
/// (keyed by original nodes) and returns the rewritten node of each original.
fn apply_formats(program: &Cmd, fracs: &HashMap<Expr, i32>, word: u32) -> (Cmd, HashMap<Expr, Expr>) {
    fn rewrite(e: &Expr, fracs: &HashMap<Expr, i32>, word: u32, memo: &mut HashMap<Expr, Expr>) -> Expr {
        if let Some(done) = memo.get(e) {
            return done.clone();
        }
        let fx = Precision::Fixed { word, frac: fracs[e] };
        let mut go = |c: &Expr| rewrite(c, fracs, word, memo);
        let out = match e {
            Expr::Var(_) => e.clone(),
            Expr::Const(_, v) => Expr::constant(fx, v.clone()),
            Expr::Neg(a) => Expr::neg(go(a)),
            Expr::Binop(op, a, b) => {
                let (a, b) = (go(a), go(b));
                Expr::binop(*op, a, b)
            }
            Expr::Fma(a, b, c) => {
                let (a, b, c) = (go(a), go(b), go(c));
                Expr::fma(a, b, c)
            }
            Expr::Downcast(_, a) => Expr::downcast(fx, go(a)),
        };
        memo.insert(e.clone(), out.clone());
        out
    }
    fn rebuild(c: &Cmd, fracs: &HashMap<Expr, i32>, word: u32, memo: &mut HashMap<Expr, Expr>) -> Cmd {
        match c {
            Cmd::Let { var, bound, body, .. } => {
                let prec = Precision::Fixed { word, frac: fracs[bound] };
                let bound = rewrite(bound, fracs, word, memo);
                Cmd::Let { var: var.clone(), prec, bound, body: Box::new(rebuild(body, fracs, word, memo)) }
            }
            Cmd::Ret(e) => Cmd::Ret(rewrite(e, fracs, word, memo)),
        }
    }
    let mut memo = HashMap::new();
    let program = rebuild(program, fracs, word, &mut memo);
    (program, memo)
}

/// Chooses a `Fixed(word, f)` format for every node so that its
/// finite-precision range fits, then types the rewritten program.
///
/// Formats start from the real ranges in `domain` and lose fractional bits
/// until the ranges widened by the resulting error bounds fit as well.
pub fn assign_fixed_formats(
    program: &Cmd,
    precond: &Precondition,
    word: u32,
    domain: RangeDomain,
) -> Result<FixedAssignment, AnalysisError> {
    if !(2..=63).contains(&word) {
        return Err(AnalysisError::WordLength(word));
    }
    program.ssa_check().map_err(|v| AnalysisError::NotSsa(v.0))?;
    let bindings = program.binding_map();
    let ranges = analyze_ranges(program, precond, domain)?;
    let nodes: Vec<Expr> = program.unique_subexprs().into_iter().cloned().collect();
    let too_large = |node: &Expr, range: Interval| AnalysisError::RangeTooLarge {
        node: node.clone(),
        range: Box::new(range),
        word,
    };

    let mut fracs: HashMap<Expr, i32> = HashMap::new();
    for e in &nodes {
        let f = match e {
            Expr::Var(v) if bindings.contains_key(v) => fracs[&bindings[v].bound],
            _ => frac_bits_for(&ranges.get(e).expect("analyzed").max_abs(), word)
                .ok_or_else(|| too_large(e, ranges.get(e).cloned().expect("analyzed")))?,
        };
        fracs.insert(e.clone(), f);
    }

    let cfg = AnalysisConfig { range_domain: domain, default_precision: Precision::Real, ..AnalysisConfig::default() };
    loop {
        let (rewritten, image) = apply_formats(program, &fracs, word);
        let gamma: ExprMap<Precision> =
            nodes.iter().map(|e| (image[e].clone(), Precision::Fixed { word, frac: fracs[e] })).collect();
        let (cert, _) = analyze_unchecked(&rewritten, precond, &gamma, &cfg)?;
        let mut changed = false;
        for e in &nodes {
            if let Expr::Var(v) = e {
                if let Some(b) = bindings.get(v) {
                    let f = fracs[&b.bound];
                    changed |= fracs.insert(e.clone(), f) != Some(f);
                    continue;
                }
            }
            let node = &image[e];
            let fp = cert.ranges.get(node).expect("analyzed").widen(cert.errors.get(node).expect("analyzed"));
            let f = frac_bits_for(&fp.max_abs(), word).ok_or_else(|| too_large(e, fp.clone()))?;
            if f < fracs[e] {
                fracs.insert(e.clone(), f);
                changed = true;
            }
        }
        if !changed {
            let formats = nodes.iter().map(|e| (e.clone(), Precision::Fixed { word, frac: fracs[e] })).collect();
            return Ok(FixedAssignment { program: rewritten, gamma, formats });
        }
    }
}

/// Sets every constant, let and cast annotation to `prec` and types all free
/// variables as `prec`.
pub fn retype_uniform(program: &Cmd, prec: Precision) -> (Cmd, ExprMap<Precision>) {
    fn expr(e: &Expr, prec: Precision) -> Expr {
        match e {
            Expr::Var(_) => e.clone(),
            Expr::Const(_, v) => Expr::constant(prec, v.clone()),
            Expr::Neg(a) => Expr::neg(expr(a, prec)),
            Expr::Binop(op, a, b) => Expr::binop(*op, expr(a, prec), expr(b, prec)),
            Expr::Fma(a, b, c) => Expr::fma(expr(a, prec), expr(b, prec), expr(c, prec)),
            // a cast to the uniform type is a no-op
            Expr::Downcast(_, a) => expr(a, prec),
        }
    }
    fn cmd(c: &Cmd, prec: Precision) -> Cmd {
        match c {
            Cmd::Let { var, bound, body, .. } => {
                Cmd::Let { var: var.clone(), prec, bound: expr(bound, prec), body: Box::new(cmd(body, prec)) }
            }
            Cmd::Ret(e) => Cmd::Ret(expr(e, prec)),
        }
    }
    let gamma = program.free_vars().into_iter().map(|v| (Expr::Var(v), prec)).collect();
    (cmd(program, prec), gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::check_certificate;

    fn int(lo: i64, hi: i64) -> Interval {
        Interval::new(Rational::from(lo), Rational::from(hi)).unwrap()
    }

    fn precond(entries: &[(&str, Interval)]) -> Precondition {
        entries.iter().map(|(n, i)| (Var::new(n), i.clone())).collect()
    }

    fn f64_gamma(names: &[&str]) -> ExprMap<Precision> {
        names.iter().map(|n| (Expr::var(n), Precision::F64)).collect()
    }

    #[test]
    fn exact_inputs_add_example() {
        let sum = Expr::add(Expr::var("x"), Expr::var("y"));
        let prog = Cmd::Ret(sum.clone());
        let p = precond(&[("x", int(1, 2)), ("y", int(1, 2))]);
        let cfg = AnalysisConfig { input_errors: InputErrorPolicy::Exact, ..AnalysisConfig::default() };
        let cert = analyze(&prog, &p, &f64_gamma(&["x", "y"]), &cfg).unwrap();
        assert_eq!(cert.errors.get(&sum), Some(&Rational::pow2(-51)));
    }

    #[test]
    fn representation_policy_passes_checker() {
        let prog = Cmd::let_in(
            "t",
            Precision::F64,
            Expr::mul(Expr::var("x"), Expr::var("x")),
            Cmd::Ret(Expr::div(
                Expr::var("t"),
                Expr::add(Expr::var("x"), Expr::constant(Precision::F32, Rational::new(1, 10).unwrap())),
            )),
        );
        let p = precond(&[("x", int(1, 2))]);
        for domain in [RangeDomain::Ia, RangeDomain::Aa] {
            let cfg = AnalysisConfig { range_domain: domain, ..AnalysisConfig::default() };
            let cert = analyze(&prog, &p, &ExprMap::new(), &cfg).unwrap();
            let report = check_certificate(&cert, domain.into());
            assert!(report.passed(), "{:?}", report.failures);
        }
    }

    #[test]
    fn aa_removes_correlation() {
        let d = Expr::sub(Expr::var("x"), Expr::var("x"));
        let prog = Cmd::Ret(d.clone());
        let p = precond(&[("x", int(0, 1))]);
        let cfg = AnalysisConfig { range_domain: RangeDomain::Aa, ..AnalysisConfig::default() };
        let cert = analyze(&prog, &p, &f64_gamma(&["x"]), &cfg).unwrap();
        assert_eq!(cert.ranges.get(&d), Some(&int(0, 0)));
    }

    #[test]
    fn division_by_zero_names_node() {
        let q = Expr::div(Expr::constant(Precision::F64, Rational::one()), Expr::var("x"));
        let prog = Cmd::Ret(q.clone());
        let p = precond(&[("x", int(-1, 1))]);
        let err = analyze(&prog, &p, &f64_gamma(&["x"]), &AnalysisConfig::default()).unwrap_err();
        assert_eq!(err.node(), Some(&q));
    }

    #[test]
    fn overflow_is_reported() {
        let sq = Expr::mul(Expr::var("x"), Expr::var("x"));
        let prog = Cmd::Ret(sq);
        let p = precond(&[("x", int(0, 1000))]);
        let gamma = [(Expr::var("x"), Precision::F16)].into_iter().collect();
        assert!(matches!(
            analyze(&prog, &p, &gamma, &AnalysisConfig::default()),
            Err(AnalysisError::NotRepresentable(_))
        ));
    }

    #[test]
    fn frac_bits_examples() {
        // 1 itself needs one integer bit besides the sign
        assert_eq!(frac_bits_for(&Rational::one(), 32), Some(30));
        assert_eq!(frac_bits_for(&Rational::new(1, 2).unwrap(), 32), Some(31));
        assert_eq!(frac_bits_for(&Rational::from(100), 16), Some(8));
        assert_eq!(frac_bits_for(&Rational::pow2(40), 32), None);
        assert_eq!(frac_bits_for(&Rational::zero(), 16), Some(15));
    }

    // Oracle: the representable bound (2^(w-1)-1)/2^f, searched from f = w-1 down.
    #[test]
    fn frac_bits_agrees_with_search() {
        for word in [8u32, 16, 32] {
            for k in -20i64..40 {
                for num in [1i64, 3, 5, 7] {
                    let mag = Rational::from(num).scale_pow2(k);
                    let max_int = Rational::from((1i64 << (word - 1)) - 1);
                    let expected = (1..word as i32).rev().find(|f| mag.scale_pow2(*f as i64) <= max_int);
                    assert_eq!(frac_bits_for(&mag, word), expected, "{mag} {word}");
                }
            }
        }
    }

    #[test]
    fn fixed_assignment_passes_checker() {
        let prog = Cmd::let_in(
            "t",
            Precision::F64,
            Expr::mul(Expr::var("x"), Expr::var("y")),
            Cmd::Ret(Expr::sub(
                Expr::var("t"),
                Expr::div(Expr::var("x"), Expr::constant(Precision::F64, Rational::from(3))),
            )),
        );
        let p = precond(&[("x", int(-100, 100)), ("y", int(1, 4))]);
        for word in [16u32, 32] {
            for domain in [RangeDomain::Ia, RangeDomain::Aa] {
                let fixed = assign_fixed_formats(&prog, &p, word, domain).unwrap();
                assert_eq!(fixed.gamma.len(), fixed.program.unique_subexprs().len());
                let cfg = AnalysisConfig { range_domain: domain, ..AnalysisConfig::default() };
                let cert = analyze(&fixed.program, &p, &fixed.gamma, &cfg).unwrap();
                let report = check_certificate(&cert, domain.into());
                assert!(report.passed(), "{:?}", report.failures);
            }
        }
        let huge =
            precond(&[("x", int(-100, 100)), ("y", Interval::new(Rational::one(), Rational::pow2(40)).unwrap())]);
        assert!(matches!(
            assign_fixed_formats(&prog, &huge, 32, RangeDomain::Ia),
            Err(AnalysisError::RangeTooLarge { .. })
        ));
    }

    #[test]
    fn retype_uniform_rewrites_annotations() {
        let prog = Cmd::let_in(
            "t",
            Precision::F64,
            Expr::downcast(Precision::F32, Expr::var("x")),
            Cmd::Ret(Expr::add(Expr::var("t"), Expr::constant(Precision::F64, Rational::one()))),
        );
        let (p16, gamma) = retype_uniform(&prog, Precision::F16);
        let types = validate_types(&gamma, &p16).unwrap();
        assert!(types.iter().all(|(_, p)| *p == Precision::F16));
    }
}
