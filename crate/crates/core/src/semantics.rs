//! Executable semantics: exact real evaluation, IEEE 754 round-to-nearest-even
//! at binary16/32/64, and fixed-point truncation.
//!
//! Rounding is done in software on exact rationals, so every precision
//! (including binary16) is handled the same way and the results are exact.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed};
use thiserror::Error;

use crate::ast::{BinOp, Cmd, Expr, ExprMap, Var};
use crate::numeric::{Precision, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(Var),
    #[error("division by zero at {0}")]
    DivisionByZero(Expr),
    #[error("no type for {0}")]
    MissingType(Expr),
    #[error("program is not in SSA form: `{0}`")]
    NotSsa(Var),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundFlags {
    /// The exact value was nonzero and below the smallest normal magnitude.
    pub subnormal: bool,
    /// The rounded magnitude exceeds the largest finite (or fixed) value.
    pub overflow: bool,
}

impl RoundFlags {
    fn merge(&mut self, other: RoundFlags) {
        self.subnormal |= other.subnormal;
        self.overflow |= other.overflow;
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rounded {
    pub value: Rational,
    pub flags: RoundFlags,
}

/// Rounds `v` into `prec`: nearest-even for floats, truncation toward zero
/// for fixed point, identity for `Real`.
pub fn round_to(v: &Rational, prec: Precision) -> Rounded {
    match prec {
        Precision::Real => Rounded { value: v.clone(), flags: RoundFlags::default() },
        Precision::Fixed { frac, .. } => {
            let scaled = v.abs().scale_pow2(frac as i64).floor();
            let mag = Rational::from_integer(scaled).scale_pow2(-(frac as i64));
            let overflow = mag > prec.fixed_max().expect("fixed");
            let value = if v.is_negative() { -mag } else { mag };
            Rounded { value, flags: RoundFlags { subnormal: false, overflow } }
        }
        float => round_float(v, float),
    }
}

fn round_float(v: &Rational, prec: Precision) -> Rounded {
    let fmt = prec.float_format().expect("float precision");
    let Some(exp) = v.floor_log2() else {
        return Rounded { value: Rational::zero(), flags: RoundFlags::default() };
    };
    let subnormal = exp < fmt.min_exp;
    // quantum of the target binade: ulp = 2^(max(exp, emin) - (p - 1))
    let quantum = exp.max(fmt.min_exp) - (fmt.precision as i64 - 1);
    // |v| / 2^quantum = q + r/d with 0 <= r < d
    let (q, r, d) = match v.dyadic_parts() {
        Some((_, e)) if quantum - e <= 0 => {
            // already on the grid
            let overflow = exp > fmt.max_exp;
            return Rounded { value: v.clone(), flags: RoundFlags { subnormal, overflow } };
        }
        Some((n, e)) => {
            let drop = (quantum - e) as u64;
            let n = n.abs();
            let q = &n >> drop;
            let r = n - (&q << drop);
            (q, r, BigInt::one() << drop)
        }
        None => {
            let num = v.numer().abs();
            let den = v.denom().clone();
            if quantum <= 0 {
                let (q, r) = (num << (-quantum) as u64).div_rem(&den);
                (q, r, den)
            } else {
                let d = den << quantum as u64;
                let (q, r) = num.div_rem(&d);
                (q, r, d)
            }
        }
    };
    let twice = &r << 1u32;
    let round_up = match twice.cmp(&d) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => q.is_odd(),
    };
    let sig = if round_up { q + BigInt::one() } else { q };
    // a p-bit significand overflows exactly when its binade exceeds emax
    let overflow = sig.bits() as i64 - 1 + quantum > fmt.max_exp;
    let mag = Rational::from_dyadic(sig, quantum);
    let value = if v.is_negative() { -mag } else { mag };
    Rounded { value, flags: RoundFlags { subnormal, overflow } }
}

/// Variable bindings: value plus the precision it is held at.
#[derive(Clone, Debug, Default)]
pub struct Env(HashMap<Var, (Rational, Precision)>);

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, var: Var, value: Rational, prec: Precision) {
        self.0.insert(var, (value, prec));
    }

    pub fn get(&self, var: &Var) -> Option<&(Rational, Precision)> {
        self.0.get(var)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalResult {
    pub value: Rational,
    pub precision: Precision,
    pub subnormal_encountered: bool,
    /// Some intermediate overflowed; `value` is then meaningless.
    pub non_finite: bool,
}

#[derive(Clone, Debug)]
enum Node {
    Input(Var),
    Alias(usize),
    Const(Rational),
    Neg(usize),
    Binop(BinOp, usize, usize),
    Fma(usize, usize, usize),
    Cast(usize),
}

/// A program flattened to its distinct sub-expressions in evaluation order.
/// Structurally equal sub-terms are evaluated once.
#[derive(Clone, Debug)]
pub struct Plan {
    exprs: Vec<Expr>,
    nodes: Vec<Node>,
    ret: usize,
}

impl Plan {
    pub fn new(program: &Cmd) -> Result<Plan, EvalError> {
        program.ssa_check().map_err(|v| EvalError::NotSsa(v.0))?;
        let bindings: HashMap<&Var, &Expr> = program.bindings().map(|(v, _, e)| (v, e)).collect();
        let mut index: HashMap<&Expr, usize> = HashMap::new();
        let mut exprs = Vec::new();
        let mut nodes = Vec::new();
        for e in program.unique_subexprs() {
            let idx = |c: &Expr| index[c];
            let node = match e {
                Expr::Var(v) => match bindings.get(v) {
                    Some(bound) => Node::Alias(idx(bound)),
                    None => Node::Input(v.clone()),
                },
                Expr::Const(_, v) => Node::Const(v.clone()),
                Expr::Neg(a) => Node::Neg(idx(a)),
                Expr::Binop(op, a, b) => Node::Binop(*op, idx(a), idx(b)),
                Expr::Fma(a, b, c) => Node::Fma(idx(a), idx(b), idx(c)),
                Expr::Downcast(_, a) => Node::Cast(idx(a)),
            };
            index.insert(e, nodes.len());
            nodes.push(node);
            exprs.push(e.clone());
        }
        let ret = index[program.ret_expr()];
        Ok(Plan { exprs, nodes, ret })
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn ret_index(&self) -> usize {
        self.ret
    }

    /// Exact evaluation at infinite precision.
    pub fn eval_real(&self, env: &Env) -> Result<Rational, EvalError> {
        let mut values: Vec<Rational> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let v = match node {
                Node::Input(var) => env.get(var).ok_or_else(|| EvalError::UnboundVariable(var.clone()))?.0.clone(),
                Node::Alias(a) | Node::Cast(a) => values[*a].clone(),
                Node::Const(c) => c.clone(),
                Node::Neg(a) => -&values[*a],
                Node::Binop(op, a, b) => self.binop(i, *op, &values[*a], &values[*b])?,
                Node::Fma(a, b, c) => &values[*a] * &values[*b] + &values[*c],
            };
            values.push(v);
        }
        Ok(values.swap_remove(self.ret))
    }

    /// Evaluation where each node is rounded to its type in `types`.
    pub fn eval_finite(&self, env: &Env, types: &ExprMap<Precision>) -> Result<EvalResult, EvalError> {
        self.eval_finite_observed(env, types, |_, _, _| {})
    }

    /// Like [`Plan::eval_finite`], calling `observe(node, value, flags)` for
    /// every node as it is computed.
    pub fn eval_finite_observed(
        &self,
        env: &Env,
        types: &ExprMap<Precision>,
        mut observe: impl FnMut(usize, &Rational, RoundFlags),
    ) -> Result<EvalResult, EvalError> {
        let mut values: Vec<Rational> = Vec::with_capacity(self.nodes.len());
        let mut flags = RoundFlags::default();
        let mut ret_prec = Precision::Real;
        for (i, node) in self.nodes.iter().enumerate() {
            let prec = *types.get(&self.exprs[i]).ok_or_else(|| EvalError::MissingType(self.exprs[i].clone()))?;
            let exact = match node {
                Node::Input(var) => env.get(var).ok_or_else(|| EvalError::UnboundVariable(var.clone()))?.0.clone(),
                Node::Alias(a) | Node::Cast(a) => values[*a].clone(),
                Node::Const(c) => c.clone(),
                Node::Neg(a) => -&values[*a],
                Node::Binop(op, a, b) => self.binop(i, *op, &values[*a], &values[*b])?,
                Node::Fma(a, b, c) => &values[*a] * &values[*b] + &values[*c],
            };
            let rounded = round_to(&exact, prec);
            flags.merge(rounded.flags);
            observe(i, &rounded.value, rounded.flags);
            if i == self.ret {
                ret_prec = prec;
            }
            values.push(rounded.value);
        }
        Ok(EvalResult {
            value: values.swap_remove(self.ret),
            precision: ret_prec,
            subnormal_encountered: flags.subnormal,
            non_finite: flags.overflow,
        })
    }

    fn binop(&self, i: usize, op: BinOp, a: &Rational, b: &Rational) -> Result<Rational, EvalError> {
        Ok(match op {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a.checked_div(b).map_err(|_| EvalError::DivisionByZero(self.exprs[i].clone()))?,
        })
    }
}

/// Exact real-valued result of `program`.
pub fn eval_real(program: &Cmd, env: &Env) -> Result<Rational, EvalError> {
    Plan::new(program)?.eval_real(env)
}

/// Finite-precision result of `program` under the full type map `types`.
pub fn eval_finite(program: &Cmd, env: &Env, types: &ExprMap<Precision>) -> Result<EvalResult, EvalError> {
    Plan::new(program)?.eval_finite(env, types)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Expr;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d).unwrap()
    }

    fn all_types(program: &Cmd, prec: Precision) -> ExprMap<Precision> {
        program.unique_subexprs().into_iter().map(|e| (e.clone(), prec)).collect()
    }

    #[test]
    fn round_tenth_to_binary64() {
        let r = round_to(&q(1, 10), Precision::F64);
        // oracle: the hardware decimal parser
        assert_eq!(r.value, Rational::from_f64(0.1).unwrap());
        assert_eq!(r.value, Rational::from(3602879701896397).scale_pow2(-55));
        assert_eq!(r.flags, RoundFlags::default());
    }

    #[test]
    fn round_subnormal_tie_to_even_zero() {
        let r = round_to(&Rational::pow2(-1075), Precision::F64);
        assert_eq!(r.value, Rational::zero());
        assert!(r.flags.subnormal);
        let r = round_to(&(Rational::pow2(-1075) * Rational::from(3)), Precision::F64);
        // 1.5 quanta rounds to the even neighbour 2 quanta
        assert_eq!(r.value, Rational::pow2(-1073));
        assert_eq!(r.value, Rational::from_f64(f64::from_bits(2)).unwrap());
    }

    #[test]
    fn round_overflow_flags() {
        let max = Precision::F16.float_limits().unwrap().max_finite;
        assert!(!round_to(&max, Precision::F16).flags.overflow);
        assert!(round_to(&Rational::from(65520), Precision::F16).flags.overflow);
        assert!(!round_to(&Rational::from(65519), Precision::F16).flags.overflow);
        assert!(round_to(&Rational::pow2(1024), Precision::F64).flags.overflow);
    }

    #[test]
    fn fixed_truncates_toward_zero() {
        let fmt = Precision::Fixed { word: 8, frac: 4 };
        let r = round_to(&q(-5, 3), fmt);
        assert_eq!(r.value, q(-26, 16));
        assert!(!r.flags.overflow);
        assert_eq!(round_to(&q(5, 3), fmt).value, q(26, 16));
        assert!(round_to(&Rational::from(8), fmt).flags.overflow);
        assert!(!round_to(&q(127, 16), fmt).flags.overflow);
    }

    #[test]
    fn real_is_identity() {
        assert_eq!(round_to(&q(1, 3), Precision::Real).value, q(1, 3));
    }

    #[test]
    fn eval_real_examples() {
        let c = |v| Expr::constant(Precision::F64, v);
        let prog = Cmd::Ret(Expr::add(c(q(1, 10)), c(q(2, 10))));
        assert_eq!(eval_real(&prog, &Env::new()).unwrap(), q(3, 10));

        let mut env = Env::new();
        env.bind(Var::new("x"), q(3, 2), Precision::F64);
        let sq = Cmd::Ret(Expr::mul(Expr::var("x"), Expr::var("x")));
        assert_eq!(eval_real(&sq, &env).unwrap(), q(9, 4));

        let mut zero = Env::new();
        zero.bind(Var::new("x"), Rational::zero(), Precision::F64);
        let inv = Cmd::Ret(Expr::div(c(Rational::one()), Expr::var("x")));
        assert!(matches!(eval_real(&inv, &zero), Err(EvalError::DivisionByZero(_))));
        assert!(matches!(eval_real(&sq, &Env::new()), Err(EvalError::UnboundVariable(_))));
    }

    #[test]
    fn eval_finite_tenth_plus_fifth() {
        let c = |v| Expr::constant(Precision::F64, v);
        let prog = Cmd::Ret(Expr::add(c(q(1, 10)), c(q(2, 10))));
        let types = all_types(&prog, Precision::F64);
        let r = eval_finite(&prog, &Env::new(), &types).unwrap();
        assert_eq!(r.value, Rational::from_f64(0.1 + 0.2).unwrap());
        assert_ne!(r.value, q(3, 10));
        assert_eq!(r.precision, Precision::F64);
    }

    #[test]
    fn eval_finite_real_types_match_eval_real() {
        let prog = Cmd::let_in(
            "t",
            Precision::Real,
            Expr::div(Expr::var("x"), Expr::constant(Precision::Real, Rational::from(3))),
            Cmd::Ret(Expr::fma(Expr::var("t"), Expr::var("x"), Expr::neg(Expr::var("x")))),
        );
        let mut env = Env::new();
        env.bind(Var::new("x"), q(7, 5), Precision::Real);
        let types = all_types(&prog, Precision::Real);
        assert_eq!(eval_finite(&prog, &env, &types).unwrap().value, eval_real(&prog, &env).unwrap());
    }

    #[test]
    fn eval_fixed_square() {
        let prog = Cmd::Ret(Expr::mul(Expr::var("x"), Expr::var("x")));
        let fmt = Precision::Fixed { word: 8, frac: 4 };
        let mut env = Env::new();
        env.bind(Var::new("x"), q(5, 4), fmt);
        let r = eval_finite(&prog, &env, &all_types(&prog, fmt)).unwrap();
        assert_eq!(r.value, q(25, 16));
        assert!(!r.non_finite);
    }

    #[test]
    fn fma_rounds_once() {
        let prog = Cmd::Ret(Expr::fma(Expr::var("a"), Expr::var("b"), Expr::var("c")));
        let (a, b, c) = (1.0 + f64::EPSILON, 1.0 - f64::EPSILON, -1.0);
        let mut env = Env::new();
        for (n, v) in [("a", a), ("b", b), ("c", c)] {
            env.bind(Var::new(n), Rational::from_f64(v).unwrap(), Precision::F64);
        }
        let r = eval_finite(&prog, &env, &all_types(&prog, Precision::F64)).unwrap();
        assert_eq!(r.value, Rational::from_f64(a.mul_add(b, c)).unwrap());
        assert_ne!(r.value, Rational::from_f64(a * b + c).unwrap());
    }

    #[test]
    fn overflow_sets_non_finite() {
        let prog = Cmd::Ret(Expr::mul(Expr::var("x"), Expr::var("x")));
        let mut env = Env::new();
        env.bind(Var::new("x"), Rational::from(300), Precision::F16);
        let r = eval_finite(&prog, &env, &all_types(&prog, Precision::F16)).unwrap();
        assert!(r.non_finite);
    }

    fn float_prec() -> impl Strategy<Value = Precision> {
        prop_oneof![Just(Precision::F16), Just(Precision::F32), Just(Precision::F64)]
    }

    proptest! {
        #[test]
        fn rounding_is_idempotent(n in -1_000_000_000i64..1_000_000_000, d in 1i64..1_000_000, p in float_prec(), frac in 0i32..20) {
            let v = q(n, d);
            for prec in [p, Precision::Fixed { word: 64, frac }] {
                let once = round_to(&v, prec).value;
                prop_assert_eq!(round_to(&once, prec).value, once);
            }
        }

        #[test]
        fn fixed_truncation_bound(n in -1_000_000i64..1_000_000, d in 1i64..10_000, frac in 0i32..24) {
            let v = q(n, d);
            let prec = Precision::Fixed { word: 48, frac };
            let r = round_to(&v, prec);
            prop_assert!(!r.flags.overflow);
            let loss = v.abs() - r.value.abs();
            prop_assert!(!loss.is_negative());
            prop_assert!(loss < Rational::pow2(-(frac as i64)));
        }
    }
}
