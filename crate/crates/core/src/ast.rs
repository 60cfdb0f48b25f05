//! Straight-line programs: expressions, let-chains, and maps keyed by
//! structural expression identity.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::interval::{ArithOp, Interval};
use crate::numeric::{Precision, Rational};

/// Variable name.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Self {
        Var(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Var {
    fn from(name: &str) -> Self {
        Var::new(name)
    }
}

impl Borrow<str> for Var {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn arith(self) -> ArithOp {
        match self {
            BinOp::Add => ArithOp::Add,
            BinOp::Sub => ArithOp::Sub,
            BinOp::Mul => ArithOp::Mul,
            BinOp::Div => ArithOp::Div,
        }
    }
}

/// Arithmetic expression. Children are shared so that sub-terms can be used
/// as map keys without deep copies.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(Var),
    Const(Precision, Rational),
    /// Negation; exact, keeps the operand's precision.
    Neg(Arc<Expr>),
    Binop(BinOp, Arc<Expr>, Arc<Expr>),
    /// `e1 * e2 + e3`, rounded once.
    Fma(Arc<Expr>, Arc<Expr>, Arc<Expr>),
    /// Explicit conversion to the annotated precision.
    Downcast(Precision, Arc<Expr>),
}

// constructors named after the operators they build
#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(Var::new(name))
    }

    pub fn constant(prec: Precision, value: Rational) -> Expr {
        Expr::Const(prec, value)
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Arc::new(e))
    }

    pub fn binop(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binop(op, Arc::new(lhs), Arc::new(rhs))
    }

    pub fn add(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binop(BinOp::Add, lhs, rhs)
    }

    pub fn sub(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binop(BinOp::Sub, lhs, rhs)
    }

    pub fn mul(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binop(BinOp::Mul, lhs, rhs)
    }

    pub fn div(lhs: Expr, rhs: Expr) -> Expr {
        Expr::binop(BinOp::Div, lhs, rhs)
    }

    pub fn fma(a: Expr, b: Expr, c: Expr) -> Expr {
        Expr::Fma(Arc::new(a), Arc::new(b), Arc::new(c))
    }

    pub fn downcast(prec: Precision, e: Expr) -> Expr {
        Expr::Downcast(prec, Arc::new(e))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Var(_) | Expr::Const(..) => Vec::new(),
            Expr::Neg(e) | Expr::Downcast(_, e) => vec![e],
            Expr::Binop(_, a, b) => vec![a, b],
            Expr::Fma(a, b, c) => vec![a, b, c],
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        if let Expr::Var(v) = self {
            out.insert(v.clone());
        }
        for c in self.children() {
            c.collect_vars(out);
        }
    }

    fn post_order<'a>(&'a self, out: &mut Vec<&'a Expr>) {
        for c in self.children() {
            c.post_order(out);
        }
        out.push(self);
    }

    /// Arithmetic operations (negation, binary operators, FMA) in the tree.
    pub fn op_count(&self) -> usize {
        let own = matches!(self, Expr::Neg(_) | Expr::Binop(..) | Expr::Fma(..)) as usize;
        own + self.children().into_iter().map(Expr::op_count).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().into_iter().map(Expr::depth).max().unwrap_or(0)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(v) => write!(f, "(var {v})"),
            Expr::Const(p, v) => write!(f, "(const {p} {v})"),
            Expr::Neg(e) => write!(f, "(neg {e})"),
            Expr::Binop(op, a, b) => write!(f, "({} {a} {b})", op.symbol()),
            Expr::Fma(a, b, c) => write!(f, "(fma {a} {b} {c})"),
            Expr::Downcast(p, e) => write!(f, "(cast {p} {e})"),
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// A let-chain ending in a single return.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Cmd {
    Let { var: Var, prec: Precision, bound: Expr, body: Box<Cmd> },
    Ret(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("program is not in SSA form: `{0}` is bound more than once or shadows an input")]
pub struct SsaViolation(pub Var);

/// A let-bound variable with its annotation and defining expression.
#[derive(Clone, Debug)]
pub struct Binding {
    pub prec: Precision,
    pub bound: Expr,
}

impl Cmd {
    pub fn let_in(var: &str, prec: Precision, bound: Expr, body: Cmd) -> Cmd {
        Cmd::Let { var: Var::new(var), prec, bound, body: Box::new(body) }
    }

    /// Iterates over `(var, prec, bound)` in program order.
    pub fn bindings(&self) -> impl Iterator<Item = (&Var, Precision, &Expr)> {
        let mut cur = self;
        std::iter::from_fn(move || match cur {
            Cmd::Let { var, prec, bound, body } => {
                cur = body;
                Some((var, *prec, bound))
            }
            Cmd::Ret(_) => None,
        })
    }

    pub fn ret_expr(&self) -> &Expr {
        let mut cur = self;
        loop {
            match cur {
                Cmd::Let { body, .. } => cur = body,
                Cmd::Ret(e) => return e,
            }
        }
    }

    /// Let-bound variables keyed by name. Later bindings win, so callers
    /// should run [`Cmd::ssa_check`] first.
    pub fn binding_map(&self) -> HashMap<Var, Binding> {
        self.bindings().map(|(v, prec, bound)| (v.clone(), Binding { prec, bound: bound.clone() })).collect()
    }

    /// Variables used without being let-bound before their use.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        match self {
            Cmd::Ret(e) => e.free_vars(),
            Cmd::Let { var, bound, body, .. } => {
                let mut out = body.free_vars();
                out.remove(var);
                out.extend(bound.free_vars());
                out
            }
        }
    }

    pub fn defined_vars(&self) -> Vec<Var> {
        self.bindings().map(|(v, _, _)| v.clone()).collect()
    }

    /// Every let-bound name must be fresh: not free anywhere in the program
    /// and not bound earlier.
    pub fn ssa_check(&self) -> Result<(), SsaViolation> {
        let free = self.free_vars();
        let mut seen = HashSet::new();
        for (var, _, _) in self.bindings() {
            if free.contains(var) || !seen.insert(var) {
                return Err(SsaViolation(var.clone()));
            }
        }
        Ok(())
    }

    /// Post-order list of all expression nodes, bindings first, duplicates
    /// included.
    pub fn subexprs(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        for (_, _, bound) in self.bindings() {
            bound.post_order(&mut out);
        }
        self.ret_expr().post_order(&mut out);
        out
    }

    /// Like [`Cmd::subexprs`], keeping only the first occurrence of each
    /// structurally distinct node.
    pub fn unique_subexprs(&self) -> Vec<&Expr> {
        let mut seen = HashSet::new();
        self.subexprs().into_iter().filter(|e| seen.insert(*e)).collect()
    }

    pub fn op_count(&self) -> usize {
        self.bindings().map(|(_, _, e)| e.op_count()).sum::<usize>() + self.ret_expr().op_count()
    }

    pub fn max_depth(&self) -> usize {
        self.bindings().map(|(_, _, e)| e.depth()).chain(std::iter::once(self.ret_expr().depth())).max().unwrap_or(0)
    }
}

impl fmt::Display for Cmd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cmd::Let { var, prec, bound, body } => write!(f, "(let {var} {prec} {bound} {body})"),
            Cmd::Ret(e) => write!(f, "(ret {e})"),
        }
    }
}

impl fmt::Debug for Cmd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Finite map from structural expressions to `V`.
#[derive(Clone, PartialEq, Eq)]
pub struct ExprMap<V>(HashMap<Expr, V>);

impl<V> Default for ExprMap<V> {
    fn default() -> Self {
        ExprMap(HashMap::new())
    }
}

impl<V> ExprMap<V> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, e: &Expr) -> Option<&V> {
        self.0.get(e)
    }

    pub fn get_var(&self, v: &Var) -> Option<&V> {
        self.0.get(&Expr::Var(v.clone()))
    }

    pub fn get_mut(&mut self, e: &Expr) -> Option<&mut V> {
        self.0.get_mut(e)
    }

    /// Returns the previous value, if any.
    pub fn insert(&mut self, e: Expr, v: V) -> Option<V> {
        self.0.insert(e, v)
    }

    pub fn remove(&mut self, e: &Expr) -> Option<V> {
        self.0.remove(e)
    }

    pub fn contains_key(&self, e: &Expr) -> bool {
        self.0.contains_key(e)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Expr, &V)> {
        self.0.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &Expr> {
        self.0.keys()
    }
}

impl<V> FromIterator<(Expr, V)> for ExprMap<V> {
    fn from_iter<I: IntoIterator<Item = (Expr, V)>>(iter: I) -> Self {
        ExprMap(iter.into_iter().collect())
    }
}

impl<V: fmt::Debug> fmt::Debug for ExprMap<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.0.iter()).finish()
    }
}

/// Input ranges of the free variables.
#[derive(Clone, Default, PartialEq, Eq, Debug)]
pub struct Precondition(BTreeMap<Var, Interval>);

impl Precondition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, var: Var, range: Interval) -> Option<Interval> {
        self.0.insert(var, range)
    }

    pub fn get(&self, var: &Var) -> Option<&Interval> {
        self.0.get(var)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Interval)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(Var, Interval)> for Precondition {
    fn from_iter<I: IntoIterator<Item = (Var, Interval)>>(iter: I) -> Self {
        Precondition(iter.into_iter().collect())
    }
}
