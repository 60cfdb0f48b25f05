//! Built-in benchmark kernels and synthetic let-chain programs of a given
//! operation count.

use crate::ast::{Cmd, Expr, ExprMap, Precondition, Var};
use crate::certio::{parse, CertDocument};
use crate::checker::Certificate;
use crate::interval::Interval;
use crate::numeric::{Precision, Rational};

macro_rules! kernels {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../corpus/", $name, ".cert")))),*]
    };
}

/// Name and generator-input source text of each benchmark kernel.
pub const KERNELS: &[(&str, &str)] = kernels![
    "bspline0",
    "bspline1",
    "bspline2",
    "bspline3",
    "doppler",
    "himmilbeau",
    "kepler0",
    "kepler1",
    "kepler2",
    "rigidBody1",
    "rigidBody2",
    "turbine1",
    "turbine2",
    "turbine3",
    "verhulst",
    "predatorPrey",
    "carbonGas",
    "invertedPendulum",
];

/// Operation counts of the synthetic programs shipped in the corpus directory.
pub const SYNTHETIC_SIZES: &[usize] = &[36, 89, 168, 269];

/// Parses a built-in kernel by name.
pub fn kernel(name: &str) -> Option<CertDocument> {
    KERNELS.iter().find(|(n, _)| *n == name).map(|(_, src)| parse(src).expect("built-in kernel parses"))
}

/// All built-in kernels, parsed.
pub fn kernels() -> Vec<CertDocument> {
    KERNELS.iter().map(|(_, src)| parse(src).expect("built-in kernel parses")).collect()
}

const STATES: usize = 4;

/// Linear let-chain `t1 = c1*s1; t_k = t_{k-1} + c_k*s_j` over four state
/// variables with exactly `ops` operations (`ops >= 1`); an even count ends
/// in a negation.
pub fn synthetic_chain(ops: usize) -> CertDocument {
    assert!(ops >= 1, "a synthetic program needs at least one operation");
    let steps = ops.div_ceil(2);
    let state = |k: usize| format!("s{}", k % STATES + 1);
    let coeff = |k: usize| {
        let c = Rational::new(((k as i64 * 37) % 101) - 50, 100).expect("nonzero denominator");
        Expr::constant(Precision::F64, c)
    };
    let temp = |k: usize| format!("t{k}");
    let mut bindings = Vec::with_capacity(steps);
    for k in 1..=steps {
        let term = Expr::mul(coeff(k), Expr::var(&state(k)));
        let bound = if k == 1 { term } else { Expr::add(Expr::var(&temp(k - 1)), term) };
        bindings.push((temp(k), bound));
    }
    let last = Expr::var(&temp(steps));
    let ret = if ops.is_multiple_of(2) { Expr::neg(last) } else { last };
    let program = bindings
        .into_iter()
        .rev()
        .fold(Cmd::Ret(ret), |body, (name, bound)| Cmd::let_in(&name, Precision::F64, bound, body));

    let ranges = [(-50, 50), (-10, 10), (-1, 1), (-5, 5)];
    let precond: Precondition = (0..STATES)
        .map(|i| {
            let (lo, hi) = ranges[i];
            (Var::new(&format!("s{}", i + 1)), Interval::new(Rational::from(lo), Rational::from(hi)).expect("ordered"))
        })
        .collect();
    let gamma: ExprMap<Precision> = (0..STATES).map(|i| (Expr::var(&format!("s{}", i + 1)), Precision::F64)).collect();
    CertDocument {
        name: format!("synthetic{ops}"),
        certificate: Certificate { program, gamma, precond, ranges: ExprMap::new(), errors: ExprMap::new() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certio::serialize;

    #[test]
    fn kernels_parse_and_are_closed() {
        let all = kernels();
        assert_eq!(all.len(), 18);
        for doc in all {
            let c = &doc.certificate;
            assert!(c.program.ssa_check().is_ok(), "{}", doc.name);
            for v in c.program.free_vars() {
                assert!(c.precond.get(&v).is_some(), "{}: {v}", doc.name);
                assert!(c.gamma.get_var(&v).is_some(), "{}: {v}", doc.name);
            }
        }
        assert!(kernel("doppler").is_some());
        assert!(kernel("nope").is_none());
    }

    #[test]
    fn benchmark_op_counts() {
        let ops = |n: &str| kernel(n).unwrap().certificate.program.op_count();
        assert_eq!(ops("invertedPendulum"), 7);
        assert_eq!(ops("bspline3"), 4);
    }

    #[test]
    fn synthetic_op_counts() {
        for n in 1..40 {
            assert_eq!(synthetic_chain(n).certificate.program.op_count(), n);
        }
        assert_eq!(synthetic_chain(269).certificate.program.op_count(), 269);
    }

    #[test]
    fn shipped_synthetic_files_match_generator() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/corpus");
        for &n in SYNTHETIC_SIZES {
            let text = std::fs::read_to_string(format!("{dir}/synthetic{n}.cert")).unwrap();
            assert_eq!(text, serialize(&synthetic_chain(n)), "synthetic{n}");
        }
    }
}
