//! Textual certificate format.
//!
//! ```text
//! (certificate name
//!   (precisions x F64 (expr (+ (var x) (var x))) F64)
//!   (precondition x 1 2)
//!   (command (ret (+ (var x) (var x))))
//!   (analysis
//!     ((expr (var x)) (range 1 2) (error 1/4503599627370496))))
//! ```
//!
//! `;` starts a comment running to the end of the line. Documents without an
//! `analysis` section are generator inputs.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::ast::{BinOp, Cmd, Expr, ExprMap, Precondition, Var};
use crate::checker::Certificate;
use crate::interval::Interval;
use crate::numeric::{Precision, Rational};

/// Maximum nesting of parentheses accepted by the parser.
pub const MAX_DEPTH: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertDocument {
    pub name: String,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

impl Pos {
    fn error(self, message: impl Into<String>) -> ParseError {
        ParseError { line: self.line, column: self.column, message: message.into() }
    }
}

#[derive(Debug)]
enum Sexp<'a> {
    Atom(&'a str, Pos),
    List(Vec<Sexp<'a>>, Pos),
}

impl<'a> Sexp<'a> {
    fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }

    fn atom(&self, what: &str) -> Result<&'a str, ParseError> {
        match self {
            Sexp::Atom(a, _) => Ok(a),
            Sexp::List(_, p) => Err(p.error(format!("expected {what}, found a list"))),
        }
    }

    fn list(&self, what: &str) -> Result<&[Sexp<'a>], ParseError> {
        match self {
            Sexp::List(items, _) => Ok(items),
            Sexp::Atom(a, p) => Err(p.error(format!("expected {what}, found `{a}`"))),
        }
    }

    /// Splits `(head rest...)`.
    fn form(&self, what: &str) -> Result<(&'a str, &[Sexp<'a>]), ParseError> {
        let items = self.list(what)?;
        match items.first() {
            Some(Sexp::Atom(head, _)) => Ok((head, &items[1..])),
            Some(other) => Err(other.pos().error(format!("expected keyword of {what}"))),
            None => Err(self.pos().error(format!("empty list where {what} was expected"))),
        }
    }
}

struct Reader<'a> {
    text: &'a str,
    offset: usize,
    pos: Pos,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader { text, offset: 0, pos: Pos { line: 1, column: 1 } }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.offset..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.offset += c.len_utf8();
        if c == '\n' {
            self.pos.line += 1;
            self.pos.column = 1;
        } else {
            self.pos.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c == ';' {
                while self.peek().is_some_and(|c| c != '\n') {
                    self.bump();
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn read(&mut self, depth: usize) -> Result<Sexp<'a>, ParseError> {
        self.skip_trivia();
        let start = self.pos;
        match self.peek() {
            None => Err(start.error("unexpected end of input")),
            Some(')') => Err(start.error("unexpected `)`")),
            Some('(') => {
                if depth >= MAX_DEPTH {
                    return Err(start.error(format!("nesting deeper than {MAX_DEPTH}")));
                }
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.peek() {
                        None => return Err(start.error("unclosed `(`")),
                        Some(')') => {
                            self.bump();
                            return Ok(Sexp::List(items, start));
                        }
                        Some(_) => items.push(self.read(depth + 1)?),
                    }
                }
            }
            Some(_) => {
                let begin = self.offset;
                while self.peek().is_some_and(|c| !c.is_whitespace() && !matches!(c, '(' | ')' | ';')) {
                    self.bump();
                }
                Ok(Sexp::Atom(&self.text[begin..self.offset], start))
            }
        }
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-' | '\''))
}

fn ident(s: &Sexp) -> Result<Var, ParseError> {
    let a = s.atom("identifier")?;
    if is_ident(a) {
        Ok(Var::new(a))
    } else {
        Err(s.pos().error(format!("invalid identifier `{a}`")))
    }
}

fn rational(s: &Sexp) -> Result<Rational, ParseError> {
    let a = s.atom("number")?;
    Rational::parse(a).map_err(|e| s.pos().error(e.to_string()))
}

fn small_int<T: TryFrom<i64>>(s: &Sexp, lo: i64, hi: i64) -> Result<T, ParseError> {
    let a = s.atom("integer")?;
    a.parse::<i64>()
        .ok()
        .filter(|v| (lo..=hi).contains(v))
        .and_then(|v| T::try_from(v).ok())
        .ok_or_else(|| s.pos().error(format!("expected an integer in [{lo}, {hi}], found `{a}`")))
}

fn arity(s: &Sexp, args: &[Sexp], n: usize, what: &str) -> Result<(), ParseError> {
    if args.len() == n {
        Ok(())
    } else {
        Err(s.pos().error(format!("`{what}` takes {n} argument(s), found {}", args.len())))
    }
}

fn precision(s: &Sexp) -> Result<Precision, ParseError> {
    match s {
        Sexp::Atom(a, p) => match *a {
            "F16" => Ok(Precision::F16),
            "F32" => Ok(Precision::F32),
            "F64" => Ok(Precision::F64),
            "REAL" => Ok(Precision::Real),
            other => Err(p.error(format!("unknown precision `{other}`"))),
        },
        Sexp::List(..) => {
            let (head, args) = s.form("precision")?;
            if head != "fixed" {
                return Err(s.pos().error(format!("unknown precision `({head} ...)`")));
            }
            arity(s, args, 2, "fixed")?;
            let word: u32 = small_int(&args[0], 2, 128)?;
            let frac: i32 = small_int(&args[1], -1024, 1024)?;
            Ok(Precision::Fixed { word, frac })
        }
    }
}

fn expr(s: &Sexp) -> Result<Expr, ParseError> {
    let (head, args) = s.form("expression")?;
    let op = |o: BinOp| -> Result<Expr, ParseError> {
        arity(s, args, 2, o.symbol())?;
        Ok(Expr::binop(o, expr(&args[0])?, expr(&args[1])?))
    };
    match head {
        "var" => {
            arity(s, args, 1, head)?;
            Ok(Expr::Var(ident(&args[0])?))
        }
        "const" => {
            arity(s, args, 2, head)?;
            Ok(Expr::constant(precision(&args[0])?, rational(&args[1])?))
        }
        "neg" => {
            arity(s, args, 1, head)?;
            Ok(Expr::neg(expr(&args[0])?))
        }
        "+" => op(BinOp::Add),
        "-" => op(BinOp::Sub),
        "*" => op(BinOp::Mul),
        "/" => op(BinOp::Div),
        "fma" => {
            arity(s, args, 3, head)?;
            Ok(Expr::fma(expr(&args[0])?, expr(&args[1])?, expr(&args[2])?))
        }
        "cast" => {
            arity(s, args, 2, head)?;
            Ok(Expr::downcast(precision(&args[0])?, expr(&args[1])?))
        }
        other => Err(s.pos().error(format!("unknown expression form `{other}`"))),
    }
}

fn command(s: &Sexp) -> Result<Cmd, ParseError> {
    // iterative over the let spine
    let mut lets = Vec::new();
    let mut cur = s;
    let ret = loop {
        let (head, args) = cur.form("command")?;
        match head {
            "let" => {
                arity(cur, args, 4, head)?;
                lets.push((ident(&args[0])?, precision(&args[1])?, expr(&args[2])?));
                cur = &args[3];
            }
            "ret" => {
                arity(cur, args, 1, head)?;
                break expr(&args[0])?;
            }
            other => return Err(cur.pos().error(format!("unknown command `{other}`"))),
        }
    };
    Ok(lets.into_iter().rev().fold(Cmd::Ret(ret), |body, (var, prec, bound)| Cmd::Let {
        var,
        prec,
        bound,
        body: Box::new(body),
    }))
}

/// `(expr e)` key of a precision or analysis entry.
fn expr_key(s: &Sexp) -> Result<Expr, ParseError> {
    let (head, args) = s.form("`(expr ...)`")?;
    if head != "expr" {
        return Err(s.pos().error(format!("expected `(expr ...)`, found `({head} ...)`")));
    }
    arity(s, args, 1, head)?;
    expr(&args[0])
}

fn interval(at: &Sexp, lo: &Sexp, hi: &Sexp) -> Result<Interval, ParseError> {
    let (lo, hi) = (rational(lo)?, rational(hi)?);
    Interval::new(lo, hi).map_err(|e| at.pos().error(e.to_string()))
}

fn precisions(s: &Sexp, args: &[Sexp]) -> Result<ExprMap<Precision>, ParseError> {
    if !args.len().is_multiple_of(2) {
        return Err(s.pos().error("`precisions` expects key/precision pairs"));
    }
    let mut gamma = ExprMap::new();
    for pair in args.chunks(2) {
        let key = match &pair[0] {
            Sexp::Atom(..) => Expr::Var(ident(&pair[0])?),
            list => expr_key(list)?,
        };
        if gamma.insert(key.clone(), precision(&pair[1])?).is_some() {
            return Err(pair[0].pos().error(format!("duplicate precision for {key}")));
        }
    }
    Ok(gamma)
}

fn precondition(s: &Sexp, args: &[Sexp]) -> Result<Precondition, ParseError> {
    if !args.len().is_multiple_of(3) {
        return Err(s.pos().error("`precondition` expects `name lo hi` triples"));
    }
    let mut pre = Precondition::new();
    for triple in args.chunks(3) {
        let var = ident(&triple[0])?;
        if pre.insert(var.clone(), interval(&triple[0], &triple[1], &triple[2])?).is_some() {
            return Err(triple[0].pos().error(format!("duplicate precondition for `{var}`")));
        }
    }
    Ok(pre)
}

fn analysis(args: &[Sexp]) -> Result<(ExprMap<Interval>, ExprMap<Rational>), ParseError> {
    let mut ranges = ExprMap::new();
    let mut errors = ExprMap::new();
    for entry in args {
        let items = entry.list("analysis entry")?;
        if items.len() != 3 {
            return Err(entry.pos().error("analysis entry must be `((expr e) (range lo hi) (error r))`"));
        }
        let key = expr_key(&items[0])?;
        let (head, r) = items[1].form("`(range lo hi)`")?;
        if head != "range" {
            return Err(items[1].pos().error(format!("expected `range`, found `{head}`")));
        }
        arity(&items[1], r, 2, head)?;
        let range = interval(&items[1], &r[0], &r[1])?;
        let (head, e) = items[2].form("`(error r)`")?;
        if head != "error" {
            return Err(items[2].pos().error(format!("expected `error`, found `{head}`")));
        }
        arity(&items[2], e, 1, head)?;
        let err = rational(&e[0])?;
        if ranges.contains_key(&key) {
            return Err(entry.pos().error(format!("duplicate analysis entry for {key}")));
        }
        ranges.insert(key.clone(), range);
        errors.insert(key, err);
    }
    Ok((ranges, errors))
}

/// Parses a certificate document, reporting the first problem with its
/// line and column.
pub fn parse(text: &str) -> Result<CertDocument, ParseError> {
    let mut reader = Reader::new(text);
    let top = reader.read(0)?;
    reader.skip_trivia();
    if reader.peek().is_some() {
        return Err(reader.pos.error("unexpected content after the document"));
    }
    let (head, decls) = top.form("`(certificate ...)`")?;
    if head != "certificate" {
        return Err(top.pos().error(format!("expected `certificate`, found `{head}`")));
    }
    let Some((name, decls)) = decls.split_first() else {
        return Err(top.pos().error("certificate needs a name"));
    };
    let name = name.atom("certificate name")?.to_string();

    let mut seen = HashSet::new();
    let mut gamma = ExprMap::new();
    let mut precond = Precondition::new();
    let mut program = None;
    let mut ranges = ExprMap::new();
    let mut errors = ExprMap::new();
    for decl in decls {
        let (head, args) = decl.form("declaration")?;
        if !seen.insert(head) {
            return Err(decl.pos().error(format!("duplicate `{head}` section")));
        }
        match head {
            "precisions" => gamma = precisions(decl, args)?,
            "precondition" => precond = precondition(decl, args)?,
            "command" => {
                arity(decl, args, 1, head)?;
                program = Some(command(&args[0])?);
            }
            "analysis" => (ranges, errors) = analysis(args)?,
            other => return Err(decl.pos().error(format!("unknown section `{other}`"))),
        }
    }
    let program = program.ok_or_else(|| top.pos().error("missing `command` section"))?;
    Ok(CertDocument { name, certificate: Certificate { program, gamma, precond, ranges, errors } })
}

/// Canonical text of a document.
///
/// Analysis entries are written for nodes that have both a range and an
/// error, in post-order of first occurrence, followed by any other keys in
/// textual order.
pub fn serialize(doc: &CertDocument) -> String {
    let cert = &doc.certificate;
    let mut out = String::new();
    let order = canonical_order(cert);
    let _ = writeln!(out, "(certificate {}", doc.name);

    let mut gamma_vars: Vec<(&Var, Precision)> = cert
        .gamma
        .iter()
        .filter_map(|(e, p)| match e {
            Expr::Var(v) => Some((v, *p)),
            _ => None,
        })
        .collect();
    gamma_vars.sort_by(|a, b| a.0.cmp(b.0));
    let gamma_exprs: Vec<(&Expr, &Precision)> = order
        .iter()
        .filter(|e| !matches!(e, Expr::Var(_)))
        .filter_map(|e| cert.gamma.get(e).map(|p| (*e, p)))
        .collect();
    let mut lines: Vec<String> = gamma_vars.iter().map(|(v, p)| format!("{v} {p}")).collect();
    lines.extend(gamma_exprs.iter().map(|(e, p)| format!("(expr {e}) {p}")));
    section(&mut out, "precisions", &lines);

    let lines: Vec<String> = cert.precond.iter().map(|(v, r)| format!("{v} {} {}", r.lo(), r.hi())).collect();
    section(&mut out, "precondition", &lines);

    out.push_str("  (command\n");
    let mut closing = 0;
    for (var, prec, bound) in cert.program.bindings() {
        let _ = writeln!(out, "    (let {var} {prec} {bound}");
        closing += 1;
    }
    let _ = writeln!(out, "    (ret {}){})", cert.program.ret_expr(), ")".repeat(closing));

    let lines: Vec<String> = order
        .iter()
        .filter_map(|e| {
            let (r, err) = (cert.ranges.get(e)?, cert.errors.get(e)?);
            Some(format!("((expr {e}) (range {} {}) (error {err}))", r.lo(), r.hi()))
        })
        .collect();
    if !lines.is_empty() {
        section(&mut out, "analysis", &lines);
    }
    out.push_str(")\n");
    out
}

fn section(out: &mut String, head: &str, lines: &[String]) {
    if lines.is_empty() {
        let _ = writeln!(out, "  ({head})");
        return;
    }
    let _ = writeln!(out, "  ({head}");
    for (i, line) in lines.iter().enumerate() {
        let close = if i + 1 == lines.len() { ")" } else { "" };
        let _ = writeln!(out, "    {line}{close}");
    }
}

/// Program nodes in post-order, then keys of any map that are not program
/// nodes, sorted by their text.
fn canonical_order(cert: &Certificate) -> Vec<&Expr> {
    let mut order = cert.program.unique_subexprs();
    let known: HashSet<&Expr> = order.iter().copied().collect();
    let mut extra: Vec<&Expr> = cert
        .gamma
        .keys()
        .chain(cert.ranges.keys())
        .chain(cert.errors.keys())
        .filter(|e| !known.contains(e))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    extra.sort_by_cached_key(|e| e.to_string());
    order.extend(extra);
    order
}

impl fmt::Display for CertDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}
