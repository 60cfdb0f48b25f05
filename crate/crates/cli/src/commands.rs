use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use rounda::analyzer::{
    analyze, assign_fixed_formats, retype_uniform, AnalysisConfig, AnalysisError, InputErrorPolicy,
};
use rounda::certio::{parse, serialize, CertDocument, ParseError};
use rounda::checker::{check_certificate, Certificate, CheckDomain, CheckReport, RangeDomain};
use rounda::numeric::Precision;
use rounda::oracle::{sample_check, SampleConfig};
use serde_json::{json, Value};

use crate::style::Style;
use crate::{ReportFormat, Status};

enum LoadError {
    Io(std::io::Error),
    Parse(ParseError),
}

impl LoadError {
    fn describe(&self, path: &Path) -> String {
        match self {
            LoadError::Io(e) => format!("{}: {e}", path.display()),
            LoadError::Parse(e) => format!("{}:{e}", path.display()),
        }
    }
}

fn load(path: &Path) -> Result<CertDocument, LoadError> {
    let text = std::fs::read_to_string(path).map_err(LoadError::Io)?;
    parse(&text).map_err(LoadError::Parse)
}

fn report_json(path: &Path, outcome: &Result<(String, CheckReport), LoadError>) -> Value {
    match outcome {
        Ok((name, report)) => json!({
            "file": path.display().to_string(),
            "name": name,
            "verdict": if report.passed() { "pass" } else { "fail" },
            "domainUsed": report.domain_used.to_string(),
            "failures": report.failures.iter().map(|f| json!({
                "validator": f.validator.tag(),
                "node": f.expr.as_ref().map(ToString::to_string),
                "detail": f.detail,
            })).collect::<Vec<_>>(),
            "error": Value::Null,
        }),
        Err(err) => {
            let error = match err {
                LoadError::Io(e) => json!({ "message": e.to_string() }),
                LoadError::Parse(e) => json!({ "line": e.line, "column": e.column, "message": e.message }),
            };
            json!({
                "file": path.display().to_string(),
                "name": Value::Null,
                "verdict": "error",
                "domainUsed": Value::Null,
                "failures": [],
                "error": error,
            })
        }
    }
}

fn report_text(path: &Path, outcome: &Result<(String, CheckReport), LoadError>, style: Style) -> String {
    match outcome {
        Ok((name, report)) => {
            let verdict = if report.passed() { style.pass("PASS") } else { style.fail("FAIL") };
            let mut out = format!(
                "{}: {verdict} {}\n",
                path.display(),
                style.dim(&format!("({name}, domain {})", report.domain_used))
            );
            for f in &report.failures {
                let _ = writeln!(out, "  {f}");
            }
            out
        }
        Err(err) => format!("{}\n", err.describe(path)),
    }
}

pub fn check(files: &[PathBuf], domain: CheckDomain, format: ReportFormat, style: Style) -> Status {
    let results: Vec<(String, Status)> = files
        .par_iter()
        .map(|path| {
            let outcome = load(path).map(|doc| {
                let report = check_certificate(&doc.certificate, domain);
                (doc.name, report)
            });
            let status = match &outcome {
                Ok((_, r)) if r.passed() => Status::Pass,
                Ok(_) => Status::Reject,
                Err(_) => Status::Usage,
            };
            let text = match format {
                ReportFormat::Json => format!("{}\n", report_json(path, &outcome)),
                ReportFormat::Text => report_text(path, &outcome, style),
            };
            (text, status)
        })
        .collect();
    for (text, _) in &results {
        print!("{text}");
    }
    results.iter().map(|(_, s)| *s).max().unwrap_or(Status::Pass)
}

#[derive(Debug, Clone, Copy)]
pub struct GenerateOptions {
    pub domain: RangeDomain,
    pub fixed: Option<u32>,
    pub precision: Option<Precision>,
    pub exact_inputs: bool,
}

/// Retypes and analyzes `doc`'s program, replacing any analysis it carries.
fn generate_certificate(doc: &CertDocument, opts: &GenerateOptions) -> Result<Certificate, AnalysisError> {
    let source = &doc.certificate;
    let (program, gamma) = if let Some(word) = opts.fixed {
        let assignment = assign_fixed_formats(&source.program, &source.precond, word, opts.domain)?;
        (assignment.program, assignment.gamma)
    } else if let Some(prec) = opts.precision {
        retype_uniform(&source.program, prec)
    } else {
        (source.program.clone(), source.gamma.clone())
    };
    let cfg = AnalysisConfig {
        range_domain: opts.domain,
        input_errors: if opts.exact_inputs { InputErrorPolicy::Exact } else { InputErrorPolicy::Representation },
        ..AnalysisConfig::default()
    };
    analyze(&program, &source.precond, &gamma, &cfg)
}

fn print_analysis_error(name: &str, err: &AnalysisError) {
    eprintln!("error: {name}: {err}");
    if let Some(node) = err.node() {
        eprintln!("  at node {node}");
    }
}

pub fn generate(input: &Path, output: &Path, opts: &GenerateOptions) -> Status {
    let doc = match load(input) {
        Ok(doc) => doc,
        Err(err) => {
            eprintln!("error: {}", err.describe(input));
            return Status::Usage;
        }
    };
    let certificate = match generate_certificate(&doc, opts) {
        Ok(c) => c,
        Err(err) => {
            print_analysis_error(&doc.name, &err);
            return Status::Reject;
        }
    };
    let report = check_certificate(&certificate, opts.domain.into());
    // exact inputs contradict the checker's input rule, so rejection is expected there
    if !report.passed() && !opts.exact_inputs {
        eprintln!("error: generated certificate for {} fails its own check", doc.name);
        for f in &report.failures {
            eprintln!("  {f}");
        }
        return Status::Internal;
    }
    let bound = certificate.errors.get(certificate.program.ret_expr()).map(|e| e.to_f64());
    let out = CertDocument { name: doc.name, certificate };
    if let Err(e) = std::fs::write(output, serialize(&out)) {
        eprintln!("error: {}: {e}", output.display());
        return Status::Usage;
    }
    println!("{}: bound {:e}, wrote {}", out.name, bound.unwrap_or(f64::NAN), output.display());
    if report.passed() {
        return Status::Pass;
    }
    eprintln!("note: with exact inputs the checker rejects the certificate:");
    for f in &report.failures {
        eprintln!("  {f}");
    }
    Status::Reject
}

pub fn sample(file: &Path, cfg: &SampleConfig) -> Status {
    let doc = match load(file) {
        Ok(doc) => doc,
        Err(err) => {
            eprintln!("error: {}", err.describe(file));
            return Status::Usage;
        }
    };
    let report = match sample_check(&doc.certificate, cfg) {
        Ok(r) => r,
        Err(err) => {
            eprintln!("error: {}: {err}", doc.name);
            return Status::Reject;
        }
    };
    println!("samples: {}", report.samples);
    println!("violations: {}", report.violations.len());
    for v in &report.violations {
        println!("  {v}");
    }
    println!("maxObservedError: {:e}", report.max_observed_error.to_f64());
    match &report.bound_tightness {
        Some(t) => println!("boundTightness: {:.6}", t.to_f64()),
        None => println!("boundTightness: n/a"),
    }
    if report.violations.is_empty() {
        Status::Pass
    } else {
        Status::Reject
    }
}

struct BenchRow {
    name: String,
    ops: usize,
    bound: Option<f64>,
    gen: Option<Duration>,
    check: Option<Duration>,
}

fn ms(d: Option<Duration>) -> String {
    d.map(|d| format!("{:.3}", d.as_secs_f64() * 1e3)).unwrap_or_default()
}

fn bench_one(doc: CertDocument, domain: RangeDomain) -> (BenchRow, Status) {
    let mut row = BenchRow {
        name: doc.name.clone(),
        ops: doc.certificate.program.op_count(),
        bound: None,
        gen: None,
        check: None,
    };
    // files without an analysis section are generator inputs
    let certificate = if doc.certificate.ranges.is_empty() && doc.certificate.errors.is_empty() {
        let opts = GenerateOptions { domain, fixed: None, precision: None, exact_inputs: false };
        let start = Instant::now();
        let generated = generate_certificate(&doc, &opts);
        row.gen = Some(start.elapsed());
        match generated {
            Ok(c) => c,
            Err(err) => {
                print_analysis_error(&doc.name, &err);
                return (row, Status::Reject);
            }
        }
    } else {
        doc.certificate
    };
    let start = Instant::now();
    let report = check_certificate(&certificate, domain.into());
    row.check = Some(start.elapsed());
    row.bound = certificate.errors.get(certificate.program.ret_expr()).map(|e| e.to_f64());
    let status = if report.passed() { Status::Pass } else { Status::Reject };
    (row, status)
}

pub fn bench(dir: &Path, domain: RangeDomain, csv_out: Option<&Path>) -> Status {
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "cert"))
            .collect(),
        Err(e) => {
            eprintln!("error: {}: {e}", dir.display());
            return Status::Usage;
        }
    };
    paths.sort();
    let domain_name = CheckDomain::from(domain).to_string();
    let mut csv = String::from("name,ops,domain,bound,gen_ms,check_ms\n");
    let mut status = Status::Pass;
    // sequential so that timings are not skewed by sibling jobs
    for path in &paths {
        let doc = match load(path) {
            Ok(doc) => doc,
            Err(err) => {
                eprintln!("error: {}", err.describe(path));
                status = status.max(Status::Usage);
                continue;
            }
        };
        let (row, s) = bench_one(doc, domain);
        status = status.max(s);
        let bound = row.bound.map(|b| format!("{b:e}")).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{domain_name},{bound},{},{}", row.name, row.ops, ms(row.gen), ms(row.check));
    }
    match csv_out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &csv) {
                eprintln!("error: {}: {e}", path.display());
                return Status::Usage;
            }
            println!("wrote {} rows to {}", paths.len(), path.display());
        }
        None => print!("{csv}"),
    }
    status
}
