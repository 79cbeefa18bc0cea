//! End-to-end drivers: the two-phase solve, ranked enumeration of all codes
//! for small `n`, and algebraic checks of the results.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use rug::{Float, Integer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codes::{enumerate_codes_partition, Code, CodeError, QuarterCode, MAX_ENUMERATION_N};
use crate::geometry::{self, GeometryError, PolygonSolution};
use crate::mp;
use crate::phase1::{self, Arithmetic, Phase1Error, SspResult};
use crate::phase2::{newton_solve, KktState, NewtonOptions, NewtonReport, Phase2Error, Variant};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Phase1(#[from] Phase1Error),
    #[error(transparent)]
    Phase2(#[from] Phase2Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    Unsupported(String),
    #[error("checkpoint: {0}")]
    Io(#[from] std::io::Error),
}

/// Best known axially symmetric quarter codes for `n = 4, ..., 128`.
pub fn published_quarter_code(n: usize) -> Option<&'static str> {
    Some(match n {
        4 => "+-",
        8 => "+--+",
        16 => "+--+-++-",
        32 => "+-++--+-+-+---++",
        64 => "-++++++-----+--+-+++--+---+--+++",
        128 => "-+++---+-++++-+++++----+-+---+-++----++++-+-----+--+-+-+--+--+--",
        _ => return None,
    })
}

/// Largest `n` for which Phase I runs by default.
pub const MAX_PHASE1_N: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub precision_bits: u32,
    pub tol_bits: u32,
    /// `None` picks [`Variant::default_for`].
    pub variant: Option<Variant>,
    pub max_iter: usize,
    pub arithmetic: Arithmetic,
    pub jobs: usize,
    /// Phase I suffix bits when `jobs > 1`.
    pub suffix_bits: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            precision_bits: mp::DEFAULT_PRECISION_BITS,
            tol_bits: mp::DEFAULT_TOL_BITS,
            variant: None,
            max_iter: 64,
            arithmetic: Arithmetic::Fixed128,
            jobs: 1,
            suffix_bits: 4,
        }
    }
}

impl SolveOptions {
    pub fn newton(&self, n: usize) -> NewtonOptions {
        NewtonOptions {
            variant: self.variant.unwrap_or_else(|| Variant::default_for(n)),
            precision_bits: self.precision_bits,
            tol_bits: self.tol_bits,
            max_iter: self.max_iter,
            matrix_perturbation: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub phase1_seconds: f64,
    pub phase2_seconds: f64,
    pub verify_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct CodeSolution {
    pub state: KktState,
    pub report: NewtonReport,
    pub polygon: PolygonSolution,
}

#[derive(Clone, Debug)]
pub struct TwoPhaseSolution {
    pub n: usize,
    /// Absent when the quarter code was supplied.
    pub ssp: Option<SspResult>,
    pub quarter: QuarterCode,
    pub solution: CodeSolution,
    pub timings: Timings,
}

/// Phase II plus geometric verification for a fixed code.
pub fn solve_code(code: &Code, options: &NewtonOptions) -> Result<CodeSolution, PipelineError> {
    let (state, report) = newton_solve(code, options)?;
    let polygon = geometry::reconstruct(code, &state.angles, options.tol_bits)?;
    Ok(CodeSolution {
        state,
        report,
        polygon,
    })
}

fn check_power_of_two(n: usize) -> Result<(), PipelineError> {
    if n < 4 || !n.is_power_of_two() {
        return Err(PipelineError::Unsupported(format!(
            "two-phase solve needs n = 2^s >= 4, got {n}"
        )));
    }
    Ok(())
}

fn run_phase1(n: usize, options: &SolveOptions) -> Result<SspResult, PipelineError> {
    let inst = phase1::build_ssp(n)?;
    Ok(if options.jobs > 1 {
        phase1::solve_ssp_parallel(&inst, options.arithmetic, options.suffix_bits, options.jobs)?
    } else {
        phase1::solve_ssp(&inst, options.arithmetic, None)?
    })
}

/// Phase I (unless `quarter` is given), expansion, Phase II, reconstruction
/// and the zonogon check.
pub fn solve_two_phase(
    n: usize,
    quarter: Option<QuarterCode>,
    options: &SolveOptions,
) -> Result<TwoPhaseSolution, PipelineError> {
    check_power_of_two(n)?;
    let mut timings = Timings::default();
    let (ssp, quarter) = match quarter {
        Some(q) => {
            if q.n() != n {
                return Err(PipelineError::Unsupported(format!(
                    "quarter code is for n = {}, not {n}",
                    q.n()
                )));
            }
            (None, q)
        }
        None => {
            if n > MAX_PHASE1_N {
                return Err(PipelineError::Unsupported(format!(
                    "Phase I is out of reach for n = {n}; supply a quarter code"
                )));
            }
            let t = Instant::now();
            let r = run_phase1(n, options)?;
            timings.phase1_seconds = t.elapsed().as_secs_f64();
            let q = r.quarter_code()?;
            (Some(r), q)
        }
    };
    let code = quarter.expand();
    let newton = options.newton(n);
    let t = Instant::now();
    let (state, report) = newton_solve(&code, &newton)?;
    timings.phase2_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let polygon = geometry::reconstruct(&code, &state.angles, options.tol_bits)?;
    geometry::zonogon_check(&polygon, &mp::pow2_neg(options.tol_bits - 8, options.precision_bits))?;
    timings.verify_seconds = t.elapsed().as_secs_f64();
    Ok(TwoPhaseSolution {
        n,
        ssp,
        quarter,
        solution: CodeSolution {
            state,
            report,
            polygon,
        },
        timings,
    })
}

/// Phase II solutions for the `k` best Phase I quarter codes.
pub fn solve_best_codes(
    n: usize,
    k: usize,
    options: &SolveOptions,
) -> Result<Vec<(SspResult, CodeSolution)>, PipelineError> {
    check_power_of_two(n)?;
    let inst = phase1::build_ssp(n)?;
    let best = phase1::solve_ssp_best(&inst, options.arithmetic, None, k)?;
    let newton = options.newton(n);
    best.into_iter()
        .map(|r| {
            let code = r.quarter_code()?.expand();
            let sol = solve_code(&code, &newton)?;
            Ok((r, sol))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryStatus {
    Converged,
    /// Converged after the retry with the double-factor variant.
    Retried,
    /// Converged, but the angles are not strictly increasing.
    NonMonotone,
    Failed,
}

#[derive(Clone, Debug)]
pub struct RankedEntry {
    /// Canonical representative.
    pub code: Code,
    pub status: EntryStatus,
    pub perimeter: Option<Float>,
    pub iterations: Option<usize>,
    /// Full solution; absent for failures and for entries resumed from a
    /// checkpoint.
    pub polygon: Option<PolygonSolution>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RankedSolutions {
    pub n: usize,
    /// Converged entries by decreasing perimeter (ties by canonical code),
    /// then non-monotone stationary points, then failures.
    pub entries: Vec<RankedEntry>,
}

impl RankedSolutions {
    pub fn converged(&self) -> impl Iterator<Item = &RankedEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.status, EntryStatus::Converged | EntryStatus::Retried))
    }

    pub fn flagged(&self) -> impl Iterator<Item = &RankedEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.status, EntryStatus::NonMonotone | EntryStatus::Failed))
    }
}

#[derive(Clone, Debug)]
pub struct EnumerateOptions {
    pub solve: SolveOptions,
    /// Allow `n > 16`; full enumeration at `n = 32` means 3.4e7 solves.
    pub allow_large: bool,
    /// JSON-lines file of finished codes; existing records are skipped.
    pub checkpoint: Option<PathBuf>,
}

/// Default desk-scale enumeration cap.
pub const DEFAULT_ENUMERATION_CAP: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub canonical_code: String,
    pub perimeter_decimal: Option<String>,
    pub status: EntryStatus,
}

fn read_checkpoint(path: &Path) -> Result<HashMap<String, CheckpointRecord>, PipelineError> {
    let mut done = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(e.into()),
    };
    for line in BufReader::new(file).lines() {
        // a torn final line from an interrupted run is ignored
        if let Ok(rec) = serde_json::from_str::<CheckpointRecord>(&line?) {
            done.insert(rec.canonical_code.clone(), rec);
        }
    }
    Ok(done)
}

fn solve_entry(code: Code, options: &SolveOptions) -> RankedEntry {
    let newton = options.newton(code.n());
    let (result, mut status) = match newton_solve(&code, &newton) {
        Ok(r) => (Ok(r), EntryStatus::Converged),
        Err(_) if newton.variant != Variant::DoubleFactor => {
            let retry = NewtonOptions {
                variant: Variant::DoubleFactor,
                max_iter: newton.max_iter.max(128),
                ..newton.clone()
            };
            (newton_solve(&code, &retry), EntryStatus::Retried)
        }
        Err(e) => (Err(e), EntryStatus::Converged),
    };
    let (state, report) = match result {
        Ok(r) => r,
        Err(e) => {
            return RankedEntry {
                code,
                status: EntryStatus::Failed,
                perimeter: None,
                iterations: None,
                polygon: None,
                error: Some(e.to_string()),
            }
        }
    };
    let mut error = None;
    let polygon = if report.monotone {
        match geometry::reconstruct(&code, &state.angles, options.tol_bits) {
            Ok(p) => Some(p),
            Err(e) => {
                status = EntryStatus::Failed;
                error = Some(e.to_string());
                None
            }
        }
    } else {
        status = EntryStatus::NonMonotone;
        None
    };
    RankedEntry {
        code,
        status,
        perimeter: Some(report.perimeter),
        iterations: Some(report.iterations),
        polygon,
        error,
    }
}

/// Solves the fixed-code problem for every canonical code of length `n` on
/// a worker pool and ranks the local maxima.
pub fn enumerate_and_solve(n: usize, options: &EnumerateOptions) -> Result<RankedSolutions, PipelineError> {
    let cap = if options.allow_large {
        MAX_ENUMERATION_N
    } else {
        DEFAULT_ENUMERATION_CAP
    };
    if n < 3 || n > cap {
        return Err(PipelineError::Unsupported(format!(
            "enumeration supports 3 <= n <= {cap} (got {n})"
        )));
    }
    let prec = options.solve.precision_bits;
    let resumed = match &options.checkpoint {
        Some(p) => read_checkpoint(p)?,
        None => HashMap::new(),
    };
    let sink = match &options.checkpoint {
        Some(p) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p)?)),
        None => None,
    };

    let prefix_bits = (n - 1).min(8) as u32;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.solve.jobs.max(1))
        .build()
        .map_err(|e| PipelineError::Unsupported(e.to_string()))?;
    let entries: Result<Vec<Vec<RankedEntry>>, PipelineError> = pool.install(|| {
        (0..1u64 << prefix_bits)
            .into_par_iter()
            .map(|part| {
                let mut out = Vec::new();
                for code in enumerate_codes_partition(n, prefix_bits, part)? {
                    let key = code.to_string();
                    if let Some(rec) = resumed.get(&key) {
                        out.push(RankedEntry {
                            code,
                            status: rec.status.clone(),
                            perimeter: rec
                                .perimeter_decimal
                                .as_deref()
                                .and_then(|s| mp::parse_decimal(s, prec)),
                            iterations: None,
                            polygon: None,
                            error: None,
                        });
                        continue;
                    }
                    let entry = solve_entry(code, &options.solve);
                    if let Some(sink) = &sink {
                        let rec = CheckpointRecord {
                            canonical_code: key,
                            perimeter_decimal: entry
                                .perimeter
                                .as_ref()
                                .map(|p| mp::to_decimal(p, mp::digits_for_bits(prec))),
                            status: entry.status.clone(),
                        };
                        let mut line = serde_json::to_string(&rec).expect("record serializes");
                        line.push('\n');
                        // one write per record keeps appends whole
                        let mut f = sink.lock().expect("checkpoint lock");
                        f.write_all(line.as_bytes())?;
                        f.flush()?;
                    }
                    out.push(entry);
                }
                Ok(out)
            })
            .collect()
    });
    let mut entries: Vec<RankedEntry> = entries?.into_iter().flatten().collect();
    entries.sort_by(|a, b| {
        let rank = |e: &RankedEntry| match e.status {
            EntryStatus::Converged | EntryStatus::Retried => 0u8,
            EntryStatus::NonMonotone => 1,
            EntryStatus::Failed => 2,
        };
        rank(a)
            .cmp(&rank(b))
            .then_with(|| match (&b.perimeter, &a.perimeter) {
                (Some(x), Some(y)) => x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal),
                _ => std::cmp::Ordering::Equal,
            })
            .then_with(|| a.code.to_string().cmp(&b.code.to_string()))
    });
    Ok(RankedSolutions { n, entries })
}

/// Integer polynomial, coefficients in ascending degree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegerPolynomial {
    coefficients: Vec<Integer>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolynomialError {
    #[error("line {0}: expected '<degree> <coefficient>'")]
    BadLine(usize),
    #[error("degree {0} listed twice")]
    DuplicateDegree(usize),
    #[error("resource digest mismatch: {0}")]
    Digest(String),
}

const Q8_RESOURCE: &str = include_str!("../resources/q8.txt");
const Q8_SHA256: &str = "f56343ca19b094b1d2139620e5d32fb4dfa2e29ae0d8c887e5737d9b4a85cc5d";

impl IntegerPolynomial {
    pub fn new(mut coefficients: Vec<Integer>) -> IntegerPolynomial {
        while coefficients.len() > 1 && coefficients.last().is_some_and(|c| *c == 0) {
            coefficients.pop();
        }
        IntegerPolynomial { coefficients }
    }

    pub fn coefficients(&self) -> &[Integer] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Parses `degree coefficient` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<IntegerPolynomial, PolynomialError> {
        let mut terms: Vec<Option<Integer>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(d), Some(c), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(PolynomialError::BadLine(i + 1));
            };
            let d: usize = d.parse().map_err(|_| PolynomialError::BadLine(i + 1))?;
            let c: Integer = c.parse().map_err(|_| PolynomialError::BadLine(i + 1))?;
            if terms.len() <= d {
                terms.resize(d + 1, None);
            }
            if terms[d].replace(c).is_some() {
                return Err(PolynomialError::DuplicateDegree(d));
            }
        }
        Ok(IntegerPolynomial::new(
            terms.into_iter().map(Option::unwrap_or_default).collect(),
        ))
    }

    /// The degree-48 polynomial of the longest-perimeter octagon, loaded from
    /// the bundled resource after checking its digest.
    pub fn q8() -> Result<IntegerPolynomial, PolynomialError> {
        let digest = hex(&Sha256::digest(Q8_RESOURCE.as_bytes()));
        if digest != Q8_SHA256 {
            return Err(PolynomialError::Digest(digest));
        }
        IntegerPolynomial::parse(Q8_RESOURCE)
    }

    /// `E8(t) = 2t^6 - 18t^5 + 57t^4 - 78t^3 + 46t^2 - 12t + 1`.
    pub fn e8() -> IntegerPolynomial {
        IntegerPolynomial::new([1, -12, 46, -78, 57, -18, 2].into_iter().map(Integer::from).collect())
    }

    pub fn derivative(&self) -> IntegerPolynomial {
        if self.coefficients.len() == 1 {
            return IntegerPolynomial::new(vec![Integer::new()]);
        }
        IntegerPolynomial::new(
            self.coefficients
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| Integer::from(c * k as u32))
                .collect(),
        )
    }

    /// Horner evaluation with exact integer coefficients.
    pub fn eval(&self, x: &Float) -> Float {
        let prec = x.prec();
        let mut acc = mp::zero(prec);
        for c in self.coefficients.iter().rev() {
            acc *= x;
            acc += c;
        }
        acc
    }

    /// Newton refinement of a root near `start`.
    pub fn refine_root(&self, start: &Float, iterations: usize) -> Float {
        let d = self.derivative();
        let mut x = start.clone();
        for _ in 0..iterations {
            let step = self.eval(&x) / d.eval(&x);
            x -= step;
        }
        x
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RootReport {
    pub value_abs: Float,
    pub derivative_abs: Float,
    /// `|p(x)| / |p'(x)|`, the distance to the nearest root to first order.
    pub backward_error: Float,
    pub confirmed: bool,
}

/// Evaluates `poly` at `value`; "root confirmed" when the backward error is
/// below `2^(-tol_bits + 32)`.
pub fn verify_polynomial_root(poly: &IntegerPolynomial, value: &Float, tol_bits: u32) -> RootReport {
    let prec = value.prec();
    let value_abs = poly.eval(value).abs();
    let derivative_abs = poly.derivative().eval(value).abs();
    let backward_error = if derivative_abs.is_zero() {
        Float::with_val(prec, rug::float::Special::Infinity)
    } else {
        Float::with_val(prec, &value_abs / &derivative_abs)
    };
    let confirmed = backward_error < mp::pow2_neg(tol_bits.saturating_sub(32), prec);
    RootReport {
        value_abs,
        derivative_abs,
        backward_error,
        confirmed,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse closed form at byte {pos}: {msg}")]
pub struct ClosedFormError {
    pub pos: usize,
    pub msg: &'static str,
}

/// A sum of integer constants and terms `k sin(a pi / m)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosedForm {
    pub constant: i64,
    /// `(k, a, m)` for `k sin(a pi / m)`.
    pub sines: Vec<(i64, i64, i64)>,
}

impl ClosedForm {
    pub fn parse(expr: &str) -> Result<ClosedForm, ClosedFormError> {
        let mut p = Parser {
            s: expr.as_bytes(),
            pos: 0,
        };
        let mut form = ClosedForm {
            constant: 0,
            sines: Vec::new(),
        };
        let mut sign = 1;
        p.ws();
        if p.eat(b'-') {
            sign = -1;
        } else {
            p.eat(b'+');
        }
        loop {
            p.ws();
            let coeff = p.int();
            p.ws();
            p.eat(b'*');
            p.ws();
            if p.keyword("sin") {
                p.ws();
                p.expect(b'(')?;
                p.ws();
                let a = p.int().unwrap_or(1);
                p.ws();
                p.eat(b'*');
                p.ws();
                if !(p.keyword("π") || p.keyword("pi")) {
                    return Err(p.err("expected pi"));
                }
                p.ws();
                p.expect(b'/')?;
                p.ws();
                let m = p.int().ok_or_else(|| p.err("expected denominator"))?;
                if m == 0 {
                    return Err(p.err("zero denominator"));
                }
                p.ws();
                p.expect(b')')?;
                form.sines.push((sign * coeff.unwrap_or(1), a, m));
            } else {
                let c = coeff.ok_or_else(|| p.err("expected a term"))?;
                form.constant += sign * c;
            }
            p.ws();
            if p.pos == p.s.len() {
                break;
            }
            sign = if p.eat(b'+') {
                1
            } else if p.eat(b'-') {
                -1
            } else {
                return Err(p.err("expected '+' or '-'"));
            };
        }
        Ok(form)
    }

    pub fn eval(&self, prec: u32) -> Float {
        let mut total = Float::with_val(prec, self.constant);
        for &(k, a, m) in &self.sines {
            total += mp::pi_fraction(a, m, prec + 16).sin() * k;
        }
        total
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.s.get(self.pos) == Some(&b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<(), ClosedFormError> {
        if self.eat(b) {
            Ok(())
        } else {
            Err(self.err("unexpected character"))
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if self.s[self.pos..].starts_with(kw.as_bytes()) {
            self.pos += kw.len();
            true
        } else {
            false
        }
    }

    fn int(&mut self) -> Option<i64> {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).ok()?.parse().ok()
    }

    fn err(&self, msg: &'static str) -> ClosedFormError {
        ClosedFormError { pos: self.pos, msg }
    }
}

/// Whether `value` matches the closed form `expr` within `2^(-tol_bits + 16)`.
pub fn closed_form_check(expr: &str, value: &Float, tol_bits: u32) -> Result<bool, ClosedFormError> {
    let form = ClosedForm::parse(expr)?;
    let prec = value.prec();
    let diff = Float::with_val(prec, form.eval(prec) - value).abs();
    Ok(diff < mp::pow2_neg(tol_bits.saturating_sub(16), prec))
}
