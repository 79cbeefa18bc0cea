//! Phase I: pick a code whose regular-polygon embedding nearly closes.
//!
//! At the regular angles `phi_j = j*pi/n` the closure constraint becomes the
//! complex residual `r(c) = (xi - 1) * sum_j c_j xi^j` with
//! `xi = exp(i*pi/n)`. For axially symmetric codes `r(c) / xi` is purely
//! imaginary and minimizing it is a subset-sum problem over the weights
//! `w_j = cos((j - 1/2) * pi / n)`:
//!
//! ```text
//! max w.x  s.t.  w.x <= budget = sum(w) / 2,  x in {0,1}^(n/2)
//! ```
//!
//! with `c_j = 1 - 2 x_j`. The search is a depth-first enumeration with
//! pruning, run either in exact 128-bit fixed point (denominator
//! `2^128 / n`) or in hardware doubles.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rug::Float;
use thiserror::Error;

use crate::codes::{Code, CodeError, QuarterCode, Sign};
use crate::mp::{self, Complex};

/// Precision used for weights before rounding into the fixed-point grid.
pub const WEIGHT_PRECISION_BITS: u32 = 256;
/// Largest `n` for the exhaustive non-symmetric search.
pub const MAX_GENERAL_N: usize = 20;
/// Largest suffix length accepted by [`parallel_split`].
pub const MAX_SUFFIX_BITS: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Phase1Error {
    #[error("subset-sum instances need n = 2^s with s >= 2 and n <= 128, got {0}")]
    InvalidN(usize),
    #[error("suffix of length {suffix} leaves no free entries for n/2 = {items}")]
    SuffixTooLong { suffix: usize, items: usize },
    #[error("invalid suffix pattern {0:?}, expected characters 0/1")]
    BadSuffix(String),
    #[error("exhaustive fixed-point search supports n/2 <= 64, got n = {0}")]
    TooLargeForExhaustive(usize),
    #[error("fixed-point accumulation overflowed")]
    OverflowDetected,
    #[error("no feasible assignment is consistent with the suffix")]
    Infeasible,
    #[error("exhaustive residual search supports n <= {MAX_GENERAL_N}, got {0}")]
    TooLarge(usize),
    #[error(transparent)]
    Code(#[from] CodeError),
}

/// Closure residual `(xi - 1) * sum_j c_j xi^j` at the regular angles.
pub fn residual(code: &Code, precision_bits: u32) -> Complex {
    let n = code.n() as i64;
    let prec = precision_bits + 16;
    let mut sum = Complex::zero(prec);
    for (j, c) in code.values().iter().enumerate() {
        let z = Complex::cis(&mp::pi_fraction(j as i64 + 1, n, prec));
        sum = &sum + &z.scale(*c);
    }
    let xi = Complex::cis(&mp::pi_fraction(1, n, prec));
    let one = Complex {
        re: Float::with_val(prec, 1),
        im: Float::new(prec),
    };
    let r = &(&xi - &one) * &sum;
    Complex {
        re: Float::with_val(precision_bits, &r.re),
        im: Float::with_val(precision_bits, &r.im),
    }
}

/// The same residual by direct summation of `c_j (z_{j+1} - z_j)`.
pub fn residual_direct(code: &Code, precision_bits: u32) -> Complex {
    let n = code.n() as i64;
    let prec = precision_bits + 16;
    let mut sum = Complex::zero(prec);
    for (j, c) in code.values().iter().enumerate() {
        let j = j as i64 + 1;
        let a = Complex::cis(&mp::pi_fraction(j + 1, n, prec));
        let b = Complex::cis(&mp::pi_fraction(j, n, prec));
        sum = &sum + &(&a - &b).scale(*c);
    }
    Complex {
        re: Float::with_val(precision_bits, &sum.re),
        im: Float::with_val(precision_bits, &sum.im),
    }
}

/// `xi^-1 * r(c) = sum_j c_j (xi^j - xi^(j-1))`: the closure defect with the
/// first zonogon vertex at angle zero. Purely imaginary for symmetric codes.
pub fn residual_rotated(code: &Code, precision_bits: u32) -> Complex {
    let n = code.n() as i64;
    let prec = precision_bits + 16;
    let r = residual(code, prec);
    let xi_inv = Complex::cis(&mp::pi_fraction(-1, n, prec));
    let v = &r * &xi_inv;
    Complex {
        re: Float::with_val(precision_bits, &v.re),
        im: Float::with_val(precision_bits, &v.im),
    }
}

/// Subset-sum instance for symmetric codes of a `2^s`-gon.
#[derive(Clone, Debug)]
pub struct SspInstance {
    n: usize,
    weights: Vec<Float>,
    budget: Float,
    fixed_weights: Vec<i128>,
    fixed_budget: i128,
}

impl SspInstance {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn items(&self) -> usize {
        self.n / 2
    }

    /// Weights `w_j` at [`WEIGHT_PRECISION_BITS`].
    pub fn weights(&self) -> &[Float] {
        &self.weights
    }

    pub fn budget(&self) -> &Float {
        &self.budget
    }

    /// Weight numerators over the shared denominator `2^128 / n`.
    pub fn fixed_weights(&self) -> &[i128] {
        &self.fixed_weights
    }

    pub fn fixed_budget(&self) -> i128 {
        self.fixed_budget
    }

    /// `log2` of the fixed-point denominator `2^128 / n`.
    pub fn scale_bits(&self) -> u32 {
        128 - self.n.trailing_zeros()
    }

    /// Converts a fixed-point numerator to a real value.
    pub fn fixed_to_float(&self, numerator: i128) -> Float {
        let v = Float::with_val(WEIGHT_PRECISION_BITS, numerator);
        v >> self.scale_bits()
    }

    /// Exact `budget - w.x` at [`WEIGHT_PRECISION_BITS`].
    pub fn exact_gap(&self, x: &[bool]) -> Float {
        let mut g = self.budget.clone();
        for (w, &take) in self.weights.iter().zip(x) {
            if take {
                g -= w;
            }
        }
        g
    }

    /// `c_j = 1 - 2 x_j`.
    pub fn signs_from_selection(x: &[bool]) -> Vec<Sign> {
        x.iter()
            .map(|&t| if t { Sign::Minus } else { Sign::Plus })
            .collect()
    }
}

pub fn build_ssp(n: usize) -> Result<SspInstance, Phase1Error> {
    if !n.is_power_of_two() || !(4..=128).contains(&n) {
        return Err(Phase1Error::InvalidN(n));
    }
    let prec = WEIGHT_PRECISION_BITS;
    let scale_bits = 128 - n.trailing_zeros();
    let weights: Vec<Float> = (1..=n / 2)
        .map(|j| {
            let angle = mp::pi_fraction(2 * j as i64 - 1, 2 * n as i64, prec);
            angle.cos()
        })
        .collect();
    let mut budget = Float::with_val(prec, Float::sum(weights.iter()));
    budget >>= 1;
    let to_fixed = |x: &Float| -> i128 {
        let scaled = Float::with_val(prec, x << scale_bits);
        let int = scaled
            .to_integer()
            .expect("finite weight");
        int.to_i128().expect("weights fit the 128-bit grid")
    };
    let fixed_weights = weights.iter().map(to_fixed).collect();
    let fixed_budget = to_fixed(&budget);
    Ok(SspInstance {
        n,
        weights,
        budget,
        fixed_weights,
        fixed_budget,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Arithmetic {
    /// Exact integers over the denominator `2^128 / n`.
    #[default]
    Fixed128,
    /// IEEE doubles.
    Float,
}

impl FromStr for Arithmetic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "int128" | "fixed128" => Ok(Arithmetic::Fixed128),
            "float" => Ok(Arithmetic::Float),
            other => Err(format!("unknown arithmetic {other:?}, expected int128|float")),
        }
    }
}

/// Fixed trailing entries of the selection vector `x`.
#[derive(Clone, Debug, PartialEq, Eq, Default, Hash)]
pub struct Suffix(pub Vec<bool>);

impl Suffix {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromStr for Suffix {
    type Err = Phase1Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Phase1Error::BadSuffix(s.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Suffix)
    }
}

impl fmt::Display for Suffix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SspResult {
    pub n: usize,
    /// Selection vector `x`; the quarter code is `c_j = 1 - 2 x_j`.
    pub selection: Vec<bool>,
    /// `budget - w.x` over the denominator `2^128 / n` (fixed-point mode only).
    pub gap_numerator: Option<i128>,
    /// Gap as a real number.
    pub gap: Float,
    pub nodes_visited: u64,
    pub wall_time: f64,
}

impl SspResult {
    pub fn signs(&self) -> Vec<Sign> {
        SspInstance::signs_from_selection(&self.selection)
    }

    pub fn quarter_string(&self) -> String {
        crate::codes::format_signs(&self.signs())
    }

    /// The quarter code, if the expanded sequence is a valid polygon code.
    pub fn quarter_code(&self) -> Result<QuarterCode, CodeError> {
        QuarterCode::new(self.n, self.signs())
    }

    fn better_than(&self, other: &SspResult) -> bool {
        compare_candidates(
            (&self.gap, self.gap_numerator, &self.selection),
            (&other.gap, other.gap_numerator, &other.selection),
        ) == Ordering::Less
    }
}

fn compare_candidates(
    a: (&Float, Option<i128>, &[bool]),
    b: (&Float, Option<i128>, &[bool]),
) -> Ordering {
    let by_gap = match (a.1, b.1) {
        (Some(x), Some(y)) => x.cmp(&y),
        _ => a.0.partial_cmp(b.0).unwrap_or(Ordering::Equal),
    };
    by_gap.then_with(|| a.2.cmp(b.2))
}

// ---------------------------------------------------------------------------
// Depth-first search.

trait Accumulator: Copy + PartialOrd {
    fn zero() -> Self;
    fn add(self, other: Self) -> Option<Self>;
    fn sub(self, other: Self) -> Self;
}

impl Accumulator for i128 {
    fn zero() -> Self {
        0
    }
    fn add(self, other: Self) -> Option<Self> {
        self.checked_add(other)
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
}

impl Accumulator for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, other: Self) -> Option<Self> {
        Some(self + other)
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
}

/// Candidate list sorted by (gap, selection bits); selection bits are packed
/// with item 0 in the most significant position so integer order is
/// lexicographic order.
struct Best<T> {
    capacity: usize,
    entries: Vec<(T, u64)>,
}

impl<T: Accumulator> Best<T> {
    fn new(capacity: usize) -> Self {
        Best {
            capacity,
            entries: Vec::with_capacity(capacity + 1),
        }
    }

    fn full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    fn threshold(&self) -> Option<T> {
        if self.full() {
            self.entries.last().map(|e| e.0)
        } else {
            None
        }
    }

    fn offer(&mut self, gap: T, bits: u64) {
        let lt = |a: &(T, u64), b: &(T, u64)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
        let cand = (gap, bits);
        if self.full() && !lt(&cand, self.entries.last().expect("full")) {
            return;
        }
        let pos = self.entries.iter().position(|e| lt(&cand, e)).unwrap_or(self.entries.len());
        self.entries.insert(pos, cand);
        self.entries.truncate(self.capacity);
    }
}

struct Search<'a, T> {
    weights: &'a [T],
    tail: Vec<T>,
    budget: T,
    items: usize,
    best: Best<T>,
    nodes: u64,
    shortcut: bool,
    overflow: bool,
}

impl<T: Accumulator> Search<'_, T> {
    fn bit(&self, j: usize) -> u64 {
        1u64 << (self.items - 1 - j)
    }

    fn dfs(&mut self, j: usize, sum: T, bits: u64) {
        self.nodes += 1;
        let free = self.weights.len();
        let Some(all) = sum.add(self.tail[j]) else {
            self.overflow = true;
            return;
        };
        if all <= self.budget {
            let gap = self.budget.sub(all);
            if let Some(t) = self.best.threshold() {
                if gap > t {
                    return;
                }
            }
            if self.shortcut || j == free {
                let rest = (j..free).fold(bits, |b, i| b | self.bit(i));
                self.best.offer(gap, rest);
                return;
            }
        }
        if j == free {
            return;
        }
        if self.shortcut {
            if let Some(t) = self.best.threshold() {
                if t == T::zero() {
                    return;
                }
            }
        }
        match sum.add(self.weights[j]) {
            Some(s) if s <= self.budget => self.dfs(j + 1, s, bits | self.bit(j)),
            Some(_) => {}
            None => self.overflow = true,
        }
        self.dfs(j + 1, sum, bits);
    }
}

fn run_search<T: Accumulator>(
    weights: &[T],
    budget: T,
    suffix: &Suffix,
    keep: usize,
) -> Result<(Vec<(T, Vec<bool>)>, u64), Phase1Error> {
    let items = weights.len();
    if items > 64 {
        return Err(Phase1Error::TooLargeForExhaustive(2 * items));
    }
    if suffix.len() >= items {
        return Err(Phase1Error::SuffixTooLong {
            suffix: suffix.len(),
            items,
        });
    }
    let free = items - suffix.len();
    let mut base = T::zero();
    let mut base_bits = 0u64;
    for (i, &take) in suffix.0.iter().enumerate() {
        let j = free + i;
        if take {
            base = base.add(weights[j]).ok_or(Phase1Error::OverflowDetected)?;
            base_bits |= 1u64 << (items - 1 - j);
        }
    }
    if base > budget {
        return Err(Phase1Error::Infeasible);
    }
    let mut tail = vec![T::zero(); free + 1];
    for j in (0..free).rev() {
        tail[j] = tail[j + 1]
            .add(weights[j])
            .ok_or(Phase1Error::OverflowDetected)?;
    }
    let mut search = Search {
        weights: &weights[..free],
        tail,
        budget,
        items,
        best: Best::new(keep),
        nodes: 0,
        shortcut: keep == 1,
        overflow: false,
    };
    search.dfs(0, base, base_bits);
    if search.overflow {
        return Err(Phase1Error::OverflowDetected);
    }
    let unpack = |bits: u64| (0..items).map(|j| bits >> (items - 1 - j) & 1 == 1).collect();
    let found = search
        .best
        .entries
        .iter()
        .map(|&(g, b)| (g, unpack(b)))
        .collect();
    Ok((found, search.nodes))
}

/// Global optimum of the subset-sum problem consistent with `suffix`.
///
/// Ties in the gap are broken towards the lexicographically smaller quarter
/// code (`+` before `-`).
pub fn solve_ssp(
    inst: &SspInstance,
    arithmetic: Arithmetic,
    suffix: Option<&Suffix>,
) -> Result<SspResult, Phase1Error> {
    solve_ssp_best(inst, arithmetic, suffix, 1)?
        .into_iter()
        .next()
        .ok_or(Phase1Error::Infeasible)
}

/// The `k` best feasible selections in increasing gap order.
pub fn solve_ssp_best(
    inst: &SspInstance,
    arithmetic: Arithmetic,
    suffix: Option<&Suffix>,
    k: usize,
) -> Result<Vec<SspResult>, Phase1Error> {
    let empty = Suffix::default();
    let suffix = suffix.unwrap_or(&empty);
    let started = Instant::now();
    let results: Vec<(Option<i128>, Float, Vec<bool>)>;
    let nodes;
    match arithmetic {
        Arithmetic::Fixed128 => {
            let (found, n) = run_search(&inst.fixed_weights, inst.fixed_budget, suffix, k.max(1))?;
            nodes = n;
            results = found
                .into_iter()
                .map(|(g, x)| (Some(g), inst.fixed_to_float(g), x))
                .collect();
        }
        Arithmetic::Float => {
            let w: Vec<f64> = inst.weights.iter().map(|w| w.to_f64()).collect();
            let (found, n) = run_search(&w, inst.budget.to_f64(), suffix, k.max(1))?;
            nodes = n;
            results = found
                .into_iter()
                .map(|(g, x)| (None, Float::with_val(WEIGHT_PRECISION_BITS, g), x))
                .collect();
        }
    }
    if results.is_empty() {
        return Err(Phase1Error::Infeasible);
    }
    let wall_time = started.elapsed().as_secs_f64();
    Ok(results
        .into_iter()
        .map(|(gap_numerator, gap, selection)| SspResult {
            n: inst.n,
            selection,
            gap_numerator,
            gap,
            nodes_visited: nodes,
            wall_time,
        })
        .collect())
}

/// All `2^suffix_bits` suffixes, in increasing binary order.
pub fn parallel_split(inst: &SspInstance, suffix_bits: u32) -> Result<Vec<Suffix>, Phase1Error> {
    let bits = suffix_bits.min(MAX_SUFFIX_BITS) as usize;
    if bits >= inst.items() && bits > 0 {
        return Err(Phase1Error::SuffixTooLong {
            suffix: bits,
            items: inst.items(),
        });
    }
    Ok((0..(1u32 << bits))
        .map(|v| Suffix((0..bits).map(|i| v >> (bits - 1 - i) & 1 == 1).collect()))
        .collect())
}

/// Solves every suffix partition on `jobs` threads and merges by minimum
/// gap, ties to the lexicographically smaller quarter code.
pub fn solve_ssp_parallel(
    inst: &SspInstance,
    arithmetic: Arithmetic,
    suffix_bits: u32,
    jobs: usize,
) -> Result<SspResult, Phase1Error> {
    use rayon::prelude::*;
    let started = Instant::now();
    let suffixes = parallel_split(inst, suffix_bits)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let parts: Vec<Result<SspResult, Phase1Error>> = pool.install(|| {
        suffixes
            .par_iter()
            .map(|s| solve_ssp(inst, arithmetic, Some(s)))
            .collect()
    });
    merge_results(parts, started.elapsed().as_secs_f64())
}

/// Deterministic merge of partition results. Infeasible partitions are
/// skipped; any other error is returned.
pub fn merge_results(
    parts: Vec<Result<SspResult, Phase1Error>>,
    wall_time: f64,
) -> Result<SspResult, Phase1Error> {
    let mut best: Option<SspResult> = None;
    let mut nodes = 0;
    for part in parts {
        match part {
            Ok(r) => {
                nodes += r.nodes_visited;
                if best.as_ref().is_none_or(|b| r.better_than(b)) {
                    best = Some(r);
                }
            }
            Err(Phase1Error::Infeasible) => {}
            Err(e) => return Err(e),
        }
    }
    let mut best = best.ok_or(Phase1Error::Infeasible)?;
    best.nodes_visited = nodes;
    best.wall_time = wall_time;
    Ok(best)
}

// ---------------------------------------------------------------------------
// Non-symmetric search.

#[derive(Clone, Debug)]
pub struct GeneralResidual {
    /// Minimizer, transformed so that `arg r(c)` lies in `[0, pi/(2n)]`.
    pub code: Code,
    /// `|sum_j c_j xi^j|`.
    pub modulus: Float,
    /// `modulus / 4`, the quantity comparable with subset-sum gaps.
    pub gap: Float,
    pub residual: Complex,
}

/// Exhaustive minimization of `|sum_j c_j xi^j|` over all valid codes.
pub fn minimize_residual_general(
    n: usize,
    precision_bits: u32,
) -> Result<GeneralResidual, Phase1Error> {
    if n > MAX_GENERAL_N {
        return Err(Phase1Error::TooLarge(n));
    }
    if n < 3 {
        return Err(CodeError::TooShort(n).into());
    }
    let roots: Vec<(f64, f64)> = (1..=n)
        .map(|j| {
            let t = std::f64::consts::PI * j as f64 / n as f64;
            (t.cos(), t.sin())
        })
        .collect();
    // Screen in doubles, then re-rank near-minimal codes in MPFR.
    let mut screened: Vec<(f64, u64)> = Vec::new();
    let mut min = f64::INFINITY;
    for pattern in 0..(1u64 << (n - 1)) {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, &(c, s)) in roots.iter().enumerate() {
            let minus = j > 0 && pattern >> (n - 1 - j) & 1 == 1;
            let sign = if minus { -1.0 } else { 1.0 };
            re += sign * c;
            im += sign * s;
        }
        let m = re.hypot(im);
        if m <= min + 1e-9 {
            min = min.min(m);
            screened.push((m, pattern));
            screened.retain(|&(v, _)| v <= min + 1e-9);
        }
    }
    let prec = precision_bits.max(64);
    let tie = mp::pow2_neg(prec - 16, prec);
    let mut best: Option<(Float, Code)> = None;
    for &(_, pattern) in &screened {
        let half: Vec<Sign> = (0..n)
            .map(|j| {
                if j > 0 && pattern >> (n - 1 - j) & 1 == 1 {
                    Sign::Minus
                } else {
                    Sign::Plus
                }
            })
            .collect();
        let Ok(code) = Code::new(half) else { continue };
        let m = weighted_root_sum(&code, prec).norm();
        let canonical = code.canonical();
        let replace = match &best {
            None => true,
            Some((bm, bc)) => {
                let diff = Float::with_val(prec, &m - bm);
                if diff.clone().abs() <= tie {
                    canonical < *bc
                } else {
                    diff < 0
                }
            }
        };
        if replace {
            best = Some((m, canonical));
        }
    }
    let (modulus, code) = best.ok_or(Phase1Error::Infeasible)?;
    let code = if modulus <= tie {
        code
    } else {
        normalize_argument(&code, prec)
    };
    let gap = Float::with_val(prec, &modulus / 4u32);
    let residual = residual(&code, prec);
    Ok(GeneralResidual {
        code,
        modulus,
        gap,
        residual,
    })
}

/// `sum_j c_j xi^j`.
pub fn weighted_root_sum(code: &Code, prec: u32) -> Complex {
    let n = code.n() as i64;
    let mut sum = Complex::zero(prec);
    for (j, c) in code.values().iter().enumerate() {
        let z = Complex::cis(&mp::pi_fraction(j as i64 + 1, n, prec));
        sum = &sum + &z.scale(*c);
    }
    sum
}

/// Picks the dihedral image whose residual argument lies in `[0, pi/(2n)]`,
/// preferring the lexicographically smallest among several.
fn normalize_argument(code: &Code, prec: u32) -> Code {
    let n = code.n();
    let upper = mp::pi_fraction(1, 2 * n as i64, prec);
    let slack = mp::pow2_neg(prec / 2, prec);
    let lo = Float::with_val(prec, -&slack);
    let hi = Float::with_val(prec, &upper + &slack);
    let mut candidates: Vec<Code> = (0..2 * n)
        .flat_map(|k| [code.transform(k, false), code.transform(k, true)])
        .filter(|c| {
            let a = residual(c, prec).arg();
            a >= lo && a <= hi
        })
        .collect();
    candidates.sort();
    candidates.into_iter().next().unwrap_or_else(|| code.clone())
}
