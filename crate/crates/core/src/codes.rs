//! Zonogon codes: the combinatorial skeleton of a small polygon.
//!
//! A code of an `n`-gon is an antisymmetric sign sequence `c` of length
//! `2n` (`c[n + j] = -c[j]`). Only the first half is stored; cyclic
//! operations materialize the full string on demand. Two codes are
//! equivalent when one maps onto the other under the dihedral group acting
//! on the `2n` positions. Rotating by `n` negates the code, so global sign
//! flips are already inside that group.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Largest `n` supported by the bit-level enumerator (full code fits a `u64`).
pub const MAX_ENUMERATION_N: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodeError {
    #[error("code needs n >= 3, got {0}")]
    TooShort(usize),
    #[error("cyclic run of {run} equal signs exceeds n - 2 = {limit}")]
    RunTooLong { run: usize, limit: usize },
    #[error("full code is not antisymmetric at position {0}")]
    NotAntisymmetric(usize),
    #[error("invalid sign character {0:?}")]
    BadChar(char),
    #[error("full code must have even length, got {0}")]
    OddLength(usize),
    #[error("invalid composition: {0}")]
    InvalidComposition(String),
    #[error("{d} is not an odd divisor >= 3 of {n}")]
    InvalidDivisor { n: usize, d: usize },
    #[error("quarter codes need n divisible by 4 and n/2 entries (n = {n}, entries = {len})")]
    InvalidQuarter { n: usize, len: usize },
    #[error("enumeration supports 3 <= n <= {MAX_ENUMERATION_N}, got {0}")]
    EnumerationSize(usize),
}

/// A single code entry. `Plus` sorts before `Minus`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn from_char(ch: char) -> Result<Sign, CodeError> {
        match ch {
            '+' => Ok(Sign::Plus),
            '-' | '\u{2212}' => Ok(Sign::Minus),
            other => Err(CodeError::BadChar(other)),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

pub fn parse_signs(s: &str) -> Result<Vec<Sign>, CodeError> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(Sign::from_char)
        .collect()
}

pub fn format_signs(signs: &[Sign]) -> String {
    signs.iter().map(|s| s.as_char()).collect()
}

/// Longest cyclic run of equal entries.
fn max_cyclic_run(seq: &[Sign]) -> usize {
    let len = seq.len();
    if len == 0 {
        return 0;
    }
    let Some(start) = (0..len).find(|&i| seq[i] != seq[(i + len - 1) % len]) else {
        return len;
    };
    let (mut best, mut run) = (0, 0);
    for k in 0..len {
        let i = (start + k) % len;
        if k > 0 && seq[i] == seq[(i + len - 1) % len] {
            run += 1;
        } else {
            run = 1;
        }
        best = best.max(run);
    }
    best
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Code {
    half: Vec<Sign>,
}

impl Code {
    /// Builds a code from its first half `(c_1, ..., c_n)`.
    pub fn new(half: Vec<Sign>) -> Result<Code, CodeError> {
        let n = half.len();
        if n < 3 {
            return Err(CodeError::TooShort(n));
        }
        let code = Code { half };
        let run = max_cyclic_run(&code.full());
        if run > n - 2 {
            return Err(CodeError::RunTooLong { run, limit: n - 2 });
        }
        Ok(code)
    }

    /// Builds a code from the full antisymmetric sequence of length `2n`.
    pub fn from_full(full: &[Sign]) -> Result<Code, CodeError> {
        if full.len() % 2 == 1 {
            return Err(CodeError::OddLength(full.len()));
        }
        let n = full.len() / 2;
        if let Some(j) = (0..n).find(|&j| full[n + j] != full[j].flip()) {
            return Err(CodeError::NotAntisymmetric(j));
        }
        Code::new(full[..n].to_vec())
    }

    pub fn parse_full(s: &str) -> Result<Code, CodeError> {
        Code::from_full(&parse_signs(s)?)
    }

    pub fn n(&self) -> usize {
        self.half.len()
    }

    pub fn half(&self) -> &[Sign] {
        &self.half
    }

    /// Signs as `+1 / -1` integers, first half only.
    pub fn values(&self) -> Vec<i32> {
        self.half.iter().map(|s| s.value()).collect()
    }

    /// The full length-`2n` code.
    pub fn full(&self) -> Vec<Sign> {
        self.half
            .iter()
            .copied()
            .chain(self.half.iter().map(|s| s.flip()))
            .collect()
    }

    pub fn full_string(&self) -> String {
        format_signs(&self.full())
    }

    /// Lexicographically smallest representative of the dihedral orbit.
    pub fn canonical(&self) -> Code {
        canonicalize(self)
    }

    pub fn is_equivalent(&self, other: &Code) -> bool {
        self.n() == other.n() && self.canonical() == other.canonical()
    }

    /// Image of the code under a dihedral group element: reflect (reverse
    /// the full sequence) if `reflect`, then start reading at `shift`.
    pub fn transform(&self, shift: usize, reflect: bool) -> Code {
        let mut full = self.full();
        if reflect {
            full.reverse();
        }
        let len = full.len();
        full.rotate_left(shift % len);
        Code {
            half: full[..self.n()].to_vec(),
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_signs(&self.half))
    }
}

impl FromStr for Code {
    type Err = CodeError;

    /// Parses the first half, e.g. `"+--+-++-"` for an octagon.
    fn from_str(s: &str) -> Result<Code, CodeError> {
        Code::new(parse_signs(s)?)
    }
}

/// Lexicographic minimum of the full code over all `2n` rotations and `2n`
/// reflections.
pub fn canonicalize(code: &Code) -> Code {
    let n = code.n();
    let full = code.full();
    let len = full.len();
    let mut reversed = full.clone();
    reversed.reverse();
    let mut best: Option<(usize, bool)> = None;
    let view = |seq: &[Sign], k: usize, i: usize| seq[(k + i) % len];
    for (reflect, seq) in [(false, &full), (true, &reversed)] {
        for k in 0..len {
            let better = match best {
                None => true,
                Some((bk, br)) => {
                    let bseq = if br { &reversed } else { &full };
                    (0..len)
                        .map(|i| view(seq, k, i).cmp(&view(bseq, bk, i)))
                        .find(|o| o.is_ne())
                        .is_some_and(|o| o.is_lt())
                }
            };
            if better {
                best = Some((k, reflect));
            }
        }
    }
    let (k, reflect) = best.expect("non-empty orbit");
    let seq = if reflect { &reversed } else { &full };
    Code {
        half: (0..n).map(|i| view(seq, k, i)).collect(),
    }
}

// ---------------------------------------------------------------------------
// Bit-level enumeration.
//
// The full code is packed into the low `2n` bits of a u64, first entry in the
// most significant position, `Minus` = 1. Integer order then equals the
// lexicographic order used by `canonicalize`.

#[derive(Clone, Copy, Debug)]
struct Packed {
    len: u32,
    mask: u64,
}

impl Packed {
    fn new(n: usize) -> Packed {
        let len = 2 * n as u32;
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        Packed { len, mask }
    }

    fn full(&self, half: u64) -> u64 {
        let n = self.len / 2;
        let half_mask = (1u64 << n) - 1;
        ((half << n) | (!half & half_mask)) & self.mask
    }

    /// Sequence read from position `k` onwards.
    #[inline]
    fn rot(&self, x: u64, k: u32) -> u64 {
        if k == 0 {
            x
        } else {
            ((x << k) | (x >> (self.len - k))) & self.mask
        }
    }

    #[inline]
    fn reverse(&self, x: u64) -> u64 {
        x.reverse_bits() >> (64 - self.len)
    }

    fn is_canonical(&self, x: u64) -> bool {
        if (1..self.len).any(|k| self.rot(x, k) < x) {
            return false;
        }
        let r = self.reverse(x);
        (0..self.len).all(|k| self.rot(r, k) >= x)
    }

    /// True when some cyclic run of ones reaches `limit + 1`. Runs of zeros
    /// mirror runs of ones half a turn later, so one check covers both.
    fn has_run_longer_than(&self, x: u64, limit: u32) -> bool {
        let mut y = x;
        for t in 1..=limit {
            y &= self.rot(x, t);
            if y == 0 {
                return false;
            }
        }
        y != 0
    }

    fn unpack_half(&self, x: u64) -> Vec<Sign> {
        let n = self.len / 2;
        (0..n)
            .map(|i| {
                if (x >> (self.len - 1 - i)) & 1 == 1 {
                    Sign::Minus
                } else {
                    Sign::Plus
                }
            })
            .collect()
    }
}

/// Streaming enumeration of canonical codes for one prefix partition.
#[derive(Clone, Debug)]
pub struct CodeStream {
    n: usize,
    packed: Packed,
    next: u64,
    end: u64,
}

impl CodeStream {
    fn accept(&self, half: u64) -> Option<u64> {
        let full = self.packed.full(half);
        let limit = self.n as u32 - 2;
        (self.packed.is_canonical(full) && !self.packed.has_run_longer_than(full, limit))
            .then_some(full)
    }
}

impl Iterator for CodeStream {
    type Item = Code;

    fn next(&mut self) -> Option<Code> {
        while self.next < self.end {
            let half = self.next;
            self.next += 1;
            if let Some(full) = self.accept(half) {
                return Some(Code {
                    half: self.packed.unpack_half(full),
                });
            }
        }
        None
    }
}

fn check_enumeration_size(n: usize) -> Result<(), CodeError> {
    if (3..=MAX_ENUMERATION_N).contains(&n) {
        Ok(())
    } else {
        Err(CodeError::EnumerationSize(n))
    }
}

/// Every equivalence class of valid codes exactly once, in increasing
/// canonical order. The number of classes is one less than the number of
/// self-dual two-colored bracelets with `2n` beads.
pub fn enumerate_codes(n: usize) -> Result<CodeStream, CodeError> {
    enumerate_codes_partition(n, 0, 0)
}

/// One of `2^prefix_bits` disjoint partitions of [`enumerate_codes`].
///
/// Canonical codes start with `+`; partitions fix the next `prefix_bits`
/// entries of the half code. Their union is the full enumeration.
pub fn enumerate_codes_partition(
    n: usize,
    prefix_bits: u32,
    index: u64,
) -> Result<CodeStream, CodeError> {
    check_enumeration_size(n)?;
    let free = n as u32 - 1;
    let prefix_bits = prefix_bits.min(free);
    assert!(index < (1u64 << prefix_bits), "partition index out of range");
    let width = free - prefix_bits;
    Ok(CodeStream {
        n,
        packed: Packed::new(n),
        next: index << width,
        end: (index + 1) << width,
    })
}

/// Counts canonical codes without materializing them, splitting the work
/// over rayon's pool.
pub fn count_codes(n: usize) -> Result<u64, CodeError> {
    use rayon::prelude::*;
    check_enumeration_size(n)?;
    let prefix_bits = (n as u32 - 1).min(10);
    let total = (0..(1u64 << prefix_bits))
        .into_par_iter()
        .map(|idx| {
            let stream = enumerate_codes_partition(n, prefix_bits, idx).expect("size checked");
            (stream.next..stream.end)
                .filter(|&h| stream.accept(h).is_some())
                .count() as u64
        })
        .sum();
    Ok(total)
}

// ---------------------------------------------------------------------------
// Compositions.

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Composition {
    parts: Vec<usize>,
}

impl Composition {
    pub fn new(parts: Vec<usize>) -> Result<Composition, CodeError> {
        if parts.len() < 3 || parts.len().is_multiple_of(2) {
            return Err(CodeError::InvalidComposition(format!(
                "length {} is not odd and >= 3",
                parts.len()
            )));
        }
        if parts.contains(&0) {
            return Err(CodeError::InvalidComposition("zero part".into()));
        }
        Ok(Composition { parts })
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn total(&self) -> usize {
        self.parts.iter().sum()
    }

    /// Lexicographically smallest cyclic rotation or reflection.
    pub fn canonical(&self) -> Composition {
        let m = self.parts.len();
        let mut rev = self.parts.clone();
        rev.reverse();
        let best = [&self.parts, &rev]
            .into_iter()
            .flat_map(|seq| (0..m).map(move |k| (0..m).map(|i| seq[(k + i) % m]).collect::<Vec<_>>()))
            .min()
            .expect("non-empty");
        Composition { parts: best }
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.parts.iter().map(|p| p.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for Composition {
    type Err = CodeError;

    fn from_str(s: &str) -> Result<Composition, CodeError> {
        let parts = s
            .trim()
            .trim_start_matches('(')
            .trim_end_matches(')')
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| CodeError::InvalidComposition(format!("{p:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Composition::new(parts)
    }
}

/// Lengths of the cyclic runs of `-` in the full code, read from the first
/// run that starts after a `+`.
pub fn minus_runs(code: &Code) -> Vec<usize> {
    let full = code.full();
    let len = full.len();
    let start = (0..len)
        .find(|&i| full[i] == Sign::Minus && full[(i + len - 1) % len] == Sign::Plus)
        .expect("antisymmetric code has both signs");
    let mut runs = Vec::new();
    let mut run = 0;
    for k in 0..len {
        match full[(start + k) % len] {
            Sign::Minus => run += 1,
            Sign::Plus if run > 0 => {
                runs.push(run);
                run = 0;
            }
            Sign::Plus => {}
        }
    }
    if run > 0 {
        runs.push(run);
    }
    runs
}

/// Canonical composition of `n` given by the minus-run lengths of the code.
pub fn code_to_composition(code: &Code) -> Composition {
    Composition {
        parts: minus_runs(code),
    }
    .canonical()
}

/// Rebuilds a code from a composition: the parts give the minus runs, and
/// the plus runs are the same parts read from the middle entry onwards.
pub fn composition_to_code(comp: &Composition, n: usize) -> Result<Code, CodeError> {
    if comp.total() != n {
        return Err(CodeError::InvalidComposition(format!(
            "parts sum to {}, expected {n}",
            comp.total()
        )));
    }
    let m = comp.len();
    let offset = (m - 1) / 2;
    let mut full = Vec::with_capacity(2 * n);
    for k in 0..m {
        let plus = comp.parts[(k + offset) % m];
        full.extend(std::iter::repeat_n(Sign::Plus, plus));
        full.extend(std::iter::repeat_n(Sign::Minus, comp.parts[k]));
    }
    Code::from_full(&full)
}

/// `c_j = (-1)^ceil(j d / n)`, a code with vanishing closure residual at
/// the regular angles whenever `d` is an odd divisor of `n`.
pub fn odd_divisor_code(n: usize, d: usize) -> Result<Code, CodeError> {
    if d < 3 || d.is_multiple_of(2) || !n.is_multiple_of(d) {
        return Err(CodeError::InvalidDivisor { n, d });
    }
    let half = (1..=n)
        .map(|j| {
            let e = (j * d).div_ceil(n);
            if e.is_multiple_of(2) {
                Sign::Plus
            } else {
                Sign::Minus
            }
        })
        .collect();
    Code::new(half)
}

/// First `n/2` entries of an axially symmetric code (`c_{n-j+1} = -c_j`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuarterCode {
    n: usize,
    entries: Vec<Sign>,
}

impl QuarterCode {
    pub fn new(n: usize, entries: Vec<Sign>) -> Result<QuarterCode, CodeError> {
        if !n.is_multiple_of(4) || n == 0 || entries.len() != n / 2 {
            return Err(CodeError::InvalidQuarter {
                n,
                len: entries.len(),
            });
        }
        let q = QuarterCode { n, entries };
        Code::new(q.half())?;
        Ok(q)
    }

    /// Parses `"+--+"`; `n` is twice the number of entries.
    pub fn parse(s: &str) -> Result<QuarterCode, CodeError> {
        let entries = parse_signs(s)?;
        QuarterCode::new(2 * entries.len(), entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[Sign] {
        &self.entries
    }

    fn half(&self) -> Vec<Sign> {
        self.entries
            .iter()
            .copied()
            .chain(self.entries.iter().rev().map(|s| s.flip()))
            .collect()
    }

    pub fn expand(&self) -> Code {
        Code { half: self.half() }
    }
}

impl fmt::Display for QuarterCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_signs(&self.entries))
    }
}

pub fn expand_quarter(q: &QuarterCode) -> Code {
    q.expand()
}
