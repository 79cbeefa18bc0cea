//! The JSON solution record and the formats derived from it.

use std::fmt::Write as _;

use maxperim::codes::{Code, QuarterCode};
use maxperim::geometry::{self, default_unit_tolerance, PolygonSolution};
use maxperim::mp;
use maxperim::phase2::{AngleVector, KktState, NewtonReport};
use maxperim::pipeline::Timings;
use rug::Float;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Field order is the canonical key order of the JSON form. Everything
/// except `timings` is a deterministic function of the inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionRecord {
    pub schema_version: u32,
    pub n: usize,
    /// First half `c_1..c_n` of the code.
    pub code: String,
    pub quarter_code: Option<String>,
    /// `phi_0 = 0, ..., phi_n = pi`.
    pub angles: Vec<String>,
    pub multipliers: Vec<String>,
    pub perimeter: String,
    pub gap: String,
    pub precision_bits: u32,
    pub tol_bits: u32,
    pub variant: String,
    pub iterations: usize,
    pub timings: Timings,
}

#[derive(Debug)]
pub enum RecordError {
    Unverified(String),
    Parse(String),
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RecordError::Unverified(m) => write!(f, "unverified-record: {m}"),
            RecordError::Parse(m) => write!(f, "invalid record: {m}"),
        }
    }
}

fn decimal(x: &Float, bits: u32) -> String {
    mp::to_decimal(x, mp::digits_for_bits(bits))
}

impl SolutionRecord {
    pub fn new(
        quarter: Option<&QuarterCode>,
        state: &KktState,
        report: &NewtonReport,
        polygon: &PolygonSolution,
        tol_bits: u32,
        timings: Timings,
    ) -> SolutionRecord {
        let bits = state.angles.precision_bits();
        SolutionRecord {
            schema_version: SCHEMA_VERSION,
            n: polygon.code.n(),
            code: polygon.code.to_string(),
            quarter_code: quarter.map(|q| maxperim::codes::format_signs(q.entries())),
            angles: state.angles.all().iter().map(|a| decimal(a, bits)).collect(),
            multipliers: state.multipliers.iter().map(|y| decimal(y, bits)).collect(),
            perimeter: decimal(&report.perimeter, bits),
            gap: decimal(&polygon.gap, bits),
            precision_bits: bits,
            tol_bits,
            variant: report.variant.to_string(),
            iterations: report.iterations,
            timings,
        }
    }

    pub fn from_json(text: &str) -> Result<SolutionRecord, RecordError> {
        let rec: SolutionRecord =
            serde_json::from_str(text).map_err(|e| RecordError::Parse(e.to_string()))?;
        if rec.schema_version != SCHEMA_VERSION {
            return Err(RecordError::Parse(format!(
                "schema_version {} is not supported",
                rec.schema_version
            )));
        }
        Ok(rec)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }

    pub fn parse_float(&self, s: &str) -> Result<Float, RecordError> {
        mp::parse_decimal(s, self.precision_bits)
            .ok_or_else(|| RecordError::Parse(format!("bad decimal {s:?}")))
    }

    /// Rebuilds and re-checks the polygon: closure, convexity, smallness,
    /// zonogon code and the stored perimeter.
    pub fn verify(&self) -> Result<(PolygonSolution, geometry::DiameterGraph), RecordError> {
        if self.angles.is_empty() {
            return Err(RecordError::Unverified("no angles".into()));
        }
        if self.angles.len() != self.n + 1 {
            return Err(RecordError::Unverified(format!(
                "{} angles for n = {}",
                self.angles.len(),
                self.n
            )));
        }
        let code: Code = self
            .code
            .parse()
            .map_err(|e| RecordError::Parse(format!("code: {e}")))?;
        let angles = self
            .angles
            .iter()
            .map(|a| self.parse_float(a))
            .collect::<Result<Vec<_>, _>>()?;
        let angles = AngleVector::from_all(angles, self.precision_bits);
        let unverified = |e: &dyn std::fmt::Display| RecordError::Unverified(e.to_string());
        let poly = geometry::reconstruct(&code, &angles, self.tol_bits).map_err(|e| unverified(&e))?;
        let tol = mp::pow2_neg(self.tol_bits.saturating_sub(8), self.precision_bits);
        geometry::zonogon_check(&poly, &tol).map_err(|e| unverified(&e))?;
        let stored = self.parse_float(&self.perimeter)?;
        if Float::with_val(self.precision_bits, &stored - &poly.perimeter).abs() > tol {
            return Err(RecordError::Unverified("perimeter does not match the angles".into()));
        }
        let graph = geometry::diameter_graph(&poly, &default_unit_tolerance(self.tol_bits, self.precision_bits));
        Ok((poly, graph))
    }
}

pub fn to_csv(poly: &PolygonSolution) -> String {
    let digits = mp::digits_for_bits(poly.precision_bits());
    let mut out = String::from("index,x,y\n");
    for (i, v) in poly.vertices.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", mp::to_decimal(&v.re, digits), mp::to_decimal(&v.im, digits));
    }
    out
}
