//! Phase II: fixed-code refinement of the zonogon angles.
//!
//! With the code fixed and `phi_1 = 0`, `phi_{n+1} = pi`, the problem is
//!
//! ```text
//! max  sum_j 2 sin((phi_{j+1} - phi_j) / 2)
//! s.t. g1 = sum_{j=2..n} (c_{j-1} - c_j) cos(phi_j) - (c_1 + c_n) = 0
//!      g2 = sum_{j=2..n} (c_{j-1} - c_j) sin(phi_j)               = 0
//! ```
//!
//! The Lagrangian uses half the negated perimeter as objective,
//! `L = -sum_j sin((phi_{j+1} - phi_j) / 2) + y1 g1 + y2 g2`, which gives a
//! tridiagonal Hessian in the free angles `phi_2..phi_n` and a dense
//! `2 x (n-1)` constraint Jacobian.

mod linalg;
mod newton;

use rug::Float;
use thiserror::Error;

use crate::codes::Code;
use crate::mp;

pub use linalg::{minres, TridiagonalFactor};
pub use newton::{newton_solve, newton_solve_with, NewtonOptions, NewtonReport, Variant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Phase2Error {
    #[error("code has n = {code}, state has n = {state}")]
    DimensionMismatch { code: usize, state: usize },
    #[error("precision of {precision_bits} bits must exceed tolerance {tol_bits} + 32")]
    InvalidPrecision { precision_bits: u32, tol_bits: u32 },
    #[error("no convergence after {iterations} iterations (last increment {last_increment:e})")]
    NoConvergence { iterations: usize, last_increment: f64 },
    #[error("linear system is singular: {0}")]
    SingularSystem(String),
    #[error("angles are not strictly sorted or fewer than two sign changes")]
    DegenerateAngles,
    #[error("rank certificate mismatch: det {det:e} vs closed form {closed_form:e}")]
    CertificateMismatch { det: f64, closed_form: f64 },
}

/// Zonogon vertex angles `phi_1..phi_{n+1}` with `phi_1 = 0`, `phi_{n+1} = pi`.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleVector {
    phi: Vec<Float>,
}

impl AngleVector {
    /// Builds from the free angles `phi_2..phi_n`.
    pub fn from_free(free: Vec<Float>, precision_bits: u32) -> AngleVector {
        let mut phi = Vec::with_capacity(free.len() + 2);
        phi.push(mp::zero(precision_bits));
        phi.extend(free.into_iter().map(|x| Float::with_val(precision_bits, x)));
        phi.push(mp::pi(precision_bits));
        AngleVector { phi }
    }

    /// Builds from all `n + 1` angles; the endpoints are reset to `0` and `pi`.
    pub fn from_all(all: Vec<Float>, precision_bits: u32) -> AngleVector {
        assert!(all.len() >= 3, "need at least three angles");
        let n = all.len() - 1;
        AngleVector::from_free(all.into_iter().skip(1).take(n - 1).collect(), precision_bits)
    }

    /// `phi_j = (j - 1) pi / n`.
    pub fn regular(n: usize, precision_bits: u32) -> AngleVector {
        let free = (1..n)
            .map(|k| mp::pi_fraction(k as i64, n as i64, precision_bits))
            .collect();
        AngleVector::from_free(free, precision_bits)
    }

    pub fn n(&self) -> usize {
        self.phi.len() - 1
    }

    pub fn precision_bits(&self) -> u32 {
        self.phi[0].prec()
    }

    /// All angles, `phi_1..phi_{n+1}`.
    pub fn all(&self) -> &[Float] {
        &self.phi
    }

    /// `phi_2..phi_n`.
    pub fn free(&self) -> &[Float] {
        &self.phi[1..self.phi.len() - 1]
    }

    pub fn free_mut(&mut self) -> &mut [Float] {
        let len = self.phi.len();
        &mut self.phi[1..len - 1]
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.phi.windows(2).all(|w| w[0] < w[1])
    }

    /// `sum_j 2 sin((phi_{j+1} - phi_j) / 2)`.
    pub fn perimeter(&self) -> Float {
        let prec = self.precision_bits();
        let mut total = mp::zero(prec);
        for w in self.phi.windows(2) {
            let half = Float::with_val(prec, &w[1] - &w[0]) / 2u32;
            total += half.sin();
        }
        total * 2u32
    }
}

/// Newton iterate `w = (phi, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KktState {
    pub angles: AngleVector,
    pub multipliers: [Float; 2],
}

impl KktState {
    pub fn n(&self) -> usize {
        self.angles.n()
    }

    pub fn precision_bits(&self) -> u32 {
        self.angles.precision_bits()
    }

    /// Free angles followed by the two multipliers.
    pub fn to_vector(&self) -> Vec<Float> {
        self.angles
            .free()
            .iter()
            .cloned()
            .chain(self.multipliers.iter().cloned())
            .collect()
    }

    pub fn from_vector(v: &[Float], precision_bits: u32) -> KktState {
        let m = v.len() - 2;
        KktState {
            angles: AngleVector::from_free(v[..m].to_vec(), precision_bits),
            multipliers: [
                Float::with_val(precision_bits, &v[m]),
                Float::with_val(precision_bits, &v[m + 1]),
            ],
        }
    }
}

/// Regular `2n`-gon start with zero multipliers. Its objective equals the
/// upper bound `2n sin(pi / 2n)`.
pub fn init_regular(n: usize, precision_bits: u32) -> KktState {
    assert!(n >= 3, "polygons need n >= 3");
    KktState {
        angles: AngleVector::regular(n, precision_bits),
        multipliers: [mp::zero(precision_bits), mp::zero(precision_bits)],
    }
}

fn check_dims(state: &KktState, code: &Code) -> Result<(), Phase2Error> {
    if state.n() != code.n() {
        return Err(Phase2Error::DimensionMismatch {
            code: code.n(),
            state: state.n(),
        });
    }
    Ok(())
}

/// `c_{j-1} - c_j` for `j = 2..n`.
fn sign_differences(code: &Code) -> Vec<i32> {
    code.values().windows(2).map(|w| w[0] - w[1]).collect()
}

/// Sines and cosines of the free angles plus `sin/cos` of the half angle
/// differences.
struct Trig {
    sin_phi: Vec<Float>,
    cos_phi: Vec<Float>,
    sin_half: Vec<Float>,
    cos_half: Vec<Float>,
}

impl Trig {
    fn new(angles: &AngleVector) -> Trig {
        let prec = angles.precision_bits();
        let (sin_phi, cos_phi) = angles
            .free()
            .iter()
            .map(|p| p.clone().sin_cos(Float::new(prec)))
            .unzip();
        let (sin_half, cos_half) = angles
            .all()
            .windows(2)
            .map(|w| {
                let h = Float::with_val(prec, &w[1] - &w[0]) / 2u32;
                h.sin_cos(Float::new(prec))
            })
            .unzip();
        Trig {
            sin_phi,
            cos_phi,
            sin_half,
            cos_half,
        }
    }
}

/// Equality constraints `(g1, g2)`.
pub fn constraints(angles: &AngleVector, code: &Code) -> [Float; 2] {
    let prec = angles.precision_bits();
    let d = sign_differences(code);
    let v = code.values();
    let mut g1 = Float::with_val(prec, -(v[0] + v[v.len() - 1]));
    let mut g2 = mp::zero(prec);
    for (p, &dj) in angles.free().iter().zip(&d) {
        if dj != 0 {
            let (s, c) = p.clone().sin_cos(Float::new(prec));
            g1 += c * dj;
            g2 += s * dj;
        }
    }
    [g1, g2]
}

/// The two closure constraints in their original form
/// `sum_j c_j (cos phi_{j+1} - cos phi_j)` and the sine analogue.
pub fn closure_constraints(angles: &AngleVector, code: &Code) -> [Float; 2] {
    let prec = angles.precision_bits();
    let mut re = mp::zero(prec);
    let mut im = mp::zero(prec);
    for (w, &c) in angles.all().windows(2).zip(&code.values()) {
        let (s1, c1) = w[1].clone().sin_cos(Float::new(prec));
        let (s0, c0) = w[0].clone().sin_cos(Float::new(prec));
        re += (c1 - c0) * c;
        im += (s1 - s0) * c;
    }
    [re, im]
}

/// Lagrangian value `-sum_j sin(dphi_j / 2) + y1 g1 + y2 g2`.
pub fn lagrangian(state: &KktState, code: &Code) -> Result<Float, Phase2Error> {
    check_dims(state, code)?;
    let prec = state.precision_bits();
    let half_perimeter = state.angles.perimeter() / 2u32;
    let [g1, g2] = constraints(&state.angles, code);
    let mut l = Float::with_val(prec, -half_perimeter);
    l += Float::with_val(prec, &state.multipliers[0] * &g1);
    l += Float::with_val(prec, &state.multipliers[1] * &g2);
    Ok(l)
}

/// `(dL/dphi_2, ..., dL/dphi_n, g1, g2)`.
pub fn kkt_gradient(state: &KktState, code: &Code) -> Result<Vec<Float>, Phase2Error> {
    check_dims(state, code)?;
    let prec = state.precision_bits();
    let t = Trig::new(&state.angles);
    let d = sign_differences(code);
    let [y1, y2] = &state.multipliers;
    let mut out = Vec::with_capacity(code.n() + 1);
    for (i, &di) in d.iter().enumerate() {
        // free angle i is phi_{i+2}; half differences i (left) and i+1 (right)
        let mut v = Float::with_val(prec, &t.cos_half[i + 1] - &t.cos_half[i]) / 2u32;
        if di != 0 {
            let a = Float::with_val(prec, y2 * &t.cos_phi[i]);
            let b = Float::with_val(prec, y1 * &t.sin_phi[i]);
            v += (a - b) * di;
        }
        out.push(v);
    }
    let [g1, g2] = constraints(&state.angles, code);
    out.push(g1);
    out.push(g2);
    Ok(out)
}

/// Structured KKT matrix `[[H, C^T], [C, 0]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KktMatrix {
    /// `H_jj`, length `n - 1`.
    pub diag: Vec<Float>,
    /// `H_{j,j+1}`, length `n - 2`.
    pub off: Vec<Float>,
    /// First and second rows of `C`, each of length `n - 1`.
    pub jac: [Vec<Float>; 2],
}

impl KktMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len() + 2
    }

    pub fn precision_bits(&self) -> u32 {
        self.diag[0].prec()
    }

    /// `K v` for a vector laid out as free angles then multipliers.
    pub fn apply(&self, v: &[Float]) -> Vec<Float> {
        let m = self.diag.len();
        let prec = self.precision_bits();
        let mut out = Vec::with_capacity(m + 2);
        for i in 0..m {
            let mut acc = Float::with_val(prec, &self.diag[i] * &v[i]);
            if i > 0 {
                acc += Float::with_val(prec, &self.off[i - 1] * &v[i - 1]);
            }
            if i + 1 < m {
                acc += Float::with_val(prec, &self.off[i] * &v[i + 1]);
            }
            acc += Float::with_val(prec, &self.jac[0][i] * &v[m]);
            acc += Float::with_val(prec, &self.jac[1][i] * &v[m + 1]);
            out.push(acc);
        }
        for row in &self.jac {
            let mut acc = mp::zero(prec);
            for (a, b) in row.iter().zip(&v[..m]) {
                acc += Float::with_val(prec, a * b);
            }
            out.push(acc);
        }
        out
    }

    /// Dense row-major copy rounded to doubles.
    pub fn to_dense_f64(&self) -> Vec<Vec<f64>> {
        let m = self.diag.len();
        let mut k = vec![vec![0.0; m + 2]; m + 2];
        for i in 0..m {
            k[i][i] = self.diag[i].to_f64();
            if i + 1 < m {
                k[i][i + 1] = self.off[i].to_f64();
                k[i + 1][i] = self.off[i].to_f64();
            }
            for r in 0..2 {
                let c = self.jac[r][i].to_f64();
                k[i][m + r] = c;
                k[m + r][i] = c;
            }
        }
        k
    }
}

/// Hessian of the Lagrangian in the free angles and the constraint Jacobian.
pub fn kkt_matrix(state: &KktState, code: &Code) -> Result<KktMatrix, Phase2Error> {
    check_dims(state, code)?;
    let prec = state.precision_bits();
    let t = Trig::new(&state.angles);
    let d = sign_differences(code);
    let [y1, y2] = &state.multipliers;
    let m = d.len();
    let mut diag = Vec::with_capacity(m);
    let mut off = Vec::with_capacity(m.saturating_sub(1));
    let mut jac0 = Vec::with_capacity(m);
    let mut jac1 = Vec::with_capacity(m);
    for (i, &di) in d.iter().enumerate() {
        let mut h = Float::with_val(prec, &t.sin_half[i + 1] + &t.sin_half[i]) / 4u32;
        if di != 0 {
            // (c_j - c_{j-1}) (y1 cos phi_j + y2 sin phi_j)
            let a = Float::with_val(prec, y1 * &t.cos_phi[i]);
            let b = Float::with_val(prec, y2 * &t.sin_phi[i]);
            h -= (a + b) * di;
        }
        diag.push(h);
        if i + 1 < m {
            off.push(Float::with_val(prec, -&t.sin_half[i + 1]) / 4u32);
        }
        jac0.push(Float::with_val(prec, &t.sin_phi[i] * -di));
        jac1.push(Float::with_val(prec, &t.cos_phi[i] * di));
    }
    Ok(KktMatrix {
        diag,
        off,
        jac: [jac0, jac1],
    })
}

/// `det(C C^T)` by direct evaluation and by the closed form
/// `16 sum_{i<j in J} sin^2(phi_i - phi_j)` over the sign-change set `J`.
pub fn constraint_gram(state: &KktState, code: &Code) -> Result<(Float, Float), Phase2Error> {
    let k = kkt_matrix(state, code)?;
    let prec = state.precision_bits();
    let dot = |a: &[Float], b: &[Float]| {
        let mut acc = mp::zero(prec);
        for (x, y) in a.iter().zip(b) {
            acc += Float::with_val(prec, x * y);
        }
        acc
    };
    let a = dot(&k.jac[0], &k.jac[0]);
    let b = dot(&k.jac[0], &k.jac[1]);
    let c = dot(&k.jac[1], &k.jac[1]);
    let det = Float::with_val(prec, &a * &c) - Float::with_val(prec, &b * &b);

    let free = state.angles.free();
    let changes: Vec<&Float> = sign_differences(code)
        .iter()
        .zip(free)
        .filter(|(d, _)| **d != 0)
        .map(|(_, p)| p)
        .collect();
    let mut closed = mp::zero(prec);
    for (i, pi) in changes.iter().enumerate() {
        for pj in &changes[i + 1..] {
            let s = Float::with_val(prec, *pi - *pj).sin();
            closed += s.square();
        }
    }
    closed *= 16u32;
    Ok((det, closed))
}

/// Certifies that `C` has rank two at a strictly sorted state: returns
/// `det(C C^T) > 0` after checking it against the closed form.
pub fn jacobian_rank_certificate(state: &KktState, code: &Code) -> Result<Float, Phase2Error> {
    check_dims(state, code)?;
    let free = state.angles.free();
    let pi = mp::pi(state.precision_bits());
    let sorted = free.first().is_some_and(|f| *f > 0)
        && free.last().is_some_and(|l| *l < pi)
        && free.windows(2).all(|w| w[0] < w[1]);
    let changes = sign_differences(code).iter().filter(|d| **d != 0).count();
    if !sorted || changes < 2 {
        return Err(Phase2Error::DegenerateAngles);
    }
    let (det, closed) = constraint_gram(state, code)?;
    let prec = state.precision_bits();
    let scale = Float::with_val(prec, closed.clone().abs() + 1u32);
    let tol = mp::pow2_neg(prec - 16, prec) * scale;
    if Float::with_val(prec, &det - &closed).abs() > tol || det <= 0 {
        return Err(Phase2Error::CertificateMismatch {
            det: det.to_f64(),
            closed_form: closed.to_f64(),
        });
    }
    Ok(det)
}
