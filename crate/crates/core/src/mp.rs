//! Thin helpers over MPFR floats: constants, decimal rendering and a
//! minimal complex type.

use std::ops::{Add, Mul, Sub};

use rug::float::Constant;
use rug::Float;

/// Default working precision in bits.
pub const DEFAULT_PRECISION_BITS: u32 = 360;
/// Default Newton tolerance, as a power of two on the increment norm.
pub const DEFAULT_TOL_BITS: u32 = 320;

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

pub fn zero(prec: u32) -> Float {
    Float::new(prec)
}

/// `2^-bits` at the given precision.
pub fn pow2_neg(bits: u32, prec: u32) -> Float {
    let one = Float::with_val(prec, 1);
    one >> bits
}

/// `k * pi / m`, evaluated without an intermediate rounding of `pi / m`.
pub fn pi_fraction(k: i64, m: i64, prec: u32) -> Float {
    let mut x = pi(prec + 16);
    x *= k;
    x /= m;
    Float::with_val(prec, x)
}

/// Number of significant decimal digits that preserve `bits` of precision.
pub fn digits_for_bits(bits: u32) -> usize {
    (f64::from(bits) * 0.302).ceil() as usize + 2
}

/// Renders `x` with `digits` significant decimal digits, round to nearest.
///
/// Values in `[1e-3, 1e12)` are written positionally, everything else in
/// scientific notation (`d.ddd…e±x`).
pub fn to_decimal(x: &Float, digits: usize) -> String {
    let digits = digits.max(1);
    let (neg, mantissa, exp) = x.to_sign_string_exp(10, Some(digits));
    let Some(exp) = exp else {
        return if x.is_zero() {
            "0".to_string()
        } else {
            mantissa
        };
    };
    let sign = if neg { "-" } else { "" };
    // value = 0.mantissa * 10^exp
    if (-2..=12).contains(&exp) {
        let body = if exp <= 0 {
            format!("0.{}{}", "0".repeat((-exp) as usize), mantissa)
        } else {
            let e = exp as usize;
            if e >= mantissa.len() {
                format!("{}{}", mantissa, "0".repeat(e - mantissa.len()))
            } else {
                format!("{}.{}", &mantissa[..e], &mantissa[e..])
            }
        };
        format!("{sign}{body}")
    } else {
        let (head, tail) = mantissa.split_at(1);
        if tail.is_empty() {
            format!("{sign}{head}e{}", exp - 1)
        } else {
            format!("{sign}{head}.{tail}e{}", exp - 1)
        }
    }
}

/// Short scientific rendering, e.g. `3.007e-1`.
pub fn to_sci(x: &Float, significant: usize) -> String {
    let significant = significant.max(1);
    let (neg, mantissa, exp) = x.to_sign_string_exp(10, Some(significant));
    let Some(exp) = exp else {
        return "0".to_string();
    };
    let sign = if neg { "-" } else { "" };
    let (head, tail) = mantissa.split_at(1);
    if tail.is_empty() {
        format!("{sign}{head}e{}", exp - 1)
    } else {
        format!("{sign}{head}.{tail}e{}", exp - 1)
    }
}

pub fn parse_decimal(s: &str, prec: u32) -> Option<Float> {
    Float::parse(s.trim()).ok().map(|p| Float::with_val(prec, p))
}

/// Number of leading decimal digits (after the integer part) in which two
/// positional decimal strings agree.
pub fn matching_fraction_digits(a: &str, b: &str) -> usize {
    let (ai, af) = a.split_once('.').unwrap_or((a, ""));
    let (bi, bf) = b.split_once('.').unwrap_or((b, ""));
    if ai != bi {
        return 0;
    }
    af.bytes().zip(bf.bytes()).take_while(|(x, y)| x == y).count()
}

/// Complex number with MPFR components.
#[derive(Clone, Debug, PartialEq)]
pub struct Complex {
    pub re: Float,
    pub im: Float,
}

impl Complex {
    pub fn zero(prec: u32) -> Self {
        Self {
            re: zero(prec),
            im: zero(prec),
        }
    }

    /// `exp(i * theta)`.
    pub fn cis(theta: &Float) -> Self {
        let (s, c) = theta.clone().sin_cos(Float::new(theta.prec()));
        Self { re: c, im: s }
    }

    pub fn scale(&self, k: i32) -> Self {
        Self {
            re: Float::with_val(self.re.prec(), &self.re * k),
            im: Float::with_val(self.im.prec(), &self.im * k),
        }
    }

    pub fn norm(&self) -> Float {
        let prec = self.re.prec();
        let mut r = Float::with_val(prec, self.re.clone().hypot(&self.im));
        r.abs_mut();
        r
    }

    /// Argument in `(-pi, pi]`.
    pub fn arg(&self) -> Float {
        Float::with_val(self.re.prec(), self.im.clone().atan2(&self.re))
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: Float::with_val(self.im.prec(), -&self.im),
        }
    }
}

impl Add for &Complex {
    type Output = Complex;
    fn add(self, rhs: &Complex) -> Complex {
        let prec = self.re.prec();
        Complex {
            re: Float::with_val(prec, &self.re + &rhs.re),
            im: Float::with_val(prec, &self.im + &rhs.im),
        }
    }
}

impl Sub for &Complex {
    type Output = Complex;
    fn sub(self, rhs: &Complex) -> Complex {
        let prec = self.re.prec();
        Complex {
            re: Float::with_val(prec, &self.re - &rhs.re),
            im: Float::with_val(prec, &self.im - &rhs.im),
        }
    }
}

impl Mul for &Complex {
    type Output = Complex;
    fn mul(self, rhs: &Complex) -> Complex {
        let prec = self.re.prec();
        let rr = Float::with_val(prec, &self.re * &rhs.re);
        let ii = Float::with_val(prec, &self.im * &rhs.im);
        let ri = Float::with_val(prec, &self.re * &rhs.im);
        let ir = Float::with_val(prec, &self.im * &rhs.re);
        Complex {
            re: rr - ii,
            im: ri + ir,
        }
    }
}
