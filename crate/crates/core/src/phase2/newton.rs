use std::fmt;
use std::str::FromStr;

use rug::Float;

use super::linalg::{minres, DoubleSolver, SchurSolver};
use super::{init_regular, kkt_gradient, kkt_matrix, KktMatrix, KktState, Phase2Error};
use crate::codes::Code;
use crate::mp;

/// Realisation of the approximate inverse `A_k ~ K(w^k)^-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `K(w^k)` rounded to doubles and LU-factored each iteration.
    DoubleFactor,
    /// Tridiagonal factorisation plus a 2x2 Schur complement at full precision.
    Schur,
    /// `n + 1` full-precision MINRES steps per Newton step.
    Minres,
    /// Schur solve with `K(w^0)` frozen.
    SimplifiedSchur,
    /// Double-precision LU of `K(w^0)`, frozen.
    SimplifiedDouble,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::DoubleFactor,
        Variant::Schur,
        Variant::Minres,
        Variant::SimplifiedSchur,
        Variant::SimplifiedDouble,
    ];

    /// Full Newton for small `n`, the frozen matrix from `n = 32` on.
    pub fn default_for(n: usize) -> Variant {
        if n >= 32 {
            Variant::SimplifiedSchur
        } else {
            Variant::Schur
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::DoubleFactor => "double-factor",
            Variant::Schur => "schur",
            Variant::Minres => "minres",
            Variant::SimplifiedSchur => "simplified-schur",
            Variant::SimplifiedDouble => "simplified-double",
        }
    }

    fn frozen(self) -> bool {
        matches!(self, Variant::SimplifiedSchur | Variant::SimplifiedDouble)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOptions {
    pub variant: Variant,
    pub precision_bits: u32,
    pub tol_bits: u32,
    pub max_iter: usize,
    /// Relative perturbation applied to every entry of `K` before it is
    /// factored. Only useful for testing the fixed-point property.
    pub matrix_perturbation: f64,
}

impl NewtonOptions {
    pub fn new(variant: Variant) -> NewtonOptions {
        NewtonOptions {
            variant,
            precision_bits: mp::DEFAULT_PRECISION_BITS,
            tol_bits: mp::DEFAULT_TOL_BITS,
            max_iter: 64,
            matrix_perturbation: 0.0,
        }
    }

    pub fn for_n(n: usize) -> NewtonOptions {
        NewtonOptions::new(Variant::default_for(n))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub variant: Variant,
    /// 2-norm of each Newton increment, in iteration order.
    pub increment_norms: Vec<Float>,
    pub final_increment_norm: Float,
    /// 2-norm of the KKT gradient at the returned state.
    pub final_kkt_residual: Float,
    pub perimeter: Float,
    /// Whether `0 = phi_1 < ... < phi_{n+1} = pi` holds at the solution.
    pub monotone: bool,
    /// Steps where the Schur factorisation broke down and the double LU
    /// was used instead.
    pub fallback_steps: usize,
}

impl NewtonReport {
    /// Convergence order estimates `log e_{k+1} / log e_k` over consecutive
    /// increments.
    pub fn convergence_orders(&self) -> Vec<f64> {
        let logs: Vec<f64> = self
            .increment_norms
            .iter()
            .map(log2)
            .collect();
        logs.windows(2)
            .filter(|w| w[0].is_finite() && w[1].is_finite() && w[0] < 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }
}

fn log2(x: &Float) -> f64 {
    if x.is_zero() {
        f64::NEG_INFINITY
    } else {
        Float::with_val(64, x.log2_ref()).to_f64()
    }
}

fn norm2(v: &[Float], prec: u32) -> Float {
    let mut acc = mp::zero(prec);
    for x in v {
        acc += Float::with_val(prec, x.square_ref());
    }
    acc.sqrt()
}

/// Deterministic relative perturbation `1 + delta * s` with `s in {-1, 0, 1}`.
fn perturb(k: &mut KktMatrix, delta: f64) {
    if delta == 0.0 {
        return;
    }
    let mut idx = 0usize;
    let mut bump = |x: &mut Float| {
        let s = (idx * 7 % 3) as f64 - 1.0;
        idx += 1;
        *x *= 1.0 + delta * s;
    };
    k.diag.iter_mut().for_each(&mut bump);
    k.off.iter_mut().for_each(&mut bump);
    k.jac.iter_mut().flatten().for_each(&mut bump);
}

enum Solver {
    Schur(SchurSolver),
    Double(DoubleSolver),
    Minres(KktMatrix),
}

impl Solver {
    fn build(variant: Variant, k: KktMatrix, fallbacks: &mut usize) -> Result<Solver, Phase2Error> {
        match variant {
            Variant::Schur | Variant::SimplifiedSchur => match SchurSolver::new(&k) {
                Ok(s) => Ok(Solver::Schur(s)),
                Err(_) => {
                    *fallbacks += 1;
                    DoubleSolver::new(&k).map(Solver::Double)
                }
            },
            Variant::DoubleFactor | Variant::SimplifiedDouble => DoubleSolver::new(&k).map(Solver::Double),
            Variant::Minres => Ok(Solver::Minres(k)),
        }
    }

    fn solve(&self, rhs: &[Float]) -> Result<Vec<Float>, Phase2Error> {
        match self {
            Solver::Schur(s) => Ok(s.solve(rhs)),
            Solver::Double(d) => d.solve(rhs),
            Solver::Minres(k) => Ok(minres(k, rhs, rhs.len())),
        }
    }
}

/// Lagrange-Newton iteration from the regular `2n`-gon.
pub fn newton_solve(code: &Code, options: &NewtonOptions) -> Result<(KktState, NewtonReport), Phase2Error> {
    newton_solve_with(code, init_regular(code.n(), options.precision_bits), options)
}

/// Lagrange-Newton iteration `w <- w - A_k grad L(w)` from `start`.
pub fn newton_solve_with(
    code: &Code,
    start: KktState,
    options: &NewtonOptions,
) -> Result<(KktState, NewtonReport), Phase2Error> {
    let prec = options.precision_bits;
    if prec <= options.tol_bits + 32 {
        return Err(Phase2Error::InvalidPrecision {
            precision_bits: prec,
            tol_bits: options.tol_bits,
        });
    }
    let mut w = start.to_vector();
    for x in &mut w {
        x.set_prec(prec);
    }
    let mut state = KktState::from_vector(&w, prec);
    let tol = mp::pow2_neg(options.tol_bits, prec);

    let mut fallback_steps = 0;
    let mut frozen: Option<Solver> = None;
    let mut norms = Vec::new();
    for iter in 1..=options.max_iter {
        let grad = kkt_gradient(&state, code)?;
        let fresh;
        let solver = if options.variant.frozen() {
            if frozen.is_none() {
                let mut k = kkt_matrix(&state, code)?;
                perturb(&mut k, options.matrix_perturbation);
                frozen = Some(Solver::build(options.variant, k, &mut fallback_steps)?);
            }
            frozen.as_ref().unwrap()
        } else {
            let mut k = kkt_matrix(&state, code)?;
            perturb(&mut k, options.matrix_perturbation);
            fresh = Solver::build(options.variant, k, &mut fallback_steps)?;
            &fresh
        };
        let step = solver.solve(&grad)?;
        for (x, d) in w.iter_mut().zip(&step) {
            *x -= d;
        }
        let norm = norm2(&step, prec);
        if !norm.is_finite() || w.iter().any(|x| !x.is_finite()) {
            return Err(Phase2Error::NoConvergence {
                iterations: iter,
                last_increment: f64::INFINITY,
            });
        }
        state = KktState::from_vector(&w, prec);
        let done = norm < tol;
        norms.push(norm);
        if done {
            let residual = norm2(&kkt_gradient(&state, code)?, prec);
            let report = NewtonReport {
                iterations: iter,
                variant: options.variant,
                final_increment_norm: norms.last().unwrap().clone(),
                increment_norms: norms,
                final_kkt_residual: residual,
                perimeter: state.angles.perimeter(),
                monotone: state.angles.is_strictly_increasing(),
                fallback_steps,
            };
            return Ok((state, report));
        }
    }
    Err(Phase2Error::NoConvergence {
        iterations: options.max_iter,
        last_increment: norms.last().map_or(f64::NAN, Float::to_f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("newton".parse::<Variant>().is_err());
    }

    #[test]
    fn square_converges_to_known_optimum() {
        let code = crate::codes::QuarterCode::parse("+-").unwrap().expand();
        let opts = NewtonOptions::new(Variant::Schur);
        let (_, report) = newton_solve(&code, &opts).unwrap();
        let expect = Float::with_val(400, mp::pi_fraction(1, 12, 400).sin() * 4u32) + 2u32;
        assert!(Float::with_val(400, &report.perimeter - &expect).abs() < mp::pow2_neg(310, 400));
        assert!(report.monotone);
    }

    #[test]
    fn precision_must_exceed_tolerance() {
        let code: Code = "+-+-".parse().unwrap();
        let opts = NewtonOptions {
            precision_bits: 300,
            ..NewtonOptions::new(Variant::Schur)
        };
        assert!(matches!(
            newton_solve(&code, &opts),
            Err(Phase2Error::InvalidPrecision { .. })
        ));
    }
}
