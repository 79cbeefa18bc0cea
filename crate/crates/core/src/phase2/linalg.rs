//! Linear solvers for the KKT system `[[H, C^T], [C, 0]] d = r`.

use nalgebra::{DMatrix, DVector};
use rug::Float;

use super::{KktMatrix, Phase2Error};
use crate::mp;

/// `H = L D L^T` for a symmetric tridiagonal `H`, without pivoting.
#[derive(Clone, Debug)]
pub struct TridiagonalFactor {
    pivots: Vec<Float>,
    lower: Vec<Float>,
}

impl TridiagonalFactor {
    pub fn new(diag: &[Float], off: &[Float]) -> Result<TridiagonalFactor, Phase2Error> {
        let m = diag.len();
        assert_eq!(off.len() + 1, m.max(1));
        let prec = diag[0].prec();
        let scale = diag
            .iter()
            .chain(off)
            .map(|x| x.clone().abs())
            .fold(mp::zero(prec), |a, b| if b > a { b } else { a });
        let tiny = mp::pow2_neg(prec.saturating_sub(8), prec) * scale;
        let mut pivots = Vec::with_capacity(m);
        let mut lower = Vec::with_capacity(m.saturating_sub(1));
        pivots.push(diag[0].clone());
        for i in 0..m {
            if pivots[i].clone().abs() <= tiny || !pivots[i].is_finite() {
                return Err(Phase2Error::SingularSystem(format!("zero pivot at {i}")));
            }
            if i + 1 < m {
                let l = Float::with_val(prec, &off[i] / &pivots[i]);
                let next = Float::with_val(prec, &diag[i + 1] - Float::with_val(prec, &l * &off[i]));
                lower.push(l);
                pivots.push(next);
            }
        }
        Ok(TridiagonalFactor { pivots, lower })
    }

    pub fn pivots(&self) -> &[Float] {
        &self.pivots
    }

    pub fn solve(&self, rhs: &[Float]) -> Vec<Float> {
        let m = self.pivots.len();
        let prec = self.pivots[0].prec();
        let mut z: Vec<Float> = Vec::with_capacity(m);
        for i in 0..m {
            let mut v = Float::with_val(prec, &rhs[i]);
            if i > 0 {
                v -= Float::with_val(prec, &self.lower[i - 1] * &z[i - 1]);
            }
            z.push(v);
        }
        for (zi, d) in z.iter_mut().zip(&self.pivots) {
            *zi /= d;
        }
        for i in (0..m.saturating_sub(1)).rev() {
            let t = Float::with_val(prec, &self.lower[i] * &z[i + 1]);
            z[i] -= t;
        }
        z
    }
}

fn dot(a: &[Float], b: &[Float], prec: u32) -> Float {
    let mut acc = mp::zero(prec);
    for (x, y) in a.iter().zip(b) {
        acc += Float::with_val(prec, x * y);
    }
    acc
}

/// Block elimination through the `2 x 2` Schur complement `S = C H^-1 C^T`.
#[derive(Clone, Debug)]
pub(crate) struct SchurSolver {
    factor: TridiagonalFactor,
    jac: [Vec<Float>; 2],
    /// `H^-1 C^T`, column-wise.
    hinv_ct: [Vec<Float>; 2],
    schur: [[Float; 2]; 2],
    det: Float,
}

impl SchurSolver {
    pub(crate) fn new(k: &KktMatrix) -> Result<SchurSolver, Phase2Error> {
        let prec = k.precision_bits();
        let factor = TridiagonalFactor::new(&k.diag, &k.off)?;
        let hinv_ct = [factor.solve(&k.jac[0]), factor.solve(&k.jac[1])];
        let s = |r: usize, c: usize| dot(&k.jac[r], &hinv_ct[c], prec);
        let schur = [[s(0, 0), s(0, 1)], [s(1, 0), s(1, 1)]];
        let det = Float::with_val(prec, &schur[0][0] * &schur[1][1])
            - Float::with_val(prec, &schur[0][1] * &schur[1][0]);
        let scale = Float::with_val(prec, schur[0][0].clone().abs() + schur[1][1].clone().abs());
        let tiny = mp::pow2_neg(prec.saturating_sub(8), prec) * scale.square();
        if det.clone().abs() <= tiny || !det.is_finite() {
            return Err(Phase2Error::SingularSystem("Schur complement".into()));
        }
        Ok(SchurSolver {
            factor,
            jac: k.jac.clone(),
            hinv_ct,
            schur,
            det,
        })
    }

    pub(crate) fn solve(&self, rhs: &[Float]) -> Vec<Float> {
        let m = self.factor.pivots.len();
        let prec = self.det.prec();
        let u = self.factor.solve(&rhs[..m]);
        // S dy = C u - g
        let b0 = dot(&self.jac[0], &u, prec) - &rhs[m];
        let b1 = dot(&self.jac[1], &u, prec) - &rhs[m + 1];
        let s = &self.schur;
        let dy0 = (Float::with_val(prec, &s[1][1] * &b0) - Float::with_val(prec, &s[0][1] * &b1)) / &self.det;
        let dy1 = (Float::with_val(prec, &s[0][0] * &b1) - Float::with_val(prec, &s[1][0] * &b0)) / &self.det;
        let mut out: Vec<Float> = u;
        for (i, x) in out.iter_mut().enumerate() {
            *x -= Float::with_val(prec, &self.hinv_ct[0][i] * &dy0);
            *x -= Float::with_val(prec, &self.hinv_ct[1][i] * &dy1);
        }
        out.push(dy0);
        out.push(dy1);
        out
    }
}

/// LU factorisation of `K` rounded to doubles.
#[derive(Clone, Debug)]
pub(crate) struct DoubleSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    prec: u32,
}

impl DoubleSolver {
    pub(crate) fn new(k: &KktMatrix) -> Result<DoubleSolver, Phase2Error> {
        let dense = k.to_dense_f64();
        let dim = dense.len();
        let m = DMatrix::from_fn(dim, dim, |i, j| dense[i][j]);
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(Phase2Error::SingularSystem("double-precision LU".into()));
        }
        Ok(DoubleSolver {
            lu,
            prec: k.precision_bits(),
        })
    }

    pub(crate) fn solve(&self, rhs: &[Float]) -> Result<Vec<Float>, Phase2Error> {
        let b = DVector::from_iterator(rhs.len(), rhs.iter().map(Float::to_f64));
        let x = self
            .lu
            .solve(&b)
            .ok_or_else(|| Phase2Error::SingularSystem("double-precision LU".into()))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Phase2Error::SingularSystem("non-finite solve".into()));
        }
        Ok(x.iter().map(|&v| Float::with_val(self.prec, v)).collect())
    }
}

/// Unpreconditioned MINRES on the symmetric operator `k`, started from zero
/// and run for at most `iterations` Lanczos steps.
pub fn minres(k: &KktMatrix, rhs: &[Float], iterations: usize) -> Vec<Float> {
    let prec = k.precision_bits();
    let dim = rhs.len();
    let zeros = || vec![mp::zero(prec); dim];
    let axpy = |y: &mut [Float], a: &Float, x: &[Float]| {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += Float::with_val(prec, a * xi);
        }
    };

    let mut x = zeros();
    let mut r1: Vec<Float> = rhs.to_vec();
    let mut r2 = r1.clone();
    let mut y = r1.clone();
    let beta1 = dot(&r1, &y, prec).sqrt();
    if beta1.is_zero() {
        return x;
    }
    let floor = mp::pow2_neg(prec.saturating_sub(4), prec) * &beta1;

    let mut oldb = mp::zero(prec);
    let mut beta = beta1.clone();
    let mut dbar = mp::zero(prec);
    let mut epsln = mp::zero(prec);
    let mut phibar = beta1.clone();
    let mut cs = Float::with_val(prec, -1);
    let mut sn = mp::zero(prec);
    let mut w = zeros();
    let mut w2 = zeros();

    for itn in 0..iterations {
        let s = Float::with_val(prec, 1u32) / &beta;
        let v: Vec<Float> = y.iter().map(|t| Float::with_val(prec, t * &s)).collect();
        y = k.apply(&v);
        if itn > 0 {
            let f = -Float::with_val(prec, &beta / &oldb);
            axpy(&mut y, &f, &r1);
        }
        let alfa = dot(&v, &y, prec);
        let f = -Float::with_val(prec, &alfa / &beta);
        axpy(&mut y, &f, &r2);
        r1 = std::mem::replace(&mut r2, y.clone());
        oldb = beta;
        beta = dot(&r2, &y, prec).sqrt();

        let oldeps = epsln.clone();
        let delta = Float::with_val(prec, &cs * &dbar) + Float::with_val(prec, &sn * &alfa);
        let gbar = Float::with_val(prec, &sn * &dbar) - Float::with_val(prec, &cs * &alfa);
        epsln = Float::with_val(prec, &sn * &beta);
        dbar = -Float::with_val(prec, &cs * &beta);
        let gamma = Float::with_val(prec, gbar.clone().hypot(&beta));
        if gamma.is_zero() {
            break;
        }
        cs = Float::with_val(prec, &gbar / &gamma);
        sn = Float::with_val(prec, &beta / &gamma);
        let phi = Float::with_val(prec, &cs * &phibar);
        phibar *= &sn;

        let w1 = std::mem::replace(&mut w2, w.clone());
        for i in 0..dim {
            let mut t = Float::with_val(prec, &v[i]);
            t -= Float::with_val(prec, &oldeps * &w1[i]);
            t -= Float::with_val(prec, &delta * &w2[i]);
            t /= &gamma;
            w[i] = t;
        }
        axpy(&mut x, &phi, &w);
        if beta <= floor {
            break;
        }
    }
    x
}
