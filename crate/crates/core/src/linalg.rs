//! Small dense complex linear-algebra helpers shared by the rate and
//! gradient code.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

pub const LN2: f64 = std::f64::consts::LN_2;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn ceye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// `(A + A^H) / 2`.
pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// `Re tr(A^H B)`.
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn frob_sq(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// Cholesky factor of a Hermitian positive-definite matrix.
pub struct HermitianPd {
    chol: Cholesky<Complex64, Dyn>,
}

impl HermitianPd {
    pub fn new(a: &CMat, context: &'static str) -> Result<Self> {
        if !is_finite(a) {
            return Err(Error::NonFinite(context));
        }
        // complex square roots never fail, so positivity is checked on the
        // factor's diagonal
        let chol = Cholesky::new(hermitize(a)).ok_or(Error::NotPositiveDefinite { context })?;
        let l = chol.l_dirty();
        let positive = (0..l.nrows()).all(|i| {
            let d = l[(i, i)];
            d.re > 0.0 && d.im.abs() <= 1e-8 * d.re
        });
        if !positive {
            return Err(Error::NotPositiveDefinite { context });
        }
        Ok(HermitianPd { chol })
    }

    pub fn solve(&self, b: &CMat) -> CMat {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> CMat {
        hermitize(&self.chol.inverse())
    }

    /// Natural log of the determinant.
    pub fn ln_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>()
    }
}

/// Ratio of extreme singular values; used only for diagnostics.
pub fn condition_estimate(a: &CMat) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `A X = B` with partial-pivot LU.
pub fn solve_general(a: &CMat, b: &CMat, context: &'static str) -> Result<CMat> {
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or_else(|| Error::Singular {
        context,
        condition: condition_estimate(a),
    })?;
    if !is_finite(&x) {
        return Err(Error::Singular {
            context,
            condition: condition_estimate(a),
        });
    }
    Ok(x)
}

pub fn spectral_norm(a: &CMat) -> f64 {
    a.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}
