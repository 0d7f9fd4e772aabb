//! Per-user rates and the auxiliary matrices shared by the optimizers.

use serde::{Deserialize, Serialize};

use crate::channel::Dims;
use crate::error::{Error, Result};
use crate::linalg::{ceye, frob_sq, hermitize, is_finite, CMat, HermitianPd, LN2};

/// Effective channels indexed `[b][u][k]`, each `Nr x Nt`.
pub type EffectiveChannels = Vec<Vec<Vec<CMat>>>;

/// Precoders `W[b][u][k]`, each `Nt x Ns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecoderSet {
    pub w: Vec<Vec<Vec<CMat>>>,
}

impl PrecoderSet {
    pub fn zeros(dims: &Dims) -> Self {
        PrecoderSet {
            w: vec![
                vec![
                    vec![CMat::zeros(dims.tx_antennas, dims.streams); dims.subcarriers];
                    dims.users
                ];
                dims.stations
            ],
        }
    }

    /// `sum_{u,k} ||W_{b,u,k}||_F^2`.
    pub fn power(&self, b: usize) -> f64 {
        self.w[b].iter().flatten().map(frob_sq).sum()
    }

    pub fn scale_station(&mut self, b: usize, factor: f64) {
        for m in self.w[b].iter_mut().flatten() {
            *m *= num_complex::Complex64::new(factor, 0.0);
        }
    }
}

/// Matrices of one `(u, k)` link.
#[derive(Debug, Clone)]
pub struct LinkMatrices {
    /// `S_{u,q,k}` for every `q`, each `Nr x Ns`.
    pub s: Vec<CMat>,
    pub p: CMat,
    pub p_inv: CMat,
    pub k: CMat,
    pub k_inv: CMat,
    pub t_inv: CMat,
    pub l: CMat,
    /// `L^-1 S^H T^-1`.
    pub m: CMat,
    /// `T^-1 S M`.
    pub n: CMat,
    /// `log2 det K`.
    pub rate: f64,
    user: usize,
}

impl LinkMatrices {
    pub fn user(&self) -> usize {
        self.user
    }

    pub fn desired(&self) -> &CMat {
        &self.s[self.user]
    }

    /// Derivative of this link's rate w.r.t. the conjugate of `S_{u,q,k}`,
    /// so that `dR = 2 Re tr(Z^H dS)`.
    pub fn stream_gradient(&self, q: usize) -> CMat {
        let base = (&self.p_inv * self.desired() * &self.k_inv).unscale(LN2);
        if q == self.user {
            base
        } else {
            -(base * self.desired().adjoint() * &self.p_inv * &self.s[q])
        }
    }

    /// `-log2 det L`, equal to `rate` in exact arithmetic.
    pub fn rate_from_l(&self) -> Result<f64> {
        Ok(-HermitianPd::new(&self.l, "L")?.ln_det() / LN2)
    }
}

/// `S_{u,q,k} = sum_b H~_{b,u,k} W_{b,q,k}` for all `q`.
pub fn stream_matrices(eff: &EffectiveChannels, w: &PrecoderSet, u: usize, k: usize) -> Vec<CMat> {
    let users = w.w[0].len();
    (0..users)
        .map(|q| {
            eff.iter()
                .enumerate()
                .map(|(b, hb)| &hb[u][k] * &w.w[b][q][k])
                .fold(None, |acc: Option<CMat>, x| Some(acc.map_or(x.clone(), |a| a + x)))
                .expect("at least one station")
        })
        .collect()
}

pub fn link_matrices(s: Vec<CMat>, noise_var: f64, u: usize) -> Result<LinkMatrices> {
    if !(noise_var > 0.0) {
        return Err(Error::config("system.noise_dbm", "noise variance must be positive"));
    }
    if s.iter().any(|m| !is_finite(m)) {
        return Err(Error::NonFinite("stream matrices"));
    }
    let nr = s[u].nrows();
    let ns = s[u].ncols();
    let mut p = ceye(nr).scale(noise_var);
    for (q, sq) in s.iter().enumerate() {
        if q != u {
            p += sq * sq.adjoint();
        }
    }
    let p = hermitize(&p);
    let p_chol = HermitianPd::new(&p, "interference-plus-noise covariance")?;
    let p_inv = p_chol.inverse();
    let su = &s[u];
    let k = hermitize(&(ceye(ns) + su.adjoint() * p_chol.solve(su)));
    let k_chol = HermitianPd::new(&k, "K")?;
    let k_inv = k_chol.inverse();
    let rate = k_chol.ln_det() / LN2;

    let t = hermitize(&(su * su.adjoint() + &p));
    let t_chol = HermitianPd::new(&t, "T")?;
    let t_inv = t_chol.inverse();
    let l = hermitize(&(ceye(ns) - su.adjoint() * t_chol.solve(su)));
    let l_chol = HermitianPd::new(&l, "L")?;
    let m = l_chol.solve(&(su.adjoint() * &t_inv));
    let n = &t_inv * su * &m;

    Ok(LinkMatrices {
        s,
        p,
        p_inv,
        k,
        k_inv,
        t_inv,
        l,
        m,
        n,
        rate,
        user: u,
    })
}

/// Link matrices for every `(u, k)` of one channel/precoder snapshot.
#[derive(Debug, Clone)]
pub struct RateSnapshot {
    /// `[u][k]`.
    pub links: Vec<Vec<LinkMatrices>>,
}

impl RateSnapshot {
    pub fn new(eff: &EffectiveChannels, w: &PrecoderSet, noise_var: &[Vec<f64>]) -> Result<Self> {
        let links = noise_var
            .iter()
            .enumerate()
            .map(|(u, nv)| {
                nv.iter()
                    .enumerate()
                    .map(|(k, &var)| link_matrices(stream_matrices(eff, w, u, k), var, u))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RateSnapshot { links })
    }

    /// `sum_k log2 det K_{u,k}`.
    pub fn user_rate(&self, u: usize) -> f64 {
        self.links[u].iter().map(|l| l.rate).sum()
    }

    pub fn sum_rate(&self) -> f64 {
        (0..self.links.len()).map(|u| self.user_rate(u)).sum()
    }
}

pub fn sum_rate(eff: &EffectiveChannels, w: &PrecoderSet, noise_var: &[Vec<f64>]) -> Result<f64> {
    Ok(RateSnapshot::new(eff, w, noise_var)?.sum_rate())
}
