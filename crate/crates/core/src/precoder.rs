//! Per-station precoder best response: concave surrogate, pricing and
//! closed-form solution with a bisection on the power multiplier.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{c, ceye, frob_sq, hermitize, re_inner, CMat, LN2};
use crate::rate::{EffectiveChannels, LinkMatrices, RateSnapshot};

const MAX_DOUBLINGS: usize = 60;
const MAX_BISECTIONS: usize = 80;
const POWER_TOL: f64 = 1e-6;

/// `dR_{u,k} / dW*_{b,u,k} = H~^H P^-1 S K^-1 / ln 2`.
pub fn grad_rate_w(eff: &EffectiveChannels, snap: &RateSnapshot, b: usize, u: usize, k: usize) -> CMat {
    eff[b][u][k].adjoint() * snap.links[u][k].stream_gradient(u)
}

/// `sum_{q != u} dR_{q,k} / dW*_{b,u,k}`: the effect of station `b`'s
/// precoder for user `u` on every other user's rate.
pub fn pricing_w(eff: &EffectiveChannels, snap: &RateSnapshot, b: usize, u: usize, k: usize) -> CMat {
    let (nt, ns) = (eff[b][u][k].ncols(), snap.links[u][k].desired().ncols());
    let mut out = CMat::zeros(nt, ns);
    for q in (0..snap.links.len()).filter(|&q| q != u) {
        out += eff[b][q][k].adjoint() * snap.links[q][k].stream_gradient(u);
    }
    out
}

/// Quadratic minorizer of `R_{u,k}` as a function of one station's
/// precoder, built at the current iterate.
#[derive(Debug, Clone)]
pub struct Surrogate {
    channel: CMat,
    w_t: CMat,
    /// Desired-signal contribution of all other stations.
    others: CMat,
    m: CMat,
    n: CMat,
    rate_t: f64,
    phi_t: f64,
}

impl Surrogate {
    pub fn new(link: &LinkMatrices, channel: &CMat, w_t: &CMat) -> Self {
        let others = link.desired() - channel * w_t;
        let mut s = Surrogate {
            channel: channel.clone(),
            w_t: w_t.clone(),
            others,
            m: link.m.clone(),
            n: link.n.clone(),
            rate_t: link.rate,
            phi_t: 0.0,
        };
        s.phi_t = s.phi(w_t);
        s
    }

    /// `(2 Re tr(M S) - tr(S^H N S)) / ln 2` with `S = H W + others`.
    fn phi(&self, w: &CMat) -> f64 {
        let s = &self.channel * w + &self.others;
        let lin = (&self.m * &s).trace().re;
        let quad = (s.adjoint() * &self.n * &s).trace().re;
        (2.0 * lin - quad) / LN2
    }

    pub fn value(&self, w: &CMat) -> f64 {
        self.rate_t + self.phi(w) - self.phi_t
    }

    pub fn gradient(&self, w: &CMat) -> CMat {
        let s = &self.channel * w + &self.others;
        (self.channel.adjoint() * (self.m.adjoint() - &self.n * s)).unscale(LN2)
    }

    /// Curvature `H^H N H / ln 2`.
    pub fn curvature(&self) -> CMat {
        hermitize(&(self.channel.adjoint() * &self.n * &self.channel)).unscale(LN2)
    }

    /// Linear part `H^H (M^H - N R) / ln 2`, with `R` the other stations' signal.
    pub fn linear(&self) -> CMat {
        (self.channel.adjoint() * (self.m.adjoint() - &self.n * &self.others)).unscale(LN2)
    }
}

/// Weights of one station's precoder sub-problem at iteration `t`.
#[derive(Debug, Clone, Copy)]
pub struct PrecoderWeights {
    pub rho: f64,
    pub tau: f64,
}

/// Per-`(u, k)` data of the strongly concave precoder objective
/// `rho (R~ + <Pi, W - W^t>) + (1 - rho) <D, W - W^t> - tau/2 ||W - W^t||^2`,
/// whose maximizer under a multiplier `lambda` is `(E + lambda I)^-1 J`.
#[derive(Debug, Clone)]
pub struct PrecoderTerm {
    pub surrogate: Surrogate,
    pub pricing: CMat,
    pub accum: CMat,
    pub weights: PrecoderWeights,
    e: CMat,
    j: CMat,
    eig: SymmetricEigen<Complex64, nalgebra::Dyn>,
    /// `V^H J` in the eigenbasis of `E`.
    j_rot: CMat,
}

impl PrecoderTerm {
    pub fn new(surrogate: Surrogate, pricing: CMat, accum: CMat, weights: PrecoderWeights) -> Self {
        let PrecoderWeights { rho, tau } = weights;
        let nt = surrogate.w_t.nrows();
        let e = hermitize(&(surrogate.curvature().scale(rho) + ceye(nt).scale(tau / 2.0)));
        let j = surrogate.linear().scale(rho)
            + pricing.scale(rho / 2.0)
            + accum.scale((1.0 - rho) / 2.0)
            + surrogate.w_t.scale(tau / 2.0);
        let eig = e.clone().symmetric_eigen();
        let j_rot = eig.eigenvectors.adjoint() * &j;
        PrecoderTerm {
            surrogate,
            pricing,
            accum,
            weights,
            e,
            j,
            eig,
            j_rot,
        }
    }

    pub fn e(&self) -> &CMat {
        &self.e
    }

    pub fn j(&self) -> &CMat {
        &self.j
    }

    pub fn solve(&self, lambda: f64) -> CMat {
        let mut scaled = self.j_rot.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row /= c(self.eig.eigenvalues[i] + lambda, 0.0);
        }
        &self.eig.eigenvectors * scaled
    }

    pub fn power(&self, lambda: f64) -> f64 {
        self.j_rot
            .row_iter()
            .enumerate()
            .map(|(i, row)| {
                let d = self.eig.eigenvalues[i] + lambda;
                row.iter().map(|x| x.norm_sqr()).sum::<f64>() / (d * d)
            })
            .sum()
    }

    pub fn objective(&self, w: &CMat) -> f64 {
        let PrecoderWeights { rho, tau } = self.weights;
        let dw = w - &self.surrogate.w_t;
        rho * (self.surrogate.value(w) + re_inner(&self.pricing, &dw))
            + (1.0 - rho) * re_inner(&self.accum, &dw)
            - tau / 2.0 * frob_sq(&dw)
    }
}

/// Smallest `lambda >= 0` meeting the station power budget; returns the
/// multiplier and the precoders in the order of `terms`.
pub fn bisection_power(terms: &[PrecoderTerm], p_max: f64) -> Result<(f64, Vec<CMat>)> {
    if !(p_max > 0.0) {
        return Err(Error::config("system.p_max_dbm", "power budget must be positive"));
    }
    let power = |lambda: f64| terms.iter().map(|t| t.power(lambda)).sum::<f64>();
    let solve = |lambda: f64| terms.iter().map(|t| t.solve(lambda)).collect::<Vec<_>>();
    if power(0.0) <= p_max {
        return Ok((0.0, solve(0.0)));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut doublings = 0;
    while power(hi) > p_max {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::BisectionBracket { p_max, doublings });
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if p_max - power(hi) <= POWER_TOL * p_max {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if power(mid) > p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((hi, solve(hi)))
}
