//! Gradient tracking with pricing and gradient-averaging accumulators.
//!
//! Each agent keeps `Y` (its estimate of the network-average gradient),
//! the pricing `Pi = B Y - grad` (the other agents' share of the gradient)
//! and `D`, a running average of `B Y`.

use crate::linalg::RMat;

/// Tracker state of one agent over a list of real matrix blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub y: Vec<RMat>,
    pub pricing: Vec<RMat>,
    pub accum: Vec<RMat>,
    last_grad: Vec<RMat>,
    agents: usize,
    cooperative: bool,
}

fn scaled(blocks: &[RMat], s: f64) -> Vec<RMat> {
    blocks.iter().map(|m| m * s).collect()
}

impl Tracker {
    /// `Y = grad`, `Pi = (B - 1) grad`, `D = B grad`. Without cooperation
    /// the pricing stays zero and `D` averages the local gradient only.
    pub fn new(grad: Vec<RMat>, agents: usize, cooperative: bool) -> Self {
        let b = agents as f64;
        let (pricing, accum) = if cooperative {
            (scaled(&grad, b - 1.0), scaled(&grad, b))
        } else {
            (scaled(&grad, 0.0), grad.clone())
        };
        Tracker {
            y: grad.clone(),
            pricing,
            accum,
            last_grad: grad,
            agents,
            cooperative,
        }
    }

    pub fn last_grad(&self) -> &[RMat] {
        &self.last_grad
    }

    /// `Gamma + Pi`: the local gradient plus the pricing.
    pub fn direction(&self) -> Vec<RMat> {
        self.last_grad
            .iter()
            .zip(&self.pricing)
            .map(|(g, p)| g + p)
            .collect()
    }
}

/// One synchronized exchange: every agent reads all neighbors' `Y^{t-1}`
/// before any agent writes `Y^t`.
///
/// `weights[(b, i)]` is the mixing weight agent `b` applies to agent `i`.
pub fn tracker_update(trackers: &mut [Tracker], grads: Vec<Vec<RMat>>, weights: &RMat, rho: f64) {
    let prev: Vec<Vec<RMat>> = trackers.iter().map(|t| t.y.clone()).collect();
    for (b, (tr, grad)) in trackers.iter_mut().zip(grads).enumerate() {
        let scale = tr.agents as f64;
        for (blk, g) in grad.iter().enumerate() {
            let mut y = g - &tr.last_grad[blk];
            for (i, other) in prev.iter().enumerate() {
                let v = weights[(b, i)];
                if v != 0.0 {
                    y += &other[blk] * v;
                }
            }
            if tr.cooperative {
                tr.pricing[blk] = &y * scale - g;
                tr.accum[blk] = &tr.accum[blk] * (1.0 - rho) + &y * (rho * scale);
            } else {
                tr.accum[blk] = &tr.accum[blk] * (1.0 - rho) + g * rho;
            }
            tr.y[blk] = y;
        }
        tr.last_grad = grad;
    }
}
