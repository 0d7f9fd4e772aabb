//! Gradient of the rate w.r.t. the grouping permutation (continuous
//! relaxation) and the permutation best response.

use crate::error::Result;
use crate::linalg::{to_complex, CMat, RMat};
use crate::lsap::lsap_maximize;
use crate::physics::{block_diagonal, PermutationMatrix};

/// `sum_k 2 Re((Omega_k + Omega_k^T) Q Phi_k)` where `Phi_k` is the
/// un-permuted block-diagonal response and `Q` is treated as a free real
/// matrix.
///
/// `sensitivity[k]` comes from
/// [`response_sensitivity`](crate::capacitance::response_sensitivity) and
/// `blocks[k][g]` are the per-group responses.
pub fn grad_permutation(sensitivity: &[CMat], blocks: &[Vec<CMat>], q: &RMat) -> Result<RMat> {
    let qc = to_complex(q);
    let m = q.nrows();
    let mut out = RMat::zeros(m, m);
    for (omega, bk) in sensitivity.iter().zip(blocks) {
        let phi = block_diagonal(bk)?;
        let sym = omega + omega.transpose();
        out += (sym * &qc * phi).map(|z| 2.0 * z.re);
    }
    Ok(out)
}

/// Linear objective `tau Q^t + rho (Gamma + Pi) + (1 - rho) D` of the
/// permutation sub-problem, with the quadratic term constant over
/// permutations.
pub fn permutation_cost(
    current: &RMat,
    local_grad: &RMat,
    pricing: &RMat,
    accum: &RMat,
    rho: f64,
    tau: f64,
) -> RMat {
    current * tau + (local_grad + pricing) * rho + accum * (1.0 - rho)
}

pub fn best_response_permutation(cost: &RMat) -> Result<PermutationMatrix> {
    lsap_maximize(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacitance::tests::instance;
    use crate::lsap::tests::all_permutations;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn permutation_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let inst = instance(seed + 20, 4, 2);
            let b = 0;
            let (sens, resp) = inst.sensitivity(b);
            let q = inst.dense_perms();
            let grad = grad_permutation(&sens, &resp[b].blocks, &q[b]).unwrap();
            let scale = grad.amax();
            for i in 0..4 {
                for j in 0..4 {
                    let h = 1e-6;
                    let mut qp = q.clone();
                    let mut qm = q.clone();
                    qp[b][(i, j)] += h;
                    qm[b][(i, j)] -= h;
                    let fd = (inst.rate_dense(&inst.caps, &qp) - inst.rate_dense(&inst.caps, &qm)) / (2.0 * h);
                    let an = grad[(i, j)];
                    assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3 * scale), "({i},{j}) fd {fd} an {an}");
                }
            }
        }
    }

    #[test]
    fn zero_precoders_give_zero_permutation_gradient() {
        let mut inst = instance(3, 4, 2);
        for x in inst.w.w.iter_mut().flatten().flatten() {
            *x = CMat::zeros(2, 2);
        }
        let (sens, resp) = inst.sensitivity(1);
        let grad = grad_permutation(&sens, &resp[1].blocks, &inst.dense_perms()[1]).unwrap();
        assert_eq!(grad.amax(), 0.0);
    }

    #[test]
    fn cost_special_cases() {
        let q = PermutationMatrix::from_assignment(vec![2, 0, 1, 3]).unwrap();
        let z = RMat::zeros(4, 4);
        let cost = permutation_cost(&q.to_dense(), &z, &z, &z, 0.5, 0.01);
        assert_eq!(best_response_permutation(&cost).unwrap(), q);
        let g = RMat::from_fn(4, 4, |i, j| (i * 4 + j) as f64 * 0.01);
        let cost = permutation_cost(&q.to_dense(), &g, &z, &z, 1.0, 0.01);
        assert!((cost - (q.to_dense() * 0.01 + &g)).amax() < 1e-15);
    }

    #[test]
    fn best_response_dominates_random_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = 6;
        let mut r = || RMat::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let (g, p, d) = (r(), r(), r());
        let q = PermutationMatrix::identity(m).to_dense();
        let cost = permutation_cost(&q, &g, &p, &d, 0.6, 0.01);
        let best = best_response_permutation(&cost).unwrap().to_dense();
        let value = |x: &RMat| cost.dot(x);
        let perms = all_permutations(m);
        for _ in 0..1000 {
            let other = PermutationMatrix::from_assignment(perms[rng.random_range(0..perms.len())].clone())
                .unwrap()
                .to_dense();
            assert!(value(&best) >= value(&other) - 1e-12);
        }
    }
}
