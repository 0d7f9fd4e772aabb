//! Rate sensitivity to the surface response, the analytic capacitance
//! gradient, the capacitance best response and its feasibility projection.

use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{ceye, solve_general, CMat, RMat};
use crate::physics::{
    admittance_matrix_relaxed, grouping_sets, CapacitanceMatrix, CircuitParams, GroupStructure,
    SurfaceConfig, PF,
};
use crate::rate::{PrecoderSet, RateSnapshot};

pub const DYKSTRA_TOL: f64 = 1e-9;
pub const DYKSTRA_MAX_ITER: usize = 10_000;

/// `Omega_{r,k}` such that a change of surface `r`'s response seen on
/// station `b`'s links moves the rate by `2 Re tr(dPhi Omega)`:
/// `Omega = sum_{u,q} F_{b,r,k} W_{b,q,k} Z_{u,q,k}^H G_{r,u,k}`.
pub fn response_sensitivity(
    channels: &ChannelSet,
    snap: &RateSnapshot,
    w: &PrecoderSet,
    b: usize,
    r: usize,
    k: usize,
) -> CMat {
    let users = snap.links.len();
    let f = &channels.bs_ris[b][r][k];
    let mut xi = CMat::zeros(f.ncols(), f.nrows());
    for u in 0..users {
        let link = &snap.links[u][k];
        let mut acc = CMat::zeros(f.ncols(), link.desired().nrows());
        for q in 0..users {
            acc += &w.w[b][q][k] * link.stream_gradient(q).adjoint();
        }
        xi += acc * &channels.ris_ue[r][u][k];
    }
    f * xi
}

/// One nonzero of the sparse `d vec(A) / d vec(C)^T` (column-major vec).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEntry {
    pub row: usize,
    pub col: usize,
    pub value: Complex64,
}

/// Sparse Jacobian of the admittance matrix w.r.t. the (unconstrained)
/// capacitance entries. `A[n,n]` depends on every `C[n,m]`; `A[n,m]`,
/// `n != m`, only on `C[n,m]`.
pub fn lambda_pattern(c_f: &RMat, f_hz: f64, circuit: &CircuitParams) -> Vec<LambdaEntry> {
    let n = c_f.nrows();
    let mut out = Vec::with_capacity(2 * n * n - n);
    for a in 0..n {
        for m in 0..n {
            out.push(LambdaEntry {
                row: a * n + a,
                col: m * n + a,
                value: circuit.branch_admittance_derivative(c_f[(a, m)], f_hz),
            });
        }
    }
    for col in 0..n {
        for a in (0..n).filter(|&a| a != col) {
            let idx = col * n + a;
            out.push(LambdaEntry {
                row: idx,
                col: idx,
                value: -circuit.branch_admittance_derivative(c_f[(a, col)], f_hz),
            });
        }
    }
    out
}

/// Slice `Omega[G_g, G_g]`.
fn group_block(omega: &CMat, set: &[usize]) -> CMat {
    CMat::from_fn(set.len(), set.len(), |i, j| omega[(set[i], set[j])])
}

/// Gradient of the rate w.r.t. each group's capacitances (pF), treating
/// every entry as a free variable; generally not symmetric.
///
/// `sensitivity[k]` comes from [`response_sensitivity`].
pub fn grad_capacitance(
    sensitivity: &[CMat],
    surface: &SurfaceConfig,
    groups: &GroupStructure,
    freqs: &[f64],
    circuit: &CircuitParams,
) -> Result<Vec<RMat>> {
    let sets = grouping_sets(&surface.perm, groups);
    let psi0 = circuit.psi0_s;
    let caps = surface.caps_farads();
    let n = groups.m_per_group();
    let mut out = vec![RMat::zeros(n, n); groups.n_groups()];
    for (k, &f) in freqs.iter().enumerate() {
        for (g, set) in sets.iter().enumerate() {
            let a = admittance_matrix_relaxed(&caps[g], f, circuit)?;
            let x = &a + ceye(n).scale(psi0);
            let omega_g = group_block(&sensitivity[k], set);
            let left = solve_general(&x, &omega_g, "capacitance gradient")?;
            // X^-1 Omega X^-1 = (X^-T (X^-1 Omega)^T)^T
            let theta_t = solve_general(&x.transpose(), &left.transpose(), "capacitance gradient")?;
            let theta = theta_t.transpose().adjoint();
            for e in lambda_pattern(&caps[g], f, circuit) {
                let (i, j) = (e.col % n, e.col / n);
                let (ti, tj) = (e.row % n, e.row / n);
                out[g][(i, j)] += 4.0 * psi0 * (e.value.conj() * theta[(ti, tj)]).re / PF;
            }
        }
    }
    Ok(out)
}

/// Unconstrained maximizer `C^t + (rho (Gamma + Pi) + (1 - rho) D) / tau`
/// of the capacitance sub-problem.
pub fn candidate_capacitance(
    current: &RMat,
    local_grad: &RMat,
    pricing: &RMat,
    accum: &RMat,
    rho: f64,
    tau: f64,
) -> RMat {
    current + ((local_grad + pricing) * rho + accum * (1.0 - rho)) / tau
}

/// Euclidean projection onto symmetric matrices with entries in
/// `[c_min, c_max]` by Dykstra's alternating projections.
pub fn dykstra_project(candidate: &RMat, c_min: f64, c_max: f64, tol: f64) -> Result<CapacitanceMatrix> {
    let mut x = candidate.clone();
    let mut p = RMat::zeros(x.nrows(), x.ncols());
    let mut q = RMat::zeros(x.nrows(), x.ncols());
    for _ in 0..DYKSTRA_MAX_ITER {
        let y_in = &x + &p;
        let y = (&y_in + y_in.transpose()) * 0.5;
        p = y_in - &y;
        let z_in = &y + &q;
        let z = z_in.map(|v| v.clamp(c_min, c_max));
        q = z_in - &z;
        let change = (&z - &x).amax();
        x = z;
        if change <= tol {
            // the box iterate is symmetric to within the tolerance; keep its
            // upper triangle so both constraints hold exactly
            return Ok(CapacitanceMatrix::from_upper(&x));
        }
    }
    Err(Error::DykstraNoConvergence(DYKSTRA_MAX_ITER))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::channel::{effective_channels, generate_channels, Dims, Layout, PathlossModel};
    use crate::physics::{assemble_response, group_scattering, SurfaceResponse};
    use crate::rate::sum_rate;
    use crate::rng::complex_normal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) struct Instance {
        pub groups: GroupStructure,
        pub channels: ChannelSet,
        pub w: PrecoderSet,
        pub freqs: Vec<f64>,
        pub circuit: CircuitParams,
        /// Per-station copy of the single surface, capacitances in farads.
        pub caps: Vec<Vec<RMat>>,
        pub perms: Vec<crate::physics::PermutationMatrix>,
    }

    /// Unit-scale channels, so the gradients are well above rounding noise.
    pub(crate) fn instance(seed: u64, m: usize, g: usize) -> Instance {
        let dims = Dims {
            stations: 2,
            users: 2,
            surfaces: 1,
            subcarriers: 2,
            elements: m,
            tx_antennas: 2,
            rx_antennas: 2,
            streams: 2,
        };
        let geo = Layout::standard(2, 1).place(2, seed).unwrap();
        let flat = PathlossModel { pl0_db: 0.0, exp_bs_ue: 0.0, exp_bs_ris: 0.0, exp_ris_ue: 0.0, ..Default::default() };
        let channels = generate_channels(&geo, &flat, &dims, 0.3, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = PrecoderSet::zeros(&dims);
        for x in w.w.iter_mut().flatten().flatten() {
            *x = CMat::from_fn(2, 2, |_, _| complex_normal(&mut rng, 1.0));
        }
        let circuit = CircuitParams::default();
        let groups = GroupStructure::new(m, g).unwrap();
        let n = groups.m_per_group();
        let caps = (0..2)
            .map(|_| {
                (0..g)
                    .map(|_| {
                        let mut c = RMat::zeros(n, n);
                        for i in 0..n {
                            for j in i..n {
                                let v = rng.random_range(circuit.c_min_f..circuit.c_max_f);
                                c[(i, j)] = v;
                                c[(j, i)] = v;
                            }
                        }
                        c
                    })
                    .collect()
            })
            .collect();
        let perms = (0..2)
            .map(|_| {
                let mut p: Vec<usize> = (0..m).collect();
                for i in (1..m).rev() {
                    p.swap(i, rng.random_range(0..=i));
                }
                crate::physics::PermutationMatrix::from_assignment(p).unwrap()
            })
            .collect();
        Instance {
            groups,
            channels,
            w,
            freqs: vec![2.3e9, 2.5e9],
            circuit,
            caps,
            perms,
        }
    }

    impl Instance {
        pub fn responses_dense(&self, caps: &[Vec<RMat>], q: &[RMat]) -> Vec<SurfaceResponse> {
            caps.iter()
                .zip(q)
                .map(|(cs, qb)| {
                    let mut blocks = Vec::new();
                    let mut assembled = Vec::new();
                    for &f in &self.freqs {
                        let bk: Vec<CMat> = cs
                            .iter()
                            .map(|c| {
                                let a = admittance_matrix_relaxed(c, f, &self.circuit).unwrap();
                                group_scattering(&a, self.circuit.psi0_s).unwrap()
                            })
                            .collect();
                        assembled.push(crate::physics::assemble_response_dense(&bk, qb).unwrap());
                        blocks.push(bk);
                    }
                    SurfaceResponse { blocks, assembled }
                })
                .collect()
        }

        pub fn rate_dense(&self, caps: &[Vec<RMat>], q: &[RMat]) -> f64 {
            let resp = self.responses_dense(caps, q);
            let per_b: Vec<&[SurfaceResponse]> = resp.iter().map(std::slice::from_ref).collect();
            let eff = effective_channels(&self.channels, &per_b).unwrap();
            sum_rate(&eff, &self.w, &self.channels.noise_var).unwrap()
        }

        pub fn dense_perms(&self) -> Vec<RMat> {
            self.perms.iter().map(|p| p.to_dense()).collect()
        }

        pub fn surface(&self, b: usize) -> SurfaceConfig {
            SurfaceConfig {
                caps: self.caps[b]
                    .iter()
                    .map(|c| CapacitanceMatrix::from_upper(&(c * PF)))
                    .collect(),
                perm: self.perms[b].clone(),
            }
        }

        pub fn sensitivity(&self, b: usize) -> (Vec<CMat>, Vec<SurfaceResponse>) {
            let resp = self.responses_dense(&self.caps, &self.dense_perms());
            let per_b: Vec<&[SurfaceResponse]> = resp.iter().map(std::slice::from_ref).collect();
            let eff = effective_channels(&self.channels, &per_b).unwrap();
            let snap = RateSnapshot::new(&eff, &self.w, &self.channels.noise_var).unwrap();
            let sens = (0..self.freqs.len())
                .map(|k| response_sensitivity(&self.channels, &snap, &self.w, b, 0, k))
                .collect();
            (sens, resp)
        }
    }

    #[test]
    fn lambda_pattern_for_two_elements() {
        let c = RMat::from_element(2, 2, 1e-12);
        let mut pos: Vec<(usize, usize)> = lambda_pattern(&c, 2.4e9, &CircuitParams::default())
            .iter()
            .map(|e| (e.row, e.col))
            .collect();
        pos.sort();
        assert_eq!(pos, vec![(0, 0), (0, 2), (1, 1), (2, 2), (3, 1), (3, 3)]);
    }

    #[test]
    fn lambda_matches_admittance_differences() {
        let circuit = CircuitParams::default();
        let c = RMat::from_row_slice(3, 3, &[1.0, 0.4, 2.2, 0.4, 2.9, 1.1, 2.2, 1.1, 0.3]) * 1e-12;
        let f = 2.4e9;
        let mut dense = CMat::zeros(9, 9);
        for e in lambda_pattern(&c, f, &circuit) {
            dense[(e.row, e.col)] += e.value;
        }
        let scale = dense.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for col in 0..9 {
            let (i, j) = (col % 3, col / 3);
            let h = c[(i, j)] * 1e-6;
            let mut cp = c.clone();
            let mut cm = c.clone();
            cp[(i, j)] += h;
            cm[(i, j)] -= h;
            let d = (admittance_matrix_relaxed(&cp, f, &circuit).unwrap()
                - admittance_matrix_relaxed(&cm, f, &circuit).unwrap())
                / Complex64::new(2.0 * h, 0.0);
            for row in 0..9 {
                let fd = d[(row % 3, row / 3)];
                let an = dense[(row, col)];
                assert!((fd - an).norm() <= 1e-5 * an.norm() + 1e-12 * scale, "({row},{col})");
            }
        }
    }

    #[test]
    fn capacitance_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let inst = instance(seed, 4, 2);
            let b = 1;
            let (sens, _) = inst.sensitivity(b);
            let grad = grad_capacitance(&sens, &inst.surface(b), &inst.groups, &inst.freqs, &inst.circuit).unwrap();
            let q = inst.dense_perms();
            let scale = grad.iter().map(|g| g.amax()).fold(0.0, f64::max);
            for g in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let mut cp = inst.caps.clone();
                        let mut cm = inst.caps.clone();
                        let h = inst.caps[b][g][(i, j)] * 1e-6;
                        cp[b][g][(i, j)] += h;
                        cm[b][g][(i, j)] -= h;
                        let fd = (inst.rate_dense(&cp, &q) - inst.rate_dense(&cm, &q)) / (2.0 * h) / PF;
                        let an = grad[g][(i, j)];
                        assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3 * scale), "g{g} ({i},{j}) fd {fd} an {an}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_precoders_give_zero_capacitance_gradient() {
        let mut inst = instance(4, 4, 2);
        for x in inst.w.w.iter_mut().flatten().flatten() {
            *x = CMat::zeros(2, 2);
        }
        let (sens, _) = inst.sensitivity(0);
        let grad = grad_capacitance(&sens, &inst.surface(0), &inst.groups, &inst.freqs, &inst.circuit).unwrap();
        assert!(grad.iter().all(|g| g.amax() == 0.0));
    }

    #[test]
    fn assembled_response_agrees_with_fast_path() {
        let inst = instance(5, 4, 2);
        let fast = inst.surface(0).response(&inst.freqs, &inst.circuit).unwrap();
        let dense = inst.responses_dense(&inst.caps, &inst.dense_perms());
        for k in 0..2 {
            let slow = assemble_response(&dense[0].blocks[k], &inst.perms[0]).unwrap();
            assert!(crate::linalg::max_abs_diff(&fast.assembled[k], &slow) < 1e-12);
        }
    }

    #[test]
    fn candidate_special_cases() {
        let c = RMat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.5]);
        let z = RMat::zeros(2, 2);
        assert_eq!(candidate_capacitance(&c, &z, &z, &z, 0.4, 0.01), c);
        let g = RMat::from_row_slice(2, 2, &[0.1, -0.2, 0.05, 0.0]);
        let out = candidate_capacitance(&c, &g, &z, &z, 1.0, 0.5);
        assert!((out - (&c + &g / 0.5)).amax() < 1e-15);
    }

    #[test]
    fn candidate_maximizes_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut r = || RMat::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let (c, g, p, d) = (r(), r(), r(), r());
        let (rho, tau) = (0.7, 0.04);
        let h = |x: &RMat| {
            let dx = x - &c;
            rho * (&g + &p).dot(&dx) + (1.0 - rho) * d.dot(&dx) - tau / 2.0 * dx.norm_squared()
        };
        // plain gradient ascent with numerical gradients
        let mut x = c.clone();
        for _ in 0..3000 {
            let mut grad = RMat::zeros(3, 3);
            for i in 0..9 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += 1e-4;
                xm[i] -= 1e-4;
                grad[i] = (h(&xp) - h(&xm)) / 2e-4;
            }
            x += grad * (0.5 / tau);
        }
        let cand = candidate_capacitance(&c, &g, &p, &d, rho, tau);
        assert!((cand - x).amax() < 1e-6);
    }

    #[test]
    fn dykstra_fixed_points() {
        let feasible = RMat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 0.5]);
        let out = dykstra_project(&feasible, 0.2, 3.0, DYKSTRA_TOL).unwrap();
        assert!((out.to_dense_pf() - &feasible).amax() < 1e-12);
        let asym = RMat::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 0.5]);
        let out = dykstra_project(&asym, 0.2, 3.0, DYKSTRA_TOL).unwrap();
        let expected = (&asym + asym.transpose()) * 0.5;
        assert!((out.to_dense_pf() - expected).amax() < 1e-12);
    }

    /// Projected gradient descent on the upper triangle (box-constrained
    /// least squares), an independent route to the same projection.
    pub(crate) fn projection_oracle(c: &RMat, lo: f64, hi: f64) -> RMat {
        let n = c.nrows();
        let mut x = RMat::from_element(n, n, 0.5 * (lo + hi));
        for _ in 0..2000 {
            for i in 0..n {
                for j in i..n {
                    let grad = if i == j {
                        2.0 * (x[(i, i)] - c[(i, i)])
                    } else {
                        2.0 * (x[(i, j)] - c[(i, j)]) + 2.0 * (x[(i, j)] - c[(j, i)])
                    };
                    let step = if i == j { 0.5 } else { 0.25 };
                    let v = (x[(i, j)] - step * grad).clamp(lo, hi);
                    x[(i, j)] = v;
                    x[(j, i)] = v;
                }
            }
        }
        x
    }

    #[test]
    fn dykstra_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for n in [3usize, 4] {
            for _ in 0..25 {
                let c = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..4.5));
                let out = dykstra_project(&c, 0.2, 3.0, DYKSTRA_TOL).unwrap();
                assert!(out.in_box(0.2, 3.0));
                assert!((out.to_dense_pf() - projection_oracle(&c, 0.2, 3.0)).amax() < 1e-6);
            }
        }
    }
}
