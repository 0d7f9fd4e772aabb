use bdris_csd::capacitance::{dykstra_project, DYKSTRA_TOL};
use bdris_csd::config::Scenario;
use bdris_csd::consensus::{disagreement, is_connected, metropolis_weights, mix};
use bdris_csd::linalg::RMat;
use bdris_csd::lsap::lsap_maximize;
use bdris_csd::physics::{admittance_matrix, group_scattering, CapacitanceMatrix, CircuitParams, PermutationMatrix};
use proptest::prelude::*;

fn adjacency() -> impl Strategy<Value = Vec<Vec<bool>>> {
    (2usize..7)
        .prop_flat_map(|n| prop::collection::vec(any::<bool>(), n * n).prop_map(move |bits| (n, bits)))
        .prop_map(|(n, bits)| {
            let mut adj = vec![vec![false; n]; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let e = bits[i * n + j];
                    adj[i][j] = e;
                    adj[j][i] = e;
                }
                // keep a path so the graph stays connected
                if i + 1 < n {
                    adj[i][i + 1] = true;
                    adj[i + 1][i] = true;
                }
            }
            adj
        })
}

fn square(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = RMat> {
    prop::collection::vec(lo..hi, n * n).prop_map(move |v| RMat::from_vec(n, n, v))
}

proptest! {
    #[test]
    fn metropolis_is_doubly_stochastic(adj in adjacency()) {
        prop_assume!(is_connected(&adj));
        let v = metropolis_weights(&adj).unwrap();
        let n = adj.len();
        for b in 0..n {
            prop_assert!((v.row(b).sum() - 1.0).abs() < 1e-12);
            prop_assert!((v.column(b).sum() - 1.0).abs() < 1e-12);
            for i in 0..n {
                prop_assert!(v[(b, i)] >= 0.0);
                if i != b && !adj[b][i] {
                    prop_assert_eq!(v[(b, i)], 0.0);
                }
            }
        }
    }

    #[test]
    fn mixing_preserves_mean_and_contracts(adj in adjacency(), seed in 0u64..1000) {
        let v = metropolis_weights(&adj).unwrap();
        let n = adj.len();
        let values: Vec<Vec<RMat>> = (0..n)
            .map(|b| vec![RMat::from_fn(2, 3, |i, j| ((seed + 7 * b as u64 + 3 * i as u64 + j as u64) % 11) as f64 - 5.0)])
            .collect();
        let out = mix(&values, &v);
        let total = |x: &[Vec<RMat>]| x.iter().map(|m| m[0].clone()).fold(RMat::zeros(2, 3), |a, m| a + m);
        prop_assert!((total(&out) - total(&values)).abs().max() < 1e-12);
        let flat = |x: &[Vec<RMat>]| x.iter().map(|m| m[0].iter().copied().collect()).collect::<Vec<Vec<f64>>>();
        prop_assert!(disagreement(&flat(&out)) <= disagreement(&flat(&values)) + 1e-12);
    }

    #[test]
    fn scattering_is_passive_and_reciprocal(
        n in 1usize..6,
        vals in prop::collection::vec(0.2f64..3.0, 36),
        f in 2.25e9f64..2.55e9,
    ) {
        let mut cap = CapacitanceMatrix::filled(n, 1.0);
        for i in 0..n {
            for j in i..n {
                cap.set(i, j, vals[i * 6 + j]);
            }
        }
        let circuit = CircuitParams::default();
        let phi = group_scattering(&admittance_matrix(&cap.to_farads(), f, &circuit).unwrap(), circuit.psi0_s).unwrap();
        prop_assert!(phi.clone().singular_values().max() <= 1.0 + 1e-9);
        prop_assert!((&phi - phi.transpose()).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn dykstra_matches_pairwise_clamp(cand in square(4, -1.0, 4.0)) {
        let got = dykstra_project(&cand, 0.2, 3.0, DYKSTRA_TOL).unwrap().to_dense_pf();
        let exact = RMat::from_fn(4, 4, |i, j| (0.5 * (cand[(i, j)] + cand[(j, i)])).clamp(0.2, 3.0));
        prop_assert!((got - exact).abs().max() < 1e-6);
    }

    #[test]
    fn lsap_beats_any_permutation(cost in square(5, -1.0, 1.0), shuffle in Just(()).prop_perturb(|_, mut rng| {
        let mut p: Vec<usize> = (0..5).collect();
        for i in (1..5).rev() {
            p.swap(i, rng.random_range(0..=i));
        }
        p
    })) {
        let best = lsap_maximize(&cost).unwrap();
        let value = |q: &PermutationMatrix| q.assignment().iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum::<f64>();
        let other = PermutationMatrix::from_assignment(shuffle).unwrap();
        prop_assert!(value(&best) >= value(&other) - 1e-12);
    }

    #[test]
    fn scenario_round_trips(p in 10.0f64..40.0, k in 1usize..16, seed in any::<u64>()) {
        let mut s = Scenario::desk();
        s.system.p_max_dbm = p;
        s.system.subcarriers = k;
        s.seed = seed;
        let back = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        prop_assert_eq!(back, s);
    }
}
