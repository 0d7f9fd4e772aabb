//! Cooperation graph, doubly-stochastic mixing weights and the
//! synchronized mixing step.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Complete,
    Ring,
    Path,
    Adaptive,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Complete => "complete",
            Topology::Ring => "ring",
            Topology::Path => "path",
            Topology::Adaptive => "adaptive",
        })
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Topology::Complete),
            "ring" => Ok(Topology::Ring),
            "path" => Ok(Topology::Path),
            "adaptive" => Ok(Topology::Adaptive),
            other => Err(Error::config(
                "network.topology",
                format!("unknown topology '{other}' (expected complete, ring, path or adaptive)"),
            )),
        }
    }
}

/// Symmetric adjacency without self-loops.
pub type Adjacency = Vec<Vec<bool>>;

/// Adjacency of a fixed topology; the adaptive graph starts complete.
pub fn static_adjacency(topology: Topology, n: usize) -> Adjacency {
    let mut adj = vec![vec![false; n]; n];
    for b in 0..n {
        for i in 0..n {
            if b == i {
                continue;
            }
            adj[b][i] = match topology {
                Topology::Complete | Topology::Adaptive => true,
                Topology::Ring => (b + 1) % n == i || (i + 1) % n == b,
                Topology::Path => b.abs_diff(i) == 1,
            };
        }
    }
    adj
}

pub fn is_connected(adj: &Adjacency) -> bool {
    let n = adj.len();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(b) = stack.pop() {
        for i in 0..n {
            if adj[b][i] && !seen[i] {
                seen[i] = true;
                stack.push(i);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// `V[b,i] = 1 / (1 + max(deg_b, deg_i))` on edges, the remainder on the
/// diagonal.
pub fn metropolis_weights(adj: &Adjacency) -> Result<RMat> {
    if !is_connected(adj) {
        return Err(Error::DisconnectedGraph);
    }
    let n = adj.len();
    let deg: Vec<usize> = adj.iter().map(|row| row.iter().filter(|&&e| e).count()).collect();
    let mut v = RMat::zeros(n, n);
    for b in 0..n {
        for i in 0..n {
            if b != i && adj[b][i] {
                v[(b, i)] = 1.0 / (1.0 + deg[b].max(deg[i]) as f64);
            }
        }
        let off: f64 = (0..n).filter(|&i| i != b).map(|i| v[(b, i)]).sum();
        v[(b, b)] = 1.0 - off;
    }
    Ok(v)
}

/// Frobenius norm of the sub-carrier average of each `H~_{b,u}`:
/// `gains[(b, u)]`, with `eff[b][u][k]`.
pub fn channel_gains(eff: &[Vec<Vec<CMat>>]) -> RMat {
    let stations = eff.len();
    let users = eff.first().map_or(0, Vec::len);
    RMat::from_fn(stations, users, |b, u| {
        let per_k = &eff[b][u];
        let mut avg = per_k[0].clone();
        for h in &per_k[1..] {
            avg += h;
        }
        avg.norm() / per_k.len() as f64
    })
}

/// Channel-driven neighborhoods: station `b` links to `b'` when its gain
/// to the `b'`-th randomly selected user clears half the gain spread.
pub fn adaptive_adjacency<R: Rng>(gains: &RMat, rng: &mut R) -> Result<Adjacency> {
    let (stations, users) = gains.shape();
    if users < stations {
        return Err(Error::TooFewUsers { users, stations });
    }
    let picked = sample(rng, users, stations).into_vec();
    let omega = RMat::from_fn(stations, stations, |b, i| gains[(b, picked[i])]);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for b in 0..stations {
        for i in (0..stations).filter(|&i| i != b) {
            lo = lo.min(omega[(b, i)]);
            hi = hi.max(omega[(b, i)]);
        }
    }
    let threshold = 0.5 * (hi - lo);
    let mut adj = vec![vec![false; stations]; stations];
    for b in 0..stations {
        for i in (0..stations).filter(|&i| i != b) {
            if omega[(b, i)] >= threshold {
                adj[b][i] = true;
                adj[i][b] = true;
            }
        }
    }
    if !is_connected(&adj) {
        for b in 0..stations {
            let next = (b + 1) % stations;
            if next != b {
                adj[b][next] = true;
                adj[next][b] = true;
            }
        }
    }
    Ok(adj)
}

/// `out_b = sum_i V[b,i] in_i` for each block.
pub fn mix(values: &[Vec<RMat>], weights: &RMat) -> Vec<Vec<RMat>> {
    (0..values.len())
        .map(|b| {
            (0..values[b].len())
                .map(|blk| {
                    let mut acc = RMat::zeros(values[b][blk].nrows(), values[b][blk].ncols());
                    for (i, v) in values.iter().enumerate() {
                        let w = weights[(b, i)];
                        if w != 0.0 {
                            acc += &v[blk] * w;
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// `|| x - 1 (x) mean(x) ||` over the stacked per-agent vectors.
pub fn disagreement(stacked: &[Vec<f64>]) -> f64 {
    let n = stacked.len();
    if n == 0 {
        return 0.0;
    }
    let d = stacked[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| stacked.iter().map(|x| x[j]).sum::<f64>() / n as f64)
        .collect();
    stacked
        .iter()
        .flat_map(|x| x.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_doubly_stochastic(v: &RMat) {
        for b in 0..v.nrows() {
            assert!((v.row(b).sum() - 1.0).abs() < 1e-12);
            assert!((v.column(b).sum() - 1.0).abs() < 1e-12);
        }
        assert!(v.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn complete_graph_weights() {
        let v = metropolis_weights(&static_adjacency(Topology::Complete, 4)).unwrap();
        assert!(v.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn path_graph_weights() {
        let v = metropolis_weights(&static_adjacency(Topology::Path, 3)).unwrap();
        assert!((v[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((v[(1, 2)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((v[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((v[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(v[(0, 2)], 0.0);
        assert_doubly_stochastic(&v);
    }

    #[test]
    fn single_node_and_disconnected() {
        let v = metropolis_weights(&static_adjacency(Topology::Complete, 1)).unwrap();
        assert_eq!(v, RMat::identity(1, 1));
        let adj = vec![vec![false, false], vec![false, false]];
        assert!(matches!(metropolis_weights(&adj), Err(Error::DisconnectedGraph)));
    }

    #[test]
    fn every_topology_is_doubly_stochastic() {
        for t in [Topology::Complete, Topology::Ring, Topology::Path] {
            for n in 1..7 {
                let adj = static_adjacency(t, n);
                let v = metropolis_weights(&adj).unwrap();
                assert_doubly_stochastic(&v);
                for b in 0..n {
                    for i in 0..n {
                        if b != i && !adj[b][i] {
                            assert_eq!(v[(b, i)], 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn adaptive_equal_gains_is_complete() {
        let gains = RMat::from_element(4, 6, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(adaptive_adjacency(&gains, &mut rng).unwrap(), static_adjacency(Topology::Complete, 4));
    }

    #[test]
    fn adaptive_keeps_dominant_pair_and_connectivity() {
        let mut gains = RMat::from_element(3, 3, 0.01);
        gains[(0, 0)] = 5.0;
        gains[(0, 1)] = 5.0;
        gains[(0, 2)] = 5.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let adj = adaptive_adjacency(&gains, &mut rng).unwrap();
        assert!(adj[0][1] && adj[1][0] && adj[0][2]);
        assert!(is_connected(&adj));
    }

    #[test]
    fn adaptive_is_deterministic_and_checks_users() {
        let gains = RMat::from_fn(4, 5, |b, u| ((b * 7 + u * 3) % 5) as f64 + 0.1);
        let a = adaptive_adjacency(&gains, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = adaptive_adjacency(&gains, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(is_connected(&a));
        assert!(matches!(
            adaptive_adjacency(&RMat::zeros(4, 3), &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::TooFewUsers { .. })
        ));
    }

    fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<RMat>> {
        (0..n).map(|_| vec![RMat::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0))]).collect()
    }

    fn flatten(values: &[Vec<RMat>]) -> Vec<Vec<f64>> {
        values.iter().map(|v| v.iter().flat_map(|m| m.iter().cloned()).collect()).collect()
    }

    #[test]
    fn mixing_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 5;
        let v = metropolis_weights(&static_adjacency(Topology::Ring, n)).unwrap();
        let same = vec![vec![RMat::from_element(2, 2, 1.5)]; n];
        assert_eq!(mix(&same, &v), same);

        let mut x = random_values(&mut rng, n);
        let sum_before: RMat = x.iter().fold(RMat::zeros(2, 3), |a, b| a + &b[0]);
        let first = disagreement(&flatten(&x));
        let mut prev = first;
        for _ in 0..200 {
            x = mix(&x, &v);
            let d = disagreement(&flatten(&x));
            assert!(d <= prev + 1e-15);
            prev = d;
        }
        let sum_after: RMat = x.iter().fold(RMat::zeros(2, 3), |a, b| a + &b[0]);
        assert!((sum_before - sum_after).amax() < 1e-12);
        assert!(prev < 1e-6 * first.max(1.0));
    }

    #[test]
    fn disagreement_of_two_points() {
        let d = disagreement(&[vec![1.0, 2.0], vec![1.0, 2.5]]);
        assert!((d - 0.5 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(disagreement(&[vec![3.0], vec![3.0]]), 0.0);
    }
}
