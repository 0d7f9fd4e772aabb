//! Linear sum assignment with a deterministic tie rule.
//!
//! Shortest augmenting paths with dual potentials find an optimum; among all
//! optimal assignments the lexicographically smallest one is then selected
//! on the subgraph of tight (zero reduced cost) edges.

use crate::error::{Error, Result};
use crate::linalg::RMat;
use crate::physics::PermutationMatrix;

/// Optimal assignment for minimization plus the dual potentials.
fn hungarian_min(cost: &RMat) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.nrows();
    // 1-based arrays, index 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_col = vec![0; n];
    for j in 1..=n {
        row_col[col_row[j] - 1] = j - 1;
    }
    (row_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Try to give row `r` a tight column other than its current one, moving
/// other free rows along an alternating path. Rows in `fixed` never move.
fn reroute(
    r: usize,
    tight: &[Vec<bool>],
    fixed: &[bool],
    row_col: &mut [usize],
    col_row: &mut [usize],
    visited: &mut [bool],
    target: usize,
) -> bool {
    for j in 0..tight.len() {
        if !tight[r][j] || visited[j] {
            continue;
        }
        visited[j] = true;
        let owner = col_row[j];
        let free = j == target;
        if free || (!fixed[owner] && reroute(owner, tight, fixed, row_col, col_row, visited, target)) {
            row_col[r] = j;
            col_row[j] = r;
            return true;
        }
    }
    false
}

/// Permutation maximizing `tr(cost^T Q) = sum_i cost[i, sigma(i)]`; ties
/// resolve to the lexicographically smallest assignment vector.
pub fn lsap_maximize(cost: &RMat) -> Result<PermutationMatrix> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::Dimension {
            context: "lsap_maximize",
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", n, cost.ncols()),
        });
    }
    if cost.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("assignment cost"));
    }
    if n == 0 {
        return PermutationMatrix::from_assignment(vec![]);
    }
    let neg = -cost;
    let (mut row_col, u, v) = hungarian_min(&neg);
    let tol = 1e-10 * (1.0 + cost.amax());
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| neg[(i, j)] - u[i] - v[j] <= tol).collect())
        .collect();
    let mut col_row = vec![0; n];
    for (i, &j) in row_col.iter().enumerate() {
        col_row[j] = i;
    }
    let mut fixed = vec![false; n];
    for i in 0..n {
        for j in 0..row_col[i] {
            if !tight[i][j] || fixed[col_row[j]] {
                continue;
            }
            // claim column j for row i; its owner must move onto i's old column
            let old = row_col[i];
            let owner = col_row[j];
            let mut rc = row_col.clone();
            let mut cr = col_row.clone();
            rc[i] = j;
            cr[j] = i;
            let mut visited = vec![false; n];
            visited[j] = true;
            fixed[i] = true;
            let ok = reroute(owner, &tight, &fixed, &mut rc, &mut cr, &mut visited, old);
            if ok {
                row_col = rc;
                col_row = cr;
                break;
            }
            fixed[i] = false;
        }
        fixed[i] = true;
    }
    PermutationMatrix::from_assignment(row_col)
}

/// Closest permutation in Frobenius norm; `||Q||_F^2 = M` for every
/// permutation, so this is an assignment on the candidate itself.
pub fn project_permutation(candidate: &RMat) -> Result<PermutationMatrix> {
    lsap_maximize(candidate)
}
