//! Frequency-dependent BDRIS scattering responses.
//!
//! Each fully-connected group of a surface is a multiport of series
//! R0-L2-C branches, each shunted by L1. The group admittance matrix is
//! mapped to a scattering matrix and the groups are placed on the surface
//! through the grouping permutation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ceye, solve_general, CMat, RMat};

/// Picofarads per farad.
pub const PF: f64 = 1e12;

/// Circuit constants of one unit element, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub r0_ohm: f64,
    pub l1_h: f64,
    pub l2_h: f64,
    pub psi0_s: f64,
    pub c_min_f: f64,
    pub c_max_f: f64,
}

impl Default for CircuitParams {
    fn default() -> Self {
        CircuitParams {
            r0_ohm: 1.0,
            l1_h: 2.5e-9,
            l2_h: 0.7e-9,
            psi0_s: 1.0 / 50.0,
            c_min_f: 0.2e-12,
            c_max_f: 3.0e-12,
        }
    }
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r0_ohm >= 0.0) {
            return Err(Error::config("circuit.r0_ohm", "must be >= 0"));
        }
        if !(self.l1_h > 0.0) {
            return Err(Error::config("circuit.l1_nh", "must be > 0"));
        }
        if !(self.l2_h > 0.0) {
            return Err(Error::config("circuit.l2_nh", "must be > 0"));
        }
        if !(self.psi0_s > 0.0) {
            return Err(Error::config("circuit.psi0_s", "must be > 0"));
        }
        if !(self.c_min_f > 0.0 && self.c_min_f < self.c_max_f) {
            return Err(Error::config(
                "circuit.c_min_pf",
                "need 0 < c_min < c_max",
            ));
        }
        Ok(())
    }

    pub fn c_min_pf(&self) -> f64 {
        self.c_min_f * PF
    }

    pub fn c_max_pf(&self) -> f64 {
        self.c_max_f * PF
    }

    /// `(beta, delta)` with `beta = j 2 pi f` and `delta = R0 + j 2 pi f L2`.
    fn beta_delta(&self, f_hz: f64) -> (Complex64, Complex64) {
        let w = 2.0 * PI * f_hz;
        (
            Complex64::new(0.0, w),
            Complex64::new(self.r0_ohm, w * self.l2_h),
        )
    }

    /// Admittance of one interconnection: series R0-L2-C in parallel with L1.
    pub fn branch_admittance(&self, c_f: f64, f_hz: f64) -> Complex64 {
        let (beta, delta) = self.beta_delta(f_hz);
        let series = 1.0 / (delta + 1.0 / (beta * c_f));
        series + 1.0 / (beta * self.l1_h)
    }

    /// d(branch admittance)/dC = beta / (beta delta C + 1)^2.
    pub fn branch_admittance_derivative(&self, c_f: f64, f_hz: f64) -> Complex64 {
        let (beta, delta) = self.beta_delta(f_hz);
        let den = beta * delta * c_f + 1.0;
        beta / (den * den)
    }
}

/// BDRIS interconnection architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "FC")]
    FullyConnected,
    #[serde(rename = "GC")]
    GroupConnected,
    #[serde(rename = "DGC")]
    DynamicGroupConnected,
    #[serde(rename = "D")]
    Diagonal,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::FullyConnected,
        Architecture::DynamicGroupConnected,
        Architecture::GroupConnected,
        Architecture::Diagonal,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Architecture::FullyConnected => "FC",
            Architecture::GroupConnected => "GC",
            Architecture::DynamicGroupConnected => "DGC",
            Architecture::Diagonal => "D",
        }
    }

    /// Only the dynamic architecture optimizes its grouping permutation.
    pub fn optimizes_permutation(&self) -> bool {
        matches!(self, Architecture::DynamicGroupConnected)
    }

    /// Group layout for `m` elements; `g` is used by the grouped variants.
    pub fn group_structure(&self, m: usize, g: usize) -> Result<GroupStructure> {
        match self {
            Architecture::FullyConnected => GroupStructure::new(m, 1),
            Architecture::Diagonal => GroupStructure::new(m, m),
            Architecture::GroupConnected | Architecture::DynamicGroupConnected => {
                if g <= 1 || g >= m {
                    return Err(Error::config(
                        "system.n_groups",
                        format!("{} needs 1 < G < M (G = {g}, M = {m})", self.tag()),
                    ));
                }
                GroupStructure::new(m, g)
            }
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FC" => Ok(Architecture::FullyConnected),
            "GC" => Ok(Architecture::GroupConnected),
            "DGC" => Ok(Architecture::DynamicGroupConnected),
            "D" => Ok(Architecture::Diagonal),
            other => Err(Error::config(
                "architecture",
                format!("unknown architecture '{other}' (expected FC, GC, DGC or D)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    m_total: usize,
    n_groups: usize,
}

impl GroupStructure {
    pub fn new(m_total: usize, n_groups: usize) -> Result<Self> {
        if m_total == 0 || n_groups == 0 {
            return Err(Error::config("system.m_elements", "M and G must be positive"));
        }
        if m_total % n_groups != 0 {
            return Err(Error::config(
                "system.n_groups",
                format!("M = {m_total} is not divisible by G = {n_groups}"),
            ));
        }
        Ok(GroupStructure { m_total, n_groups })
    }

    pub fn m_total(&self) -> usize {
        self.m_total
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn m_per_group(&self) -> usize {
        self.m_total / self.n_groups
    }
}

/// Symmetric capacitance matrix of one group, in picofarads.
///
/// Only the upper triangle is stored, so symmetry holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitanceMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl CapacitanceMatrix {
    pub fn filled(n: usize, value_pf: f64) -> Self {
        CapacitanceMatrix {
            n,
            upper: vec![value_pf; n * (n + 1) / 2],
        }
    }

    /// Takes the upper triangle of `m` (pF) and mirrors it.
    pub fn from_upper(m: &RMat) -> Self {
        let n = m.nrows();
        let mut upper = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                upper.push(m[(i, j)]);
            }
        }
        CapacitanceMatrix { n, upper }
    }

    /// Rejects input that is not exactly symmetric.
    pub fn try_from_dense(m: &RMat) -> Result<Self> {
        let asym = max_asymmetry(m);
        if asym != 0.0 {
            return Err(Error::NotSymmetric { max_asym: asym });
        }
        Ok(Self::from_upper(m))
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + j
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[self.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value_pf: f64) {
        let k = self.index(i, j);
        self.upper[k] = value_pf;
    }

    pub fn to_dense_pf(&self) -> RMat {
        RMat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn to_farads(&self) -> RMat {
        RMat::from_fn(self.n, self.n, |i, j| self.get(i, j) / PF)
    }

    pub fn in_box(&self, c_min_pf: f64, c_max_pf: f64) -> bool {
        self.upper.iter().all(|&c| c >= c_min_pf && c <= c_max_pf)
    }
}

pub fn max_asymmetry(m: &RMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Permutation matrix stored as its row-to-column assignment:
/// `Q[i, assignment[i]] = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PermutationMatrix {
    assignment: Vec<usize>,
}

impl PermutationMatrix {
    pub fn identity(m: usize) -> Self {
        PermutationMatrix {
            assignment: (0..m).collect(),
        }
    }

    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        let m = assignment.len();
        let mut seen = vec![false; m];
        for &j in &assignment {
            if j >= m || seen[j] {
                return Err(Error::InvalidPermutation(format!(
                    "{assignment:?} is not a permutation of 0..{m}"
                )));
            }
            seen[j] = true;
        }
        Ok(PermutationMatrix { assignment })
    }

    /// Matrix form `[e_p(1), ..., e_p(M)]`: column `j` has its one at row `p[j]`.
    pub fn from_columns(p: &[usize]) -> Result<Self> {
        let inv = PermutationMatrix::from_assignment(p.to_vec())?;
        Ok(PermutationMatrix {
            assignment: inv.inverse_assignment(),
        })
    }

    pub fn from_dense(q: &RMat) -> Result<Self> {
        let m = q.nrows();
        if q.ncols() != m {
            return Err(Error::InvalidPermutation("matrix is not square".into()));
        }
        let mut assignment = vec![usize::MAX; m];
        for i in 0..m {
            for j in 0..m {
                let v = q[(i, j)];
                if v == 1.0 {
                    if assignment[i] != usize::MAX {
                        return Err(Error::InvalidPermutation(format!("row {i} sums above 1")));
                    }
                    assignment[i] = j;
                } else if v != 0.0 {
                    return Err(Error::InvalidPermutation(format!(
                        "entry ({i},{j}) = {v} is not binary"
                    )));
                }
            }
            if assignment[i] == usize::MAX {
                return Err(Error::InvalidPermutation(format!("row {i} is empty")));
            }
        }
        Self::from_assignment(assignment)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    fn inverse_assignment(&self) -> Vec<usize> {
        let mut inv = vec![0; self.assignment.len()];
        for (i, &j) in self.assignment.iter().enumerate() {
            inv[j] = i;
        }
        inv
    }

    /// `p(j)`: the row holding the one in column `j`.
    pub fn column_sources(&self) -> Vec<usize> {
        self.inverse_assignment()
    }

    pub fn to_dense(&self) -> RMat {
        let m = self.len();
        let mut q = RMat::zeros(m, m);
        for (i, &j) in self.assignment.iter().enumerate() {
            q[(i, j)] = 1.0;
        }
        q
    }
}

/// Configuration of one surface: per-group capacitances plus grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    pub caps: Vec<CapacitanceMatrix>,
    pub perm: PermutationMatrix,
}

impl SurfaceConfig {
    pub fn uniform(groups: &GroupStructure, value_pf: f64) -> Self {
        SurfaceConfig {
            caps: (0..groups.n_groups())
                .map(|_| CapacitanceMatrix::filled(groups.m_per_group(), value_pf))
                .collect(),
            perm: PermutationMatrix::identity(groups.m_total()),
        }
    }

    pub fn caps_farads(&self) -> Vec<RMat> {
        self.caps.iter().map(CapacitanceMatrix::to_farads).collect()
    }

    /// Per-group blocks and assembled response at each frequency.
    pub fn response(&self, freqs: &[f64], circuit: &CircuitParams) -> Result<SurfaceResponse> {
        let caps = self.caps_farads();
        let mut blocks = Vec::with_capacity(freqs.len());
        let mut assembled = Vec::with_capacity(freqs.len());
        for &f in freqs {
            let bk = caps
                .iter()
                .map(|c| group_scattering(&admittance_matrix(c, f, circuit)?, circuit.psi0_s))
                .collect::<Result<Vec<_>>>()?;
            assembled.push(assemble_response(&bk, &self.perm)?);
            blocks.push(bk);
        }
        Ok(SurfaceResponse { blocks, assembled })
    }
}

/// All shared surfaces as seen by one agent.
pub type BdrisState = Vec<SurfaceConfig>;

#[derive(Debug, Clone)]
pub struct SurfaceResponse {
    /// `[k][g]`, each `M~ x M~`.
    pub blocks: Vec<Vec<CMat>>,
    /// `[k]`, each `M x M`.
    pub assembled: Vec<CMat>,
}

/// Group admittance matrix. `c_f` must be exactly symmetric, in farads.
pub fn admittance_matrix(c_f: &RMat, f_hz: f64, circuit: &CircuitParams) -> Result<CMat> {
    let asym = max_asymmetry(c_f);
    if asym != 0.0 {
        return Err(Error::NotSymmetric { max_asym: asym });
    }
    admittance_matrix_relaxed(c_f, f_hz, circuit)
}

/// Admittance matrix without the symmetry check. Each entry `C[n, n']` is
/// treated as an independent variable, which is what derivative checks need.
pub fn admittance_matrix_relaxed(c_f: &RMat, f_hz: f64, circuit: &CircuitParams) -> Result<CMat> {
    if !(f_hz > 0.0) {
        return Err(Error::NonPositiveFrequency(f_hz));
    }
    let n = c_f.nrows();
    if c_f.ncols() != n {
        return Err(Error::Dimension {
            context: "admittance_matrix",
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", n, c_f.ncols()),
        });
    }
    let y = c_f.map(|c| circuit.branch_admittance(c, f_hz));
    let mut a = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                a[(i, i)] = (0..n).map(|m| y[(i, m)]).sum();
            } else {
                a[(i, j)] = -y[(i, j)];
            }
        }
    }
    Ok(a)
}

/// `(A + psi0 I)^{-1} (A - psi0 I)` via a linear solve.
pub fn group_scattering(a: &CMat, psi0: f64) -> Result<CMat> {
    let n = a.nrows();
    let shift = ceye(n).scale(psi0);
    solve_general(&(a + &shift), &(a - &shift), "group_scattering")
}

/// Element index sets of each group: `G_g = {p(g M~), ..., p((g+1) M~ - 1)}`.
pub fn grouping_sets(perm: &PermutationMatrix, groups: &GroupStructure) -> Vec<Vec<usize>> {
    let p = perm.column_sources();
    let mg = groups.m_per_group();
    (0..groups.n_groups())
        .map(|g| p[g * mg..(g + 1) * mg].to_vec())
        .collect()
}

pub fn block_diagonal(blocks: &[CMat]) -> Result<CMat> {
    let m: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(m, m);
    let mut off = 0;
    for b in blocks {
        if b.nrows() != b.ncols() {
            return Err(Error::Dimension {
                context: "block_diagonal",
                expected: "square blocks".into(),
                got: format!("{}x{}", b.nrows(), b.ncols()),
            });
        }
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    Ok(out)
}

/// `Q blockdiag(Phi_g) Q^T` for a permutation `Q`.
pub fn assemble_response(blocks: &[CMat], perm: &PermutationMatrix) -> Result<CMat> {
    let bd = block_diagonal(blocks)?;
    let m = bd.nrows();
    if perm.len() != m {
        return Err(Error::Dimension {
            context: "assemble_response",
            expected: format!("permutation of size {m}"),
            got: format!("{}", perm.len()),
        });
    }
    let p = perm.column_sources();
    let mut out = CMat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            out[(p[i], p[j])] = bd[(i, j)];
        }
    }
    Ok(out)
}

/// `Q blockdiag(Phi_g) Q^T` for an arbitrary real `Q` (continuous relaxation).
pub fn assemble_response_dense(blocks: &[CMat], q: &RMat) -> Result<CMat> {
    let bd = block_diagonal(blocks)?;
    if q.nrows() != bd.nrows() || q.ncols() != bd.nrows() {
        return Err(Error::Dimension {
            context: "assemble_response_dense",
            expected: format!("{0}x{0}", bd.nrows()),
            got: format!("{}x{}", q.nrows(), q.ncols()),
        });
    }
    let qc = crate::linalg::to_complex(q);
    Ok(&qc * bd * qc.transpose())
}
