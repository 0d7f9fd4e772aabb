//! Cell-free geometry, wideband Rayleigh channels and imperfect CSI.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::physics::SurfaceResponse;
use crate::rng::{complex_normal, substream, tag};

pub type Position = [f64; 3];

fn distance(a: &Position, b: &Position) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Node counts and antenna dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub stations: usize,
    pub users: usize,
    pub surfaces: usize,
    pub subcarriers: usize,
    pub elements: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub streams: usize,
}

/// Placement rules; UEs are drawn uniformly over discs around the
/// cluster centers, user `u` joining cluster `u mod clusters`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub bs: Vec<Position>,
    pub ris: Vec<Position>,
    pub cluster_centers: Vec<[f64; 2]>,
    pub cluster_radius_m: f64,
    pub ue_height_m: f64,
}

impl Layout {
    /// BSs along the x-axis every 50 m at 5 m height, surfaces at 60 m
    /// depth every 20 m from x = 65 m, two UE clusters at y = 57.5 m.
    pub fn standard(stations: usize, surfaces: usize) -> Self {
        Layout {
            bs: (0..stations).map(|b| [50.0 * b as f64, 0.0, 5.0]).collect(),
            ris: (0..surfaces).map(|r| [65.0 + 20.0 * r as f64, 60.0, 6.0]).collect(),
            cluster_centers: vec![[67.5, 57.5], [82.5, 57.5]],
            cluster_radius_m: 2.0,
            ue_height_m: 1.5,
        }
    }

    pub fn validate(&self, dims: &Dims) -> Result<()> {
        if self.bs.len() != dims.stations {
            return Err(Error::config(
                "geometry.bs_positions_m",
                format!("{} positions for {} stations", self.bs.len(), dims.stations),
            ));
        }
        if self.ris.len() != dims.surfaces {
            return Err(Error::config(
                "geometry.ris_positions_m",
                format!("{} positions for {} surfaces", self.ris.len(), dims.surfaces),
            ));
        }
        if self.cluster_centers.is_empty() {
            return Err(Error::config("geometry.cluster_centers_m", "need at least one cluster"));
        }
        if !(self.cluster_radius_m >= 0.0) {
            return Err(Error::config("geometry.cluster_radius_m", "must be >= 0"));
        }
        Ok(())
    }

    pub fn place(&self, users: usize, seed: u64) -> Result<Geometry> {
        let mut rng = substream(seed, &[tag::GEOMETRY]);
        let n_cl = self.cluster_centers.len();
        let ue = (0..users)
            .map(|u| {
                let [cx, cy] = self.cluster_centers[u % n_cl];
                let r = self.cluster_radius_m * rng.random::<f64>().sqrt();
                let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
                [cx + r * theta.cos(), cy + r * theta.sin(), self.ue_height_m]
            })
            .collect();
        Geometry::new(self.bs.clone(), self.ris.clone(), ue)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs: Vec<Position>,
    pub ris: Vec<Position>,
    pub ue: Vec<Position>,
}

impl Geometry {
    /// Rejects co-located nodes on any modeled link.
    pub fn new(bs: Vec<Position>, ris: Vec<Position>, ue: Vec<Position>) -> Result<Self> {
        let check = |a: &[Position], b: &[Position], what: &str| -> Result<()> {
            for p in a {
                for q in b {
                    if !(distance(p, q) > 0.0) {
                        return Err(Error::config("geometry", format!("{what} distance is zero")));
                    }
                }
            }
            Ok(())
        };
        check(&bs, &ue, "BS-UE")?;
        check(&bs, &ris, "BS-RIS")?;
        check(&ris, &ue, "RIS-UE")?;
        Ok(Geometry { bs, ris, ue })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossModel {
    pub pl0_db: f64,
    pub d0_m: f64,
    pub exp_bs_ue: f64,
    pub exp_bs_ris: f64,
    pub exp_ris_ue: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        PathlossModel {
            pl0_db: -30.0,
            d0_m: 1.0,
            exp_bs_ue: 3.8,
            exp_bs_ris: 2.4,
            exp_ris_ue: 2.2,
        }
    }
}

impl PathlossModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pathloss.exp_bs_ue", self.exp_bs_ue),
            ("pathloss.exp_bs_ris", self.exp_bs_ris),
            ("pathloss.exp_ris_ue", self.exp_ris_ue),
            ("pathloss.d0_m", self.d0_m),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(name, "must be > 0"));
            }
        }
        Ok(())
    }

    /// Linear power gain `PL0 (d / d0)^-exponent`.
    pub fn gain(&self, d: f64, exponent: f64) -> f64 {
        10f64.powf(self.pl0_db / 10.0) * (d / self.d0_m).powf(-exponent)
    }
}

/// `f_k = fc + (k - (K+1)/2) bw / K` for `k = 1..K`.
pub fn subcarrier_frequencies(fc_hz: f64, bw_hz: f64, k: usize) -> Vec<f64> {
    let mid = (k as f64 + 1.0) / 2.0;
    (1..=k)
        .map(|i| fc_hz + (i as f64 - mid) * bw_hz / k as f64)
        .collect()
}

/// All channel matrices of one realization (or one agent's noisy copy).
///
/// Forward maps are stored receive-dimension by transmit-dimension:
/// `direct[b][u][k]` is `Nr x Nt`, `bs_ris[b][r][k]` is `M x Nt`,
/// `ris_ue[r][u][k]` is `Nr x M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub direct: Vec<Vec<Vec<CMat>>>,
    pub bs_ris: Vec<Vec<Vec<CMat>>>,
    pub ris_ue: Vec<Vec<Vec<CMat>>>,
    /// `noise_var[u][k]` in watts.
    pub noise_var: Vec<Vec<f64>>,
}

fn draw_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    CMat::from_fn(rows, cols, |_, _| complex_normal(rng, var))
}

fn draw_link(seed: u64, link: u64, i: usize, j: usize, k: usize, rows: usize, cols: usize, var: f64) -> Vec<CMat> {
    let mut rng = substream(seed, &[link, i as u64, j as u64]);
    (0..k).map(|_| draw_matrix(&mut rng, rows, cols, var)).collect()
}

/// i.i.d. Rayleigh fading per entry and per sub-carrier.
pub fn generate_channels(
    geometry: &Geometry,
    pathloss: &PathlossModel,
    dims: &Dims,
    noise_var_w: f64,
    seed: u64,
) -> Result<ChannelSet> {
    if geometry.bs.len() != dims.stations
        || geometry.ris.len() != dims.surfaces
        || geometry.ue.len() != dims.users
    {
        return Err(Error::Dimension {
            context: "generate_channels",
            expected: format!("{} BS, {} RIS, {} UE", dims.stations, dims.surfaces, dims.users),
            got: format!(
                "{} BS, {} RIS, {} UE",
                geometry.bs.len(),
                geometry.ris.len(),
                geometry.ue.len()
            ),
        });
    }
    let k = dims.subcarriers;
    let direct = (0..dims.stations)
        .map(|b| {
            (0..dims.users)
                .map(|u| {
                    let var = pathloss.gain(distance(&geometry.bs[b], &geometry.ue[u]), pathloss.exp_bs_ue);
                    draw_link(seed, tag::DIRECT, b, u, k, dims.rx_antennas, dims.tx_antennas, var)
                })
                .collect()
        })
        .collect();
    let bs_ris = (0..dims.stations)
        .map(|b| {
            (0..dims.surfaces)
                .map(|r| {
                    let var = pathloss.gain(distance(&geometry.bs[b], &geometry.ris[r]), pathloss.exp_bs_ris);
                    draw_link(seed, tag::BS_RIS, b, r, k, dims.elements, dims.tx_antennas, var)
                })
                .collect()
        })
        .collect();
    let ris_ue = (0..dims.surfaces)
        .map(|r| {
            (0..dims.users)
                .map(|u| {
                    let var = pathloss.gain(distance(&geometry.ris[r], &geometry.ue[u]), pathloss.exp_ris_ue);
                    draw_link(seed, tag::RIS_UE, r, u, k, dims.rx_antennas, dims.elements, var)
                })
                .collect()
        })
        .collect();
    Ok(ChannelSet {
        direct,
        bs_ris,
        ris_ue,
        noise_var: vec![vec![noise_var_w; k]; dims.users],
    })
}

fn perturb_entry<R: Rng>(rng: &mut R, g: num_complex::Complex64, delta: f64) -> num_complex::Complex64 {
    g + complex_normal(rng, delta * g.norm_sqr())
}

/// `g + e` with `e ~ CN(0, delta |g|^2)` for every entry.
pub fn perturb_csi<R: Rng>(channels: &ChannelSet, delta: f64, rng: &mut R) -> ChannelSet {
    let mut out = channels.clone();
    if delta == 0.0 {
        return out;
    }
    for set in [&mut out.direct, &mut out.bs_ris, &mut out.ris_ue] {
        for row in set.iter_mut() {
            for per_k in row.iter_mut() {
                for m in per_k.iter_mut() {
                    for g in m.iter_mut() {
                        *g = perturb_entry(rng, *g, delta);
                    }
                }
            }
        }
    }
    out
}

/// Noisy sample drawn by agent `agent` at iteration `iteration`.
pub fn agent_sample(channels: &ChannelSet, delta: f64, seed: u64, agent: usize, iteration: usize) -> ChannelSet {
    let mut rng = substream(seed, &[tag::CSI_NOISE, agent as u64, iteration as u64]);
    perturb_csi(channels, delta, &mut rng)
}

/// `H~ = H + sum_r G_r Phi_r F_r` for one `(b, u, k)`.
pub fn effective_channel(
    channels: &ChannelSet,
    responses: &[SurfaceResponse],
    b: usize,
    u: usize,
    k: usize,
) -> Result<CMat> {
    let mut h = channels.direct[b][u][k].clone();
    for (r, resp) in responses.iter().enumerate() {
        let g = &channels.ris_ue[r][u][k];
        let f = &channels.bs_ris[b][r][k];
        let phi = &resp.assembled[k];
        if g.ncols() != phi.nrows() || phi.ncols() != f.nrows() {
            return Err(Error::Dimension {
                context: "effective_channel",
                expected: format!("{0}x{0} response", f.nrows()),
                got: format!("{}x{}", phi.nrows(), phi.ncols()),
            });
        }
        h += g * phi * f;
    }
    Ok(h)
}

/// Effective channels `[b][u][k]`; link `(b, ., .)` uses `responses[b]`,
/// i.e. the surface configuration held by station `b`.
pub fn effective_channels(
    channels: &ChannelSet,
    responses: &[&[SurfaceResponse]],
) -> Result<Vec<Vec<Vec<CMat>>>> {
    let users = channels.noise_var.len();
    let k = channels.noise_var.first().map_or(0, Vec::len);
    responses
        .iter()
        .enumerate()
        .map(|(b, resp)| {
            (0..users)
                .map(|u| (0..k).map(|kk| effective_channel(channels, resp, b, u, kk)).collect())
                .collect()
        })
        .collect()
}
