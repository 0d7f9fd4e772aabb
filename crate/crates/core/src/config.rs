//! Scenario files: every physical quantity carries its unit in the field
//! name. Loading validates the whole scenario and reports the offending
//! field.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{subcarrier_frequencies, Dims, Layout, PathlossModel, Position};
use crate::consensus::Topology;
use crate::error::{Error, Result};
use crate::physics::{Architecture, CircuitParams, GroupStructure};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Whether stations exchange pricing information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cooperation {
    Coop,
    PiZero,
}

impl Cooperation {
    pub fn is_cooperative(&self) -> bool {
        matches!(self, Cooperation::Coop)
    }
}

impl fmt::Display for Cooperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cooperation::Coop => "coop",
            Cooperation::PiZero => "pi_zero",
        })
    }
}

impl FromStr for Cooperation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coop" => Ok(Cooperation::Coop),
            "pi_zero" => Ok(Cooperation::PiZero),
            other => Err(Error::config(
                "mode",
                format!("unknown mode '{other}' (expected coop or pi_zero)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub stations: usize,
    pub users: usize,
    pub surfaces: usize,
    pub elements: usize,
    /// Group count of the GC and DGC architectures.
    pub groups: usize,
    pub subcarriers: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub streams: usize,
    pub fc_hz: f64,
    pub bandwidth_hz: f64,
    pub p_max_dbm: f64,
    pub noise_dbm: f64,
    pub csi_error_delta: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            stations: 4,
            users: 4,
            surfaces: 2,
            elements: 64,
            groups: 4,
            subcarriers: 32,
            tx_antennas: 2,
            rx_antennas: 2,
            streams: 2,
            fc_hz: 2.4e9,
            bandwidth_hz: 300e6,
            p_max_dbm: 35.0,
            noise_dbm: -80.0,
            csi_error_delta: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitSection {
    pub r0_ohm: f64,
    pub l1_nh: f64,
    pub l2_nh: f64,
    pub psi0_s: f64,
    pub c_min_pf: f64,
    pub c_max_pf: f64,
}

impl Default for CircuitSection {
    fn default() -> Self {
        CircuitSection {
            r0_ohm: 1.0,
            l1_nh: 2.5,
            l2_nh: 0.7,
            psi0_s: 1.0 / 50.0,
            c_min_pf: 0.2,
            c_max_pf: 3.0,
        }
    }
}

impl CircuitSection {
    pub fn to_params(&self) -> CircuitParams {
        CircuitParams {
            r0_ohm: self.r0_ohm,
            l1_h: self.l1_nh * 1e-9,
            l2_h: self.l2_nh * 1e-9,
            psi0_s: self.psi0_s,
            c_min_f: self.c_min_pf * 1e-12,
            c_max_f: self.c_max_pf * 1e-12,
        }
    }
}

/// Node placement; omitted position lists follow [`Layout::standard`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bs_positions_m: Option<Vec<Position>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ris_positions_m: Option<Vec<Position>>,
    pub cluster_centers_m: Vec<[f64; 2]>,
    pub cluster_radius_m: f64,
    pub ue_height_m: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let std = Layout::standard(0, 0);
        GeometrySection {
            bs_positions_m: None,
            ris_positions_m: None,
            cluster_centers_m: std.cluster_centers,
            cluster_radius_m: std.cluster_radius_m,
            ue_height_m: std.ue_height_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathlossSection {
    pub pl0_db: f64,
    pub d0_m: f64,
    pub exp_bs_ue: f64,
    pub exp_bs_ris: f64,
    pub exp_ris_ue: f64,
}

impl Default for PathlossSection {
    fn default() -> Self {
        let p = PathlossModel::default();
        PathlossSection {
            pl0_db: p.pl0_db,
            d0_m: p.d0_m,
            exp_bs_ue: p.exp_bs_ue,
            exp_bs_ris: p.exp_bs_ris,
            exp_ris_ue: p.exp_ris_ue,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    /// `alpha^t = (t + 2)^-alpha_exponent`.
    pub alpha_exponent: f64,
    /// `rho^t = (t + 2)^-rho_exponent` for `t >= 1`; `rho^0 = 1`.
    pub rho_exponent: f64,
    pub tau_fc: f64,
    pub tau_gc: f64,
    pub tau_dgc: f64,
    pub tau_d: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            alpha_exponent: 0.61,
            rho_exponent: 0.6,
            tau_fc: 1e-2,
            tau_gc: 4e-2,
            tau_dgc: 1e-2,
            tau_d: 5e-2,
            epsilon: 1e-3,
            max_iterations: 100,
        }
    }
}

impl ScheduleSection {
    pub fn tau(&self, arch: Architecture) -> f64 {
        match arch {
            Architecture::FullyConnected => self.tau_fc,
            Architecture::GroupConnected => self.tau_gc,
            Architecture::DynamicGroupConnected => self.tau_dgc,
            Architecture::Diagonal => self.tau_d,
        }
    }

    /// `(alpha^t, rho^t)`.
    pub fn step_sizes(&self, t: usize) -> (f64, f64) {
        let base = t as f64 + 2.0;
        let alpha = base.powf(-self.alpha_exponent);
        let rho = if t == 0 { 1.0 } else { base.powf(-self.rho_exponent) };
        (alpha, rho)
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho_exponent > 0.0 && self.rho_exponent <= 1.0) {
            return Err(Error::config("schedule.rho_exponent", "must lie in (0, 1]"));
        }
        if !(self.alpha_exponent > self.rho_exponent && self.alpha_exponent <= 1.0) {
            return Err(Error::config(
                "schedule.alpha_exponent",
                "must lie in (rho_exponent, 1] so that alpha/rho vanishes",
            ));
        }
        for (name, v) in [
            ("schedule.tau_fc", self.tau_fc),
            ("schedule.tau_gc", self.tau_gc),
            ("schedule.tau_dgc", self.tau_dgc),
            ("schedule.tau_d", self.tau_d),
            ("schedule.epsilon", self.epsilon),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(name, "must be > 0"));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::config("schedule.max_iterations", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub topology: Topology,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            topology: Topology::Complete,
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub seed: u64,
    pub realizations: usize,
    pub architecture: Architecture,
    pub mode: Cooperation,
    pub system: SystemSection,
    pub circuit: CircuitSection,
    pub geometry: GeometrySection,
    pub pathloss: PathlossSection,
    pub schedule: ScheduleSection,
    pub network: NetworkSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            seed: 1,
            realizations: 100,
            architecture: Architecture::DynamicGroupConnected,
            mode: Cooperation::Coop,
            system: SystemSection::default(),
            circuit: CircuitSection::default(),
            geometry: GeometrySection::default(),
            pathloss: PathlossSection::default(),
            schedule: ScheduleSection::default(),
            network: NetworkSection::default(),
        }
    }
}

impl Scenario {
    /// Full-size setting: 4 stations, 4 users, two 64-element surfaces
    /// with 4 groups, 32 sub-carriers, 100 realizations.
    pub fn full() -> Self {
        Scenario::default()
    }

    /// Laptop-scale setting: 2 stations, 2 users, one 8-element surface
    /// with 2 groups, 4 sub-carriers, 10 realizations.
    pub fn desk() -> Self {
        let mut s = Scenario::default();
        s.realizations = 10;
        s.system.stations = 2;
        s.system.users = 2;
        s.system.surfaces = 1;
        s.system.elements = 8;
        s.system.groups = 2;
        s.system.subcarriers = 4;
        s
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Scenario::full()),
            "desk" => Ok(Scenario::desk()),
            other => Err(Error::config(
                "preset",
                format!("unknown preset '{other}' (expected full or desk)"),
            )),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| {
            Error::config(
                "scenario",
                e.to_string().lines().collect::<Vec<_>>().join(" "),
            )
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn dims(&self) -> Dims {
        let s = &self.system;
        Dims {
            stations: s.stations,
            users: s.users,
            surfaces: s.surfaces,
            subcarriers: s.subcarriers,
            elements: s.elements,
            tx_antennas: s.tx_antennas,
            rx_antennas: s.rx_antennas,
            streams: s.streams,
        }
    }

    pub fn group_structure(&self) -> Result<GroupStructure> {
        self.architecture
            .group_structure(self.system.elements, self.system.groups)
    }

    pub fn layout(&self) -> Layout {
        let std = Layout::standard(self.system.stations, self.system.surfaces);
        Layout {
            bs: self.geometry.bs_positions_m.clone().unwrap_or(std.bs),
            ris: self.geometry.ris_positions_m.clone().unwrap_or(std.ris),
            cluster_centers: self.geometry.cluster_centers_m.clone(),
            cluster_radius_m: self.geometry.cluster_radius_m,
            ue_height_m: self.geometry.ue_height_m,
        }
    }

    pub fn pathloss_model(&self) -> PathlossModel {
        let p = &self.pathloss;
        PathlossModel {
            pl0_db: p.pl0_db,
            d0_m: p.d0_m,
            exp_bs_ue: p.exp_bs_ue,
            exp_bs_ris: p.exp_bs_ris,
            exp_ris_ue: p.exp_ris_ue,
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        subcarrier_frequencies(self.system.fc_hz, self.system.bandwidth_hz, self.system.subcarriers)
    }

    pub fn p_max_w(&self) -> f64 {
        dbm_to_watts(self.system.p_max_dbm)
    }

    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.system.noise_dbm)
    }

    pub fn tau(&self) -> f64 {
        self.schedule.tau(self.architecture)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        for (name, v) in [
            ("system.stations", s.stations),
            ("system.users", s.users),
            ("system.surfaces", s.surfaces),
            ("system.elements", s.elements),
            ("system.subcarriers", s.subcarriers),
            ("system.tx_antennas", s.tx_antennas),
            ("system.rx_antennas", s.rx_antennas),
            ("system.streams", s.streams),
            ("realizations", self.realizations),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if matches!(
            self.architecture,
            Architecture::GroupConnected | Architecture::DynamicGroupConnected
        ) || s.groups != 0
        {
            if s.groups == 0 || s.elements % s.groups != 0 {
                return Err(Error::config(
                    "system.groups",
                    format!("elements = {} is not divisible by groups = {}", s.elements, s.groups),
                ));
            }
        }
        self.group_structure()?;
        if s.streams > s.tx_antennas.min(s.rx_antennas) {
            return Err(Error::config(
                "system.streams",
                "cannot exceed min(tx_antennas, rx_antennas)",
            ));
        }
        if !(s.fc_hz > 0.0) {
            return Err(Error::config("system.fc_hz", "must be > 0"));
        }
        if !(s.bandwidth_hz > 0.0 && s.bandwidth_hz < 2.0 * s.fc_hz) {
            return Err(Error::config(
                "system.bandwidth_hz",
                "must be > 0 and keep every sub-carrier frequency positive",
            ));
        }
        if !s.p_max_dbm.is_finite() {
            return Err(Error::config("system.p_max_dbm", "must be finite"));
        }
        if !s.noise_dbm.is_finite() {
            return Err(Error::config("system.noise_dbm", "must be finite"));
        }
        if !(s.csi_error_delta >= 0.0) {
            return Err(Error::config("system.csi_error_delta", "must be >= 0"));
        }
        self.circuit.to_params().validate()?;
        self.pathloss_model().validate()?;
        self.layout().validate(&self.dims())?;
        self.schedule.validate()?;
        if self.network.topology == Topology::Adaptive && s.users < s.stations {
            return Err(Error::config(
                "network.topology",
                format!("adaptive weights need users >= stations ({} < {})", s.users, s.stations),
            ));
        }
        Ok(())
    }
}
