//! Simulator and decentralized optimizer for cell-free MIMO OFDM networks
//! assisted by shared beyond-diagonal reconfigurable intelligent surfaces.

pub mod capacitance;
pub mod channel;
pub mod cli;
pub mod config;
pub mod consensus;
pub mod csd_sca;
pub mod error;
pub mod linalg;
pub mod lsap;
pub mod permutation;
pub mod physics;
pub mod precoder;
pub mod rate;
pub mod rng;
pub mod tracking;

pub use error::{Error, Result};
