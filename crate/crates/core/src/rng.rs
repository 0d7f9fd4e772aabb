//! Counter-style random substreams.
//!
//! Every random draw in a run comes from a ChaCha stream keyed by the base
//! seed plus a tuple of tags (purpose, agent, iteration, ...). Results never
//! depend on the order in which streams are consumed.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub mod tag {
    pub const GEOMETRY: u64 = 1;
    pub const DIRECT: u64 = 2;
    pub const BS_RIS: u64 = 3;
    pub const RIS_UE: u64 = 4;
    pub const CSI_NOISE: u64 = 5;
    pub const INIT_PRECODER: u64 = 6;
    pub const INIT_CAPACITANCE: u64 = 7;
    pub const INIT_PERMUTATION: u64 = 8;
    pub const ADAPTIVE_GRAPH: u64 = 9;
    pub const REALIZATION: u64 = 10;
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, tags...)`.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha20Rng {
    let stream = tags
        .iter()
        .fold(0x5EED_u64, |acc, &t| splitmix(acc ^ splitmix(t)));
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derived seed for a child run (e.g. one channel realization).
pub fn child_seed(seed: u64, tags: &[u64]) -> u64 {
    substream(seed, tags).random()
}

/// Draw from CN(0, variance).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}
