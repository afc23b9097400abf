//! Measurement and noise layer: fluorescence readout with Poisson photon
//! counts, Monte Carlo error bars, quasi-static noise ensembles, spin echo,
//! gate-concatenation decay and robustness scans.

mod channel;
mod experiments;
mod noise;
mod readout;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use channel::Channel;
pub use experiments::*;
pub use noise::*;
pub use readout::*;

/// Generator for stream `stream` of `seed`. Distinct streams are independent,
/// so per-trial draws do not depend on evaluation order.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Decorrelated child seed for an independent stage of one experiment.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
