//! Seeded, counter-based random streams.
//!
//! Every stream is a ChaCha20 generator keyed from `(seed, domain)` and
//! positioned on its own 64-bit stream id, so draws for one grid point or one
//! replicate never depend on how many draws other streams made.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};

/// Recorded in every output that depends on random draws.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9.0;poisson/rand_distr-0.5.1;v1";

/// Independent families of streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Scan = 1,
    Bootstrap = 2,
    Fixture = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    let mut state = seed ^ ((domain as u64) << 56);
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// One Poisson draw; a non-positive mean yields 0.
pub fn poisson<R: rand::Rng>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    // Poisson::new only rejects non-finite means and means above ~1.8e19.
    let dist = Poisson::new(mean).expect("finite positive Poisson mean");
    dist.sample(rng) as u64
}
