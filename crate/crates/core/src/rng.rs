//! Seed plumbing. Every random stream in the crate is a ChaCha8 generator
//! seeded from a trial seed and a stream label.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams drawn from one trial seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    ClusterCenters,
    ClusterCells,
    Uniform,
}

impl Stream {
    fn salt(self) -> u64 {
        match self {
            Stream::ClusterCenters => 0x636c_7573_7465_7273,
            Stream::ClusterCells => 0x6365_6c6c_7300_0001,
            Stream::Uniform => 0x756e_6966_6f72_6d00,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    splitmix64(seed ^ splitmix64(stream.salt()))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    rng_from_seed(derive_seed(seed, stream))
}
