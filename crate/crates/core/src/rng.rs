//! Reproducible random streams keyed by seed, replication and replicate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of indices (e.g. scenario, replication).
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// Stream 0 is reserved for data generation; bootstrap replicate `b` uses
/// stream `b + 1`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn data_stream(seed: u64) -> ChaCha8Rng {
    stream(seed, 0)
}

pub fn replicate_stream(seed: u64, replicate: usize) -> ChaCha8Rng {
    stream(seed, replicate as u64 + 1)
}
