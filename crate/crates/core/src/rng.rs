//! Seed derivation. Each consumer gets its own ChaCha stream, so a run's
//! randomness is a pure function of `(seed, epoch, batch)` and nothing needs
//! to be saved in a checkpoint to resume it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const INIT: u64 = 0;
const SPLIT: u64 = 1;
const EPOCH: u64 = 2;
const NOISE: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn init(seed: u64) -> ChaCha8Rng {
    stream(seed, INIT)
}

pub fn split(seed: u64) -> ChaCha8Rng {
    stream(seed, SPLIT)
}

pub fn epoch(seed: u64, epoch: usize) -> ChaCha8Rng {
    stream(seed ^ epoch as u64, EPOCH)
}

pub fn noise(seed: u64, epoch: usize, batch: usize) -> ChaCha8Rng {
    stream(seed ^ epoch as u64, NOISE | (batch as u64) << 8)
}
