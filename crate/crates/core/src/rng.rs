//! Seeded random streams.
//!
//! Every randomized operation draws from ChaCha8 (`rand_chacha`), keyed by
//! `seed_from_u64(seed)` and a fixed per-purpose stream id, so the angle
//! perturbation and the sinogram noise of one experiment seed are independent
//! yet each reproducible on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose-specific stream ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    AnglePerturbation = 1,
    SinogramNoise = 2,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
