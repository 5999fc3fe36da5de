//! Per-sample random streams.
//!
//! Every Monte Carlo sample draws from its own ChaCha8 stream selected by
//! `(seed, sample index)`, so results do not depend on how samples are
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SampleRng = ChaCha8Rng;

pub fn sample_stream(seed: u64, index: u64) -> SampleRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
