//! Deterministic random streams.
//!
//! Every trial gets its own ChaCha8 stream keyed by the master seed and
//! selected by the trial index, so results do not depend on which worker ran
//! a trial or in what order. Within a trial draws are consumed in a fixed
//! order: pair selection, then the row strategy, then the column strategy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream reserved for generating the shared initial states.
pub const INIT_STREAM: u64 = u64::MAX;

/// Stream reserved for the calibration sampler in the analysis tools.
pub const AUX_STREAM: u64 = u64::MAX - 1;

pub fn stream(master_seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

pub fn trial_stream(master_seed: u64, trial: u64) -> StreamRng {
    stream(master_seed, trial)
}

pub fn init_stream(master_seed: u64) -> StreamRng {
    stream(master_seed, INIT_STREAM)
}
