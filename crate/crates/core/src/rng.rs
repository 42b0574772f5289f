//! Seeded random streams.
//!
//! Every consumer of randomness derives its own stream from the run seed plus
//! a purpose tag, so toggling one component never shifts another's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Batches = 2,
    Dropout = 3,
    RDropPass = 4,
    MixPartners = 5,
    MixDropout = 6,
    LossEval = 7,
    BackRetrieval = 8,
    ReverseModel = 9,
    Synthetic = 10,
    Subsample = 11,
}

pub fn derive_seed(seed: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let mut h = splitmix(seed ^ 0x5353_564D_5200_0000);
    h = splitmix(h ^ stream as u64);
    h = splitmix(h ^ a);
    splitmix(h ^ b.rotate_left(17))
}

pub fn stream(seed: u64, stream: Stream, a: u64, b: u64) -> Rng {
    seeded(derive_seed(seed, stream, a, b))
}
