//! Counter-based random streams keyed by `(seed, index, purpose)`.
//!
//! Every path, bootstrap replicate or sampled check gets its own ChaCha
//! stream, so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Jumps = 1,
    Bootstrap = 2,
    SpotCheck = 3,
    InitialLaw = 4,
    Reference = 5,
}

pub fn stream(seed: u64, index: u64, purpose: Purpose) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(b"storelab");
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
