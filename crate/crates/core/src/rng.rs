//! Reproducible random streams.
//!
//! Every stochastic quantity in a run is drawn from its own ChaCha8 stream.
//! The 256-bit ChaCha key is four consecutive SplitMix64 outputs, seeded
//! with `seed ^ rotl(tag, 17) ^ slot * 0x9E37_79B9_7F4A_7C15` (wrapping).
//! Streams for different slots are therefore independent of evaluation
//! order, and a slot can be regenerated from `(seed, slot)` alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies a random stream within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    EnergyProfile,
    GatingModel,
    Arrivals,
    Scores,
    RandomRouting,
    OracleInstances,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::EnergyProfile => 0x454e_4552_4759,
            Stream::GatingModel => 0x4741_5445_4d44,
            Stream::Arrivals => 0x4152_5249_5645,
            Stream::Scores => 0x5343_4f52_4553,
            Stream::RandomRouting => 0x5241_4e44_4f4d,
            Stream::OracleInstances => 0x4f52_4143_4c45,
        }
    }
}

/// One step of SplitMix64.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, stream: Stream, slot: u64) -> ChaCha8Rng {
    let mut state =
        seed ^ stream.tag().rotate_left(17) ^ slot.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
