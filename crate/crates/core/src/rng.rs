//! Seeded random streams.
//!
//! A master seed fans out into named, independent ChaCha streams so that
//! toggling one consumer (say sensor noise) never shifts the draws seen by
//! another (spawns). Every stream can be captured and restored exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named random streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Track = 1,
    Spawn = 2,
    Policy = 3,
    Sensors = 4,
    Update = 5,
    Init = 6,
    Eval = 7,
}

/// Deterministic stream for `(master_seed, stream, instance)`.
pub fn stream(master_seed: u64, which: Stream, instance: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((which as u64) << 32) | instance);
    rng
}

/// Exact position of a ChaCha stream: seed, stream id and word offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub const ENCODED_LEN: usize = 32 + 8 + 16;

    pub fn capture(rng: &Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }

    pub fn to_bytes(&self) -> [u8; Self::ENCODED_LEN] {
        let mut out = [0u8; Self::ENCODED_LEN];
        out[..32].copy_from_slice(&self.seed);
        out[32..40].copy_from_slice(&self.stream.to_le_bytes());
        out[40..].copy_from_slice(&self.word_pos.to_le_bytes());
        out
    }

    pub fn from_bytes(b: &[u8; Self::ENCODED_LEN]) -> Self {
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&b[..32]);
        Self {
            seed,
            stream: u64::from_le_bytes(b[32..40].try_into().unwrap()),
            word_pos: u128::from_le_bytes(b[40..].try_into().unwrap()),
        }
    }
}
