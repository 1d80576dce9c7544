//! Counter-addressed random substreams.
//!
//! Every random draw in a simulation is addressed by `(particle, step,
//! purpose)`. The address selects a ChaCha8 stream (one per particle) and a
//! word offset inside it, so a draw never depends on which worker produced
//! it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a substream is used for. Each purpose owns a disjoint 2^32-word
/// window inside a `(particle, step)` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Purpose {
    Initial = 0,
    Increment = 1,
    Bridge = 2,
    Probe = 3,
    Subsample = 4,
}

const PURPOSE_BITS: u32 = 32;
const STEP_SHIFT: u32 = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn rng(&self, particle: u64, step: u64, purpose: Purpose) -> ChaCha8Rng {
        debug_assert!(step < (1u64 << 32));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(particle);
        rng.set_word_pos(word_offset(step, purpose));
        rng
    }

    /// A single global stream (not tied to a particle), e.g. for subsampling.
    pub fn global(&self, purpose: Purpose) -> ChaCha8Rng {
        self.rng(u64::MAX, 0, purpose)
    }

    pub fn checkpoint(&self, step: u64, purpose: Purpose) -> RngCheckpoint {
        RngCheckpoint {
            seed: self.seed,
            step,
            purpose,
            word_offset: word_offset(step, purpose).to_string(),
        }
    }
}

fn word_offset(step: u64, purpose: Purpose) -> u128 {
    ((step as u128) << STEP_SHIFT) | ((purpose as u128) << PURPOSE_BITS)
}

/// Enough to regenerate every draw of one step: seed plus the word offset
/// within each particle's stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngCheckpoint {
    pub seed: u64,
    pub step: u64,
    pub purpose: Purpose,
    pub word_offset: String,
}
