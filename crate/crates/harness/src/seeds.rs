//! Counter-based seed splitting. Each frame gets its own ChaCha stream,
//! addressed by purpose and frame index, so results do not depend on how
//! frames are distributed over workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Symbols, channel and decoder start of a frame.
    Frame = 1,
    /// Unit-variance receiver noise of a frame.
    Noise = 2,
    /// SLM phase sequences.
    Codebook = 3,
    /// Random inputs of gradient checks.
    Gradcheck = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSplitter {
    master: u64,
}

impl SeedSplitter {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn rng(&self, purpose: Purpose, index: u64) -> ChaCha8Rng {
        assert!(index < 1 << 48, "frame index out of range");
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(((purpose as u64) << 48) | index);
        rng
    }

    /// A plain 64-bit seed for components that take one.
    pub fn seed(&self, purpose: Purpose, index: u64) -> u64 {
        rand::RngCore::next_u64(&mut self.rng(purpose, index))
    }
}
