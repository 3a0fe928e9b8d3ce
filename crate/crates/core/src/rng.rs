//! Seeded random sub-streams.
//!
//! Every random quantity is drawn from ChaCha8 seeded with the experiment
//! seed, on a stream id that names its purpose. Independent consumers never
//! share a stream, so changing how many draws one of them makes leaves the
//! others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Initial shared dictionary.
    InitDictionary,
    /// Shared sign reference for atoms.
    ReferenceDirection,
    /// Power-method start vector for one atom update, keyed by (iteration, atom).
    PowerInit { iteration: usize, atom: usize },
    /// Additive image noise.
    Noise,
    /// Synthetic training data.
    Synthetic,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::InitDictionary => 1,
            Stream::ReferenceDirection => 2,
            Stream::PowerInit { iteration, atom } => {
                (3u64 << 56)
                    | ((iteration as u64 & 0x0fff_ffff) << 28)
                    | (atom as u64 & 0x0fff_ffff)
            }
            Stream::Noise => 4,
            Stream::Synthetic => 5,
        }
    }
}

/// Returns the generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
