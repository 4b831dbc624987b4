//! Counter-based random substreams.
//!
//! A [`Stream`] is a 64-bit key derived from a master seed by a path of
//! integer tags. Children are pure functions of the parent key and the tag,
//! so any part of a realization (a line, a block of points on a line, the
//! fading of one transmitter) can be regenerated independently of the order
//! in which the rest was built.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Stream {
    key: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            key: mix64(seed.wrapping_add(GOLDEN)),
        }
    }

    pub fn child(self, tag: u64) -> Self {
        Stream {
            key: mix64(self.key.rotate_left(23) ^ mix64(tag.wrapping_mul(GOLDEN).wrapping_add(1))),
        }
    }

    /// Child for a signed index (block numbers along a line).
    pub fn child_signed(self, tag: i64) -> Self {
        // zigzag so that -1 and 1 map to distinct tags
        self.child(((tag << 1) ^ (tag >> 63)) as u64)
    }

    pub fn key(self) -> u64 {
        self.key
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}
