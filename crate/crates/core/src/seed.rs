//! Seed derivation for reproducible random streams.
//!
//! Every stochastic quantity in the simulator is drawn from a ChaCha8 stream
//! whose seed is a hash of a tuple of integers (master seed, sample index,
//! iteration index, column index, ...). Any single draw can therefore be
//! replayed without replaying the draws that came before it, and parallel
//! workers never share generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams for different purposes disjoint even when the
/// remaining tuple components coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Epsilon = 1,
    ReadNoise = 2,
    WriteNoise = 3,
    InputNoise = 4,
    Split = 5,
    Sweep = 6,
    Grng = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a tuple of integers into a single 64-bit seed.
pub fn derive(stream: Stream, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(stream as u64), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng(stream: Stream, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(stream, parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_order_sensitive() {
        assert_ne!(derive(Stream::Epsilon, &[1, 2]), derive(Stream::Epsilon, &[2, 1]));
        assert_ne!(derive(Stream::Epsilon, &[1, 2]), derive(Stream::ReadNoise, &[1, 2]));
        assert_eq!(derive(Stream::Epsilon, &[1, 2]), derive(Stream::Epsilon, &[1, 2]));
    }

    #[test]
    fn streams_replay() {
        let a: Vec<u64> = rng(Stream::Grng, &[7, 3]).random_iter().take(4).collect();
        let b: Vec<u64> = rng(Stream::Grng, &[7, 3]).random_iter().take(4).collect();
        assert_eq!(a, b);
    }
}
