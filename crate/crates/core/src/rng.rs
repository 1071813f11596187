//! Deterministic keyed RNG streams.
//!
//! Every random draw in the pipeline comes from a ChaCha stream whose seed is
//! derived from a `(seed, tag, index)` key, so results are reproducible and
//! independent of evaluation order across items.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 step; the standard seed-expansion mixer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes two words into one; used to derive sub-seeds such as per-fold seeds.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut state = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(&mut state)
}

/// A ChaCha12 stream keyed by `(seed, tag)`.
pub fn keyed_rng(seed: u64, tag: u64) -> ChaCha12Rng {
    keyed_rng3(seed, tag, 0)
}

/// A ChaCha12 stream keyed by `(seed, tag, index)`.
pub fn keyed_rng3(seed: u64, tag: u64, index: u64) -> ChaCha12Rng {
    let mut state = mix(mix(seed, tag), index);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn keyed_streams_are_reproducible() {
        let mut a = keyed_rng3(7, 1, 3);
        let mut b = keyed_rng3(7, 1, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_keys_give_distinct_streams() {
        let mut base = keyed_rng3(7, 1, 3);
        for key in [(8, 1, 3), (7, 2, 3), (7, 1, 4)] {
            let mut other = keyed_rng3(key.0, key.1, key.2);
            let differs = (0..4).any(|_| base.next_u64() != other.next_u64());
            assert!(differs, "stream for {key:?} collides with (7,1,3)");
            base = keyed_rng3(7, 1, 3);
        }
    }

    #[test]
    fn mix_depends_on_both_words() {
        assert_ne!(mix(1, 2), mix(2, 1));
        assert_ne!(mix(0, 0), mix(0, 1));
    }
}
