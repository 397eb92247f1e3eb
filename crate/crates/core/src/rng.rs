//! Counter-based random stream derivation.
//!
//! Stability contract: the stream for `(master_seed, replica, purpose)` is a ChaCha8
//! generator keyed by `master_seed` (little endian, bytes 0..8), the 64-bit FNV-1a hash
//! of `purpose` (bytes 8..16) and the ASCII tag `mdplab\0\0` (bytes 16..24, rest zero),
//! with ChaCha stream number `replica`. Changing any of these breaks reproducibility of
//! stored results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn stream(master_seed: u64, replica: u64, purpose: &str) -> Stream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a64(purpose.as_bytes()).to_le_bytes());
    key[16..24].copy_from_slice(b"mdplab\0\0");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replica);
    rng
}
