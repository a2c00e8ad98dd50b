//! Portable seeded random streams.
//!
//! Every stream is ChaCha with 8 rounds (`ChaCha8Rng`). The 256-bit key is
//! the little-endian bytes of the `u64` seed followed by 24 zero bytes, and
//! the ChaCha stream id selects an independent sub-stream (one per loan in
//! the generator). Derived draws are defined bit-for-bit here so another
//! implementation can reproduce them:
//!
//! * `next_u64`: the raw ChaCha8 output word.
//! * `uniform`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)`: rejection sampling; draw `x = next_u64` until
//!   `x < 2^64 - (2^64 mod n)`, return `x mod n`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SeededStream {
    inner: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % n;
            }
        }
    }

    /// Geometric number of trials until first success, support `1..`,
    /// with the given mean (`>= 1`), by inversion.
    pub fn geometric(&mut self, mean: f64) -> u64 {
        if mean <= 1.0 {
            return 1;
        }
        let p = 1.0 / mean;
        let u = 1.0 - self.uniform();
        let k = (u.ln() / (1.0 - p).ln()).ceil();
        if k < 1.0 {
            1
        } else {
            k as u64
        }
    }
}
