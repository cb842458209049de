//! Counter-based random streams.
//!
//! Every random draw in the crate is addressed by
//! `(master_seed, domain, trial_index, draw_counter)`. The ChaCha key is
//! derived from the master seed and a domain label, the ChaCha stream id is
//! the trial index and the block counter advances with each draw. Nothing is
//! shared between trials, so a parallel run reproduces the serial one bit
//! for bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A keyed family of independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    key: [u8; 32],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamKey {
    /// Key for `master_seed` in the named domain. Distinct domains give
    /// unrelated stream families under the same master seed.
    pub fn new(master_seed: u64, domain: &str) -> Self {
        // FNV-1a over the label, folded into the splitmix state.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in domain.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        let mut state = master_seed ^ h.rotate_left(29);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        StreamKey { key }
    }

    /// Sub-family keyed additionally by `tag` (e.g. a schedule row).
    pub fn derive(&self, tag: u64) -> Self {
        let mut state = u64::from_le_bytes(self.key[..8].try_into().unwrap()) ^ tag;
        let mut key = self.key;
        for chunk in key.chunks_exact_mut(8) {
            let w = u64::from_le_bytes((&*chunk).try_into().unwrap()) ^ splitmix64(&mut state);
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        StreamKey { key }
    }

    /// The stream for one trial, positioned at draw counter zero.
    pub fn stream(&self, trial_index: u64) -> StreamRng {
        let mut inner = ChaCha8Rng::from_seed(self.key);
        inner.set_stream(trial_index);
        StreamRng { inner }
    }
}

/// One trial's random stream.
#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    /// Number of 32-bit words consumed so far.
    pub fn draw_counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform double in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (Lemire's nearly-divisionless method).
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let mut m = (self.inner.next_u64() as u128) * (n as u128);
        let mut lo = m as u64;
        if lo < n {
            let threshold = n.wrapping_neg() % n;
            while lo < threshold {
                m = (self.inner.next_u64() as u128) * (n as u128);
                lo = m as u64;
            }
        }
        (m >> 64) as u64
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for StreamRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Buffered source of i.i.d. uniform digits in `0..base`.
///
/// Digits are cut from 64-bit words holding `per_word` base-`base` digits;
/// words above the largest multiple of `base^per_word` are rejected, so
/// every digit is exactly uniform.
#[derive(Debug, Clone)]
pub struct DigitSource {
    base: u64,
    per_word: u32,
    zone: u64,
    modulus: u64,
    shift: u32,
    buf: u64,
    left: u32,
}

impl DigitSource {
    pub fn new(base: u64) -> Self {
        assert!(base >= 2, "digit base must be at least 2");
        if base.is_power_of_two() {
            let shift = base.trailing_zeros();
            DigitSource {
                base,
                per_word: 64 / shift,
                zone: u64::MAX,
                modulus: 0,
                shift,
                buf: 0,
                left: 0,
            }
        } else {
            let mut per_word = 0u32;
            let mut modulus: u64 = 1;
            while let Some(next) = modulus.checked_mul(base) {
                modulus = next;
                per_word += 1;
            }
            // Largest multiple of modulus that fits, minus one.
            let zone = (u64::MAX / modulus) * modulus - 1;
            DigitSource {
                base,
                per_word,
                zone,
                modulus,
                shift: 0,
                buf: 0,
                left: 0,
            }
        }
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    #[inline]
    pub fn next_digit(&mut self, rng: &mut StreamRng) -> u64 {
        if self.left == 0 {
            self.refill(rng);
        }
        self.left -= 1;
        if self.shift > 0 {
            let d = self.buf & (self.base - 1);
            self.buf >>= self.shift;
            d
        } else {
            let d = self.buf % self.base;
            self.buf /= self.base;
            d
        }
    }

    fn refill(&mut self, rng: &mut StreamRng) {
        loop {
            let w = rng.next_u64();
            if self.shift > 0 {
                self.buf = w;
                break;
            }
            if w <= self.zone {
                self.buf = w % self.modulus;
                break;
            }
        }
        self.left = self.per_word;
    }
}
