//! Small, fully specified pseudo-random generator so that baseline outputs
//! and synthetic fixtures can be reproduced bit-for-bit in other languages.
//!
//! * `next_u64`: SplitMix64 (Steele, Lea & Flood), state advanced by
//!   `0x9E3779B97F4A7C15`, output mixed with the constants below.
//! * `next_f64`: top 53 bits of `next_u64` times 2^-53, in `[0, 1)`.
//! * `normal`: Box-Muller cosine branch with `u1 = 1 - next_f64()` and
//!   `u2 = next_f64()`, one draw pair per sample.
//! * `below(n)`: `floor(next_f64() * n)`.
//! * Per-key streams are seeded with `seed ^ fnv1a64(key)`.

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Independent stream for `key` (e.g. a clip id) under `seed`.
    pub fn for_key(seed: u64, key: &str) -> Self {
        Self::new(seed ^ fnv1a64(key.as_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_f64() * n as f64) as usize).min(n.saturating_sub(1))
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
