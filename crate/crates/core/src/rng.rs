//! Seeded, splittable randomness.
//!
//! All randomness in the crate flows through SplitMix64 so that any
//! language can reproduce a run given the master seed.  The generator is
//! the public-domain reference: state advances by 0x9E3779B97F4A7C15 and
//! the output mix is the Stafford "variant 13" finalizer.  Streams are
//! split by hashing labels/indices into fresh states, never by sharing a
//! sequence.

/// Advance `state` and return the next SplitMix64 output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One-shot mix of two words into a fresh seed.
pub fn mix(seed: u64, word: u64) -> u64 {
    let mut s = seed ^ word.wrapping_mul(0xA24B_AED4_963E_E407);
    splitmix64(&mut s)
}

/// Per-trial seed: trial `index` under master seed `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    mix(master, index)
}

/// Per-site seed: fold the site's integer coordinates into `seed`.
pub fn site_seed(seed: u64, coords: &[i64]) -> u64 {
    let mut s = seed;
    for &c in coords {
        s = mix(s, c as u64);
    }
    s
}

/// Deterministic stream of draws from a single SplitMix64 state.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by rejection (exact, unbiased).
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn next_range(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi);
        lo + self.next_below((hi - lo + 1) as u64) as i64
    }
}
