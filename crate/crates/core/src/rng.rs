//! Seeded counter-based random number generation.
//!
//! Every randomized routine in this crate draws from [`Rng`], a SplitMix64
//! generator: the state is a 64-bit counter advanced by a fixed odd constant
//! and each output is an avalanche mix of the counter. The generator is fully
//! specified here so fixtures reproduce bit-for-bit across platforms and
//! bindings, independent of any language default.
//!
//! Sub-streams are derived with [`Rng::split`], which mixes a caller-chosen
//! tag into the current counter. Deriving the same tag twice yields the same
//! stream; distinct tags yield statistically independent streams.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 stream. Copy is cheap; clones advance independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rng {
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { counter: seed }
    }

    /// Derive an independent sub-stream identified by `tag`.
    ///
    /// The child seed is `mix64(counter ^ mix64(tag))`, so the split depends
    /// on the parent position but does not advance the parent.
    pub fn split(&self, tag: u64) -> Rng {
        Rng::new(mix64(self.counter ^ mix64(tag)))
    }

    /// Current counter, usable as a derived seed for another stream.
    pub fn state(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(GOLDEN_GAMMA);
        mix64(self.counter)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Rejection sampling over the top bits keeps the draw unbiased.
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % n) as usize;
            }
        }
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard exponential variate (inverse CDF).
    pub fn next_exp(&mut self) -> f64 {
        let u = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        -u.ln()
    }

    /// Sample an index from a nonnegative weight vector summing to ~1.
    ///
    /// Falls back to the last positive-weight index on accumulated rounding.
    pub fn next_categorical(&mut self, weights: &[f64]) -> usize {
        debug_assert!(!weights.is_empty());
        let u = self.next_f64();
        let mut acc = 0.0;
        let mut last_pos = 0;
        for (k, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                last_pos = k;
            }
            acc += w;
            if u < acc {
                return k;
            }
        }
        last_pos
    }

    /// Random point on the probability simplex of dimension `n` (Dirichlet(1)).
    pub fn next_simplex(&mut self, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| self.next_exp()).collect();
        let s: f64 = v.iter().sum();
        for x in &mut v {
            *x /= s;
        }
        v
    }
}
