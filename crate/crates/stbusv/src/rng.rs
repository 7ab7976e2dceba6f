//! Seeded pseudo-random number generation.
//!
//! Everything random in a run (traffic, target jitter) is drawn from
//! SplitMix64 streams. The algorithm is fixed here rather than taken from a
//! crate so that identical seeds produce identical byte streams on every
//! platform and toolchain.

/// SplitMix64 generator. One instance per independent stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, bound)` via rejection sampling. `bound` must be nonzero.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Uniform draw in the inclusive range `[lo, hi]`.
    pub fn next_range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo;
        if span == u64::MAX {
            return self.next_u64();
        }
        lo + self.next_below(span + 1)
    }

    /// Weighted index draw; at least one weight must be positive.
    pub fn next_weighted(&mut self, weights: &[u64]) -> usize {
        let total: u64 = weights.iter().sum();
        debug_assert!(total > 0);
        let mut pick = self.next_below(total);
        for (i, &w) in weights.iter().enumerate() {
            if pick < w {
                return i;
            }
            pick -= w;
        }
        unreachable!("weights sum exceeded")
    }

    /// Bernoulli draw with probability `ppm / 1_000_000`.
    pub fn next_ppm(&mut self, ppm: u32) -> bool {
        self.next_below(1_000_000) < u64::from(ppm)
    }

    pub fn next_byte(&mut self) -> u8 {
        (self.next_u64() >> 56) as u8
    }
}

/// Derives the per-port stream seed: run seed XOR port index.
pub fn port_stream_seed(run_seed: u64, port_index: usize) -> u64 {
    run_seed ^ port_index as u64
}
