//! Seeded pseudo-random streams.
//!
//! Every consumer of randomness gets its own [`Stream`] derived from
//! `(master seed, entity index, purpose tag)`, so changing how one node
//! draws (or adding nodes) never perturbs another node's draws. Streams use
//! the splitmix64 generator: tiny state, fully deterministic, good enough
//! statistics for traffic phases and channel picks.

/// Purpose tags separating the per-node substreams.
pub mod purpose {
    pub const TRAFFIC: u64 = 0x01;
    pub const CHANNEL: u64 = 0x02;
    pub const PLACEMENT: u64 = 0x03;
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic random stream (splitmix64).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Derives an independent substream for `(master, entity, purpose)`.
    pub fn derive(master: u64, entity: u64, purpose: u64) -> Self {
        let s = mix(master.wrapping_add(GAMMA))
            ^ mix(entity
                .wrapping_mul(GAMMA)
                .wrapping_add(0x5851_F42D_4C95_7F2D))
            ^ mix(purpose.wrapping_add(0x1405_7B7E_F767_814F));
        Self { state: s }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        // 53 top bits -> [0, 1) on the f64 lattice.
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`. `n` must be non-zero.
    pub fn pick(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Exponential draw with the given mean (inverse CDF).
    pub fn next_exp(&mut self, mean: f64) -> f64 {
        let u = self.next_f64();
        -mean * libm::log(1.0 - u)
    }
}
