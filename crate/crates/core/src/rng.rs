//! Minimal deterministic pseudo-random generator.
//!
//! A fixed 64-bit linear congruential generator (Knuth's MMIX constants) so
//! that perturbed meshes and sampled test data are bit-identical across
//! platforms and runs. Not suitable for anything cryptographic.

#[derive(Clone, Debug)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub fn new(seed: u64) -> Self {
        let mut rng = Lcg64 {
            state: seed ^ 0x9E37_79B9_7F4A_7C15,
        };
        rng.next_u64(); // decorrelate small seeds
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        self.state
    }

    /// Uniform in [0, 1), using the top 53 bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [-1, 1).
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_unit() - 1.0
    }
}
