//! Reproducible random streams.
//!
//! Every replicate owns an [`RngStream`] keyed by `(seed, stream)`. The
//! generator is ChaCha8, which is counter based: the 64-bit stream id selects
//! an independent keystream, so replicate streams never overlap and results do
//! not depend on how replicates are scheduled across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Name recorded in run metadata.
pub const GENERATOR: &str = "ChaCha8 (rand_chacha 0.9), 64-bit stream id = domain << 48 | replicate";

const REPLICATE_BITS: u32 = 48;
const REPLICATE_MASK: u64 = (1 << REPLICATE_BITS) - 1;
const MIN_UNIFORM: f64 = 1.0 / 18_446_744_073_709_551_616.0; // 2^-64

pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
    clamps: u64,
}

impl RngStream {
    /// Stream `stream` of the family keyed by `seed`. The replicate index
    /// occupies the low 48 bits; [`fork`](Self::fork) uses the high 16.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            seed,
            stream,
            rng,
            clamps: 0,
        }
    }

    /// An independent stream for the same replicate, tagged by `domain` (1..=65535).
    pub fn fork(&self, domain: u16) -> Self {
        let replicate = self.stream & REPLICATE_MASK;
        Self::new(self.seed, ((domain as u64) << REPLICATE_BITS) | replicate)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of times a uniform was clamped to `2^-64` before taking its log.
    pub fn clamp_count(&self) -> u64 {
        self.clamps
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// `ln U` for `U` uniform on `[0, 1)`, guarded as `ln(max(U, 2^-64))`.
    #[inline]
    pub fn ln_uniform(&mut self) -> f64 {
        let u = self.uniform();
        if u < MIN_UNIFORM {
            self.clamps += 1;
            MIN_UNIFORM.ln()
        } else {
            u.ln()
        }
    }

    /// Standard exponential variate.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -self.ln_uniform()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// `+1.0` or `-1.0` from a single dedicated bit.
    #[inline]
    pub fn sign(&mut self) -> f64 {
        if self.rng.next_u32() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl std::fmt::Debug for RngStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RngStream")
            .field("seed", &self.seed)
            .field("stream", &self.stream)
            .field("clamps", &self.clamps)
            .finish()
    }
}
