//! Seeded random streams.
//!
//! Every random quantity in the crate comes from xoshiro256** seeded through
//! SplitMix64 (`Xoshiro256StarStar::seed_from_u64`). Independent streams for
//! one seed are obtained with the generator's jump function: stream `i` is the
//! base generator advanced by `i` jumps (2^128 steps each). Standard normals use
//! the trigonometric Box-Muller transform. The exact recipe is written up in
//! `docs/rng.md`.

use std::f64::consts::TAU;

use rand::RngCore;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type StreamRng = Xoshiro256StarStar;

/// Named stream ids. Stream 0 is the plain seeded generator.
pub mod stream {
    pub const BUFFER_WEIGHTS: u64 = 0;
    pub const CLASS_PARTITION: u64 = 1;
    pub const BLURRY_REASSIGN: u64 = 2;
    pub const TASK_SHUFFLE: u64 = 3;
    pub const SYNTHETIC_MEANS: u64 = 4;
    pub const SYNTHETIC_SAMPLES: u64 = 5;
}

pub fn substream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    for _ in 0..stream_id {
        rng.jump();
    }
    rng
}

/// Uniform double in `[0, 1)` from the top 53 bits of one draw.
#[inline]
pub fn uniform01<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal sampler producing Box-Muller pairs.
///
/// Each pair consumes two uniforms `u1 = 1 - U`, `u2 = U'` and yields
/// `sqrt(-2 ln u1) cos(2π u2)` followed by `sqrt(-2 ln u1) sin(2π u2)`.
pub struct BoxMuller<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: RngCore> BoxMuller<R> {
    pub fn new(rng: R) -> Self {
        BoxMuller { rng, spare: None }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - uniform01(&mut self.rng);
        let u2 = uniform01(&mut self.rng);
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.next();
        }
    }
}
