//! Counter-based random number generation.
//!
//! Every random draw in the crate is a pure function of
//! `(seed, substream, particle, step, slot)`. There is no generator state,
//! so results are independent of evaluation order and thread count: the
//! same configuration and seed produce bit-identical output whether the
//! particle loop runs on one thread or sixteen.

use std::f64::consts::PI;

/// Named substreams hanging off the single experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubStream {
    /// Brownian increments of the forward/backward particle system.
    ForwardNoise = 0,
    /// Draws of the initial condition η.
    InitialDraw = 1,
    /// Second initial cloud for stability probes.
    InitialAux = 2,
    /// Perturbation draws (terminal-continuity probes etc.).
    Perturbation = 3,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic 64-bit hash of a counter tuple.
#[inline]
pub fn counter_hash(seed: u64, stream: SubStream, particle: u64, step: u64, slot: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(stream as u64 + 1));
    h = splitmix64(h ^ particle.wrapping_mul(0xd6e8_feb8_6659_fd93));
    h = splitmix64(h ^ step.wrapping_mul(0xa3b1_9535_4a39_b70d));
    splitmix64(h ^ slot.wrapping_mul(0x1b03_7387_12fa_d5c9))
}

/// Uniform draw in the open interval (0, 1).
#[inline]
pub fn uniform(seed: u64, stream: SubStream, particle: u64, step: u64, slot: u64) -> f64 {
    // 53-bit mantissa, offset by half an ulp so 0 is never produced.
    ((counter_hash(seed, stream, particle, step, slot) >> 11) as f64 + 0.5)
        * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal draw via the Box-Muller transform.
///
/// Each normal consumes two counter slots (`2*slot`, `2*slot + 1`); the sine
/// branch is discarded so the mapping from counters to draws stays stateless.
#[inline]
pub fn normal(seed: u64, stream: SubStream, particle: u64, step: u64, slot: u64) -> f64 {
    let u1 = uniform(seed, stream, particle, step, 2 * slot);
    let u2 = uniform(seed, stream, particle, step, 2 * slot + 1);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Source of standard (unit-variance) noise increments for path simulation.
///
/// `standard_increment` fills `out` with the l-dimensional standard draw of
/// the given particle at the given step; simulators scale by `sqrt(h)`.
pub trait NoiseSource: Sync {
    /// Noise dimension l.
    fn dim(&self) -> usize;
    fn standard_increment(&self, particle: usize, step: usize, out: &mut [f64]);
}

/// Gaussian driver for Brownian increments, keyed by `(seed, particle, step)`.
///
/// `particle_offset`/`step_offset` re-index a view into the same stream so a
/// simulation restarted at an interior grid node (or a single extracted
/// particle) consumes exactly the increments of the original run.
#[derive(Debug, Clone)]
pub struct BrownianDriver {
    pub seed: u64,
    pub n_particles: usize,
    pub dim_noise: usize,
    particle_offset: usize,
    step_offset: usize,
}

impl BrownianDriver {
    pub fn new(seed: u64, n_particles: usize, dim_noise: usize) -> Self {
        Self {
            seed,
            n_particles,
            dim_noise,
            particle_offset: 0,
            step_offset: 0,
        }
    }

    /// View of the same stream shifted by `particle_offset` and `step_offset`.
    pub fn offset(&self, particle_offset: usize, step_offset: usize) -> Self {
        Self {
            seed: self.seed,
            n_particles: self.n_particles,
            dim_noise: self.dim_noise,
            particle_offset: self.particle_offset + particle_offset,
            step_offset: self.step_offset + step_offset,
        }
    }
}

impl NoiseSource for BrownianDriver {
    fn dim(&self) -> usize {
        self.dim_noise
    }

    fn standard_increment(&self, particle: usize, step: usize, out: &mut [f64]) {
        let p = (particle + self.particle_offset) as u64;
        let s = (step + self.step_offset) as u64;
        for (j, o) in out.iter_mut().enumerate().take(self.dim_noise) {
            *o = normal(self.seed, SubStream::ForwardNoise, p, s, j as u64);
        }
    }
}

/// Rademacher noise enumerating every sign path of a binary tree.
///
/// Particle `p` of `2^depth` takes at step `k` the sign of bit
/// `depth - 1 - k` of `p` (0 → +1, 1 → −1), so paths are enumerated in
/// lexicographic order of their sign sequences and paths sharing a prefix
/// occupy a contiguous index block.
#[derive(Debug, Clone)]
pub struct TreeNoise {
    pub depth: usize,
}

impl NoiseSource for TreeNoise {
    fn dim(&self) -> usize {
        1
    }

    fn standard_increment(&self, particle: usize, step: usize, out: &mut [f64]) {
        debug_assert!(step < self.depth);
        let bit = (particle >> (self.depth - 1 - step)) & 1;
        out[0] = if bit == 0 { 1.0 } else { -1.0 };
    }
}
