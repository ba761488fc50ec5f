//! Counter-based random streams.
//!
//! Every driving increment is addressed by a `(seed, path, step)` triple.
//! The seed keys a ChaCha8 generator, the path selects one of its 2^64
//! independent streams, and the step selects a fixed-width window inside
//! that stream. Each step consumes exactly [`WORDS_PER_STEP`] 32-bit words,
//! so a path can be generated sequentially or any single step regenerated
//! by seeking, with identical output. Nothing depends on which worker
//! evaluates which path.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// 32-bit words consumed per step: five `u64` draws.
pub const WORDS_PER_STEP: u128 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub path: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn new(seed: u64, path: u64, step: u64) -> Self {
        Self { seed, path, step }
    }

    /// Generator positioned at the start of this key's window.
    pub fn rng(&self) -> StepRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(self.path);
        inner.set_word_pos(self.step as u128 * WORDS_PER_STEP);
        StepRng { inner }
    }
}

/// Fixed-consumption source of uniforms and Gaussians for one path.
///
/// Consecutive calls to [`StepRng::step_draws`] walk consecutive steps.
pub struct StepRng {
    inner: ChaCha8Rng,
}

/// The five variates available to one step of a sampler.
#[derive(Debug, Clone, Copy)]
pub struct StepDraws {
    pub normals: [f64; 3],
    pub uniform: f64,
}

impl StepRng {
    /// Path stream positioned at step 0.
    pub fn for_path(seed: u64, path: u64) -> Self {
        StreamKey::new(seed, path, 0).rng()
    }

    pub fn step_draws(&mut self) -> StepDraws {
        let u1 = open_unit(self.inner.next_u64());
        let u2 = unit(self.inner.next_u64());
        let u3 = open_unit(self.inner.next_u64());
        let u4 = unit(self.inner.next_u64());
        let u5 = unit(self.inner.next_u64());
        let (n1, n2) = box_muller(u1, u2);
        let (n3, _) = box_muller(u3, u4);
        StepDraws {
            normals: [n1, n2, n3],
            uniform: u5,
        }
    }
}

/// Uniform on [0, 1) with 53 random bits.
fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on (0, 1].
fn open_unit(x: u64) -> f64 {
    1.0 - unit(x)
}

fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}
