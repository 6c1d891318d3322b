//! Random number generation contract.
//!
//! Every simulation draws from a [`SimRng`] (ChaCha with 8 rounds, a
//! counter-based generator) seeded from a single `u64`. Within one run the
//! draws are consumed in a fixed order, which is part of the
//! reproducibility interface:
//!
//! 1. seed-graph locations, one uniform per seed vertex (when drawn from μ);
//! 2. then, per step: the newcomer location (one uniform), followed by the m
//!    target draws in edge order (each target is a location uniform followed
//!    by a within-location uniform), followed by the per-edge acceptance
//!    uniforms of the dustbin process.
//!
//! The coupled process replaces step 2 by: newcomer uniform, then for each
//! edge in order a coupling uniform, a continuous within-cell uniform and a
//! dustbin within-location uniform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn sim_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A uniform variate in `[0, 1)`.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
