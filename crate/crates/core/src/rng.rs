//! Seeded, stream-splittable randomness.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator
//! addressed by a `(seed, stream)` pair. ChaCha is counter based, so a
//! stream can be opened directly from its index and parallel work items
//! never share generator state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix64(seed ^ mix64(label))
}

/// Opens stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One Bernoulli(p) draw. `p = 0` never succeeds and `p = 1` always does.
#[inline]
pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Number of successes in `n` Bernoulli(p) draws.
#[inline]
pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u32, p: f64) -> u32 {
    (0..n).map(|_| bernoulli(rng, p) as u32).sum()
}

/// Approximately standard normal draw from the Irwin-Hall sum of twelve
/// uniforms. Mean 0 and variance 1 exactly; uses no transcendental
/// functions so results are identical on every platform.
pub fn irwin_hall_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0
}
