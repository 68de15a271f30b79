//! Seeded, splittable randomness.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose 256-bit key
//! is the tuple `(master seed, trial, vertex, round)`. The key map is injective,
//! so two distinct stream paths never share a keystream, and any stream can be
//! regenerated in isolation (for a worker pool or for pinning one round while
//! the others vary).
//!
//! Rounds in which every vertex of a layer makes exactly one draw use a slot
//! stream instead: vertex `i` owns the `i`-th 64-bit word of the keystream at
//! key `(master seed, trial, SLOT_STREAM, round)`. Slots are disjoint, so the
//! draws are as independent as separate streams, and reading them in order
//! costs one keystream block per 32 vertices instead of one per vertex.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream key used for draws made by the data curator rather than a vertex.
pub const CURATOR_STREAM: u64 = u64::MAX;

/// Stream key of the per-round slot streams.
pub const SLOT_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomSource {
    master_seed: u64,
    trial: u64,
}

impl RandomSource {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            trial: 0,
        }
    }

    pub fn with_trial(self, trial: u64) -> Self {
        Self { trial, ..self }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    /// The generator owned by `vertex` in protocol round `round`.
    pub fn stream(&self, vertex: u64, round: u32) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.trial.to_le_bytes());
        key[16..24].copy_from_slice(&vertex.to_le_bytes());
        key[24..].copy_from_slice(&u64::from(round).to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    /// The slot stream of `round`; the `i`-th `next_u64` is slot `i`.
    pub fn slot_stream(&self, round: u32) -> ChaCha8Rng {
        self.stream(SLOT_STREAM, round)
    }

    /// Slot `index` of `round`, read by random access.
    pub fn slot(&self, round: u32, index: u64) -> u64 {
        let mut rng = self.slot_stream(round);
        rng.set_word_pos(2 * u128::from(index));
        rng.next_u64()
    }
}

/// Mixes several words into one seed (SplitMix64 finalizer chain). Used to
/// derive per-(pair, algorithm) master seeds in benchmarks.
pub fn derive_seed(words: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &w in words {
        h = splitmix(h ^ splitmix(w));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Calls `f` with every index in `0..n` that a sequence of independent
/// Bernoulli(`p`) trials marks as a success, in increasing order.
///
/// Uses geometric gap sampling, so the cost is proportional to the number of
/// successes rather than to `n`.
pub fn bernoulli_indices<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64, mut f: impl FnMut(u64)) {
    if n == 0 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        (0..n).for_each(f);
        return;
    }
    let log_q = (-p).ln_1p();
    let mut pos = 0u64;
    while pos < n {
        // 1 - U lies in (0, 1], so the log is finite.
        let u = 1.0 - rng.gen::<f64>();
        let skip = (u.ln() / log_q).floor();
        if skip >= (n - pos) as f64 {
            break;
        }
        pos += skip as u64;
        f(pos);
        pos += 1;
    }
}
