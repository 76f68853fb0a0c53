//! Seedable counter-based random substreams.
//!
//! Every consumer of randomness derives a [`SeedStream`] from the root seed
//! and a path of labels (for example `ensemble/3/ue/1/delays`). Distinct
//! paths yield statistically independent sequences and the same
//! `(seed, path)` always regenerates the same values, so ensemble members
//! can run in parallel and runs with and without spatial consistency can
//! share common random numbers where their paths coincide.

use crate::{real, Real};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer; full-avalanche 64-bit mix.
#[inline]
fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[inline]
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x1_0000_0000_01B3);
    }
    hash
}

/// An independent random substream identified by a root seed and a label
/// path. Value-like: cloning and re-deriving are both cheap.
#[derive(Debug, Clone)]
pub struct SeedStream {
    key: u64,
    counter: u64,
}

impl SeedStream {
    /// Stream at the root of the derivation tree.
    pub fn root(seed: u64) -> Self {
        Self {
            key: mix64(seed ^ GOLDEN_GAMMA),
            counter: 0,
        }
    }

    /// Derives a child stream for a string label.
    pub fn derive(&self, label: &str) -> Self {
        Self {
            key: mix64(self.key ^ fnv1a64(label.as_bytes()).rotate_left(17)),
            counter: 0,
        }
    }

    /// Derives a child stream for a numeric label (ensemble member, UE
    /// index, step index, cluster index, ...).
    pub fn derive_index(&self, index: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(index.wrapping_add(GOLDEN_GAMMA))),
            counter: 0,
        }
    }

    /// Next raw 64-bit value.
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ self.counter.wrapping_mul(GOLDEN_GAMMA))
    }

    /// Uniform sample in `[0, 1)` with 53 significant bits.
    pub fn next_uniform<S: Real>(&mut self) -> S {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        real((self.next_u64() >> 11) as f64 * SCALE)
    }

    /// Uniform sample in `(0, 1]`; safe as a logarithm argument.
    pub fn next_uniform_open<S: Real>(&mut self) -> S {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        real(((self.next_u64() >> 11) as f64 + 1.0) * SCALE)
    }

    /// Standard normal via the Box-Muller transform. Each call consumes two
    /// uniforms and returns one value; no spare is cached so streams stay
    /// position-independent.
    pub fn next_normal<S: Real>(&mut self) -> S {
        let u1: S = self.next_uniform_open();
        let u2: S = self.next_uniform();
        let r = (-real::<S>(2.0) * u1.ln()).sqrt();
        r * (S::two_pi() * u2).cos()
    }

    /// Uniform phase in `(-pi, pi]`.
    pub fn next_phase<S: Real>(&mut self) -> S {
        let u: S = self.next_uniform();
        S::pi() - u * S::two_pi()
    }

    /// Random sign, +1 or -1 with equal probability.
    pub fn next_sign<S: Real>(&mut self) -> S {
        if self.next_u64() & 1 == 0 {
            S::one()
        } else {
            -S::one()
        }
    }
}
