//! Splittable, reproducible random streams.
//!
//! A stream is addressed by `(root_seed, replicate_id, role)`. The first two
//! are mixed into a ChaCha8 key; the role selects one of ChaCha's independent
//! 64-bit stream ids. Any replicate can therefore be regenerated in isolation,
//! on any worker, without touching a shared generator.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// What a stream's draws are used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Role {
    Phase1Data = 0,
    SubgroupSelection = 1,
    Calibration = 2,
    Correction = 3,
    Phase2 = 4,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a label; used to give each
/// study cell or calibration target its own seed space.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    mix64(mix64(parent) ^ label.rotate_left(17) ^ 0xA076_1D64_78BD_642F)
}

/// Stable 64-bit FNV-1a hash of a label string.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

#[derive(Debug, Clone)]
pub struct RngStream {
    root_seed: u64,
    replicate_id: u64,
    role: Role,
    inner: ChaCha8Rng,
}

/// Open the stream for `(root_seed, replicate_id, role)`.
pub fn substream(root_seed: u64, replicate_id: u64, role: Role) -> RngStream {
    let mut key = [0u8; 32];
    let mut state = mix64(root_seed) ^ mix64(replicate_id.wrapping_add(0x632B_E59B_D9B4_E019));
    for chunk in key.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut inner = ChaCha8Rng::from_seed(key);
    inner.set_stream(role as u64);
    RngStream { root_seed, replicate_id, role, inner }
}

impl RngStream {
    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn replicate_id(&self) -> u64 {
        self.replicate_id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// The stream with the same root and replicate but a different role.
    pub fn sibling(&self, role: Role) -> RngStream {
        substream(self.root_seed, self.replicate_id, role)
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `[0, bound)`.
    #[inline]
    pub fn below(&mut self, bound: usize) -> usize {
        self.inner.random_range(0..bound)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// A draw from `N(mu, sigma^2)`. A draw is consumed even when `sigma == 0`
/// so that stream alignment does not depend on parameters.
pub fn sample_normal(stream: &mut RngStream, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::domain(format!("normal sigma {sigma} must be nonnegative")));
    }
    let z = stream.standard_normal();
    Ok(if sigma == 0.0 { mu } else { mu + sigma * z })
}

/// Chi-square draw as a sum of `df` squared standard normals.
pub fn sample_chisquare(stream: &mut RngStream, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::domain("chi-square degrees of freedom must be positive"));
    }
    Ok((0..df)
        .map(|_| {
            let z = stream.standard_normal();
            z * z
        })
        .sum())
}
