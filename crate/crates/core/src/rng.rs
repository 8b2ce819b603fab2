//! Counter-based seeded randomness.
//!
//! Every consumer site (weight init, per-sample noise, shuffling, ...) owns
//! its own [`RngStream`], identified by `(seed, stream_id)`. The value at a
//! given draw index is a pure function of `(seed, stream_id, index)`, so
//! results never depend on evaluation order or thread count, and streams can
//! be forked for parallel workers without coordination.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor2;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const SUBSTREAM_TAG: u64 = 0xa076_1d64_78bd_642f;

/// SplitMix64 finalizer; full-avalanche 64-bit mixer.
#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic, splittable random stream.
///
/// Draw `i` of stream `(seed, stream_id)` is `mix64(key + i·φ)` where the key
/// itself mixes seed and stream id, i.e. a keyed counter generator. Identical
/// `(seed, stream_id, index)` always yields the identical value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
    // Cached mix of (seed, stream_id); zero after deserialization, healed on
    // first use. Excluded from equality.
    #[serde(skip, default)]
    key: u64,
}

impl PartialEq for RngStream {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.stream_id == other.stream_id
            && self.counter == other.counter
    }
}

impl Eq for RngStream {}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream {
            seed,
            stream_id,
            counter: 0,
            key: Self::derive_key(seed, stream_id),
        }
    }

    #[inline(always)]
    fn derive_key(seed: u64, stream_id: u64) -> u64 {
        let k = mix64(seed ^ mix64(stream_id ^ GOLDEN));
        // Zero marks "not cached"; nudge the pathological key that really
        // mixes to zero.
        if k == 0 {
            1
        } else {
            k
        }
    }

    #[inline(always)]
    fn key(&self) -> u64 {
        if self.key != 0 {
            self.key
        } else {
            Self::derive_key(self.seed, self.stream_id)
        }
    }

    /// Value at an absolute draw index, without advancing the stream.
    #[inline(always)]
    pub fn at(&self, index: u64) -> u64 {
        mix64(self.key().wrapping_add(index.wrapping_mul(GOLDEN)))
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        if self.key == 0 {
            self.key = Self::derive_key(self.seed, self.stream_id);
        }
        let v = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter += 1;
        v
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline(always)]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    #[inline(always)]
    pub fn next_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard-normal draw (ziggurat).
    #[inline(always)]
    pub fn next_normal(&mut self) -> f64 {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, self)
    }

    /// Uniform integer in `[0, bound)` by rejection, bias-free.
    pub fn next_below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "next_below requires bound > 0");
        let bound = bound as u64;
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % bound) as usize;
            }
        }
    }

    /// Derives an independent child stream.
    ///
    /// Consumes one draw index of the parent, so repeated forks from the same
    /// parent yield distinct families.
    pub fn substream(&mut self, child: u64) -> RngStream {
        let salt = self.next_u64();
        let seed = mix64(salt ^ mix64(child ^ SUBSTREAM_TAG));
        RngStream::new(seed, child)
    }

    /// Forks `n` independent child streams, one per parallel consumer.
    pub fn fork(&mut self, n: usize) -> Vec<RngStream> {
        let salt = self.next_u64();
        (0..n as u64)
            .map(|child| {
                let seed = mix64(salt ^ mix64(child ^ SUBSTREAM_TAG));
                RngStream::new(seed, child)
            })
            .collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }
}

impl rand_core::RngCore for RngStream {
    #[inline(always)]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline(always)]
    fn next_u64(&mut self) -> u64 {
        RngStream::next_u64(self)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        let mut chunks = dst.chunks_exact_mut(8);
        for chunk in &mut chunks {
            chunk.copy_from_slice(&self.next_u64().to_le_bytes());
        }
        let rem = chunks.into_remainder();
        if !rem.is_empty() {
            let bytes = self.next_u64().to_le_bytes();
            rem.copy_from_slice(&bytes[..rem.len()]);
        }
    }
}

/// Fills a `rows × cols` tensor with i.i.d. standard-normal draws, advancing
/// the stream deterministically.
pub fn gaussian_sample(rng: &mut RngStream, rows: usize, cols: usize) -> Tensor2 {
    assert!(rows >= 1 && cols >= 1, "gaussian_sample requires rows, cols >= 1");
    let mut t = Tensor2::zeros(rows, cols);
    for v in t.as_mut_slice() {
        *v = rng.next_normal();
    }
    t
}
