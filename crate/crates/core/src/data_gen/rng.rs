use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Master seed for every random artifact.
///
/// Randomness is never drawn from a shared stream. Each artifact asks for a
/// substream keyed by a purpose tag and an index path, e.g.
/// `seed.substream("noise", &[cell, replication])`. The key is mixed with
/// SplitMix64 into a 256-bit ChaCha8 key, so streams are independent of
/// the order in which they are requested and identical on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

impl Seed {
    pub fn new(master: u64) -> Self {
        Seed(master)
    }

    pub fn master(self) -> u64 {
        self.0
    }

    /// 64-bit key of the substream `(tag, indices)`.
    pub fn derive(self, tag: &str, indices: &[u64]) -> u64 {
        let mut state = self.0 ^ fnv1a(tag);
        let mut key = splitmix64(&mut state);
        for &idx in indices {
            let mut s = key ^ idx.wrapping_mul(GOLDEN_GAMMA);
            key = splitmix64(&mut s);
        }
        key
    }

    pub fn substream(self, tag: &str, indices: &[u64]) -> StreamRng {
        let mut state = self.derive(tag, indices);
        let mut bytes = [0u8; 32];
        for chunk in bytes.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| standard_normal(rng)).collect()
}
