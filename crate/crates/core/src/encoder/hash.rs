use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{BaseEncoder, EncoderError};
use crate::vector::normalize;

pub const DEFAULT_BUCKETS: usize = 1 << 14;
const NGRAM: usize = 3;

static LIVE: AtomicUsize = AtomicUsize::new(0);

/// Hermetic sentence encoder: lowercased character trigrams (with `<` `>`
/// boundary markers) are hashed into a sparse count vector, which a fixed
/// seeded Gaussian projection maps to `dim` dimensions before L2
/// normalization.
///
/// Text without any trigram (the empty string) maps to the unit basis
/// vector `e_0`.
pub struct HashFeaturizer {
    dim: usize,
    buckets: usize,
    seed: u64,
    projection: Vec<f32>,
}

impl HashFeaturizer {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self::with_buckets(dim, seed, DEFAULT_BUCKETS)
    }

    pub fn with_buckets(dim: usize, seed: u64, buckets: usize) -> Self {
        assert!(dim > 0 && buckets > 0, "dimension and bucket count must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let projection = (0..buckets * dim)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                (g * scale) as f32
            })
            .collect();
        LIVE.fetch_add(1, Ordering::SeqCst);
        Self {
            dim,
            buckets,
            seed,
            projection,
        }
    }

    /// Number of featurizers currently alive in the process.
    pub fn live_instances() -> usize {
        LIVE.load(Ordering::SeqCst)
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn bucket(&self, gram: &[char]) -> usize {
        // FNV-1a over the UTF-8 bytes, salted with the seed.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut buf = [0u8; 4];
        for c in gram {
            for &b in c.encode_utf8(&mut buf).as_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        (h % self.buckets as u64) as usize
    }
}

impl std::fmt::Debug for HashFeaturizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HashFeaturizer")
            .field("dim", &self.dim)
            .field("buckets", &self.buckets)
            .field("seed", &self.seed)
            .finish()
    }
}

impl Drop for HashFeaturizer {
    fn drop(&mut self) {
        LIVE.fetch_sub(1, Ordering::SeqCst);
    }
}

impl BaseEncoder for HashFeaturizer {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EncoderError> {
        let mut out = vec![0.0f32; self.dim];
        let trimmed = text.trim();
        if !trimmed.is_empty() {
            let chars: Vec<char> = std::iter::once('<')
                .chain(trimmed.chars().flat_map(char::to_lowercase))
                .chain(std::iter::once('>'))
                .collect();
            let mut acc = vec![0.0f64; self.dim];
            for gram in chars.windows(NGRAM) {
                let b = self.bucket(gram);
                let row = &self.projection[b * self.dim..(b + 1) * self.dim];
                for (a, &w) in acc.iter_mut().zip(row) {
                    *a += w as f64;
                }
            }
            for (o, a) in out.iter_mut().zip(&acc) {
                *o = *a as f32;
            }
        }
        if !normalize(&mut out) {
            out.fill(0.0);
            out[0] = 1.0;
        }
        Ok(out)
    }

    fn resident_bytes(&self) -> usize {
        self.projection.len() * std::mem::size_of::<f32>()
    }
}
