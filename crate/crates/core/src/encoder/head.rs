use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{BaseEncoder, EncoderError};
use crate::vector::normalize;

pub const HEAD_MAGIC: &[u8; 8] = b"FAQHEAD1";
const HEAD_FORMAT_VERSION: u32 = 1;
const INIT_NOISE: f64 = 0.01;

/// A tenant's trainable projection: `normalize(W x + b)`.
///
/// `weights` is row-major `d_out x d_in`. Heads are immutable values;
/// training produces a new head with a higher `version`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenantHead {
    pub tenant_id: String,
    d_in: usize,
    d_out: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
    pub version: u64,
}

impl TenantHead {
    pub fn from_parts(
        tenant_id: impl Into<String>,
        d_in: usize,
        d_out: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        version: u64,
    ) -> Result<Self, EncoderError> {
        if d_in == 0 || d_out == 0 {
            return Err(EncoderError::ZeroDimension);
        }
        if weights.len() != d_in * d_out {
            return Err(EncoderError::DimensionMismatch {
                expected: d_in * d_out,
                actual: weights.len(),
            });
        }
        if bias.len() != d_out {
            return Err(EncoderError::DimensionMismatch {
                expected: d_out,
                actual: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(EncoderError::NonFinite);
        }
        Ok(Self {
            tenant_id: tenant_id.into(),
            d_in,
            d_out,
            weights,
            bias,
            version,
        })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Parameter count `d_out * d_in + d_out`.
    pub fn num_params(&self) -> usize {
        self.d_out * self.d_in + self.d_out
    }

    /// Bytes of parameter storage at 32-bit precision.
    pub fn param_bytes(&self) -> usize {
        self.num_params() * std::mem::size_of::<f32>()
    }

    /// The same weights under another tenant id and version.
    pub fn relabel(&self, tenant_id: impl Into<String>, version: u64) -> Self {
        Self {
            tenant_id: tenant_id.into(),
            version,
            ..self.clone()
        }
    }

    /// `W x + b` before normalization, accumulated in `f64`.
    pub fn project(&self, x: &[f32]) -> Result<Vec<f32>, EncoderError> {
        if x.len() != self.d_in {
            return Err(EncoderError::DimensionMismatch {
                expected: self.d_in,
                actual: x.len(),
            });
        }
        Ok(self
            .weights
            .chunks_exact(self.d_in)
            .zip(&self.bias)
            .map(|(row, &b)| (crate::vector::dot(row, x) + b as f64) as f32)
            .collect())
    }

    /// Project and L2-normalize a base embedding.
    pub fn apply(&self, x: &[f32]) -> Result<Vec<f32>, EncoderError> {
        let mut z = self.project(x)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::NonFinite);
        }
        if !normalize(&mut z) {
            return Err(EncoderError::ZeroVector);
        }
        Ok(z)
    }
}

/// Embed `text` with the shared base and the tenant's head.
pub fn encode(
    base: &dyn BaseEncoder,
    head: &TenantHead,
    text: &str,
) -> Result<Vec<f32>, EncoderError> {
    if base.dim() != head.d_in {
        return Err(EncoderError::DimensionMismatch {
            expected: head.d_in,
            actual: base.dim(),
        });
    }
    head.apply(&base.embed(text)?)
}

/// Near-identity head: truncated identity plus `0.01 * N(0, 1)` noise, zero
/// bias, version 0.
pub fn head_init(
    tenant_id: &str,
    d_in: usize,
    d_out: usize,
    seed: u64,
) -> Result<TenantHead, EncoderError> {
    head_init_with_noise(tenant_id, d_in, d_out, seed, INIT_NOISE)
}

pub fn head_init_with_noise(
    tenant_id: &str,
    d_in: usize,
    d_out: usize,
    seed: u64,
    noise: f64,
) -> Result<TenantHead, EncoderError> {
    if d_in == 0 || d_out == 0 {
        return Err(EncoderError::ZeroDimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0.0f32; d_out * d_in];
    for r in 0..d_out {
        for c in 0..d_in {
            let eye = if r == c { 1.0 } else { 0.0 };
            let eps: f64 = if noise == 0.0 {
                0.0
            } else {
                noise * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            };
            weights[r * d_in + c] = (eye + eps) as f32;
        }
    }
    TenantHead::from_parts(tenant_id, d_in, d_out, weights, vec![0.0; d_out], 0)
}

/// Write a head checkpoint: magic, format version, `d_in`, `d_out` (u32),
/// head version (u64), tenant id (u32 length + UTF-8), then `W` row-major
/// and `b`, all little-endian `f32`.
pub fn write_head(path: &Path, head: &TenantHead) -> Result<(), EncoderError> {
    let io = |source| EncoderError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut buf = Vec::with_capacity(32 + head.tenant_id.len() + head.param_bytes());
    buf.extend_from_slice(HEAD_MAGIC);
    buf.extend_from_slice(&HEAD_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(head.d_in as u32).to_le_bytes());
    buf.extend_from_slice(&(head.d_out as u32).to_le_bytes());
    buf.extend_from_slice(&head.version.to_le_bytes());
    buf.extend_from_slice(&(head.tenant_id.len() as u32).to_le_bytes());
    buf.extend_from_slice(head.tenant_id.as_bytes());
    for x in head.weights.iter().chain(&head.bias) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)?;
    Ok(())
}

pub fn read_head(path: &Path) -> Result<TenantHead, EncoderError> {
    let bytes = std::fs::read(path).map_err(|source| EncoderError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cur = super::file::Cursor::new(path, &bytes);
    let magic = cur.take(8, "magic")?;
    if magic != HEAD_MAGIC {
        return Err(cur.corrupt(0, "bad magic"));
    }
    let format = cur.u32("format version")?;
    if format != HEAD_FORMAT_VERSION {
        return Err(cur.corrupt(8, &format!("unsupported format version {format}")));
    }
    let d_in = cur.u32("d_in")? as usize;
    let d_out = cur.u32("d_out")? as usize;
    if d_in == 0 || d_out == 0 {
        return Err(cur.corrupt(12, "zero dimension"));
    }
    let version = cur.u64("head version")?;
    let tenant = cur.string("tenant id")?;
    let weights = cur.f32s(d_in * d_out, "weights")?;
    let bias = cur.f32s(d_out, "bias")?;
    cur.expect_end()?;
    TenantHead::from_parts(tenant, d_in, d_out, weights, bias, version)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::HashFeaturizer;
    use crate::vector::{cosine, l2_norm};

    #[test]
    fn zero_noise_is_identity() {
        let h = head_init_with_noise("t", 4, 4, 1, 0.0).unwrap();
        let x = [0.5f32, -0.5, 0.5, 0.5];
        assert_eq!(h.project(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn identity_head_passes_unit_input_through() {
        let base = HashFeaturizer::new(32, 3);
        let h = head_init_with_noise("t", 32, 32, 1, 0.0).unwrap();
        let direct = base.embed("when will my refund arrive").unwrap();
        let out = encode(&base, &h, "when will my refund arrive").unwrap();
        for (a, b) in direct.iter().zip(&out) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn positive_scaling_is_absorbed() {
        let base = HashFeaturizer::new(16, 3);
        let mut w = vec![0.0f32; 256];
        for i in 0..16 {
            w[i * 16 + i] = 2.0;
        }
        let h = TenantHead::from_parts("t", 16, 16, w, vec![0.0; 16], 0).unwrap();
        let direct = base.embed("cancel order").unwrap();
        let out = encode(&base, &h, "cancel order").unwrap();
        for (a, b) in direct.iter().zip(&out) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn seeded_init_is_deterministic_and_seed_sensitive() {
        let base = HashFeaturizer::new(24, 9);
        let a = head_init("t", 24, 24, 42).unwrap();
        let b = head_init("t", 24, 24, 42).unwrap();
        let c = head_init("t", 24, 24, 43).unwrap();
        let ea = encode(&base, &a, "track my parcel").unwrap();
        let eb = encode(&base, &b, "track my parcel").unwrap();
        assert_eq!(
            ea.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            eb.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn default_init_is_near_identity() {
        let base = HashFeaturizer::new(64, 5);
        let h = head_init("t", 64, 64, 7).unwrap();
        for q in ["how do I pay", "change delivery address", "is cod available", "x"] {
            let e = encode(&base, &h, q).unwrap();
            let b = base.embed(q).unwrap();
            assert!(cosine(&e, &b).unwrap() > 0.99, "{q}");
            assert!((l2_norm(&e) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(head_init("t", 0, 3, 1), Err(EncoderError::ZeroDimension)));
        let h = head_init("t", 3, 2, 1).unwrap();
        assert!(matches!(
            h.project(&[1.0, 2.0]),
            Err(EncoderError::DimensionMismatch { .. })
        ));
        let base = HashFeaturizer::new(4, 1);
        assert!(matches!(encode(&base, &h, "x"), Err(EncoderError::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_output_is_an_error() {
        let h = TenantHead::from_parts("t", 2, 2, vec![0.0; 4], vec![0.0; 2], 0).unwrap();
        assert!(matches!(h.apply(&[1.0, 1.0]), Err(EncoderError::ZeroVector)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.bin");
        let h = head_init("tenant-ä", 5, 3, 11).unwrap().relabel("tenant-ä", 7);
        write_head(&path, &h).unwrap();
        assert_eq!(read_head(&path).unwrap(), h);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(read_head(&path), Err(EncoderError::Corrupt { .. })));
    }
}
