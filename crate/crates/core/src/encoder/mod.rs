//! Base encoders and per-tenant heads.
//!
//! A [`BaseEncoder`] is the shared, frozen part of the model: it maps text to
//! a fixed-length vector and is never trained. A [`TenantHead`] is the small
//! trainable tail owned by one tenant: a linear projection followed by L2
//! normalization. Serving many tenants means one base encoder plus one head
//! per tenant.

mod file;
mod hash;
mod head;
mod remote;

use std::path::PathBuf;

pub use file::{load_embedding_file, read_embedding_records, write_embedding_file, EmbeddingRecord, LookupProvider, EMBEDDING_MAGIC};
pub use hash::{HashFeaturizer, DEFAULT_BUCKETS};
pub use head::{encode, head_init, head_init_with_noise, read_head, write_head, TenantHead, HEAD_MAGIC};
pub use remote::{RemoteEncoder, RemoteEncoderConfig};

use crate::par::Exec;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("vector has zero norm and cannot be normalized")]
    ZeroVector,
    #[error("vector contains a non-finite value")]
    NonFinite,
    #[error("dimensions must be positive")]
    ZeroDimension,
    #[error("no embedding stored for text {0:?}")]
    LookupMiss(String),
    #[error("{path}: {reason} at byte offset {offset}")]
    Corrupt {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("remote encoder: {0}")]
    Remote(String),
    #[error("remote encoder timed out after {attempts} attempt(s): {last}")]
    Timeout { attempts: u32, last: String },
}

/// The shared frozen encoder.
///
/// Implementations are read-only after construction and must return the
/// same vector for the same text on every call.
pub trait BaseEncoder: Send + Sync {
    /// Output dimension.
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f32>, EncoderError>;

    /// Embed many texts. The default fans out over `exec`; remote
    /// implementations batch requests instead.
    fn embed_batch(&self, texts: &[&str], exec: Exec) -> Result<Vec<Vec<f32>>, EncoderError> {
        exec.map_slice(texts, |t| self.embed(t)).into_iter().collect()
    }

    /// Bytes held by the encoder's parameters, for memory accounting.
    fn resident_bytes(&self) -> usize {
        0
    }
}

impl<T: BaseEncoder + ?Sized> BaseEncoder for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EncoderError> {
        (**self).embed(text)
    }

    fn embed_batch(&self, texts: &[&str], exec: Exec) -> Result<Vec<Vec<f32>>, EncoderError> {
        (**self).embed_batch(texts, exec)
    }

    fn resident_bytes(&self) -> usize {
        (**self).resident_bytes()
    }
}

impl<T: BaseEncoder + ?Sized> BaseEncoder for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EncoderError> {
        (**self).embed(text)
    }

    fn embed_batch(&self, texts: &[&str], exec: Exec) -> Result<Vec<Vec<f32>>, EncoderError> {
        (**self).embed_batch(texts, exec)
    }

    fn resident_bytes(&self) -> usize {
        (**self).resident_bytes()
    }
}
