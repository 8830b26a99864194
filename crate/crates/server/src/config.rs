//! Server configuration file and environment overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use faqir_core::encoder::{load_embedding_file, HashFeaturizer, RemoteEncoder, RemoteEncoderConfig};
use faqir_core::{BaseEncoder, EncoderError, RetrievalConfig, SamplingConfig, TrainConfig};
use serde::{Deserialize, Serialize};

pub const ENV_LISTEN: &str = "FAQIR_LISTEN";
pub const ENV_CONFIG: &str = "FAQIR_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("base encoder: {0}")]
    Base(#[from] EncoderError),
}

/// Which shared base encoder to load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaseConfig {
    /// Precomputed vectors from an embedding file.
    Lookup { path: PathBuf },
    /// Hermetic character-trigram featurizer.
    Hash {
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    Remote(RemoteEncoderConfig),
}

impl Default for BaseConfig {
    fn default() -> Self {
        BaseConfig::Hash { dim: 384, seed: 0 }
    }
}

impl BaseConfig {
    /// Load the encoder. Remote encoders use a blocking HTTP client, so call
    /// this outside an async runtime.
    pub fn build(&self) -> Result<Arc<dyn BaseEncoder>, ConfigError> {
        Ok(match self {
            BaseConfig::Lookup { path } => Arc::new(load_embedding_file(path)?),
            BaseConfig::Hash { dim, seed } => {
                if *dim == 0 {
                    return Err(ConfigError::Invalid {
                        field: "base.dim",
                        message: "must be positive".into(),
                    });
                }
                Arc::new(HashFeaturizer::new(*dim, *seed))
            }
            BaseConfig::Remote(cfg) => Arc::new(RemoteEncoder::new(cfg.clone())?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    pub base: BaseConfig,
    /// Head output dimension; defaults to the base dimension.
    pub head_dim: Option<usize>,
    /// Trained heads are written here and picked up again on registration.
    pub checkpoint_dir: Option<PathBuf>,
    pub retrieval: RetrievalConfig,
    pub train: TrainConfig,
    pub sampling: SamplingConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            base: BaseConfig::default(),
            head_dim: None,
            checkpoint_dir: None,
            retrieval: RetrievalConfig::default(),
            train: TrainConfig::default(),
            sampling: SamplingConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    /// Resolve the configuration: an explicit path, else `$FAQIR_CONFIG`, else
    /// defaults; `$FAQIR_LISTEN` then overrides the listen address.
    pub fn resolve(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let from_env = env(ENV_CONFIG).map(PathBuf::from);
        let mut cfg = match path.or(from_env.as_deref()) {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(listen) = env(ENV_LISTEN) {
            cfg.listen = listen;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, message: &str| {
            Err(ConfigError::Invalid {
                field,
                message: message.into(),
            })
        };
        if self.listen.parse::<std::net::SocketAddr>().is_err() {
            return invalid("listen", "expected host:port");
        }
        if self.head_dim == Some(0) {
            return invalid("head_dim", "must be positive");
        }
        if self.retrieval.k == 0 {
            return invalid("retrieval.k", "must be at least 1");
        }
        if !(-1.0..=1.0).contains(&self.retrieval.threshold) {
            return invalid("retrieval.threshold", "must lie in [-1, 1]");
        }
        self.train.validate().map_err(|e| ConfigError::Invalid {
            field: "train",
            message: e.to_string(),
        })?;
        self.sampling.validate().map_err(|e| ConfigError::Invalid {
            field: "sampling",
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file() {
        let text = r#"
            listen = "0.0.0.0:9000"
            head_dim = 64
            [base]
            kind = "hash"
            dim = 128
            seed = 3
            [retrieval]
            k = 5
            threshold = 0.2
            [train]
            iterations = 50
        "#;
        let cfg = ServerConfig::from_toml(text, Path::new("x.toml")).unwrap();
        assert_eq!(cfg.listen, "0.0.0.0:9000");
        assert_eq!(cfg.base, BaseConfig::Hash { dim: 128, seed: 3 });
        assert_eq!(cfg.retrieval.k, 5);
        assert_eq!(cfg.train.iterations, 50);
        assert_eq!(cfg.train.batch_size, 16);
    }

    #[test]
    fn base_variants() {
        let lookup: ServerConfig = toml::from_str("[base]\nkind = \"lookup\"\npath = \"e.bin\"").unwrap();
        assert_eq!(lookup.base, BaseConfig::Lookup { path: "e.bin".into() });
        let remote: ServerConfig = toml::from_str(
            "[base]\nkind = \"remote\"\nurl = \"http://h/embed\"\ndim = 384\ntimeout = 2000\nmax_retries = 1\ninitial_backoff = 10\nbatch_size = 8",
        )
        .unwrap();
        match remote.base {
            BaseConfig::Remote(r) => assert_eq!(r.timeout, std::time::Duration::from_secs(2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        let e = ServerConfig::from_toml("[retrieval]\nk = 0", Path::new("c.toml")).unwrap_err();
        assert!(e.to_string().starts_with("retrieval.k"), "{e}");
        let e = ServerConfig::from_toml("bogus = 1", Path::new("c.toml")).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }));
        let e = ServerConfig::from_toml("listen = \"nope\"", Path::new("c.toml")).unwrap_err();
        assert!(e.to_string().starts_with("listen"));
    }

    #[test]
    fn env_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        std::fs::write(&path, "listen = \"127.0.0.1:1\"\n[retrieval]\nk = 2").unwrap();
        let p = path.to_str().unwrap().to_string();
        let env = |k: &str| match k {
            ENV_CONFIG => Some(p.clone()),
            ENV_LISTEN => Some("127.0.0.1:2".to_string()),
            _ => None,
        };
        let cfg = ServerConfig::resolve(None, env).unwrap();
        assert_eq!(cfg.retrieval.k, 2);
        assert_eq!(cfg.listen, "127.0.0.1:2");
        assert_eq!(ServerConfig::resolve(None, |_| None).unwrap(), ServerConfig::default());
    }
}
