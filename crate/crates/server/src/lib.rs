//! Multi-tenant retrieval service.
//!
//! One base encoder is loaded for the whole process. Every tenant keeps its
//! own head and cached question index in memory, and each request selects
//! the tenant's pair ("weight switching") instead of reloading a model.
//!
//! ```text
//! POST /tenants                 {"tenant_id", "faqs": [{"text","intent","answer"?}], "config"?}
//! PUT  /tenants/{id}/faqs       {"faqs": [...]}
//! POST /tenants/{id}/train      {"objective"?, "iterations"?, "learning_rate"?, "seed"?, ...}
//! POST /tenants/{id}/query      {"text", "k"?}
//! GET  /tenants/{id}/config
//! GET  /metrics/memory
//! GET  /health
//! ```

pub mod config;
pub mod http;
pub mod registry;

pub use config::{BaseConfig, ConfigError, ServerConfig};
pub use http::{router, serve};
pub use registry::{
    FaqInput, MemoryReport, QueryResponse, Registry, RegistryError, RegistryOptions, TenantInfo, TrainRequest,
};

use std::sync::Arc;

impl ServerConfig {
    /// Load the base encoder and build an empty registry.
    pub fn registry(&self) -> Result<Arc<Registry>, ConfigError> {
        let base = self.base.build()?;
        Ok(Arc::new(Registry::new(
            base,
            RegistryOptions {
                head_dim: self.head_dim,
                retrieval: self.retrieval,
                train: self.train.clone(),
                sampling: self.sampling.clone(),
                checkpoint_dir: self.checkpoint_dir.clone(),
            },
        )))
    }
}
