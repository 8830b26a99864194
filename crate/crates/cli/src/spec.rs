//! Config pieces shared by several subcommands: where the corpus comes from,
//! which base encoder to load and which head to start from.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use faqir_core::corpus::{fewshot_subset, load_dataset};
use faqir_core::encoder::{head_init, read_head, RemoteEncoderConfig};
use faqir_core::synthetic::{self, SyntheticConfig};
use faqir_core::{BaseEncoder, CorpusFormat, FaqCorpus, TenantHead};
use faqir_server::BaseConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::Run;

pub const ENV_DATA_DIR: &str = "FAQIR_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    /// Named dataset resolved to `<data_dir>/<name>/{train,test}.csv`.
    pub dataset: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub format: CorpusFormat,
    pub tenant: Option<String>,
    /// Keep at most this many training questions per intent.
    pub shots: Option<usize>,
    pub shots_seed: u64,
    pub synthetic: bool,
    pub synthetic_intents: usize,
    pub synthetic_shots: usize,
    pub synthetic_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        let s = SyntheticConfig::default();
        Self {
            dataset: None,
            data_dir: None,
            train: None,
            test: None,
            format: CorpusFormat::Hint3Csv,
            tenant: None,
            shots: None,
            shots_seed: 0,
            synthetic: false,
            synthetic_intents: s.num_intents,
            synthetic_shots: s.shots,
            synthetic_seed: s.seed,
        }
    }
}

#[derive(Debug, Default, Clone, clap::Args, Serialize)]
pub struct DatasetArgs {
    /// Named dataset under the data directory (e.g. curekart)
    #[arg(long)]
    pub dataset: Option<String>,
    /// Root for named datasets [env: FAQIR_DATA_DIR, default: data]
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Training CSV
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test CSV (in-scope and OOS rows)
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// hint3-csv or dialoglue-csv
    #[arg(long)]
    pub format: Option<CorpusFormat>,
    #[arg(long)]
    pub tenant: Option<String>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub shots_seed: Option<u64>,
    /// Generate a synthetic corpus instead of reading files
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub synthetic: Option<bool>,
    #[arg(long)]
    pub synthetic_intents: Option<usize>,
    #[arg(long)]
    pub synthetic_shots: Option<usize>,
    #[arg(long)]
    pub synthetic_seed: Option<u64>,
}

impl DatasetSpec {
    /// Turn a named dataset into concrete paths so the resolved config no
    /// longer depends on the environment.
    pub fn finalize(&mut self) {
        let Some(name) = self.dataset.clone() else { return };
        let root = self.data_dir.clone().unwrap_or_else(|| {
            std::env::var_os(ENV_DATA_DIR).map_or_else(|| PathBuf::from("data"), PathBuf::from)
        });
        if self.train.is_none() {
            self.train = Some(root.join(&name).join("train.csv"));
            if self.test.is_none() {
                self.test = Some(root.join(&name).join("test.csv"));
            }
        }
        self.data_dir = Some(root);
        if self.tenant.is_none() {
            self.tenant = Some(name);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        match (self.synthetic, &self.train) {
            (true, Some(_)) => return Err(CliError::validation("synthetic: cannot be combined with train/dataset")),
            (false, None) => return Err(CliError::validation("train: a training file, --dataset or --synthetic is required")),
            _ => {}
        }
        if self.test.is_some() && self.train.is_none() {
            return Err(CliError::validation("test: requires train"));
        }
        if self.shots == Some(0) {
            return Err(CliError::validation("shots: must be at least 1"));
        }
        if self.synthetic && (self.synthetic_intents < 2 || self.synthetic_shots == 0) {
            return Err(CliError::validation(
                "synthetic_intents: need at least 2 intents and 1 shot per intent",
            ));
        }
        Ok(())
    }

    /// Load (or generate) the corpus and fingerprint every file read.
    pub fn load(&self, run: &mut Run) -> CliResult<FaqCorpus> {
        let corpus = if self.synthetic {
            synthetic::generate(&SyntheticConfig {
                tenant_id: self.tenant.clone().unwrap_or_else(|| "synthetic".into()),
                num_intents: self.synthetic_intents,
                shots: self.synthetic_shots,
                seed: self.synthetic_seed,
                ..SyntheticConfig::default()
            })?
        } else {
            let train = self.train.as_deref().expect("validated");
            run.input(train)?;
            if let Some(t) = &self.test {
                run.input(t)?;
            }
            let tenant = self.tenant.clone().unwrap_or_else(|| stem(train));
            load_dataset(train, self.test.as_deref(), &self.format.schema(), &tenant)
                .with_context(|| format!("loading {}", train.display()))?
        };
        Ok(match self.shots {
            Some(k) => fewshot_subset(&corpus, k, self.shots_seed),
            None => corpus,
        })
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("tenant").to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    Hash,
    Lookup,
    Remote,
}

impl std::str::FromStr for BaseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hash" => Ok(Self::Hash),
            "lookup" => Ok(Self::Lookup),
            "remote" => Ok(Self::Remote),
            other => Err(format!("unknown base `{other}` (expected hash, lookup or remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseSpec {
    pub base: BaseKind,
    /// Output dimension of the hash or remote encoder.
    pub base_dim: usize,
    pub base_seed: u64,
    /// Embedding file for the lookup base.
    pub embeddings: Option<PathBuf>,
    pub remote_url: Option<String>,
}

impl Default for BaseSpec {
    fn default() -> Self {
        Self {
            base: BaseKind::Hash,
            base_dim: 256,
            base_seed: 0,
            embeddings: None,
            remote_url: None,
        }
    }
}

#[derive(Debug, Default, Clone, clap::Args, Serialize)]
pub struct BaseArgs {
    /// hash, lookup or remote
    #[arg(long)]
    pub base: Option<BaseKind>,
    #[arg(long)]
    pub base_dim: Option<usize>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    /// Embedding file (lookup base)
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Embedding service URL (remote base)
    #[arg(long)]
    pub remote_url: Option<String>,
}

impl BaseSpec {
    pub fn validate(&self) -> CliResult<()> {
        match self.base {
            BaseKind::Hash | BaseKind::Remote if self.base_dim == 0 => {
                Err(CliError::validation("base_dim: must be positive"))
            }
            BaseKind::Lookup if self.embeddings.is_none() => {
                Err(CliError::validation("embeddings: required for the lookup base"))
            }
            BaseKind::Remote if self.remote_url.is_none() => {
                Err(CliError::validation("remote_url: required for the remote base"))
            }
            _ => Ok(()),
        }
    }

    pub fn config(&self) -> BaseConfig {
        match self.base {
            BaseKind::Hash => BaseConfig::Hash {
                dim: self.base_dim,
                seed: self.base_seed,
            },
            BaseKind::Lookup => BaseConfig::Lookup {
                path: self.embeddings.clone().expect("validated"),
            },
            BaseKind::Remote => BaseConfig::Remote(RemoteEncoderConfig::new(
                self.remote_url.clone().expect("validated"),
                self.base_dim,
            )),
        }
    }

    pub fn build(&self, run: &mut Run) -> CliResult<Arc<dyn BaseEncoder>> {
        if let Some(p) = self.embeddings.as_deref().filter(|_| self.base == BaseKind::Lookup) {
            run.input(p)?;
        }
        Ok(self.config().build()?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadSpec {
    /// Head checkpoint; when absent a near-identity head is initialised.
    pub head: Option<PathBuf>,
    /// Output dimension of a freshly initialised head; defaults to the base
    /// dimension.
    pub head_dim: Option<usize>,
    pub init_seed: u64,
}

#[derive(Debug, Default, Clone, clap::Args, Serialize)]
pub struct HeadArgs {
    /// Head checkpoint to start from
    #[arg(long)]
    pub head: Option<PathBuf>,
    #[arg(long)]
    pub head_dim: Option<usize>,
    #[arg(long)]
    pub init_seed: Option<u64>,
}

impl HeadSpec {
    pub fn validate(&self) -> CliResult<()> {
        if self.head_dim == Some(0) {
            return Err(CliError::validation("head_dim: must be positive"));
        }
        if self.head.is_some() && self.head_dim.is_some() {
            return Err(CliError::validation("head_dim: cannot be combined with a head checkpoint"));
        }
        Ok(())
    }

    /// The starting head, relabelled to `tenant`, and whether it was freshly
    /// initialised.
    pub fn load(&self, tenant: &str, base_dim: usize, run: &mut Run) -> CliResult<(TenantHead, bool)> {
        match &self.head {
            Some(p) => {
                run.input(p)?;
                let h = read_head(p).with_context(|| format!("reading {}", p.display()))?;
                if h.d_in() != base_dim {
                    return Err(CliError::validation(format!(
                        "head: {} expects {}-dimensional input, base produces {base_dim}",
                        p.display(),
                        h.d_in()
                    )));
                }
                Ok((h.relabel(tenant, h.version), false))
            }
            None => Ok((
                head_init(tenant, base_dim, self.head_dim.unwrap_or(base_dim), self.init_seed)?,
                true,
            )),
        }
    }
}
