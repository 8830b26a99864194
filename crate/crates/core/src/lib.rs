//! Few-shot FAQ retrieval engine.
//!
//! A shared, frozen base encoder produces sentence embeddings; every tenant
//! owns a small linear head on top of it that is fine-tuned on question
//! pairs or triplets drawn from the tenant's own FAQ set. Serving keeps one
//! base encoder resident and selects the tenant's head and cached question
//! index per request.
//!
//! Module map:
//!
//! * [`corpus`]: FAQ corpora, CSV ingestion, few-shot subsets, statistics.
//! * [`sampling`]: labelled question pairs, hard sampling, triplets.
//! * [`encoder`]: base encoders, tenant heads, the binary embedding file.
//! * [`training`]: losses, AdamW with warmup, head training loops.
//! * [`retrieval`]: cached cosine index, OOS thresholding, BM25 / TF-IDF.
//! * [`metrics`]: success rate, MRR, nDCG, MAP, OOS threshold sweeps.
//! * [`synthetic`]: seeded synthetic FAQ corpora for hermetic runs.
//!
//! Data-parallel inner loops run on rayon when the `parallel` feature is
//! enabled (the default) and fall back to plain iterators otherwise; see
//! [`Exec`].

pub mod corpus;
pub mod encoder;
pub mod metrics;
mod par;
pub mod retrieval;
pub mod sampling;
pub mod synthetic;
pub mod training;
mod vector;

pub use corpus::{CorpusError, CorpusFormat, CorpusStats, CsvSchema, FaqCorpus, FaqEntry, LabeledQuery};
pub use encoder::{BaseEncoder, EncoderError, HashFeaturizer, LookupProvider, RemoteEncoder, TenantHead};
pub use metrics::{EvalReport, Gold, RankedPrediction};
pub use par::Exec;
pub use retrieval::{RetrievalConfig, RetrievalResult, TenantIndex};
pub use sampling::{QuestionPair, SamplingConfig, Triplet};
pub use training::{TrainConfig, TrainReport};
pub use vector::{cosine, dot, l2_norm, normalize};
