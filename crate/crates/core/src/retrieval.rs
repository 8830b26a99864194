//! Cached cosine retrieval with intent aggregation and OOS thresholding, plus
//! BM25 and TF-IDF baselines.
//!
//! Intent scores are the maximum over the intent's questions. Ties are broken
//! by the row order of each intent's best question, then by intent name.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::FaqCorpus;
use crate::encoder::{BaseEncoder, EncoderError, TenantHead};
use crate::par::Exec;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("corpus has no training questions")]
    EmptyCorpus,
    #[error("encoding question {question_id}: {source}")]
    Question {
        question_id: String,
        #[source]
        source: EncoderError,
    },
    #[error("index built with head version {index} but head is version {head}")]
    StaleIndex { index: u64, head: u64 },
    #[error("index belongs to tenant {index:?}, head to {head:?}")]
    TenantMismatch { index: String, head: String },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("threshold must lie in [-1, 1]")]
    Threshold,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub k: usize,
    /// Queries whose top intent score is below this are OOS.
    pub threshold: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { k: 3, threshold: 0.1 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return Err(RetrievalError::Threshold);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentScore {
    pub intent: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionHit {
    pub question_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    /// At most `k` intents, best first.
    #[serde(rename = "intents")]
    pub ranked_intents: Vec<IntentScore>,
    #[serde(rename = "hits")]
    pub top_question_hits: Vec<QuestionHit>,
    #[serde(rename = "oos")]
    pub is_oos: bool,
    /// The ranked intents again, offered to the user when the query is OOS.
    pub suggestions: Option<Vec<IntentScore>>,
}

/// Head-projected embeddings of a tenant's training questions.
#[derive(Debug, Clone, PartialEq)]
pub struct TenantIndex {
    pub tenant_id: String,
    pub head_version: u64,
    dim: usize,
    /// `N x dim`, row-major, unit-norm rows.
    rows: Vec<f32>,
    question_ids: Vec<String>,
    /// Per row, an index into `intent_names`.
    row_intent: Vec<u32>,
    intent_names: Vec<String>,
}

/// Intent ids and names for the rows of a corpus, ids in sorted-name order.
fn intent_table(corpus: &FaqCorpus) -> (Vec<u32>, Vec<String>) {
    let names: Vec<String> = corpus.intents().iter().cloned().collect();
    let id: HashMap<&str, u32> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i as u32)).collect();
    let rows = corpus.train().iter().map(|e| id[e.intent.as_str()]).collect();
    (rows, names)
}

pub fn build_index(corpus: &FaqCorpus, base: &dyn BaseEncoder, head: &TenantHead) -> Result<TenantIndex, RetrievalError> {
    build_index_with(corpus, base, head, Exec::default())
}

pub fn build_index_with(
    corpus: &FaqCorpus,
    base: &dyn BaseEncoder,
    head: &TenantHead,
    exec: Exec,
) -> Result<TenantIndex, RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    if base.dim() != head.d_in() {
        return Err(EncoderError::DimensionMismatch {
            expected: head.d_in(),
            actual: base.dim(),
        }
        .into());
    }
    let texts: Vec<&str> = corpus.train().iter().map(|e| e.text.as_str()).collect();
    let raw = base.embed_batch(&texts, exec)?;
    build_index_from_embeddings(corpus, &raw, head, exec)
}

/// Build an index from precomputed base embeddings of the training rows.
pub fn build_index_from_embeddings(
    corpus: &FaqCorpus,
    base_embeddings: &[Vec<f32>],
    head: &TenantHead,
    exec: Exec,
) -> Result<TenantIndex, RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let train = corpus.train();
    let projected = exec.map_range(train.len(), |i| {
        let x = base_embeddings.get(i).ok_or(EncoderError::LookupMiss(train[i].text.clone()));
        x.and_then(|x| head.apply(x)).map_err(|source| RetrievalError::Question {
            question_id: train[i].question_id.clone(),
            source,
        })
    });
    let mut rows = Vec::with_capacity(train.len() * head.d_out());
    for r in projected {
        rows.extend(r?);
    }
    let (row_intent, intent_names) = intent_table(corpus);
    Ok(TenantIndex {
        tenant_id: corpus.tenant_id().to_string(),
        head_version: head.version,
        dim: head.d_out(),
        rows,
        question_ids: train.iter().map(|e| e.question_id.clone()).collect(),
        row_intent,
        intent_names,
    })
}

impl TenantIndex {
    pub fn len(&self) -> usize {
        self.question_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.question_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn question_ids(&self) -> &[String] {
        &self.question_ids
    }

    pub fn intent_of(&self, row: usize) -> &str {
        &self.intent_names[self.row_intent[row] as usize]
    }

    pub fn intent_names(&self) -> &[String] {
        &self.intent_names
    }

    /// Bytes held by the row matrix and the row labels.
    pub fn resident_bytes(&self) -> usize {
        let strings: usize = self
            .question_ids
            .iter()
            .chain(&self.intent_names)
            .map(|s| s.capacity() + std::mem::size_of::<String>())
            .sum();
        self.rows.capacity() * 4 + self.row_intent.capacity() * 4 + strings
    }

    /// Cosine of a unit-norm query embedding against every row.
    pub fn scores(&self, query: &[f32]) -> Result<Vec<f64>, EncoderError> {
        if query.len() != self.dim {
            return Err(EncoderError::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        Ok(self
            .rows
            .chunks_exact(self.dim)
            .map(|r| crate::vector::dot(r, query).clamp(-1.0, 1.0))
            .collect())
    }

    /// Every intent ranked by its best question score.
    pub fn rank_intents(&self, query: &[f32]) -> Result<Vec<IntentScore>, EncoderError> {
        Ok(aggregate(&self.scores(query)?, &self.row_intent, &self.intent_names))
    }

    /// Rank a unit-norm query embedding and apply the OOS rule.
    pub fn query_embedding(&self, query: &[f32], config: &RetrievalConfig) -> Result<RetrievalResult, RetrievalError> {
        config.validate()?;
        let scores = self.scores(query)?;
        let mut intents = aggregate(&scores, &self.row_intent, &self.intent_names);
        intents.truncate(config.k);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let hits = order
            .into_iter()
            .take(config.k)
            .map(|i| QuestionHit {
                question_id: self.question_ids[i].clone(),
                score: scores[i],
            })
            .collect();
        let is_oos = intents.first().map_or(true, |t| t.score < config.threshold);
        Ok(RetrievalResult {
            suggestions: is_oos.then(|| intents.clone()),
            ranked_intents: intents,
            top_question_hits: hits,
            is_oos,
        })
    }
}

/// Max-aggregate row scores by intent and sort, best first.
fn aggregate(scores: &[f64], row_intent: &[u32], names: &[String]) -> Vec<IntentScore> {
    // (best score, first row achieving it)
    let mut best: Vec<Option<(f64, usize)>> = vec![None; names.len()];
    for (row, (&s, &g)) in scores.iter().zip(row_intent).enumerate() {
        let slot = &mut best[g as usize];
        if slot.map_or(true, |(b, _)| s > b) {
            *slot = Some((s, row));
        }
    }
    let mut ranked: Vec<(f64, usize, usize)> = best
        .iter()
        .enumerate()
        .filter_map(|(g, b)| b.map(|(s, row)| (s, row, g)))
        .collect();
    ranked.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then_with(|| names[a.2].cmp(&names[b.2]))
    });
    ranked
        .into_iter()
        .map(|(score, _, g)| IntentScore {
            intent: names[g].clone(),
            score,
        })
        .collect()
}

/// Embed `text` with `base` and `head` and query the tenant's index.
pub fn query_topk(
    index: &TenantIndex,
    base: &dyn BaseEncoder,
    head: &TenantHead,
    text: &str,
    config: &RetrievalConfig,
) -> Result<RetrievalResult, RetrievalError> {
    check_pair(index, head)?;
    let q = crate::encoder::encode(base, head, text)?;
    index.query_embedding(&q, config)
}

/// A head and index belong together when tenant and version agree.
pub fn check_pair(index: &TenantIndex, head: &TenantHead) -> Result<(), RetrievalError> {
    if index.tenant_id != head.tenant_id {
        return Err(RetrievalError::TenantMismatch {
            index: index.tenant_id.clone(),
            head: head.tenant_id.clone(),
        });
    }
    if index.head_version != head.version {
        return Err(RetrievalError::StaleIndex {
            index: index.head_version,
            head: head.version,
        });
    }
    Ok(())
}

/// Full intent rankings for many queries.
pub fn rank_queries(
    index: &TenantIndex,
    base: &dyn BaseEncoder,
    head: &TenantHead,
    texts: &[&str],
    exec: Exec,
) -> Result<Vec<Vec<IntentScore>>, RetrievalError> {
    check_pair(index, head)?;
    let raw = base.embed_batch(texts, exec)?;
    exec.map_slice(&raw, |x| Ok(index.rank_intents(&head.apply(x)?)?))
        .into_iter()
        .collect()
}

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub const BM25_K1: f64 = 1.5;
pub const BM25_B: f64 = 0.75;

/// A ranking from a lexical baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalRanking {
    pub intents: Vec<IntentScore>,
    /// The query had no tokens; `intents` is empty.
    pub empty_query: bool,
}

/// Token statistics of a corpus' training questions for BM25 and TF-IDF.
#[derive(Debug, Clone)]
pub struct LexicalIndex {
    vocab: HashMap<String, u32>,
    /// Per document, (term, count) sorted by term.
    docs: Vec<Vec<(u32, u32)>>,
    doc_len: Vec<usize>,
    avg_len: f64,
    df: Vec<u32>,
    row_intent: Vec<u32>,
    intent_names: Vec<String>,
    /// Per document, L2 norm of its TF-IDF vector.
    tfidf_norm: Vec<f64>,
}

impl LexicalIndex {
    pub fn build(corpus: &FaqCorpus) -> Result<Self, RetrievalError> {
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut docs = Vec::with_capacity(corpus.len());
        let mut doc_len = Vec::with_capacity(corpus.len());
        for e in corpus.train() {
            let toks = tokenize(&e.text);
            doc_len.push(toks.len());
            let mut counts: HashMap<u32, u32> = HashMap::new();
            for t in toks {
                let next = vocab.len() as u32;
                let id = *vocab.entry(t).or_insert(next);
                *counts.entry(id).or_default() += 1;
            }
            let mut counts: Vec<(u32, u32)> = counts.into_iter().collect();
            counts.sort_unstable();
            docs.push(counts);
        }
        let mut df = vec![0u32; vocab.len()];
        for d in &docs {
            for &(t, _) in d {
                df[t as usize] += 1;
            }
        }
        let avg_len = doc_len.iter().sum::<usize>() as f64 / doc_len.len() as f64;
        let (row_intent, intent_names) = intent_table(corpus);
        let mut idx = Self {
            vocab,
            docs,
            doc_len,
            avg_len,
            df,
            row_intent,
            intent_names,
            tfidf_norm: Vec::new(),
        };
        idx.tfidf_norm = idx
            .docs
            .iter()
            .map(|d| {
                d.iter()
                    .map(|&(t, c)| (c as f64 * idx.tfidf_idf(t)).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        Ok(idx)
    }

    fn n_docs(&self) -> f64 {
        self.docs.len() as f64
    }

    /// `ln((N - df + 0.5) / (df + 0.5))`, floored at 0.
    pub fn bm25_idf(&self, term: u32) -> f64 {
        let df = self.df[term as usize] as f64;
        ((self.n_docs() - df + 0.5) / (df + 0.5)).ln().max(0.0)
    }

    /// Smoothed `ln((1 + N) / (1 + df)) + 1`.
    pub fn tfidf_idf(&self, term: u32) -> f64 {
        let df = self.df[term as usize] as f64;
        ((1.0 + self.n_docs()) / (1.0 + df)).ln() + 1.0
    }

    fn query_terms(&self, query: &str) -> Option<Vec<Option<u32>>> {
        let toks = tokenize(query);
        (!toks.is_empty()).then(|| toks.iter().map(|t| self.vocab.get(t).copied()).collect())
    }

    /// Okapi BM25 score of every training question.
    pub fn bm25_scores(&self, query: &str) -> Option<Vec<f64>> {
        let terms = self.query_terms(query)?;
        Some(
            self.docs
                .iter()
                .zip(&self.doc_len)
                .map(|(doc, &len)| {
                    let norm = BM25_K1 * (1.0 - BM25_B + BM25_B * len as f64 / self.avg_len);
                    terms
                        .iter()
                        .flatten()
                        .map(|&t| {
                            let tf = doc.binary_search_by_key(&t, |&(id, _)| id).map_or(0, |i| doc[i].1) as f64;
                            self.bm25_idf(t) * tf * (BM25_K1 + 1.0) / (tf + norm)
                        })
                        .sum()
                })
                .collect(),
        )
    }

    /// Cosine between the TF-IDF vectors of the query and every question.
    pub fn tfidf_scores(&self, query: &str) -> Option<Vec<f64>> {
        let terms = self.query_terms(query)?;
        let mut q: HashMap<u32, f64> = HashMap::new();
        for &t in terms.iter().flatten() {
            *q.entry(t).or_default() += 1.0;
        }
        let q: Vec<(u32, f64)> = q.into_iter().map(|(t, c)| (t, c * self.tfidf_idf(t))).collect();
        let q_norm = q.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        Some(
            self.docs
                .iter()
                .zip(&self.tfidf_norm)
                .map(|(doc, &d_norm)| {
                    if q_norm == 0.0 || d_norm == 0.0 {
                        return 0.0;
                    }
                    let dot: f64 = q
                        .iter()
                        .map(|&(t, w)| {
                            doc.binary_search_by_key(&t, |&(id, _)| id)
                                .map_or(0.0, |i| doc[i].1 as f64 * self.tfidf_idf(t) * w)
                        })
                        .sum();
                    (dot / (q_norm * d_norm)).clamp(0.0, 1.0)
                })
                .collect(),
        )
    }

    fn rank(&self, scores: Option<Vec<f64>>, k: usize) -> LexicalRanking {
        match scores {
            None => LexicalRanking {
                intents: Vec::new(),
                empty_query: true,
            },
            Some(s) => {
                let mut intents = aggregate(&s, &self.row_intent, &self.intent_names);
                intents.truncate(k);
                LexicalRanking {
                    intents,
                    empty_query: false,
                }
            }
        }
    }

    pub fn bm25_rank(&self, query: &str, k: usize) -> LexicalRanking {
        self.rank(self.bm25_scores(query), k)
    }

    pub fn tfidf_rank(&self, query: &str, k: usize) -> LexicalRanking {
        self.rank(self.tfidf_scores(query), k)
    }
}

/// One-off BM25 ranking; build a [`LexicalIndex`] for repeated queries.
pub fn bm25_rank(corpus: &FaqCorpus, query: &str, k: usize) -> Result<LexicalRanking, RetrievalError> {
    Ok(LexicalIndex::build(corpus)?.bm25_rank(query, k))
}

/// One-off TF-IDF ranking.
pub fn tfidf_rank(corpus: &FaqCorpus, query: &str, k: usize) -> Result<LexicalRanking, RetrievalError> {
    Ok(LexicalIndex::build(corpus)?.tfidf_rank(query, k))
}
