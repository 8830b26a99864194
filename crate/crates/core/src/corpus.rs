//! FAQ corpora: the labelled question sets a tenant trains and is evaluated on.
//!
//! A corpus holds the training questions (each tagged with an intent and an
//! optional answer payload), a labelled in-scope test split and a list of
//! out-of-scope (OOS) test queries. Corpora are immutable once built.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {reason}")]
    Malformed { path: PathBuf, line: u64, reason: String },
    #[error("{path}: missing column `{column}` in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("corpus is empty")]
    Empty,
    #[error("duplicate question id `{0}`")]
    DuplicateId(String),
    #[error("question `{0}` has empty text or intent")]
    BlankEntry(String),
    #[error("test query refers to unknown intent `{0}`")]
    UnknownIntent(String),
}

/// One training question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaqEntry {
    pub question_id: String,
    pub text: String,
    pub intent: String,
    /// Answer text or a system-action tag; retrieval never looks at it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

/// An in-scope test query with its gold intent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub text: String,
    pub intent: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaqCorpus {
    tenant_id: String,
    train: Vec<FaqEntry>,
    test: Vec<LabeledQuery>,
    oos_queries: Vec<String>,
    intents: BTreeSet<String>,
}

impl FaqCorpus {
    /// Build a corpus, checking that ids are unique, texts and intents are
    /// non-blank and every test intent occurs in the training split.
    pub fn new(
        tenant_id: impl Into<String>,
        train: Vec<FaqEntry>,
        test: Vec<LabeledQuery>,
        oos_queries: Vec<String>,
    ) -> Result<Self, CorpusError> {
        if train.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut seen = HashSet::with_capacity(train.len());
        for e in &train {
            if e.text.trim().is_empty() || e.intent.trim().is_empty() {
                return Err(CorpusError::BlankEntry(e.question_id.clone()));
            }
            if !seen.insert(e.question_id.as_str()) {
                return Err(CorpusError::DuplicateId(e.question_id.clone()));
            }
        }
        let intents: BTreeSet<String> = train.iter().map(|e| e.intent.clone()).collect();
        if let Some(q) = test.iter().find(|q| !intents.contains(&q.intent)) {
            return Err(CorpusError::UnknownIntent(q.intent.clone()));
        }
        Ok(Self {
            tenant_id: tenant_id.into(),
            train,
            test,
            oos_queries,
            intents,
        })
    }

    /// Build from `(text, intent)` rows, assigning ids `"{tenant}/{row}"`.
    pub fn from_rows<I, S, T>(tenant_id: &str, rows: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let train = rows
            .into_iter()
            .enumerate()
            .map(|(i, (text, intent))| FaqEntry {
                question_id: format!("{tenant_id}/{i}"),
                text: text.into(),
                intent: intent.into(),
                answer: None,
            })
            .collect();
        Self::new(tenant_id, train, Vec::new(), Vec::new())
    }

    /// Replace the evaluation splits, keeping the training questions.
    pub fn with_eval(
        self,
        test: Vec<LabeledQuery>,
        oos_queries: Vec<String>,
    ) -> Result<Self, CorpusError> {
        Self::new(self.tenant_id, self.train, test, oos_queries)
    }

    pub fn tenant_id(&self) -> &str {
        &self.tenant_id
    }

    pub fn train(&self) -> &[FaqEntry] {
        &self.train
    }

    pub fn test(&self) -> &[LabeledQuery] {
        &self.test
    }

    pub fn oos_queries(&self) -> &[String] {
        &self.oos_queries
    }

    pub fn intents(&self) -> &BTreeSet<String> {
        &self.intents
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    /// Training-row indices grouped by intent, intents in sorted order.
    pub fn indices_by_intent(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.train.iter().enumerate() {
            groups.entry(e.intent.as_str()).or_default().push(i);
        }
        groups
    }
}

/// Column layout of a corpus CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub text_column: String,
    pub label_column: String,
    #[serde(default)]
    pub answer_column: Option<String>,
    /// Rows carrying this label are out-of-scope queries, not intents.
    #[serde(default)]
    pub oos_label: Option<String>,
}

/// Known on-disk corpus layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusFormat {
    /// `sentence,label`; OOS rows are labelled `NO_NODES_DETECTED`.
    #[serde(rename = "hint3-csv")]
    Hint3Csv,
    /// `text,category`; OOS rows (if any) are labelled `oos`.
    #[serde(rename = "dialoglue-csv")]
    DialoGlueCsv,
}

impl CorpusFormat {
    pub fn schema(self) -> CsvSchema {
        match self {
            CorpusFormat::Hint3Csv => CsvSchema {
                text_column: "sentence".into(),
                label_column: "label".into(),
                answer_column: None,
                oos_label: Some("NO_NODES_DETECTED".into()),
            },
            CorpusFormat::DialoGlueCsv => CsvSchema {
                text_column: "text".into(),
                label_column: "category".into(),
                answer_column: None,
                oos_label: Some("oos".into()),
            },
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hint3-csv" | "hint3" => Ok(Self::Hint3Csv),
            "dialoglue-csv" | "dialoglue" => Ok(Self::DialoGlueCsv),
            other => Err(format!("unknown corpus format `{other}` (expected hint3-csv or dialoglue-csv)")),
        }
    }
}

struct CsvRow {
    text: String,
    label: String,
    answer: Option<String>,
}

fn read_rows(path: &Path, schema: &CsvSchema) -> Result<Vec<CsvRow>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(file);
    let malformed = |line: u64, reason: String| CorpusError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let headers = reader
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CorpusError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let text_col = column(&schema.text_column)?;
    let label_col = column(&schema.label_column)?;
    let answer_col = schema.answer_column.as_deref().map(column).transpose()?;

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let text = record.get(text_col).unwrap_or("").trim();
        let label = record.get(label_col).unwrap_or("").trim();
        if text.is_empty() {
            return Err(malformed(line, "empty text".into()));
        }
        if label.is_empty() {
            return Err(malformed(line, "empty label".into()));
        }
        let answer = answer_col
            .and_then(|c| record.get(c))
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(str::to_string);
        rows.push(CsvRow {
            text: text.to_string(),
            label: label.to_string(),
            answer,
        });
    }
    Ok(rows)
}

fn tenant_from_path(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("tenant")
        .to_string()
}

/// Load a training file in one of the known layouts. The tenant id is the
/// file stem.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<FaqCorpus, CorpusError> {
    let path = path.as_ref();
    load_corpus_with_schema(path, &format.schema(), &tenant_from_path(path))
}

/// Load a training file. Duplicate `(text, intent)` rows keep their first
/// occurrence; OOS-labelled rows go to the corpus' OOS list.
pub fn load_corpus_with_schema(
    path: &Path,
    schema: &CsvSchema,
    tenant_id: &str,
) -> Result<FaqCorpus, CorpusError> {
    let rows = read_rows(path, schema)?;
    let mut seen = HashSet::new();
    let mut train = Vec::new();
    let mut oos = Vec::new();
    for row in rows {
        if schema.oos_label.as_deref() == Some(row.label.as_str()) {
            oos.push(row.text);
            continue;
        }
        if !seen.insert((row.text.clone(), row.label.clone())) {
            continue;
        }
        train.push(FaqEntry {
            question_id: format!("{tenant_id}/{}", train.len()),
            text: row.text,
            intent: row.label,
            answer: row.answer,
        });
    }
    if train.is_empty() {
        return Err(CorpusError::Empty);
    }
    FaqCorpus::new(tenant_id, train, Vec::new(), oos)
}

/// Load an evaluation file: in-scope queries with gold intents, and OOS
/// queries. Duplicates are kept (each row is one test case).
pub fn load_queries(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
) -> Result<(Vec<LabeledQuery>, Vec<String>), CorpusError> {
    let path = path.as_ref();
    let mut test = Vec::new();
    let mut oos = Vec::new();
    for row in read_rows(path, schema)? {
        if schema.oos_label.as_deref() == Some(row.label.as_str()) {
            oos.push(row.text);
        } else {
            test.push(LabeledQuery {
                text: row.text,
                intent: row.label,
            });
        }
    }
    Ok((test, oos))
}

/// Load a train file plus an optional test file into one corpus.
pub fn load_dataset(
    train_path: &Path,
    test_path: Option<&Path>,
    schema: &CsvSchema,
    tenant_id: &str,
) -> Result<FaqCorpus, CorpusError> {
    let corpus = load_corpus_with_schema(train_path, schema, tenant_id)?;
    match test_path {
        None => Ok(corpus),
        Some(p) => {
            let (test, mut oos) = load_queries(p, schema)?;
            let mut all_oos = corpus.oos_queries.clone();
            all_oos.append(&mut oos);
            corpus.with_eval(test, all_oos)
        }
    }
}

/// Keep at most `k` training questions per intent, chosen with a seeded RNG.
/// Intents with fewer than `k` questions keep all of them; relative order of
/// the kept rows is preserved. Re-applying with the same `k` is a no-op.
pub fn fewshot_subset(corpus: &FaqCorpus, k: usize, seed: u64) -> FaqCorpus {
    assert!(k >= 1, "k must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; corpus.train.len()];
    for (_, indices) in corpus.indices_by_intent() {
        let take = k.min(indices.len());
        for pos in rand::seq::index::sample(&mut rng, indices.len(), take) {
            keep[indices[pos]] = true;
        }
    }
    let train = corpus
        .train
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(e, _)| e.clone())
        .collect();
    FaqCorpus {
        tenant_id: corpus.tenant_id.clone(),
        train,
        test: corpus.test.clone(),
        oos_queries: corpus.oos_queries.clone(),
        intents: corpus.intents.clone(),
    }
}

/// Samples-per-intent summary of a training split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub tenant_id: String,
    pub num_intents: usize,
    /// Not derivable from the data; carried through from dataset metadata.
    pub num_domains: usize,
    pub min_per_intent: usize,
    pub max_per_intent: usize,
    /// Lower median for an even number of intents.
    pub median_per_intent: usize,
    pub total_samples: usize,
}

impl CorpusStats {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }
}

/// Lower median: element `(n - 1) / 2` of the sorted list.
pub fn lower_median(values: &mut [usize]) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    Some(values[(values.len() - 1) / 2])
}

pub fn stats(corpus: &FaqCorpus, num_domains: usize) -> Result<CorpusStats, CorpusError> {
    if corpus.train.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut counts: Vec<usize> = corpus.indices_by_intent().values().map(Vec::len).collect();
    let total = counts.iter().sum();
    let median = lower_median(&mut counts).ok_or(CorpusError::Empty)?;
    Ok(CorpusStats {
        tenant_id: corpus.tenant_id.clone(),
        num_intents: counts.len(),
        num_domains,
        min_per_intent: counts[0],
        max_per_intent: counts[counts.len() - 1],
        median_per_intent: median,
        total_samples: total,
    })
}
