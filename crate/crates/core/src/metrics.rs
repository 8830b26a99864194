//! Retrieval and intent-detection metrics over intent-level rankings.
//!
//! Each query has exactly one relevant intent, so nDCG reduces to
//! `1 / log2(1 + rank)` and MAP to MRR.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no predictions to evaluate")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("query {0} has no gold intent")]
    NoGold(String),
    #[error("sweep thresholds must be strictly increasing (position {0})")]
    ThresholdOrder(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "intent")]
pub enum Gold {
    Intent(String),
    Oos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub query_id: String,
    /// Intents with scores, best first.
    pub ranked: Vec<(String, f64)>,
    pub gold: Gold,
}

impl RankedPrediction {
    /// 1-based rank of the gold intent, if it is ranked at all.
    pub fn gold_rank(&self) -> Option<usize> {
        match &self.gold {
            Gold::Intent(g) => self.ranked.iter().position(|(i, _)| i == g).map(|p| p + 1),
            Gold::Oos => None,
        }
    }

    /// Score of the first-ranked intent; `-inf` for an empty ranking.
    pub fn top_score(&self) -> f64 {
        self.ranked.first().map_or(f64::NEG_INFINITY, |(_, s)| *s)
    }
}

fn in_scope_ranks(preds: &[RankedPrediction], k: usize) -> Result<Vec<Option<usize>>, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    preds
        .iter()
        .map(|p| match p.gold {
            Gold::Oos => Err(MetricsError::NoGold(p.query_id.clone())),
            Gold::Intent(_) => Ok(p.gold_rank().filter(|&r| r <= k)),
        })
        .collect()
}

fn mean_of(ranks: &[Option<usize>], gain: impl Fn(usize) -> f64) -> f64 {
    let total: f64 = ranks.iter().map(|r| r.map_or(0.0, &gain)).sum();
    total / ranks.len() as f64
}

/// Fraction of queries with the gold intent in the top `k`.
pub fn success_rate_at_k(preds: &[RankedPrediction], k: usize) -> Result<f64, MetricsError> {
    Ok(mean_of(&in_scope_ranks(preds, k)?, |_| 1.0))
}

pub fn mrr_at_k(preds: &[RankedPrediction], k: usize) -> Result<f64, MetricsError> {
    Ok(mean_of(&in_scope_ranks(preds, k)?, |r| 1.0 / r as f64))
}

pub fn ndcg_at_k(preds: &[RankedPrediction], k: usize) -> Result<f64, MetricsError> {
    Ok(mean_of(&in_scope_ranks(preds, k)?, |r| 1.0 / (1.0 + r as f64).log2()))
}

/// Average precision truncated at `k`, averaged over queries.
pub fn map_at_k(preds: &[RankedPrediction], k: usize) -> Result<f64, MetricsError> {
    in_scope_ranks(preds, k)?;
    let mut total = 0.0;
    for p in preds {
        let Gold::Intent(gold) = &p.gold else { unreachable!() };
        let mut hits = 0usize;
        let mut precision_sum = 0.0;
        for (i, (intent, _)) in p.ranked.iter().take(k).enumerate() {
            if intent == gold {
                hits += 1;
                precision_sum += hits as f64 / (i + 1) as f64;
            }
        }
        // One relevant intent per query.
        total += precision_sum / 1.0;
    }
    Ok(total / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    /// `None` when the prediction set has no OOS queries.
    pub oos_recall: Option<f64>,
    pub in_scope_accuracy: f64,
}

/// OOS recall and in-scope accuracy at each threshold.
///
/// A query counts as rejected when its top score is below the threshold; an
/// in-scope query is correct only if its gold intent is ranked first and it
/// is not rejected.
pub fn oos_sweep(preds: &[RankedPrediction], thresholds: &[f64]) -> Result<Vec<SweepPoint>, MetricsError> {
    if let Some(i) = thresholds.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(MetricsError::ThresholdOrder(i + 1));
    }
    let (oos, in_scope): (Vec<&RankedPrediction>, Vec<&RankedPrediction>) =
        preds.iter().partition(|p| p.gold == Gold::Oos);
    if in_scope.is_empty() && oos.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let oos_recall = (!oos.is_empty())
                .then(|| oos.iter().filter(|p| p.top_score() < t).count() as f64 / oos.len() as f64);
            let correct = in_scope
                .iter()
                .filter(|p| p.gold_rank() == Some(1) && p.top_score() >= t)
                .count();
            SweepPoint {
                threshold: t,
                oos_recall,
                in_scope_accuracy: if in_scope.is_empty() {
                    0.0
                } else {
                    correct as f64 / in_scope.len() as f64
                },
            }
        })
        .collect())
}

/// `steps` evenly spaced thresholds from `lo` to `hi` inclusive.
pub fn uniform_thresholds(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub k: usize,
    pub num_in_scope: usize,
    pub num_oos: usize,
    pub success_rate: f64,
    pub mrr: f64,
    pub ndcg: f64,
    pub map: f64,
    /// Fraction of in-scope queries with the gold intent ranked first.
    pub top1_accuracy: f64,
    pub threshold_sweep: Vec<SweepPoint>,
    /// Set when OOS recall is undefined because there are no OOS queries.
    pub oos_recall_undefined: bool,
}

/// Evaluate in-scope ranking metrics at `k` and sweep OOS thresholds.
pub fn evaluate(
    method: &str,
    preds: &[RankedPrediction],
    k: usize,
    thresholds: &[f64],
) -> Result<EvalReport, MetricsError> {
    let in_scope: Vec<RankedPrediction> = preds.iter().filter(|p| p.gold != Gold::Oos).cloned().collect();
    let num_oos = preds.len() - in_scope.len();
    Ok(EvalReport {
        method: method.to_string(),
        k,
        num_in_scope: in_scope.len(),
        num_oos,
        success_rate: success_rate_at_k(&in_scope, k)?,
        mrr: mrr_at_k(&in_scope, k)?,
        ndcg: ndcg_at_k(&in_scope, k)?,
        map: map_at_k(&in_scope, k)?,
        top1_accuracy: success_rate_at_k(&in_scope, 1)?,
        threshold_sweep: oos_sweep(preds, thresholds)?,
        oos_recall_undefined: num_oos == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

pub const SWEEP_CSV_HEADER: &str = "threshold,oos_recall,in_scope_accuracy";

/// The sweep as CSV; undefined OOS recall is an empty field.
pub fn sweep_csv(sweep: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for p in sweep {
        let recall = p.oos_recall.map(|r| format!("{r:.6}")).unwrap_or_default();
        out.push_str(&format!("{:.6},{recall},{:.6}\n", p.threshold, p.in_scope_accuracy));
    }
    out
}

pub fn emit_report(report: &EvalReport, path: &Path, format: ReportFormat) -> Result<(), MetricsError> {
    let bytes = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => sweep_csv(&report.threshold_sweep),
    };
    let io = |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(bytes.as_bytes()).map_err(io)
}
