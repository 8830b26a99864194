//! Load testing for the retrieval service.
//!
//! Each concurrency level runs a closed loop: every virtual user sends one
//! query, waits for the answer, and sends the next. Requests started during
//! the warmup window are dropped from the statistics. Per-user logs are
//! merged only after the level finishes.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid load profile: {0}")]
    Profile(String),
    #[error("no samples")]
    NoSamples,
    #[error("quantile {0} outside (0, 1]")]
    Quantile(f64),
    #[error("error rate {rate:.3} at concurrency {concurrency} exceeds {limit:.3}")]
    TooManyErrors { concurrency: usize, rate: f64, limit: f64 },
    #[error("reading {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadProfile {
    pub concurrency: Vec<usize>,
    /// Length of each level, warmup included.
    pub duration_secs: f64,
    pub warmup_secs: f64,
    /// Tenant ids with relative request weights.
    pub tenants: Vec<(String, f64)>,
    pub queries: Vec<String>,
    pub seed: u64,
    /// Highest tolerated fraction of failed requests per level.
    pub max_error_rate: f64,
    pub request_timeout_ms: u64,
}

impl Default for LoadProfile {
    fn default() -> Self {
        Self {
            concurrency: vec![1, 2, 4, 8],
            duration_secs: 10.0,
            warmup_secs: 2.0,
            tenants: Vec::new(),
            queries: Vec::new(),
            seed: 0,
            max_error_rate: 0.05,
            request_timeout_ms: 5_000,
        }
    }
}

impl LoadProfile {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Profile(m.to_string()));
        if self.queries.is_empty() {
            return bad("query pool is empty");
        }
        if self.tenants.is_empty() {
            return bad("tenant mix is empty");
        }
        if self.tenants.iter().any(|(_, w)| !(*w >= 0.0 && w.is_finite())) || self.tenants.iter().all(|(_, w)| *w == 0.0) {
            return bad("tenant weights must be non-negative with a positive sum");
        }
        if self.concurrency.is_empty() || self.concurrency.contains(&0) {
            return bad("concurrency levels must be positive");
        }
        if !(self.warmup_secs >= 0.0 && self.duration_secs > self.warmup_secs) {
            return bad("duration must exceed warmup");
        }
        if !(0.0..=1.0).contains(&self.max_error_rate) {
            return bad("max_error_rate must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let p: Self = toml::from_str(text).map_err(|e| BenchError::Profile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub concurrency: usize,
    pub median_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub rps: f64,
    pub requests: usize,
    pub successes: usize,
    pub errors: usize,
    pub window_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadResult {
    pub levels: Vec<LevelResult>,
    /// Index of the first level whose RPS gain over the previous level is
    /// below 5%.
    pub knee: Option<usize>,
}

/// Nearest-rank percentiles: the `ceil(q * N)`-th smallest sample.
pub fn latency_percentiles(samples: &[f64], quantiles: &[f64]) -> Result<Vec<f64>, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::NoSamples);
    }
    if let Some(&q) = quantiles.iter().find(|&&q| !(q > 0.0 && q <= 1.0)) {
        return Err(BenchError::Quantile(q));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(quantiles
        .iter()
        .map(|q| {
            let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
            sorted[rank - 1]
        })
        .collect())
}

pub const KNEE_GAIN: f64 = 0.05;

pub fn find_knee(levels: &[LevelResult]) -> Option<usize> {
    levels
        .windows(2)
        .position(|w| w[1].rps < w[0].rps * (1.0 + KNEE_GAIN))
        .map(|i| i + 1)
}

struct Sample {
    started: Duration,
    latency: Duration,
    ok: bool,
}

fn query_url(base: &str, tenant: &str) -> String {
    format!("{}/tenants/{tenant}/query", base.trim_end_matches('/'))
}

fn user_loop(base: &str, profile: &LoadProfile, level: usize, user: usize, t0: Instant) -> Vec<Sample> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_millis(profile.request_timeout_ms)))
        .build()
        .into();
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    rng.set_stream(((level as u64) << 32) | user as u64);
    let tenants = WeightedIndex::new(profile.tenants.iter().map(|(_, w)| *w)).expect("validated weights");
    let urls: Vec<String> = profile.tenants.iter().map(|(t, _)| query_url(base, t)).collect();
    let end = Duration::from_secs_f64(profile.duration_secs);
    let mut out = Vec::new();
    loop {
        let started = t0.elapsed();
        if started >= end {
            break;
        }
        let url = &urls[tenants.sample(&mut rng)];
        let text = &profile.queries[rng.random_range(0..profile.queries.len())];
        let sent = Instant::now();
        let ok = match agent.post(url).send_json(serde_json::json!({ "text": text })) {
            Ok(mut r) => r.status().is_success() && r.body_mut().read_to_vec().is_ok(),
            Err(_) => false,
        };
        out.push(Sample {
            started,
            latency: sent.elapsed(),
            ok,
        });
    }
    out
}

fn run_level(base: &str, profile: &LoadProfile, level: usize, concurrency: usize) -> LevelResult {
    let t0 = Instant::now();
    let logs: Vec<Vec<Sample>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..concurrency)
            .map(|u| s.spawn(move || user_loop(base, profile, level, u, t0)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("virtual user panicked")).collect()
    });
    let warmup = Duration::from_secs_f64(profile.warmup_secs);
    let measured: Vec<&Sample> = logs.iter().flatten().filter(|s| s.started >= warmup).collect();
    let ok_ms: Vec<f64> = measured
        .iter()
        .filter(|s| s.ok)
        .map(|s| s.latency.as_secs_f64() * 1e3)
        .collect();
    let pct = latency_percentiles(&ok_ms, &[0.5, 0.9, 0.99]).unwrap_or_else(|_| vec![f64::NAN; 3]);
    let window_secs = profile.duration_secs - profile.warmup_secs;
    LevelResult {
        concurrency,
        median_ms: pct[0],
        p90_ms: pct[1],
        p99_ms: pct[2],
        rps: ok_ms.len() as f64 / window_secs,
        requests: measured.len(),
        successes: ok_ms.len(),
        errors: measured.len() - ok_ms.len(),
        window_secs,
    }
}

/// Run every concurrency level of `profile` against the server at `base_url`.
pub fn run_load(base_url: &str, profile: &LoadProfile) -> Result<LoadResult, BenchError> {
    profile.validate()?;
    let mut levels = Vec::with_capacity(profile.concurrency.len());
    for (i, &c) in profile.concurrency.iter().enumerate() {
        let r = run_level(base_url, profile, i, c);
        let rate = if r.requests == 0 { 1.0 } else { r.errors as f64 / r.requests as f64 };
        if rate > profile.max_error_rate {
            return Err(BenchError::TooManyErrors {
                concurrency: c,
                rate,
                limit: profile.max_error_rate,
            });
        }
        levels.push(r);
    }
    Ok(LoadResult {
        knee: find_knee(&levels),
        levels,
    })
}

/// Plain-text table with one row per concurrency level.
pub fn render_table(result: &LoadResult) -> String {
    let mut out = format!(
        "{:>11} | {:>10} | {:>10} | {:>8} | {:>7}\n",
        "concurrency", "median ms", "p90 ms", "RPS", "errors"
    );
    out.push_str(&"-".repeat(58));
    out.push('\n');
    for (i, l) in result.levels.iter().enumerate() {
        let mark = if result.knee == Some(i) { " <- knee" } else { "" };
        out.push_str(&format!(
            "{:>11} | {:>10.1} | {:>10.1} | {:>8.1} | {:>7}{mark}\n",
            l.concurrency, l.median_ms, l.p90_ms, l.rps, l.errors
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(c: usize, rps: f64) -> LevelResult {
        LevelResult {
            concurrency: c,
            median_ms: 1.0,
            p90_ms: 2.0,
            p99_ms: 3.0,
            rps,
            requests: 0,
            successes: 0,
            errors: 0,
            window_secs: 1.0,
        }
    }

    #[test]
    fn nearest_rank() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(latency_percentiles(&s, &[0.5, 0.9, 1.0, 0.001]).unwrap(), vec![50.0, 90.0, 100.0, 1.0]);
        assert_eq!(latency_percentiles(&[7.0], &[0.1, 0.5, 0.99]).unwrap(), vec![7.0; 3]);
        assert!(matches!(latency_percentiles(&[], &[0.5]), Err(BenchError::NoSamples)));
        assert!(matches!(latency_percentiles(&[1.0], &[0.0]), Err(BenchError::Quantile(_))));
    }

    #[test]
    fn knee_is_first_stagnant_level() {
        let ls = vec![level(1, 10.0), level(2, 19.0), level(4, 19.5), level(8, 30.0)];
        assert_eq!(find_knee(&ls), Some(2));
        assert_eq!(find_knee(&ls[..2]), None);
        let t = render_table(&LoadResult { knee: Some(2), levels: ls });
        assert!(t.lines().nth(4).unwrap().ends_with("<- knee"));
    }

    #[test]
    fn profile_validation() {
        let mut p = LoadProfile::default();
        assert!(matches!(p.validate(), Err(BenchError::Profile(m)) if m.contains("query pool")));
        p.queries = vec!["q".into()];
        p.tenants = vec![("t".into(), 1.0)];
        p.validate().unwrap();
        p.warmup_secs = p.duration_secs;
        assert!(p.validate().is_err());
        let p = LoadProfile::from_toml(
            "concurrency = [1, 4]\nduration_secs = 3.0\nwarmup_secs = 1.0\ntenants = [[\"a\", 1.0]]\nqueries = [\"hi\"]",
        )
        .unwrap();
        assert_eq!(p.concurrency, vec![1, 4]);
        assert!(LoadProfile::from_toml("bogus = 1").is_err());
    }
}
