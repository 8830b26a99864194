//! Subcommand configs and their execution.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use faqir_bench::{render_table, run_load, LoadProfile};
use faqir_core::corpus::{load_corpus_with_schema, stats};
use faqir_core::encoder::write_head;
use faqir_core::metrics::{emit_report, evaluate, uniform_thresholds, ReportFormat};
use faqir_core::retrieval::{build_index_with, rank_queries, LexicalIndex};
use faqir_core::sampling::{
    build_triplets, generate_all_pairs, n_choose_2, read_pairs, write_pairs, write_triplets, DEFAULT_CAP,
    DEFAULT_WEIGHT_FLOOR,
};
use faqir_core::training::{
    base_embeddings, finetune, intent_labels, pretrain_then_finetune, prepare_pairs, train_on_embeddings, Mining,
    Objective, TrainingSet,
};
use faqir_core::{CorpusFormat, Exec, FaqCorpus, Gold, RankedPrediction, SamplingConfig, TrainConfig};
use faqir_server::{BaseConfig, FaqInput, ServerConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::manifest::{Run, RunManifest};
use crate::spec::{BaseArgs, BaseSpec, DatasetArgs, DatasetSpec, HeadArgs, HeadSpec};

pub trait Command: Serialize + DeserializeOwned + Default {
    const NAME: &'static str;

    /// Replace environment-dependent settings with concrete values.
    fn finalize(&mut self) {}

    fn validate(&self) -> CliResult<()>;

    fn seed(&self) -> u64;

    fn execute(&self, run: &mut Run) -> CliResult<()>;
}

/// Validate, create the run directory, execute and write the manifest.
/// Returns the manifest path.
pub fn launch<C: Command>(mut cfg: C, out_dir: &Path, replay_of: Option<&Path>) -> CliResult<PathBuf> {
    cfg.finalize();
    cfg.validate()?;
    let value = serde_json::to_value(&cfg).expect("config serializes");
    let mut run = Run::create(out_dir, C::NAME, value, cfg.seed())?;
    if let Some(p) = replay_of {
        run.set_replay_of(p);
    }
    match cfg.execute(&mut run) {
        Ok(()) => run.write_manifest("ok"),
        Err(e) => {
            if let Ok(m) = run.write_manifest(&format!("failed: {e}")) {
                eprintln!("manifest: {}", m.display());
            }
            Err(e)
        }
    }
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s.into_bytes()
}

fn write_tsv<F>(run: &mut Run, name: &str, f: F) -> CliResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    run.artifact(name, &buf, true)?;
    Ok(())
}

fn parse_mining(s: &str) -> Result<Mining, String> {
    match s {
        "batch-hard" => Ok(Mining::BatchHard),
        "batch-all" => Ok(Mining::BatchAll),
        other => Err(format!("unknown mining `{other}` (expected batch-hard or batch-all)")),
    }
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    #[serde(flatten)]
    pub dataset: DatasetSpec,
    /// Domain count reported in the stats (not derivable from the data).
    pub domains: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            domains: 1,
        }
    }
}

#[derive(Debug, Default, clap::Args, Serialize)]
pub struct IngestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long)]
    pub domains: Option<usize>,
}

impl Command for IngestConfig {
    const NAME: &'static str = "ingest";

    fn finalize(&mut self) {
        self.dataset.finalize();
    }

    fn validate(&self) -> CliResult<()> {
        self.dataset.validate()
    }

    fn seed(&self) -> u64 {
        self.dataset.shots_seed
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let corpus = self.dataset.load(run)?;
        let s = stats(&corpus, self.domains)?;
        run.artifact("corpus.json", &json_bytes(&corpus), true)?;
        run.artifact("stats.json", format!("{}\n", s.to_json_line()).as_bytes(), true)?;
        println!("{}", s.to_json_line());
        Ok(())
    }
}

// ---------------------------------------------------------------- pairs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairsMode {
    /// Every C(N, 2) pair with weight 1.
    All,
    /// Difficulty-weighted sample of the pairs.
    Hard,
    Triplets,
}

impl std::str::FromStr for PairsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Self::All),
            "hard" => Ok(Self::Hard),
            "triplets" => Ok(Self::Triplets),
            other => Err(format!("unknown mode `{other}` (expected all, hard or triplets)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairsConfig {
    #[serde(flatten)]
    pub dataset: DatasetSpec,
    #[serde(flatten)]
    pub base: BaseSpec,
    #[serde(flatten)]
    pub head: HeadSpec,
    pub mode: PairsMode,
    pub cap: usize,
    pub balanced_size: Option<usize>,
    pub weight_floor: f64,
    pub seed: u64,
    /// Triplets to draw in `triplets` mode.
    pub triplets: usize,
}

impl Default for PairsConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            base: BaseSpec::default(),
            head: HeadSpec::default(),
            mode: PairsMode::Hard,
            cap: DEFAULT_CAP,
            balanced_size: None,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            seed: 0,
            triplets: 10_000,
        }
    }
}

#[derive(Debug, Default, clap::Args, Serialize)]
pub struct PairsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub base: BaseArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub head: HeadArgs,
    /// all, hard or triplets
    #[arg(long)]
    pub mode: Option<PairsMode>,
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub balanced_size: Option<usize>,
    #[arg(long)]
    pub weight_floor: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub triplets: Option<usize>,
}

impl PairsConfig {
    fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            cap: self.cap,
            balanced_size: self.balanced_size,
            seed: self.seed,
            weight_floor: self.weight_floor,
        }
    }
}

impl Command for PairsConfig {
    const NAME: &'static str = "pairs";

    fn finalize(&mut self) {
        self.dataset.finalize();
    }

    fn validate(&self) -> CliResult<()> {
        self.dataset.validate()?;
        self.base.validate()?;
        self.head.validate()?;
        self.sampling()
            .validate()
            .map_err(|e| CliError::validation(e.to_string()))?;
        if self.mode == PairsMode::Triplets && self.triplets == 0 {
            return Err(CliError::validation("triplets: must be positive"));
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let corpus = self.dataset.load(run)?;
        let summary = match self.mode {
            PairsMode::All => {
                let pairs = generate_all_pairs(&corpus)?;
                write_tsv(run, "pairs.tsv", |w| write_pairs(w, &corpus, &pairs))?;
                pair_summary(&corpus, &pairs)
            }
            PairsMode::Hard => {
                let base = self.base.build(run)?;
                let (head, _) = self.head.load(corpus.tenant_id(), base.dim(), run)?;
                let emb = base_embeddings(base.as_ref(), &corpus)?;
                let pairs = prepare_pairs(&corpus, &emb, &head, &self.sampling())?;
                write_tsv(run, "pairs.tsv", |w| write_pairs(w, &corpus, &pairs))?;
                pair_summary(&corpus, &pairs)
            }
            PairsMode::Triplets => {
                let base = self.base.build(run)?;
                let (head, _) = self.head.load(corpus.tenant_id(), base.dim(), run)?;
                let projected = base_embeddings(base.as_ref(), &corpus)?
                    .iter()
                    .map(|x| head.apply(x))
                    .collect::<Result<Vec<_>, _>>()?;
                let ts = build_triplets(&corpus, &projected, self.triplets, self.weight_floor, self.seed)?;
                write_tsv(run, "triplets.tsv", |w| write_triplets(w, &corpus, &ts))?;
                json!({ "mode": "triplets", "questions": corpus.len(), "written": ts.len() })
            }
        };
        run.artifact("summary.json", &json_bytes(&summary), true)?;
        println!("{summary}");
        Ok(())
    }
}

fn pair_summary(corpus: &FaqCorpus, pairs: &[faqir_core::QuestionPair]) -> serde_json::Value {
    let positives = pairs.iter().filter(|p| p.label == 1).count();
    json!({
        "questions": corpus.len(),
        "all_pairs": n_choose_2(corpus.len()),
        "written": pairs.len(),
        "positives": positives,
        "negatives": pairs.len() - positives,
    })
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainCmdConfig {
    #[serde(flatten)]
    pub dataset: DatasetSpec,
    #[serde(flatten)]
    pub base: BaseSpec,
    #[serde(flatten)]
    pub head: HeadSpec,
    pub objective: Objective,
    /// Pre-sampled pair file (from `pairs`) used instead of sampling.
    pub pairs: Option<PathBuf>,
    pub cap: usize,
    pub balanced_size: Option<usize>,
    pub weight_floor: f64,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub warmup_fraction: f64,
    pub max_grad_norm: f64,
    pub contrastive_margin: f64,
    pub triplet_margin: f64,
    pub weight_decay: f64,
    pub log_interval: usize,
    pub mining: Mining,
    /// Training files of related datasets for triplet pre-training.
    pub pretrain_train: Vec<PathBuf>,
    pub pretrain_iterations: usize,
    pub pretrain_triplets: usize,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            dataset: DatasetSpec::default(),
            base: BaseSpec::default(),
            head: HeadSpec::default(),
            objective: Objective::Contrastive,
            pairs: None,
            cap: DEFAULT_CAP,
            balanced_size: None,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            seed: t.seed,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            iterations: t.iterations,
            warmup_fraction: t.warmup_fraction,
            max_grad_norm: t.max_grad_norm,
            contrastive_margin: t.contrastive_margin,
            triplet_margin: t.triplet_margin,
            weight_decay: t.weight_decay,
            log_interval: t.log_interval,
            mining: t.mining,
            pretrain_train: Vec::new(),
            pretrain_iterations: 0,
            pretrain_triplets: 2_000,
        }
    }
}

#[derive(Debug, Default, clap::Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub base: BaseArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub head: HeadArgs,
    /// contrastive, triplet or online-triplet
    #[arg(long)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub balanced_size: Option<usize>,
    #[arg(long)]
    pub weight_floor: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub warmup_fraction: Option<f64>,
    #[arg(long)]
    pub max_grad_norm: Option<f64>,
    #[arg(long)]
    pub contrastive_margin: Option<f64>,
    #[arg(long)]
    pub triplet_margin: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub log_interval: Option<usize>,
    /// batch-hard or batch-all
    #[arg(long, value_parser = parse_mining)]
    pub mining: Option<Mining>,
    /// Repeat for each pre-training corpus
    #[arg(long)]
    pub pretrain_train: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub pretrain_iterations: Option<usize>,
    #[arg(long)]
    pub pretrain_triplets: Option<usize>,
}

impl TrainCmdConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            iterations: self.iterations,
            warmup_fraction: self.warmup_fraction,
            max_grad_norm: self.max_grad_norm,
            contrastive_margin: self.contrastive_margin,
            triplet_margin: self.triplet_margin,
            weight_decay: self.weight_decay,
            seed: self.seed,
            log_interval: self.log_interval,
            mining: self.mining,
        }
    }

    fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            cap: self.cap,
            balanced_size: self.balanced_size,
            seed: self.seed,
            weight_floor: self.weight_floor,
        }
    }
}

impl Command for TrainCmdConfig {
    const NAME: &'static str = "train";

    fn finalize(&mut self) {
        self.dataset.finalize();
    }

    fn validate(&self) -> CliResult<()> {
        self.dataset.validate()?;
        self.base.validate()?;
        self.head.validate()?;
        self.train_config()
            .validate()
            .map_err(|e| CliError::validation(e.to_string()))?;
        self.sampling()
            .validate()
            .map_err(|e| CliError::validation(e.to_string()))?;
        if self.pairs.is_some() && self.objective == Objective::Triplet {
            return Err(CliError::validation("pairs: the triplet objective samples its own triplets"));
        }
        if self.pretrain_iterations > 0 {
            if self.pretrain_train.is_empty() {
                return Err(CliError::validation("pretrain_train: required when pretrain_iterations > 0"));
            }
            if self.objective != Objective::Contrastive || self.pairs.is_some() {
                return Err(CliError::validation(
                    "pretrain_iterations: pre-training is followed by contrastive fine-tuning only",
                ));
            }
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let corpus = self.dataset.load(run)?;
        let base = self.base.build(run)?;
        let (init, fresh) = self.head.load(corpus.tenant_id(), base.dim(), run)?;
        if fresh {
            write_head(&run.dir().join("init.head"), &init)?;
            run.record("init.head", true)?;
        }
        let cfg = self.train_config();
        let sampling = self.sampling();
        let (head, report) = if let Some(p) = &self.pairs {
            run.input(p)?;
            let file = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let pairs = read_pairs(BufReader::new(file), &corpus)?;
            let set = match self.objective {
                Objective::OnlineTriplet => TrainingSet::OnlineTriplet(pairs),
                _ => TrainingSet::Pairs(pairs),
            };
            let emb = base_embeddings(base.as_ref(), &corpus)?;
            let (h, r) = train_on_embeddings(&init, &emb, &intent_labels(&corpus), &set, &cfg)?;
            (h, serde_json::to_value(r)?)
        } else if self.pretrain_iterations > 0 {
            let mut corpora = Vec::with_capacity(self.pretrain_train.len());
            for p in &self.pretrain_train {
                run.input(p)?;
                let tenant = p.file_stem().and_then(|s| s.to_str()).unwrap_or("pretrain");
                corpora.push(
                    load_corpus_with_schema(p, &self.dataset.format.schema(), tenant)
                        .with_context(|| format!("loading {}", p.display()))?,
                );
            }
            let cfg_pt = TrainConfig {
                iterations: self.pretrain_iterations,
                ..cfg.clone()
            };
            let (h, r) = pretrain_then_finetune(
                &corpora,
                &corpus,
                base.as_ref(),
                &init,
                self.pretrain_triplets,
                &sampling,
                &cfg_pt,
                &cfg,
            )?;
            (h, serde_json::to_value(r)?)
        } else {
            let (h, r) = finetune(&corpus, base.as_ref(), &init, self.objective, &sampling, &cfg)?;
            (h, serde_json::to_value(r)?)
        };
        write_head(&run.dir().join("head.bin"), &head)?;
        run.record("head.bin", true)?;
        run.artifact("train_report.json", &json_bytes(&report), false)?;
        let ft = report.get("finetune").unwrap_or(&report);
        println!(
            "{}",
            json!({
                "tenant": head.tenant_id,
                "head_version": head.version,
                "initial_loss": ft["initial_loss"],
                "final_loss": ft["final_loss"],
                "head": run.dir().join("head.bin"),
            })
        );
        Ok(())
    }
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Neural,
    Bm25,
    Tfidf,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "neural" => Ok(Self::Neural),
            "bm25" => Ok(Self::Bm25),
            "tfidf" | "tf-idf" => Ok(Self::Tfidf),
            other => Err(format!("unknown method `{other}` (expected neural, bm25 or tfidf)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    #[serde(flatten)]
    pub dataset: DatasetSpec,
    #[serde(flatten)]
    pub base: BaseSpec,
    #[serde(flatten)]
    pub head: HeadSpec,
    pub method: Method,
    pub k: usize,
    pub threshold_min: f64,
    pub threshold_max: f64,
    pub threshold_steps: usize,
    /// Run every loop on the calling thread.
    pub sequential: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            base: BaseSpec::default(),
            head: HeadSpec::default(),
            method: Method::Neural,
            k: 3,
            threshold_min: 0.0,
            threshold_max: 1.0,
            threshold_steps: 21,
            sequential: false,
        }
    }
}

#[derive(Debug, Default, clap::Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dataset: DatasetArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub base: BaseArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub head: HeadArgs,
    /// neural, bm25 or tfidf
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub threshold_min: Option<f64>,
    #[arg(long)]
    pub threshold_max: Option<f64>,
    #[arg(long)]
    pub threshold_steps: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub sequential: Option<bool>,
}

impl Command for EvalConfig {
    const NAME: &'static str = "eval";

    fn finalize(&mut self) {
        self.dataset.finalize();
    }

    fn validate(&self) -> CliResult<()> {
        self.dataset.validate()?;
        if self.method == Method::Neural {
            self.base.validate()?;
            self.head.validate()?;
        }
        if self.k == 0 {
            return Err(CliError::validation("k: must be at least 1"));
        }
        if self.threshold_steps == 0 || !(self.threshold_max >= self.threshold_min) {
            return Err(CliError::validation(
                "threshold_steps: need at least one step and threshold_max >= threshold_min",
            ));
        }
        if self.threshold_steps > 1 && self.threshold_max == self.threshold_min {
            return Err(CliError::validation("threshold_max: must exceed threshold_min for several steps"));
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.head.init_seed
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        let corpus = self.dataset.load(run)?;
        let mut texts: Vec<&str> = corpus.test().iter().map(|q| q.text.as_str()).collect();
        let mut gold: Vec<Gold> = corpus.test().iter().map(|q| Gold::Intent(q.intent.clone())).collect();
        texts.extend(corpus.oos_queries().iter().map(String::as_str));
        gold.extend(corpus.oos_queries().iter().map(|_| Gold::Oos));
        if corpus.test().is_empty() {
            return Err(CliError::validation("test: the dataset has no in-scope test queries"));
        }
        let exec = if self.sequential { Exec::Sequential } else { Exec::default() };
        let rankings: Vec<Vec<(String, f64)>> = match self.method {
            Method::Neural => {
                let base = self.base.build(run)?;
                let (head, _) = self.head.load(corpus.tenant_id(), base.dim(), run)?;
                let index = build_index_with(&corpus, base.as_ref(), &head, exec)?;
                rank_queries(&index, base.as_ref(), &head, &texts, exec)?
                    .into_iter()
                    .map(|r| r.into_iter().map(|s| (s.intent, s.score)).collect())
                    .collect()
            }
            Method::Bm25 | Method::Tfidf => {
                let lex = LexicalIndex::build(&corpus)?;
                let n = corpus.intents().len();
                texts
                    .iter()
                    .map(|t| {
                        let r = if self.method == Method::Bm25 { lex.bm25_rank(t, n) } else { lex.tfidf_rank(t, n) };
                        r.intents.into_iter().map(|s| (s.intent, s.score)).collect()
                    })
                    .collect()
            }
        };
        let preds: Vec<RankedPrediction> = rankings
            .into_iter()
            .zip(gold)
            .enumerate()
            .map(|(i, (ranked, gold))| RankedPrediction {
                query_id: format!("q{i}"),
                ranked,
                gold,
            })
            .collect();
        let name = serde_json::to_value(self.method)?.as_str().unwrap_or("").to_string();
        let thresholds = uniform_thresholds(self.threshold_min, self.threshold_max, self.threshold_steps);
        let report = evaluate(&name, &preds, self.k, &thresholds)?;
        emit_report(&report, &run.dir().join("eval_report.json"), ReportFormat::Json)?;
        run.record("eval_report.json", true)?;
        emit_report(&report, &run.dir().join("sweep.csv"), ReportFormat::Csv)?;
        run.record("sweep.csv", true)?;
        println!(
            "{}",
            json!({
                "method": name,
                "k": self.k,
                "success_rate": report.success_rate,
                "mrr": report.mrr,
                "ndcg": report.ndcg,
                "map": report.map,
                "top1_accuracy": report.top1_accuracy,
            })
        );
        Ok(())
    }
}

// ---------------------------------------------------------------- serve

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    #[serde(flatten)]
    pub server: ServerConfig,
    /// Corpus files registered as tenants at startup (tenant id = file stem).
    pub preload: Vec<PathBuf>,
    pub preload_format: CorpusFormat,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            server: ServerConfig::default(),
            preload: Vec::new(),
            preload_format: CorpusFormat::Hint3Csv,
        }
    }
}

#[derive(Debug, Default, clap::Args, Serialize)]
pub struct ServeArgs {
    /// host:port to bind
    #[arg(long, env = "FAQIR_LISTEN")]
    pub listen: Option<String>,
    #[arg(long)]
    pub head_dim: Option<usize>,
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Repeat for each tenant corpus to register at startup
    #[arg(long)]
    pub preload: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub preload_format: Option<CorpusFormat>,
}

impl Command for ServeConfig {
    const NAME: &'static str = "serve";

    fn validate(&self) -> CliResult<()> {
        self.server
            .validate()
            .map_err(|e| CliError::validation(e.to_string()))
    }

    fn seed(&self) -> u64 {
        self.server.train.seed
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        if let BaseConfig::Lookup { path } = &self.server.base {
            run.input(path)?;
        }
        let registry = self.server.registry()?;
        for p in &self.preload {
            run.input(p)?;
            let tenant = p.file_stem().and_then(|s| s.to_str()).unwrap_or("tenant").to_string();
            let corpus = load_corpus_with_schema(p, &self.preload_format.schema(), &tenant)
                .with_context(|| format!("loading {}", p.display()))?;
            let faqs = corpus
                .train()
                .iter()
                .map(|e| FaqInput {
                    text: e.text.clone(),
                    intent: e.intent.clone(),
                    answer: e.answer.clone(),
                })
                .collect();
            registry.register_tenant(&tenant, faqs, None)?;
        }
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        let listen = self.server.listen.clone();
        rt.block_on(async {
            let listener = tokio::net::TcpListener::bind(&listen)
                .await
                .with_context(|| format!("binding {listen}"))?;
            let addr = listener.local_addr()?;
            run.write_manifest("serving")?;
            println!("listening on http://{addr}");
            tracing::info!(%addr, tenants = registry.len(), "serving");
            faqir_server::serve(listener, registry, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
            Ok::<(), CliError>(())
        })
    }
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub url: String,
    pub concurrency: Vec<usize>,
    pub duration_secs: f64,
    pub warmup_secs: f64,
    /// `id` or `id=weight`.
    pub tenants: Vec<String>,
    pub queries: Vec<String>,
    /// One query per line, appended to `queries`.
    pub queries_file: Option<PathBuf>,
    pub seed: u64,
    pub max_error_rate: f64,
    pub request_timeout_ms: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let p = LoadProfile::default();
        Self {
            url: "http://127.0.0.1:8080".into(),
            concurrency: p.concurrency,
            duration_secs: p.duration_secs,
            warmup_secs: p.warmup_secs,
            tenants: Vec::new(),
            queries: Vec::new(),
            queries_file: None,
            seed: p.seed,
            max_error_rate: p.max_error_rate,
            request_timeout_ms: p.request_timeout_ms,
        }
    }
}

#[derive(Debug, Default, clap::Args, Serialize)]
pub struct BenchArgs {
    /// Server base URL
    #[arg(long)]
    pub url: Option<String>,
    /// Comma-separated concurrency levels
    #[arg(long, value_delimiter = ',')]
    pub concurrency: Option<Vec<usize>>,
    #[arg(long)]
    pub duration_secs: Option<f64>,
    #[arg(long)]
    pub warmup_secs: Option<f64>,
    /// Repeat: `id` or `id=weight`
    #[arg(long)]
    pub tenants: Option<Vec<String>>,
    /// Repeat for each query text
    #[arg(long)]
    pub queries: Option<Vec<String>>,
    #[arg(long)]
    pub queries_file: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_error_rate: Option<f64>,
    #[arg(long)]
    pub request_timeout_ms: Option<u64>,
}

impl BenchConfig {
    pub fn profile(&self) -> CliResult<LoadProfile> {
        let mut tenants = Vec::with_capacity(self.tenants.len());
        for t in &self.tenants {
            let (id, w) = match t.split_once('=') {
                Some((id, w)) => (
                    id,
                    w.parse::<f64>()
                        .map_err(|_| CliError::validation(format!("tenants: bad weight in `{t}`")))?,
                ),
                None => (t.as_str(), 1.0),
            };
            tenants.push((id.to_string(), w));
        }
        let mut queries = self.queries.clone();
        if let Some(p) = &self.queries_file {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::validation(format!("queries_file: {}: {e}", p.display())))?;
            queries.extend(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string));
        }
        let profile = LoadProfile {
            concurrency: self.concurrency.clone(),
            duration_secs: self.duration_secs,
            warmup_secs: self.warmup_secs,
            tenants,
            queries,
            seed: self.seed,
            max_error_rate: self.max_error_rate,
            request_timeout_ms: self.request_timeout_ms,
        };
        profile.validate().map_err(|e| CliError::validation(e.to_string()))?;
        Ok(profile)
    }
}

impl Command for BenchConfig {
    const NAME: &'static str = "bench";

    fn validate(&self) -> CliResult<()> {
        self.profile().map(|_| ())
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn execute(&self, run: &mut Run) -> CliResult<()> {
        if let Some(p) = &self.queries_file {
            run.input(p)?;
        }
        let result = run_load(&self.url, &self.profile()?)?;
        let table = render_table(&result);
        run.artifact("load_result.json", &json_bytes(&result), false)?;
        run.artifact("table.txt", table.as_bytes(), false)?;
        print!("{table}");
        Ok(())
    }
}

// ---------------------------------------------------------------- replay

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayOutcome {
    pub manifest: PathBuf,
    /// Deterministic artifacts compared against the original run.
    pub compared: Vec<String>,
    pub mismatched: Vec<String>,
}

/// Re-run the subcommand recorded in `manifest_path` and compare its
/// deterministic artifacts with the original ones.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> CliResult<ReplayOutcome> {
    let original = RunManifest::load(manifest_path)?;
    for (path, hash) in &original.inputs {
        let now = crate::manifest::sha256_file(Path::new(path))
            .map_err(|e| CliError::validation(format!("input {path}: {e}")))?;
        if &now != hash {
            return Err(CliError::validation(format!("input {path} changed since the original run")));
        }
    }
    fn again<C: Command>(m: &RunManifest, out: &Path, from: &Path) -> CliResult<PathBuf> {
        launch(crate::resolve::from_value::<C>(m.config.clone())?, out, Some(from))
    }
    let manifest = match original.subcommand.as_str() {
        IngestConfig::NAME => again::<IngestConfig>(&original, out_dir, manifest_path)?,
        PairsConfig::NAME => again::<PairsConfig>(&original, out_dir, manifest_path)?,
        TrainCmdConfig::NAME => again::<TrainCmdConfig>(&original, out_dir, manifest_path)?,
        EvalConfig::NAME => again::<EvalConfig>(&original, out_dir, manifest_path)?,
        ServeConfig::NAME => again::<ServeConfig>(&original, out_dir, manifest_path)?,
        BenchConfig::NAME => again::<BenchConfig>(&original, out_dir, manifest_path)?,
        other => return Err(CliError::validation(format!("subcommand: `{other}` cannot be replayed"))),
    };
    let fresh = RunManifest::load(&manifest)?;
    let mut compared = Vec::new();
    let mut mismatched = Vec::new();
    for (name, a) in original.artifacts.iter().filter(|(_, a)| a.deterministic) {
        compared.push(name.clone());
        if fresh.artifacts.get(name).map(|b| &b.sha256) != Some(&a.sha256) {
            mismatched.push(name.clone());
        }
    }
    Ok(ReplayOutcome {
        manifest,
        compared,
        mismatched,
    })
}
