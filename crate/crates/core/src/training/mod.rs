//! Head training: losses, optimizer and the training loops.
//!
//! Base embeddings of every referenced question are computed once up front;
//! the loop only ever touches the head. Training is single-threaded and
//! fully determined by `TrainConfig::seed`.

mod loss;
mod optim;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use loss::{
    contrastive_loss, cosine_with_grad, online_triplet_batch, triplet_loss, Mining, OnlineTripletOutput,
    TripletGrads,
};
pub use optim::{lr_at, optimizer_step, warmup_steps, AdamState, HeadGrad, HeadParams, StepStats};

use crate::corpus::FaqCorpus;
use crate::encoder::{BaseEncoder, EncoderError, TenantHead};
use crate::par::Exec;
use crate::sampling::{self, MixtureTriplet, QuestionPair, SamplingConfig, SamplingError, Triplet};

/// Learning rate used for full transformer-layer fine-tuning; selectable for
/// fidelity runs, but too small for a freshly initialised linear head.
pub const PAPER_LEARNING_RATE: f64 = 2e-5;
/// Iterations of the task-adaptive triplet pre-training stage at full scale.
pub const PAPER_PRETRAIN_ITERATIONS: usize = 140_000;
/// Triplets drawn per dataset for the pre-training mixture at full scale.
pub const PAPER_PRETRAIN_TRIPLETS_PER_DATASET: usize = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub warmup_fraction: f64,
    pub max_grad_norm: f64,
    pub contrastive_margin: f64,
    pub triplet_margin: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Iterations per loss-curve point.
    pub log_interval: usize,
    pub mining: Mining,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-3,
            batch_size: 16,
            iterations: 10_000,
            warmup_fraction: 0.10,
            max_grad_norm: 1.0,
            contrastive_margin: 0.5,
            triplet_margin: 0.15,
            weight_decay: 0.01,
            seed: 0,
            log_interval: 100,
            mining: Mining::BatchHard,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1)");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive");
        }
        if !(self.contrastive_margin >= 0.0 && self.triplet_margin >= 0.0) {
            return bad("margins must be non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.log_interval == 0 {
            return bad("log_interval must be positive");
        }
        Ok(())
    }
}

/// What a training run optimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainingSet {
    /// Contrastive loss over labelled pairs.
    Pairs(Vec<QuestionPair>),
    /// Triplet loss over fixed triplets.
    Triplets(Vec<Triplet>),
    /// Online (in-batch mined) triplet loss; batches are drawn from the pairs
    /// and flattened into labelled questions.
    OnlineTriplet(Vec<QuestionPair>),
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        match self {
            TrainingSet::Pairs(p) | TrainingSet::OnlineTriplet(p) => p.len(),
            TrainingSet::Triplets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn objective(&self) -> Objective {
        match self {
            TrainingSet::Pairs(_) => Objective::Contrastive,
            TrainingSet::Triplets(_) => Objective::Triplet,
            TrainingSet::OnlineTriplet(_) => Objective::OnlineTriplet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Contrastive,
    Triplet,
    OnlineTriplet,
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "contrastive" => Ok(Self::Contrastive),
            "triplet" => Ok(Self::Triplet),
            "online-triplet" => Ok(Self::OnlineTriplet),
            other => Err(format!("unknown objective `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub objective: Objective,
    /// Mean batch loss over each `log_interval` window.
    pub loss_curve: Vec<f64>,
    /// Loss over the evaluation units before the first update.
    pub initial_loss: f64,
    /// Same units after the last update.
    pub final_loss: f64,
    pub iterations: usize,
    /// Batches in which online mining found no valid anchor.
    pub skipped_batches: usize,
    pub wall_clock_secs: f64,
    pub head_version: u64,
    pub config: TrainConfig,
}

/// Units scored for `initial_loss` / `final_loss`.
const EVAL_UNITS: usize = 2048;

fn to_params(head: &TenantHead) -> HeadParams {
    HeadParams {
        d_in: head.d_in(),
        d_out: head.d_out(),
        w: head.weights().iter().map(|&x| x as f64).collect(),
        b: head.bias().iter().map(|&x| x as f64).collect(),
    }
}

fn project(params: &HeadParams, x: &[f32]) -> Vec<f64> {
    params
        .w
        .chunks_exact(params.d_in)
        .zip(&params.b)
        .map(|(row, b)| row.iter().zip(x).map(|(w, &xi)| w * xi as f64).sum::<f64>() + b)
        .collect()
}

fn accumulate(grad: &mut HeadGrad, g_out: &[f64], x: &[f32], scale: f64) {
    let d_in = x.len();
    for (r, &g) in g_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let g = g * scale;
        grad.b[r] += g;
        let row = &mut grad.w[r * d_in..(r + 1) * d_in];
        for (w, &xi) in row.iter_mut().zip(x) {
            *w += g * xi as f64;
        }
    }
}

struct Batch {
    loss: f64,
    skipped: bool,
}

/// Loss over `units` and, if `grad` is given, its gradient accumulated as a
/// mean over the batch.
fn batch_loss(
    params: &HeadParams,
    embeddings: &[Vec<f32>],
    labels: &[u32],
    set: &TrainingSet,
    units: &[usize],
    config: &TrainConfig,
    mut grad: Option<&mut HeadGrad>,
) -> Result<Batch, TrainError> {
    let scale = 1.0 / units.len() as f64;
    let mut total = 0.0;
    match set {
        TrainingSet::Pairs(pairs) => {
            for &u in units {
                let p = pairs[u];
                let (xa, xb) = (&embeddings[p.a as usize], &embeddings[p.b as usize]);
                let (za, zb) = (project(params, xa), project(params, xb));
                let (l, ga, gb) = contrastive_loss(&za, &zb, p.label, config.contrastive_margin)?;
                total += l;
                if let Some(g) = grad.as_deref_mut() {
                    accumulate(g, &ga, xa, scale);
                    accumulate(g, &gb, xb, scale);
                }
            }
        }
        TrainingSet::Triplets(triplets) => {
            for &u in units {
                let t = triplets[u];
                let xs = [
                    &embeddings[t.anchor as usize],
                    &embeddings[t.positive as usize],
                    &embeddings[t.negative as usize],
                ];
                let zs: Vec<Vec<f64>> = xs.iter().map(|x| project(params, x)).collect();
                let (l, gs) = triplet_loss(&zs[0], &zs[1], &zs[2], config.triplet_margin)?;
                total += l;
                if l > 0.0 {
                    if let Some(g) = grad.as_deref_mut() {
                        accumulate(g, &gs.anchor, xs[0], scale);
                        accumulate(g, &gs.positive, xs[1], scale);
                        accumulate(g, &gs.negative, xs[2], scale);
                    }
                }
            }
        }
        TrainingSet::OnlineTriplet(pairs) => {
            let rows: Vec<usize> = units
                .iter()
                .flat_map(|&u| [pairs[u].a as usize, pairs[u].b as usize])
                .collect();
            let zs: Vec<Vec<f64>> = rows.iter().map(|&r| project(params, &embeddings[r])).collect();
            let row_labels: Vec<u32> = rows.iter().map(|&r| labels[r]).collect();
            let out = online_triplet_batch(&zs, &row_labels, config.triplet_margin, config.mining)?;
            if let Some(g) = grad.as_deref_mut() {
                for (gz, &r) in out.grads.iter().zip(&rows) {
                    accumulate(g, gz, &embeddings[r], 1.0);
                }
            }
            return Ok(Batch {
                loss: out.loss,
                skipped: out.no_valid_anchor,
            });
        }
    }
    Ok(Batch {
        loss: total * scale,
        skipped: false,
    })
}

fn eval_units(set_len: usize, seed: u64) -> Vec<usize> {
    if set_len <= EVAL_UNITS {
        return (0..set_len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1_5eed);
    let mut v: Vec<usize> = rand::seq::index::sample(&mut rng, set_len, EVAL_UNITS).into_vec();
    v.sort_unstable();
    v
}

fn eval_loss(
    params: &HeadParams,
    embeddings: &[Vec<f32>],
    labels: &[u32],
    set: &TrainingSet,
    units: &[usize],
    config: &TrainConfig,
) -> Result<f64, TrainError> {
    if let TrainingSet::OnlineTriplet(_) = set {
        // Mine over fixed chunks so the score is comparable before and after.
        let mut total = 0.0;
        let mut n = 0;
        for chunk in units.chunks(config.batch_size) {
            total += batch_loss(params, embeddings, labels, set, chunk, config, None)?.loss;
            n += 1;
        }
        return Ok(if n == 0 { 0.0 } else { total / n as f64 });
    }
    Ok(batch_loss(params, embeddings, labels, set, units, config, None)?.loss)
}

/// Train `init` on precomputed base embeddings.
///
/// `embeddings[i]` is the base embedding of row `i`, which units in `set`
/// index into; `labels[i]` is its class (used by online mining). The returned
/// head has `version = init.version + 1`.
pub fn train_on_embeddings(
    init: &TenantHead,
    embeddings: &[Vec<f32>],
    labels: &[u32],
    set: &TrainingSet,
    config: &TrainConfig,
) -> Result<(TenantHead, TrainReport), TrainError> {
    config.validate()?;
    if set.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if let Some(x) = embeddings.iter().find(|x| x.len() != init.d_in()) {
        return Err(EncoderError::DimensionMismatch {
            expected: init.d_in(),
            actual: x.len(),
        }
        .into());
    }
    let start = Instant::now();
    let mut params = to_params(init);
    let mut state = AdamState::new(params.d_in, params.d_out);
    let mut grad = HeadGrad::zeros(params.d_in, params.d_out);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let eval = eval_units(set.len(), config.seed);
    let initial_loss = eval_loss(&params, embeddings, labels, set, &eval, config)?;

    let mut curve = Vec::with_capacity(config.iterations / config.log_interval);
    let mut window = 0.0;
    let mut skipped = 0;
    let mut units = vec![0usize; config.batch_size];
    for step in 0..config.iterations {
        for u in units.iter_mut() {
            *u = rng.random_range(0..set.len());
        }
        grad.clear();
        let batch = batch_loss(&params, embeddings, labels, set, &units, config, Some(&mut grad))?;
        if !batch.loss.is_finite() {
            return Err(TrainError::NonFiniteGradient { step });
        }
        skipped += usize::from(batch.skipped);
        optimizer_step(&mut params, &mut grad, &mut state, step, config)?;
        window += batch.loss;
        if (step + 1) % config.log_interval == 0 {
            curve.push(window / config.log_interval as f64);
            window = 0.0;
        }
    }
    let final_loss = eval_loss(&params, embeddings, labels, set, &eval, config)?;
    let head = TenantHead::from_parts(
        init.tenant_id.clone(),
        params.d_in,
        params.d_out,
        params.w.iter().map(|&x| x as f32).collect(),
        params.b.iter().map(|&x| x as f32).collect(),
        init.version + 1,
    )
    .map_err(|_| TrainError::NonFiniteGradient { step: config.iterations })?;
    let report = TrainReport {
        objective: set.objective(),
        loss_curve: curve,
        initial_loss,
        final_loss,
        iterations: config.iterations,
        skipped_batches: skipped,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        head_version: head.version,
        config: config.clone(),
    };
    Ok((head, report))
}

/// Base embeddings of a corpus' training questions, in row order.
pub fn base_embeddings(base: &dyn BaseEncoder, corpus: &FaqCorpus) -> Result<Vec<Vec<f32>>, EncoderError> {
    let texts: Vec<&str> = corpus.train().iter().map(|e| e.text.as_str()).collect();
    base.embed_batch(&texts, Exec::default())
}

/// Intent of each training row as a dense integer id.
pub fn intent_labels(corpus: &FaqCorpus) -> Vec<u32> {
    let ids: std::collections::BTreeMap<&str, u32> = corpus
        .intents()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32))
        .collect();
    corpus.train().iter().map(|e| ids[e.intent.as_str()]).collect()
}

/// Train a tenant head on one corpus.
pub fn train_head(
    corpus: &FaqCorpus,
    base: &dyn BaseEncoder,
    head: &TenantHead,
    set: &TrainingSet,
    config: &TrainConfig,
) -> Result<(TenantHead, TrainReport), TrainError> {
    let embeddings = base_embeddings(base, corpus)?;
    train_on_embeddings(head, &embeddings, &intent_labels(corpus), set, config)
}

/// All pairs of the corpus, weighted with the current model (base + `head`)
/// and hard-sampled according to `sampling`.
pub fn prepare_pairs(
    corpus: &FaqCorpus,
    embeddings: &[Vec<f32>],
    head: &TenantHead,
    sampling: &SamplingConfig,
) -> Result<Vec<QuestionPair>, TrainError> {
    let mut pairs = sampling::generate_all_pairs(corpus)?;
    let projected = embeddings
        .iter()
        .map(|x| head.apply(x))
        .collect::<Result<Vec<_>, _>>()?;
    sampling::compute_pair_weights(&mut pairs, &projected, sampling.weight_floor)?;
    Ok(sampling::hard_sample(&pairs, sampling)?)
}

/// Sample pairs and fine-tune with the given objective (contrastive or
/// online triplet).
pub fn finetune(
    corpus: &FaqCorpus,
    base: &dyn BaseEncoder,
    head: &TenantHead,
    objective: Objective,
    sampling: &SamplingConfig,
    config: &TrainConfig,
) -> Result<(TenantHead, TrainReport), TrainError> {
    let embeddings = base_embeddings(base, corpus)?;
    let labels = intent_labels(corpus);
    let set = match objective {
        Objective::Contrastive => TrainingSet::Pairs(prepare_pairs(corpus, &embeddings, head, sampling)?),
        Objective::OnlineTriplet => {
            TrainingSet::OnlineTriplet(prepare_pairs(corpus, &embeddings, head, sampling)?)
        }
        Objective::Triplet => {
            let projected = embeddings
                .iter()
                .map(|x| head.apply(x))
                .collect::<Result<Vec<_>, _>>()?;
            let count = sampling.balanced_size.unwrap_or(sampling.cap);
            TrainingSet::Triplets(sampling::build_triplets(
                corpus,
                &projected,
                count,
                sampling.weight_floor,
                sampling.seed,
            )?)
        }
    };
    train_on_embeddings(head, &embeddings, &labels, &set, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Absent when the pre-training stage ran zero iterations.
    pub pretrain: Option<TrainReport>,
    pub finetune: TrainReport,
}

/// Task-adaptive pre-training on in-domain triplets from `corpora`, then
/// contrastive fine-tuning on `tenant`.
///
/// `shared` is the starting head for pre-training; its result is relabelled
/// for the tenant and used as the fine-tuning initialisation. With zero
/// pre-training iterations this is exactly [`finetune`] from `shared`.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_then_finetune(
    corpora: &[FaqCorpus],
    tenant: &FaqCorpus,
    base: &dyn BaseEncoder,
    shared: &TenantHead,
    triplets_per_dataset: usize,
    sampling: &SamplingConfig,
    config_pt: &TrainConfig,
    config_ft: &TrainConfig,
) -> Result<(TenantHead, PipelineReport), TrainError> {
    let (init, pretrain) = if config_pt.iterations == 0 {
        (shared.clone(), None)
    } else {
        let (pretrained, report) = pretrain(corpora, base, shared, triplets_per_dataset, sampling, config_pt)?;
        (pretrained.relabel(tenant.tenant_id(), shared.version), Some(report))
    };
    let (head, ft) = finetune(tenant, base, &init, Objective::Contrastive, sampling, config_ft)?;
    Ok((head, PipelineReport { pretrain, finetune: ft }))
}

/// Triplet-loss pre-training of `shared` on an offline, within-dataset
/// triplet mixture.
pub fn pretrain(
    corpora: &[FaqCorpus],
    base: &dyn BaseEncoder,
    shared: &TenantHead,
    triplets_per_dataset: usize,
    sampling: &SamplingConfig,
    config: &TrainConfig,
) -> Result<(TenantHead, TrainReport), TrainError> {
    let per_corpus: Vec<Vec<Vec<f32>>> = corpora
        .iter()
        .map(|c| base_embeddings(base, c))
        .collect::<Result<_, _>>()?;
    let projected: Vec<Vec<Vec<f32>>> = per_corpus
        .iter()
        .map(|rows| rows.iter().map(|x| shared.apply(x)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let inputs: Vec<(&FaqCorpus, &[Vec<f32>])> = corpora
        .iter()
        .zip(&projected)
        .map(|(c, e)| (c, e.as_slice()))
        .collect();
    let mixture = sampling::build_pretrain_mixture(&inputs, triplets_per_dataset, sampling.weight_floor, sampling.seed)?;

    // One embedding table for all datasets; triplet rows are offset into it.
    let mut offsets = Vec::with_capacity(corpora.len());
    let mut table = Vec::new();
    let mut labels = Vec::new();
    let mut label_base = 0u32;
    for (c, rows) in corpora.iter().zip(per_corpus) {
        offsets.push(table.len() as u32);
        labels.extend(intent_labels(c).into_iter().map(|l| l + label_base));
        label_base += c.intents().len() as u32;
        table.extend(rows);
    }
    let shift = |m: &MixtureTriplet| {
        let o = offsets[m.dataset as usize];
        Triplet {
            anchor: m.triplet.anchor + o,
            positive: m.triplet.positive + o,
            negative: m.triplet.negative + o,
        }
    };
    let set = TrainingSet::Triplets(mixture.iter().map(shift).collect());
    train_on_embeddings(shared, &table, &labels, &set, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{head_init, head_init_with_noise};

    /// Two well-separated clusters with a nuisance direction shared by all.
    fn two_clusters() -> (Vec<Vec<f32>>, Vec<u32>) {
        let mut emb = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let t = i as f32 * 0.1;
            emb.push(vec![1.0, 0.1 * t, 2.0 + t, 0.0]);
            labels.push(0);
            emb.push(vec![0.1 * t, 1.0, 2.0 - t, 0.0]);
            labels.push(1);
        }
        (emb, labels)
    }

    fn all_pairs(labels: &[u32]) -> Vec<QuestionPair> {
        let mut v = Vec::new();
        for a in 0..labels.len() {
            for b in a + 1..labels.len() {
                v.push(QuestionPair {
                    a: a as u32,
                    b: b as u32,
                    label: u8::from(labels[a] == labels[b]),
                    weight: 1.0,
                });
            }
        }
        v
    }

    fn cfg(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            learning_rate: 1e-2,
            log_interval: 10,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn contrastive_training_converges_on_separable_data() {
        let (emb, labels) = two_clusters();
        let init = head_init("t", 4, 4, 1).unwrap();
        let set = TrainingSet::Pairs(all_pairs(&labels));
        let (_, r) = train_on_embeddings(&init, &emb, &labels, &set, &cfg(200)).unwrap();
        assert!(r.final_loss < 0.1 * r.initial_loss, "{} -> {}", r.initial_loss, r.final_loss);
        assert_eq!(r.loss_curve.len(), 20);
    }

    #[test]
    fn zero_iterations_keeps_weights() {
        let (emb, labels) = two_clusters();
        let init = head_init("t", 4, 4, 1).unwrap();
        let set = TrainingSet::Pairs(all_pairs(&labels));
        let (h, r) = train_on_embeddings(&init, &emb, &labels, &set, &cfg(0)).unwrap();
        assert_eq!(h.weights(), init.weights());
        assert_eq!(h.bias(), init.bias());
        assert_eq!(h.version, init.version + 1);
        assert!(r.loss_curve.is_empty());
    }

    #[test]
    fn zero_learning_rate_is_identity_on_weights() {
        let (emb, labels) = two_clusters();
        let init = head_init("t", 4, 4, 1).unwrap();
        let set = TrainingSet::Pairs(all_pairs(&labels));
        let mut c = cfg(50);
        c.learning_rate = 0.0;
        let (h, _) = train_on_embeddings(&init, &emb, &labels, &set, &c).unwrap();
        assert_eq!(h.weights(), init.weights());
    }

    #[test]
    fn same_seed_same_weights() {
        let (emb, labels) = two_clusters();
        let init = head_init("t", 4, 4, 1).unwrap();
        let set = TrainingSet::Pairs(all_pairs(&labels));
        let (a, _) = train_on_embeddings(&init, &emb, &labels, &set, &cfg(60)).unwrap();
        let (b, _) = train_on_embeddings(&init, &emb, &labels, &set, &cfg(60)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn triplet_and_online_objectives_reduce_loss() {
        let (emb, labels) = two_clusters();
        let init = head_init_with_noise("t", 4, 4, 1, 0.05).unwrap();
        let mut triplets = Vec::new();
        for a in 0..labels.len() {
            for p in 0..labels.len() {
                if p != a && labels[p] == labels[a] {
                    let n = (0..labels.len()).find(|&n| labels[n] != labels[a]).unwrap();
                    triplets.push(Triplet { anchor: a as u32, positive: p as u32, negative: n as u32 });
                }
            }
        }
        let mut c = cfg(200);
        c.triplet_margin = 0.5;
        let (_, r) = train_on_embeddings(&init, &emb, &labels, &TrainingSet::Triplets(triplets), &c).unwrap();
        assert!(r.final_loss < r.initial_loss);
        let set = TrainingSet::OnlineTriplet(all_pairs(&labels));
        let (_, r) = train_on_embeddings(&init, &emb, &labels, &set, &c).unwrap();
        assert!(r.final_loss < r.initial_loss, "{} -> {}", r.initial_loss, r.final_loss);
    }

    #[test]
    fn invalid_inputs() {
        let (emb, labels) = two_clusters();
        let init = head_init("t", 4, 4, 1).unwrap();
        let empty = TrainingSet::Pairs(vec![]);
        assert!(matches!(
            train_on_embeddings(&init, &emb, &labels, &empty, &cfg(1)),
            Err(TrainError::EmptyTrainingSet)
        ));
        let mut c = cfg(1);
        c.warmup_fraction = 1.0;
        let set = TrainingSet::Pairs(all_pairs(&labels));
        assert!(matches!(train_on_embeddings(&init, &emb, &labels, &set, &c), Err(TrainError::Config(_))));
        let bad = vec![vec![f32::NAN, 0.0, 0.0, 0.0]; 20];
        assert!(train_on_embeddings(&init, &bad, &labels, &set, &cfg(5)).is_err());
    }

    #[test]
    fn paper_scale_constants() {
        assert_eq!(PAPER_PRETRAIN_ITERATIONS, 140_000);
        assert_eq!(TrainConfig::default().triplet_margin, 0.15);
        assert_eq!(TrainConfig::default().batch_size, 16);
        assert_eq!(TrainConfig::default().iterations, 10_000);
        assert_eq!(PAPER_LEARNING_RATE, 2e-5);
        assert_eq!(6 * PAPER_PRETRAIN_TRIPLETS_PER_DATASET, 600_000);
    }
}
