//! Training units for head fine-tuning.
//!
//! Every unordered pair of training questions is labelled 1 when both share
//! an intent and 0 otherwise. Pairs are weighted by difficulty (similar
//! negatives and dissimilar positives weigh more) and then drawn with
//! replacement, per label, to a fixed budget. Triplets for task-adaptive
//! pre-training reuse the same weighting around each anchor.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::FaqCorpus;
use crate::par::Exec;
use crate::vector::{dot, normalize};

pub const DEFAULT_CAP: usize = 200_000;
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum SamplingError {
    #[error("need at least 2 training questions, corpus has {0}")]
    TooFewQuestions(usize),
    #[error("no embedding for training row {0}")]
    MissingEmbedding(usize),
    #[error("embedding for training row {0} has zero norm")]
    ZeroNorm(usize),
    #[error("no pairs with label {0} to sample from")]
    MissingLabel(u8),
    #[error("corpus has a single intent, so no negatives exist")]
    SingleIntent,
    #[error("no intent has two or more questions, so no anchor has a positive")]
    NoAnchors,
    #[error("invalid sampling config: {0}")]
    Config(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Two training rows (indices into `corpus.train()`) with a same-intent label
/// and a sampling weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionPair {
    pub a: u32,
    pub b: u32,
    pub label: u8,
    pub weight: f64,
}

/// Anchor and positive share an intent; the negative does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: u32,
    pub positive: u32,
    pub negative: u32,
}

/// A triplet tagged with the dataset (position in the input list) its rows
/// index into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureTriplet {
    pub dataset: u32,
    pub triplet: Triplet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Upper bound on the sampled pair count when no balanced size is set.
    pub cap: usize,
    /// If set, draw exactly half of this from each label.
    pub balanced_size: Option<usize>,
    pub seed: u64,
    /// Lower bound on every pair weight, keeping probabilities positive.
    pub weight_floor: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            cap: DEFAULT_CAP,
            balanced_size: None,
            seed: 0,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        if self.cap == 0 {
            return Err(SamplingError::Config("cap must be positive".into()));
        }
        if let Some(n) = self.balanced_size {
            if n == 0 || n % 2 != 0 {
                return Err(SamplingError::Config("balanced_size must be a positive even number".into()));
            }
        }
        if !(self.weight_floor > 0.0 && self.weight_floor.is_finite()) {
            return Err(SamplingError::Config("weight_floor must be a small positive number".into()));
        }
        Ok(())
    }
}

/// Number of unordered pairs over `n` items.
pub fn n_choose_2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// All `C(N, 2)` unordered pairs of training questions, labelled by intent
/// equality, in lexicographic `(a, b)` order with `a < b`. Weights start at 1.
pub fn generate_all_pairs(corpus: &FaqCorpus) -> Result<Vec<QuestionPair>, SamplingError> {
    generate_all_pairs_with(corpus, Exec::default())
}

pub fn generate_all_pairs_with(corpus: &FaqCorpus, exec: Exec) -> Result<Vec<QuestionPair>, SamplingError> {
    let n = corpus.len();
    if n < 2 {
        return Err(SamplingError::TooFewQuestions(n));
    }
    // Intern intents so the inner loop compares integers.
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let intent: Vec<u32> = corpus
        .train()
        .iter()
        .map(|e| {
            let next = ids.len() as u32;
            *ids.entry(e.intent.as_str()).or_insert(next)
        })
        .collect();
    let intent = &intent;
    Ok(exec.flat_map_range(n, move |a| {
        (a + 1..n).map(move |b| QuestionPair {
            a: a as u32,
            b: b as u32,
            label: u8::from(intent[a] == intent[b]),
            weight: 1.0,
        })
    }))
}

/// L2-normalized copies of the embeddings, checking for zero norms.
fn unit_rows(embeddings: &[Vec<f32>]) -> Result<Vec<Vec<f32>>, SamplingError> {
    embeddings
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut v = e.clone();
            if normalize(&mut v) {
                Ok(v)
            } else {
                Err(SamplingError::ZeroNorm(i))
            }
        })
        .collect()
}

/// Difficulty weight of a pair from its cosine similarity.
pub fn pair_weight(label: u8, cos: f64, floor: f64) -> f64 {
    let raw = if label == 1 { 1.0 - cos } else { cos };
    raw.max(floor)
}

/// Set each pair's weight from the cosine of its two embeddings: `cos` for
/// label 0, `1 - cos` for label 1, floored at `floor`. `embeddings[i]` is the
/// base embedding of training row `i`.
pub fn compute_pair_weights(
    pairs: &mut [QuestionPair],
    embeddings: &[Vec<f32>],
    floor: f64,
) -> Result<(), SamplingError> {
    compute_pair_weights_with(pairs, embeddings, floor, Exec::default())
}

pub fn compute_pair_weights_with(
    pairs: &mut [QuestionPair],
    embeddings: &[Vec<f32>],
    floor: f64,
    exec: Exec,
) -> Result<(), SamplingError> {
    if let Some(p) = pairs
        .iter()
        .find(|p| p.a as usize >= embeddings.len() || p.b as usize >= embeddings.len())
    {
        return Err(SamplingError::MissingEmbedding(p.a.max(p.b) as usize));
    }
    let units = unit_rows(embeddings)?;
    exec.for_each_mut(pairs, |p| {
        let cos = dot(&units[p.a as usize], &units[p.b as usize]).clamp(-1.0, 1.0);
        p.weight = pair_weight(p.label, cos, floor);
    });
    Ok(())
}

fn draw(pool: &[QuestionPair], n: usize, rng: &mut ChaCha8Rng) -> Vec<QuestionPair> {
    if n == 0 {
        return Vec::new();
    }
    let dist = WeightedIndex::new(pool.iter().map(|p| p.weight)).expect("weights are floored and finite");
    (0..n).map(|_| pool[dist.sample(rng)]).collect()
}

/// Weighted sampling with replacement, separately per label.
///
/// With `balanced_size` set, half of it is drawn from each label. Otherwise,
/// if there are more pairs than `cap`, `cap` pairs are drawn keeping the
/// label proportions of the input; smaller inputs are returned unchanged.
/// Label-1 draws come first in the output. Each label uses its own seeded
/// stream, so the result does not depend on execution order.
pub fn hard_sample(pairs: &[QuestionPair], config: &SamplingConfig) -> Result<Vec<QuestionPair>, SamplingError> {
    hard_sample_with(pairs, config, Exec::default())
}

pub fn hard_sample_with(
    pairs: &[QuestionPair],
    config: &SamplingConfig,
    exec: Exec,
) -> Result<Vec<QuestionPair>, SamplingError> {
    config.validate()?;
    let (pos, neg): (Vec<QuestionPair>, Vec<QuestionPair>) = pairs.iter().partition(|p| p.label == 1);
    let (n_pos, n_neg) = match config.balanced_size {
        Some(n) => (n / 2, n / 2),
        None if pairs.len() > config.cap => {
            let n_pos = (config.cap as f64 * pos.len() as f64 / pairs.len() as f64).round() as usize;
            (n_pos, config.cap - n_pos)
        }
        None => return Ok(pairs.to_vec()),
    };
    if n_pos > 0 && pos.is_empty() {
        return Err(SamplingError::MissingLabel(1));
    }
    if n_neg > 0 && neg.is_empty() {
        return Err(SamplingError::MissingLabel(0));
    }
    let stream = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(s);
        rng
    };
    let (mut out, drawn_neg) = exec.join(
        || draw(&pos, n_pos, &mut stream(1)),
        || draw(&neg, n_neg, &mut stream(0)),
    );
    out.extend(drawn_neg);
    Ok(out)
}

/// Build up to `count` triplets.
///
/// Anchors are the questions whose intent has at least one other question.
/// The quota is spread evenly over anchors (taken in a seeded random order);
/// for each anchor, positives are drawn with weight `max(floor, 1 - cos)` and
/// negatives with weight `max(floor, cos)`, matching the pair weighting.
pub fn build_triplets(
    corpus: &FaqCorpus,
    embeddings: &[Vec<f32>],
    count: usize,
    floor: f64,
    seed: u64,
) -> Result<Vec<Triplet>, SamplingError> {
    build_triplets_with(corpus, embeddings, count, floor, seed, Exec::default())
}

pub fn build_triplets_with(
    corpus: &FaqCorpus,
    embeddings: &[Vec<f32>],
    count: usize,
    floor: f64,
    seed: u64,
    exec: Exec,
) -> Result<Vec<Triplet>, SamplingError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if corpus.intents().len() < 2 {
        return Err(SamplingError::SingleIntent);
    }
    if embeddings.len() < corpus.len() {
        return Err(SamplingError::MissingEmbedding(embeddings.len()));
    }
    let units = unit_rows(&embeddings[..corpus.len()])?;
    let groups = corpus.indices_by_intent();
    let mut group_of = vec![0usize; corpus.len()];
    let members: Vec<&Vec<usize>> = groups.values().collect();
    for (g, rows) in members.iter().enumerate() {
        for &r in rows.iter() {
            group_of[r] = g;
        }
    }
    let mut anchors: Vec<usize> = members
        .iter()
        .filter(|rows| rows.len() >= 2)
        .flat_map(|rows| rows.iter().copied())
        .collect();
    if anchors.is_empty() {
        return Err(SamplingError::NoAnchors);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    anchors.shuffle(&mut rng);
    let per = count / anchors.len();
    let extra = count % anchors.len();

    let n = corpus.len();
    let (units, group_of, anchors) = (&units, &group_of, &anchors);
    let mut triplets = exec.flat_map_range(anchors.len(), move |slot| {
        let quota = per + usize::from(slot < extra);
        if quota == 0 {
            return Vec::new();
        }
        let a = anchors[slot];
        let mut pos = Vec::new();
        let mut pos_w = Vec::new();
        let mut neg = Vec::new();
        let mut neg_w = Vec::new();
        for other in (0..n).filter(|&o| o != a) {
            let cos = dot(&units[a], &units[other]).clamp(-1.0, 1.0);
            if group_of[other] == group_of[a] {
                pos.push(other);
                pos_w.push(pair_weight(1, cos, floor));
            } else {
                neg.push(other);
                neg_w.push(pair_weight(0, cos, floor));
            }
        }
        let mut local = ChaCha8Rng::seed_from_u64(seed);
        local.set_stream(a as u64 + 1);
        let pd = WeightedIndex::new(&pos_w).expect("anchor has a positive");
        let nd = WeightedIndex::new(&neg_w).expect("corpus has another intent");
        (0..quota)
            .map(|_| Triplet {
                anchor: a as u32,
                positive: pos[pd.sample(&mut local)] as u32,
                negative: neg[nd.sample(&mut local)] as u32,
            })
            .collect::<Vec<_>>()
    });
    triplets.shuffle(&mut rng);
    Ok(triplets)
}

/// Offline, within-dataset triplets from several corpora, concatenated and
/// shuffled. `inputs[i]` is a corpus with its base embeddings.
pub fn build_pretrain_mixture(
    inputs: &[(&FaqCorpus, &[Vec<f32>])],
    per_dataset: usize,
    floor: f64,
    seed: u64,
) -> Result<Vec<MixtureTriplet>, SamplingError> {
    let mut out = Vec::with_capacity(inputs.len() * per_dataset);
    for (i, (corpus, emb)) in inputs.iter().enumerate() {
        let ts = build_triplets(corpus, emb, per_dataset, floor, seed.wrapping_add(i as u64))?;
        out.extend(ts.into_iter().map(|triplet| MixtureTriplet {
            dataset: i as u32,
            triplet,
        }));
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(out)
}

/// Write pairs as `a_id<TAB>b_id<TAB>label<TAB>weight` lines.
pub fn write_pairs<W: Write>(mut w: W, corpus: &FaqCorpus, pairs: &[QuestionPair]) -> std::io::Result<()> {
    let train = corpus.train();
    for p in pairs {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            train[p.a as usize].question_id, train[p.b as usize].question_id, p.label, p.weight
        )?;
    }
    Ok(())
}

fn id_index(corpus: &FaqCorpus) -> HashMap<&str, u32> {
    corpus
        .train()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.question_id.as_str(), i as u32))
        .collect()
}

pub fn read_pairs<R: BufRead>(r: R, corpus: &FaqCorpus) -> Result<Vec<QuestionPair>, SamplingError> {
    let ids = id_index(corpus);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let parse = |reason: String| SamplingError::Parse { line: n + 1, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse(format!("expected 4 fields, got {}", fields.len())));
        }
        let lookup = |id: &str| ids.get(id).copied().ok_or_else(|| parse(format!("unknown question id {id}")));
        let label: u8 = fields[2].parse().map_err(|_| parse("bad label".into()))?;
        let weight: f64 = fields[3].parse().map_err(|_| parse("bad weight".into()))?;
        if label > 1 || !(weight >= 0.0 && weight.is_finite()) {
            return Err(parse("label must be 0/1 and weight finite non-negative".into()));
        }
        out.push(QuestionPair {
            a: lookup(fields[0])?,
            b: lookup(fields[1])?,
            label,
            weight,
        });
    }
    Ok(out)
}

/// Write triplets as `anchor_id<TAB>positive_id<TAB>negative_id` lines.
pub fn write_triplets<W: Write>(mut w: W, corpus: &FaqCorpus, triplets: &[Triplet]) -> std::io::Result<()> {
    let train = corpus.train();
    for t in triplets {
        writeln!(
            w,
            "{}\t{}\t{}",
            train[t.anchor as usize].question_id,
            train[t.positive as usize].question_id,
            train[t.negative as usize].question_id
        )?;
    }
    Ok(())
}

pub fn read_triplets<R: BufRead>(r: R, corpus: &FaqCorpus) -> Result<Vec<Triplet>, SamplingError> {
    let ids = id_index(corpus);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let parse = |reason: String| SamplingError::Parse { line: n + 1, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse(format!("expected 3 fields, got {}", fields.len())));
        }
        let lookup = |id: &str| ids.get(id).copied().ok_or_else(|| parse(format!("unknown question id {id}")));
        out.push(Triplet {
            anchor: lookup(fields[0])?,
            positive: lookup(fields[1])?,
            negative: lookup(fields[2])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn corpus(counts: &[usize]) -> FaqCorpus {
        let rows = counts.iter().enumerate().flat_map(|(c, &n)| {
            (0..n).map(move |i| (format!("q{i} c{c}"), format!("intent{c}")))
        });
        FaqCorpus::from_rows("t", rows).unwrap()
    }

    fn axis_embeddings(n: usize, dim: usize) -> Vec<Vec<f32>> {
        (0..n)
            .map(|i| {
                let mut v = vec![0.1f32; dim];
                v[i % dim] = 1.0;
                v
            })
            .collect()
    }

    #[test]
    fn two_same_intent_questions_make_one_positive() {
        let c = corpus(&[2]);
        let p = generate_all_pairs(&c).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].label, 1);
    }

    #[test]
    fn fewer_than_two_questions_is_an_error() {
        assert!(matches!(generate_all_pairs(&corpus(&[1])), Err(SamplingError::TooFewQuestions(1))));
    }

    #[test]
    fn sofmattress_subset_shape_pair_count() {
        // 180 questions over 21 intents.
        let mut counts = vec![8usize; 21];
        counts[0] = 20;
        assert_eq!(counts.iter().sum::<usize>(), 180);
        assert_eq!(generate_all_pairs(&corpus(&counts)).unwrap().len(), 16110);
    }

    #[test]
    fn weights_follow_cosine() {
        let emb = vec![vec![1.0f32, 0.0], vec![0.8, 0.6], vec![-0.2, 0.9797959]];
        let mut pairs = vec![
            QuestionPair { a: 0, b: 1, label: 0, weight: 1.0 },
            QuestionPair { a: 0, b: 1, label: 1, weight: 1.0 },
            QuestionPair { a: 0, b: 2, label: 0, weight: 1.0 },
        ];
        compute_pair_weights(&mut pairs, &emb, 1e-6).unwrap();
        assert!((pairs[0].weight - 0.8).abs() < 1e-6);
        assert!((pairs[1].weight - 0.2).abs() < 1e-6);
        assert_eq!(pairs[2].weight, 1e-6);
    }

    #[test]
    fn duplicate_positive_gets_floor() {
        let emb = vec![vec![0.3f32, 0.4], vec![0.3, 0.4]];
        let mut pairs = vec![QuestionPair { a: 0, b: 1, label: 1, weight: 1.0 }];
        compute_pair_weights(&mut pairs, &emb, 1e-6).unwrap();
        assert_eq!(pairs[0].weight, 1e-6);
    }

    #[test]
    fn weight_errors() {
        let mut pairs = vec![QuestionPair { a: 0, b: 3, label: 0, weight: 1.0 }];
        assert!(matches!(
            compute_pair_weights(&mut pairs, &[vec![1.0], vec![1.0]], 1e-6),
            Err(SamplingError::MissingEmbedding(3))
        ));
        let mut pairs = vec![QuestionPair { a: 0, b: 1, label: 0, weight: 1.0 }];
        assert!(matches!(
            compute_pair_weights(&mut pairs, &[vec![1.0], vec![0.0]], 1e-6),
            Err(SamplingError::ZeroNorm(1))
        ));
    }

    #[test]
    fn balanced_sampling_splits_evenly() {
        let c = corpus(&[10, 10, 10]);
        let mut p = generate_all_pairs(&c).unwrap();
        compute_pair_weights(&mut p, &axis_embeddings(30, 7), 1e-6).unwrap();
        let cfg = SamplingConfig { balanced_size: Some(500), seed: 3, ..Default::default() };
        let s = hard_sample(&p, &cfg).unwrap();
        assert_eq!(s.iter().filter(|p| p.label == 1).count(), 250);
        assert_eq!(s.iter().filter(|p| p.label == 0).count(), 250);
    }

    #[test]
    fn cap_preserves_proportion_and_small_sets_pass_through() {
        let c = corpus(&[10, 10, 10, 10]);
        let p = generate_all_pairs(&c).unwrap();
        let pos = p.iter().filter(|x| x.label == 1).count();
        let cfg = SamplingConfig { cap: 300, seed: 9, ..Default::default() };
        let s = hard_sample(&p, &cfg).unwrap();
        assert_eq!(s.len(), 300);
        let expect = (300.0 * pos as f64 / p.len() as f64).round() as usize;
        assert_eq!(s.iter().filter(|x| x.label == 1).count(), expect);
        let cfg = SamplingConfig { cap: 10_000, ..Default::default() };
        assert_eq!(hard_sample(&p, &cfg).unwrap(), p);
    }

    #[test]
    fn sampling_is_deterministic_across_exec() {
        let c = corpus(&[6, 9, 4]);
        let mut p = generate_all_pairs(&c).unwrap();
        compute_pair_weights(&mut p, &axis_embeddings(19, 5), 1e-6).unwrap();
        let cfg = SamplingConfig { balanced_size: Some(64), seed: 1, ..Default::default() };
        let a = hard_sample_with(&p, &cfg, Exec::Sequential).unwrap();
        let b = hard_sample_with(&p, &cfg, Exec::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_label_is_an_error() {
        let c = corpus(&[1, 1, 1]);
        let p = generate_all_pairs(&c).unwrap();
        let cfg = SamplingConfig { balanced_size: Some(4), ..Default::default() };
        assert!(matches!(hard_sample(&p, &cfg), Err(SamplingError::MissingLabel(1))));
    }

    #[test]
    fn config_validation() {
        let bad = SamplingConfig { balanced_size: Some(3), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SamplingConfig { cap: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn singleton_intent_anchors_nothing() {
        let c = corpus(&[1, 3, 2]);
        let emb = axis_embeddings(6, 4);
        let ts = build_triplets(&c, &emb, 200, 1e-6, 5).unwrap();
        assert_eq!(ts.len(), 200);
        assert!(ts.iter().all(|t| t.anchor != 0));
    }

    #[test]
    fn two_by_two_triplets_are_all_valid() {
        let c = corpus(&[2, 2]);
        let emb = axis_embeddings(4, 4);
        let intent = |i: u32| &c.train()[i as usize].intent;
        // Oracle: enumerate every valid (a, p, n).
        let mut valid = HashSet::new();
        for a in 0..4u32 {
            for p in 0..4u32 {
                for n in 0..4u32 {
                    if a != p && intent(a) == intent(p) && intent(a) != intent(n) {
                        valid.insert(Triplet { anchor: a, positive: p, negative: n });
                    }
                }
            }
        }
        assert_eq!(valid.len(), 8);
        let ts = build_triplets(&c, &emb, 400, 1e-6, 1).unwrap();
        let seen: HashSet<_> = ts.iter().copied().collect();
        assert!(seen.is_subset(&valid));
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn triplet_edge_cases() {
        let c = corpus(&[3]);
        let emb = axis_embeddings(3, 3);
        assert!(build_triplets(&c, &emb, 0, 1e-6, 1).unwrap().is_empty());
        assert!(matches!(build_triplets(&c, &emb, 5, 1e-6, 1), Err(SamplingError::SingleIntent)));
        let c = corpus(&[1, 1]);
        assert!(matches!(
            build_triplets(&c, &axis_embeddings(2, 2), 5, 1e-6, 1),
            Err(SamplingError::NoAnchors)
        ));
    }

    #[test]
    fn mixture_keeps_dataset_provenance() {
        let a = corpus(&[3, 3]);
        let b = corpus(&[2, 2, 2]);
        let ea = axis_embeddings(6, 5);
        let eb = axis_embeddings(6, 3);
        let m = build_pretrain_mixture(&[(&a, &ea), (&b, &eb)], 10, 1e-6, 2).unwrap();
        assert_eq!(m.len(), 20);
        assert_eq!(m.iter().filter(|t| t.dataset == 0).count(), 10);
        let single = build_pretrain_mixture(&[(&a, &ea)], 10, 1e-6, 2).unwrap();
        assert_eq!(single.len(), 10);
    }

    #[test]
    fn pair_and_triplet_files_replay() {
        let c = corpus(&[3, 4]);
        let mut p = generate_all_pairs(&c).unwrap();
        compute_pair_weights(&mut p, &axis_embeddings(7, 3), 1e-6).unwrap();
        let mut buf = Vec::new();
        write_pairs(&mut buf, &c, &p).unwrap();
        assert_eq!(read_pairs(&buf[..], &c).unwrap(), p);
        let ts = build_triplets(&c, &axis_embeddings(7, 3), 12, 1e-6, 3).unwrap();
        let mut buf = Vec::new();
        write_triplets(&mut buf, &c, &ts).unwrap();
        assert_eq!(read_triplets(&buf[..], &c).unwrap(), ts);
        assert!(read_pairs(&b"t/0\tt/1\t1\n"[..], &c).is_err());
    }
}
