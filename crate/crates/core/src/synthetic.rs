//! Seeded synthetic FAQ corpora.
//!
//! Every intent owns a few pseudo-word keywords; questions mix one or two of
//! them with filler drawn from a vocabulary shared by all intents (and by all
//! corpora built with the same `filler_seed`). Held-out queries use fresh
//! filler, shuffled word order and character typos in the keywords, so a
//! model has to learn to look past the filler to score well.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, FaqCorpus, FaqEntry, LabeledQuery};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub tenant_id: String,
    pub num_intents: usize,
    /// Training questions per intent.
    pub shots: usize,
    /// Held-out queries per intent.
    pub test_per_intent: usize,
    pub num_oos: usize,
    pub keywords_per_intent: usize,
    pub keywords_per_question: usize,
    /// Size of the shared filler vocabulary.
    pub filler_vocab: usize,
    pub filler_per_question: usize,
    /// Probability that a held-out keyword gets one character edit.
    pub typo_rate: f64,
    pub seed: u64,
    pub filler_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            tenant_id: "synthetic".into(),
            num_intents: 20,
            shots: 5,
            test_per_intent: 10,
            num_oos: 50,
            keywords_per_intent: 4,
            keywords_per_question: 2,
            filler_vocab: 60,
            filler_per_question: 10,
            typo_rate: 0.3,
            seed: 0,
            filler_seed: 7,
        }
    }
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br", "cl", "dr", "gr",
    "pl", "st", "tr", "sh", "ch",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ea"];

fn pseudo_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
        .collect()
}

/// `n` distinct pseudo-words not already in `taken`.
fn fresh_words(rng: &mut ChaCha8Rng, n: usize, syllables: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng, syllables);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn typo(rng: &mut ChaCha8Rng, word: &str) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    if chars.len() < 3 {
        return word.to_string();
    }
    let i = rng.random_range(1..chars.len() - 1);
    match rng.random_range(0..3) {
        0 => chars.swap(i, i + 1),
        1 => {
            chars.remove(i);
        }
        _ => chars.insert(i, chars[i]),
    }
    chars.into_iter().collect()
}

struct Vocab {
    filler: Vec<String>,
    keywords: Vec<Vec<String>>,
    names: Vec<String>,
}

fn vocab(cfg: &SyntheticConfig) -> Vocab {
    let mut taken = BTreeSet::new();
    let mut frng = ChaCha8Rng::seed_from_u64(cfg.filler_seed);
    let filler = fresh_words(&mut frng, cfg.filler_vocab, 1, &mut taken);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let keywords = (0..cfg.num_intents)
        .map(|_| fresh_words(&mut rng, cfg.keywords_per_intent, 3, &mut taken))
        .collect::<Vec<_>>();
    let names = keywords.iter().map(|k| format!("{}_{}", cfg.tenant_id, k[0])).collect();
    Vocab { filler, keywords, names }
}

fn sentence(rng: &mut ChaCha8Rng, keywords: &[String], cfg: &SyntheticConfig, filler: &[String], perturb: bool) -> String {
    let mut words: Vec<String> = keywords
        .choose_multiple(rng, cfg.keywords_per_question.min(keywords.len()))
        .map(|k| {
            if perturb && rng.random_bool(cfg.typo_rate) {
                typo(rng, k)
            } else {
                k.clone()
            }
        })
        .collect();
    words.extend(filler.choose_multiple(rng, cfg.filler_per_question).cloned());
    words.shuffle(rng);
    words.join(" ")
}

/// Build a corpus with train, held-out and OOS queries.
pub fn generate(cfg: &SyntheticConfig) -> Result<FaqCorpus, CorpusError> {
    let v = vocab(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_f00d);
    let mut train = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, kws) in v.keywords.iter().enumerate() {
        let mut made = 0;
        while made < cfg.shots {
            let text = sentence(&mut rng, kws, cfg, &v.filler, false);
            if seen.insert(text.clone()) {
                train.push(FaqEntry {
                    question_id: format!("{}/{}", cfg.tenant_id, train.len()),
                    text,
                    intent: v.names[i].clone(),
                    answer: None,
                });
                made += 1;
            }
        }
    }
    let mut test = Vec::new();
    for (i, kws) in v.keywords.iter().enumerate() {
        for _ in 0..cfg.test_per_intent {
            test.push(LabeledQuery {
                text: sentence(&mut rng, kws, cfg, &v.filler, true),
                intent: v.names[i].clone(),
            });
        }
    }
    let mut taken: BTreeSet<String> = v.keywords.iter().flatten().cloned().collect();
    taken.extend(v.filler.iter().cloned());
    let oos = (0..cfg.num_oos)
        .map(|_| {
            let novel = fresh_words(&mut rng, cfg.keywords_per_question, 3, &mut taken);
            sentence(&mut rng, &novel, cfg, &v.filler, false)
        })
        .collect();
    FaqCorpus::new(&cfg.tenant_id, train, test, oos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a.intents().len(), 20);
        assert_eq!(a.test().len(), 200);
        assert_eq!(a.oos_queries().len(), 50);
        assert_eq!(a, generate(&cfg).unwrap());
        let b = generate(&SyntheticConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.train()[0].text, b.train()[0].text);
    }

    #[test]
    fn domains_share_filler_only() {
        let a = generate(&SyntheticConfig { tenant_id: "a".into(), seed: 1, ..Default::default() }).unwrap();
        let b = generate(&SyntheticConfig { tenant_id: "b".into(), seed: 2, ..Default::default() }).unwrap();
        let words = |c: &FaqCorpus| -> BTreeSet<String> {
            c.train().iter().flat_map(|e| e.text.split(' ').map(String::from).collect::<Vec<_>>()).collect()
        };
        let (wa, wb) = (words(&a), words(&b));
        let shared: Vec<_> = wa.intersection(&wb).collect();
        assert!(!shared.is_empty());
        // Shared words are one-syllable filler, keywords have three.
        assert!(shared.iter().all(|w| w.len() <= 4));
        assert!(a.intents().is_disjoint(b.intents()));
    }

    #[test]
    fn typo_edits_one_character() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let t = typo(&mut rng, "brastouk");
            assert!((t.len() as i64 - 8).abs() <= 1);
        }
        assert_eq!(typo(&mut rng, "ab"), "ab");
    }
}
