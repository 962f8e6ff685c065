//! Bag-of-n-grams linear SVM baseline over dialogue text.
//!
//! Features are raw term frequencies of the top 20K word uni/bi/trigrams of
//! the training dialogues (stopwords removed before n-gram formation). The
//! classifier is an L2-regularized hinge-loss SVM solved by dual coordinate
//! descent, with the bias learned as the weight of a constant feature.

use std::collections::HashMap;
use std::hash::Hasher;
use std::sync::OnceLock;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ir::{CharacterRecord, Dimension};
use crate::stopwords::{is_stopword, STOPWORDS, STOPWORDS_VERSION};
use crate::text::words_lower;

pub const VOCAB_SIZE: usize = 20_000;
pub const DEFAULT_C: f64 = 0.1;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_EPOCHS: usize = 1000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BaselineError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary is empty after stopword removal")]
    EmptyVocabulary,
    #[error("dimension {dimension} needs both poles in training data ({first}: {n_first}, {second}: {n_second})")]
    DegenerateTrainingSet { dimension: Dimension, first: char, n_first: usize, second: char, n_second: usize },
    #[error("model has not been fitted")]
    UntrainedModel,
}

pub fn stopword_hash() -> u64 {
    let mut h = FnvHasher::default();
    h.write(&STOPWORDS_VERSION.to_le_bytes());
    for w in STOPWORDS {
        h.write(w.as_bytes());
        h.write(&[0]);
    }
    h.finish()
}

/// Word uni-, bi- and trigrams of `text` after stopword removal.
pub fn ngrams(text: &str) -> Vec<String> {
    let words: Vec<String> = words_lower(text).into_iter().filter(|w| !is_stopword(w)).collect();
    let mut out = Vec::with_capacity(words.len() * 3);
    for n in 1..=3 {
        for win in words.windows(n) {
            out.push(win.join(" "));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NgramVocab {
    /// (n-gram, training term frequency), frequency descending then lexicographic.
    pub entries: Vec<(String, u64)>,
    pub stopword_hash: u64,
    #[serde(skip)]
    index: OnceLock<HashMap<String, usize>>,
}

impl PartialEq for NgramVocab {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.stopword_hash == other.stopword_hash
    }
}

impl NgramVocab {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, ngram: &str) -> Option<usize> {
        self.index
            .get_or_init(|| self.entries.iter().enumerate().map(|(i, (g, _))| (g.clone(), i)).collect())
            .get(ngram)
            .copied()
    }

    /// Sparse term-frequency vector of a record's dialogues, sorted by index.
    pub fn featurize(&self, record: &CharacterRecord) -> Vec<(usize, f64)> {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for d in &record.dialogues {
            for g in ngrams(d) {
                if let Some(i) = self.index_of(&g) {
                    *counts.entry(i).or_default() += 1.0;
                }
            }
        }
        let mut v: Vec<(usize, f64)> = counts.into_iter().collect();
        v.sort_by_key(|e| e.0);
        v
    }
}

/// Counts n-grams over the training dialogues (in parallel) and keeps the
/// [`VOCAB_SIZE`] most frequent.
pub fn build_vocab(train_records: &[CharacterRecord]) -> Result<NgramVocab, BaselineError> {
    if train_records.iter().all(|r| r.dialogues.is_empty()) {
        return Err(BaselineError::EmptyCorpus);
    }
    let counts: HashMap<String, u64> = train_records
        .par_iter()
        .map(|r| {
            let mut m: HashMap<String, u64> = HashMap::new();
            for d in &r.dialogues {
                for g in ngrams(d) {
                    *m.entry(g).or_default() += 1;
                }
            }
            m
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    if counts.is_empty() {
        return Err(BaselineError::EmptyVocabulary);
    }
    let mut entries: Vec<(String, u64)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(VOCAB_SIZE);
    Ok(NgramVocab { entries, stopword_hash: stopword_hash(), index: OnceLock::new() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub tolerance: f64,
    pub max_epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { c: DEFAULT_C, tolerance: DEFAULT_TOLERANCE, max_epochs: DEFAULT_MAX_EPOCHS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub seed: u64,
    pub epochs: usize,
    pub converged: bool,
    pub train_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub dimension: Dimension,
    pub config: SvmConfig,
    pub vocab: NgramVocab,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub fit: Option<FitInfo>,
}

impl BaselineModel {
    pub fn score(&self, x: &[(usize, f64)]) -> f64 {
        x.iter().map(|&(i, v)| self.weights[i] * v).sum::<f64>() + self.bias
    }
}

/// Fits one dimension's SVM on the records that carry that dimension.
pub fn fit_baseline(
    train_records: &[CharacterRecord],
    dimension: Dimension,
    config: SvmConfig,
    seed: u64,
) -> Result<BaselineModel, BaselineError> {
    let labeled: Vec<(&CharacterRecord, f64)> = train_records
        .iter()
        .filter_map(|r| {
            let v = r.profile.vote(dimension)?;
            let idx = dimension.pole_index(v.winner)?;
            Some((r, if idx == 0 { 1.0 } else { -1.0 }))
        })
        .collect();
    let n_first = labeled.iter().filter(|(_, y)| *y > 0.0).count();
    let n_second = labeled.len() - n_first;
    if n_first == 0 || n_second == 0 {
        let [first, second] = dimension.poles();
        return Err(BaselineError::DegenerateTrainingSet { dimension, first, n_first, second, n_second });
    }
    let records: Vec<CharacterRecord> = labeled.iter().map(|(r, _)| (*r).clone()).collect();
    let vocab = build_vocab(&records)?;
    let xs: Vec<Vec<(usize, f64)>> = records.iter().map(|r| vocab.featurize(r)).collect();
    let ys: Vec<f64> = labeled.iter().map(|(_, y)| *y).collect();

    let mut w = vec![0.0; vocab.len()];
    let mut b = 0.0;
    let mut alpha = vec![0.0; xs.len()];
    // diagonal of the kernel including the constant bias feature
    let qii: Vec<f64> = xs.iter().map(|x| 1.0 + x.iter().map(|(_, v)| v * v).sum::<f64>()).collect();
    let u = config.c;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut epochs = 0;
    let mut converged = false;
    while epochs < config.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let x = &xs[i];
            let y = ys[i];
            let g = y * (x.iter().map(|&(j, v)| w[j] * v).sum::<f64>() + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == u {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, u);
                let d = (alpha[i] - old) * y;
                for &(j, v) in x {
                    w[j] += d * v;
                }
                b += d;
            }
        }
        if pg_max - pg_min < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(BaselineModel {
        dimension,
        config,
        vocab,
        weights: w,
        bias: b,
        fit: Some(FitInfo { seed, epochs, converged, train_size: xs.len() }),
    })
}

/// First pole iff the score is strictly positive. A record with no
/// in-vocabulary n-grams scores the bias alone.
pub fn predict_baseline(model: &BaselineModel, record: &CharacterRecord) -> Result<char, BaselineError> {
    if model.fit.is_none() || model.weights.len() != model.vocab.len() {
        return Err(BaselineError::UntrainedModel);
    }
    let [a, b] = model.dimension.poles();
    Ok(if model.score(&model.vocab.featurize(record)) > 0.0 { a } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{DimensionVote, PersonalityProfile, Scale, Split};

    fn rec(id: usize, pole: char, dialogues: &[&str]) -> CharacterRecord {
        CharacterRecord {
            profile: PersonalityProfile {
                profile_id: id.to_string(),
                character_name: format!("C{id}"),
                movie_name: "M".into(),
                votes: vec![DimensionVote { dimension: Dimension::EI, winner: pole, vote_count: 5, agreement: 0.9 }],
                scale: Scale::Mbti,
            },
            dialogues: dialogues.iter().map(|s| s.to_string()).collect(),
            scenes: vec![],
            split: Split::Train,
        }
    }

    #[test]
    fn frequent_bigram_ranks_first() {
        let rs = vec![
            rec(0, 'E', &["red pill red pill", "blue"]),
            rec(1, 'I', &["red pill now"]),
        ];
        let v = build_vocab(&rs).unwrap();
        let pos = |g: &str| v.entries.iter().position(|e| e.0 == g).unwrap();
        assert!(pos("red pill") < pos("blue"));
        assert!(pos("red pill") < pos("pill red"));
        assert_eq!(v.entries[0].1, 3);
        assert_eq!(v, build_vocab(&rs).unwrap());
        assert!(v.entries.iter().all(|(g, _)| !is_stopword(g)));
    }

    #[test]
    fn stopword_only_corpus() {
        let rs = vec![rec(0, 'E', &["the and of you"])];
        assert_eq!(build_vocab(&rs), Err(BaselineError::EmptyVocabulary));
        assert_eq!(build_vocab(&[rec(0, 'E', &[])]), Err(BaselineError::EmptyCorpus));
    }

    #[test]
    fn one_class_is_degenerate() {
        let rs = vec![rec(0, 'E', &["hello"]), rec(1, 'E', &["world"])];
        assert!(matches!(
            fit_baseline(&rs, Dimension::EI, SvmConfig::default(), 1),
            Err(BaselineError::DegenerateTrainingSet { .. })
        ));
    }

    #[test]
    fn marker_token_decides() {
        let mut rs = Vec::new();
        for i in 0..20 {
            let (pole, marker) = if i % 2 == 0 { ('E', "party") } else { ('I', "library") };
            rs.push(rec(i, pole, &[&format!("{marker} weather seems fine"), "walk home"]));
        }
        let m = fit_baseline(&rs, Dimension::EI, SvmConfig::default(), 3).unwrap();
        assert!(m.fit.as_ref().unwrap().converged);
        for r in &rs {
            assert_eq!(predict_baseline(&m, r).unwrap(), r.profile.votes[0].winner);
        }
        assert_eq!(predict_baseline(&m, &rec(99, 'I', &["party"])).unwrap(), 'E');
        let empty = rec(100, 'E', &[]);
        let expected = if m.bias > 0.0 { 'E' } else { 'I' };
        assert_eq!(predict_baseline(&m, &empty).unwrap(), expected);
    }

    #[test]
    fn dialogue_order_irrelevant() {
        let rs: Vec<_> = (0..10)
            .map(|i| rec(i, if i % 2 == 0 { 'E' } else { 'I' }, &[if i % 2 == 0 { "loud fun" } else { "quiet book" }]))
            .collect();
        let m = fit_baseline(&rs, Dimension::EI, SvmConfig::default(), 3).unwrap();
        let a = rec(50, 'E', &["quiet book", "loud fun loud"]);
        let b = rec(51, 'E', &["loud fun loud", "quiet book"]);
        assert_eq!(m.score(&m.vocab.featurize(&a)), m.score(&m.vocab.featurize(&b)));
    }

    #[test]
    fn unfitted_model_rejected() {
        let rs = vec![rec(0, 'E', &["alpha"]), rec(1, 'I', &["beta"])];
        let mut m = fit_baseline(&rs, Dimension::EI, SvmConfig::default(), 1).unwrap();
        m.fit = None;
        assert_eq!(predict_baseline(&m, &rs[0]), Err(BaselineError::UntrainedModel));
    }
}
