//! Metrics, simulated human performance, learning curves and input-length
//! ablations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{fit_baseline, predict_baseline, SvmConfig};
use crate::fusion::{predict_fusion, train_fusion, FusionConfig};
use crate::ir::{CharacterRecord, Dimension, PersonalityProfile, SceneMention};
use crate::text::tokenize;
use crate::Error;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("gold has {gold} labels but pred has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("no labels to score")]
    EmptyInput,
    #[error("profile {profile_id} has no vote on {dimension}")]
    MissingDimension { profile_id: String, dimension: Dimension },
    #[error("requested {size} training records but only {available} are available")]
    SizeExceedsData { size: usize, available: usize },
    #[error("token budgets must be positive")]
    ZeroBudget,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt(), n: values.len() })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}

/// Unweighted mean of per-label F1 over every label seen in `gold` or
/// `pred`. A label with no true positives scores 0, so a pole that is
/// predicted but never correct still pulls the mean down, while a pole that
/// never occurs on either side is not averaged in.
pub fn macro_f1<T: Ord + Clone>(gold: &[T], pred: &[T]) -> Result<f64, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let labels: BTreeSet<&T> = gold.iter().chain(pred).collect();
    let mut total = 0.0;
    for label in &labels {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (g, p) in gold.iter().zip(pred) {
            match (g == *label, p == *label) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        total += f1_from_counts(tp, fp, fn_);
    }
    Ok(total / labels.len() as f64)
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn accuracy<T: PartialEq>(gold: &[T], pred: &[T]) -> Result<f64, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64 / gold.len() as f64)
}

/// Ground-truth pole: the stored winner of the profile's vote.
pub fn majority_label(profile: &PersonalityProfile, dimension: Dimension) -> Result<char, EvalError> {
    profile.vote(dimension).map(|v| v.winner).ok_or_else(|| EvalError::MissingDimension {
        profile_id: profile.profile_id.clone(),
        dimension,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanDimension {
    pub characters: usize,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanPerf {
    pub voters: usize,
    pub seed: u64,
    pub dimensions: BTreeMap<Dimension, HumanDimension>,
    /// Mean of the per-dimension accuracies.
    pub mean_accuracy: Option<f64>,
}

/// Simulates `voters` independent voters per character. Each voter picks
/// the winning pole with probability equal to the stored agreement, and is
/// scored like a separate model against the winners; accuracy and macro-F1
/// are reported as mean and std over voters.
pub fn human_perf_estimate(records: &[CharacterRecord], seed: u64, voters: usize) -> HumanPerf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dimensions = BTreeMap::new();
    let present: BTreeSet<Dimension> =
        records.iter().flat_map(|r| r.profile.votes.iter().map(|v| v.dimension)).collect();
    for dim in present {
        let votes: Vec<(char, f64)> = records
            .iter()
            .filter_map(|r| r.profile.vote(dim).map(|v| (v.winner, v.agreement.clamp(0.0, 1.0))))
            .collect();
        let gold: Vec<char> = votes.iter().map(|v| v.0).collect();
        let (mut accs, mut f1s) = (Vec::new(), Vec::new());
        for _ in 0..voters {
            let pred: Vec<char> = votes
                .iter()
                .map(|&(w, a)| if rng.random::<f64>() < a { w } else { dim.other_pole(w).unwrap_or(w) })
                .collect();
            accs.push(accuracy(&gold, &pred).expect("non-empty aligned labels"));
            f1s.push(macro_f1(&gold, &pred).expect("non-empty aligned labels"));
        }
        if let (Some(accuracy), Some(macro_f1)) = (MeanStd::of(&accs), MeanStd::of(&f1s)) {
            dimensions.insert(dim, HumanDimension { characters: votes.len(), accuracy, macro_f1 });
        }
    }
    let mean_accuracy = (!dimensions.is_empty())
        .then(|| dimensions.values().map(|d| d.accuracy.mean).sum::<f64>() / dimensions.len() as f64);
    HumanPerf { voters, seed, dimensions, mean_accuracy }
}

/// Something that can be trained on one dimension and scored on dev.
pub trait Trainer {
    fn name(&self) -> &str;
    fn dev_f1(&self, train: &[CharacterRecord], dev: &[CharacterRecord], dimension: Dimension) -> Result<f64, Error>;
}

/// Gold and predicted poles over the records that carry `dimension`.
pub fn score_records(
    records: &[CharacterRecord],
    dimension: Dimension,
    mut predict: impl FnMut(&CharacterRecord) -> Result<char, Error>,
) -> Result<f64, Error> {
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for r in records {
        if let Some(v) = r.profile.vote(dimension) {
            gold.push(v.winner);
            pred.push(predict(r)?);
        }
    }
    Ok(macro_f1(&gold, &pred)?)
}

pub struct BaselineTrainer {
    pub config: SvmConfig,
    pub seed: u64,
}

impl Trainer for BaselineTrainer {
    fn name(&self) -> &str {
        "svm"
    }

    fn dev_f1(&self, train: &[CharacterRecord], dev: &[CharacterRecord], dimension: Dimension) -> Result<f64, Error> {
        let model = fit_baseline(train, dimension, self.config, self.seed)?;
        score_records(dev, dimension, |r| Ok(predict_baseline(&model, r)?))
    }
}

pub struct FusionTrainer {
    pub config: FusionConfig,
}

impl Trainer for FusionTrainer {
    fn name(&self) -> &str {
        "fusion"
    }

    /// Dev macro-F1 of the best run's kept parameters.
    fn dev_f1(&self, train: &[CharacterRecord], dev: &[CharacterRecord], dimension: Dimension) -> Result<f64, Error> {
        let out = train_fusion(train, dev, &[], dimension, &self.config)?;
        let best = out.best.expect("training returns a model");
        score_records(dev, dimension, |r| Ok(predict_fusion(&best, r)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub size: usize,
    pub dev_f1: f64,
}

/// Trains on nested subsets of `train`: one seeded shuffle fixes the order
/// in which records join, and each size takes a prefix of it. Selected
/// records keep their original relative order, so the full size reproduces
/// a plain training run.
pub fn learning_curve(
    trainer: &dyn Trainer,
    train: &[CharacterRecord],
    dev: &[CharacterRecord],
    sizes: &[usize],
    dimension: Dimension,
    seed: u64,
) -> Result<Vec<CurveRow>, Error> {
    if let Some(&size) = sizes.iter().find(|&&s| s > train.len()) {
        return Err(EvalError::SizeExceedsData { size, available: train.len() }.into());
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut picked = order[..size].to_vec();
        picked.sort_unstable();
        let subset: Vec<CharacterRecord> = picked.iter().map(|&i| train[i].clone()).collect();
        let dev_f1 = trainer.dev_f1(&subset, dev, dimension)?;
        log::info!("{} curve: size {size} dev F1 {dev_f1:.4}", trainer.name());
        rows.push(CurveRow { size, dev_f1 });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub budget: usize,
    pub dev_f1: f64,
}

/// Cuts text to the first `budget` tokens, preserving the original string
/// when it already fits.
fn cut(text: &str, budget: usize) -> (&str, usize) {
    let tokens = tokenize(text);
    if tokens.len() <= budget {
        return (text, tokens.len());
    }
    if budget == 0 {
        return ("", 0);
    }
    (&text[..tokens[budget - 1].span.1], budget)
}

/// Keeps at most `budget` tokens of dialogue and, separately, of scene text,
/// earliest first. Mentions past the cut are dropped.
pub fn truncate_record(record: &CharacterRecord, budget: usize) -> CharacterRecord {
    let mut left = budget;
    let mut dialogues = Vec::new();
    for d in &record.dialogues {
        if left == 0 {
            break;
        }
        let (kept, n) = cut(d, left);
        dialogues.push(kept.to_string());
        left -= n;
    }
    let mut left = budget;
    let mut scenes = Vec::new();
    for s in &record.scenes {
        if left == 0 {
            break;
        }
        let (kept, n) = cut(&s.text, left);
        let mentions = s.mentions.iter().copied().filter(|&m| m < n).collect();
        scenes.push(SceneMention { text: kept.to_string(), mentions });
        left -= n;
    }
    CharacterRecord { profile: record.profile.clone(), dialogues, scenes, split: record.split }
}

/// Truncates train and dev inputs to each budget and retrains.
pub fn length_ablation(
    trainer: &dyn Trainer,
    train: &[CharacterRecord],
    dev: &[CharacterRecord],
    budgets: &[usize],
    dimension: Dimension,
) -> Result<Vec<AblationRow>, Error> {
    if budgets.contains(&0) {
        return Err(EvalError::ZeroBudget.into());
    }
    let mut rows = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let t: Vec<_> = train.iter().map(|r| truncate_record(r, budget)).collect();
        let d: Vec<_> = dev.iter().map(|r| truncate_record(r, budget)).collect();
        let dev_f1 = trainer.dev_f1(&t, &d, dimension)?;
        log::info!("{} ablation: budget {budget} dev F1 {dev_f1:.4}", trainer.name());
        rows.push(AblationRow { budget, dev_f1 });
    }
    Ok(rows)
}

/// A small text table that renders as CSV, JSON or aligned columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    /// Array of objects keyed by column name.
    pub fn to_json(&self) -> serde_json::Value {
        self.rows
            .iter()
            .map(|r| {
                self.columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| {
                        let value = v.parse::<f64>().ok().and_then(serde_json::Number::from_f64);
                        (c.clone(), value.map_or_else(|| serde_json::Value::String(v.clone()), serde_json::Value::Number))
                    })
                    .collect::<serde_json::Map<_, _>>()
                    .into()
            })
            .collect::<Vec<serde_json::Value>>()
            .into()
    }

    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|i| self.rows.iter().map(|r| r[i].chars().count()).chain([self.columns[i].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&self.columns).chain(&self.rows) {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

impl From<&[CurveRow]> for Table {
    fn from(rows: &[CurveRow]) -> Self {
        let mut t = Table::new(&["size", "dev_f1"]);
        for r in rows {
            t.push(vec![r.size.to_string(), format!("{:.4}", r.dev_f1)]);
        }
        t
    }
}

impl From<&[AblationRow]> for Table {
    fn from(rows: &[AblationRow]) -> Self {
        let mut t = Table::new(&["budget", "dev_f1"]);
        for r in rows {
            t.push(vec![r.budget.to_string(), format!("{:.4}", r.dev_f1)]);
        }
        t
    }
}

impl From<&HumanPerf> for Table {
    fn from(h: &HumanPerf) -> Self {
        let mut t = Table::new(&["dimension", "characters", "accuracy", "accuracy_std", "macro_f1", "macro_f1_std"]);
        for (dim, d) in &h.dimensions {
            t.push(vec![
                dim.name(),
                d.characters.to_string(),
                format!("{:.4}", d.accuracy.mean),
                format!("{:.4}", d.accuracy.std),
                format!("{:.4}", d.macro_f1.mean),
                format!("{:.4}", d.macro_f1.std),
            ]);
        }
        t
    }
}
