//! Training loop: Adam over minibatches, seeded runs, dev-based selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::MixingEncoder;
use super::model::{loss_and_grad, multiview_forward, FusionModel};
use super::segment::{MultiViewInput, SegmentConfig};
use super::FusionError;
use crate::eval::{macro_f1, MeanStd};
use crate::ir::{CharacterRecord, Dimension};

/// Learning rate used with pretrained transformer encoders. The small
/// reference encoder trains with a rate picked from `FusionConfig::lr_grid`.
pub const REFERENCE_LEARNING_RATE: f64 = 2e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub hidden: usize,
    pub l_max: usize,
    pub r_max: usize,
    pub vocab_size: u32,
    pub window: usize,
    pub epochs: usize,
    pub runs: usize,
    /// Fixed learning rate; `None` picks the best of `lr_grid` on dev.
    pub lr: Option<f64>,
    pub lr_grid: Vec<f64>,
    pub batch_size: usize,
    pub seed: u64,
    pub use_scene_view: bool,
    pub init_scale: f64,
    pub token_budget: Option<usize>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            hidden: 16,
            l_max: 32,
            r_max: 20,
            vocab_size: 2048,
            window: 2,
            epochs: 20,
            runs: 5,
            lr: None,
            lr_grid: vec![1e-3, 1e-2],
            batch_size: 8,
            seed: 0,
            use_scene_view: true,
            init_scale: 0.1,
            token_budget: None,
        }
    }
}

impl FusionConfig {
    pub fn segment(&self) -> SegmentConfig {
        SegmentConfig { l_max: self.l_max, r_max: self.r_max, vocab_size: self.vocab_size, token_budget: self.token_budget }
    }

    pub fn model(&self) -> FusionModel {
        FusionModel::new(MixingEncoder {
            vocab_size: self.vocab_size as usize,
            max_len: self.l_max,
            hidden: self.hidden,
            window: self.window,
        })
    }

    fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: &str| Err(FusionError::Config(m.to_string()));
        if self.hidden == 0 || self.l_max == 0 || self.r_max == 0 {
            return bad("hidden, l_max and r_max must be positive");
        }
        if self.vocab_size <= 2 {
            return bad("vocab_size must exceed the two reserved ids");
        }
        if self.runs == 0 || self.batch_size == 0 {
            return bad("runs and batch_size must be positive");
        }
        if self.lr.is_none() && self.lr_grid.is_empty() {
            return bad("no learning rate and an empty lr_grid");
        }
        if self.lr.into_iter().chain(self.lr_grid.iter().copied()).any(|lr| !(lr > 0.0 && lr.is_finite())) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            params[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_f1: f64,
    pub dev_f1: Option<f64>,
    pub test_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub lr: f64,
    /// Epoch whose parameters were kept, 1-based.
    pub best_epoch: usize,
    pub train_f1: f64,
    pub dev_f1: Option<f64>,
    pub test_f1: Option<f64>,
    pub epochs: Vec<EpochMetrics>,
}

impl RunMetrics {
    fn selection_score(&self) -> f64 {
        self.dev_f1.unwrap_or(self.train_f1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedFusion {
    pub dimension: Dimension,
    pub model: FusionModel,
    pub segment: SegmentConfig,
    pub use_scene_view: bool,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionOutcome {
    pub dimension: Dimension,
    pub lr: f64,
    pub runs: Vec<RunMetrics>,
    pub dev_f1: Option<MeanStd>,
    pub test_f1: Option<MeanStd>,
    pub train_f1: MeanStd,
    /// Parameters of the run with the best selection score.
    #[serde(skip)]
    pub best: Option<TrainedFusion>,
}

impl FusionOutcome {
    /// One `run,dev_f1,test_f1` line per run.
    pub fn dev_test_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut out = String::from("run,dev_f1,test_f1\n");
        for r in &self.runs {
            out.push_str(&format!("{},{},{}\n", r.run, fmt(r.dev_f1), fmt(r.test_f1)));
        }
        out
    }
}

type Example = (MultiViewInput, usize);

fn prepare(records: &[CharacterRecord], dimension: Dimension, segment: &SegmentConfig) -> Vec<Example> {
    records
        .iter()
        .filter_map(|r| {
            let target = dimension.pole_index(r.profile.vote(dimension)?.winner)?;
            Some((MultiViewInput::from_record(r, segment), target))
        })
        .collect()
}

fn predict_index(model: &FusionModel, params: &[f64], input: &MultiViewInput, use_scene: bool) -> usize {
    let [z0, z1] = multiview_forward(model, params, input, use_scene).scores;
    usize::from(z0 <= z1)
}

fn f1_on(model: &FusionModel, params: &[f64], data: &[Example], use_scene: bool) -> Option<f64> {
    let pred: Vec<usize> = data.par_iter().map(|(x, _)| predict_index(model, params, x, use_scene)).collect();
    let gold: Vec<usize> = data.iter().map(|(_, y)| *y).collect();
    macro_f1(&gold, &pred).ok()
}

struct RunResult {
    metrics: RunMetrics,
    params: Vec<f64>,
}

fn run_once(
    config: &FusionConfig,
    model: &FusionModel,
    lr: f64,
    run: usize,
    train: &[Example],
    dev: &[Example],
    test: &[Example],
) -> RunResult {
    let seed = config.seed.wrapping_add(run as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = model.init_params(&mut rng, config.init_scale);
    let mut adam = Adam::new(params.len(), lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut epochs = Vec::with_capacity(config.epochs);
    let use_scene = config.use_scene_view;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let parts: Vec<(f64, Vec<f64>)> =
                batch.par_iter().map(|&i| loss_and_grad(model, &params, &train[i].0, train[i].1, use_scene)).collect();
            let mut grad = vec![0.0; params.len()];
            for (loss, g) in &parts {
                total_loss += loss;
                for (acc, v) in grad.iter_mut().zip(g) {
                    *acc += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &grad);
        }
        let train_f1 = f1_on(model, &params, train, use_scene).unwrap_or(0.0);
        let dev_f1 = f1_on(model, &params, dev, use_scene);
        let test_f1 = f1_on(model, &params, test, use_scene);
        let score = dev_f1.unwrap_or(train_f1);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, params.clone()));
        }
        log::debug!("run {run} epoch {epoch}: loss {:.4} train {train_f1:.4} dev {dev_f1:?}", total_loss / train.len() as f64);
        epochs.push(EpochMetrics { epoch, train_loss: total_loss / train.len() as f64, train_f1, dev_f1, test_f1 });
    }
    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    let (train_f1, dev_f1, test_f1) = match epochs.get(best_epoch.wrapping_sub(1)) {
        Some(e) => (e.train_f1, e.dev_f1, e.test_f1),
        None => (f1_on(model, &params, train, use_scene).unwrap_or(0.0), None, None),
    };
    RunResult { metrics: RunMetrics { run, seed, lr, best_epoch, train_f1, dev_f1, test_f1, epochs }, params }
}

/// Trains `config.runs` seeded models for one dimension. Records without a
/// vote on the dimension are ignored. Each run keeps the epoch with the best
/// dev macro-F1 (train macro-F1 when `dev` has no labeled records).
pub fn train_fusion(
    train: &[CharacterRecord],
    dev: &[CharacterRecord],
    test: &[CharacterRecord],
    dimension: Dimension,
    config: &FusionConfig,
) -> Result<FusionOutcome, FusionError> {
    config.validate()?;
    let segment = config.segment();
    let train_x = prepare(train, dimension, &segment);
    let n_first = train_x.iter().filter(|(_, y)| *y == 0).count();
    let n_second = train_x.len() - n_first;
    if n_first == 0 || n_second == 0 {
        let [first, second] = dimension.poles();
        return Err(FusionError::DegenerateTrainingSet { dimension, first, n_first, second, n_second });
    }
    let dev_x = prepare(dev, dimension, &segment);
    let test_x = prepare(test, dimension, &segment);
    let model = config.model();

    let lr = match config.lr {
        Some(lr) => lr,
        None => {
            let mut chosen = (f64::NEG_INFINITY, config.lr_grid[0]);
            for &lr in &config.lr_grid {
                let s = run_once(config, &model, lr, 0, &train_x, &dev_x, &[]).metrics.selection_score();
                log::info!("{dimension}: lr {lr} scores {s:.4}");
                if s > chosen.0 {
                    chosen = (s, lr);
                }
            }
            chosen.1
        }
    };

    let mut runs = Vec::with_capacity(config.runs);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for run in 0..config.runs {
        let r = run_once(config, &model, lr, run, &train_x, &dev_x, &test_x);
        let s = r.metrics.selection_score();
        log::info!("{dimension}: run {run} best epoch {} score {s:.4}", r.metrics.best_epoch);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, r.params));
        }
        runs.push(r.metrics);
    }
    let collect = |f: fn(&RunMetrics) -> Option<f64>| -> Option<MeanStd> {
        let v: Option<Vec<f64>> = runs.iter().map(f).collect();
        v.and_then(|v| MeanStd::of(&v))
    };
    Ok(FusionOutcome {
        dimension,
        lr,
        dev_f1: collect(|r| r.dev_f1),
        test_f1: collect(|r| r.test_f1),
        train_f1: collect(|r| Some(r.train_f1)).expect("at least one run"),
        runs,
        best: best.map(|(_, params)| TrainedFusion {
            dimension,
            model,
            segment,
            use_scene_view: config.use_scene_view,
            params,
        }),
    })
}

/// First pole iff its score is strictly larger.
pub fn predict_fusion(trained: &TrainedFusion, record: &CharacterRecord) -> char {
    let input = MultiViewInput::from_record(record, &trained.segment);
    trained.dimension.poles()[predict_index(&trained.model, &trained.params, &input, trained.use_scene_view)]
}

impl TrainedFusion {
    pub fn to_json(&self) -> Result<String, FusionError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, FusionError> {
        let t: TrainedFusion = serde_json::from_str(s)?;
        if t.params.len() != t.model.num_params() {
            return Err(FusionError::Config(format!(
                "model file holds {} parameters, layout needs {}",
                t.params.len(),
                t.model.num_params()
            )));
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{DimensionVote, PersonalityProfile, Scale, Split};

    fn record(i: usize, pole: char) -> CharacterRecord {
        let marker = if pole == 'E' { "sunshine" } else { "shadow" };
        CharacterRecord {
            profile: PersonalityProfile {
                profile_id: i.to_string(),
                character_name: format!("C{i}"),
                movie_name: format!("M{i}"),
                votes: vec![DimensionVote { dimension: Dimension::EI, winner: pole, vote_count: 5, agreement: 0.8 }],
                scale: Scale::Mbti,
            },
            dialogues: vec![format!("well I think the {marker} is near"), "we go now".into()],
            scenes: vec![],
            split: Split::Train,
        }
    }

    fn small() -> FusionConfig {
        FusionConfig { hidden: 6, l_max: 8, r_max: 4, vocab_size: 64, epochs: 20, runs: 1, lr: Some(1e-2), ..Default::default() }
    }

    #[test]
    fn learns_a_dialogue_marker() {
        let train: Vec<_> = (0..24).map(|i| record(i, if i % 2 == 0 { 'E' } else { 'I' })).collect();
        let out = train_fusion(&train, &[], &[], Dimension::EI, &small()).unwrap();
        assert!(out.train_f1.mean >= 0.95, "train F1 {}", out.train_f1.mean);
        let best = out.best.unwrap();
        assert_eq!(predict_fusion(&best, &record(99, 'I')), 'I');
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let train: Vec<_> = (0..10).map(|i| record(i, if i % 3 == 0 { 'E' } else { 'I' })).collect();
        let cfg = FusionConfig { epochs: 3, ..small() };
        let a = train_fusion(&train, &train, &[], Dimension::EI, &cfg).unwrap();
        let b = train_fusion(&train, &train, &[], Dimension::EI, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_pole_only_is_degenerate() {
        let train: Vec<_> = (0..4).map(|i| record(i, 'E')).collect();
        assert!(matches!(
            train_fusion(&train, &[], &[], Dimension::EI, &small()),
            Err(FusionError::DegenerateTrainingSet { n_second: 0, .. })
        ));
        assert!(matches!(
            train_fusion(&[], &[], &[], Dimension::EI, &small()),
            Err(FusionError::DegenerateTrainingSet { n_first: 0, .. })
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let train: Vec<_> = (0..6).map(|i| record(i, if i % 2 == 0 { 'E' } else { 'I' })).collect();
        let out = train_fusion(&train, &[], &[], Dimension::EI, &FusionConfig { epochs: 1, ..small() }).unwrap();
        let best = out.best.unwrap();
        assert_eq!(TrainedFusion::from_json(&best.to_json().unwrap()).unwrap(), best);
    }
}
