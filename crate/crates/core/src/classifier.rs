//! Self-trained section classifier: a logistic-regression model over hashed
//! sparse features, fit on silver-labeled sections and used to label the
//! scripts the silver stage could not.

use std::hash::Hasher;
use std::io::{Read, Write};

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ir::{LabelSource, ParsedScript, Section, SectionKind};
use crate::text::words_lower;

pub const HASH_BITS: u32 = 18;
pub const FEATURE_VERSION: u32 = 1;
const MODEL_MAGIC: &[u8; 4] = b"SPSC";
const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("section has neither title nor body")]
    EmptySection,
    #[error("training set needs at least two examples of each class (dialogue: {dialogue}, scene: {scene})")]
    DegenerateTrainingSet { dialogue: usize, scene: usize },
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse hashed feature vector, sorted by index with collisions summed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SectionFeatures {
    pub entries: Vec<(u32, f64)>,
}

impl SectionFeatures {
    fn from_named(named: Vec<(String, f64)>) -> Self {
        let mask = (1u64 << HASH_BITS) - 1;
        let mut entries: Vec<(u32, f64)> = named
            .into_iter()
            .map(|(name, v)| {
                let mut h = FnvHasher::default();
                h.write(name.as_bytes());
                ((h.finish() & mask) as u32, v)
            })
            .collect();
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        SectionFeatures { entries: merged }
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| weights[i as usize] * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TitleCase {
    AllCaps,
    TitleCase,
    Other,
    Missing,
}

fn title_case(title: Option<&str>) -> TitleCase {
    let Some(t) = title else { return TitleCase::Missing };
    let letters: Vec<char> = t.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.is_empty() {
        return TitleCase::Other;
    }
    if letters.iter().all(|c| !c.is_lowercase()) {
        return TitleCase::AllCaps;
    }
    let words: Vec<&str> = t.split_whitespace().collect();
    if words.iter().all(|w| w.chars().find(|c| c.is_alphabetic()).is_none_or(char::is_uppercase)) {
        TitleCase::TitleCase
    } else {
        TitleCase::Other
    }
}

fn is_scene_heading(title: &str) -> bool {
    let t = title.trim_start().to_ascii_uppercase();
    ["INT.", "EXT.", "INT ", "EXT ", "INT/", "EXT/", "I/E"].iter().any(|p| t.starts_with(p))
}

fn line_bucket(n: usize) -> &'static str {
    match n {
        0 => "0",
        1 => "1",
        2 => "2",
        3..=5 => "3-5",
        6..=10 => "6-10",
        _ => "11+",
    }
}

fn punct_bucket(body: &str) -> &'static str {
    let visible = body.chars().filter(|c| !c.is_whitespace()).count();
    if visible == 0 {
        return "none";
    }
    let punct = body.chars().filter(|c| c.is_ascii_punctuation()).count();
    let d = punct as f64 / visible as f64;
    if d < 0.02 {
        "lt0.02"
    } else if d < 0.05 {
        "lt0.05"
    } else if d < 0.1 {
        "lt0.1"
    } else {
        "ge0.1"
    }
}

/// Z-score of `section`'s indent against the script's section indents; zero
/// when the script has no indent spread.
fn indent_z(section: &Section, script: &ParsedScript) -> f64 {
    let n = script.sections.len();
    if n == 0 {
        return 0.0;
    }
    let mean = script.sections.iter().map(|s| s.indent as f64).sum::<f64>() / n as f64;
    let var = script.sections.iter().map(|s| (s.indent as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return 0.0;
    }
    ((section.indent as f64 - mean) / var.sqrt()).clamp(-5.0, 5.0)
}

pub fn extract_features(section: &Section, script: &ParsedScript) -> Result<SectionFeatures, ClassifierError> {
    if section.title.is_none() && section.body.is_empty() {
        return Err(ClassifierError::EmptySection);
    }
    let mut named: Vec<(String, f64)> = Vec::new();
    if let Some(t) = &section.title {
        let mut seen = std::collections::BTreeSet::new();
        for w in words_lower(t) {
            if seen.insert(w.clone()) {
                named.push((format!("t:{w}"), 1.0));
            }
        }
        if is_scene_heading(t) {
            named.push(("intext".into(), 1.0));
        }
    }
    let body = section.body_text();
    let words = words_lower(&body);
    let mut seen = std::collections::BTreeSet::new();
    for w in &words {
        if seen.insert(format!("b:{w}")) {
            named.push((format!("b:{w}"), 1.0));
        }
    }
    for pair in words.windows(2) {
        let key = format!("bb:{}_{}", pair[0], pair[1]);
        if seen.insert(key.clone()) {
            named.push((key, 1.0));
        }
    }
    named.push(("indent_z".into(), indent_z(section, script)));
    named.push((format!("case:{:?}", title_case(section.title.as_deref())), 1.0));
    named.push((format!("lines:{}", line_bucket(section.body.len())), 1.0));
    named.push((format!("punct:{}", punct_bucket(&body)), 1.0));
    Ok(SectionFeatures::from_named(named))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub l2: f64,
    pub silver_size: usize,
    pub train_size: usize,
    pub holdout_size: usize,
    pub holdout_accuracy: f64,
    pub hash_bits: u32,
    pub feature_version: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSectionModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub meta: Option<TrainingMeta>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 10, learning_rate: 0.1, l2: 1e-6, holdout_fraction: 0.1 }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LinearSectionModel {
    pub fn untrained() -> Self {
        LinearSectionModel { weights: vec![0.0; 1 << HASH_BITS], bias: 0.0, meta: None }
    }

    pub fn score(&self, x: &SectionFeatures) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    /// Dialogue iff the score is strictly positive.
    pub fn predict(&self, x: &SectionFeatures) -> SectionKind {
        if self.score(x) > 0.0 {
            SectionKind::Dialogue
        } else {
            SectionKind::Scene
        }
    }

    pub fn holdout_accuracy(&self) -> Option<f64> {
        self.meta.as_ref().map(|m| m.holdout_accuracy)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), ClassifierError> {
        let meta = serde_json::to_vec(&self.meta).map_err(|e| ClassifierError::Format(e.to_string()))?;
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&self.bias.to_le_bytes())?;
        let nonzero: Vec<(u32, f64)> =
            self.weights.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (i as u32, v)).collect();
        w.write_all(&(nonzero.len() as u32).to_le_bytes())?;
        for (i, v) in nonzero {
            w.write_all(&i.to_le_bytes())?;
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, ClassifierError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(ClassifierError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::Format(format!("unsupported format version {version}")));
        }
        let meta_len = read_u32(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta: Option<TrainingMeta> =
            serde_json::from_slice(&meta).map_err(|e| ClassifierError::Format(e.to_string()))?;
        if let Some(m) = &meta {
            if m.hash_bits != HASH_BITS || m.feature_version != FEATURE_VERSION {
                return Err(ClassifierError::Format("feature hashing version mismatch".into()));
            }
        }
        let bias = read_f64(&mut r)?;
        let n = read_u32(&mut r)? as usize;
        let mut weights = vec![0.0; 1 << HASH_BITS];
        for _ in 0..n {
            let i = read_u32(&mut r)? as usize;
            let v = read_f64(&mut r)?;
            *weights.get_mut(i).ok_or_else(|| ClassifierError::Format(format!("index {i} out of range")))? = v;
        }
        Ok(LinearSectionModel { weights, bias, meta })
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Fits the model by seeded, epoch-ordered SGD on logistic loss and records
/// accuracy on a deterministic held-out split.
pub fn train_classifier(
    silver: &[(SectionFeatures, SectionKind)],
    seed: u64,
    config: &TrainConfig,
) -> Result<LinearSectionModel, ClassifierError> {
    let dialogue = silver.iter().filter(|(_, k)| *k == SectionKind::Dialogue).count();
    let scene = silver.iter().filter(|(_, k)| *k == SectionKind::Scene).count();
    if dialogue < 2 || scene < 2 {
        return Err(ClassifierError::DegenerateTrainingSet { dialogue, scene });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..silver.len()).collect();
    order.shuffle(&mut rng);
    let holdout_n = ((silver.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, silver.len() - 1);
    let (train_idx, holdout_idx) = order.split_at(silver.len() - holdout_n);
    let mut train_idx = train_idx.to_vec();

    let mut model = LinearSectionModel::untrained();
    for _ in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        for &i in &train_idx {
            let (x, kind) = &silver[i];
            let y = if *kind == SectionKind::Dialogue { 1.0 } else { 0.0 };
            let g = sigmoid(model.score(x)) - y;
            for &(j, v) in &x.entries {
                let w = &mut model.weights[j as usize];
                *w -= config.learning_rate * (g * v + config.l2 * *w);
            }
            model.bias -= config.learning_rate * g;
        }
    }
    let correct = holdout_idx.iter().filter(|&&i| model.predict(&silver[i].0) == silver[i].1).count();
    model.meta = Some(TrainingMeta {
        epochs: config.epochs,
        seed,
        learning_rate: config.learning_rate,
        l2: config.l2,
        silver_size: silver.len(),
        train_size: train_idx.len(),
        holdout_size: holdout_idx.len(),
        holdout_accuracy: correct as f64 / holdout_idx.len() as f64,
        hash_bits: HASH_BITS,
        feature_version: FEATURE_VERSION,
    });
    Ok(model)
}

/// Labels every section of `script` with the model's decision.
pub fn classify_sections(model: &LinearSectionModel, script: &ParsedScript) -> Result<ParsedScript, ClassifierError> {
    if model.meta.is_none() {
        return Err(ClassifierError::UntrainedModel);
    }
    let mut out = script.clone();
    for (i, s) in script.sections.iter().enumerate() {
        let x = extract_features(s, script)?;
        out.sections[i].kind = model.predict(&x);
        out.sections[i].source = Some(LabelSource::Classifier);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Line;

    fn sec(title: Option<&str>, indent: usize, body: &[&str]) -> Section {
        let lines = body
            .iter()
            .enumerate()
            .map(|(i, t)| Line { indent, text: t.to_string(), is_bold: false, line_no: i })
            .collect();
        Section::new(title.map(|t| (t.to_string(), indent)), lines)
    }

    fn has(f: &SectionFeatures, name: &str) -> Option<f64> {
        let probe = SectionFeatures::from_named(vec![(name.to_string(), 1.0)]);
        let idx = probe.entries[0].0;
        f.entries.iter().find(|e| e.0 == idx).map(|e| e.1)
    }

    #[test]
    fn int_ext_flag() {
        let s = sec(Some("INT. HALLWAY"), 0, &["He runs."]);
        let script = ParsedScript::new("M", vec![s.clone()]);
        let f = extract_features(&s, &script).unwrap();
        assert_eq!(has(&f, "intext"), Some(1.0));
        assert_eq!(has(&f, "case:AllCaps"), Some(1.0));
    }

    #[test]
    fn deepest_section_has_positive_z() {
        let a = sec(None, 0, &["x"]);
        let b = sec(None, 25, &["y"]);
        let script = ParsedScript::new("M", vec![a, b.clone()]);
        assert!(indent_z(&b, &script) > 0.0);
        let f = extract_features(&b, &script).unwrap();
        assert!(has(&f, "indent_z").unwrap() > 0.0);
    }

    #[test]
    fn bare_title_features() {
        let s = sec(Some("CUT TO:"), 50, &[]);
        let script = ParsedScript::new("M", vec![s.clone()]);
        let f = extract_features(&s, &script).unwrap();
        assert_eq!(has(&f, "lines:0"), Some(1.0));
        assert_eq!(has(&f, "t:cut"), Some(1.0));
    }

    #[test]
    fn empty_section_rejected() {
        let s = Section::new(None, vec![]);
        let script = ParsedScript::new("M", vec![]);
        assert!(matches!(extract_features(&s, &script), Err(ClassifierError::EmptySection)));
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = SectionFeatures::from_named(vec![("a".into(), 1.0)]);
        let data = vec![(x.clone(), SectionKind::Scene), (x, SectionKind::Scene)];
        assert!(matches!(
            train_classifier(&data, 1, &TrainConfig::default()),
            Err(ClassifierError::DegenerateTrainingSet { .. })
        ));
    }

    #[test]
    fn untrained_model_refuses() {
        let script = ParsedScript::new("M", vec![]);
        assert!(matches!(
            classify_sections(&LinearSectionModel::untrained(), &script),
            Err(ClassifierError::UntrainedModel)
        ));
    }

    #[test]
    fn zero_score_is_scene() {
        let m = LinearSectionModel::untrained();
        assert_eq!(m.predict(&SectionFeatures::default()), SectionKind::Scene);
    }

    #[test]
    fn model_file_roundtrip() {
        let mut m = LinearSectionModel::untrained();
        m.weights[17] = 0.25;
        m.weights[9000] = -1.5;
        m.bias = 0.125;
        m.meta = Some(TrainingMeta {
            epochs: 3,
            seed: 9,
            learning_rate: 0.1,
            l2: 0.0,
            silver_size: 10,
            train_size: 9,
            holdout_size: 1,
            holdout_accuracy: 1.0,
            hash_bits: HASH_BITS,
            feature_version: FEATURE_VERSION,
        });
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(LinearSectionModel::read_from(buf.as_slice()).unwrap(), m);
        buf[0] = b'X';
        assert!(LinearSectionModel::read_from(buf.as_slice()).is_err());
    }
}
