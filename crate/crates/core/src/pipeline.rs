//! Pipeline stages that read and write artifacts under the output
//! directory. Every artifact is a pure function of the config and inputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::{fit_baseline, predict_baseline, BaselineModel};
use crate::config::PipelineConfig;
use crate::dataset::{compute_stats, split_dataset, DatasetStats};
use crate::eval::{
    human_perf_estimate, learning_curve, length_ablation, score_records, AblationRow, BaselineTrainer, CurveRow,
    FusionTrainer, HumanPerf, Table, Trainer,
};
use crate::fusion::{predict_fusion, train_fusion, FusionOutcome, TrainedFusion};
use crate::ingest::load_dir;
use crate::ir::{CharacterRecord, Dimension, ParsedScript, PersonalityProfile, Split};
use crate::parser::{parse_corpus, ParseOutput, ParserConfig, ScriptReport};
use crate::persona::{filter_profiles, match_profiles, ProfileJson};
use crate::{jsonl, Error};

pub const PARSES: &str = "parses.jsonl";
pub const SILVER_REPORT: &str = "silver_report.jsonl";
pub const CORPUS_STATS: &str = "corpus_stats.json";
pub const SECTION_MODEL: &str = "section_model.bin";
pub const STATS_JSON: &str = "stats.json";
pub const STATS_TXT: &str = "stats.txt";
pub const UNMATCHED: &str = "unmatched.json";
pub const HUMAN_PERF: &str = "human_perf";

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Error {
    let context = context.into();
    move |source| Error::Io { context, source }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent.display().to_string()))?;
    }
    fs::write(path, contents).map_err(io_err(path.display().to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).map_err(crate::jsonl::JsonlError::from)?;
    text.push('\n');
    write(path, text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(io_err(path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| crate::jsonl::JsonlError::Parse { path: path.into(), line: 1, source: e }.into())
}

fn write_table(out_dir: &Path, stem: &str, table: &Table) -> Result<(), Error> {
    write(&out_dir.join(format!("{stem}.csv")), table.to_csv())?;
    write_json(&out_dir.join(format!("{stem}.json")), &table.to_json())
}

/// Short file tag of a dimension, e.g. `EI`.
pub fn dim_tag(dim: Dimension) -> String {
    dim.poles().iter().collect()
}

pub fn split_file(split: Split) -> String {
    format!("{}.jsonl", split.name())
}

fn parser_config(cfg: &PipelineConfig) -> ParserConfig {
    ParserConfig { tab_width: cfg.tab_width, seed: cfg.seed, ..ParserConfig::default() }
}

/// Ingests and labels every script in `scripts_dir`; writes the parses, the
/// silver report, corpus statistics and the section model.
pub fn parse_stage(cfg: &PipelineConfig) -> Result<ParseOutput, Error> {
    let dir = cfg
        .scripts_dir
        .as_ref()
        .ok_or_else(|| crate::ConfigError::Invalid("scripts_dir is not set".into()))?;
    let raws = load_dir(dir)?;
    let out = parse_corpus(&raws, &parser_config(cfg))?;
    write_parse_output(cfg, &out)?;
    Ok(out)
}

pub fn write_parse_output(cfg: &PipelineConfig, out: &ParseOutput) -> Result<(), Error> {
    let o = &cfg.out_dir;
    fs::create_dir_all(o).map_err(io_err(o.display().to_string()))?;
    jsonl::write(&o.join(PARSES), &out.scripts)?;
    jsonl::write(&o.join(SILVER_REPORT), &out.report)?;
    write_json(&o.join(CORPUS_STATS), &out.stats)?;
    if let Some(model) = &out.model {
        let mut buf = Vec::new();
        model.write_to(&mut buf)?;
        write(&o.join(SECTION_MODEL), buf)?;
    }
    Ok(())
}

pub fn read_parses(cfg: &PipelineConfig) -> Result<Vec<ParsedScript>, Error> {
    Ok(jsonl::read(&cfg.out_dir.join(PARSES))?)
}

pub fn read_report(cfg: &PipelineConfig) -> Result<Vec<ScriptReport>, Error> {
    Ok(jsonl::read(&cfg.out_dir.join(SILVER_REPORT))?)
}

pub fn read_profiles(path: &Path) -> Result<Vec<PersonalityProfile>, Error> {
    let lines: Vec<ProfileJson> = jsonl::read(path)?;
    Ok(lines.into_iter().map(PersonalityProfile::from).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub profiles: usize,
    pub retained: usize,
    pub matched: usize,
    pub unmatched: Vec<String>,
}

/// Filters profiles, matches them to parsed scripts, assigns splits and
/// writes one JSONL file per split plus the statistics tables.
pub fn build_stage(cfg: &PipelineConfig, scripts: &[ParsedScript]) -> Result<(Vec<CharacterRecord>, BuildSummary), Error> {
    let path = cfg.profiles.as_ref().ok_or_else(|| crate::ConfigError::Invalid("profiles is not set".into()))?;
    let profiles = read_profiles(path)?;
    let kept = filter_profiles(&profiles, cfg.min_voters, cfg.min_agreement);
    let (records, unmatched) = match_profiles(&kept, scripts);
    let records = split_dataset(&records, cfg.split_ratios, cfg.seed)?;
    write_dataset(cfg, &records)?;
    let summary = BuildSummary { profiles: profiles.len(), retained: kept.len(), matched: records.len(), unmatched };
    write_json(&cfg.out_dir.join(UNMATCHED), &summary)?;
    stats_stage(cfg, &records)?;
    Ok((records, summary))
}

pub fn write_dataset(cfg: &PipelineConfig, records: &[CharacterRecord]) -> Result<(), Error> {
    for split in Split::ASSIGNED {
        let part: Vec<&CharacterRecord> = records.iter().filter(|r| r.split == split).collect();
        jsonl::write(&cfg.out_dir.join(split_file(split)), &part)?;
    }
    Ok(())
}

pub fn read_split(cfg: &PipelineConfig, split: Split) -> Result<Vec<CharacterRecord>, Error> {
    Ok(jsonl::read(&cfg.out_dir.join(split_file(split)))?)
}

pub fn read_dataset(cfg: &PipelineConfig) -> Result<Vec<CharacterRecord>, Error> {
    let mut all = Vec::new();
    for split in Split::ASSIGNED {
        all.extend(read_split(cfg, split)?);
    }
    Ok(all)
}

pub fn stats_stage(cfg: &PipelineConfig, records: &[CharacterRecord]) -> Result<DatasetStats, Error> {
    let stats = compute_stats(records);
    write_json(&cfg.out_dir.join(STATS_JSON), &stats)?;
    write(&cfg.out_dir.join(STATS_TXT), stats.to_table())?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    pub dimension: Dimension,
    pub train_size: usize,
    pub epochs: usize,
    pub converged: bool,
    pub dev_f1: Option<f64>,
    pub test_f1: Option<f64>,
}

fn optional_score(
    records: &[CharacterRecord],
    dim: Dimension,
    predict: impl FnMut(&CharacterRecord) -> Result<char, Error>,
) -> Result<Option<f64>, Error> {
    match score_records(records, dim, predict) {
        Ok(f) => Ok(Some(f)),
        Err(Error::Eval(crate::EvalError::EmptyInput)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn baseline_model_path(cfg: &PipelineConfig, dim: Dimension) -> PathBuf {
    cfg.out_dir.join(format!("baseline_{}.json", dim_tag(dim)))
}

pub fn fusion_model_path(cfg: &PipelineConfig, dim: Dimension) -> PathBuf {
    cfg.out_dir.join(format!("fusion_{}_model.json", dim_tag(dim)))
}

/// Fits one SVM per dimension on train and scores dev and test.
pub fn train_baseline_stage(cfg: &PipelineConfig, dims: &[Dimension]) -> Result<Vec<BaselineMetrics>, Error> {
    let train = read_split(cfg, Split::Train)?;
    let dev = read_split(cfg, Split::Dev)?;
    let test = read_split(cfg, Split::Test)?;
    let mut metrics = Vec::new();
    for &dim in dims {
        let model = fit_baseline(&train, dim, cfg.svm, cfg.seed)?;
        let fit = model.fit.clone().expect("fitted model");
        let dev_f1 = optional_score(&dev, dim, |r| Ok(predict_baseline(&model, r)?))?;
        let test_f1 = optional_score(&test, dim, |r| Ok(predict_baseline(&model, r)?))?;
        write_json(&baseline_model_path(cfg, dim), &model)?;
        log::info!("baseline {dim}: dev {dev_f1:?} test {test_f1:?}");
        metrics.push(BaselineMetrics {
            dimension: dim,
            train_size: fit.train_size,
            epochs: fit.epochs,
            converged: fit.converged,
            dev_f1,
            test_f1,
        });
    }
    write_json(&cfg.out_dir.join("baseline_metrics.json"), &metrics)?;
    Ok(metrics)
}

/// Trains the fusion model for one dimension; writes per-run metrics with
/// the aggregate, the dev/test pairs and the kept model.
pub fn train_fusion_stage(cfg: &PipelineConfig, dim: Dimension) -> Result<FusionOutcome, Error> {
    let train = read_split(cfg, Split::Train)?;
    let dev = read_split(cfg, Split::Dev)?;
    let test = read_split(cfg, Split::Test)?;
    let out = train_fusion(&train, &dev, &test, dim, &cfg.fusion)?;
    let tag = dim_tag(dim);
    write_json(&cfg.out_dir.join(format!("fusion_{tag}_runs.json")), &out)?;
    write(&cfg.out_dir.join(format!("fusion_{tag}_dev_test.csv")), out.dev_test_csv())?;
    if let Some(best) = &out.best {
        write(&fusion_model_path(cfg, dim), best.to_json()?)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub dimension: Dimension,
    pub test_f1: Option<f64>,
}

/// Scores every saved model on the test split.
pub fn eval_stage(cfg: &PipelineConfig, dims: &[Dimension]) -> Result<Table, Error> {
    let test = read_split(cfg, Split::Test)?;
    let mut table = Table::new(&["model", "dimension", "test_f1"]);
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |f| format!("{f:.4}"));
    let mut found = false;
    for &dim in dims {
        let path = baseline_model_path(cfg, dim);
        if path.exists() {
            let model: BaselineModel = read_json(&path)?;
            let f = optional_score(&test, dim, |r| Ok(predict_baseline(&model, r)?))?;
            table.push(vec!["svm".into(), dim.name(), fmt(f)]);
            found = true;
        }
        let path = fusion_model_path(cfg, dim);
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(io_err(path.display().to_string()))?;
            let model = TrainedFusion::from_json(&text)?;
            let f = optional_score(&test, dim, |r| Ok(predict_fusion(&model, r)))?;
            table.push(vec!["fusion".into(), dim.name(), fmt(f)]);
            found = true;
        }
    }
    if !found {
        return Err(crate::ConfigError::Invalid("no trained models in the output directory".into()).into());
    }
    write_table(&cfg.out_dir, "eval", &table)?;
    Ok(table)
}

pub fn human_perf_stage(cfg: &PipelineConfig, voters: usize) -> Result<HumanPerf, Error> {
    let records = read_dataset(cfg)?;
    let h = human_perf_estimate(&records, cfg.seed, voters);
    write_json(&cfg.out_dir.join(format!("{HUMAN_PERF}.json")), &h)?;
    write(&cfg.out_dir.join(format!("{HUMAN_PERF}.csv")), Table::from(&h).to_csv())?;
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svm,
    Fusion,
}

impl ModelKind {
    fn trainer(self, cfg: &PipelineConfig) -> Box<dyn Trainer> {
        match self {
            ModelKind::Svm => Box::new(BaselineTrainer { config: cfg.svm, seed: cfg.seed }),
            ModelKind::Fusion => Box::new(FusionTrainer { config: cfg.fusion.clone() }),
        }
    }

    fn name(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::Fusion => "fusion",
        }
    }
}

/// `sizes` of `None` means "all training records".
pub fn curve_stage(cfg: &PipelineConfig, kind: ModelKind, dim: Dimension, sizes: &[Option<usize>]) -> Result<Vec<CurveRow>, Error> {
    let train = read_split(cfg, Split::Train)?;
    let dev = read_split(cfg, Split::Dev)?;
    let sizes: Vec<usize> = sizes.iter().map(|s| s.unwrap_or(train.len())).collect();
    let rows = learning_curve(kind.trainer(cfg).as_ref(), &train, &dev, &sizes, dim, cfg.seed)?;
    write_table(&cfg.out_dir, &format!("curve_{}_{}", kind.name(), dim_tag(dim)), &Table::from(&rows[..]))?;
    Ok(rows)
}

pub fn ablate_stage(cfg: &PipelineConfig, kind: ModelKind, dim: Dimension, budgets: &[usize]) -> Result<Vec<AblationRow>, Error> {
    let train = read_split(cfg, Split::Train)?;
    let dev = read_split(cfg, Split::Dev)?;
    let rows = length_ablation(kind.trainer(cfg).as_ref(), &train, &dev, budgets, dim)?;
    write_table(&cfg.out_dir, &format!("ablation_{}_{}", kind.name(), dim_tag(dim)), &Table::from(&rows[..]))?;
    Ok(rows)
}
