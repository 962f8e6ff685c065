//! Screenplay parsing and character-persona dataset pipeline.
//!
//! Scripts are split into titled sections and labeled dialogue or scene by
//! a FADE IN indent rule, per-script indent thresholding against corpus
//! dialogue statistics, and a linear section classifier for the rest.
//! Personality profiles are then matched to script characters, and the
//! resulting records feed an n-gram SVM baseline and a multi-view,
//! multi-row attention fusion model.

pub mod baseline;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod fusion;
pub mod ingest;
pub mod ir;
pub mod jsonl;
pub mod parser;
pub mod persona;
pub mod pipeline;
pub mod silver;
pub mod stopwords;
pub mod synth;
pub mod text;

pub use baseline::{fit_baseline, predict_baseline, BaselineError, BaselineModel, SvmConfig};
pub use classifier::{ClassifierError, LinearSectionModel};
pub use config::{ConfigError, PipelineConfig};
pub use dataset::{compute_stats, split_dataset, DatasetError, DatasetStats};
pub use eval::{human_perf_estimate, macro_f1, majority_label, EvalError, MeanStd};
pub use fusion::{FusionConfig, FusionError, FusionState, MultiViewInput};
pub use ingest::{IngestError, RawScript, SourceFormat};
pub use ir::{
    validate_record, CharacterRecord, Dimension, DimensionVote, LabelSource, Line, ParseRoute, ParsedScript,
    PersonalityProfile, Scale, SceneMention, Section, SectionKind, Split,
};
pub use jsonl::JsonlError;
pub use parser::{parse_corpus, ParseError, ParseOutput, ParserConfig};
pub use persona::{filter_profiles, match_profiles, soft_match, MatchError};
pub use silver::{CorpusDialogueStats, SilverError, SilverOutcome, SilverResult};

/// Any pipeline failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Silver(#[from] SilverError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}
