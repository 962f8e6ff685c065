//! The full three-stage script parser: FADE IN rule for corpus statistics,
//! silver thresholding per script, and the section classifier for the rest.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    classify_sections, extract_features, train_classifier, ClassifierError, LinearSectionModel, SectionFeatures,
    TrainConfig,
};
use crate::ingest::{normalize_lines, split_sections, IngestError, RawScript, DEFAULT_TAB_WIDTH};
use crate::ir::{ParseRoute, ParsedScript, SectionKind};
use crate::silver::{
    corpus_dialogue_stats, find_fade_in_indent, rule_label, silver_parse, CorpusDialogueStats, SilverError,
    SilverOutcome,
};

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error(transparent)]
    Silver(#[from] SilverError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("no script could be ingested")]
    NoScripts,
}

#[derive(Debug, Clone)]
pub struct ParserConfig {
    pub tab_width: usize,
    pub seed: u64,
    pub classifier: TrainConfig,
}

impl Default for ParserConfig {
    fn default() -> Self {
        ParserConfig { tab_width: DEFAULT_TAB_WIDTH, seed: 13, classifier: TrainConfig::default() }
    }
}

/// One line of the silver-parse audit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptReport {
    pub movie_name: String,
    pub route: ParseRoute,
    pub fade_in_indent: Option<usize>,
    pub threshold: Option<usize>,
    pub ratio: Option<f64>,
    pub sections: usize,
}

#[derive(Debug, Clone)]
pub struct ParseOutput {
    pub scripts: Vec<ParsedScript>,
    pub stats: CorpusDialogueStats,
    pub model: Option<LinearSectionModel>,
    pub report: Vec<ScriptReport>,
    /// Files that failed ingestion, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl ParseOutput {
    /// Fraction of scripts labeled by the silver stage.
    pub fn silver_fraction(&self) -> f64 {
        if self.scripts.is_empty() {
            return 0.0;
        }
        let n = self.report.iter().filter(|r| r.route == ParseRoute::SilverSuccess).count();
        n as f64 / self.scripts.len() as f64
    }
}

/// Normalizes and splits one raw script and records its FADE IN anchor.
pub fn parse_raw(raw: &RawScript, tab_width: usize) -> Result<ParsedScript, IngestError> {
    let lines = normalize_lines(raw, tab_width)?;
    let mut script = ParsedScript::new(raw.movie_name.clone(), split_sections(&lines));
    script.fade_in_indent = find_fade_in_indent(&script);
    Ok(script)
}

/// Ingests raw scripts (in parallel; output order follows input order) and
/// labels them. Scripts that fail ingestion are logged and skipped.
pub fn parse_corpus(raws: &[RawScript], config: &ParserConfig) -> Result<ParseOutput, ParseError> {
    let parsed: Vec<Result<ParsedScript, IngestError>> =
        raws.par_iter().map(|r| parse_raw(r, config.tab_width)).collect();
    let mut scripts = Vec::new();
    let mut skipped = Vec::new();
    for (raw, res) in raws.iter().zip(parsed) {
        match res {
            Ok(s) => scripts.push(s),
            Err(e) => {
                log::warn!("skipping `{}`: {e}", raw.movie_name);
                skipped.push((raw.movie_name.clone(), e.to_string()));
            }
        }
    }
    if scripts.is_empty() {
        return Err(ParseError::NoScripts);
    }
    let mut out = label_scripts(scripts, config)?;
    out.skipped = skipped;
    Ok(out)
}

/// Runs the three labeling stages over already-split scripts.
pub fn label_scripts(scripts: Vec<ParsedScript>, config: &ParserConfig) -> Result<ParseOutput, ParseError> {
    let rule_labeled: Vec<ParsedScript> = scripts
        .iter()
        .filter_map(|s| s.fade_in_indent.map(|a| rule_label(s, Some(a))))
        .collect::<Result<_, _>>()?;
    let stats = corpus_dialogue_stats(&rule_labeled)?;

    let mut labeled: Vec<Option<ParsedScript>> = vec![None; scripts.len()];
    let mut report: Vec<ScriptReport> = Vec::with_capacity(scripts.len());
    let mut pending: Vec<usize> = Vec::new();
    for (i, s) in scripts.iter().enumerate() {
        let mut entry = ScriptReport {
            movie_name: s.movie_name.clone(),
            route: ParseRoute::NoFadeIn,
            fade_in_indent: s.fade_in_indent,
            threshold: None,
            ratio: None,
            sections: s.sections.len(),
        };
        if s.fade_in_indent.is_some() {
            let r = silver_parse(s, &stats);
            entry.threshold = r.chosen_threshold;
            entry.ratio = r.ratio;
            match r.outcome {
                SilverOutcome::Success => {
                    entry.route = ParseRoute::SilverSuccess;
                    labeled[i] = Some(r.script);
                }
                SilverOutcome::Failure => {
                    entry.route = ParseRoute::SilverFailure;
                    pending.push(i);
                }
            }
        } else {
            pending.push(i);
        }
        report.push(entry);
    }

    let silver_examples: Vec<(SectionFeatures, SectionKind)> = labeled
        .iter()
        .flatten()
        .flat_map(|s| {
            s.sections.iter().filter_map(move |sec| extract_features(sec, s).ok().map(|f| (f, sec.kind)))
        })
        .collect();
    let model = match train_classifier(&silver_examples, config.seed, &config.classifier) {
        Ok(m) => Some(m),
        Err(e) if pending.is_empty() => {
            log::warn!("section classifier not trained: {e}");
            None
        }
        Err(e) => return Err(e.into()),
    };

    for &i in &pending {
        let model = model.as_ref().ok_or(ClassifierError::UntrainedModel)?;
        let mut s = classify_sections(model, &scripts[i])?;
        s.parse_route = Some(report[i].route);
        labeled[i] = Some(s);
    }
    for (r, s) in report.iter_mut().zip(&labeled) {
        if r.route != ParseRoute::SilverSuccess {
            r.ratio = s.as_ref().and_then(ParsedScript::dialogue_ratio);
        }
    }
    let scripts = labeled.into_iter().map(|s| s.expect("every script labeled")).collect();
    Ok(ParseOutput { scripts, stats, model, report, skipped: Vec::new() })
}
