//! Rule-based labeling against the FADE IN anchor and the statistical
//! silver-parse stage that picks a per-script dialogue indent threshold.

use serde::{Deserialize, Serialize};

use crate::ir::{LabelSource, ParseRoute, ParsedScript, SectionKind};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SilverError {
    #[error("script `{0}` has no FADE IN anchor")]
    MissingAnchor(String),
    #[error("no rule-labeled scripts with sections to compute dialogue statistics")]
    EmptyCorpus,
}

/// Mean and population standard deviation of the per-script dialogue ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusDialogueStats {
    pub mu: f64,
    pub sigma: f64,
    pub n_scripts: usize,
}

impl CorpusDialogueStats {
    pub fn band(&self) -> (f64, f64) {
        (self.mu - self.sigma, self.mu + self.sigma)
    }

    pub fn in_band(&self, ratio: f64) -> bool {
        let (lo, hi) = self.band();
        ratio >= lo && ratio <= hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SilverOutcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilverResult {
    pub script: ParsedScript,
    pub outcome: SilverOutcome,
    pub chosen_threshold: Option<usize>,
    /// Dialogue ratio at the accepted threshold, or at the last level tried.
    pub ratio: Option<f64>,
}

/// Indent of the first line (titles included) starting with `FADE IN`.
pub fn find_fade_in_indent(script: &ParsedScript) -> Option<usize> {
    let is_marker = |t: &str| t.len() >= 7 && t[..7].eq_ignore_ascii_case("FADE IN");
    for s in &script.sections {
        if let (Some(t), Some(i)) = (&s.title, s.title_indent) {
            if is_marker(t) {
                return Some(i);
            }
        }
        if let Some(l) = s.body.iter().find(|l| is_marker(&l.text)) {
            return Some(l.indent);
        }
    }
    None
}

/// Labels every section deeper than `anchor` as dialogue, the rest as scene.
pub fn rule_label(script: &ParsedScript, anchor: Option<usize>) -> Result<ParsedScript, SilverError> {
    let anchor = anchor.ok_or_else(|| SilverError::MissingAnchor(script.movie_name.clone()))?;
    let mut out = script.clone();
    for s in &mut out.sections {
        let kind = if s.indent > anchor { SectionKind::Dialogue } else { SectionKind::Scene };
        s.kind = kind;
        s.source = Some(LabelSource::Rule);
    }
    out.fade_in_indent = Some(anchor);
    Ok(out)
}

/// Mean and population standard deviation of dialogue ratios over
/// rule-labeled scripts. Scripts without sections are skipped.
pub fn corpus_dialogue_stats(rule_labeled: &[ParsedScript]) -> Result<CorpusDialogueStats, SilverError> {
    let ratios: Vec<f64> = rule_labeled
        .iter()
        .filter_map(|s| {
            let r = s.dialogue_ratio();
            if r.is_none() {
                log::warn!("`{}` has no sections; excluded from dialogue statistics", s.movie_name);
            }
            r
        })
        .collect();
    if ratios.is_empty() {
        return Err(SilverError::EmptyCorpus);
    }
    let n = ratios.len() as f64;
    let mu = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / n;
    Ok(CorpusDialogueStats { mu, sigma: var.sqrt(), n_scripts: ratios.len() })
}

/// Adds indent levels to the dialogue set from deepest down and accepts the
/// first level whose cumulative dialogue ratio falls inside `mu ± sigma`.
///
/// Overshooting the band, or running out of levels below it, is a failure;
/// on failure every section is left unlabeled.
pub fn silver_parse(script: &ParsedScript, stats: &CorpusDialogueStats) -> SilverResult {
    let n = script.sections.len();
    let mut levels: Vec<usize> = script.sections.iter().map(|s| s.indent).collect();
    levels.sort_unstable_by(|a, b| b.cmp(a));
    levels.dedup();

    let (_, hi) = stats.band();
    let mut last_ratio = None;
    if n > 0 {
        for &threshold in &levels {
            let count = script.sections.iter().filter(|s| s.indent >= threshold).count();
            let ratio = count as f64 / n as f64;
            last_ratio = Some(ratio);
            if stats.in_band(ratio) {
                let mut out = script.clone();
                for s in &mut out.sections {
                    s.kind = if s.indent >= threshold { SectionKind::Dialogue } else { SectionKind::Scene };
                    s.source = Some(LabelSource::Silver);
                }
                out.parse_route = Some(ParseRoute::SilverSuccess);
                return SilverResult {
                    script: out,
                    outcome: SilverOutcome::Success,
                    chosen_threshold: Some(threshold),
                    ratio: Some(ratio),
                };
            }
            if ratio > hi {
                break;
            }
        }
    }
    let mut out = script.clone();
    for s in &mut out.sections {
        s.kind = SectionKind::Unlabeled;
        s.source = None;
    }
    out.parse_route = Some(ParseRoute::SilverFailure);
    SilverResult { script: out, outcome: SilverOutcome::Failure, chosen_threshold: None, ratio: last_ratio }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Line, Section};

    fn section(indent: usize, text: &str) -> Section {
        Section::new(None, vec![Line { indent, text: text.into(), is_bold: false, line_no: 0 }])
    }

    fn script(indents: &[usize]) -> ParsedScript {
        ParsedScript::new("S", indents.iter().map(|&i| section(i, "x")).collect())
    }

    fn kinds(s: &ParsedScript) -> Vec<SectionKind> {
        s.sections.iter().map(|s| s.kind).collect()
    }

    #[test]
    fn fade_in_found_in_body() {
        let mut s = script(&[0, 25]);
        s.sections.insert(0, section(0, "FADE IN ON:"));
        assert_eq!(find_fade_in_indent(&s), Some(0));
    }

    #[test]
    fn fade_in_absent() {
        assert_eq!(find_fade_in_indent(&script(&[0, 25])), None);
    }

    #[test]
    fn first_fade_in_wins() {
        let s = ParsedScript::new("S", vec![section(0, "fade in:"), section(4, "FADE IN")]);
        assert_eq!(find_fade_in_indent(&s), Some(0));
    }

    #[test]
    fn fade_in_as_bold_title() {
        let s = ParsedScript::new("S", vec![Section::new(Some(("FADE IN:".into(), 15)), vec![])]);
        assert_eq!(find_fade_in_indent(&s), Some(15));
    }

    #[test]
    fn rule_is_strictly_greater() {
        use SectionKind::*;
        let out = rule_label(&script(&[0, 0, 25]), Some(0)).unwrap();
        assert_eq!(kinds(&out), vec![Scene, Scene, Dialogue]);
        assert!(out.sections.iter().all(|s| s.source == Some(LabelSource::Rule)));
        let out = rule_label(&script(&[4]), Some(4)).unwrap();
        assert_eq!(kinds(&out), vec![Scene]);
        assert!(rule_label(&script(&[]), Some(0)).unwrap().sections.is_empty());
        assert!(matches!(rule_label(&script(&[1]), None), Err(SilverError::MissingAnchor(_))));
    }

    fn with_ratio(d: usize, n: usize) -> ParsedScript {
        let mut s = script(&vec![0; n]);
        for (i, sec) in s.sections.iter_mut().enumerate() {
            sec.kind = if i < d { SectionKind::Dialogue } else { SectionKind::Scene };
        }
        s
    }

    #[test]
    fn stats_mean_and_population_sigma() {
        let st = corpus_dialogue_stats(&[with_ratio(2, 5), with_ratio(3, 5)]).unwrap();
        assert!((st.mu - 0.5).abs() < 1e-12);
        assert!((st.sigma - 0.1).abs() < 1e-12);
        assert_eq!(st.n_scripts, 2);
        let st = corpus_dialogue_stats(&[with_ratio(1, 2)]).unwrap();
        assert_eq!((st.mu, st.sigma), (0.5, 0.0));
        assert_eq!(corpus_dialogue_stats(&[]), Err(SilverError::EmptyCorpus));
        let st = corpus_dialogue_stats(&[script(&[]), with_ratio(1, 2)]).unwrap();
        assert_eq!(st.n_scripts, 1);
    }

    #[test]
    fn silver_success_at_deep_level() {
        let mut indents = vec![25; 4];
        indents.extend([0; 6]);
        let stats = CorpusDialogueStats { mu: 0.4, sigma: 0.05, n_scripts: 3 };
        let r = silver_parse(&script(&indents), &stats);
        assert_eq!(r.outcome, SilverOutcome::Success);
        assert_eq!(r.chosen_threshold, Some(25));
        assert_eq!(r.ratio, Some(0.4));
        let dialogue = r.script.sections.iter().filter(|s| s.kind == SectionKind::Dialogue).count();
        assert_eq!(dialogue, 4);
        assert!(r.script.sections.iter().all(|s| s.source == Some(LabelSource::Silver)));
        assert_eq!(r.script.parse_route, Some(ParseRoute::SilverSuccess));
    }

    #[test]
    fn silver_failure_on_flat_script() {
        let stats = CorpusDialogueStats { mu: 0.4, sigma: 0.05, n_scripts: 3 };
        let r = silver_parse(&script(&[0; 10]), &stats);
        assert_eq!(r.outcome, SilverOutcome::Failure);
        assert_eq!(r.chosen_threshold, None);
        assert!(r.script.sections.iter().all(|s| s.kind == SectionKind::Unlabeled));
        assert_eq!(r.script.parse_route, Some(ParseRoute::SilverFailure));
    }

    #[test]
    fn silver_band_edge_all_dialogue() {
        let stats = CorpusDialogueStats { mu: 1.0, sigma: 0.0, n_scripts: 1 };
        let r = silver_parse(&script(&[7; 5]), &stats);
        assert_eq!(r.outcome, SilverOutcome::Success);
        assert!(r.script.sections.iter().all(|s| s.kind == SectionKind::Dialogue));
    }

    #[test]
    fn silver_failure_when_levels_exhausted_below_band() {
        let stats = CorpusDialogueStats { mu: 1.0, sigma: 0.0, n_scripts: 1 };
        assert_eq!(silver_parse(&script(&[]), &stats).outcome, SilverOutcome::Failure);
    }
}
