//! Raw script ingestion: HTML or plain text in, indentation-preserving lines
//! and bold-titled sections out.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::ir::{Line, Section};

pub const DEFAULT_TAB_WIDTH: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("content of `{0}` is not valid UTF-8")]
    UndecodableContent(String),
    #[error("`{0}` has no non-blank lines")]
    EmptyAfterNormalization(String),
    #[error("script `{0}` has empty content")]
    EmptyContent(String),
    #[error("movie name is empty after normalization")]
    EmptyMovieName,
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest {path}: {source}")]
    Manifest { path: String, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Html,
    PlainText,
}

#[derive(Debug, Clone)]
pub struct RawScript {
    pub movie_name: String,
    pub source_format: SourceFormat,
    pub content: Vec<u8>,
}

impl RawScript {
    pub fn new(movie_name: &str, source_format: SourceFormat, content: impl Into<Vec<u8>>) -> Result<Self, IngestError> {
        let movie_name = movie_name.split_whitespace().collect::<Vec<_>>().join(" ");
        if movie_name.is_empty() {
            return Err(IngestError::EmptyMovieName);
        }
        let content = content.into();
        if content.is_empty() {
            return Err(IngestError::EmptyContent(movie_name));
        }
        Ok(RawScript { movie_name, source_format, content })
    }
}

/// Expands tabs to the next multiple of `tab_width` and maps non-breaking
/// spaces to plain spaces.
pub fn expand_tabs(line: &str, tab_width: usize) -> String {
    let tab_width = tab_width.max(1);
    let mut out = String::with_capacity(line.len());
    let mut col = 0;
    for c in line.chars() {
        match c {
            '\t' => {
                let n = tab_width - col % tab_width;
                out.extend(std::iter::repeat_n(' ', n));
                col += n;
            }
            '\u{a0}' => {
                out.push(' ');
                col += 1;
            }
            _ => {
                out.push(c);
                col += 1;
            }
        }
    }
    out
}

fn leading_spaces(s: &str) -> usize {
    s.chars().take_while(|&c| c == ' ').count()
}

/// Converts a raw script into non-blank lines in source order.
pub fn normalize_lines(raw: &RawScript, tab_width: usize) -> Result<Vec<Line>, IngestError> {
    let text = std::str::from_utf8(&raw.content)
        .map_err(|_| IngestError::UndecodableContent(raw.movie_name.clone()))?;
    let lines = match raw.source_format {
        SourceFormat::Html => html_lines(text, tab_width),
        SourceFormat::PlainText => plain_lines(text, tab_width),
    };
    if lines.is_empty() {
        return Err(IngestError::EmptyAfterNormalization(raw.movie_name.clone()));
    }
    Ok(lines)
}

fn find_ci(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    haystack[from..].to_ascii_lowercase().find(needle).map(|i| i + from)
}

/// Body of the first `<pre>` block, or the whole document if there is none.
fn pre_body(html: &str) -> &str {
    let Some(open) = find_ci(html, "<pre", 0) else { return html };
    let Some(gt) = html[open..].find('>') else { return html };
    let start = open + gt + 1;
    let end = find_ci(html, "</pre", start).unwrap_or(html.len());
    &html[start..end]
}

fn html_lines(html: &str, tab_width: usize) -> Vec<Line> {
    let body = pre_body(html);
    let mut bold_depth = 0usize;
    let mut out = Vec::new();
    for (idx, raw_line) in body.split('\n').enumerate() {
        let mut stripped = String::new();
        let mut has_plain = false;
        let mut has_bold = false;
        let mut rest = raw_line.trim_end_matches('\r');
        while !rest.is_empty() {
            if let Some(tag_end) = rest.strip_prefix('<').and_then(|r| r.find('>')) {
                let tag = rest[1..tag_end + 1].trim().to_ascii_lowercase();
                let (closing, name) = match tag.strip_prefix('/') {
                    Some(n) => (true, n.trim()),
                    None => (false, tag.as_str()),
                };
                let name = name.split_whitespace().next().unwrap_or("");
                if name == "b" || name == "strong" {
                    bold_depth = if closing { bold_depth.saturating_sub(1) } else { bold_depth + 1 };
                }
                rest = &rest[tag_end + 2..];
                continue;
            }
            let first = rest.chars().next().map_or(1, char::len_utf8);
            let next = rest[first..].find('<').map_or(rest.len(), |i| i + first);
            let chunk = &rest[..next];
            if chunk.chars().any(|c| !c.is_whitespace()) {
                if bold_depth > 0 {
                    has_bold = true;
                } else {
                    has_plain = true;
                }
            }
            stripped.push_str(chunk);
            rest = &rest[next..];
        }
        let decoded = html_escape::decode_html_entities(&stripped);
        let expanded = expand_tabs(&decoded, tab_width);
        let text = expanded.trim();
        if text.is_empty() {
            continue;
        }
        out.push(Line {
            indent: leading_spaces(&expanded),
            text: text.to_string(),
            is_bold: has_bold && !has_plain,
            line_no: idx + 1,
        });
    }
    out
}

fn is_all_caps(text: &str) -> bool {
    text.chars().any(char::is_alphabetic) && !text.chars().any(char::is_lowercase)
}

fn plain_lines(text: &str, tab_width: usize) -> Vec<Line> {
    let mut out: Vec<Line> = text
        .split('\n')
        .enumerate()
        .filter_map(|(idx, raw)| {
            let expanded = expand_tabs(raw.trim_end_matches('\r'), tab_width);
            let t = expanded.trim();
            (!t.is_empty()).then(|| Line {
                indent: leading_spaces(&expanded),
                text: t.to_string(),
                is_bold: false,
                line_no: idx + 1,
            })
        })
        .collect();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for l in out.iter().filter(|l| !is_all_caps(&l.text)) {
        *counts.entry(l.indent).or_default() += 1;
    }
    if counts.is_empty() {
        for l in &out {
            *counts.entry(l.indent).or_default() += 1;
        }
    }
    // smallest indent wins ties
    let modal = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map_or(0, |(&i, _)| i);
    for l in &mut out {
        l.is_bold = is_all_caps(&l.text) && l.indent > modal;
    }
    out
}

/// Splits lines into sections at bold lines. Each bold line titles the
/// section holding the non-bold lines that follow it; leading non-bold lines
/// form one untitled section.
pub fn split_sections(lines: &[Line]) -> Vec<Section> {
    let mut sections = Vec::new();
    let mut title: Option<(String, usize)> = None;
    let mut body: Vec<Line> = Vec::new();
    for line in lines {
        if line.is_bold {
            if title.is_some() || !body.is_empty() {
                sections.push(Section::new(title.take(), std::mem::take(&mut body)));
            }
            title = Some((line.text.clone(), line.indent));
        } else {
            body.push(line.clone());
        }
    }
    if title.is_some() || !body.is_empty() {
        sections.push(Section::new(title, body));
    }
    sections
}

/// Title-cases a file stem: `the-matrix` becomes `The Matrix`.
pub fn movie_name_from_stem(stem: &str) -> String {
    stem.split(|c: char| c == '-' || c == '_' || c.is_whitespace())
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut cs = w.chars();
            match cs.next() {
                Some(f) => f.to_uppercase().chain(cs.flat_map(char::to_lowercase)).collect::<String>(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Reads every `.html`, `.htm` and `.txt` file in `dir`, sorted by file name.
///
/// A `manifest.json` object mapping file names to titles overrides the
/// file-stem-derived movie name.
pub fn load_dir(dir: &Path) -> Result<Vec<RawScript>, IngestError> {
    let io = |e, p: &Path| IngestError::Io { path: p.display().to_string(), source: e };
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: BTreeMap<String, String> = if manifest_path.exists() {
        let bytes = fs::read(&manifest_path).map_err(|e| io(e, &manifest_path))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| IngestError::Manifest { path: manifest_path.display().to_string(), source: e })?
    } else {
        BTreeMap::new()
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| io(e, dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                    Some("html" | "htm" | "txt")
                )
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let stem = path.file_stem().and_then(|n| n.to_str()).unwrap_or_default();
        let format = if file_name.to_ascii_lowercase().ends_with(".txt") {
            SourceFormat::PlainText
        } else {
            SourceFormat::Html
        };
        let name = manifest.get(&file_name).cloned().unwrap_or_else(|| movie_name_from_stem(stem));
        let content = fs::read(&path).map_err(|e| io(e, &path))?;
        match RawScript::new(&name, format, content) {
            Ok(raw) => out.push(raw),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plain(s: &str) -> RawScript {
        RawScript::new("Test", SourceFormat::PlainText, s).unwrap()
    }

    fn line(indent: usize, text: &str, bold: bool, n: usize) -> Line {
        Line { indent, text: text.into(), is_bold: bold, line_no: n }
    }

    #[test]
    fn tab_expands_to_eight() {
        let lines = normalize_lines(&plain("\tFADE IN"), 8).unwrap();
        assert_eq!(lines[0].indent, 8);
        assert_eq!(lines[0].text, "FADE IN");
        assert_eq!(expand_tabs("ab\tc", 4), "ab  c");
    }

    #[test]
    fn html_bold_chunk() {
        let html = "<html><pre>\n<b>                                     MORPHEUS</b>\n                         They're coming &amp; going.\n</pre></html>";
        let raw = RawScript::new("The Matrix", SourceFormat::Html, html).unwrap();
        let lines = normalize_lines(&raw, 8).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], line(37, "MORPHEUS", true, 2));
        assert_eq!(lines[1].text, "They're coming & going.");
        assert!(!lines[1].is_bold);
        assert_eq!(lines[1].indent, 25);
    }

    #[test]
    fn bold_spanning_lines() {
        let html = "<pre><b>INT. ROOM 1313\n\n</b>He sits.</pre>";
        let raw = RawScript::new("X", SourceFormat::Html, html).unwrap();
        let lines = normalize_lines(&raw, 8).unwrap();
        assert!(lines[0].is_bold);
        assert!(!lines[1].is_bold);
    }

    #[test]
    fn blank_file_is_empty_after_normalization() {
        assert!(matches!(
            normalize_lines(&plain("\n   \n\t\n"), 8),
            Err(IngestError::EmptyAfterNormalization(_))
        ));
    }

    #[test]
    fn invalid_utf8_is_undecodable() {
        let raw = RawScript::new("X", SourceFormat::PlainText, vec![0xff, 0xfe, b'a']).unwrap();
        assert!(matches!(normalize_lines(&raw, 8), Err(IngestError::UndecodableContent(_))));
    }

    #[test]
    fn plain_text_bold_heuristic() {
        let text = "INT. HOUSE\nHe walks in.\nShe waits.\n          BOB\n     Hello there.";
        let lines = normalize_lines(&plain(text), 8).unwrap();
        let bold: Vec<bool> = lines.iter().map(|l| l.is_bold).collect();
        assert_eq!(bold, vec![false, false, false, true, false]);
    }

    #[test]
    fn split_two_titles() {
        let lines = vec![
            line(0, "INT. ROOM 1313", true, 1),
            line(0, "a", false, 2),
            line(0, "b", false, 3),
            line(0, "c", false, 4),
            line(37, "MORPHEUS", true, 5),
            line(25, "d", false, 6),
            line(25, "e", false, 7),
        ];
        let s = split_sections(&lines);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].title.as_deref(), Some("INT. ROOM 1313"));
        assert_eq!(s[0].body.len(), 3);
        assert_eq!(s[1].title.as_deref(), Some("MORPHEUS"));
        assert_eq!(s[1].indent, 25);
    }

    #[test]
    fn split_without_bold() {
        let lines = vec![line(0, "a", false, 1), line(4, "b", false, 2)];
        let s = split_sections(&lines);
        assert_eq!(s.len(), 1);
        assert!(s[0].title.is_none());
        assert_eq!(s[0].body.len(), 2);
    }

    #[test]
    fn adjacent_bold_lines_make_bare_title() {
        let lines = vec![line(0, "A", true, 1), line(0, "B", true, 2), line(0, "x", false, 3)];
        let s = split_sections(&lines);
        assert_eq!(s.len(), 2);
        assert!(s[0].is_bare_title());
        assert_eq!(s[1].body.len(), 1);
    }

    #[test]
    fn stem_to_title() {
        assert_eq!(movie_name_from_stem("the-matrix"), "The Matrix");
        assert_eq!(movie_name_from_stem("FIGHT_club"), "Fight Club");
    }

    fn arb_lines() -> impl Strategy<Value = Vec<Line>> {
        prop::collection::vec((0usize..40, "[a-zA-Z .]{1,12}", any::<bool>()), 0..40).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .filter_map(|(i, (indent, text, bold))| {
                    let t = text.trim().to_string();
                    (!t.is_empty()).then(|| line(indent, &t, bold, i + 1))
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn sections_partition_non_bold_lines(lines in arb_lines()) {
            let sections = split_sections(&lines);
            let plain: Vec<&Line> = lines.iter().filter(|l| !l.is_bold).collect();
            let joined: Vec<&Line> = sections.iter().flat_map(|s| s.body.iter()).collect();
            prop_assert_eq!(joined, plain);
            let titles = sections.iter().filter(|s| s.title.is_some()).count();
            prop_assert_eq!(titles, lines.iter().filter(|l| l.is_bold).count());
        }

        #[test]
        fn plain_normalization_is_idempotent(
            rows in prop::collection::vec((0usize..30, "[A-Za-z][A-Za-z .,']{0,15}"), 1..30)
        ) {
            let text: String = rows.iter().map(|(i, t)| format!("{}{}\n", " ".repeat(*i), t)).collect();
            let first = normalize_lines(&plain(&text), 8).unwrap();
            let rendered: String = first.iter().map(|l| format!("{}{}\n", " ".repeat(l.indent), l.text)).collect();
            let second = normalize_lines(&plain(&rendered), 8).unwrap();
            let strip = |v: &[Line]| v.iter().map(|l| (l.indent, l.text.clone(), l.is_bold)).collect::<Vec<_>>();
            prop_assert_eq!(strip(&first), strip(&second));
        }
    }
}
