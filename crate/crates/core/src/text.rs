//! Tokenization shared by the matcher, the baselines and the fusion model.
//!
//! A token is either a maximal run of letters/digits (apostrophes are kept
//! when they sit between two word characters, so `don't` is one token) or a
//! single punctuation character. Whitespace separates tokens and is never
//! part of one.

use std::ops::Range;

/// A token together with its byte span in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub span: (usize, usize),
}

impl Token<'_> {
    pub fn is_word(&self) -> bool {
        self.text.chars().next().is_some_and(char::is_alphanumeric)
    }

    pub fn is_capitalized(&self) -> bool {
        self.text.chars().next().is_some_and(char::is_uppercase)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits `text` into word and punctuation tokens with their byte spans.
pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if is_word_char(c) {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if is_word_char(cj) {
                    j += 1;
                } else if is_apostrophe(cj) && j + 1 < chars.len() && is_word_char(chars[j + 1].1) {
                    j += 2;
                } else {
                    break;
                }
            }
            let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
            out.push(Token { text: &text[start..end], span: (start, end) });
            i = j;
        } else {
            let end = start + c.len_utf8();
            out.push(Token { text: &text[start..end], span: (start, end) });
            i += 1;
        }
    }
    out
}

/// Lowercased word tokens only (punctuation dropped).
pub fn words_lower(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(Token::is_word)
        .map(|t| t.text.to_lowercase())
        .collect()
}

/// Maximal runs of consecutive capitalized word tokens, as token index ranges.
///
/// This is the entity candidate extractor used for scene mentions.
pub fn capitalized_runs(tokens: &[Token<'_>]) -> Vec<Range<usize>> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for (i, tok) in tokens.iter().enumerate() {
        let cap = tok.is_word() && tok.is_capitalized();
        match (cap, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push(s..tokens.len());
    }
    runs
}

/// Joins the token texts of `range` with single spaces.
pub fn join_tokens(tokens: &[Token<'_>], range: Range<usize>) -> String {
    tokens[range].iter().map(|t| t.text).collect::<Vec<_>>().join(" ")
}
