//! Domain types shared across the pipeline: script lines and sections,
//! personality votes and profiles, and the merged per-character record.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::persona::name_tokens_match;
use crate::text::{capitalized_runs, tokenize};

/// One non-blank source line after tab expansion and markup stripping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Line {
    pub indent: usize,
    pub text: String,
    #[serde(default)]
    pub is_bold: bool,
    pub line_no: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SectionKind {
    Dialogue,
    Scene,
    Unlabeled,
}

/// Which pipeline stage assigned a section's kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelSource {
    Rule,
    Silver,
    Classifier,
    Gold,
}

/// Text between two adjacent bold chunks, titled by the first of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub title: Option<String>,
    /// Indent of the title line; used as the section indent for bare titles.
    pub title_indent: Option<usize>,
    pub body: Vec<Line>,
    pub indent: usize,
    pub kind: SectionKind,
    pub source: Option<LabelSource>,
}

impl Section {
    /// Builds an unlabeled section, deriving the representative indent.
    pub fn new(title: Option<(String, usize)>, body: Vec<Line>) -> Self {
        let (title, title_indent) = match title {
            Some((t, i)) => (Some(t), Some(i)),
            None => (None, None),
        };
        let indent = lower_median(body.iter().map(|l| l.indent)).or(title_indent).unwrap_or(0);
        Section { title, title_indent, body, indent, kind: SectionKind::Unlabeled, source: None }
    }

    pub fn is_bare_title(&self) -> bool {
        self.body.is_empty()
    }

    /// Body lines joined by single spaces.
    pub fn body_text(&self) -> String {
        self.body.iter().map(|l| l.text.as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn labeled(mut self, kind: SectionKind, source: LabelSource) -> Self {
        self.kind = kind;
        self.source = Some(source);
        self
    }
}

/// Lower median of a sequence of indents; `None` when empty.
pub fn lower_median(values: impl Iterator<Item = usize>) -> Option<usize> {
    let mut v: Vec<usize> = values.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    Some(v[(v.len() - 1) / 2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseRoute {
    SilverSuccess,
    SilverFailure,
    NoFadeIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedScript {
    pub movie_name: String,
    pub sections: Vec<Section>,
    pub fade_in_indent: Option<usize>,
    pub parse_route: Option<ParseRoute>,
}

impl ParsedScript {
    pub fn new(movie_name: impl Into<String>, sections: Vec<Section>) -> Self {
        ParsedScript { movie_name: movie_name.into(), sections, fade_in_indent: None, parse_route: None }
    }

    pub fn dialogue_ratio(&self) -> Option<f64> {
        if self.sections.is_empty() {
            return None;
        }
        let n = self.sections.iter().filter(|s| s.kind == SectionKind::Dialogue).count();
        Some(n as f64 / self.sections.len() as f64)
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.sections.iter().all(|s| s.kind != SectionKind::Unlabeled)
    }
}

/// Personality scale a profile was rated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scale {
    #[serde(rename = "MBTI")]
    Mbti,
    #[serde(rename = "Global5")]
    Global5,
}

/// A binary personality axis. MBTI has four, the SLOAN keys of Global 5 have five.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dimension {
    EI,
    NS,
    TF,
    JP,
    SR,
    LC,
    OU,
    AE,
    NI,
}

impl Dimension {
    pub const MBTI: [Dimension; 4] = [Dimension::EI, Dimension::NS, Dimension::TF, Dimension::JP];
    pub const SLOAN: [Dimension; 5] =
        [Dimension::SR, Dimension::LC, Dimension::OU, Dimension::AE, Dimension::NI];

    /// The two poles; index 0 is the positive class for binary models.
    pub fn poles(self) -> [char; 2] {
        match self {
            Dimension::EI => ['E', 'I'],
            Dimension::NS => ['N', 'S'],
            Dimension::TF => ['T', 'F'],
            Dimension::JP => ['J', 'P'],
            Dimension::SR => ['S', 'R'],
            Dimension::LC => ['L', 'C'],
            Dimension::OU => ['O', 'U'],
            Dimension::AE => ['A', 'E'],
            Dimension::NI => ['N', 'I'],
        }
    }

    pub fn scale(self) -> Scale {
        if Self::MBTI.contains(&self) {
            Scale::Mbti
        } else {
            Scale::Global5
        }
    }

    pub fn pole_index(self, pole: char) -> Option<usize> {
        self.poles().iter().position(|&p| p == pole)
    }

    pub fn other_pole(self, pole: char) -> Option<char> {
        let [a, b] = self.poles();
        if pole == a {
            Some(b)
        } else if pole == b {
            Some(a)
        } else {
            None
        }
    }

    pub fn name(self) -> String {
        let [a, b] = self.poles();
        format!("{a}/{b}")
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown personality dimension `{0}`")]
pub struct UnknownDimension(pub String);

impl FromStr for Dimension {
    type Err = UnknownDimension;

    /// Accepts `E/I`, `EI`, and the reversed order `IE`; case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_alphabetic()).collect::<String>().to_uppercase();
        let all = Self::MBTI.iter().chain(Self::SLOAN.iter());
        for &dim in all {
            let [a, b] = dim.poles();
            if key == format!("{a}{b}") || key == format!("{b}{a}") {
                return Ok(dim);
            }
        }
        Err(UnknownDimension(s.to_string()))
    }
}

impl Serialize for Dimension {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Dimension {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionVote {
    pub dimension: Dimension,
    pub winner: char,
    pub vote_count: u32,
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalityProfile {
    pub profile_id: String,
    pub character_name: String,
    pub movie_name: String,
    pub votes: Vec<DimensionVote>,
    pub scale: Scale,
}

impl PersonalityProfile {
    /// Overall voter count: the largest per-dimension count.
    pub fn vote_count(&self) -> u32 {
        self.votes.iter().map(|v| v.vote_count).max().unwrap_or(0)
    }

    pub fn vote(&self, dim: Dimension) -> Option<&DimensionVote> {
        self.votes.iter().find(|v| v.dimension == dim)
    }

    /// Four-letter MBTI type when all four dimensions are present.
    pub fn mbti_type(&self) -> Option<String> {
        Dimension::MBTI.iter().map(|&d| self.vote(d).map(|v| v.winner)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

/// A scene description the character appears in, with token offsets of the
/// starts of the name mentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMention {
    pub text: String,
    pub mentions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacterRecord {
    pub profile: PersonalityProfile,
    pub dialogues: Vec<String>,
    pub scenes: Vec<SceneMention>,
    pub split: Split,
}

/// Per-dimension vote statistics as stored in a record line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VoteJson {
    count: u32,
    agreement: f64,
}

/// Wire layout of one record line.
#[derive(Debug, Serialize, Deserialize)]
struct RecordJson {
    id: String,
    mbti_profile: String,
    subcategory: String,
    scale: Scale,
    personality: BTreeMap<Dimension, char>,
    votes: BTreeMap<Dimension, VoteJson>,
    dialogue: Vec<String>,
    scene: Vec<SceneMention>,
    #[serde(default)]
    split: Split,
}

impl Serialize for CharacterRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let p = &self.profile;
        RecordJson {
            id: p.profile_id.clone(),
            mbti_profile: p.character_name.clone(),
            subcategory: p.movie_name.clone(),
            scale: p.scale,
            personality: p.votes.iter().map(|v| (v.dimension, v.winner)).collect(),
            votes: p
                .votes
                .iter()
                .map(|v| (v.dimension, VoteJson { count: v.vote_count, agreement: v.agreement }))
                .collect(),
            dialogue: self.dialogues.clone(),
            scene: self.scenes.clone(),
            split: self.split,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CharacterRecord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = RecordJson::deserialize(d)?;
        let mut votes = Vec::with_capacity(j.personality.len());
        for (dim, winner) in j.personality {
            let v = j
                .votes
                .get(&dim)
                .ok_or_else(|| serde::de::Error::custom(format!("missing votes for {dim}")))?;
            votes.push(DimensionVote { dimension: dim, winner, vote_count: v.count, agreement: v.agreement });
        }
        Ok(CharacterRecord {
            profile: PersonalityProfile {
                profile_id: j.id,
                character_name: j.mbti_profile,
                movie_name: j.subcategory,
                votes,
                scale: j.scale,
            },
            dialogues: j.dialogue,
            scenes: j.scene,
            split: j.split,
        })
    }
}

/// Checks every record invariant and returns one message per violation.
pub fn validate_record(record: &CharacterRecord) -> Vec<String> {
    let mut out = Vec::new();
    let p = &record.profile;
    let mut seen = Vec::new();
    for v in &p.votes {
        let dim = v.dimension;
        if seen.contains(&dim) {
            out.push(format!("votes: dimension {dim} appears more than once"));
        }
        seen.push(dim);
        if !(0.0..=1.0).contains(&v.agreement) {
            out.push(format!("votes[{dim}].agreement: {} outside range [0, 1]", v.agreement));
        }
        if dim.pole_index(v.winner).is_none() {
            out.push(format!("votes[{dim}].winner: `{}` is not a pole of {dim}", v.winner));
        }
        if dim.scale() != p.scale {
            out.push(format!("scale: {:?} profile carries {dim} vote", p.scale));
        }
    }
    for (i, scene) in record.scenes.iter().enumerate() {
        let tokens = tokenize(&scene.text);
        let runs = capitalized_runs(&tokens);
        for &m in &scene.mentions {
            if m >= tokens.len() {
                out.push(format!(
                    "scene[{i}].mentions: offset {m} out of bounds for {} tokens",
                    tokens.len()
                ));
                continue;
            }
            let matched = runs.iter().find(|r| r.start == m).is_some_and(|r| {
                let cand: Vec<&str> = tokens[r.clone()].iter().map(|t| t.text).collect();
                name_tokens_match(&p.character_name, &cand.join(" "))
            });
            if !matched {
                out.push(format!(
                    "scene[{i}].mentions: token {m} (`{}`) does not match `{}`",
                    tokens[m].text, p.character_name
                ));
            }
        }
    }
    out
}
