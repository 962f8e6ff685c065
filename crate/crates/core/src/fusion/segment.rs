//! Token ids, row segmentation and the two-view model input.

use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;

use crate::ir::{CharacterRecord, Dimension};
use crate::text::tokenize;

pub const PAD_ID: u32 = 0;
pub const ENT_ID: u32 = 1;
pub const ENT_TOKEN: &str = "[ent]";
const RESERVED_IDS: u32 = 2;

/// Maps lowercased tokens into a fixed id space by hashing; ids 0 and 1 are
/// reserved for padding and the entity marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenHasher {
    pub vocab_size: u32,
}

impl TokenHasher {
    pub fn new(vocab_size: u32) -> Self {
        assert!(vocab_size > RESERVED_IDS, "vocabulary must leave room for ordinary tokens");
        TokenHasher { vocab_size }
    }

    pub fn id(&self, token: &str) -> u32 {
        if token == ENT_TOKEN {
            return ENT_ID;
        }
        let mut h = FnvHasher::default();
        h.write(token.to_lowercase().as_bytes());
        RESERVED_IDS + (h.finish() % u64::from(self.vocab_size - RESERVED_IDS)) as u32
    }
}

/// A view's input packed into `R` rows of fixed length `L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rows {
    pub ids: Vec<Vec<u32>>,
    pub mask: Vec<Vec<bool>>,
}

impl Rows {
    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn row_len(&self) -> usize {
        self.ids.first().map_or(0, Vec::len)
    }

    pub fn unmasked(&self) -> usize {
        self.mask.iter().flatten().filter(|&&m| m).count()
    }

    /// Row sizes in tokens, padding excluded.
    pub fn lengths(&self) -> Vec<usize> {
        self.mask.iter().map(|r| r.iter().filter(|&&m| m).count()).collect()
    }
}

/// Greedily packs `tokens` into rows of at most `l_max` tokens and keeps the
/// first `r_max` rows. An entity marker is never left as the last token of a
/// row when a token follows it, so the marker and the name share a row.
/// Empty input yields one fully masked row.
pub fn segment_input(tokens: &[u32], l_max: usize, r_max: usize) -> Rows {
    assert!(l_max >= 1 && r_max >= 1, "row length and row count must be positive");
    let mut rows: Vec<Vec<u32>> = Vec::new();
    let mut current: Vec<u32> = Vec::with_capacity(l_max);
    for (k, &t) in tokens.iter().enumerate() {
        let full = current.len() == l_max;
        let orphan_marker = t == ENT_ID && l_max > 1 && current.len() == l_max - 1 && k + 1 < tokens.len();
        if full || orphan_marker {
            rows.push(std::mem::replace(&mut current, Vec::with_capacity(l_max)));
            if rows.len() == r_max {
                break;
            }
        }
        current.push(t);
    }
    if !current.is_empty() && rows.len() < r_max {
        rows.push(current);
    }
    if rows.is_empty() {
        rows.push(Vec::new());
    }
    let mask = rows.iter().map(|r| (0..l_max).map(|j| j < r.len()).collect()).collect();
    let ids = rows
        .into_iter()
        .map(|mut r| {
            r.resize(l_max, PAD_ID);
            r
        })
        .collect();
    Rows { ids, mask }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SegmentConfig {
    pub l_max: usize,
    pub r_max: usize,
    pub vocab_size: u32,
    /// Per-view token cap applied before segmentation.
    pub token_budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewInput {
    pub dial_rows: Rows,
    pub scene_rows: Rows,
    pub labels: BTreeMap<Dimension, char>,
}

/// Dialogue token stream of a record, dialogues concatenated in order.
pub fn dialogue_stream(record: &CharacterRecord, hasher: TokenHasher) -> Vec<u32> {
    record.dialogues.iter().flat_map(|d| tokenize(d).into_iter().map(|t| hasher.id(t.text))).collect()
}

/// Scene token stream with an entity marker before every stored mention.
pub fn scene_stream(record: &CharacterRecord, hasher: TokenHasher) -> Vec<u32> {
    let mut out = Vec::new();
    for s in &record.scenes {
        for (k, t) in tokenize(&s.text).into_iter().enumerate() {
            if s.mentions.contains(&k) {
                out.push(ENT_ID);
            }
            out.push(hasher.id(t.text));
        }
    }
    out
}

impl MultiViewInput {
    pub fn from_record(record: &CharacterRecord, config: &SegmentConfig) -> Self {
        let hasher = TokenHasher::new(config.vocab_size);
        let cap = |mut v: Vec<u32>| {
            if let Some(b) = config.token_budget {
                v.truncate(b);
            }
            v
        };
        MultiViewInput {
            dial_rows: segment_input(&cap(dialogue_stream(record, hasher)), config.l_max, config.r_max),
            scene_rows: segment_input(&cap(scene_stream(record, hasher)), config.l_max, config.r_max),
            labels: record.profile.votes.iter().map(|v| (v.dimension, v.winner)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{PersonalityProfile, Scale, SceneMention, Split};

    #[test]
    fn forty_five_tokens_in_rows_of_twenty() {
        let toks: Vec<u32> = (10..55).collect();
        let rows = segment_input(&toks, 20, 20);
        assert_eq!(rows.lengths(), vec![20, 20, 5]);
        assert_eq!(rows.row_len(), 20);
        assert!(!rows.mask[2][5]);
        assert_eq!(rows.ids[2][5], PAD_ID);
    }

    #[test]
    fn empty_input_is_one_masked_row() {
        let rows = segment_input(&[], 8, 20);
        assert_eq!(rows.n_rows(), 1);
        assert_eq!(rows.unmasked(), 0);
    }

    #[test]
    fn keeps_earliest_rows() {
        let toks: Vec<u32> = (0..30 * 4).map(|i| 2 + i as u32).collect();
        let rows = segment_input(&toks, 4, 20);
        assert_eq!(rows.n_rows(), 20);
        assert_eq!(rows.ids[0][0], 2);
        assert_eq!(rows.ids[19][3], 2 + 79);
    }

    #[test]
    fn marker_not_orphaned_at_row_end() {
        let toks = vec![5, 6, ENT_ID, 7, 8];
        let rows = segment_input(&toks, 3, 20);
        assert_eq!(rows.ids[0][..2], [5, 6]);
        assert_eq!(rows.ids[1][..3], [ENT_ID, 7, 8]);
    }

    #[test]
    fn scene_stream_marks_mentions() {
        let record = CharacterRecord {
            profile: PersonalityProfile {
                profile_id: "1".into(),
                character_name: "Morpheus".into(),
                movie_name: "M".into(),
                votes: vec![],
                scale: Scale::Mbti,
            },
            dialogues: vec![],
            scenes: vec![SceneMention { text: "Neo watches Morpheus. Morpheus nods.".into(), mentions: vec![2, 4] }],
            split: Split::Train,
        };
        let h = TokenHasher::new(64);
        let s = scene_stream(&record, h);
        assert_eq!(s.len(), 9);
        assert_eq!(s[2], ENT_ID);
        assert_eq!(s[3], h.id("morpheus"));
        assert_eq!(s[5], ENT_ID);
        assert_eq!(h.id("Morpheus"), h.id("MORPHEUS"));
    }
}
