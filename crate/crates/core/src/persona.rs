//! Profile filtering and soft matching of personality profiles to parsed
//! scripts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ir::{
    CharacterRecord, Dimension, DimensionVote, ParsedScript, PersonalityProfile, Scale, SceneMention, Section,
    SectionKind, Split,
};
use crate::text::{capitalized_runs, join_tokens, tokenize};

pub const MIN_VOTERS: u32 = 3;
pub const MIN_AGREEMENT: f64 = 0.60;
/// Shortest shared token that counts as a partial name match.
pub const MIN_SHARED_TOKEN_LEN: usize = 3;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MatchError {
    #[error("profile `{profile_id}` ({name}) matched nothing in `{movie}`")]
    NoMatch { profile_id: String, name: String, movie: String },
}

/// Drops profiles with too few voters, then votes below the agreement floor,
/// then profiles left without any dimension.
pub fn filter_profiles(profiles: &[PersonalityProfile], min_voters: u32, min_agreement: f64) -> Vec<PersonalityProfile> {
    profiles
        .iter()
        .filter(|p| p.vote_count() >= min_voters)
        .filter_map(|p| {
            let votes: Vec<DimensionVote> = p.votes.iter().filter(|v| v.agreement >= min_agreement).cloned().collect();
            (!votes.is_empty()).then(|| PersonalityProfile { votes, ..p.clone() })
        })
        .collect()
}

/// Lowercases, strips punctuation and splits on whitespace.
pub fn normalize_name(name: &str) -> Vec<String> {
    name.split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Name half of the soft match: equal token lists, or a shared token of at
/// least [`MIN_SHARED_TOKEN_LEN`] characters.
pub fn name_tokens_match(a: &str, b: &str) -> bool {
    let ta = normalize_name(a);
    let tb = normalize_name(b);
    if ta.is_empty() || tb.is_empty() {
        return false;
    }
    ta == tb || ta.iter().any(|t| t.chars().count() >= MIN_SHARED_TOKEN_LEN && tb.contains(t))
}

pub fn movie_key(movie: &str) -> String {
    normalize_name(movie).join(" ")
}

pub fn soft_match(profile_name: &str, candidate: &str, profile_movie: &str, script_movie: &str) -> bool {
    let pm = movie_key(profile_movie);
    !pm.is_empty() && pm == movie_key(script_movie) && name_tokens_match(profile_name, candidate)
}

/// Token offsets of capitalized-run entity candidates in the scene body that
/// soft-match `character_name`.
pub fn extract_scene_mentions(scene: &Section, character_name: &str) -> Vec<usize> {
    mentions_in_text(&scene.body_text(), character_name)
}

pub fn mentions_in_text(text: &str, character_name: &str) -> Vec<usize> {
    let tokens = tokenize(text);
    capitalized_runs(&tokens)
        .into_iter()
        .filter(|r| name_tokens_match(character_name, &join_tokens(&tokens, r.clone())))
        .map(|r| r.start)
        .collect()
}

/// Collects the profile's dialogues and scene mentions from one script.
pub fn assemble_record(profile: &PersonalityProfile, script: &ParsedScript) -> Result<CharacterRecord, MatchError> {
    let no_match = || MatchError::NoMatch {
        profile_id: profile.profile_id.clone(),
        name: profile.character_name.clone(),
        movie: script.movie_name.clone(),
    };
    if movie_key(&profile.movie_name) != movie_key(&script.movie_name) {
        return Err(no_match());
    }
    let mut dialogues = Vec::new();
    let mut scenes = Vec::new();
    for s in &script.sections {
        match s.kind {
            SectionKind::Dialogue => {
                let titled = s.title.as_deref().is_some_and(|t| name_tokens_match(&profile.character_name, t));
                if titled && !s.body.is_empty() {
                    dialogues.push(s.body_text());
                }
            }
            SectionKind::Scene => {
                let text = s.body_text();
                let mentions = mentions_in_text(&text, &profile.character_name);
                if !mentions.is_empty() {
                    scenes.push(SceneMention { text, mentions });
                }
            }
            SectionKind::Unlabeled => {}
        }
    }
    if dialogues.is_empty() && scenes.is_empty() {
        return Err(no_match());
    }
    Ok(CharacterRecord { profile: profile.clone(), dialogues, scenes, split: Split::Unassigned })
}

/// Matches each profile against the scripts of its movie. When several
/// scripts share the normalized movie name, the one yielding the most
/// dialogues plus scenes wins (first script on ties). Returns the records in
/// profile order and the ids of unmatched profiles.
pub fn match_profiles(profiles: &[PersonalityProfile], scripts: &[ParsedScript]) -> (Vec<CharacterRecord>, Vec<String>) {
    let mut by_movie: BTreeMap<String, Vec<&ParsedScript>> = BTreeMap::new();
    for s in scripts {
        by_movie.entry(movie_key(&s.movie_name)).or_default().push(s);
    }
    let mut records = Vec::new();
    let mut unmatched = Vec::new();
    for p in profiles {
        let best = by_movie
            .get(&movie_key(&p.movie_name))
            .into_iter()
            .flatten()
            .filter_map(|s| assemble_record(p, s).ok())
            .fold(None::<CharacterRecord>, |best, r| match best {
                Some(b) if b.dialogues.len() + b.scenes.len() >= r.dialogues.len() + r.scenes.len() => Some(b),
                _ => Some(r),
            });
        match best {
            Some(r) => records.push(r),
            None => {
                log::info!("no match for profile {} ({})", p.profile_id, p.character_name);
                unmatched.push(p.profile_id.clone());
            }
        }
    }
    (records, unmatched)
}

/// Wire layout of a profile line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileJson {
    pub id: String,
    pub name: String,
    pub movie: String,
    pub scale: Scale,
    pub votes: Vec<VoteLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteLine {
    pub dim: Dimension,
    pub winner: char,
    pub count: u32,
    pub agreement: f64,
}

impl From<ProfileJson> for PersonalityProfile {
    fn from(j: ProfileJson) -> Self {
        PersonalityProfile {
            profile_id: j.id,
            character_name: j.name,
            movie_name: j.movie,
            scale: j.scale,
            votes: j
                .votes
                .into_iter()
                .map(|v| DimensionVote { dimension: v.dim, winner: v.winner, vote_count: v.count, agreement: v.agreement })
                .collect(),
        }
    }
}

impl From<&PersonalityProfile> for ProfileJson {
    fn from(p: &PersonalityProfile) -> Self {
        ProfileJson {
            id: p.profile_id.clone(),
            name: p.character_name.clone(),
            movie: p.movie_name.clone(),
            scale: p.scale,
            votes: p
                .votes
                .iter()
                .map(|v| VoteLine { dim: v.dimension, winner: v.winner, count: v.vote_count, agreement: v.agreement })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{validate_record, Line, ParsedScript};
    use proptest::prelude::*;

    fn profile(name: &str, movie: &str, votes: &[(Dimension, char, u32, f64)]) -> PersonalityProfile {
        PersonalityProfile {
            profile_id: name.to_lowercase(),
            character_name: name.into(),
            movie_name: movie.into(),
            scale: Scale::Mbti,
            votes: votes
                .iter()
                .map(|&(d, w, c, a)| DimensionVote { dimension: d, winner: w, vote_count: c, agreement: a })
                .collect(),
        }
    }

    fn morpheus() -> PersonalityProfile {
        use Dimension::*;
        profile("Morpheus", "The Matrix", &[(EI, 'E', 300, 0.9), (NS, 'N', 300, 0.8), (TF, 'F', 300, 0.7), (JP, 'J', 300, 0.85)])
    }

    #[test]
    fn two_voters_removed() {
        let p = profile("A", "M", &[(Dimension::EI, 'E', 2, 1.0)]);
        assert!(filter_profiles(&[p], MIN_VOTERS, MIN_AGREEMENT).is_empty());
    }

    #[test]
    fn morpheus_kept_whole() {
        let out = filter_profiles(&[morpheus()], MIN_VOTERS, MIN_AGREEMENT);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].votes.len(), 4);
        assert_eq!(out[0].mbti_type().as_deref(), Some("ENFJ"));
    }

    #[test]
    fn low_agreement_dimension_dropped() {
        use Dimension::*;
        let p = profile("A", "M", &[(EI, 'E', 5, 0.55), (NS, 'N', 5, 0.8), (TF, 'T', 5, 0.8), (JP, 'P', 5, 0.8)]);
        let out = filter_profiles(&[p], MIN_VOTERS, MIN_AGREEMENT);
        assert_eq!(out[0].votes.len(), 3);
        assert!(out[0].vote(EI).is_none());
        let edge = profile("B", "M", &[(EI, 'E', 3, 0.60)]);
        assert_eq!(filter_profiles(&[edge], MIN_VOTERS, MIN_AGREEMENT).len(), 1);
        let empty = profile("C", "M", &[(EI, 'E', 9, 0.5)]);
        assert!(filter_profiles(&[empty], MIN_VOTERS, MIN_AGREEMENT).is_empty());
    }

    #[test]
    fn name_normalization() {
        assert_eq!(normalize_name("Harry Potter"), vec!["harry", "potter"]);
        assert_eq!(normalize_name("MORPHEUS"), vec!["morpheus"]);
        assert_eq!(normalize_name("O'Brien"), vec!["obrien"]);
        assert!(normalize_name("!?.").is_empty());
    }

    #[test]
    fn soft_match_cases() {
        assert!(soft_match("Morpheus", "MORPHEUS", "The Matrix", "The Matrix"));
        assert!(soft_match("Harry Potter", "HARRY", "Harry Potter", "Harry Potter"));
        assert!(!soft_match("Jack Dawson", "JACK", "Titanic", "The Matrix"));
        assert!(!soft_match("Al Jones", "AL", "M", "M"));
        assert!(soft_match("Al", "AL", "M", "M"));
        assert!(soft_match("Morpheus", "MORPHEUS (V.O.)", "M", "M"));
    }

    fn scene(text: &str) -> Section {
        Section::new(None, vec![Line { indent: 0, text: text.into(), is_bold: false, line_no: 1 }])
    }

    #[test]
    fn scene_mentions() {
        assert_eq!(extract_scene_mentions(&scene("Morpheus smiles."), "Morpheus"), vec![0]);
        assert!(extract_scene_mentions(&scene("Neo waits."), "Morpheus").is_empty());
        assert_eq!(
            extract_scene_mentions(&scene("Neo watches Morpheus. Morpheus nods."), "Morpheus"),
            vec![2, 4]
        );
    }

    fn matrix_excerpt() -> ParsedScript {
        let l = |indent: usize, t: &str| Line { indent, text: t.into(), is_bold: false, line_no: 0 };
        let mut s = ParsedScript::new(
            "The Matrix",
            vec![
                Section::new(Some(("INT. ROOM 1313".into(), 0)), vec![l(0, "Morpheus turns to Neo.")]),
                Section::new(Some(("MORPHEUS".into(), 37)), vec![l(25, "They're coming for you, Neo.")]),
                Section::new(Some(("NEO".into(), 37)), vec![l(25, "Who is?")]),
            ],
        );
        let kinds = [SectionKind::Scene, SectionKind::Dialogue, SectionKind::Dialogue];
        for (sec, k) in s.sections.iter_mut().zip(kinds) {
            sec.kind = k;
        }
        s
    }

    #[test]
    fn assemble_morpheus() {
        let r = assemble_record(&morpheus(), &matrix_excerpt()).unwrap();
        assert_eq!(r.dialogues, vec!["They're coming for you, Neo."]);
        assert_eq!(r.scenes.len(), 1);
        assert_eq!(r.scenes[0].mentions, vec![0]);
        assert!(validate_record(&r).is_empty());
    }

    #[test]
    fn scene_only_character_kept() {
        let p = profile("Trinity", "The Matrix", &[(Dimension::EI, 'I', 10, 0.9)]);
        let mut s = matrix_excerpt();
        s.sections[0].body[0].text = "Trinity kicks the door.".into();
        let r = assemble_record(&p, &s).unwrap();
        assert!(r.dialogues.is_empty());
        assert_eq!(r.scenes.len(), 1);
    }

    #[test]
    fn nothing_matches() {
        let p = profile("Cypher", "The Matrix", &[(Dimension::EI, 'I', 10, 0.9)]);
        assert!(matches!(assemble_record(&p, &matrix_excerpt()), Err(MatchError::NoMatch { .. })));
    }

    #[test]
    fn duplicate_scripts_keep_richer_one() {
        let mut thin = matrix_excerpt();
        thin.sections.truncate(1);
        let (records, unmatched) = match_profiles(&[morpheus()], &[thin, matrix_excerpt()]);
        assert!(unmatched.is_empty());
        assert_eq!(records[0].dialogues.len(), 1);
    }

    proptest! {
        #[test]
        fn soft_match_symmetric_and_case_blind(a in "[A-Za-z' ]{0,16}", b in "[A-Za-z' ]{0,16}") {
            prop_assert_eq!(soft_match(&a, &b, "M", "M"), soft_match(&b, &a, "M", "M"));
            prop_assert_eq!(soft_match(&a, &b, "M", "M"), soft_match(&a.to_uppercase(), &b.to_lowercase(), "M", "M"));
        }

        #[test]
        fn filtered_profiles_meet_thresholds(
            raw in prop::collection::vec((0u32..8, prop::collection::vec(0.0f64..=1.0, 1..4)), 0..20)
        ) {
            let profiles: Vec<PersonalityProfile> = raw.iter().enumerate().map(|(i, (count, ags))| {
                let votes: Vec<_> = ags.iter().zip(Dimension::MBTI).map(|(&a, d)| (d, d.poles()[0], *count, a)).collect();
                profile(&format!("P{i}"), "M", &votes)
            }).collect();
            for p in filter_profiles(&profiles, MIN_VOTERS, MIN_AGREEMENT) {
                prop_assert!(p.vote_count() >= MIN_VOTERS);
                prop_assert!(!p.votes.is_empty());
                for v in &p.votes {
                    prop_assert!(v.agreement >= MIN_AGREEMENT);
                }
            }
        }
    }
}
