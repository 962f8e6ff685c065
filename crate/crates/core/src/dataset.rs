//! Train/dev/test assignment and the dataset statistics tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ir::{CharacterRecord, Dimension, Split};
use crate::persona::movie_key;
use crate::text::words_lower;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DatasetError {
    #[error("no records to split")]
    EmptyDataset,
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
}

pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Assigns splits by movie so all characters of a movie share one split.
///
/// Movie groups are shuffled by `seed`, then poured into train, dev and
/// test in turn; each split stops taking groups once it reaches its target
/// count, so sizes land within one movie group of the target.
pub fn split_dataset(
    records: &[CharacterRecord],
    ratios: [f64; 3],
    seed: u64,
) -> Result<Vec<CharacterRecord>, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    if ratios.iter().any(|r| *r < 0.0 || !r.is_finite()) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadRatios(ratios));
    }
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(movie_key(&r.profile.movie_name)).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = records.len() as f64;
    let train_target = (n * ratios[0]).round() as usize;
    let dev_target = (n * ratios[1]).round() as usize;
    let mut out = records.to_vec();
    let (mut n_train, mut n_dev) = (0usize, 0usize);
    for g in groups {
        let split = if n_train < train_target {
            n_train += g.len();
            Split::Train
        } else if n_dev < dev_target {
            n_dev += g.len();
            Split::Dev
        } else {
            Split::Test
        };
        for i in g {
            out[i].split = split;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
    pub count: usize,
}

impl Moments {
    /// Summary of `values`; sorted before summing so the result does not
    /// depend on input order.
    pub fn of(mut values: Vec<f64>) -> Option<Moments> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Moments { mean, min: values[0], max: values[values.len() - 1], std: var.sqrt(), count: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleShare {
    pub count: usize,
    /// Percentage of the split's characters (not of those labeled on this dimension).
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub characters: usize,
    pub movies: usize,
    pub split_sizes: BTreeMap<String, usize>,
    /// split -> dimension -> pole -> share
    pub label_distribution: BTreeMap<String, BTreeMap<String, BTreeMap<char, PoleShare>>>,
    pub dialogues_per_character: Option<Moments>,
    pub words_per_dialogue: Option<Moments>,
    pub scenes_per_character: Option<Moments>,
    pub words_per_scene: Option<Moments>,
    pub mbti_types: BTreeMap<String, PoleShare>,
    pub agreement_by_pole: BTreeMap<char, Moments>,
}

pub fn compute_stats(records: &[CharacterRecord]) -> DatasetStats {
    let mut split_sizes: BTreeMap<String, usize> = BTreeMap::new();
    let mut labels: BTreeMap<String, BTreeMap<String, BTreeMap<char, usize>>> = BTreeMap::new();
    for r in records {
        let split = r.split.name().to_string();
        *split_sizes.entry(split.clone()).or_default() += 1;
        let dims = labels.entry(split).or_default();
        for v in &r.profile.votes {
            *dims.entry(v.dimension.name()).or_default().entry(v.winner).or_default() += 1;
        }
    }
    let label_distribution = labels
        .into_iter()
        .map(|(split, dims)| {
            let size = split_sizes[&split] as f64;
            let dims = dims
                .into_iter()
                .map(|(d, poles)| {
                    let poles = poles
                        .into_iter()
                        .map(|(p, c)| (p, PoleShare { count: c, percent: 100.0 * c as f64 / size }))
                        .collect();
                    (d, poles)
                })
                .collect();
            (split, dims)
        })
        .collect();

    let word_count = |s: &str| words_lower(s).len() as f64;
    let dialogues_per_character = Moments::of(records.iter().map(|r| r.dialogues.len() as f64).collect());
    let scenes_per_character = Moments::of(records.iter().map(|r| r.scenes.len() as f64).collect());
    let words_per_dialogue =
        Moments::of(records.iter().flat_map(|r| r.dialogues.iter().map(|d| word_count(d))).collect());
    let words_per_scene =
        Moments::of(records.iter().flat_map(|r| r.scenes.iter().map(|s| word_count(&s.text))).collect());

    let mut types: BTreeMap<String, usize> = BTreeMap::new();
    for t in records.iter().filter_map(|r| r.profile.mbti_type()) {
        *types.entry(t).or_default() += 1;
    }
    let typed: usize = types.values().sum();
    let mbti_types = types
        .into_iter()
        .map(|(t, c)| (t, PoleShare { count: c, percent: 100.0 * c as f64 / typed as f64 }))
        .collect();

    let mut agreements: BTreeMap<char, Vec<f64>> = BTreeMap::new();
    for v in records.iter().flat_map(|r| &r.profile.votes).filter(|v| v.dimension.scale() == crate::ir::Scale::Mbti) {
        agreements.entry(v.winner).or_default().push(v.agreement);
    }
    let agreement_by_pole =
        agreements.into_iter().filter_map(|(p, v)| Moments::of(v).map(|m| (p, m))).collect();

    let mut movies: Vec<String> = records.iter().map(|r| movie_key(&r.profile.movie_name)).collect();
    movies.sort();
    movies.dedup();

    DatasetStats {
        characters: records.len(),
        movies: movies.len(),
        split_sizes,
        label_distribution,
        dialogues_per_character,
        words_per_dialogue,
        scenes_per_character,
        words_per_scene,
        mbti_types,
        agreement_by_pole,
    }
}

impl DatasetStats {
    /// Plain-text dump of the tables.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "characters: {}   movies: {}", self.characters, self.movies);
        let _ = writeln!(s, "\nlabel distribution (% of split)");
        let _ = writeln!(s, "{:<6} {:>14} {:>14} {:>14}", "dim", "train", "dev", "test");
        for d in Dimension::MBTI.iter().chain(Dimension::SLOAN.iter()) {
            let [a, b] = d.poles();
            let mut row = format!("{:<6}", d.name());
            let mut any = false;
            for split in Split::ASSIGNED {
                let cell = self.label_distribution.get(split.name()).and_then(|m| m.get(&d.name()));
                any |= cell.is_some();
                let pct = |p: char| cell.and_then(|c| c.get(&p)).map_or(0.0, |x| x.percent);
                row.push_str(&format!(" {:>14}", format!("{:.1}/{:.1}", pct(a), pct(b))));
            }
            if any {
                let _ = writeln!(s, "{row}");
            }
        }
        let _ = writeln!(s, "\n{:<24} {:>10} {:>8} {:>8}", "", "mean", "min", "max");
        for (name, m) in [
            ("# dialogues/character", &self.dialogues_per_character),
            ("# words/dialogue", &self.words_per_dialogue),
            ("# scenes/character", &self.scenes_per_character),
            ("# words/scene", &self.words_per_scene),
        ] {
            if let Some(m) = m {
                let _ = writeln!(s, "{name:<24} {:>10.2} {:>8} {:>8}", m.mean, m.min, m.max);
            }
        }
        if !self.mbti_types.is_empty() {
            let _ = writeln!(s, "\nMBTI type distribution");
            for (t, share) in &self.mbti_types {
                let _ = writeln!(s, "{t:<6} {:>6.2}%  ({})", share.percent, share.count);
            }
        }
        if !self.agreement_by_pole.is_empty() {
            let _ = writeln!(s, "\nagreement {:>8} {:>6} {:>6} {:>6} {:>8}", "mean", "min", "max", "std", "count");
            for (p, m) in &self.agreement_by_pole {
                let _ = writeln!(
                    s,
                    "{p:<9} {:>7.2}% {:>5.0}% {:>5.0}% {:>6.2} {:>8}",
                    100.0 * m.mean,
                    100.0 * m.min,
                    100.0 * m.max,
                    m.std,
                    m.count
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{DimensionVote, PersonalityProfile, Scale, SceneMention};
    use proptest::prelude::*;

    fn record(id: usize, movie: &str, mbti: &str, dialogues: usize, scenes: usize) -> CharacterRecord {
        let votes = mbti
            .chars()
            .zip(Dimension::MBTI)
            .map(|(w, d)| DimensionVote { dimension: d, winner: w, vote_count: 5, agreement: 0.8 })
            .collect();
        CharacterRecord {
            profile: PersonalityProfile {
                profile_id: id.to_string(),
                character_name: format!("Char{id}"),
                movie_name: movie.into(),
                votes,
                scale: Scale::Mbti,
            },
            dialogues: vec!["hello there".into(); dialogues],
            scenes: vec![SceneMention { text: format!("Char{id} waits."), mentions: vec![0] }; scenes],
            split: Split::Unassigned,
        }
    }

    fn counts(rs: &[CharacterRecord]) -> [usize; 3] {
        let c = |s| rs.iter().filter(|r| r.split == s).count();
        [c(Split::Train), c(Split::Dev), c(Split::Test)]
    }

    #[test]
    fn ten_movies_split_eight_one_one() {
        let rs: Vec<_> = (0..10).map(|i| record(i, &format!("Movie {i}"), "ENFJ", 1, 0)).collect();
        let out = split_dataset(&rs, DEFAULT_SPLIT_RATIOS, 7).unwrap();
        assert_eq!(counts(&out), [8, 1, 1]);
        assert_eq!(out, split_dataset(&rs, DEFAULT_SPLIT_RATIOS, 7).unwrap());
    }

    #[test]
    fn same_movie_same_split() {
        let mut rs: Vec<_> = (0..10).map(|i| record(i, &format!("Movie {i}"), "ENFJ", 1, 0)).collect();
        rs.push(record(99, "movie 3", "ISTJ", 1, 0));
        for seed in 0..20 {
            let out = split_dataset(&rs, DEFAULT_SPLIT_RATIOS, seed).unwrap();
            assert_eq!(out[3].split, out[10].split);
        }
    }

    #[test]
    fn empty_and_bad_ratios() {
        assert_eq!(split_dataset(&[], DEFAULT_SPLIT_RATIOS, 1), Err(DatasetError::EmptyDataset));
        let rs = vec![record(0, "M", "ENFJ", 1, 0)];
        assert!(matches!(split_dataset(&rs, [0.5, 0.5, 0.5], 1), Err(DatasetError::BadRatios(_))));
    }

    #[test]
    fn single_character_moments() {
        let st = compute_stats(&[record(0, "M", "ENFJ", 3, 1)]);
        let d = st.dialogues_per_character.unwrap();
        assert_eq!((d.mean, d.min, d.max), (3.0, 3.0, 3.0));
        let s = st.scenes_per_character.unwrap();
        assert_eq!((s.mean, s.min, s.max), (1.0, 1.0, 1.0));
    }

    #[test]
    fn type_distribution_halves() {
        let st = compute_stats(&[record(0, "A", "ENFJ", 1, 0), record(1, "B", "ISTJ", 1, 0)]);
        assert_eq!(st.mbti_types.len(), 2);
        assert_eq!(st.mbti_types["ENFJ"].percent, 50.0);
        assert_eq!(st.mbti_types["ISTJ"].percent, 50.0);
        assert!(st.to_table().contains("ENFJ"));
    }

    #[test]
    fn label_counts_sum_to_labeled_characters() {
        let mut rs: Vec<_> = (0..6).map(|i| record(i, "M", if i % 2 == 0 { "ENFJ" } else { "ISTP" }, 1, 1)).collect();
        rs[0].profile.votes.remove(0);
        let st = compute_stats(&rs);
        let ei = &st.label_distribution["unassigned"]["E/I"];
        assert_eq!(ei.values().map(|p| p.count).sum::<usize>(), 5);
        let ns = &st.label_distribution["unassigned"]["N/S"];
        assert_eq!(ns.values().map(|p| p.count).sum::<usize>(), 6);
    }

    proptest! {
        #[test]
        fn every_record_gets_one_split(n in 1usize..60, movies in 1usize..15, seed in any::<u64>()) {
            let rs: Vec<_> = (0..n).map(|i| record(i, &format!("M{}", i % movies), "ENFJ", 1, 0)).collect();
            let out = split_dataset(&rs, DEFAULT_SPLIT_RATIOS, seed).unwrap();
            prop_assert_eq!(out.len(), n);
            prop_assert!(out.iter().all(|r| r.split != Split::Unassigned));
            for (a, b) in rs.iter().zip(&out) {
                prop_assert_eq!(&a.profile, &b.profile);
            }
        }

        #[test]
        fn stats_ignore_record_order(seed in any::<u64>(), n in 1usize..30) {
            let mut rs: Vec<_> = (0..n).map(|i| {
                let mut r = record(i, &format!("M{}", i % 4), ["ENFJ", "ISTP", "INTJ"][i % 3], i % 5, i % 3);
                for (k, v) in r.profile.votes.iter_mut().enumerate() {
                    v.agreement = 0.6 + 0.4 * (((i * 7 + k * 3) % 11) as f64 / 10.0);
                }
                r
            }).collect();
            let a = compute_stats(&rs);
            rs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, compute_stats(&rs));
        }
    }
}
