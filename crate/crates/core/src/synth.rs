//! Synthetic screenplays, profiles and records with known labels.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{RawScript, SourceFormat};
use crate::ir::{
    CharacterRecord, Dimension, DimensionVote, PersonalityProfile, Scale, SceneMention, SectionKind, Split,
};
use crate::persona::{mentions_in_text, ProfileJson};

/// Page layout of a generated script.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// FADE IN at the left margin, dialogue indented.
    Clean,
    /// FADE IN and action lines share a deeper margin.
    DeepAnchor,
    /// Everything at one indent; thresholding cannot separate the kinds.
    Flat,
    /// Mostly dialogue; the dialogue ratio sits far above the corpus norm.
    DialogueHeavy,
    /// No FADE IN marker; tab-indented.
    NoFadeIn,
}

impl Layout {
    pub const ALL: [Layout; 5] = [Layout::Clean, Layout::DeepAnchor, Layout::Flat, Layout::DialogueHeavy, Layout::NoFadeIn];

    /// Mix used for a corpus: FADE-IN scripts dominate so corpus statistics
    /// are meaningful, with a steady share of failure and no-anchor cases.
    const CYCLE: [Layout; 8] = [
        Layout::Clean,
        Layout::DeepAnchor,
        Layout::NoFadeIn,
        Layout::Clean,
        Layout::Flat,
        Layout::DeepAnchor,
        Layout::DialogueHeavy,
        Layout::Clean,
    ];

    fn indents(self) -> Indents {
        let s = |n: usize| " ".repeat(n);
        match self {
            Layout::Clean | Layout::DialogueHeavy => {
                Indents { scene: s(0), dialogue: s(10), paren: s(15), name: s(22), fade_in: true }
            }
            Layout::DeepAnchor => Indents { scene: s(8), dialogue: s(22), paren: s(28), name: s(35), fade_in: true },
            Layout::Flat => Indents { scene: s(0), dialogue: s(0), paren: s(0), name: s(0), fade_in: true },
            Layout::NoFadeIn => Indents {
                scene: s(4),
                dialogue: "\t\t".into(),
                paren: "\t\t   ".into(),
                name: "\t\t\t\t".into(),
                fade_in: false,
            },
        }
    }
}

struct Indents {
    scene: String,
    dialogue: String,
    paren: String,
    name: String,
    fade_in: bool,
}

const FIRST_NAMES: &[&str] = &[
    "Anna", "Boris", "Clara", "Dmitri", "Elena", "Felix", "Greta", "Hugo", "Irene", "Jonas", "Katya", "Lucas",
    "Mara", "Nikolai", "Olga", "Pavel", "Rosa", "Stefan", "Tamsin", "Viktor", "Wanda", "Yuri", "Zelda", "Oscar",
];
const LAST_NAMES: &[&str] =
    &["Kovac", "Moreau", "Lindqvist", "Okafor", "Brandt", "Castillo", "Nakamura", "Petrov", "Quinn", "Sorensen"];
const MOVIE_ADJ: &[&str] = &[
    "Silent", "Broken", "Crimson", "Hollow", "Golden", "Distant", "Frozen", "Hidden", "Burning", "Quiet", "Northern",
    "Savage",
];
const MOVIE_NOUN: &[&str] = &[
    "Harbor", "Orchard", "Signal", "Frontier", "Lantern", "Garden", "Empire", "Meridian", "Canyon", "Tide", "Archive",
    "Circuit",
];
const PLACES: &[&str] = &[
    "WAREHOUSE", "KITCHEN", "POLICE STATION", "ROOFTOP", "DINER", "OFFICE", "TRAIN PLATFORM", "MOTEL ROOM", "HARBOR",
    "PARKING GARAGE", "LIBRARY", "HOSPITAL CORRIDOR",
];
const TIMES: &[&str] = &["DAY", "NIGHT", "DUSK", "LATER", "CONTINUOUS", "MORNING"];
const DIALOGUE_WORDS: &[&str] = &[
    "I", "you", "we", "know", "think", "want", "need", "tell", "me", "what", "why", "don't", "can't", "gonna", "maybe",
    "really", "never", "always", "please", "listen", "okay", "yeah", "sorry", "just", "here", "now", "believe",
    "remember", "promise", "told", "said", "mean", "get", "us", "it",
];
const SCENE_NOUNS: &[&str] = &[
    "door", "window", "street", "light", "room", "table", "car", "stairs", "shadow", "glass", "corridor", "engine",
    "smoke", "desk", "wall", "floor", "phone", "curtain",
];
const SCENE_VERBS: &[&str] =
    &["turns", "walks", "stares", "opens", "crosses", "waits", "leans", "drifts", "flickers", "rattles", "slides"];
const SCENE_ADVERBS: &[&str] = &["slowly", "quietly", "suddenly", "briefly", "outside", "across", "toward", "again"];
const PARENTHETICALS: &[&str] = &["(quietly)", "(beat)", "(smiling)", "(into phone)", "(turning)"];

/// A generated script and the true kind of every section it parses into.
#[derive(Debug, Clone)]
pub struct SynthScript {
    pub file_name: String,
    pub layout: Layout,
    pub raw: RawScript,
    pub gold: Vec<SectionKind>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub scripts: Vec<SynthScript>,
    /// Unfiltered profiles, including ones the voter and agreement floors
    /// drop and one whose movie has no script.
    pub profiles: Vec<PersonalityProfile>,
}

#[derive(Serialize, Deserialize)]
struct GoldLine {
    file: String,
    movie: String,
    layout: Layout,
    sections: Vec<SectionKind>,
}

pub fn movie_name(index: usize) -> String {
    let a = MOVIE_ADJ[index % MOVIE_ADJ.len()];
    let round = index / MOVIE_ADJ.len();
    let n = MOVIE_NOUN[(index % MOVIE_ADJ.len() + round) % MOVIE_NOUN.len()];
    let cycle = index / (MOVIE_ADJ.len() * MOVIE_NOUN.len());
    if cycle == 0 {
        format!("{a} {n}")
    } else {
        format!("{a} {n} {}", cycle + 1)
    }
}

fn slug(movie: &str) -> String {
    movie.to_lowercase().replace(' ', "-")
}

fn capitalize(word: &str) -> String {
    let mut cs = word.chars();
    cs.next().map_or_else(String::new, |f| f.to_uppercase().chain(cs).collect())
}

fn dialogue_sentence(rng: &mut impl Rng) -> String {
    let n = rng.random_range(4..=9);
    let words: Vec<&str> = (0..n).map(|_| *DIALOGUE_WORDS.choose(rng).expect("non-empty")).collect();
    let end = *[".", "?", "!", "."].choose(rng).expect("non-empty");
    format!("{}{end}", capitalize(&words.join(" ")))
}

fn scene_sentence(rng: &mut impl Rng, name: Option<&str>) -> String {
    let pick = |rng: &mut dyn rand::RngCore, xs: &[&'static str]| -> &'static str {
        xs[rng.random_range(0..xs.len())]
    };
    let subject = match name {
        Some(n) => n.to_string(),
        None => format!("The {}", pick(rng, SCENE_NOUNS)),
    };
    format!(
        "{subject} {} {} the {} and the {} {}.",
        pick(rng, SCENE_VERBS),
        pick(rng, SCENE_ADVERBS),
        pick(rng, SCENE_NOUNS),
        pick(rng, SCENE_NOUNS),
        pick(rng, SCENE_VERBS)
    )
}

/// HTML-escapes apostrophes the way many script sites do.
fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('\'', "&#39;")
}

fn cast(rng: &mut impl Rng) -> Vec<(String, String)> {
    let firsts: Vec<&&str> = FIRST_NAMES.choose_multiple(rng, 4).collect();
    let lasts: Vec<&&str> = LAST_NAMES.choose_multiple(rng, 4).collect();
    firsts.into_iter().zip(lasts).map(|(f, l)| (f.to_string(), l.to_string())).collect()
}

/// Generates one script for `movie` with the given cast of first names.
pub fn synth_script(rng: &mut impl Rng, movie: &str, layout: Layout, cast_first: &[String]) -> SynthScript {
    let ind = layout.indents();
    let mut html = String::new();
    let _ = writeln!(html, "<html><head><title>{movie}</title></head><body><pre>");
    let mut gold = Vec::new();
    if ind.fade_in {
        let _ = writeln!(html, "{}FADE IN:\n", ind.scene);
        gold.push(SectionKind::Scene);
    }
    let n_scenes = rng.random_range(6..=10);
    for _ in 0..n_scenes {
        let place = PLACES.choose(rng).expect("non-empty");
        let time = TIMES.choose(rng).expect("non-empty");
        let ie = if rng.random_bool(0.6) { "INT." } else { "EXT." };
        let _ = writeln!(html, "{}<b>{ie} {place} - {time}</b>", ind.scene);
        let n_lines = rng.random_range(1..=3);
        for k in 0..n_lines {
            let who = (k == 0 || rng.random_bool(0.3)).then(|| cast_first.choose(rng).expect("non-empty cast").as_str());
            let _ = writeln!(html, "{}{}", ind.scene, escape(&scene_sentence(rng, who)));
        }
        html.push('\n');
        gold.push(SectionKind::Scene);
        let n_dialogue = match layout {
            Layout::DialogueHeavy => rng.random_range(4..=6),
            _ => rng.random_range(0..=2),
        };
        for _ in 0..n_dialogue {
            let name = cast_first.choose(rng).expect("non-empty cast").to_uppercase();
            let suffix = match rng.random_range(0..8) {
                0 => " (CONT'D)",
                1 => " (V.O.)",
                _ => "",
            };
            let _ = writeln!(html, "{}<b>{}</b>", ind.name, escape(&format!("{name}{suffix}")));
            let n_lines = rng.random_range(1..=3);
            if n_lines >= 2 && rng.random_bool(0.3) {
                let _ = writeln!(html, "{}{}", ind.paren, PARENTHETICALS.choose(rng).expect("non-empty"));
            }
            for _ in 0..n_lines {
                let _ = writeln!(html, "{}{}", ind.dialogue, escape(&dialogue_sentence(rng)));
            }
            html.push('\n');
            gold.push(SectionKind::Dialogue);
        }
    }
    let _ = writeln!(html, "{}<b>THE END</b>", ind.scene);
    let _ = writeln!(html, "{}Credits roll over the dark {}.", ind.scene, SCENE_NOUNS.choose(rng).expect("non-empty"));
    gold.push(SectionKind::Scene);
    html.push_str("</pre></body></html>\n");
    let raw = RawScript::new(movie, SourceFormat::Html, html.into_bytes()).expect("generated script is non-empty");
    SynthScript { file_name: format!("{}.html", slug(movie)), layout, raw, gold }
}

fn random_votes(rng: &mut impl Rng) -> Vec<DimensionVote> {
    Dimension::MBTI
        .iter()
        .map(|&dimension| {
            let poles = dimension.poles();
            DimensionVote {
                dimension,
                winner: poles[rng.random_range(0..2)],
                vote_count: rng.random_range(3..=40),
                agreement: (rng.random_range(60..=100) as f64) / 100.0,
            }
        })
        .collect()
}

/// `n_scripts` scripts cycling through every layout, four profiled
/// characters per movie, plus profiles the filters or matcher reject.
pub fn synth_corpus(n_scripts: usize, seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scripts = Vec::with_capacity(n_scripts);
    let mut profiles = Vec::new();
    for i in 0..n_scripts {
        let movie = movie_name(i);
        let people = cast(&mut rng);
        let firsts: Vec<String> = people.iter().map(|p| p.0.clone()).collect();
        let layout = Layout::CYCLE[i % Layout::CYCLE.len()];
        scripts.push(synth_script(&mut rng, &movie, layout, &firsts));
        for (c, (first, last)) in people.iter().enumerate() {
            let mut votes = random_votes(&mut rng);
            if c == 3 && i % 3 == 0 {
                for v in &mut votes {
                    v.vote_count = 2;
                }
            }
            if c == 2 && i % 4 == 1 {
                votes[1].agreement = 0.55;
            }
            profiles.push(PersonalityProfile {
                profile_id: format!("{}", 1000 + i * 10 + c),
                character_name: format!("{first} {last}"),
                movie_name: movie.clone(),
                votes,
                scale: Scale::Mbti,
            });
        }
    }
    profiles.push(PersonalityProfile {
        profile_id: "999999".into(),
        character_name: "Nobody Known".into(),
        movie_name: "Unwritten Picture".into(),
        votes: random_votes(&mut rng),
        scale: Scale::Mbti,
    });
    SynthCorpus { scripts, profiles }
}

/// Writes `scripts/*.html`, `profiles.jsonl` and `gold.jsonl` under `dir`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> io::Result<()> {
    let scripts_dir = dir.join("scripts");
    fs::create_dir_all(&scripts_dir)?;
    let mut gold = String::new();
    for s in &corpus.scripts {
        fs::write(scripts_dir.join(&s.file_name), &s.raw.content)?;
        let line = GoldLine {
            file: s.file_name.clone(),
            movie: s.raw.movie_name.clone(),
            layout: s.layout,
            sections: s.gold.clone(),
        };
        gold.push_str(&serde_json::to_string(&line).map_err(io::Error::other)?);
        gold.push('\n');
    }
    fs::write(dir.join("gold.jsonl"), gold)?;
    let mut profiles = String::new();
    for p in &corpus.profiles {
        profiles.push_str(&serde_json::to_string(&ProfileJson::from(p)).map_err(io::Error::other)?);
        profiles.push('\n');
    }
    fs::write(dir.join("profiles.jsonl"), profiles)
}

fn record(i: usize, name: &str, dimension: Dimension, winner: char) -> CharacterRecord {
    CharacterRecord {
        profile: PersonalityProfile {
            profile_id: format!("s{i}"),
            character_name: name.to_string(),
            movie_name: movie_name(i),
            votes: vec![DimensionVote { dimension, winner, vote_count: 10, agreement: 0.9 }],
            scale: dimension.scale(),
        },
        dialogues: Vec::new(),
        scenes: Vec::new(),
        split: Split::Unassigned,
    }
}

const OUTGOING: &[&str] = &["laughs", "grins", "shouts"];
const RESERVED: &[&str] = &["sighs", "hesitates", "withdraws"];

/// E/I records whose label shows only in scene text, as the verb right
/// after the character's name. Other characters in the same scenes get
/// verbs from both poles, and dialogues carry no signal.
pub fn scene_signal_records(n: usize, seed: u64) -> Vec<CharacterRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let winner = if i % 2 == 0 { 'E' } else { 'I' };
            let names: Vec<&&str> = FIRST_NAMES.choose_multiple(&mut rng, 2).collect();
            let (me, other) = (*names[0], *names[1]);
            let mut r = record(i, me, Dimension::EI, winner);
            r.dialogues = (0..3).map(|_| dialogue_sentence(&mut rng)).collect();
            let signal = if winner == 'E' { OUTGOING } else { RESERVED };
            for _ in 0..3 {
                let noise = if rng.random_bool(0.5) { OUTGOING } else { RESERVED };
                let text = format!(
                    "{other} {} near the {}. {me} {} and the {} {}.",
                    noise.choose(&mut rng).expect("non-empty"),
                    SCENE_NOUNS.choose(&mut rng).expect("non-empty"),
                    signal.choose(&mut rng).expect("non-empty"),
                    SCENE_NOUNS.choose(&mut rng).expect("non-empty"),
                    SCENE_VERBS.choose(&mut rng).expect("non-empty"),
                );
                let mentions = mentions_in_text(&text, me);
                r.scenes.push(SceneMention { text, mentions });
            }
            r
        })
        .collect()
}

/// E/I records whose dialogues contain a pole-specific marker word.
pub fn marker_dialogue_records(n: usize, seed: u64) -> Vec<CharacterRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let winner = if i % 2 == 0 { 'E' } else { 'I' };
            let name = *FIRST_NAMES.choose(&mut rng).expect("non-empty");
            let mut r = record(i, name, Dimension::EI, winner);
            let marker = if winner == 'E' { "sunshine" } else { "thunder" };
            r.dialogues = (0..3).map(|_| dialogue_sentence(&mut rng)).collect();
            let k = rng.random_range(0..r.dialogues.len());
            r.dialogues[k] = format!("{} {marker}.", r.dialogues[k].trim_end_matches(['.', '?', '!']));
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{movie_name_from_stem, normalize_lines, split_sections, DEFAULT_TAB_WIDTH};

    #[test]
    fn gold_aligns_with_sections() {
        let corpus = synth_corpus(16, 1);
        for s in &corpus.scripts {
            let lines = normalize_lines(&s.raw, DEFAULT_TAB_WIDTH).unwrap();
            let sections = split_sections(&lines);
            assert_eq!(sections.len(), s.gold.len(), "{}", s.file_name);
            let stem = s.file_name.trim_end_matches(".html");
            assert_eq!(movie_name_from_stem(stem), s.raw.movie_name);
        }
    }

    #[test]
    fn movie_names_are_unique() {
        let names: std::collections::BTreeSet<String> = (0..300).map(movie_name).collect();
        assert_eq!(names.len(), 300);
    }

    #[test]
    fn scene_signal_mentions_point_at_the_name() {
        for r in scene_signal_records(10, 3) {
            for s in &r.scenes {
                assert_eq!(s.mentions.len(), 1);
                assert!(crate::ir::validate_record(&r).is_empty());
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = synth_corpus(5, 9);
        let b = synth_corpus(5, 9);
        assert_eq!(a.profiles, b.profiles);
        assert!(a.scripts.iter().zip(&b.scripts).all(|(x, y)| x.raw.content == y.raw.content));
    }
}
