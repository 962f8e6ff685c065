//! Pipeline configuration: defaults, `key = value` files and overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::SvmConfig;
use crate::dataset::DEFAULT_SPLIT_RATIOS;
use crate::fusion::FusionConfig;
use crate::ingest::DEFAULT_TAB_WIDTH;
use crate::persona::{MIN_AGREEMENT, MIN_VOTERS};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub const DEFAULT_SEED: u64 = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scripts_dir: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub min_voters: u32,
    pub min_agreement: f64,
    pub split_ratios: [f64; 3],
    pub seed: u64,
    pub tab_width: usize,
    pub svm: SvmConfig,
    pub fusion: FusionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scripts_dir: None,
            profiles: None,
            out_dir: PathBuf::from("out"),
            min_voters: MIN_VOTERS,
            min_agreement: MIN_AGREEMENT,
            split_ratios: DEFAULT_SPLIT_RATIOS,
            seed: DEFAULT_SEED,
            tab_width: DEFAULT_TAB_WIDTH,
            svm: SvmConfig::default(),
            fusion: FusionConfig { seed: DEFAULT_SEED, ..FusionConfig::default() },
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue { key: key.into(), value: value.into() })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue { key: key.into(), value: value.into() }),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl PipelineConfig {
    /// Sets one key. Keys use `snake_case`; `-` is accepted for `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        let v = value.trim();
        let f = &mut self.fusion;
        match k {
            "scripts_dir" => self.scripts_dir = Some(v.into()),
            "profiles" => self.profiles = Some(v.into()),
            "out_dir" => self.out_dir = v.into(),
            "min_voters" => self.min_voters = parse(k, v)?,
            "min_agreement" => self.min_agreement = parse(k, v)?,
            "split_ratios" => {
                let r = parse_list(k, v)?;
                self.split_ratios = r.try_into().map_err(|_| ConfigError::BadValue { key: key.clone(), value: v.into() })?;
            }
            "seed" => {
                self.seed = parse(k, v)?;
                f.seed = self.seed;
            }
            "tab_width" => self.tab_width = parse(k, v)?,
            "c" | "svm_c" => self.svm.c = parse(k, v)?,
            "svm_tolerance" => self.svm.tolerance = parse(k, v)?,
            "svm_max_epochs" => self.svm.max_epochs = parse(k, v)?,
            "hidden" => f.hidden = parse(k, v)?,
            "l_max" => f.l_max = parse(k, v)?,
            "r_max" => f.r_max = parse(k, v)?,
            "vocab_size" => f.vocab_size = parse(k, v)?,
            "window" => f.window = parse(k, v)?,
            "epochs" => f.epochs = parse(k, v)?,
            "runs" => f.runs = parse(k, v)?,
            "lr" => f.lr = if v.eq_ignore_ascii_case("auto") { None } else { Some(parse(k, v)?) },
            "lr_grid" => f.lr_grid = parse_list(k, v)?,
            "batch_size" => f.batch_size = parse(k, v)?,
            "use_scene_view" => f.use_scene_view = parse_bool(k, v)?,
            "init_scale" => f.init_scale = parse(k, v)?,
            "token_budget" => f.token_budget = if v.eq_ignore_ascii_case("none") { None } else { Some(parse(k, v)?) },
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !(0.0..=1.0).contains(&self.min_agreement) {
            return bad("min_agreement must lie in [0, 1]");
        }
        if self.split_ratios.iter().any(|r| *r < 0.0) || (self.split_ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split_ratios must be non-negative and sum to 1");
        }
        if self.tab_width == 0 {
            return bad("tab_width must be positive");
        }
        if !(self.svm.c > 0.0) {
            return bad("C must be positive");
        }
        let f = &self.fusion;
        if f.l_max == 0 || f.r_max == 0 || f.hidden == 0 || f.runs == 0 || f.batch_size == 0 || f.vocab_size <= 2 {
            return bad("l_max, r_max, hidden, runs and batch_size must be positive and vocab_size above 2");
        }
        if f.lr.is_some_and(|lr| !(lr > 0.0)) || f.lr_grid.iter().any(|lr| !(*lr > 0.0)) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }

    /// Rendered back as `key = value` lines that `apply_str` accepts.
    pub fn to_kv(&self) -> String {
        let f = &self.fusion;
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut out = Vec::new();
        if let Some(p) = &self.scripts_dir {
            out.push(format!("scripts_dir = {}", p.display()));
        }
        if let Some(p) = &self.profiles {
            out.push(format!("profiles = {}", p.display()));
        }
        out.extend([
            format!("out_dir = {}", self.out_dir.display()),
            format!("min_voters = {}", self.min_voters),
            format!("min_agreement = {}", self.min_agreement),
            format!("split_ratios = {}", join(&self.split_ratios)),
            format!("seed = {}", self.seed),
            format!("tab_width = {}", self.tab_width),
            format!("svm_c = {}", self.svm.c),
            format!("svm_tolerance = {}", self.svm.tolerance),
            format!("svm_max_epochs = {}", self.svm.max_epochs),
            format!("hidden = {}", f.hidden),
            format!("l_max = {}", f.l_max),
            format!("r_max = {}", f.r_max),
            format!("vocab_size = {}", f.vocab_size),
            format!("window = {}", f.window),
            format!("epochs = {}", f.epochs),
            format!("runs = {}", f.runs),
            format!("lr = {}", f.lr.map_or("auto".to_string(), |v| v.to_string())),
            format!("lr_grid = {}", join(&f.lr_grid)),
            format!("batch_size = {}", f.batch_size),
            format!("use_scene_view = {}", f.use_scene_view),
            format!("init_scale = {}", f.init_scale),
            format!("token_budget = {}", f.token_budget.map_or("none".to_string(), |v| v.to_string())),
        ]);
        out.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_settings() {
        let c = PipelineConfig::default();
        assert_eq!((c.min_voters, c.min_agreement), (3, 0.60));
        assert_eq!((c.fusion.r_max, c.fusion.epochs, c.fusion.runs), (20, 20, 5));
        assert_eq!(c.svm.c, 0.1);
        assert_eq!(c.split_ratios, [0.8, 0.1, 0.1]);
        assert_eq!(c.tab_width, 8);
        c.validate().unwrap();
    }

    #[test]
    fn file_values_then_overrides() {
        let mut c = PipelineConfig::default();
        c.apply_str("# comment\nr_max = 10\nlr = 0.01  # inline\nuse-scene-view = no\n\n").unwrap();
        assert_eq!(c.fusion.r_max, 10);
        assert_eq!(c.fusion.lr, Some(0.01));
        assert!(!c.fusion.use_scene_view);
        c.set("r_max", "12").unwrap();
        assert_eq!(c.fusion.r_max, 12);
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = PipelineConfig::default();
        assert!(matches!(c.apply_str("r_max 10"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(c.set("colour", "red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.set("runs", "many"), Err(ConfigError::BadValue { .. })));
        c.set("split_ratios", "0.5,0.5,0.5").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn kv_rendering_reloads() {
        let mut c = PipelineConfig::default();
        c.set("token_budget", "500").unwrap();
        c.set("profiles", "p.jsonl").unwrap();
        let mut d = PipelineConfig::default();
        d.apply_str(&c.to_kv()).unwrap();
        assert_eq!(c, d);
    }
}
