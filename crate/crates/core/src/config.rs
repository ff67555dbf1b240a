//! Run configuration: a flat `key = value` file with `[section]` headers.
//!
//! Keys are addressed as `section.key`. Command-line flags go through the same
//! [`RunConfig::set`] path, so a flag and a file entry for the same key are
//! validated identically and the flag wins when applied later.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bpr::BprHyper;
use crate::error::{Error, Result};
use crate::eval::SplitConfig;
use crate::ingest::{SettingKind, TripleFormat};
use crate::interpret::{RobMode, SaMode};
use crate::knn::DEFAULT_NEIGHBORS;
use crate::profiles::EnjoyedItems;
use crate::registry::SystemSettings;
use crate::seed;

/// Parses `[section]` / `key = value` text into `section.key → value`.
/// Keys before any section header live in the `run` section.
pub fn parse_entries(text: &str, source_name: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    let mut section = String::from("run");
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(source_name, idx + 1, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(Error::parse(source_name, idx + 1, "empty section name"));
            }
            section = name.to_owned();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(source_name, idx + 1, "expected `key = value`"))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::parse(source_name, idx + 1, "empty key"));
        }
        out.push((format!("{section}.{k}"), v.trim().to_owned(), idx + 1));
    }
    Ok(out)
}

const PATH_KEYS: [&str; 3] = ["data.interactions", "data.triples", "data.mapping"];

/// Entries of a config file as `(section.key, value)` overrides, each checked
/// against the schema. Relative data paths resolve against the file's directory.
pub fn file_overrides(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let base = path.parent().unwrap_or(Path::new(""));
    let mut probe = RunConfig::default();
    let mut out = Vec::new();
    for (key, mut value, line) in parse_entries(&text, &name)? {
        probe.set(&key, &value).map_err(|e| match e {
            Error::Config(msg) => Error::parse(&name, line, msg),
            other => other,
        })?;
        if PATH_KEYS.contains(&key.as_str()) && value != "none" && Path::new(&value).is_relative() {
            value = base.join(&value).display().to_string();
        }
        out.push((key, value));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,

    pub interactions: Option<PathBuf>,
    pub triples: Option<PathBuf>,
    pub triple_format: TripleFormat,
    pub mapping: Option<PathBuf>,

    pub setting: SettingKind,
    /// Maximum share of catalog items (percent) allowed to lack a feature.
    pub threshold: f64,
    pub exclude_noisy: bool,
    /// Only training interactions rated at least this much build user profiles.
    pub profile_min_rating: Option<f64>,

    pub split_ratio: f64,
    pub temporal: bool,
    pub relevance_threshold: Option<f64>,

    pub iterations: usize,
    pub learning_rate: f64,
    pub bias_reg: f64,
    pub user_reg: f64,
    pub pos_item_reg: f64,
    pub neg_item_reg: f64,
    pub freeze_user_factors: bool,

    pub system: String,
    pub knn: usize,
    pub cutoff: usize,
    pub random_scale: f64,
    pub factors: Option<usize>,

    pub sa_mode: SaMode,
    pub rob_mode: RobMode,
    pub max_n: usize,
    pub explain_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hyper = BprHyper::default();
        RunConfig {
            seed: 0,
            interactions: None,
            triples: None,
            triple_format: TripleFormat::Tsv,
            mapping: None,
            setting: SettingKind::Categorical,
            threshold: 100.0,
            exclude_noisy: true,
            profile_min_rating: None,
            split_ratio: 0.8,
            temporal: false,
            relevance_threshold: None,
            iterations: hyper.iterations,
            learning_rate: hyper.learning_rate,
            bias_reg: hyper.bias_reg,
            user_reg: hyper.user_reg,
            pos_item_reg: hyper.pos_item_reg,
            neg_item_reg: hyper.neg_item_reg,
            freeze_user_factors: false,
            system: "kahfm".into(),
            knn: DEFAULT_NEIGHBORS,
            cutoff: 10,
            random_scale: 0.1,
            factors: None,
            sa_mode: SaMode::PerItem,
            rob_mode: RobMode::Batch,
            max_n: 5,
            explain_k: 10,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_owned(), T::to_string)
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map_or_else(|| "none".to_owned(), |p| p.display().to_string())
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in file_overrides(path)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies config text; relative data paths resolve against `base`.
    pub fn apply_text(&mut self, text: &str, source_name: &str, base: Option<&Path>) -> Result<()> {
        for (key, value, line) in parse_entries(text, source_name)? {
            self.set(&key, &value).map_err(|e| match e {
                Error::Config(msg) => Error::parse(source_name, line, msg),
                other => other,
            })?;
        }
        if let Some(base) = base {
            for p in [&mut self.interactions, &mut self.triples, &mut self.mapping]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        self.validate()
    }

    /// Sets one `section.key` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "run.seed" => self.seed = parse(key, value)?,
            "data.interactions" => self.interactions = optional(key, value)?,
            "data.triples" => self.triples = optional(key, value)?,
            "data.format" => self.triple_format = parse(key, value)?,
            "data.mapping" => self.mapping = optional(key, value)?,
            "features.setting" => self.setting = parse(key, value)?,
            "features.threshold" => self.threshold = parse(key, value)?,
            "features.exclude_noisy" => self.exclude_noisy = parse_bool(key, value)?,
            "features.profile_min_rating" => self.profile_min_rating = optional(key, value)?,
            "split.ratio" => self.split_ratio = parse(key, value)?,
            "split.mode" => {
                self.temporal = match value {
                    "random" => false,
                    "temporal" => true,
                    _ => {
                        return Err(Error::Config(format!(
                            "split mode must be `random` or `temporal`, got `{value}`"
                        )))
                    }
                }
            }
            "split.relevance_threshold" => self.relevance_threshold = optional(key, value)?,
            "train.iterations" => self.iterations = parse(key, value)?,
            "train.learning_rate" => self.learning_rate = parse(key, value)?,
            "train.bias_reg" => self.bias_reg = parse(key, value)?,
            "train.user_reg" => self.user_reg = parse(key, value)?,
            "train.pos_item_reg" => self.pos_item_reg = parse(key, value)?,
            "train.neg_item_reg" => self.neg_item_reg = parse(key, value)?,
            "train.freeze_user_factors" => self.freeze_user_factors = parse_bool(key, value)?,
            "recommend.system" => self.system = value.to_owned(),
            "recommend.knn" => self.knn = parse(key, value)?,
            "recommend.cutoff" => self.cutoff = parse(key, value)?,
            "recommend.random_scale" => self.random_scale = parse(key, value)?,
            "recommend.factors" => self.factors = optional(key, value)?,
            "interpret.sa_mode" => self.sa_mode = value.parse()?,
            "interpret.rob_mode" => self.rob_mode = value.parse()?,
            "interpret.max_n" => self.max_n = parse(key, value)?,
            "interpret.explain_k" => self.explain_k = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must be in [0, 100], got {}",
                self.threshold
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.knn == 0 {
            return Err(Error::Config("knn must be at least 1".into()));
        }
        if self.cutoff == 0 {
            return Err(Error::Config("cutoff must be at least 1".into()));
        }
        if self.max_n == 0 {
            return Err(Error::Config("max_n must be at least 1".into()));
        }
        if self.factors == Some(0) {
            return Err(Error::Config("factors must be at least 1".into()));
        }
        self.hyper().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.split().validate()
    }

    /// Every setting as `section.key → value`, in the file's own syntax.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let pairs: Vec<(&str, String)> = vec![
            ("run.seed", self.seed.to_string()),
            ("data.interactions", show_path(&self.interactions)),
            ("data.triples", show_path(&self.triples)),
            ("data.format", self.triple_format.to_string()),
            ("data.mapping", show_path(&self.mapping)),
            ("features.setting", self.setting.short_name().to_owned()),
            ("features.threshold", self.threshold.to_string()),
            ("features.exclude_noisy", self.exclude_noisy.to_string()),
            ("features.profile_min_rating", show(&self.profile_min_rating)),
            ("split.ratio", self.split_ratio.to_string()),
            (
                "split.mode",
                if self.temporal { "temporal" } else { "random" }.to_owned(),
            ),
            ("split.relevance_threshold", show(&self.relevance_threshold)),
            ("train.iterations", self.iterations.to_string()),
            ("train.learning_rate", self.learning_rate.to_string()),
            ("train.bias_reg", self.bias_reg.to_string()),
            ("train.user_reg", self.user_reg.to_string()),
            ("train.pos_item_reg", self.pos_item_reg.to_string()),
            ("train.neg_item_reg", self.neg_item_reg.to_string()),
            ("train.freeze_user_factors", self.freeze_user_factors.to_string()),
            ("recommend.system", self.system.clone()),
            ("recommend.knn", self.knn.to_string()),
            ("recommend.cutoff", self.cutoff.to_string()),
            ("recommend.random_scale", self.random_scale.to_string()),
            ("recommend.factors", show(&self.factors)),
            ("interpret.sa_mode", self.sa_mode.to_string()),
            ("interpret.rob_mode", self.rob_mode.to_string()),
            ("interpret.max_n", self.max_n.to_string()),
            ("interpret.explain_k", self.explain_k.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
    }

    /// The config rendered as a file that [`RunConfig::from_file`] reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut current = "";
        let entries = self.entries();
        for (key, value) in &entries {
            let (section, name) = key.split_once('.').expect("sectioned key");
            if section != current {
                if !current.is_empty() {
                    s.push('\n');
                }
                let _ = writeln!(s, "[{section}]");
                current = section;
            }
            let _ = writeln!(s, "{name} = {value}");
        }
        s
    }

    /// Per-component seeds derived from the top-level seed.
    pub fn split_seed(&self) -> u64 {
        seed::derive(self.seed, "split")
    }

    pub fn train_seed(&self) -> u64 {
        seed::derive(self.seed, "train")
    }

    pub fn init_seed(&self) -> u64 {
        seed::derive(self.seed, "init")
    }

    pub fn hyper(&self) -> BprHyper {
        BprHyper {
            learning_rate: self.learning_rate,
            bias_reg: self.bias_reg,
            user_reg: self.user_reg,
            pos_item_reg: self.pos_item_reg,
            neg_item_reg: self.neg_item_reg,
            iterations: self.iterations,
            seed: self.train_seed(),
            freeze_user_factors: self.freeze_user_factors,
        }
    }

    pub fn split(&self) -> SplitConfig {
        SplitConfig {
            ratio: self.split_ratio,
            temporal: self.temporal,
            seed: self.split_seed(),
            relevance_threshold: self.relevance_threshold,
        }
    }

    pub fn enjoyed(&self) -> EnjoyedItems {
        self.profile_min_rating
            .map_or(EnjoyedItems::All, EnjoyedItems::MinRating)
    }

    pub fn systems(&self) -> SystemSettings {
        SystemSettings {
            k_nn: self.knn,
            hyper: self.hyper(),
            random_scale: self.random_scale,
            factors: self.factors,
            init_seed: self.init_seed(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let text = "seed = 3\n# c\n[train]\niterations = 30\n\n[split]\nmode = temporal\n";
        let mut cfg = RunConfig::default();
        cfg.apply_text(text, "c", None).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.iterations, 30);
        assert!(cfg.temporal);
    }

    #[test]
    fn errors_name_the_line() {
        let mut cfg = RunConfig::default();
        let err = cfg
            .apply_text("[train]\niterations = many\n", "c.cfg", None)
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(cfg.apply_text("[train]\nwhat = 1\n", "c", None).is_err());
        assert!(cfg.apply_text("[train\n", "c", None).is_err());
        assert!(cfg.apply_text("just words\n", "c", None).is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("features.threshold", "101").is_ok());
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("train.learning_rate", "0").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("split.ratio", "1").unwrap();
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().set("interpret.sa_mode", "fixed:x").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("interpret.sa_mode", "fixed:10").unwrap();
        cfg.set("split.relevance_threshold", "3.5").unwrap();
        cfg.set("features.setting", "fs").unwrap();
        cfg.set("data.interactions", "/tmp/x.tsv").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), "t", None).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("[data]\ninteractions = log.tsv\n", "c", Some(Path::new("/data/run")))
            .unwrap();
        assert_eq!(cfg.interactions, Some(PathBuf::from("/data/run/log.tsv")));
    }

    #[test]
    fn seeds_differ_per_component() {
        let cfg = RunConfig::default();
        assert_ne!(cfg.split_seed(), cfg.train_seed());
        assert_ne!(cfg.train_seed(), cfg.init_seed());
    }
}
