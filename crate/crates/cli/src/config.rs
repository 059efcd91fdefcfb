//! Engine configuration file.
//!
//! TOML, versioned by a top-level `version` key. Relative paths resolve
//! against the directory holding the config file. A `preset` key in
//! `[train]` supplies defaults that the other keys of that table override.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use verse_core::corpus::{CoocScope, Mode};
use verse_core::fluency::{Check, FluencyThresholds, DEFAULT_K_MAX, DEFAULT_PERCENTILE, DEFAULT_SKIP_ALPHA};
use verse_core::generator::GenerationConfig;
use verse_core::keywords::KeywordConfig;
use verse_core::langmodel::TrainConfig;

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    Ngram,
    Recurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<PathBuf>,
    #[serde(default = "default_model_dir")]
    pub model_dir: PathBuf,
}

fn default_model_dir() -> PathBuf {
    PathBuf::from("models")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NgramSection {
    pub order: usize,
    pub alpha: f64,
}

impl Default for NgramSection {
    fn default() -> Self {
        NgramSection {
            order: 3,
            alpha: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(flatten)]
    pub params: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            preset: None,
            params: TrainConfig::desk(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluencySection {
    pub checks: Vec<Check>,
    /// Derive thresholds from corpus percentiles at training time.
    pub calibrate: bool,
    pub percentile: f64,
    /// Used when `calibrate` is false.
    pub thresholds: FluencyThresholds,
    pub k_max: usize,
    pub skip_alpha: f64,
}

impl Default for FluencySection {
    fn default() -> Self {
        FluencySection {
            checks: vec![Check::Ngram, Check::Skipgram],
            calibrate: true,
            percentile: DEFAULT_PERCENTILE,
            thresholds: FluencyThresholds::default(),
            k_max: DEFAULT_K_MAX,
            skip_alpha: DEFAULT_SKIP_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub cooccurrence_scope: CoocScope,
    pub paths: Paths,
    #[serde(default)]
    pub ngram: NgramSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub keywords: KeywordConfig,
    #[serde(default)]
    pub fluency: FluencySection,
}

fn default_seed() -> u64 {
    1
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub strategy: Option<verse_core::keywords::Strategy>,
    pub lines: Option<usize>,
    pub top_n: Option<usize>,
    pub max_len: Option<usize>,
    pub model_dir: Option<PathBuf>,
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let mut value: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let version = value.get("version").and_then(|v| v.as_integer());
        if version != Some(CONFIG_VERSION as i64) {
            return Err(CliError::Config(format!(
                "unsupported config version {version:?}, expected {CONFIG_VERSION}"
            )));
        }
        if let Some(toml::Value::Table(train)) = value.get_mut("train") {
            if let Some(name) = train.get("preset").and_then(|p| p.as_str()) {
                let preset = TrainConfig::preset(name)?;
                let toml::Value::Table(mut base) = toml::Value::try_from(&preset)
                    .map_err(|e| CliError::Config(e.to_string()))?
                else {
                    unreachable!("a struct serializes to a table")
                };
                for (k, v) in std::mem::take(train) {
                    base.insert(k, v);
                }
                *train = base;
            }
        }
        let config: EngineConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut config.paths;
        p.corpus = base.join(&p.corpus);
        p.pos_corpus = p.pos_corpus.as_ref().map(|x| base.join(x));
        p.tags = p.tags.as_ref().map(|x| base.join(x));
        p.model_dir = base.join(&p.model_dir);
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(s) = o.strategy {
            self.keywords.strategy = s;
        }
        if let Some(n) = o.lines {
            self.generation.lines = n;
            self.keywords.n = n;
        }
        if let Some(n) = o.top_n {
            self.generation.top_n = n;
        }
        if let Some(n) = o.max_len {
            self.generation.max_len = n;
        }
        if let Some(d) = &o.model_dir {
            self.paths.model_dir = d.clone();
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.params.validate()?;
        self.generation.validate()?;
        self.keywords.validate()?;
        if self.keywords.n != self.generation.lines {
            return Err(CliError::Config(format!(
                "keywords.n ({}) differs from generation.lines ({})",
                self.keywords.n, self.generation.lines
            )));
        }
        if self.ngram.order == 0 || self.ngram.alpha.is_nan() || self.ngram.alpha <= 0.0 {
            return Err(CliError::Config("ngram.order and ngram.alpha must be positive".into()));
        }
        if self.fluency.checks.is_empty() {
            return Err(CliError::Config("fluency.checks is empty".into()));
        }
        if self.fluency.checks.contains(&Check::Pos) && self.paths.pos_corpus.is_none() {
            return Err(CliError::Config("the pos check needs paths.pos_corpus".into()));
        }
        if self.family == Family::Ngram
            && self.generation.conditioning != verse_core::langmodel::Conditioning::None
        {
            return Err(CliError::Config(
                "n-gram models cannot be conditioned; use family = \"recurrent\"".into(),
            ));
        }
        Ok(())
    }

    /// Training config with the global seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.params.clone()
        }
    }

    /// Generation config with the global seed applied.
    pub fn generation_config(&self) -> GenerationConfig {
        GenerationConfig {
            seed: self.seed,
            ..self.generation
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "version = 1\n[paths]\ncorpus = \"c.txt\"\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = EngineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.train.params, TrainConfig::desk());
        assert_eq!(c.keywords, KeywordConfig::default());
        assert_eq!(c.paths.model_dir, PathBuf::from("models"));
    }

    #[test]
    fn round_trip_is_lossless() {
        let text = format!("{MINIMAL}[train]\npreset = \"paper-scale\"\nepochs = 2\n[generation]\ntop_n = 1\n");
        let c = EngineConfig::from_toml(&text).unwrap();
        assert_eq!(c.train.params.hidden, 1024);
        assert_eq!(c.train.params.epochs, 2);
        let again = EngineConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(EngineConfig::from_toml("version = 2\n[paths]\ncorpus = \"c\"\n").is_err());
        assert!(EngineConfig::from_toml(&format!("{MINIMAL}bogus = 1\n")).is_err());
        assert!(EngineConfig::from_toml(&format!("{MINIMAL}[train]\npreset = \"huge\"\n")).is_err());
        assert!(EngineConfig::from_toml(&format!("{MINIMAL}[keywords]\nn = 3\n")).is_err());
        let cond = format!("{MINIMAL}[generation]\nconditioning = \"hierarchical\"\n");
        assert!(EngineConfig::from_toml(&cond).is_err());
        let ok = format!("family = \"recurrent\"\n{cond}");
        assert!(EngineConfig::from_toml(&ok).is_ok());
    }
}
