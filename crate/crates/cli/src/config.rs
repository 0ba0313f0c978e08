//! Pipeline configuration: one TOML document, environment overrides for the
//! service URL and seed, then command-line flags on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use precondforge_core::corpus::{CorpusFormat, Prefilter};
use precondforge_core::nliconvert::{Lexicalization, DEFAULT_RATIOS};
use precondforge_core::patterns::DEFAULT_PRECISION_THRESHOLD;
use precondforge_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const ENV_SERVICE_URL: &str = "PRECONDFORGE_SERVICE_URL";
pub const ENV_SEED: &str = "PRECONDFORGE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Lexicon,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub paths: Vec<PathBuf>,
    pub format: CorpusFormat,
    pub source: String,
    pub prefilter: Prefilter,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            paths: Vec::new(),
            format: CorpusFormat::Text,
            source: "corpus".into(),
            prefilter: Prefilter::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternConfig {
    /// `"builtin"` or a path to a registry TOML file.
    pub registry: String,
    pub precision_threshold: f64,
    /// LFs switched on regardless of the threshold.
    pub enable: Vec<String>,
    pub drop_questions: bool,
    pub require_verb: bool,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            registry: "builtin".into(),
            precision_threshold: DEFAULT_PRECISION_THRESHOLD,
            enable: Vec::new(),
            drop_questions: true,
            require_verb: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub per_mask: usize,
    pub per_statement: usize,
    pub request_top_k: usize,
    pub placeholder: String,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let d = precondforge_core::augment::AugmentConfig::default();
        AugmentSection {
            per_mask: d.per_mask,
            per_statement: d.per_statement,
            request_top_k: d.request_top_k,
            placeholder: d.placeholder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    /// Falls back to the global seed.
    pub seed: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratios: DEFAULT_RATIOS, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
    pub tagger: Backend,
    pub filler: Backend,
    /// Lexicon file for the lexicon tagger and filler; bundled when unset.
    pub lexicon: Option<PathBuf>,
    pub service_url: String,
    pub corpus: CorpusConfig,
    pub patterns: PatternConfig,
    pub augment: AugmentSection,
    pub split: SplitConfig,
    /// Extra or replacement ANION relation prefixes.
    pub anion_lexicalization: BTreeMap<String, String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: 0,
            tagger: Backend::Lexicon,
            filler: Backend::Lexicon,
            lexicon: None,
            service_url: "http://127.0.0.1:8000".into(),
            corpus: CorpusConfig::default(),
            patterns: PatternConfig::default(),
            augment: AugmentSection::default(),
            split: SplitConfig::default(),
            anion_lexicalization: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }

    /// Applies environment overrides from `lookup` (normally `std::env::var`).
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(url) = lookup(ENV_SERVICE_URL) {
            self.service_url = url;
        }
        if let Some(seed) = lookup(ENV_SEED) {
            self.seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_SEED}={seed:?} is not a 64-bit unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.patterns.precision_threshold;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("precision_threshold {t} is outside [0, 1]")));
        }
        let r = self.split.ratios;
        if r.iter().any(|x| !(0.0..=1.0).contains(x)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {r:?} must lie in [0, 1] and sum to 1")));
        }
        self.augment_config().validate()
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or(self.seed)
    }

    pub fn augment_config(&self) -> precondforge_core::augment::AugmentConfig {
        precondforge_core::augment::AugmentConfig {
            per_mask: self.augment.per_mask,
            per_statement: self.augment.per_statement,
            request_top_k: self.augment.request_top_k,
            placeholder: self.augment.placeholder.clone(),
            seed: self.seed,
        }
    }

    pub fn lexicalization(&self) -> Lexicalization {
        let mut lex = Lexicalization::default();
        lex.0.extend(self.anion_lexicalization.clone());
        lex
    }

    /// Canonical TOML form; its digest identifies the run configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
