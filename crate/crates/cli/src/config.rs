use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use esans_core::behavior::SkipGramConfig;
use esans_core::data::SyntheticSpec;
use esans_core::ebr::EbrConfig;
use esans_core::eval::{Method, DEFAULT_KS};
use esans_core::msac::MsacConfig;

pub const RESOLVED_FILE: &str = "config.resolved.toml";
pub const DIGEST_FILE: &str = "config.sha256";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Most recent interactions per user held out for evaluation.
    pub holdout_per_user: usize,
    pub ks: Vec<usize>,
    pub methods: Vec<Method>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            holdout_per_user: 1,
            ks: DEFAULT_KS.to_vec(),
            methods: Method::ALL.into_iter().filter(|m| *m != Method::EsansSingleModality).collect(),
        }
    }
}

/// Input locations. Relative entries are taken from the config file's directory;
/// command-line flags win over these.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behavior: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msac: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub single_modality_index: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

impl Paths {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    fn entries(&mut self) -> [&mut Option<PathBuf>; 6] {
        [&mut self.data, &mut self.behavior, &mut self.msac, &mut self.index, &mut self.single_modality_index, &mut self.model]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, every stage seed is derived from it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub synthetic: SyntheticSpec,
    pub behavior: SkipGramConfig,
    pub msac: MsacConfig,
    pub ebr: EbrConfig,
    pub eval: EvalConfig,
    #[serde(skip_serializing_if = "Paths::is_empty")]
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub errors: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.errors.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "config error: {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn one(msg: impl Into<String>) -> Self {
        Self { errors: vec![msg.into()] }
    }
}

impl RunConfig {
    /// Parses TOML text, reporting the key path of the first unreadable value.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            if path.is_empty() || path == "." {
                ConfigError::one(msg)
            } else {
                ConfigError::one(format!("{path}: {msg}"))
            }
        })
    }

    /// Reads, seeds and validates a config file, resolving relative paths.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::one(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for p in cfg.paths.entries() {
            if let Some(rel) = p.as_ref().filter(|p| p.is_relative()) {
                *p = Some(base.join(rel));
            }
        }
        cfg.apply_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.synthetic.seed = s;
            self.behavior.seed = s.wrapping_add(1);
            self.msac.seed = s.wrapping_add(2);
            self.ebr.seed = s.wrapping_add(3);
            self.ebr.sampler.seed = s.wrapping_add(4);
            self.ebr.interpolation.seed = s.wrapping_add(5);
        }
    }

    /// Every violated invariant, each prefixed by its key path.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut add = |section: &str, list: Vec<(String, String)>| out.extend(list.into_iter().map(|(k, m)| format!("{section}.{k} {m}")));
        let owned = |v: Vec<(&'static str, String)>| v.into_iter().map(|(k, m)| (k.to_string(), m)).collect();
        add("synthetic", owned(self.synthetic.violations()));
        add("behavior", owned(self.behavior.violations()));
        add("msac", owned(self.msac.violations()));
        add("ebr", self.ebr.violations());
        let mut eval = Vec::new();
        if self.eval.holdout_per_user == 0 {
            eval.push(("holdout_per_user".to_string(), "must be at least 1".to_string()));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            eval.push(("ks".to_string(), "must be a non-empty list of positive values".to_string()));
        }
        add("eval", eval);
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let errors = self.violations();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { errors })
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

pub fn digest(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

/// Writes the resolved config and its digest into `dir`; returns the digest.
pub fn echo(dir: &Path, cfg: &RunConfig) -> std::io::Result<String> {
    fs::create_dir_all(dir)?;
    let text = cfg.to_toml();
    let d = digest(&text);
    fs::write(dir.join(RESOLVED_FILE), &text)?;
    fs::write(dir.join(DIGEST_FILE), format!("{d}\n"))?;
    Ok(d)
}
