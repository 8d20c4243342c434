use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::generate::{GenerationParams, TemplateId};
use crate::lang::Language;
use crate::mutate::{MutationType, DEFAULT_SEED};
use crate::retrieve::DEFAULT_K;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Baseline,
    Injection,
    Doc,
    DocNoNl,
    Attack,
}

impl Setting {
    pub fn id(self) -> &'static str {
        match self {
            Setting::Baseline => "baseline",
            Setting::Injection => "injection",
            Setting::Doc => "doc",
            Setting::DocNoNl => "doc-no-nl",
            Setting::Attack => "attack",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Setting {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        [Setting::Baseline, Setting::Injection, Setting::Doc, Setting::DocNoNl, Setting::Attack]
            .into_iter()
            .find(|x| x.id() == norm || (norm == "docnonl" && *x == Setting::DocNoNl))
            .ok_or_else(|| ExperimentError::InvalidConfig(format!("unknown setting `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverKind {
    Oracle,
    Sparse,
    Embedding,
}

impl RetrieverKind {
    pub fn id(self) -> &'static str {
        match self {
            RetrieverKind::Oracle => "oracle",
            RetrieverKind::Sparse => "sparse",
            RetrieverKind::Embedding => "embedding",
        }
    }
}

impl std::str::FromStr for RetrieverKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle" => Ok(RetrieverKind::Oracle),
            "sparse" | "bm25" => Ok(RetrieverKind::Sparse),
            "embedding" | "dense" => Ok(RetrieverKind::Embedding),
            _ => Err(ExperimentError::InvalidConfig(format!("unknown retriever `{s}`"))),
        }
    }
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// One cell of an experiment: a setting applied to one (source, target)
/// language pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setting: Setting,
    #[serde(default)]
    pub source_language: Option<Language>,
    pub target_language: Language,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub mutation: Option<MutationType>,
    #[serde(default)]
    pub retriever: Option<RetrieverKind>,
    pub generation: GenerationParams,
    /// Prompt size cap in characters; lowest-ranked context is dropped to
    /// fit.
    #[serde(default)]
    pub prompt_budget_chars: Option<usize>,
}

impl ExperimentConfig {
    pub fn baseline(target: Language, generation: GenerationParams) -> Self {
        ExperimentConfig {
            setting: Setting::Baseline,
            source_language: None,
            target_language: target,
            k: DEFAULT_K,
            seed: DEFAULT_SEED,
            mutation: None,
            retriever: None,
            generation,
            prompt_budget_chars: None,
        }
    }

    /// Fills defaults implied by the setting (Injection always uses the
    /// oracle retriever) and checks the remaining invariants.
    pub fn normalized(mut self) -> Result<Self, ExperimentError> {
        if self.setting == Setting::Injection {
            self.retriever = Some(RetrieverKind::Oracle);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidConfig(format!("{}: {m}", self.setting)));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        match self.setting {
            Setting::Baseline => {
                if self.source_language.is_some() || self.retriever.is_some() {
                    return bad("baseline takes no source language or retriever");
                }
            }
            _ => {
                if self.source_language.is_none() {
                    return bad("a source language is required");
                }
                if self.retriever.is_none() {
                    return bad("a retriever is required");
                }
            }
        }
        if self.setting == Setting::Injection && self.retriever != Some(RetrieverKind::Oracle) {
            return bad("injection uses the oracle retriever");
        }
        match (self.setting, self.mutation) {
            (Setting::Attack, None) => bad("attack requires a mutation"),
            (s, Some(_)) if s != Setting::Attack => bad("only attack cells take a mutation"),
            _ => Ok(()),
        }
    }

    pub fn template_id(&self) -> TemplateId {
        if self.setting == Setting::Baseline {
            TemplateId::BaselineV1
        } else {
            TemplateId::RacgV1
        }
    }

    /// The clean cell an attack perturbs: same pair and retriever, Doc
    /// setting.
    pub fn clean_counterpart(&self) -> Option<ExperimentConfig> {
        (self.setting == Setting::Attack).then(|| ExperimentConfig {
            setting: if self.retriever == Some(RetrieverKind::Oracle) {
                Setting::Injection
            } else {
                Setting::Doc
            },
            mutation: None,
            ..self.clone()
        })
    }

    /// Short label, e.g. `attack/sparse/logical/python->java`.
    pub fn label(&self) -> String {
        let mut parts = vec![self.setting.id().to_string()];
        if let Some(r) = self.retriever {
            parts.push(r.id().to_string());
        }
        if let Some(m) = self.mutation {
            parts.push(m.id().to_string());
        }
        let pair = match self.source_language {
            Some(s) => format!("{}->{}", s.id(), self.target_language.id()),
            None => self.target_language.id().to_string(),
        };
        parts.push(pair);
        parts.join("/")
    }
}

/// A setting to be expanded over the language matrix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellTemplate {
    pub setting: Setting,
    #[serde(default)]
    pub retriever: Option<RetrieverKind>,
    #[serde(default)]
    pub mutation: Option<MutationType>,
}

impl CellTemplate {
    /// Name of the results table this template fills.
    pub fn table_name(&self) -> String {
        let mut s = self.setting.id().to_string();
        if let Some(r) = self.retriever.filter(|_| self.setting != Setting::Injection) {
            s.push('/');
            s.push_str(r.id());
        }
        if let Some(m) = self.mutation {
            s.push('/');
            s.push_str(m.id());
        }
        s
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub endpoint: String,
    #[serde(default)]
    pub timeout_s: Option<f64>,
}

/// Matrix configuration, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub languages: Vec<Language>,
    pub settings: Vec<CellTemplate>,
    /// Also run source = target cells.
    #[serde(default)]
    pub include_mono: bool,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub prompt_budget_chars: Option<usize>,
    pub generation: GenerationParams,
    #[serde(default)]
    pub embedding: Option<EmbeddingConfig>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl MatrixConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: MatrixConfig = toml::from_str(text).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn check(&self) -> Result<(), ExperimentError> {
        if self.languages.is_empty() {
            return Err(ExperimentError::InvalidConfig("no languages".into()));
        }
        let distinct: BTreeSet<Language> = self.languages.iter().copied().collect();
        if distinct.len() != self.languages.len() {
            return Err(ExperimentError::InvalidConfig("duplicate language".into()));
        }
        for t in &self.settings {
            self.expand(t, self.languages[0], Some(self.languages[0]))?;
        }
        Ok(())
    }

    /// The concrete cell config for a template and language pair.
    pub fn expand(
        &self,
        template: &CellTemplate,
        target: Language,
        source: Option<Language>,
    ) -> Result<ExperimentConfig, ExperimentError> {
        ExperimentConfig {
            setting: template.setting,
            source_language: if template.setting == Setting::Baseline { None } else { source },
            target_language: target,
            k: self.k,
            seed: self.seed,
            mutation: template.mutation,
            retriever: if template.setting == Setting::Baseline { None } else { template.retriever },
            generation: self.generation.clone(),
            prompt_budget_chars: self.prompt_budget_chars,
        }
        .normalized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen() -> GenerationParams {
        GenerationParams::new("m", "http://localhost:1")
    }

    #[test]
    fn invariants() {
        let base = ExperimentConfig::baseline(Language::Go, gen());
        base.validate().unwrap();
        let mut bad = base.clone();
        bad.retriever = Some(RetrieverKind::Sparse);
        assert!(bad.validate().is_err());

        let inj = ExperimentConfig {
            setting: Setting::Injection,
            source_language: Some(Language::Java),
            retriever: Some(RetrieverKind::Sparse),
            ..base.clone()
        };
        assert_eq!(inj.normalized().unwrap().retriever, Some(RetrieverKind::Oracle));

        let attack = ExperimentConfig {
            setting: Setting::Attack,
            source_language: Some(Language::Java),
            retriever: Some(RetrieverKind::Sparse),
            ..base
        };
        assert!(attack.validate().is_err());
        let attack = ExperimentConfig {
            mutation: Some(MutationType::Syntax),
            ..attack
        };
        attack.validate().unwrap();
        assert_eq!(attack.clean_counterpart().unwrap().setting, Setting::Doc);
        assert_eq!(attack.label(), "attack/sparse/syntax/java->go");
    }

    #[test]
    fn matrix_toml() {
        let cfg = MatrixConfig::from_toml_str(
            r#"
            languages = ["python", "java"]
            jobs = 2
            [generation]
            model_name = "m"
            endpoint = "http://localhost:8000/v1"
            [[settings]]
            setting = "doc"
            retriever = "sparse"
            [[settings]]
            setting = "attack"
            retriever = "sparse"
            mutation = "LogicalKeyword"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.settings[1].table_name(), "attack/sparse/logical");

        let err = MatrixConfig::from_toml_str(
            r#"
            languages = ["python"]
            [generation]
            model_name = "m"
            endpoint = "e"
            [[settings]]
            setting = "attack"
            retriever = "sparse"
            "#,
        );
        assert!(err.is_err());
    }
}
