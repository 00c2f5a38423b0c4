//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wikitox::analytics::CountBucket;
use wikitox::corpus::DiffOptions;
use wikitox::eval::EnsembleBaselineConfig;
use wikitox::labels::SplitRatio;
use wikitox::model::{Objective, SearchSpace};
use wikitox::synth::SynthConfig;
use wikitox::{FeatureSpec, Hyperparameters, LabelType, ModelKind};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub revisions: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub moderation: Option<PathBuf>,
    pub bot_rules: Option<PathBuf>,
    pub admin_rules: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelsSection {
    /// Minimum gold accuracy for a worker to be kept; gating needs `paths.gold`.
    pub gold_min_accuracy: f64,
    /// Compute agreement on the ingested rather than the cleaned annotations.
    pub alpha_before_cleaning: bool,
    pub split: SplitRatio,
    /// Comments with at least this many annotations form the baseline set.
    pub baseline_min_annotations: u32,
}

impl Default for LabelsSection {
    fn default() -> Self {
        LabelsSection {
            gold_min_accuracy: 0.7,
            alpha_before_cleaning: false,
            split: SplitRatio::default(),
            baseline_min_annotations: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub label_type: LabelType,
    /// Used by `train`; `tune` searches instead.
    pub hyperparameters: Hyperparameters,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: ModelKind::LogisticRegression,
            label_type: LabelType::Empirical,
            hyperparameters: Hyperparameters::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub objective: Objective,
    /// The space's own `seed` is replaced by the stage seed.
    pub space: SearchSpace,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            objective: Objective::Auc,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub splits: Vec<String>,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        CalibrateSection {
            splits: vec!["dev".into(), "test".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSection {
    pub chunk_size: usize,
    pub parallel: bool,
}

impl Default for ScoreSection {
    fn default() -> Self {
        ScoreSection {
            chunk_size: 4096,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub resamples: usize,
    pub level: f64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection {
            resamples: 1000,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsSection {
    pub year: i32,
    pub activity_buckets: Vec<CountBucket>,
    pub toxicity_buckets: Vec<CountBucket>,
    pub bootstrap: BootstrapSection,
    pub window_days: u32,
    pub naf_n: Vec<usize>,
    /// Word n-grams whose presence defines extra prevalence groups.
    pub ngrams: Vec<String>,
}

impl Default for AnalyticsSection {
    fn default() -> Self {
        AnalyticsSection {
            year: 2015,
            activity_buckets: CountBucket::default_activity(),
            toxicity_buckets: CountBucket::default_toxicity(),
            bootstrap: BootstrapSection::default(),
            window_days: 7,
            naf_n: vec![1, 3, 5],
            ngrams: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    pub paths: Paths,
    pub corpus: DiffOptions,
    pub labels: LabelsSection,
    pub features: FeatureSpec,
    pub model: ModelSection,
    pub search: SearchSection,
    pub baseline: EnsembleBaselineConfig,
    pub calibrate: CalibrateSection,
    pub score: ScoreSection,
    pub analytics: AnalyticsSection,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: Paths::default(),
            corpus: DiffOptions::default(),
            labels: LabelsSection::default(),
            features: FeatureSpec::char(),
            model: ModelSection::default(),
            search: SearchSection::default(),
            baseline: EnsembleBaselineConfig::default(),
            calibrate: CalibrateSection::default(),
            score: ScoreSection::default(),
            analytics: AnalyticsSection::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn defaults_toml() -> String {
        toml::to_string_pretty(&PipelineConfig::default()).expect("default config serializes")
    }

    /// Parse a config file. Relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            key: None,
            message: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for v in [
            &mut p.revisions,
            &mut p.annotations,
            &mut p.gold,
            &mut p.moderation,
            &mut p.bot_rules,
            &mut p.admin_rules,
            &mut p.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if v.is_relative() {
                *v = base.join(&*v);
            }
        }
        Ok(cfg)
    }

    /// A required path, or a configuration error naming its key.
    pub fn require(&self, key: &'static str) -> Result<&Path, CliError> {
        let p = &self.paths;
        let v = match key {
            "paths.revisions" => &p.revisions,
            "paths.annotations" => &p.annotations,
            "paths.gold" => &p.gold,
            "paths.moderation" => &p.moderation,
            "paths.bot_rules" => &p.bot_rules,
            "paths.admin_rules" => &p.admin_rules,
            "paths.output_dir" => &p.output_dir,
            _ => unreachable!("unknown path key {key}"),
        };
        v.as_deref().ok_or(CliError::Config {
            key: Some(key),
            message: "required key is missing".into(),
        })
    }
}
