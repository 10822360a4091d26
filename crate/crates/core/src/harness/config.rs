//! Experiment configuration, read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::synth::{self, SynthKind};
use crate::classifiers::ClassifierSpec;
use crate::crowd::{PbaConfig, WorkerModel};
use crate::dataset::{assign_subgroups, binarize_labels, parse_dataset, BinarizePolicy, CsvSchema, Dataset};
use crate::error::{Error, Result};
use crate::loops::{Aggregation, LoopConfig, Scenario, VotePolicy};
use crate::metrics::Metric;
use crate::rankers::{MinExpErrorParams, RankerKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub seed: u64,
}

/// Where items come from. Exactly one of `path` and `synthetic`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// CSV file, relative to the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SynthSpec>,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default)]
    pub subgroup_column: Option<String>,
    /// Defaults to majority-vs-rest for files and to the named positive
    /// class for synthetic data.
    #[serde(default)]
    pub binarize: Option<BinarizePolicy>,
    /// Hash items without a subgroup into this many groups.
    #[serde(default)]
    pub subgroups: Option<u32>,
}

fn default_label_column() -> String {
    "class".into()
}

/// Who answers the questions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum AnswerConfig {
    /// Every answer is the gold label.
    #[default]
    Gold,
    /// Simulated workers; the seed is re-derived per repetition.
    Simulated(WorkerModel),
    /// Human answers through files, relative to the config file.
    FileQueue {
        questions: PathBuf,
        answers: PathBuf,
        #[serde(default = "default_poll_ms")]
        poll_ms: u64,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
}

fn default_poll_ms() -> u64 {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PbaVotes {
    /// The vote budget of a cell is `round(votes_per_question * B)`.
    pub votes_per_question: f64,
    #[serde(default)]
    pub allocator: PbaConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum VoteConfig {
    Fixed(u32),
    Pba(PbaVotes),
}

impl Default for VoteConfig {
    fn default() -> Self {
        VoteConfig::Fixed(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub dataset: DatasetConfig,
    #[serde(default = "default_initial_fraction")]
    pub initial_fraction: f64,
    #[serde(default)]
    pub test_fraction: f64,
    #[serde(default)]
    pub classifier: ClassifierSpec,
    pub scenario: Scenario,
    pub rankers: Vec<RankerKind>,
    /// Question budgets as fractions of the unlabeled pool.
    pub budgets: Vec<f64>,
    /// Questions per iterative round; default is 10% of the budget.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub answers: AnswerConfig,
    #[serde(default)]
    pub votes: VoteConfig,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default)]
    pub min_exp_error: MinExpErrorParams,
    #[serde(default = "default_quality_folds")]
    pub quality_folds: usize,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    pub repetitions: usize,
    pub master_seed: u64,
    /// Relative to the config file; default `results`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_initial_fraction() -> f64 {
    0.03
}

fn default_ensemble_size() -> usize {
    crate::bootstrap::DEFAULT_ENSEMBLE_SIZE
}

fn default_quality_folds() -> usize {
    5
}

fn default_metric() -> Metric {
    Metric::F1
}

impl ExperimentConfig {
    /// Parse, resolve relative paths against the file's directory and validate.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.dataset.path {
            join(p);
        }
        if let AnswerConfig::FileQueue { questions, answers, .. } = &mut self.answers {
            join(questions);
            join(answers);
        }
        let mut out = self.output_dir.take().unwrap_or_else(|| PathBuf::from("results"));
        join(&mut out);
        self.output_dir = Some(out);
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match (&self.dataset.path, &self.dataset.synthetic) {
            (Some(p), None) => {
                if !p.is_file() {
                    return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
                }
            }
            (None, Some(s)) => {
                if s.n < 2 {
                    return Err(Error::Config("synthetic dataset needs n >= 2".into()));
                }
            }
            _ => return Err(Error::Config("dataset needs exactly one of `path` and `synthetic`".into())),
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.rankers.is_empty() {
            return Err(Error::Config("at least one ranker is required".into()));
        }
        if self.budgets.is_empty() {
            return Err(Error::Config("at least one budget is required".into()));
        }
        if let Some(b) = self.budgets.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return Err(Error::Config(format!("budget {b} not in (0,1]")));
        }
        if self.dataset.subgroups == Some(0) {
            return Err(Error::Config("dataset.subgroups must be at least 1".into()));
        }
        match &self.answers {
            AnswerConfig::Simulated(w) => w.validate()?,
            AnswerConfig::FileQueue { poll_ms: 0, .. } => {
                return Err(Error::Config("file-queue poll_ms must be positive".into()))
            }
            _ => {}
        }
        if let VoteConfig::Pba(p) = &self.votes {
            if !(p.votes_per_question >= 1.0) {
                return Err(Error::Config("votes_per_question must be at least 1".into()));
            }
        }
        self.classifier.validate()?;
        self.loop_config(0).validate()
    }

    /// Loop settings for a cell whose unlabeled pool gets `questions` questions.
    pub fn loop_config(&self, questions: usize) -> LoopConfig {
        let votes = match &self.votes {
            VoteConfig::Fixed(b) => VotePolicy::Fixed(*b),
            VoteConfig::Pba(p) => VotePolicy::Pba(PbaConfig {
                vote_budget: (p.votes_per_question * questions as f64).round() as u64,
                ..p.allocator.clone()
            }),
        };
        LoopConfig {
            ensemble_size: self.ensemble_size,
            batch_size: self.batch_size,
            min_exp_error: self.min_exp_error,
            votes,
            aggregation: self.aggregation,
            quality_folds: self.quality_folds,
            metric: self.metric,
        }
    }

    /// Load, binarize and (when asked or needed) bucket the dataset.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let (raw, default_policy) = match (&self.dataset.path, &self.dataset.synthetic) {
            (Some(p), _) => {
                let schema = CsvSchema {
                    label_column: Some(self.dataset.label_column.clone()),
                    subgroup_column: self.dataset.subgroup_column.clone(),
                };
                (parse_dataset(p, &schema)?, BinarizePolicy::MajorityVsRest)
            }
            (None, Some(s)) => (synth::generate(s.kind, s.n, s.seed)?, synth::binarize_policy()),
            (None, None) => return Err(Error::Config("no dataset".into())),
        };
        let policy = self.dataset.binarize.clone().unwrap_or(default_policy);
        let mut ds = binarize_labels(&raw, &policy)?;
        let groups = self.dataset.subgroups.or(match &self.votes {
            VoteConfig::Pba(p) => Some(p.allocator.groups),
            VoteConfig::Fixed(_) => None,
        });
        if let Some(g) = groups {
            ds = assign_subgroups(&ds, g)?;
        }
        Ok(ds)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
