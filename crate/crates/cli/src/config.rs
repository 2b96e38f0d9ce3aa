//! Experiment configuration file (TOML).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kgreplay::augment::{AugmentConfig, AugmentStrategy};
use kgreplay::continual::{Approach, ExperimentConfig};
use kgreplay::data::{RecordFormat, StreamSpec, SyntheticSpec, TaskOrder, DEFAULT_TRAIN_CAP};
use kgreplay::kb::Predicate;
use kgreplay::learner::{encoder_from_descriptor, TrainConfig, DEFAULT_ENCODER_DIM};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub approach: Approach,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Run directory; `--out` overrides it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_encoder")]
    pub encoder: String,
    /// Knowledge graph JSON written by `kb-build` or `kb-score`.
    #[serde(default)]
    pub kb: Option<PathBuf>,
    /// Definition relevance model used to score `kb` before the run.
    #[serde(default)]
    pub semantic_model: Option<PathBuf>,
    /// Write a model checkpoint after every stage.
    #[serde(default = "yes")]
    pub checkpoints: bool,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub stream: StreamSection,
    #[serde(default)]
    pub buffer: BufferSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub ablation: AblationSection,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_encoder() -> String {
    format!("hashed:{DEFAULT_ENCODER_DIM}")
}

fn yes() -> bool {
    true
}

/// Either a record file or the built-in synthetic drift generator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Inferred from the file extension when absent.
    #[serde(default)]
    pub format: Option<RecordFormat>,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    /// Generator seed for `synthetic`.
    #[serde(default)]
    pub synthetic_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSection {
    /// Task order by target name; empty means sorted (or shuffled with `order_seed`).
    #[serde(default)]
    pub order: Vec<String>,
    #[serde(default)]
    pub order_seed: Option<u64>,
    /// Maximum training instances per task; 0 disables the cap.
    #[serde(default = "default_cap")]
    pub train_cap: usize,
    #[serde(default)]
    pub cap_seed: u64,
}

fn default_cap() -> usize {
    DEFAULT_TRAIN_CAP
}

impl Default for StreamSection {
    fn default() -> Self {
        StreamSection {
            order: Vec::new(),
            order_seed: None,
            train_cap: DEFAULT_TRAIN_CAP,
            cap_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferSection {
    #[serde(default = "default_capacity")]
    pub capacity: usize,
}

fn default_capacity() -> usize {
    500
}

impl Default for BufferSection {
    fn default() -> Self {
        BufferSection {
            capacity: default_capacity(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub replace_prob: f64,
    pub predicates: Vec<Predicate>,
    pub copies_per_instance: usize,
    pub deviant_labels: BTreeSet<String>,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let d = AugmentConfig::default();
        AugmentSection {
            replace_prob: d.replace_prob,
            predicates: d.predicates,
            copies_per_instance: d.copies_per_instance,
            deviant_labels: ["hateful", "offensive"].map(String::from).into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub replay_weight: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
            patience: d.patience,
            weight_decay: d.weight_decay,
            replay_weight: d.replay_weight,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSection {
    pub pre_selection_augmentation: bool,
    pub pre_learning_augmentation: bool,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            pre_selection_augmentation: true,
            pre_learning_augmentation: true,
        }
    }
}

fn absolutize(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg =
            Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = std::path::absolute(&base).unwrap_or(base);
        absolutize(&base, &mut cfg.dataset.path);
        absolutize(&base, &mut cfg.kb);
        absolutize(&base, &mut cfg.semantic_model);
        absolutize(&base, &mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("`seeds` must list at least one seed");
        }
        let unique: BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            bail!("`seeds` contains duplicates");
        }
        encoder_from_descriptor(&self.encoder)?;
        match (&self.dataset.path, &self.dataset.synthetic) {
            (Some(_), Some(_)) => {
                bail!("set either `dataset.path` or `dataset.synthetic`, not both")
            }
            (None, None) => bail!("`dataset.path` or `dataset.synthetic` is required"),
            (Some(p), None) => {
                if !p.is_file() {
                    bail!("dataset {} does not exist", p.display());
                }
                if self.dataset.format.is_none() && RecordFormat::from_path(p).is_none() {
                    bail!(
                        "cannot infer the format of {}; set `dataset.format`",
                        p.display()
                    );
                }
            }
            (None, Some(_)) => {}
        }
        for (name, p) in [("kb", &self.kb), ("semantic_model", &self.semantic_model)] {
            if let Some(p) = p {
                if !p.is_file() {
                    bail!("{name} {} does not exist", p.display());
                }
            }
        }
        if self.stream.order_seed.is_some() && !self.stream.order.is_empty() {
            bail!("`stream.order` and `stream.order_seed` are mutually exclusive");
        }
        if self.approach.augmentation().is_some()
            && self.kb.is_none()
            && self.dataset.synthetic.is_none()
        {
            bail!(
                "{} needs `kb` (or a synthetic dataset with its companion graph)",
                self.approach
            );
        }
        if self.semantic_model.is_some() && self.kb.is_none() {
            bail!("`semantic_model` scores `kb`, which is not set");
        }
        let experiment = self.experiment();
        experiment.train.validate()?;
        experiment.augment.validate()?;
        Ok(())
    }

    pub fn stream_spec(&self) -> StreamSpec {
        let order = if !self.stream.order.is_empty() {
            TaskOrder::Explicit {
                targets: self.stream.order.clone(),
            }
        } else if let Some(seed) = self.stream.order_seed {
            TaskOrder::Shuffled { seed }
        } else {
            TaskOrder::Sorted
        };
        StreamSpec {
            order,
            train_cap: (self.stream.train_cap > 0).then_some(self.stream.train_cap),
            cap_seed: self.stream.cap_seed,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let t = &self.train;
        let a = &self.augment;
        ExperimentConfig {
            train: TrainConfig {
                learning_rate: t.learning_rate,
                batch_size: t.batch_size,
                max_epochs: t.max_epochs,
                patience: t.patience,
                weight_decay: t.weight_decay,
                replay_weight: t.replay_weight,
                seed: 0,
            },
            buffer_capacity: self.buffer.capacity,
            augment: AugmentConfig {
                strategy: self
                    .approach
                    .augmentation()
                    .unwrap_or(AugmentStrategy::Random),
                replace_prob: a.replace_prob,
                predicates: a.predicates.clone(),
                copies_per_instance: a.copies_per_instance,
                deviant_labels: a.deviant_labels.clone(),
                seed: 0,
            },
            pre_selection_augmentation: self.ablation.pre_selection_augmentation,
            pre_learning_augmentation: self.ablation.pre_learning_augmentation,
            encoder: self.encoder.clone(),
        }
    }
}
