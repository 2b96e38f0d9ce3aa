//! Stage-by-stage class-incremental training with optional replay.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_dataset, AugmentConfig, AugmentStrategy, LabeledInstance};
use crate::data::{TaskBundle, TaskStream};
use crate::eval::{evaluate_stage, forgetting, EvalMatrix, EvalRow, ForgettingReport, Metric};
use crate::kb::KnowledgeGraph;
use crate::learner::{
    encoder_from_descriptor, train_task, ClassKey, ClassifierModel, Encoder, TrainConfig,
    TrainReport,
};
use crate::memory::{BufferConfig, BufferStrategy, Knowledge, MemoryBuffer, SelectionContext};
use crate::mention::MentionTrie;
use crate::util::{derive_seed, mean, std_dev};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Approach {
    /// Sequential fine-tuning without replay.
    #[serde(rename = "NF")]
    NoReplay,
    #[serde(rename = "RD")]
    Random,
    #[serde(rename = "SR")]
    Stratified,
    #[serde(rename = "CS")]
    Cluster,
    #[serde(rename = "KR_rnd")]
    KnowledgeRandom,
    #[serde(rename = "KR_sem")]
    KnowledgeSemantic,
}

impl Approach {
    pub const ALL: [Approach; 6] = [
        Approach::NoReplay,
        Approach::Random,
        Approach::Stratified,
        Approach::Cluster,
        Approach::KnowledgeRandom,
        Approach::KnowledgeSemantic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::NoReplay => "NF",
            Approach::Random => "RD",
            Approach::Stratified => "SR",
            Approach::Cluster => "CS",
            Approach::KnowledgeRandom => "KR_rnd",
            Approach::KnowledgeSemantic => "KR_sem",
        }
    }

    pub fn buffer_strategy(self) -> Option<BufferStrategy> {
        match self {
            Approach::NoReplay => None,
            Approach::Random => Some(BufferStrategy::Random),
            Approach::Stratified => Some(BufferStrategy::Stratified),
            Approach::Cluster => Some(BufferStrategy::Cluster),
            Approach::KnowledgeRandom | Approach::KnowledgeSemantic => {
                Some(BufferStrategy::Knowledge)
            }
        }
    }

    pub fn augmentation(self) -> Option<AugmentStrategy> {
        match self {
            Approach::KnowledgeRandom => Some(AugmentStrategy::Random),
            Approach::KnowledgeSemantic => Some(AugmentStrategy::Semantic),
            _ => None,
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown approach `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub buffer_capacity: usize,
    /// Replacement settings for knowledge replay; the strategy is taken from
    /// the approach and the seed is derived per stage.
    pub augment: AugmentConfig,
    /// Augment the fresh task's pool before cluster selection.
    pub pre_selection_augmentation: bool,
    /// Augment the replay set before each training stage.
    pub pre_learning_augmentation: bool,
    pub encoder: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            buffer_capacity: 500,
            augment: AugmentConfig::default(),
            pre_selection_augmentation: true,
            pre_learning_augmentation: true,
            encoder: format!("hashed:{}", crate::learner::DEFAULT_ENCODER_DIM),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, approach: Approach, knowledge: Option<&KnowledgeBase>) -> Result<()> {
        self.train.validate()?;
        self.augment.validate()?;
        encoder_from_descriptor(&self.encoder)?;
        if approach.buffer_strategy().is_some() && self.buffer_capacity == 0 {
            return Err(Error::Config(format!(
                "{approach} needs a positive buffer capacity"
            )));
        }
        match (approach.augmentation(), knowledge) {
            (Some(_), None) => Err(Error::Config(format!("{approach} needs a knowledge graph"))),
            (Some(AugmentStrategy::Semantic), Some(k)) if !k.graph.is_scored() => {
                Err(Error::Config(format!(
                    "{approach} needs a relevance-scored knowledge graph"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// A knowledge graph with its mention index.
#[derive(Clone, Debug)]
pub struct KnowledgeBase {
    pub graph: KnowledgeGraph,
    pub trie: MentionTrie,
}

impl KnowledgeBase {
    pub fn new(graph: KnowledgeGraph) -> Self {
        let trie = MentionTrie::build(&graph);
        KnowledgeBase { graph, trie }
    }

    pub fn handles(&self) -> Knowledge<'_> {
        Knowledge {
            graph: &self.graph,
            trie: &self.trie,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub task: String,
    pub train: TrainReport,
    pub replay_size: usize,
    pub eval: EvalRow,
    pub buffer_counts: Option<BTreeMap<usize, usize>>,
}

/// Learner state across stages. A failed stage leaves the state untouched.
pub struct ContinualLearner<'k> {
    approach: Approach,
    config: ExperimentConfig,
    seed: u64,
    knowledge: Option<&'k KnowledgeBase>,
    encoder: Arc<dyn Encoder>,
    model: ClassifierModel,
    buffer: Option<MemoryBuffer>,
    test_sets: Vec<(usize, Vec<LabeledInstance>)>,
    matrix: EvalMatrix,
    stages: Vec<StageRecord>,
}

impl<'k> ContinualLearner<'k> {
    pub fn new(
        approach: Approach,
        config: ExperimentConfig,
        seed: u64,
        knowledge: Option<&'k KnowledgeBase>,
    ) -> Result<Self> {
        config.validate(approach, knowledge)?;
        let encoder = encoder_from_descriptor(&config.encoder)?;
        let buffer = approach.buffer_strategy().map(|strategy| {
            MemoryBuffer::new(BufferConfig {
                capacity: config.buffer_capacity,
                strategy,
                seed: derive_seed(seed, "buffer", 0),
            })
        });
        Ok(ContinualLearner {
            approach,
            model: ClassifierModel::new(encoder.clone()),
            encoder,
            config,
            seed,
            knowledge,
            buffer,
            test_sets: Vec::new(),
            matrix: EvalMatrix::default(),
            stages: Vec::new(),
        })
    }

    pub fn approach(&self) -> Approach {
        self.approach
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    pub fn buffer(&self) -> Option<&MemoryBuffer> {
        self.buffer.as_ref()
    }

    pub fn matrix(&self) -> &EvalMatrix {
        &self.matrix
    }

    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    fn augment_config(&self, tag: &str, stage: usize) -> Option<AugmentConfig> {
        let strategy = self.approach.augmentation()?;
        let mut cfg = self
            .config
            .augment
            .with_seed(derive_seed(self.seed, tag, stage as u64));
        cfg.strategy = strategy;
        Some(cfg)
    }

    /// Replay items for the coming stage: buffer contents, plus augmented
    /// copies for knowledge replay.
    pub fn replay_set(&self, stage: usize) -> Result<Vec<LabeledInstance>> {
        let Some(buffer) = &self.buffer else {
            return Ok(Vec::new());
        };
        let contents = buffer.contents();
        match (self.augment_config("replay", stage), self.knowledge) {
            (Some(cfg), Some(k))
                if self.config.pre_learning_augmentation && !contents.is_empty() =>
            {
                augment_dataset(&contents, &k.graph, &k.trie, &cfg)
            }
            _ => Ok(contents),
        }
    }

    /// Trains on one task, updates the buffer and evaluates every task seen.
    pub fn observe_task(&mut self, task: &TaskBundle) -> Result<&StageRecord> {
        let stage = self.stages.len();
        let new_classes: Vec<ClassKey> = task
            .classes
            .iter()
            .map(|name| ClassKey {
                task: task.task_id,
                name: name.clone(),
            })
            .collect();
        let extended = self.model.extend_classes(&new_classes)?;
        let replay = self.replay_set(stage)?;
        let train_config = TrainConfig {
            seed: derive_seed(self.seed, "train", stage as u64),
            ..self.config.train.clone()
        };
        let (model, report) =
            train_task(&extended, &task.train, &replay, &task.valid, &train_config)?;

        let buffer = match &self.buffer {
            None => None,
            Some(buffer) => {
                let select_cfg = self
                    .augment_config("select", stage)
                    .filter(|_| self.config.pre_selection_augmentation);
                let ctx = SelectionContext {
                    encoder: self.encoder.as_ref(),
                    knowledge: self.knowledge.map(KnowledgeBase::handles),
                    augment: select_cfg.as_ref(),
                };
                let next = buffer.update(task.task_id, &task.train, &ctx)?;
                next.check_invariants().map_err(Error::Config)?;
                Some(next)
            }
        };

        let mut test_sets = self.test_sets.clone();
        test_sets.push((task.task_id, task.test.clone()));
        let views: Vec<(usize, &[LabeledInstance])> =
            test_sets.iter().map(|(t, v)| (*t, v.as_slice())).collect();
        let eval = evaluate_stage(&model, &views, stage)?;

        self.matrix.push(&eval);
        self.stages.push(StageRecord {
            stage,
            task: task.name.clone(),
            replay_size: replay.len(),
            train: report,
            eval,
            buffer_counts: buffer.as_ref().map(MemoryBuffer::counts),
        });
        self.model = model;
        self.buffer = buffer;
        self.test_sets = test_sets;
        Ok(self.stages.last().expect("stage was just pushed"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub eval_matrix: EvalMatrix,
    pub final_accuracy: f64,
    pub final_auc: f64,
    pub forgetting_accuracy: ForgettingReport,
    pub forgetting_auc: ForgettingReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(rename = "A_mean")]
    pub accuracy_mean: f64,
    #[serde(rename = "A_std")]
    pub accuracy_std: f64,
    #[serde(rename = "AUC_mean")]
    pub auc_mean: f64,
    #[serde(rename = "AUC_std")]
    pub auc_std: f64,
    #[serde(rename = "F_A_mean")]
    pub forgetting_accuracy_mean: Option<f64>,
    #[serde(rename = "F_A_std")]
    pub forgetting_accuracy_std: Option<f64>,
    #[serde(rename = "F_AUC_mean")]
    pub forgetting_auc_mean: Option<f64>,
    #[serde(rename = "F_AUC_std")]
    pub forgetting_auc_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub approach: Approach,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedReport>,
    pub aggregate: Aggregate,
}

impl ExperimentReport {
    pub fn from_seeds(approach: Approach, per_seed: Vec<SeedReport>) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(Error::Config(
                "an experiment needs at least one seed".into(),
            ));
        }
        let col = |f: &dyn Fn(&SeedReport) -> f64| per_seed.iter().map(f).collect::<Vec<_>>();
        let opt_col = |f: &dyn Fn(&SeedReport) -> Option<f64>| {
            per_seed.iter().map(f).collect::<Option<Vec<_>>>()
        };
        let a = col(&|s| s.final_accuracy);
        let auc = col(&|s| s.final_auc);
        let fa = opt_col(&|s| s.forgetting_accuracy.aggregate);
        let fauc = opt_col(&|s| s.forgetting_auc.aggregate);
        Ok(ExperimentReport {
            approach,
            seeds: per_seed.iter().map(|s| s.seed).collect(),
            aggregate: Aggregate {
                accuracy_mean: mean(&a),
                accuracy_std: std_dev(&a),
                auc_mean: mean(&auc),
                auc_std: std_dev(&auc),
                forgetting_accuracy_mean: fa.as_deref().map(mean),
                forgetting_accuracy_std: fa.as_deref().map(std_dev),
                forgetting_auc_mean: fauc.as_deref().map(mean),
                forgetting_auc_std: fauc.as_deref().map(std_dev),
            },
            per_seed,
        })
    }
}

pub fn seed_report(seed: u64, matrix: &EvalMatrix) -> Result<SeedReport> {
    let final_of = |m| {
        matrix
            .final_average(m)
            .ok_or_else(|| Error::UndefinedMetric("no stage was evaluated".into()))
    };
    Ok(SeedReport {
        seed,
        final_accuracy: final_of(Metric::Accuracy)?,
        final_auc: final_of(Metric::Auc)?,
        forgetting_accuracy: forgetting(matrix, Metric::Accuracy)?,
        forgetting_auc: forgetting(matrix, Metric::Auc)?,
        eval_matrix: matrix.clone(),
    })
}

/// Runs the whole stream for one seed, calling `on_stage` after every stage.
pub fn run_seed<'k>(
    stream: &TaskStream,
    approach: Approach,
    config: &ExperimentConfig,
    seed: u64,
    knowledge: Option<&'k KnowledgeBase>,
    on_stage: &mut dyn FnMut(&ContinualLearner<'k>) -> Result<()>,
) -> Result<ContinualLearner<'k>> {
    if stream.tasks.is_empty() {
        return Err(Error::Stream("the task stream is empty".into()));
    }
    let mut learner = ContinualLearner::new(approach, config.clone(), seed, knowledge)?;
    for task in &stream.tasks {
        learner.observe_task(task)?;
        on_stage(&learner)?;
    }
    Ok(learner)
}

/// Runs every seed (in parallel) and aggregates the final metrics.
pub fn run_experiment(
    stream: &TaskStream,
    approach: Approach,
    config: &ExperimentConfig,
    seeds: &[u64],
    knowledge: Option<&KnowledgeBase>,
) -> Result<ExperimentReport> {
    config.validate(approach, knowledge)?;
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let learner = run_seed(stream, approach, config, seed, knowledge, &mut |_| Ok(()))?;
            seed_report(seed, learner.matrix())
        })
        .collect::<Result<Vec<_>>>()?;
    ExperimentReport::from_seeds(approach, per_seed)
}
