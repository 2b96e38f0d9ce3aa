//! Definition relevance model.
//!
//! Labels a sense gloss as relevant (describes deviant behaviour) or not.
//! Training data is derived from word-in-context rows by majority vote per
//! unique definition. The learner is a logistic regression over hashed word
//! unigram and bigram features of the gloss.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::kb::{KnowledgeGraph, Relevance};
use crate::learner::{Encoder, HashedEncoder, DEFAULT_SALT};
use crate::util::{derive_seed, rng_from};
use crate::{Error, Result};

/// One row of the word-in-context CSV (`text,word,definition,label`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinitionRow {
    pub text: String,
    pub word: String,
    pub definition: String,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinitionExample {
    pub gloss: String,
    pub relevant: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinitionDataset {
    pub examples: Vec<DefinitionExample>,
    pub unique_definitions: usize,
    pub tie_count: usize,
}

const REQUIRED_COLUMNS: [&str; 4] = ["text", "word", "definition", "label"];

pub fn read_definition_csv<R: Read>(reader: R) -> Result<Vec<DefinitionRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in REQUIRED_COLUMNS {
        if !headers.iter().any(|h| h.trim() == col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// One example per unique definition carrying its majority label; exact
/// ties are dropped and counted.
pub fn derive_definition_dataset(rows: &[DefinitionRow]) -> Result<DefinitionDataset> {
    let mut tallies: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let definition = row.definition.trim();
        if definition.is_empty() {
            continue;
        }
        let entry = tallies.entry(definition).or_default();
        match row.label.trim() {
            "hateful" => entry.0 += 1,
            "normal" => entry.1 += 1,
            other => {
                return Err(Error::Record {
                    line: i + 2,
                    message: format!("label `{other}` is neither hateful nor normal"),
                })
            }
        }
    }
    let mut out = DefinitionDataset {
        unique_definitions: tallies.len(),
        ..Default::default()
    };
    for (gloss, (hateful, normal)) in tallies {
        if hateful == normal {
            out.tie_count += 1;
            continue;
        }
        out.examples.push(DefinitionExample {
            gloss: gloss.to_string(),
            relevant: hateful > normal,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefinitionTrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub threshold: f64,
}

impl Default for DefinitionTrainConfig {
    fn default() -> Self {
        DefinitionTrainConfig {
            dim: 1 << 14,
            learning_rate: 0.5,
            epochs: 30,
            batch_size: 16,
            l2: 1e-4,
            threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "ModelDocument", into = "ModelDocument")]
pub struct DefinitionModel {
    featurizer: HashedEncoder,
    weights: Vec<f64>,
    bias: f64,
    threshold: f64,
}

#[derive(Clone, Serialize, Deserialize)]
struct ModelDocument {
    dim: usize,
    ngram_orders: Vec<usize>,
    seed_salt: u64,
    weights: Vec<f64>,
    bias: f64,
    threshold: f64,
}

impl From<ModelDocument> for DefinitionModel {
    fn from(d: ModelDocument) -> Self {
        DefinitionModel {
            featurizer: HashedEncoder {
                dim: d.dim,
                ngram_orders: d.ngram_orders,
                salt: d.seed_salt,
            },
            weights: d.weights,
            bias: d.bias,
            threshold: d.threshold,
        }
    }
}

impl From<DefinitionModel> for ModelDocument {
    fn from(m: DefinitionModel) -> Self {
        ModelDocument {
            dim: m.featurizer.dim,
            ngram_orders: m.featurizer.ngram_orders,
            seed_salt: m.featurizer.salt,
            weights: m.weights,
            bias: m.bias,
            threshold: m.threshold,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl DefinitionModel {
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        DefinitionModel {
            threshold,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.featurizer.dim {
            return Err(Error::Format(format!(
                "definition model has {} weights for dimension {}",
                self.weights.len(),
                self.featurizer.dim
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Format("threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn probability(&self, gloss: &str) -> f64 {
        let x = self.featurizer.encode(gloss);
        sigmoid(x.dot(&self.weights) + self.bias)
    }

    pub fn is_relevant(&self, gloss: &str) -> bool {
        self.probability(gloss) >= self.threshold
    }

    pub fn accuracy(&self, data: &[DefinitionExample]) -> f64 {
        if data.is_empty() {
            return f64::NAN;
        }
        let hits = data
            .iter()
            .filter(|e| self.is_relevant(&e.gloss) == e.relevant)
            .count();
        hits as f64 / data.len() as f64
    }
}

pub fn train_definition_model(
    data: &[DefinitionExample],
    config: &DefinitionTrainConfig,
    seed: u64,
) -> Result<DefinitionModel> {
    if !data.iter().any(|e| e.relevant) || !data.iter().any(|e| !e.relevant) {
        return Err(Error::Training(
            "definition data must contain both relevant and not-relevant examples".into(),
        ));
    }
    if config.dim == 0 || config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Config(
            "dim, batch_size and epochs must be positive".into(),
        ));
    }
    let featurizer = HashedEncoder {
        dim: config.dim,
        ngram_orders: vec![1, 2],
        salt: DEFAULT_SALT,
    };
    let encoded: Vec<_> = data
        .iter()
        .map(|e| {
            (
                featurizer.encode(&e.gloss),
                if e.relevant { 1.0 } else { 0.0 },
            )
        })
        .collect();
    let mut weights = vec![0.0; config.dim];
    let mut bias = 0.0;
    let mut rng = rng_from(derive_seed(seed, "definition-train", 0));
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let decay = 1.0 - config.learning_rate * config.l2;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let step = config.learning_rate / batch.len() as f64;
            let grads: Vec<f64> = batch
                .iter()
                .map(|&i| {
                    let (x, y) = &encoded[i];
                    sigmoid(x.dot(&weights) + bias) - y
                })
                .collect();
            if config.l2 > 0.0 {
                weights.iter_mut().for_each(|w| *w *= decay);
            }
            for (&i, g) in batch.iter().zip(grads) {
                bias -= step * g;
                for (j, v) in encoded[i].0.iter() {
                    weights[j] -= step * g * v;
                }
            }
        }
    }
    if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Divergence(
            "definition model weights are not finite".into(),
        ));
    }
    Ok(DefinitionModel {
        featurizer,
        weights,
        bias,
        threshold: config.threshold,
    })
}

/// Sets each sense's relevance from the model; senses with an empty gloss
/// stay unscored.
pub fn score_graph(model: &DefinitionModel, graph: &KnowledgeGraph) -> KnowledgeGraph {
    let mut cache: HashMap<String, Relevance> = HashMap::new();
    graph.with_relevance(|sense| {
        let gloss = sense.gloss.trim();
        if gloss.is_empty() {
            return Relevance::Unscored;
        }
        *cache.entry(gloss.to_string()).or_insert_with(|| {
            if model.is_relevant(gloss) {
                Relevance::Relevant
            } else {
                Relevance::NotRelevant
            }
        })
    })
}

/// Seeded holdout split; returns `(train, held_out)`.
pub fn split_holdout(
    data: &[DefinitionExample],
    held_out_fraction: f64,
    seed: u64,
) -> (Vec<DefinitionExample>, Vec<DefinitionExample>) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rng_from(derive_seed(seed, "definition-split", 0)));
    let n_held = ((data.len() as f64) * held_out_fraction).round() as usize;
    let n_held = n_held.min(data.len());
    let held = idx[..n_held].iter().map(|&i| data[i].clone()).collect();
    let train = idx[n_held..].iter().map(|&i| data[i].clone()).collect();
    (train, held)
}
