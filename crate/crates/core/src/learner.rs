//! Text encoder plus an extensible softmax classification head.
//!
//! The head is a linear layer over encoder features. New classes append
//! zero-initialized rows, so logits of previously registered classes are
//! unchanged by extension. Training minimizes
//!
//! ```text
//! mean_{current} CE  +  lambda * mean_{replay} CE
//! ```
//!
//! with seeded mini-batch SGD, L2 weight decay on the weights (not the
//! biases) and early stopping on the current task's validation accuracy.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::LabeledInstance;
use crate::mention::tokenize;
use crate::util::{derive_seed, fnv1a, rng_from};
use crate::{Error, Result};

/// Sparse vector with sorted, unique indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseVector {
            dim: dense.len(),
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Maps text to a fixed-dimension feature vector.
pub trait Encoder: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> SparseVector;
    /// Round-trips through [`encoder_from_descriptor`].
    fn descriptor(&self) -> String;
}

pub const DEFAULT_ENCODER_DIM: usize = 4096;
pub const DEFAULT_SALT: u64 = 0x6b67_7265_706c_6179;

/// Hashed word n-gram counts, L2-normalized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedEncoder {
    pub dim: usize,
    pub ngram_orders: Vec<usize>,
    pub salt: u64,
}

impl Default for HashedEncoder {
    fn default() -> Self {
        HashedEncoder::new(DEFAULT_ENCODER_DIM)
    }
}

impl HashedEncoder {
    pub fn new(dim: usize) -> Self {
        HashedEncoder {
            dim,
            ngram_orders: vec![1, 2],
            salt: DEFAULT_SALT,
        }
    }

    /// Raw (unnormalized) hashed counts.
    pub fn counts(&self, text: &str) -> HashMap<usize, f64> {
        let words: Vec<String> = tokenize(text)
            .into_iter()
            .filter(|t| t.text.chars().any(char::is_alphanumeric))
            .map(|t| t.normalized())
            .collect();
        let salt = self.salt.to_le_bytes();
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for &n in &self.ngram_orders {
            if n == 0 || words.len() < n {
                continue;
            }
            let order = (n as u64).to_le_bytes();
            for gram in words.windows(n) {
                let joined = gram.join(" ");
                let h = fnv1a(&[&salt, &order, joined.as_bytes()]);
                *counts.entry((h % self.dim as u64) as usize).or_insert(0.0) += 1.0;
            }
        }
        counts
    }
}

impl Encoder for HashedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> SparseVector {
        let mut entries: Vec<(usize, f64)> = self.counts(text).into_iter().collect();
        entries.sort_unstable_by_key(|e| e.0);
        let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        let (indices, values) = if norm > 0.0 {
            entries.into_iter().map(|(i, v)| (i, v / norm)).unzip()
        } else {
            (Vec::new(), Vec::new())
        };
        SparseVector {
            dim: self.dim,
            indices,
            values,
        }
    }

    fn descriptor(&self) -> String {
        if self.ngram_orders == [1, 2] && self.salt == DEFAULT_SALT {
            format!("hashed:{}", self.dim)
        } else {
            let orders: Vec<String> = self.ngram_orders.iter().map(|n| n.to_string()).collect();
            format!("hashed:{}:{}:{}", self.dim, orders.join(","), self.salt)
        }
    }
}

/// Resolves `hashed`, `hashed:<dim>` or `hashed:<dim>:<orders>:<salt>`.
pub fn encoder_from_descriptor(descriptor: &str) -> Result<Arc<dyn Encoder>> {
    let unknown = || Error::UnknownEncoder(descriptor.to_string());
    let mut parts = descriptor.split(':');
    if parts.next() != Some("hashed") {
        return Err(unknown());
    }
    let mut enc = HashedEncoder::default();
    if let Some(dim) = parts.next() {
        enc.dim = dim.parse().map_err(|_| unknown())?;
        if enc.dim == 0 {
            return Err(unknown());
        }
    }
    if let Some(orders) = parts.next() {
        enc.ngram_orders = orders
            .split(',')
            .map(|s| s.parse().map_err(|_| unknown()))
            .collect::<Result<_>>()?;
        enc.salt = parts
            .next()
            .ok_or_else(unknown)?
            .parse()
            .map_err(|_| unknown())?;
    }
    if parts.next().is_some() {
        return Err(unknown());
    }
    Ok(Arc::new(enc))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassKey {
    pub task: usize,
    pub name: String,
}

/// Append-only class list; a class keeps its column for the model's lifetime.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassRegistry {
    classes: Vec<ClassKey>,
    index: HashMap<String, usize>,
}

impl ClassRegistry {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn classes(&self) -> &[ClassKey] {
        &self.classes
    }

    pub fn name(&self, column: usize) -> &str {
        &self.classes[column].name
    }

    /// Columns of the classes introduced by `task`.
    pub fn task_columns(&self, task: usize) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&c| self.classes[c].task == task)
            .collect()
    }

    fn push(&mut self, key: ClassKey) {
        self.index.insert(key.name.clone(), self.classes.len());
        self.classes.push(key);
    }
}

#[derive(Clone)]
pub struct ClassifierModel {
    encoder: Arc<dyn Encoder>,
    /// Row-major `classes x dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    registry: ClassRegistry,
}

impl fmt::Debug for ClassifierModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClassifierModel")
            .field("encoder", &self.encoder.descriptor())
            .field("classes", &self.registry.classes)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub column: usize,
    pub class: String,
    pub probabilities: Vec<f64>,
}

impl ClassifierModel {
    pub fn new(encoder: Arc<dyn Encoder>) -> Self {
        ClassifierModel {
            encoder,
            weights: Vec::new(),
            bias: Vec::new(),
            registry: ClassRegistry::default(),
        }
    }

    pub fn encoder(&self) -> &Arc<dyn Encoder> {
        &self.encoder
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    pub fn registry(&self) -> &ClassRegistry {
        &self.registry
    }

    pub fn num_classes(&self) -> usize {
        self.registry.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn row(&self, column: usize) -> &[f64] {
        let d = self.dim();
        &self.weights[column * d..(column + 1) * d]
    }

    /// Mutable parameter access, used by gradient checks.
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    /// Appends zero rows for `new_classes`; existing rows are untouched.
    pub fn extend_classes(&self, new_classes: &[ClassKey]) -> Result<ClassifierModel> {
        let mut out = self.clone();
        let mut seen = std::collections::HashSet::new();
        for key in new_classes {
            if self.registry.column(&key.name).is_some() || !seen.insert(key.name.as_str()) {
                return Err(Error::ClassConflict(key.name.clone()));
            }
        }
        let d = self.dim();
        for key in new_classes {
            out.registry.push(key.clone());
            out.weights.extend(std::iter::repeat_n(0.0, d));
            out.bias.push(0.0);
        }
        Ok(out)
    }

    pub fn embed(&self, text: &str) -> SparseVector {
        self.encoder.encode(text)
    }

    pub fn logits_of(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.num_classes())
            .map(|c| x.dot(self.row(c)) + self.bias[c])
            .collect()
    }

    pub fn logits(&self, text: &str) -> Vec<f64> {
        self.logits_of(&self.embed(text))
    }

    pub fn probabilities_of(&self, x: &SparseVector) -> Vec<f64> {
        softmax(&self.logits_of(x))
    }

    pub fn predict_encoded(&self, x: &SparseVector) -> Result<Prediction> {
        if self.num_classes() == 0 {
            return Err(Error::EmptyModel);
        }
        let probabilities = self.probabilities_of(x);
        let column = argmax(&probabilities);
        Ok(Prediction {
            column,
            class: self.registry.name(column).to_string(),
            probabilities,
        })
    }

    pub fn predict(&self, text: &str) -> Result<Prediction> {
        self.predict_encoded(&self.embed(text))
    }

    pub fn checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            version: 1,
            encoder: self.encoder.descriptor(),
            classes: self
                .registry
                .classes
                .iter()
                .map(|k| (k.task, k.name.clone()))
                .collect(),
            weights: self.weights.clone(),
            bias: self.bias.clone(),
        }
    }

    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<Self> {
        if ck.version != 1 {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        let encoder = encoder_from_descriptor(&ck.encoder)?;
        let k = ck.classes.len();
        if ck.weights.len() != k * encoder.dim() || ck.bias.len() != k {
            return Err(Error::Format(
                "checkpoint shape does not match its classes".into(),
            ));
        }
        let mut registry = ClassRegistry::default();
        for (task, name) in &ck.classes {
            registry.push(ClassKey {
                task: *task,
                name: name.clone(),
            });
        }
        Ok(ClassifierModel {
            encoder,
            weights: ck.weights.clone(),
            bias: ck.bias.clone(),
            registry,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub encoder: String,
    pub classes: Vec<(usize, String)>,
    #[serde(rename = "W")]
    pub weights: Vec<f64>,
    #[serde(rename = "b")]
    pub bias: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub replay_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 16,
            max_epochs: 20,
            patience: 8,
            weight_decay: 0.1,
            replay_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        if !(0.0..).contains(&self.weight_decay) || !(0.0..).contains(&self.replay_weight) {
            return bad("weight_decay and replay_weight must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub current_loss: f64,
    pub replay_loss: Option<f64>,
    pub objective: f64,
    pub valid_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub best_valid_accuracy: f64,
    pub initial_objective: f64,
    pub best_objective: f64,
    /// The returned parameters are the best-validation snapshot, not the last epoch.
    pub restored_best: bool,
    pub current_size: usize,
    pub replay_size: usize,
}

/// An encoded training example with its class column.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub x: SparseVector,
    pub y: usize,
}

pub fn encode_instances(
    model: &ClassifierModel,
    instances: &[LabeledInstance],
) -> Result<Vec<Encoded>> {
    instances
        .iter()
        .map(|inst| {
            let y = model
                .registry
                .column(&inst.label)
                .ok_or_else(|| Error::UnregisteredLabel(inst.label.clone()))?;
            Ok(Encoded {
                x: model.embed(&inst.text),
                y,
            })
        })
        .collect()
}

fn cross_entropy(probs: &[f64], y: usize) -> f64 {
    -probs[y].max(f64::MIN_POSITIVE).ln()
}

/// Gradient of the joint objective with respect to weights and biases.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Full-batch joint objective (without weight decay) and its analytic gradient.
/// The replay term is dropped when `replay` is empty.
pub fn joint_objective(
    model: &ClassifierModel,
    current: &[Encoded],
    replay: &[Encoded],
    replay_weight: f64,
) -> (f64, Gradient) {
    let d = model.dim();
    let k = model.num_classes();
    let mut grad = Gradient {
        weights: vec![0.0; k * d],
        bias: vec![0.0; k],
    };
    let mut total = 0.0;
    let parts: [(&[Encoded], f64); 2] = [
        (
            current,
            if current.is_empty() {
                0.0
            } else {
                1.0 / current.len() as f64
            },
        ),
        (
            replay,
            if replay.is_empty() {
                0.0
            } else {
                replay_weight / replay.len() as f64
            },
        ),
    ];
    for (set, w) in parts {
        for ex in set {
            let p = model.probabilities_of(&ex.x);
            total += w * cross_entropy(&p, ex.y);
            for (c, &pc) in p.iter().enumerate() {
                let g = w * (pc - if c == ex.y { 1.0 } else { 0.0 });
                grad.bias[c] += g;
                for (j, v) in ex.x.iter() {
                    grad.weights[c * d + j] += g * v;
                }
            }
        }
    }
    (total, grad)
}

fn accuracy_on(model: &ClassifierModel, set: &[Encoded]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let hits = set
        .iter()
        .filter(|ex| argmax(&model.logits_of(&ex.x)) == ex.y)
        .count();
    hits as f64 / set.len() as f64
}

/// Trains on `current` plus `replay`, returning the best-validation snapshot.
pub fn train_task(
    model: &ClassifierModel,
    current: &[LabeledInstance],
    replay: &[LabeledInstance],
    valid: &[LabeledInstance],
    config: &TrainConfig,
) -> Result<(ClassifierModel, TrainReport)> {
    config.validate()?;
    if valid.is_empty() {
        return Err(Error::Training("validation set is empty".into()));
    }
    if current.is_empty() {
        return Err(Error::Training("current training set is empty".into()));
    }
    let cur = encode_instances(model, current)?;
    let valid = encode_instances(model, valid)?;
    // A zero replay weight contributes nothing, so replay items are left out
    // entirely and the batch schedule matches training without replay.
    let rep = if config.replay_weight > 0.0 {
        encode_instances(model, replay)?
    } else {
        encode_instances(model, replay)?;
        Vec::new()
    };

    let mut model = model.clone();
    let d = model.dim();
    let n_total = cur.len() + rep.len();
    let w_cur = 1.0 / cur.len() as f64;
    let w_rep = if rep.is_empty() {
        0.0
    } else {
        config.replay_weight / rep.len() as f64
    };
    let example = |i: usize| -> (&Encoded, bool) {
        if i < cur.len() {
            (&cur[i], false)
        } else {
            (&rep[i - cur.len()], true)
        }
    };

    let (initial_objective, _) = joint_objective(&model, &cur, &rep, config.replay_weight);
    let mut rng = rng_from(derive_seed(config.seed, "train", 0));
    let mut order: Vec<usize> = (0..n_total).collect();
    let mut best: Option<(ClassifierModel, f64, usize)> = None;
    let mut since_best = 0;
    let mut epochs = Vec::new();
    let decay = 1.0 - config.learning_rate * config.weight_decay;
    let mut probs_buf: Vec<Vec<f64>> = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut cur_loss = 0.0;
        let mut rep_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let scale = n_total as f64 / batch.len() as f64;
            probs_buf.clear();
            for &i in batch {
                let (ex, is_replay) = example(i);
                let p = model.probabilities_of(&ex.x);
                let l = cross_entropy(&p, ex.y);
                if is_replay {
                    rep_loss += l;
                } else {
                    cur_loss += l;
                }
                probs_buf.push(p);
            }
            if config.weight_decay > 0.0 {
                for w in model.weights.iter_mut() {
                    *w *= decay;
                }
            }
            for (&i, p) in batch.iter().zip(&probs_buf) {
                let (ex, is_replay) = example(i);
                let coeff = config.learning_rate * scale * if is_replay { w_rep } else { w_cur };
                for (c, &pc) in p.iter().enumerate() {
                    let g = coeff * (pc - if c == ex.y { 1.0 } else { 0.0 });
                    model.bias[c] -= g;
                    let row = &mut model.weights[c * d..(c + 1) * d];
                    for (j, v) in ex.x.iter() {
                        row[j] -= g * v;
                    }
                }
            }
        }
        let current_loss = cur_loss / cur.len() as f64;
        let replay_loss = (!rep.is_empty()).then(|| rep_loss / rep.len() as f64);
        let objective = current_loss + replay_loss.map_or(0.0, |r| config.replay_weight * r);
        if !objective.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite loss at epoch {epoch}"
            )));
        }
        let valid_accuracy = accuracy_on(&model, &valid);
        epochs.push(EpochStats {
            epoch,
            current_loss,
            replay_loss,
            objective,
            valid_accuracy,
        });
        // Ties move the snapshot forward but do not reset patience.
        let prev = best.as_ref().map(|b| b.1);
        if prev.is_none_or(|p| valid_accuracy >= p) {
            best = Some((model.clone(), valid_accuracy, epoch));
        }
        if prev.is_none_or(|p| valid_accuracy > p) {
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let stopped_epoch = epochs.len();
    let (best_model, best_valid_accuracy, best_epoch) = best.expect("at least one epoch runs");
    let (best_objective, _) = joint_objective(&best_model, &cur, &rep, config.replay_weight);
    Ok((
        best_model,
        TrainReport {
            epochs,
            best_epoch,
            stopped_epoch,
            best_valid_accuracy,
            initial_objective,
            best_objective,
            restored_best: true,
            current_size: cur.len(),
            replay_size: rep.len(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::LabeledInstance;

    fn key(task: usize, name: &str) -> ClassKey {
        ClassKey {
            task,
            name: name.into(),
        }
    }

    fn model_with(classes: &[&str]) -> ClassifierModel {
        let keys: Vec<_> = classes.iter().map(|c| key(0, c)).collect();
        ClassifierModel::new(Arc::new(HashedEncoder::new(64)))
            .extend_classes(&keys)
            .unwrap()
    }

    #[test]
    fn encoder_is_unit_norm_and_empty_is_zero() {
        let enc = HashedEncoder::default();
        let v = enc.encode("the quick brown fox");
        assert!((v.norm_sq() - 1.0).abs() < 1e-12);
        assert_eq!(enc.encode("").nnz(), 0);
        assert_eq!(enc.encode("!!").nnz(), 0);
        assert_eq!(enc.encode("").dim, DEFAULT_ENCODER_DIM);
    }

    #[test]
    fn descriptor_roundtrip() {
        for enc in [
            HashedEncoder::new(128),
            HashedEncoder {
                dim: 32,
                ngram_orders: vec![1],
                salt: 9,
            },
        ] {
            let back = encoder_from_descriptor(&enc.descriptor()).unwrap();
            assert_eq!(back.descriptor(), enc.descriptor());
        }
        assert_eq!(
            encoder_from_descriptor("hashed").unwrap().dim(),
            DEFAULT_ENCODER_DIM
        );
        assert!(matches!(
            encoder_from_descriptor("bert-base"),
            Err(Error::UnknownEncoder(_))
        ));
    }

    #[test]
    fn extension_appends_zero_rows() {
        let m = model_with(&["a", "b"]);
        let mut m2 = m.clone();
        m2.weights
            .iter_mut()
            .enumerate()
            .for_each(|(i, w)| *w = i as f64);
        let ext = m2.extend_classes(&[key(1, "c"), key(1, "d")]).unwrap();
        assert_eq!(ext.num_classes(), 4);
        assert_eq!(&ext.weights()[..2 * 64], m2.weights());
        assert!(ext.row(2).iter().chain(ext.row(3)).all(|w| *w == 0.0));
        assert_eq!(ext.bias()[2..], [0.0, 0.0]);
        assert_eq!(ext.registry().task_columns(1), vec![2, 3]);
    }

    #[test]
    fn extending_with_nothing_is_identity() {
        let m = model_with(&["a"]);
        let e = m.extend_classes(&[]).unwrap();
        assert_eq!(e.weights(), m.weights());
        assert_eq!(e.registry(), m.registry());
    }

    #[test]
    fn duplicate_class_conflicts() {
        let m = model_with(&["a"]);
        assert!(matches!(
            m.extend_classes(&[key(1, "a")]),
            Err(Error::ClassConflict(_))
        ));
        assert!(matches!(
            m.extend_classes(&[key(1, "b"), key(1, "b")]),
            Err(Error::ClassConflict(_))
        ));
    }

    #[test]
    fn predict_edge_cases() {
        let empty = ClassifierModel::new(Arc::new(HashedEncoder::new(8)));
        assert!(matches!(empty.predict("x"), Err(Error::EmptyModel)));

        let one = model_with(&["only"]);
        let p = one.predict("anything").unwrap();
        assert_eq!(p.class, "only");
        assert_eq!(p.probabilities, vec![1.0]);

        let three = model_with(&["a", "b", "c"]);
        let p = three.predict("anything").unwrap();
        assert_eq!(p.column, 0);
        for q in p.probabilities {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut m = model_with(&["a", "b"]);
        m.weights[3] = 0.5;
        m.bias[1] = -0.25;
        let json = serde_json::to_string(&m.checkpoint()).unwrap();
        let back = ClassifierModel::from_checkpoint(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.weights(), m.weights());
        assert_eq!(back.bias(), m.bias());
        assert_eq!(back.registry(), m.registry());
    }

    fn inst(text: &str, label: &str) -> LabeledInstance {
        LabeledInstance::original(format!("{label}-{text}"), text, label, 0)
    }

    #[test]
    fn unregistered_label_is_rejected() {
        let m = model_with(&["a"]);
        let err = train_task(
            &m,
            &[inst("x", "zzz")],
            &[],
            &[inst("x", "a")],
            &TrainConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnregisteredLabel(_)));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.patience = 30;
        assert!(c.validate().is_err());
        c = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
