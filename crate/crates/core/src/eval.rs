//! Accuracy, class-wise AUC and forgetting.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::augment::LabeledInstance;
use crate::learner::ClassifierModel;
use crate::{Error, Result};

pub fn accuracy<T: PartialEq>(pairs: &[(T, T)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric(
            "accuracy of an empty prediction list".into(),
        ));
    }
    let hits = pairs.iter().filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Mann-Whitney AUC: the probability a random positive outscores a random
/// negative, ties counting one half. `None` if either side is empty.
pub fn binary_auc(positives: &[f64], negatives: &[f64]) -> Option<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return None;
    }
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of (1-based, tie-averaged) ranks of positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i + 1;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = all[i..j].iter().filter(|e| e.1).count();
        rank_sum += avg_rank * pos_in_group as f64;
        i = j;
    }
    let np = positives.len() as f64;
    let nn = negatives.len() as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Mean one-vs-rest AUC over `task_classes`, using each instance's
/// probability for the class as its score and only this task's instances as
/// negatives. Classes without both a positive and a negative are skipped.
pub fn auc_task(scores: &[Vec<f64>], truths: &[usize], task_classes: &[usize]) -> Result<f64> {
    if scores.len() != truths.len() {
        return Err(Error::UndefinedMetric(
            "scores and truths differ in length".into(),
        ));
    }
    let mut aucs = Vec::new();
    for &c in task_classes {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (s, &t) in scores.iter().zip(truths) {
            if t == c {
                pos.push(s[c]);
            } else {
                neg.push(s[c]);
            }
        }
        if let Some(a) = binary_auc(&pos, &neg) {
            aucs.push(a);
        }
    }
    if aucs.is_empty() {
        return Err(Error::UndefinedMetric(
            "no class has both positives and negatives".into(),
        ));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "A")]
    Accuracy,
    #[serde(rename = "AUC")]
    Auc,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "A",
            Metric::Auc => "AUC",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub stage: usize,
    pub accuracy: Vec<f64>,
    pub auc: Vec<f64>,
    pub mean_accuracy: f64,
    pub mean_auc: f64,
}

/// Scores every observed task's test set with the full softmax over all
/// registered classes. `test_sets[j]` is `(task id, instances)`.
pub fn evaluate_stage(
    model: &ClassifierModel,
    test_sets: &[(usize, &[LabeledInstance])],
    stage: usize,
) -> Result<EvalRow> {
    let mut acc = Vec::with_capacity(test_sets.len());
    let mut auc = Vec::with_capacity(test_sets.len());
    for (task, items) in test_sets {
        let mut pairs = Vec::with_capacity(items.len());
        let mut scores = Vec::with_capacity(items.len());
        let mut truths = Vec::with_capacity(items.len());
        for inst in items.iter() {
            let truth = model
                .registry()
                .column(&inst.label)
                .ok_or_else(|| Error::UnregisteredLabel(inst.label.clone()))?;
            let pred = model.predict(&inst.text)?;
            pairs.push((pred.column, truth));
            scores.push(pred.probabilities);
            truths.push(truth);
        }
        acc.push(accuracy(&pairs)?);
        auc.push(auc_task(
            &scores,
            &truths,
            &model.registry().task_columns(*task),
        )?);
    }
    let n = test_sets.len().max(1) as f64;
    Ok(EvalRow {
        stage,
        mean_accuracy: acc.iter().sum::<f64>() / n,
        mean_auc: auc.iter().sum::<f64>() / n,
        accuracy: acc,
        auc,
    })
}

/// Lower-triangular grid: `grid[t][j]` is test task `j` after stage `t`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    pub accuracy: Vec<Vec<f64>>,
    pub auc: Vec<Vec<f64>>,
}

impl EvalMatrix {
    pub fn from_grid(metric: Metric, grid: Vec<Vec<f64>>) -> Self {
        match metric {
            Metric::Accuracy => EvalMatrix {
                accuracy: grid,
                auc: Vec::new(),
            },
            Metric::Auc => EvalMatrix {
                accuracy: Vec::new(),
                auc: grid,
            },
        }
    }

    pub fn push(&mut self, row: &EvalRow) {
        self.accuracy.push(row.accuracy.clone());
        self.auc.push(row.auc.clone());
    }

    pub fn grid(&self, metric: Metric) -> &[Vec<f64>] {
        match metric {
            Metric::Accuracy => &self.accuracy,
            Metric::Auc => &self.auc,
        }
    }

    pub fn stages(&self) -> usize {
        self.accuracy.len().max(self.auc.len())
    }

    /// Unweighted mean over tasks of the last row.
    pub fn final_average(&self, metric: Metric) -> Option<f64> {
        let last = self.grid(metric).last()?;
        (!last.is_empty()).then(|| last.iter().sum::<f64>() / last.len() as f64)
    }

    /// CSV with one row per stage and one column per test task; cells for
    /// tasks not yet observed are empty.
    pub fn write_csv<W: Write>(&self, metric: Metric, mut out: W) -> std::io::Result<()> {
        let grid = self.grid(metric);
        let width = grid.iter().map(Vec::len).max().unwrap_or(0);
        let header: Vec<String> = std::iter::once("stage".to_string())
            .chain((0..width).map(|j| format!("task_{j}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, row) in grid.iter().enumerate() {
            let cells: Vec<String> = (0..width)
                .map(|j| row.get(j).map(|v| format!("{v}")).unwrap_or_default())
                .collect();
            writeln!(out, "{t},{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub metric: Metric,
    pub per_task: Vec<f64>,
    /// Mean over every task but the last; `None` for a single-task run.
    pub aggregate: Option<f64>,
}

/// Peak-minus-final drop per task.
pub fn forgetting(matrix: &EvalMatrix, metric: Metric) -> Result<ForgettingReport> {
    let grid = matrix.grid(metric);
    if grid.is_empty() {
        return Err(Error::UndefinedMetric("empty evaluation matrix".into()));
    }
    for (t, row) in grid.iter().enumerate() {
        if row.len() != t + 1 {
            return Err(Error::UndefinedMetric(format!(
                "stage {t} has {} entries, expected {}",
                row.len(),
                t + 1
            )));
        }
    }
    let last = grid.len() - 1;
    let per_task: Vec<f64> = (0..=last)
        .map(|j| {
            let peak = (j..=last)
                .map(|t| grid[t][j])
                .fold(f64::NEG_INFINITY, f64::max);
            peak - grid[last][j]
        })
        .collect();
    let aggregate = (last > 0).then(|| per_task[..last].iter().sum::<f64>() / last as f64);
    Ok(ForgettingReport {
        metric,
        per_task,
        aggregate,
    })
}
