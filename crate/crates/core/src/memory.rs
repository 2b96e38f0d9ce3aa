//! Fixed-capacity exemplar buffer.
//!
//! After `t` tasks every task owns `floor(M / t)` slots, with the remainder
//! `M mod t` handed one each to the earliest tasks. When a task arrives the
//! stored tasks are down-selected to their new quota and the new task's
//! exemplars are chosen from its training pool.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_dataset, AugmentConfig, LabeledInstance, Provenance};
use crate::kb::KnowledgeGraph;
use crate::learner::{Encoder, SparseVector};
use crate::mention::MentionTrie;
use crate::util::{derive_seed, rng_from};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BufferStrategy {
    Random,
    Stratified,
    Cluster,
    Knowledge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferConfig {
    pub capacity: usize,
    pub strategy: BufferStrategy,
    pub seed: u64,
}

impl Default for BufferConfig {
    fn default() -> Self {
        BufferConfig {
            capacity: 500,
            strategy: BufferStrategy::Random,
            seed: 0,
        }
    }
}

/// Per-task slot allowance after `task_count` tasks.
pub fn quota(capacity: usize, task_count: usize) -> Result<Vec<usize>> {
    if task_count == 0 || capacity / task_count == 0 {
        return Err(Error::CapacityExhausted {
            capacity,
            tasks: task_count,
        });
    }
    let base = capacity / task_count;
    let extra = capacity % task_count;
    Ok((0..task_count)
        .map(|i| base + usize::from(i < extra))
        .collect())
}

/// Uniform sample without replacement, returned in pool order.
pub fn select_random<T: Clone>(pool: &[T], n: usize, seed: u64) -> Vec<T> {
    if n >= pool.len() {
        return pool.to_vec();
    }
    let mut rng = rng_from(derive_seed(seed, "select-random", 0));
    let mut idx = sample(&mut rng, pool.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i].clone()).collect()
}

/// Splits `n` across classes as evenly as capacities allow. Classes are
/// visited in order; remainders go to the earliest classes with spare room.
pub fn stratified_allocation(capacities: &[usize], n: usize) -> Vec<usize> {
    let target = n.min(capacities.iter().sum());
    let mut alloc = vec![0; capacities.len()];
    let mut remaining = target;
    while remaining > 0 {
        let open: Vec<usize> = (0..capacities.len())
            .filter(|&c| alloc[c] < capacities[c])
            .collect();
        let share = remaining / open.len();
        let extra = remaining % open.len();
        for (rank, &c) in open.iter().enumerate() {
            let want = share + usize::from(rank < extra);
            let give = want.min(capacities[c] - alloc[c]);
            alloc[c] += give;
            remaining -= give;
        }
    }
    alloc
}

/// Equal count per label (with redistribution of deficits), uniform within label.
pub fn select_stratified(pool: &[LabeledInstance], n: usize, seed: u64) -> Vec<LabeledInstance> {
    if n >= pool.len() {
        return pool.to_vec();
    }
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in pool.iter().enumerate() {
        by_label.entry(inst.label.as_str()).or_default().push(i);
    }
    let groups: Vec<&Vec<usize>> = by_label.values().collect();
    let caps: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    let alloc = stratified_allocation(&caps, n);
    let mut chosen = Vec::with_capacity(n);
    for (ci, (group, k)) in groups.iter().zip(alloc).enumerate() {
        let mut rng = rng_from(derive_seed(seed, "select-stratified", ci as u64));
        chosen.extend(
            sample(&mut rng, group.len(), k)
                .into_iter()
                .map(|j| group[j]),
        );
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| pool[i].clone()).collect()
}

pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

fn sq_dist(x: &SparseVector, x_norm: f64, c: &[f64], c_norm: f64) -> f64 {
    (x_norm - 2.0 * x.dot(c) + c_norm).max(0.0)
}

fn nearest(x: &SparseVector, x_norm: f64, centroids: &[Vec<f64>], norms: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, (cen, &cn)) in centroids.iter().zip(norms).enumerate() {
        let d = sq_dist(x, x_norm, cen, cn);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's k-means with k-means++ seeding on Euclidean distance.
pub fn kmeans(points: &[SparseVector], k: usize, seed: u64) -> KMeans {
    assert!(k >= 1 && k <= points.len(), "k must be in 1..=points");
    let dim = points[0].dim;
    let norms: Vec<f64> = points.iter().map(SparseVector::norm_sq).collect();
    let mut rng = rng_from(derive_seed(seed, "kmeans++", 0));

    let mut chosen = vec![rng.gen_range(0..points.len())];
    let mut d2: Vec<f64> = vec![f64::INFINITY; points.len()];
    while chosen.len() < k {
        let last = points[*chosen.last().unwrap()].to_dense();
        let last_norm = norms[*chosen.last().unwrap()];
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, norms[i], &last, last_norm));
        }
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            pick.unwrap()
        } else {
            (0..points.len()).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
    }

    let mut centroids: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].to_dense()).collect();
    let mut c_norms: Vec<f64> = centroids
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    let mut assignments = vec![0; points.len()];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            assignments[i] = nearest(p, norms[i], &centroids, &c_norms).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (j, v) in p.iter() {
                sums[a][j] += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            let mut moved = 0.0;
            for (new, old) in sums[c].iter_mut().zip(&centroids[c]) {
                *new *= inv;
                moved += (*new - old).powi(2);
            }
            shift = shift.max(moved.sqrt());
            centroids[c] = std::mem::take(&mut sums[c]);
            c_norms[c] = centroids[c].iter().map(|v| v * v).sum();
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        assignments[i] = nearest(p, norms[i], &centroids, &c_norms).0;
    }
    KMeans {
        centroids,
        assignments,
        iterations,
    }
}

#[derive(Clone, Debug)]
pub struct ClusterSelection {
    /// Selected point indices, sorted.
    pub indices: Vec<usize>,
    /// For each cluster, the member nearest its centroid (None if empty).
    pub representatives: Vec<Option<usize>>,
    pub kmeans: Option<KMeans>,
}

/// Chooses `min(n, len)` points: one per k-means cluster, nearest to the
/// centroid (ties to the lowest index). Empty clusters are backfilled with the
/// unselected point farthest from its centroid.
pub fn cluster_select(points: &[SparseVector], n: usize, seed: u64) -> ClusterSelection {
    if n == 0 || points.is_empty() {
        return ClusterSelection {
            indices: Vec::new(),
            representatives: Vec::new(),
            kmeans: None,
        };
    }
    if n >= points.len() {
        let all: Vec<usize> = (0..points.len()).collect();
        return ClusterSelection {
            representatives: all.iter().map(|&i| Some(i)).collect(),
            indices: all,
            kmeans: None,
        };
    }
    let km = kmeans(points, n, seed);
    let c_norms: Vec<f64> = km
        .centroids
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    let dists: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let a = km.assignments[i];
            sq_dist(p, p.norm_sq(), &km.centroids[a], c_norms[a])
        })
        .collect();
    let mut reps: Vec<Option<usize>> = vec![None; n];
    for (i, &a) in km.assignments.iter().enumerate() {
        match reps[a] {
            Some(j) if dists[j] <= dists[i] => {}
            _ => reps[a] = Some(i),
        }
    }
    let mut selected: Vec<bool> = vec![false; points.len()];
    for r in reps.iter().flatten() {
        selected[*r] = true;
    }
    let missing = reps.iter().filter(|r| r.is_none()).count();
    for _ in 0..missing {
        let far =
            (0..points.len())
                .filter(|&i| !selected[i])
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
        if let Some(i) = far {
            selected[i] = true;
        }
    }
    ClusterSelection {
        indices: (0..points.len()).filter(|&i| selected[i]).collect(),
        representatives: reps,
        kmeans: Some(km),
    }
}

pub fn select_cluster(
    pool: &[LabeledInstance],
    n: usize,
    encoder: &dyn Encoder,
    seed: u64,
) -> Vec<LabeledInstance> {
    if n >= pool.len() {
        return pool.to_vec();
    }
    let points: Vec<SparseVector> = pool.iter().map(|x| encoder.encode(&x.text)).collect();
    cluster_select(&points, n, derive_seed(seed, "select-cluster", 0))
        .indices
        .into_iter()
        .map(|i| pool[i].clone())
        .collect()
}

/// Knowledge base handles used by augmentation-aware selection.
#[derive(Clone, Copy)]
pub struct Knowledge<'a> {
    pub graph: &'a KnowledgeGraph,
    pub trie: &'a MentionTrie,
}

/// Augments the pool, then cluster-selects from originals plus copies.
pub fn select_knowledge(
    pool: &[LabeledInstance],
    n: usize,
    encoder: &dyn Encoder,
    knowledge: Knowledge<'_>,
    augment: &AugmentConfig,
    seed: u64,
) -> Result<Vec<LabeledInstance>> {
    let combined = augment_dataset(pool, knowledge.graph, knowledge.trie, augment)?;
    Ok(select_cluster(&combined, n, encoder, seed))
}

/// Inputs needed by [`MemoryBuffer::update`].
#[derive(Clone, Copy)]
pub struct SelectionContext<'a> {
    pub encoder: &'a dyn Encoder,
    pub knowledge: Option<Knowledge<'a>>,
    /// Pre-selection augmentation for the knowledge strategy. When `None`
    /// the knowledge strategy selects exactly like the cluster strategy.
    pub augment: Option<&'a AugmentConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryBuffer {
    config: BufferConfig,
    per_task: BTreeMap<usize, Vec<LabeledInstance>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferManifest {
    pub capacity: usize,
    pub strategy: BufferStrategy,
    pub per_task_counts: BTreeMap<usize, usize>,
}

#[derive(Serialize)]
struct SnapshotRow<'a> {
    task: usize,
    label: &'a str,
    text: &'a str,
    provenance: Provenance,
    source_id: Option<&'a str>,
}

impl MemoryBuffer {
    pub fn new(config: BufferConfig) -> Self {
        MemoryBuffer {
            config,
            per_task: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &BufferConfig {
        &self.config
    }

    pub fn task_count(&self) -> usize {
        self.per_task.len()
    }

    pub fn len(&self) -> usize {
        self.per_task.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self, task: usize) -> &[LabeledInstance] {
        self.per_task.get(&task).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn counts(&self) -> BTreeMap<usize, usize> {
        self.per_task.iter().map(|(t, v)| (*t, v.len())).collect()
    }

    /// All exemplars in task order.
    pub fn contents(&self) -> Vec<LabeledInstance> {
        self.per_task.values().flatten().cloned().collect()
    }

    fn select(
        &self,
        pool: &[LabeledInstance],
        n: usize,
        ctx: &SelectionContext<'_>,
        seed: u64,
        fresh: bool,
    ) -> Result<Vec<LabeledInstance>> {
        Ok(match self.config.strategy {
            BufferStrategy::Random => select_random(pool, n, seed),
            BufferStrategy::Stratified => select_stratified(pool, n, seed),
            BufferStrategy::Cluster => select_cluster(pool, n, ctx.encoder, seed),
            BufferStrategy::Knowledge => match (fresh, ctx.knowledge, ctx.augment) {
                (true, Some(k), Some(aug)) => select_knowledge(pool, n, ctx.encoder, k, aug, seed)?,
                _ => select_cluster(pool, n, ctx.encoder, seed),
            },
        })
    }

    /// Adds `task`, shrinking earlier tasks to the new quota. Returns a new
    /// buffer; `self` is untouched.
    pub fn update(
        &self,
        task: usize,
        train_pool: &[LabeledInstance],
        ctx: &SelectionContext<'_>,
    ) -> Result<MemoryBuffer> {
        if self.per_task.contains_key(&task) {
            return Err(Error::Config(format!("task {task} is already buffered")));
        }
        let t = self.per_task.len() + 1;
        let quotas = quota(self.config.capacity, t)?;
        let mut next = MemoryBuffer::new(self.config.clone());
        for ((&old_task, stored), &q) in self.per_task.iter().zip(&quotas) {
            let seed = derive_seed(
                self.config.seed,
                "downselect",
                (old_task * 1_000 + t) as u64,
            );
            let kept = if stored.len() <= q {
                stored.clone()
            } else {
                self.select(stored, q, ctx, seed, false)?
            };
            next.per_task.insert(old_task, kept);
        }
        let seed = derive_seed(self.config.seed, "select-new", task as u64);
        let chosen = self.select(train_pool, quotas[t - 1], ctx, seed, true)?;
        next.per_task.insert(task, chosen);
        debug_assert!(next.len() <= self.config.capacity);
        Ok(next)
    }

    /// Checks capacity and per-task quotas; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.len() > self.config.capacity {
            return Err(format!(
                "{} exemplars exceed capacity {}",
                self.len(),
                self.config.capacity
            ));
        }
        if self.per_task.is_empty() {
            return Ok(());
        }
        let quotas = quota(self.config.capacity, self.per_task.len()).map_err(|e| e.to_string())?;
        for ((task, stored), q) in self.per_task.iter().zip(quotas) {
            if stored.len() > q {
                return Err(format!("task {task} holds {} > quota {q}", stored.len()));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> BufferManifest {
        BufferManifest {
            capacity: self.config.capacity,
            strategy: self.config.strategy,
            per_task_counts: self.counts(),
        }
    }

    /// JSONL rows `{task, label, text, provenance, source_id}`.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        for inst in self.per_task.values().flatten() {
            let row = SnapshotRow {
                task: inst.task,
                label: &inst.label,
                text: &inst.text,
                provenance: inst.provenance,
                source_id: inst.source_id.as_deref(),
            };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("<snapshot>", e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::HashedEncoder;

    fn items(spec: &[(&str, usize)]) -> Vec<LabeledInstance> {
        let mut out = Vec::new();
        for (label, count) in spec {
            for i in 0..*count {
                out.push(LabeledInstance::original(
                    format!("{label}{i}"),
                    format!("{label} text {i}"),
                    *label,
                    0,
                ));
            }
        }
        out
    }

    #[test]
    fn quota_values() {
        assert_eq!(quota(500, 5).unwrap(), vec![100; 5]);
        assert_eq!(quota(500, 1).unwrap(), vec![500]);
        assert_eq!(quota(10, 3).unwrap(), vec![4, 3, 3]);
        assert_eq!(quota(500, 2).unwrap(), vec![250, 250]);
        assert!(matches!(quota(2, 3), Err(Error::CapacityExhausted { .. })));
        assert!(quota(5, 0).is_err());
    }

    #[test]
    fn random_selection_sizes() {
        let pool = items(&[("a", 5)]);
        assert!(select_random(&pool, 0, 1).is_empty());
        assert_eq!(select_random(&pool, 9, 1), pool);
        assert_eq!(select_random(&pool, 2, 1).len(), 2);
    }

    #[test]
    fn stratified_even_split() {
        let pool = items(&[("A", 10), ("B", 10)]);
        let s = select_stratified(&pool, 6, 0);
        assert_eq!(s.iter().filter(|x| x.label == "A").count(), 3);
        assert_eq!(s.iter().filter(|x| x.label == "B").count(), 3);
    }

    #[test]
    fn stratified_redistributes_deficit() {
        let pool = items(&[("A", 1), ("B", 10)]);
        let s = select_stratified(&pool, 6, 0);
        assert_eq!(s.iter().filter(|x| x.label == "A").count(), 1);
        assert_eq!(s.iter().filter(|x| x.label == "B").count(), 5);
        let single = items(&[("A", 10)]);
        assert_eq!(select_stratified(&single, 4, 0).len(), 4);
    }

    #[test]
    fn allocation_remainder_goes_to_earliest() {
        assert_eq!(stratified_allocation(&[10, 10, 10], 7), vec![3, 2, 2]);
        assert_eq!(stratified_allocation(&[2, 10, 1], 9), vec![2, 6, 1]);
        assert_eq!(stratified_allocation(&[2, 2], 9), vec![2, 2]);
    }

    #[test]
    fn cluster_selection_whole_pool_when_small() {
        let pool = items(&[("a", 3)]);
        let enc = HashedEncoder::new(64);
        assert_eq!(select_cluster(&pool, 3, &enc, 0), pool);
        assert_eq!(select_cluster(&pool, 10, &enc, 0), pool);
    }

    #[test]
    fn update_respects_quotas_and_rejects_repeats() {
        let enc = HashedEncoder::new(64);
        let ctx = SelectionContext {
            encoder: &enc,
            knowledge: None,
            augment: None,
        };
        let mut buf = MemoryBuffer::new(BufferConfig {
            capacity: 10,
            strategy: BufferStrategy::Random,
            seed: 3,
        });
        for task in 0..3 {
            let pool: Vec<_> = items(&[("x", 8)])
                .into_iter()
                .map(|mut i| {
                    i.task = task;
                    i
                })
                .collect();
            buf = buf.update(task, &pool, &ctx).unwrap();
            buf.check_invariants().unwrap();
        }
        assert_eq!(
            buf.counts().into_values().collect::<Vec<_>>(),
            vec![4, 3, 3]
        );
        assert!(buf.update(1, &[], &ctx).is_err());
    }

    #[test]
    fn first_task_smaller_than_quota_is_kept_whole() {
        let enc = HashedEncoder::new(64);
        let ctx = SelectionContext {
            encoder: &enc,
            knowledge: None,
            augment: None,
        };
        let pool = items(&[("a", 7)]);
        let buf = MemoryBuffer::new(BufferConfig::default())
            .update(0, &pool, &ctx)
            .unwrap();
        assert_eq!(buf.task(0), &pool[..]);
    }
}
