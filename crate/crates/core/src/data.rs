//! Task streams for class-incremental learning.
//!
//! Records are grouped into tasks by their `target` attribute and labels are
//! namespaced as `target:label`, so the same raw label in two tasks yields two
//! distinct classes. Training splits above the cap are subsampled.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::augment::LabeledInstance;
use crate::kb::{KnowledgeGraph, KnowledgeTriple, Predicate, WordSense};
use crate::semantics::DefinitionExample;
use crate::util::{derive_seed, rng_from, Rng};
use crate::{Error, Result};

pub const DEFAULT_TRAIN_CAP: usize = 2000;
pub const LABEL_SEPARATOR: char = ':';

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "valid" | "validation" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub text: String,
    pub label: String,
    pub target: String,
    pub split: Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Jsonl,
    Csv,
}

impl RecordFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "json" => Some(RecordFormat::Jsonl),
            "csv" => Some(RecordFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadedRecords {
    pub records: Vec<RawRecord>,
    pub skipped: usize,
    /// 1-based row numbers of skipped rows (data rows for CSV, lines for JSONL).
    pub skipped_rows: Vec<usize>,
}

const FIELDS: [&str; 4] = ["text", "label", "target", "split"];

fn record_from_fields(
    get: impl Fn(&str) -> Option<String>,
) -> std::result::Result<RawRecord, String> {
    let mut vals = Vec::with_capacity(4);
    for f in FIELDS {
        match get(f) {
            Some(v) if !v.trim().is_empty() => vals.push(v),
            _ => return Err(format!("missing `{f}`")),
        }
    }
    let split = vals[3].parse()?;
    Ok(RawRecord {
        text: vals[0].clone(),
        label: vals[1].trim().to_string(),
        target: vals[2].trim().to_string(),
        split,
    })
}

fn keep_or_fail(
    out: &mut LoadedRecords,
    row: usize,
    parsed: std::result::Result<RawRecord, String>,
    strict: bool,
) -> Result<()> {
    match parsed {
        Ok(r) => out.records.push(r),
        Err(message) if strict => return Err(Error::Record { line: row, message }),
        Err(_) => {
            out.skipped += 1;
            out.skipped_rows.push(row);
        }
    }
    Ok(())
}

pub fn read_records_jsonl<R: BufRead>(reader: R, strict: bool) -> Result<LoadedRecords> {
    let mut out = LoadedRecords::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<serde_json::Value>(&line)
            .map_err(|e| e.to_string())
            .and_then(|v| {
                record_from_fields(|f| v.get(f).and_then(|x| x.as_str()).map(str::to_string))
            });
        keep_or_fail(&mut out, i + 1, parsed, strict)?;
    }
    Ok(out)
}

pub fn read_records_csv<R: Read>(reader: R, strict: bool) -> Result<LoadedRecords> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) if e.is_io_error() => return Err(e.into()),
        Err(e) => return Err(Error::Format(format!("malformed header: {e}"))),
    };
    if headers.is_empty() {
        return Ok(LoadedRecords::default());
    }
    let mut cols = BTreeMap::new();
    for f in FIELDS {
        let idx = headers
            .iter()
            .position(|h| h.trim() == f)
            .ok_or_else(|| Error::MissingColumn(f.to_string()))?;
        cols.insert(f, idx);
    }
    let mut out = LoadedRecords::default();
    for (i, row) in rdr.records().enumerate() {
        let parsed = row
            .map_err(|e| e.to_string())
            .and_then(|r| record_from_fields(|f| r.get(cols[f]).map(str::to_string)));
        keep_or_fail(&mut out, i + 1, parsed, strict)?;
    }
    Ok(out)
}

pub fn load_records(path: &Path, format: RecordFormat, strict: bool) -> Result<LoadedRecords> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        RecordFormat::Jsonl => read_records_jsonl(BufReader::new(file), strict),
        RecordFormat::Csv => read_records_csv(file, strict),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum TaskOrder {
    /// Targets in the given order; targets not listed are left out.
    Explicit { targets: Vec<String> },
    /// Sorted target names shuffled with `seed`.
    Shuffled { seed: u64 },
    /// Sorted target names.
    Sorted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub order: TaskOrder,
    pub train_cap: Option<usize>,
    pub cap_seed: u64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        StreamSpec {
            order: TaskOrder::Sorted,
            train_cap: Some(DEFAULT_TRAIN_CAP),
            cap_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskBundle {
    pub task_id: usize,
    pub name: String,
    pub classes: Vec<String>,
    pub train: Vec<LabeledInstance>,
    pub valid: Vec<LabeledInstance>,
    pub test: Vec<LabeledInstance>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStream {
    pub tasks: Vec<TaskBundle>,
    pub order_seed: Option<u64>,
    pub cap: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub name: String,
    pub classes: Vec<String>,
    pub counts: SplitCounts,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub tasks: Vec<TaskManifest>,
    pub order_seed: Option<u64>,
    pub cap: Option<usize>,
}

pub fn namespaced(target: &str, label: &str) -> String {
    format!("{target}{LABEL_SEPARATOR}{label}")
}

impl TaskStream {
    pub fn manifest(&self) -> StreamManifest {
        StreamManifest {
            tasks: self
                .tasks
                .iter()
                .map(|t| TaskManifest {
                    name: t.name.clone(),
                    classes: t.classes.clone(),
                    counts: SplitCounts {
                        train: t.train.len(),
                        valid: t.valid.len(),
                        test: t.test.len(),
                    },
                })
                .collect(),
            order_seed: self.order_seed,
            cap: self.cap,
        }
    }

    pub fn total_classes(&self) -> usize {
        self.tasks.iter().map(|t| t.classes.len()).sum()
    }
}

/// Groups records into namespaced tasks, caps training splits and orders tasks.
pub fn build_stream(records: &[RawRecord], spec: &StreamSpec) -> Result<TaskStream> {
    let mut by_target: BTreeMap<&str, [Vec<&RawRecord>; 3]> = BTreeMap::new();
    for r in records {
        let slot = match r.split {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        };
        by_target.entry(r.target.as_str()).or_default()[slot].push(r);
    }
    let mut names: Vec<String> = match &spec.order {
        TaskOrder::Explicit { targets } => {
            let mut seen = BTreeSet::new();
            for t in targets {
                if !by_target.contains_key(t.as_str()) {
                    return Err(Error::Stream(format!("task `{t}` has no records")));
                }
                if !seen.insert(t) {
                    return Err(Error::Stream(format!("task `{t}` is listed twice")));
                }
            }
            targets.clone()
        }
        TaskOrder::Shuffled { .. } | TaskOrder::Sorted => {
            by_target.keys().map(|s| s.to_string()).collect()
        }
    };
    let order_seed = match spec.order {
        TaskOrder::Shuffled { seed } => {
            names.shuffle(&mut rng_from(derive_seed(seed, "task-order", 0)));
            Some(seed)
        }
        _ => None,
    };

    let mut tasks = Vec::with_capacity(names.len());
    for (task_id, name) in names.iter().enumerate() {
        let [train, valid, test] = &by_target[name.as_str()];
        if train.is_empty() || test.is_empty() {
            return Err(Error::Stream(format!(
                "task `{name}` has {} train and {} test instances",
                train.len(),
                test.len()
            )));
        }
        let kept: Vec<usize> = match spec.train_cap {
            Some(cap) if train.len() > cap => {
                let mut rng = rng_from(derive_seed(spec.cap_seed, name, 0));
                let mut idx = sample(&mut rng, train.len(), cap).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..train.len()).collect(),
        };
        let convert = |split: &str, rs: &mut dyn Iterator<Item = (usize, &RawRecord)>| {
            rs.map(|(i, r)| {
                LabeledInstance::original(
                    format!("{name}/{split}/{i}"),
                    r.text.clone(),
                    namespaced(name, &r.label),
                    task_id,
                )
            })
            .collect::<Vec<_>>()
        };
        let train = convert("train", &mut kept.iter().map(|&i| (i, train[i])));
        let valid = convert("valid", &mut valid.iter().copied().enumerate());
        let test = convert("test", &mut test.iter().copied().enumerate());
        let classes: BTreeSet<String> = train
            .iter()
            .chain(&valid)
            .chain(&test)
            .map(|i| i.label.clone())
            .collect();
        tasks.push(TaskBundle {
            task_id,
            name: name.clone(),
            classes: classes.into_iter().collect(),
            train,
            valid,
            test,
        });
    }
    Ok(TaskStream {
        tasks,
        order_seed,
        cap: spec.train_cap,
    })
}

/// Reassigns splits per target with a seeded shuffle. Convenience for corpora
/// that ship without a validation/test partition.
pub fn resplit(
    records: &[RawRecord],
    valid_frac: f64,
    test_frac: f64,
    seed: u64,
) -> Vec<RawRecord> {
    let mut by_target: BTreeMap<&str, Vec<&RawRecord>> = BTreeMap::new();
    for r in records {
        by_target.entry(r.target.as_str()).or_default().push(r);
    }
    let mut out = Vec::with_capacity(records.len());
    for (target, mut rs) in by_target {
        rs.shuffle(&mut rng_from(derive_seed(seed, target, 1)));
        let n = rs.len() as f64;
        let n_valid = (n * valid_frac).round() as usize;
        let n_test = (n * test_frac).round() as usize;
        for (i, r) in rs.into_iter().enumerate() {
            let split = if i < n_valid {
                Split::Valid
            } else if i < n_valid + n_test {
                Split::Test
            } else {
                Split::Train
            };
            out.push(RawRecord { split, ..r.clone() });
        }
    }
    out
}

/// Published per-task split sizes (train counts are before capping).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PublishedTask {
    pub name: &'static str,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub classes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PublishedDataset {
    pub id: &'static str,
    pub name: &'static str,
    pub tasks: &'static [PublishedTask],
}

const fn task(
    name: &'static str,
    train: usize,
    valid: usize,
    test: usize,
    classes: usize,
) -> PublishedTask {
    PublishedTask {
        name,
        train,
        valid,
        test,
        classes,
    }
}

impl PublishedDataset {
    /// The task order used in the published experiments.
    pub fn task_order(&self) -> TaskOrder {
        TaskOrder::Explicit {
            targets: self.tasks.iter().map(|t| t.name.to_string()).collect(),
        }
    }
}

pub const PUBLISHED_DATASETS: [PublishedDataset; 3] = [
    PublishedDataset {
        id: "D_B",
        name: "Civil Comments",
        tasks: &[
            task("Religion", 4000, 200, 400, 2),
            task("Gender", 4000, 200, 400, 2),
            task("Race ethnicity", 4000, 200, 400, 2),
            task("Sexuality", 3238, 200, 400, 2),
            task("Disability", 2557, 200, 400, 2),
        ],
    },
    PublishedDataset {
        id: "D_H",
        name: "HateXplain",
        tasks: &[
            task("Refugee", 99, 100, 300, 2),
            task("Homosexual", 410, 100, 300, 2),
            task("Muslim", 272, 150, 450, 3),
            task("Women", 560, 100, 300, 2),
            task("African", 1062, 150, 450, 3),
        ],
    },
    PublishedDataset {
        id: "D_K",
        name: "Kennedy et al.",
        tasks: &[
            task("Religion", 1692, 300, 600, 3),
            task("Origin", 1367, 300, 600, 3),
            task("Race", 3269, 300, 600, 3),
            task("Sexuality", 1447, 300, 600, 3),
            task("Gender", 6000, 300, 600, 3),
        ],
    },
];

pub fn published_dataset(id: &str) -> Option<&'static PublishedDataset> {
    PUBLISHED_DATASETS.iter().find(|d| d.id == id)
}

/// Compares raw record counts per target with a published manifest and
/// returns one message per mismatch.
pub fn check_against_manifest(records: &[RawRecord], dataset: &PublishedDataset) -> Vec<String> {
    let mut counts: BTreeMap<&str, ([usize; 3], BTreeSet<&str>)> = BTreeMap::new();
    for r in records {
        let e = counts.entry(r.target.as_str()).or_default();
        e.0[r.split as usize] += 1;
        e.1.insert(r.label.as_str());
    }
    let mut problems = Vec::new();
    for t in dataset.tasks {
        match counts.get(t.name) {
            None => problems.push(format!("{}: task `{}` is missing", dataset.id, t.name)),
            Some((c, labels)) => {
                let expected = [t.train, t.valid, t.test];
                for (split, (got, want)) in ["train", "valid", "test"]
                    .iter()
                    .zip(c.iter().zip(expected))
                {
                    if *got != want {
                        problems.push(format!(
                            "{}/{}: {split} has {got}, expected {want}",
                            dataset.id, t.name
                        ));
                    }
                }
                if labels.len() != t.classes {
                    problems.push(format!(
                        "{}/{}: {} classes, expected {}",
                        dataset.id,
                        t.name,
                        labels.len(),
                        t.classes
                    ));
                }
            }
        }
    }
    problems
}

/// Parameters of the synthetic drift stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub tasks: usize,
    pub classes_per_task: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Distinct keywords per class.
    pub keywords_per_class: usize,
    /// Synonym terms per keyword; these never occur in training text.
    pub paraphrases_per_keyword: usize,
    pub keywords_per_text: usize,
    pub filler_per_text: usize,
    pub filler_vocab: usize,
    /// Probability that a keyword slot of a valid/test text uses a paraphrase.
    /// At least one slot keeps its training keyword, except in the unseen
    /// fraction below.
    pub eval_paraphrase_rate: f64,
    /// Fraction of valid/test texts per class whose keyword slots are all
    /// paraphrases, so they are only solvable through synonym knowledge.
    pub eval_unseen_fraction: f64,
    /// Adds a second, opposite-relevance sense to every keyword whose synonym
    /// is a paraphrase belonging to another class of the same task.
    pub distractor_senses: bool,
    /// Size of the generated definition-relevance training set.
    pub definitions: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            tasks: 5,
            classes_per_task: 2,
            train: 200,
            valid: 50,
            test: 100,
            keywords_per_class: 20,
            paraphrases_per_keyword: 2,
            keywords_per_text: 4,
            filler_per_text: 2,
            filler_vocab: 40,
            eval_paraphrase_rate: 0.5,
            eval_unseen_fraction: 0.04,
            distractor_senses: true,
            definitions: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub stream: TaskStream,
    /// Unscored companion graph.
    pub graph: KnowledgeGraph,
    /// Training data for the definition relevance model.
    pub definitions: Vec<DefinitionExample>,
    /// Labels to treat as deviant.
    pub deviant_labels: BTreeSet<String>,
}

const THEMES: [&str; 8] = [
    "religion",
    "gender",
    "race",
    "sexuality",
    "disability",
    "origin",
    "age",
    "class",
];
const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Deterministic three-syllable pseudo-word for an index (injective below 70^3).
fn pseudo_word(mut i: usize) -> String {
    let mut s = String::with_capacity(6);
    for _ in 0..3 {
        let syl = i % 70;
        i /= 70;
        s.push(CONSONANTS[syl / 5] as char);
        s.push(VOWELS[syl % 5] as char);
    }
    s
}

fn class_label(c: usize) -> String {
    match c {
        0 => "hateful".into(),
        1 => "normal".into(),
        2 => "offensive".into(),
        n => format!("class{n}"),
    }
}

fn is_deviant_label(label: &str) -> bool {
    label == "hateful" || label == "offensive"
}

const RELEVANT_GLOSS: [&str; 10] = [
    "derogatory",
    "offensive",
    "slur",
    "insulting",
    "pejorative",
    "hateful",
    "ethnic",
    "contemptuous",
    "vulgar",
    "disparaging",
];
const NEUTRAL_GLOSS: [&str; 12] = [
    "ornament",
    "tool",
    "container",
    "plant",
    "food",
    "vehicle",
    "garment",
    "musical",
    "instrument",
    "printing",
    "kitchen",
    "garden",
];
const GLUE: [&str; 12] = [
    "a", "an", "of", "for", "the", "used", "kind", "small", "person", "object", "term", "type",
];

fn gloss(rng: &mut Rng, relevant: bool) -> String {
    let pool: &[&str] = if relevant {
        &RELEVANT_GLOSS
    } else {
        &NEUTRAL_GLOSS
    };
    let mut words: Vec<&str> = (0..2).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
    words.extend((0..3).map(|_| GLUE[rng.gen_range(0..GLUE.len())]));
    words.shuffle(rng);
    if relevant {
        format!("({}) {}", words[0], words[1..].join(" "))
    } else {
        words.join(" ")
    }
}

struct Vocabulary {
    filler: Vec<String>,
    /// [task][class][keyword]
    keywords: Vec<Vec<Vec<String>>>,
    /// [task][class][keyword][paraphrase]
    paraphrases: Vec<Vec<Vec<Vec<String>>>>,
}

fn vocabulary(spec: &SyntheticSpec) -> Vocabulary {
    let mut next = 0usize;
    let mut fresh = || {
        next += 1;
        pseudo_word(next * 7919 % 343_000)
    };
    let filler = (0..spec.filler_vocab).map(|_| fresh()).collect();
    let mut keywords = Vec::new();
    let mut paraphrases = Vec::new();
    for _ in 0..spec.tasks {
        let mut kt = Vec::new();
        let mut pt = Vec::new();
        for _ in 0..spec.classes_per_task {
            let ks: Vec<String> = (0..spec.keywords_per_class).map(|_| fresh()).collect();
            let ps: Vec<Vec<String>> = ks
                .iter()
                .map(|_| (0..spec.paraphrases_per_keyword).map(|_| fresh()).collect())
                .collect();
            kt.push(ks);
            pt.push(ps);
        }
        keywords.push(kt);
        paraphrases.push(pt);
    }
    Vocabulary {
        filler,
        keywords,
        paraphrases,
    }
}

/// Generates a stream whose classes are separable by task-specific keywords,
/// plus a graph mapping every keyword to synonym terms that occur only in
/// evaluation text.
pub fn make_synthetic_stream(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticCorpus> {
    if spec.tasks == 0 || spec.classes_per_task == 0 || spec.keywords_per_class == 0 {
        return Err(Error::Config(
            "synthetic spec needs tasks, classes and keywords".into(),
        ));
    }
    if spec.tasks > THEMES.len() * 10 {
        return Err(Error::Config("too many synthetic tasks".into()));
    }
    let vocab = vocabulary(spec);
    let mut rng = rng_from(derive_seed(seed, "synthetic", 0));
    let task_name = |j: usize| {
        if j < THEMES.len() {
            THEMES[j].to_string()
        } else {
            format!("{}{}", THEMES[j % THEMES.len()], j / THEMES.len())
        }
    };

    let mut records = Vec::new();
    for j in 0..spec.tasks {
        for (split, per_task, paraphrase_rate) in [
            (Split::Train, spec.train, 0.0),
            (Split::Valid, spec.valid, spec.eval_paraphrase_rate),
            (Split::Test, spec.test, spec.eval_paraphrase_rate),
        ] {
            let per_class = per_task.div_ceil(spec.classes_per_task);
            let unseen = if split == Split::Train {
                0
            } else {
                (per_class as f64 * spec.eval_unseen_fraction).round() as usize
            };
            for i in 0..per_task {
                let c = i % spec.classes_per_task;
                let all_paraphrased = i / spec.classes_per_task < unseen;
                let mut slots: Vec<(usize, bool)> = (0..spec.keywords_per_text)
                    .map(|_| {
                        let k = rng.gen_range(0..spec.keywords_per_class);
                        (k, all_paraphrased || rng.gen::<f64>() < paraphrase_rate)
                    })
                    .collect();
                if !all_paraphrased && slots.iter().all(|s| s.1) {
                    let keep = rng.gen_range(0..slots.len());
                    slots[keep].1 = false;
                }
                let mut words: Vec<&str> = Vec::new();
                for (k, paraphrased) in slots {
                    let ps = &vocab.paraphrases[j][c][k];
                    if paraphrased && !ps.is_empty() {
                        words.push(&ps[rng.gen_range(0..ps.len())]);
                    } else {
                        words.push(&vocab.keywords[j][c][k]);
                    }
                }
                for _ in 0..spec.filler_per_text {
                    words.push(&vocab.filler[rng.gen_range(0..vocab.filler.len())]);
                }
                words.shuffle(&mut rng);
                records.push(RawRecord {
                    text: words.join(" "),
                    label: class_label(c),
                    target: task_name(j),
                    split,
                });
            }
        }
    }
    let stream = build_stream(
        &records,
        &StreamSpec {
            order: TaskOrder::Explicit {
                targets: (0..spec.tasks).map(task_name).collect(),
            },
            train_cap: None,
            cap_seed: 0,
        },
    )?;

    let mut senses = Vec::new();
    let mut triples = Vec::new();
    let mut gloss_rng = rng_from(derive_seed(seed, "synthetic-gloss", 0));
    for j in 0..spec.tasks {
        for c in 0..spec.classes_per_task {
            let deviant = is_deviant_label(&class_label(c));
            for (k, word) in vocab.keywords[j][c].iter().enumerate() {
                let primary = WordSense::new(word, "noun", &gloss(&mut gloss_rng, deviant));
                for p in &vocab.paraphrases[j][c][k] {
                    triples.push(KnowledgeTriple {
                        subject: primary.sense_id.clone(),
                        predicate: Predicate::Synonym,
                        object: p.clone(),
                    });
                }
                senses.push(primary);
                if spec.distractor_senses && spec.classes_per_task > 1 {
                    let other = (c + 1) % spec.classes_per_task;
                    let ps = &vocab.paraphrases[j][other][k % spec.keywords_per_class];
                    let secondary = WordSense::new(word, "noun", &gloss(&mut gloss_rng, !deviant));
                    if let Some(p) = ps.first() {
                        triples.push(KnowledgeTriple {
                            subject: secondary.sense_id.clone(),
                            predicate: Predicate::Synonym,
                            object: p.clone(),
                        });
                    }
                    senses.push(secondary);
                }
            }
        }
    }
    let graph = KnowledgeGraph::from_parts(senses, triples)?;

    let mut def_rng = rng_from(derive_seed(seed, "synthetic-definitions", 0));
    let definitions = (0..spec.definitions)
        .map(|i| {
            let relevant = i % 2 == 0;
            DefinitionExample {
                gloss: gloss(&mut def_rng, relevant),
                relevant,
            }
        })
        .collect();

    let deviant_labels = (0..spec.classes_per_task)
        .map(class_label)
        .filter(|l| is_deviant_label(l))
        .collect();
    Ok(SyntheticCorpus {
        stream,
        graph,
        definitions,
        deviant_labels,
    })
}
