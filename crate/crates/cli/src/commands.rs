use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use kgreplay::augment::{augment_dataset, AugmentConfig, AugmentStrategy, LabeledInstance};
use kgreplay::continual::{
    run_seed, seed_report, ContinualLearner, ExperimentReport, KnowledgeBase, SeedReport,
};
use kgreplay::data::{
    build_stream, load_records, make_synthetic_stream, RawRecord, RecordFormat, TaskStream,
};
use kgreplay::eval::{forgetting, Metric};
use kgreplay::kb::{ingest_dump, IngestOptions, IngestStats, KnowledgeGraph, Predicate, Relevance};
use kgreplay::learner::{encoder_from_descriptor, Encoder, ModelCheckpoint};
use kgreplay::mention::{extract_mentions, tokenize, MentionTrie};
use kgreplay::semantics::{
    derive_definition_dataset, read_definition_csv, score_graph, split_holdout,
    train_definition_model, DefinitionExample, DefinitionModel, DefinitionTrainConfig,
};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("cannot parse {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

pub fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    read_json(path)
}

pub fn kb_build(dump: &Path, out: &Path, strict: bool, tsv: Option<&Path>) -> Result<IngestStats> {
    let file = File::open(dump).with_context(|| format!("cannot open {}", dump.display()))?;
    let (graph, stats) = ingest_dump(BufReader::new(file), IngestOptions { strict })
        .with_context(|| format!("cannot ingest {}", dump.display()))?;
    write_json(out, &graph)?;
    if let Some(tsv) = tsv {
        let mut w = create(tsv)?;
        graph.export_tsv(&mut w)?;
        w.flush()?;
    }
    Ok(stats)
}

#[derive(Debug, Serialize)]
pub struct ScoreSummary {
    pub senses: usize,
    pub relevant: usize,
    pub not_relevant: usize,
    pub unscored: usize,
}

pub fn kb_score(kb: &Path, model: &Path, out: &Path) -> Result<ScoreSummary> {
    let graph = load_graph(kb)?;
    let model: DefinitionModel = read_json(model)?;
    model.validate()?;
    let scored = score_graph(&model, &graph);
    write_json(out, &scored)?;
    let mut summary = ScoreSummary {
        senses: scored.sense_count(),
        relevant: 0,
        not_relevant: 0,
        unscored: 0,
    };
    for s in scored.senses() {
        match s.relevance {
            Relevance::Relevant => summary.relevant += 1,
            Relevance::NotRelevant => summary.not_relevant += 1,
            Relevance::Unscored => summary.unscored += 1,
        }
    }
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct SemanticSummary {
    pub unique_definitions: usize,
    pub ties_dropped: usize,
    pub train_size: usize,
    pub held_out_size: usize,
    pub train_accuracy: f64,
    pub held_out_accuracy: Option<f64>,
}

pub fn semantic_train(
    definitions: &Path,
    out: &Path,
    held_out_fraction: f64,
    config: &DefinitionTrainConfig,
    seed: u64,
) -> Result<SemanticSummary> {
    if !(0.0..1.0).contains(&held_out_fraction) {
        bail!("held-out fraction must be in [0, 1)");
    }
    let file = File::open(definitions)
        .with_context(|| format!("cannot open {}", definitions.display()))?;
    let rows = read_definition_csv(file)?;
    let data = derive_definition_dataset(&rows)?;
    let (train, held_out) = split_holdout(&data.examples, held_out_fraction, seed);
    let model = train_definition_model(&train, config, seed)?;
    write_json(out, &model)?;
    Ok(SemanticSummary {
        unique_definitions: data.unique_definitions,
        ties_dropped: data.tie_count,
        train_size: train.len(),
        held_out_size: held_out.len(),
        train_accuracy: model.accuracy(&train),
        held_out_accuracy: (!held_out.is_empty()).then(|| model.accuracy(&held_out)),
    })
}

fn load_dataset(path: &Path, format: Option<RecordFormat>, strict: bool) -> Result<Vec<RawRecord>> {
    let format = format
        .or_else(|| RecordFormat::from_path(path))
        .ok_or_else(|| anyhow!("cannot infer the format of {}", path.display()))?;
    let loaded = load_records(path, format, strict)
        .with_context(|| format!("cannot load {}", path.display()))?;
    if loaded.skipped > 0 {
        eprintln!(
            "skipped {} malformed rows in {} (rows {:?})",
            loaded.skipped,
            path.display(),
            loaded.skipped_rows
        );
    }
    Ok(loaded.records)
}

pub struct AugmentArgs<'a> {
    pub input: &'a Path,
    pub kb: &'a Path,
    pub out: &'a Path,
    pub strategy: AugmentStrategy,
    pub replace_prob: f64,
    pub copies: usize,
    pub predicates: Vec<Predicate>,
    pub deviant_labels: Vec<String>,
    pub seed: u64,
}

/// Writes originals followed by augmented copies; returns the copy count.
pub fn augment(args: &AugmentArgs<'_>) -> Result<usize> {
    let records = load_dataset(args.input, None, false)?;
    let graph = load_graph(args.kb)?;
    let trie = MentionTrie::build(&graph);
    let config = AugmentConfig {
        strategy: args.strategy,
        replace_prob: args.replace_prob,
        predicates: args.predicates.clone(),
        copies_per_instance: args.copies,
        deviant_labels: args.deviant_labels.iter().cloned().collect(),
        seed: args.seed,
    };
    let instances: Vec<LabeledInstance> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            LabeledInstance::original(format!("row{i}"), r.text.clone(), r.label.clone(), 0)
        })
        .collect();
    let augmented = augment_dataset(&instances, &graph, &trie, &config)?;
    let index: BTreeMap<&str, usize> = instances
        .iter()
        .enumerate()
        .map(|(i, x)| (x.id.as_str(), i))
        .collect();
    let mut w = create(args.out)?;
    for inst in &augmented {
        let origin = inst.source_id.as_deref().unwrap_or(&inst.id);
        let r = &records[index[origin]];
        let row = json!({
            "text": inst.text,
            "label": inst.label,
            "target": r.target,
            "split": r.split,
            "provenance": inst.provenance,
            "source_id": inst.source_id,
            "replacements": inst.replacements,
        });
        serde_json::to_writer(&mut w, &row)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(augmented.len() - instances.len())
}

pub fn write_embeddings<'a, W: Write>(
    encoder: &dyn Encoder,
    rows: impl Iterator<Item = (&'a str, &'a str, &'a str)>,
    mut out: W,
) -> Result<usize> {
    let dim = encoder.dim();
    let header: Vec<String> = ["task".to_string(), "label".to_string()]
        .into_iter()
        .chain((0..dim).map(|d| format!("d{d}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    let mut n = 0;
    for (task, label, text) in rows {
        let dense = encoder.encode(text).to_dense();
        write!(out, "{},{}", csv_field(task), csv_field(label))?;
        for v in dense {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
        n += 1;
    }
    Ok(n)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn export_embeddings(
    input: &Path,
    encoder: Option<&str>,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<usize> {
    let descriptor = match (encoder, checkpoint) {
        (Some(d), None) => d.to_string(),
        (None, Some(p)) => read_json::<ModelCheckpoint>(p)?.encoder,
        _ => bail!("pass exactly one of --encoder or --checkpoint"),
    };
    let encoder = encoder_from_descriptor(&descriptor)?;
    let records = load_dataset(input, None, false)?;
    let mut w = create(out)?;
    let n = write_embeddings(
        encoder.as_ref(),
        records
            .iter()
            .map(|r| (r.target.as_str(), r.label.as_str(), r.text.as_str())),
        &mut w,
    )?;
    w.flush()?;
    Ok(n)
}

pub fn mentions<W: Write>(kb: &Path, texts: &[String], mut out: W) -> Result<()> {
    let graph = load_graph(kb)?;
    let trie = MentionTrie::build(&graph);
    for text in texts {
        let spans: Vec<_> = extract_mentions(&trie, &tokenize(text))
            .into_iter()
            .map(|m| {
                json!({
                    "start": m.start,
                    "end": m.end,
                    "surface": m.surface,
                    "senses": m.candidate_senses,
                })
            })
            .collect();
        serde_json::to_writer(&mut out, &json!({ "text": text, "spans": spans }))?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    Ok(lines)
}

fn write_definitions_csv(path: &Path, definitions: &[DefinitionExample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["text", "word", "definition", "label"])?;
    for d in definitions {
        let label = if d.relevant { "hateful" } else { "normal" };
        w.write_record(["", "", d.gloss.as_str(), label])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the synthetic stream as dataset JSONL, its companion graph and a
/// definitions CSV.
pub fn synthesize(out_dir: &Path, spec: &kgreplay::data::SyntheticSpec, seed: u64) -> Result<()> {
    let corpus = make_synthetic_stream(spec, seed)?;
    fs::create_dir_all(out_dir)?;
    let mut w = create(&out_dir.join("data.jsonl"))?;
    for task in &corpus.stream.tasks {
        for (split, items) in [
            ("train", &task.train),
            ("valid", &task.valid),
            ("test", &task.test),
        ] {
            for inst in items {
                let label = inst.label.rsplit(':').next().unwrap_or(&inst.label);
                let row =
                    json!({"text": inst.text, "label": label, "target": task.name, "split": split});
                serde_json::to_writer(&mut w, &row)?;
                writeln!(w)?;
            }
        }
    }
    w.flush()?;
    write_json(&out_dir.join("kb.json"), &corpus.graph)?;
    write_definitions_csv(&out_dir.join("definitions.csv"), &corpus.definitions)?;
    Ok(())
}

struct Prepared {
    stream: TaskStream,
    knowledge: Option<KnowledgeBase>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let (stream, companion, definitions) = match (&cfg.dataset.path, &cfg.dataset.synthetic) {
        (Some(path), _) => {
            let records = load_dataset(path, cfg.dataset.format, cfg.dataset.strict)?;
            (build_stream(&records, &cfg.stream_spec())?, None, None)
        }
        (None, Some(spec)) => {
            let corpus = make_synthetic_stream(spec, cfg.dataset.synthetic_seed)?;
            (corpus.stream, Some(corpus.graph), Some(corpus.definitions))
        }
        (None, None) => bail!("no dataset configured"),
    };
    let mut graph = match &cfg.kb {
        Some(p) => Some(load_graph(p)?),
        None => companion,
    };
    if let (Some(g), Some(model_path)) = (&graph, &cfg.semantic_model) {
        let model: DefinitionModel = read_json(model_path)?;
        model.validate()?;
        graph = Some(score_graph(&model, g));
    }
    let needs_scores = cfg.approach.augmentation() == Some(AugmentStrategy::Semantic);
    if let (Some(g), Some(defs), true) = (&graph, &definitions, needs_scores) {
        if !g.is_scored() {
            let model = train_definition_model(
                defs,
                &DefinitionTrainConfig::default(),
                cfg.dataset.synthetic_seed,
            )?;
            graph = Some(score_graph(&model, g));
        }
    }
    let knowledge = graph
        .filter(|_| cfg.approach.augmentation().is_some())
        .map(KnowledgeBase::new);
    cfg.experiment()
        .validate(cfg.approach, knowledge.as_ref())?;
    Ok(Prepared { stream, knowledge })
}

fn write_stage_artifacts(
    dir: &Path,
    learner: &ContinualLearner<'_>,
    checkpoints: bool,
) -> Result<()> {
    let stage = learner.stages().len() - 1;
    for metric in [Metric::Accuracy, Metric::Auc] {
        let mut w = create(&dir.join(format!("eval_{}.csv", metric.as_str())))?;
        learner.matrix().write_csv(metric, &mut w)?;
        w.flush()?;
    }
    write_json(&dir.join("stages.json"), learner.stages())?;
    if let Some(buffer) = learner.buffer() {
        let mut w = create(&dir.join("buffer.jsonl"))?;
        buffer.write_snapshot(&mut w)?;
        w.flush()?;
        write_json(&dir.join("buffer_manifest.json"), &buffer.manifest())?;
    }
    if checkpoints {
        let ck_dir = dir.join("checkpoints");
        fs::create_dir_all(&ck_dir)?;
        let file = format!("stage_{stage}.json");
        write_json(&ck_dir.join(&file), &learner.model().checkpoint())?;
        let manifest: Vec<_> = learner
            .stages()
            .iter()
            .map(|s| json!({"stage": s.stage, "task": s.task, "file": format!("stage_{}.json", s.stage)}))
            .collect();
        write_json(
            &ck_dir.join("manifest.json"),
            &json!({ "stages": manifest }),
        )?;
    }
    Ok(())
}

fn run_one(cfg: &RunConfig, prepared: &Prepared, out_dir: &Path, seed: u64) -> Result<SeedReport> {
    let dir = out_dir.join(format!("seed_{seed}"));
    fs::create_dir_all(&dir)?;
    let experiment = cfg.experiment();
    let learner = run_seed(
        &prepared.stream,
        cfg.approach,
        &experiment,
        seed,
        prepared.knowledge.as_ref(),
        &mut |l| {
            write_stage_artifacts(&dir, l, cfg.checkpoints).map_err(|e| kgreplay::Error::Io {
                path: dir.clone(),
                source: std::io::Error::other(format!("{e:#}")),
            })
        },
    )
    .with_context(|| {
        format!(
            "seed {seed} failed; partial artifacts are in {}",
            dir.display()
        )
    })?;
    let forgetting_report = json!({
        "A": forgetting(learner.matrix(), Metric::Accuracy)?,
        "AUC": forgetting(learner.matrix(), Metric::Auc)?,
    });
    write_json(&dir.join("forgetting.json"), &forgetting_report)?;
    Ok(seed_report(seed, learner.matrix())?)
}

/// Validates, then runs every seed and writes the run directory.
pub fn run(
    config_path: &Path,
    out: Option<&Path>,
    jobs: usize,
) -> Result<(PathBuf, ExperimentReport)> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(out) = out {
        cfg.output_dir = Some(std::path::absolute(out)?);
    }
    cfg.validate()?;
    let out_dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| anyhow!("no output directory: set `output_dir` or pass --out"))?;
    if jobs == 0 {
        bail!("--jobs must be positive");
    }
    let prepared = prepare(&cfg)?;

    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("resolved_config.toml"), cfg.to_toml()?)?;
    write_json(
        &out_dir.join("stream_manifest.json"),
        &prepared.stream.manifest(),
    )?;
    let encoder = encoder_from_descriptor(&cfg.encoder)?;
    let mut w = create(&out_dir.join("embeddings.csv"))?;
    let rows = prepared.stream.tasks.iter().flat_map(|t| {
        t.test
            .iter()
            .map(move |i| (t.name.as_str(), i.label.as_str(), i.text.as_str()))
    });
    write_embeddings(encoder.as_ref(), rows, &mut w)?;
    w.flush()?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let failures = Mutex::new(Vec::new());
    let per_seed: Vec<Option<SeedReport>> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| match run_one(&cfg, &prepared, &out_dir, seed) {
                Ok(r) => Some(r),
                Err(e) => {
                    failures.lock().expect("lock").push(format!("{e:#}"));
                    None
                }
            })
            .collect()
    });
    let failures = failures.into_inner().expect("lock");
    if !failures.is_empty() {
        bail!("{}", failures.join("\n"));
    }
    let report =
        ExperimentReport::from_seeds(cfg.approach, per_seed.into_iter().flatten().collect())?;
    write_json(&out_dir.join("report.json"), &report)?;
    Ok((out_dir, report))
}
