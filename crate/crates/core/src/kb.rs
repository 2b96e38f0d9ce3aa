//! Sense-level lexical knowledge graph.
//!
//! Each node is one sense of a word (a `(word, pos, gloss)` record) and edges
//! are typed triples `<sense, predicate, term>` restricted to forms, synonyms,
//! hyponyms and instances. The graph is built once from a line-delimited dump
//! and is read-only afterwards.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::util::{fnv1a, normalize};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SenseId(String);

impl SenseId {
    /// Content-derived id: 64-bit hash of `(word, pos, gloss)` as 16 hex digits.
    pub fn derive(word: &str, pos: &str, gloss: &str) -> Self {
        let h = fnv1a(&[word.as_bytes(), pos.as_bytes(), gloss.as_bytes()]);
        SenseId(format!("{h:016x}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SenseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SenseId {
    fn from(s: &str) -> Self {
        SenseId(s.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    Form,
    Synonym,
    Hyponym,
    Instance,
}

impl Predicate {
    pub const ALL: [Predicate; 4] = [
        Predicate::Form,
        Predicate::Synonym,
        Predicate::Hyponym,
        Predicate::Instance,
    ];

    /// Predicates used for span replacement.
    pub const REPLACEMENT: [Predicate; 3] =
        [Predicate::Synonym, Predicate::Hyponym, Predicate::Instance];

    /// Maps a dump relation key (`"synonyms"`) to its predicate.
    pub fn from_relation_key(key: &str) -> Option<Self> {
        match key {
            "forms" => Some(Predicate::Form),
            "synonyms" => Some(Predicate::Synonym),
            "hyponyms" => Some(Predicate::Hyponym),
            "instances" => Some(Predicate::Instance),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::Form => "form",
            Predicate::Synonym => "synonym",
            Predicate::Hyponym => "hyponym",
            Predicate::Instance => "instance",
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Predicate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "form" | "forms" => Ok(Predicate::Form),
            "synonym" | "synonyms" => Ok(Predicate::Synonym),
            "hyponym" | "hyponyms" => Ok(Predicate::Hyponym),
            "instance" | "instances" => Ok(Predicate::Instance),
            other => Err(Error::Config(format!("unknown predicate `{other}`"))),
        }
    }
}

/// Hate-speech relevance of a sense's definition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Relevant,
    NotRelevant,
    #[default]
    Unscored,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSense {
    pub sense_id: SenseId,
    pub lemma: String,
    pub pos: String,
    pub gloss: String,
    #[serde(default)]
    pub relevance: Relevance,
}

impl WordSense {
    pub fn new(lemma: &str, pos: &str, gloss: &str) -> Self {
        WordSense {
            sense_id: SenseId::derive(lemma, pos, gloss),
            lemma: lemma.to_string(),
            pos: pos.to_string(),
            gloss: gloss.to_string(),
            relevance: Relevance::Unscored,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub subject: SenseId,
    pub predicate: Predicate,
    pub object: String,
}

#[derive(Serialize, Deserialize)]
struct GraphDocument {
    senses: Vec<WordSense>,
    triples: Vec<KnowledgeTriple>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(try_from = "GraphDocument", into = "GraphDocument")]
pub struct KnowledgeGraph {
    senses: BTreeMap<SenseId, WordSense>,
    /// Sorted by (subject, predicate, object), no duplicates.
    triples: Vec<KnowledgeTriple>,
    by_subject: HashMap<SenseId, std::ops::Range<usize>>,
    lemma_index: BTreeMap<String, Vec<SenseId>>,
}

impl TryFrom<GraphDocument> for KnowledgeGraph {
    type Error = Error;

    fn try_from(doc: GraphDocument) -> Result<Self> {
        KnowledgeGraph::from_parts(doc.senses, doc.triples)
    }
}

impl From<KnowledgeGraph> for GraphDocument {
    fn from(g: KnowledgeGraph) -> Self {
        GraphDocument {
            senses: g.senses.into_values().collect(),
            triples: g.triples,
        }
    }
}

impl KnowledgeGraph {
    /// Assembles a graph, deduplicating senses by id and triples by value.
    /// Fails if a triple references an unknown subject or has a blank object.
    pub fn from_parts(senses: Vec<WordSense>, triples: Vec<KnowledgeTriple>) -> Result<Self> {
        let mut sense_map = BTreeMap::new();
        for s in senses {
            sense_map.entry(s.sense_id.clone()).or_insert(s);
        }
        for t in &triples {
            if !sense_map.contains_key(&t.subject) {
                return Err(Error::SenseNotFound(t.subject.to_string()));
            }
            if t.object.trim().is_empty() {
                return Err(Error::Format(format!(
                    "triple on {} has an empty object",
                    t.subject
                )));
            }
        }
        let mut triples = triples;
        triples.sort();
        triples.dedup();
        Ok(Self::index(sense_map, triples))
    }

    fn index(senses: BTreeMap<SenseId, WordSense>, triples: Vec<KnowledgeTriple>) -> Self {
        let mut by_subject: HashMap<SenseId, std::ops::Range<usize>> = HashMap::new();
        let mut start = 0;
        while start < triples.len() {
            let subject = &triples[start].subject;
            let mut end = start + 1;
            while end < triples.len() && &triples[end].subject == subject {
                end += 1;
            }
            by_subject.insert(subject.clone(), start..end);
            start = end;
        }
        let mut lemma_index: BTreeMap<String, Vec<SenseId>> = BTreeMap::new();
        for s in senses.values() {
            let key = normalize(&s.lemma);
            if !key.is_empty() {
                lemma_index.entry(key).or_default().push(s.sense_id.clone());
            }
        }
        KnowledgeGraph {
            senses,
            triples,
            by_subject,
            lemma_index,
        }
    }

    pub fn sense_count(&self) -> usize {
        self.senses.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senses.is_empty()
    }

    pub fn senses(&self) -> impl Iterator<Item = &WordSense> {
        self.senses.values()
    }

    pub fn triples(&self) -> &[KnowledgeTriple] {
        &self.triples
    }

    pub fn sense(&self, id: &SenseId) -> Option<&WordSense> {
        self.senses.get(id)
    }

    pub fn lemma_index(&self) -> &BTreeMap<String, Vec<SenseId>> {
        &self.lemma_index
    }

    /// Senses whose lemma normalizes to `lemma`.
    pub fn senses_for_lemma(&self, lemma: &str) -> &[SenseId] {
        self.lemma_index
            .get(&normalize(lemma))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// All triples with subject `sense`, in (predicate, object) order.
    pub fn triples_of(&self, sense: &SenseId) -> &[KnowledgeTriple] {
        match self.by_subject.get(sense) {
            Some(r) => &self.triples[r.clone()],
            None => &[],
        }
    }

    pub fn related_terms(
        &self,
        sense: &SenseId,
        predicates: &[Predicate],
    ) -> Result<Vec<(Predicate, String)>> {
        if !self.senses.contains_key(sense) {
            return Err(Error::SenseNotFound(sense.to_string()));
        }
        Ok(self
            .triples_of(sense)
            .iter()
            .filter(|t| predicates.contains(&t.predicate))
            .map(|t| (t.predicate, t.object.clone()))
            .collect())
    }

    /// The normalized lemma plus every `form` object of its senses.
    pub fn surface_forms(&self, lemma: &str) -> BTreeSet<String> {
        let key = normalize(lemma);
        let mut out = BTreeSet::new();
        if key.is_empty() {
            return out;
        }
        for id in self.senses_for_lemma(&key) {
            for t in self.triples_of(id) {
                if t.predicate == Predicate::Form {
                    out.insert(t.object.trim().to_string());
                }
            }
        }
        out.insert(key);
        out
    }

    /// True once at least one sense carries a relevance score.
    pub fn is_scored(&self) -> bool {
        self.senses
            .values()
            .any(|s| s.relevance != Relevance::Unscored)
    }

    /// Returns a copy with each sense's relevance replaced by `f(sense)`.
    pub fn with_relevance(&self, mut f: impl FnMut(&WordSense) -> Relevance) -> KnowledgeGraph {
        let senses = self
            .senses
            .iter()
            .map(|(id, s)| {
                let mut s = s.clone();
                s.relevance = f(&s);
                (id.clone(), s)
            })
            .collect();
        KnowledgeGraph {
            senses,
            triples: self.triples.clone(),
            by_subject: self.by_subject.clone(),
            lemma_index: self.lemma_index.clone(),
        }
    }

    /// Writes `subject_id<TAB>lemma<TAB>predicate<TAB>object` rows.
    pub fn export_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.triples {
            let lemma = self
                .senses
                .get(&t.subject)
                .map(|s| s.lemma.as_str())
                .unwrap_or("");
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                t.subject,
                tsv_field(lemma),
                t.predicate,
                tsv_field(&t.object)
            )?;
        }
        Ok(())
    }

    pub fn predicate_counts(&self) -> BTreeMap<Predicate, usize> {
        let mut counts = BTreeMap::new();
        for t in &self.triples {
            *counts.entry(t.predicate).or_insert(0) += 1;
        }
        counts
    }
}

fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Fail on the first malformed line instead of skipping it.
    pub strict: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records_parsed: usize,
    pub records_skipped: usize,
    pub senses: usize,
    pub triples: usize,
    pub triples_by_predicate: BTreeMap<Predicate, usize>,
    pub unsupported_relations: usize,
    pub duplicate_triples: usize,
    pub empty_objects: usize,
    /// Line numbers (1-based) of skipped records.
    pub skipped_lines: Vec<usize>,
}

#[derive(Deserialize)]
struct DumpRecord {
    word: String,
    pos: String,
    senses: Vec<DumpSense>,
}

#[derive(Deserialize)]
struct DumpSense {
    #[serde(default)]
    gloss: String,
    #[serde(default)]
    relations: BTreeMap<String, serde_json::Value>,
}

struct ParsedRecord {
    senses: Vec<(WordSense, Vec<(Predicate, String)>)>,
    unsupported: usize,
    empty_objects: usize,
}

fn parse_record(line: &str) -> std::result::Result<ParsedRecord, String> {
    let rec: DumpRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let word = rec.word.trim();
    if word.is_empty() {
        return Err("empty `word`".into());
    }
    let mut parsed = ParsedRecord {
        senses: Vec::with_capacity(rec.senses.len()),
        unsupported: 0,
        empty_objects: 0,
    };
    for sense in rec.senses {
        let ws = WordSense::new(word, rec.pos.trim(), sense.gloss.trim());
        let mut rels = Vec::new();
        for (key, value) in sense.relations {
            let Some(pred) = Predicate::from_relation_key(&key) else {
                parsed.unsupported += 1;
                continue;
            };
            let items = value
                .as_array()
                .ok_or_else(|| format!("relation `{key}` is not a list"))?;
            for item in items {
                let obj = item
                    .as_str()
                    .ok_or_else(|| format!("relation `{key}` holds a non-string"))?;
                let obj = obj.trim();
                if obj.is_empty() {
                    parsed.empty_objects += 1;
                } else {
                    rels.push((pred, obj.to_string()));
                }
            }
        }
        parsed.senses.push((ws, rels));
    }
    Ok(parsed)
}

/// Builds a graph from a KB JSONL stream. Blank lines are ignored.
pub fn ingest_dump<R: BufRead>(
    reader: R,
    options: IngestOptions,
) -> Result<(KnowledgeGraph, IngestStats)> {
    let mut stats = IngestStats::default();
    let mut senses: BTreeMap<SenseId, WordSense> = BTreeMap::new();
    let mut triples: BTreeSet<KnowledgeTriple> = BTreeSet::new();

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Record {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match parse_record(&line) {
            Ok(p) => p,
            Err(message) if options.strict => {
                return Err(Error::Record {
                    line: lineno,
                    message,
                })
            }
            Err(_) => {
                stats.records_skipped += 1;
                stats.skipped_lines.push(lineno);
                continue;
            }
        };
        stats.records_parsed += 1;
        stats.unsupported_relations += parsed.unsupported;
        stats.empty_objects += parsed.empty_objects;
        for (sense, rels) in parsed.senses {
            let id = sense.sense_id.clone();
            senses.entry(id.clone()).or_insert(sense);
            for (predicate, object) in rels {
                let fresh = triples.insert(KnowledgeTriple {
                    subject: id.clone(),
                    predicate,
                    object,
                });
                if !fresh {
                    stats.duplicate_triples += 1;
                }
            }
        }
    }

    let graph = KnowledgeGraph::index(senses, triples.into_iter().collect());
    stats.senses = graph.sense_count();
    stats.triples = graph.triple_count();
    stats.triples_by_predicate = graph.predicate_counts();
    Ok((graph, stats))
}
