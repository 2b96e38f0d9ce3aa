//! Knowledge-based span replacement.
//!
//! Mentions found by the trie are replaced, each independently with
//! probability `p`, by a term related to one of the mention's candidate
//! senses. The random strategy draws from every candidate triple; the
//! semantic strategy only draws from senses whose definition relevance agrees
//! with the instance label (deviant labels use relevant senses, all other
//! labels use not-relevant senses).

use std::collections::BTreeSet;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kb::{KnowledgeGraph, Predicate, Relevance, SenseId};
use crate::mention::{extract_mentions, tokenize, Mention, MentionTrie};
use crate::util::{stream_rng, Rng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Original,
    Augmented,
}

/// One replaced span; offsets are characters in the source text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub start: usize,
    pub end: usize,
    pub original: String,
    pub replacement: String,
    pub sense_id: SenseId,
    pub predicate: Predicate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub id: String,
    pub text: String,
    pub label: String,
    pub task: usize,
    #[serde(default)]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replacements: Vec<Replacement>,
}

impl LabeledInstance {
    pub fn original(
        id: impl Into<String>,
        text: impl Into<String>,
        label: impl Into<String>,
        task: usize,
    ) -> Self {
        LabeledInstance {
            id: id.into(),
            text: text.into(),
            label: label.into(),
            task,
            provenance: Provenance::Original,
            source_id: None,
            replacements: Vec::new(),
        }
    }

    pub fn is_augmented(&self) -> bool {
        self.provenance == Provenance::Augmented
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentStrategy {
    Random,
    Semantic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub strategy: AugmentStrategy,
    pub replace_prob: f64,
    pub predicates: Vec<Predicate>,
    pub copies_per_instance: usize,
    /// Labels treated as deviant. An entry matches either the full namespaced
    /// label (`religion:hateful`) or its un-namespaced suffix (`hateful`).
    pub deviant_labels: BTreeSet<String>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            strategy: AugmentStrategy::Random,
            replace_prob: 0.15,
            predicates: Predicate::REPLACEMENT.to_vec(),
            copies_per_instance: 1,
            deviant_labels: BTreeSet::new(),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.replace_prob) {
            return Err(Error::Config(format!(
                "replace_prob {} is outside [0, 1]",
                self.replace_prob
            )));
        }
        if self.copies_per_instance == 0 {
            return Err(Error::Config("copies_per_instance must be positive".into()));
        }
        if self.strategy == AugmentStrategy::Semantic && self.deviant_labels.is_empty() {
            return Err(Error::Config(
                "semantic augmentation needs deviant_labels".into(),
            ));
        }
        Ok(())
    }

    pub fn is_deviant(&self, label: &str) -> bool {
        if self.deviant_labels.contains(label) {
            return true;
        }
        match label.rsplit_once(':') {
            Some((_, suffix)) => self.deviant_labels.contains(suffix),
            None => false,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        AugmentConfig {
            seed,
            ..self.clone()
        }
    }
}

type Pool<'g> = Vec<(&'g SenseId, Predicate, &'g str)>;

/// Flattened (sense, predicate, object) pool per mention, in sense order.
fn mention_pools<'g>(
    mentions: &[Mention],
    graph: &'g KnowledgeGraph,
    config: &AugmentConfig,
    required: Option<Relevance>,
) -> Vec<Pool<'g>> {
    mentions
        .iter()
        .map(|m| {
            let mut pool = Vec::new();
            for sense in &m.candidate_senses {
                let Some(ws) = graph.sense(sense) else {
                    continue;
                };
                if required.is_some_and(|r| ws.relevance != r) {
                    continue;
                }
                for t in graph.triples_of(sense) {
                    if config.predicates.contains(&t.predicate) {
                        pool.push((&t.subject, t.predicate, t.object.as_str()));
                    }
                }
            }
            pool
        })
        .collect()
}

fn augment_with(
    instance: &LabeledInstance,
    graph: &KnowledgeGraph,
    trie: &MentionTrie,
    config: &AugmentConfig,
    rng: &mut Rng,
    required: Option<Relevance>,
) -> Vec<LabeledInstance> {
    if config.replace_prob <= 0.0 {
        return Vec::new();
    }
    let tokens = tokenize(&instance.text);
    let mentions = extract_mentions(trie, &tokens);
    let pools = mention_pools(&mentions, graph, config, required);

    let mut copies = Vec::new();
    for copy in 0..config.copies_per_instance {
        let mut chosen = Vec::new();
        for (m, pool) in mentions.iter().zip(&pools) {
            if pool.is_empty() || rng.gen::<f64>() >= config.replace_prob {
                continue;
            }
            let (sense, predicate, object) = pool[rng.gen_range(0..pool.len())];
            chosen.push((m, sense, predicate, object));
        }
        if chosen.is_empty() {
            continue;
        }
        let mut text = String::with_capacity(instance.text.len());
        let mut cursor = 0;
        let mut replacements = Vec::with_capacity(chosen.len());
        for (m, sense, predicate, object) in chosen {
            let bstart = tokens[m.first].byte_start;
            let bend = tokens[m.last - 1].byte_end;
            text.push_str(&instance.text[cursor..bstart]);
            text.push_str(object);
            cursor = bend;
            replacements.push(Replacement {
                start: m.start,
                end: m.end,
                original: instance.text[bstart..bend].to_string(),
                replacement: object.to_string(),
                sense_id: sense.clone(),
                predicate,
            });
        }
        text.push_str(&instance.text[cursor..]);
        copies.push(LabeledInstance {
            id: format!("{}~a{}", instance.id, copy),
            text,
            label: instance.label.clone(),
            task: instance.task,
            provenance: Provenance::Augmented,
            source_id: Some(instance.id.clone()),
            replacements,
        });
    }
    copies
}

fn required_relevance(config: &AugmentConfig, label: &str) -> Relevance {
    if config.is_deviant(label) {
        Relevance::Relevant
    } else {
        Relevance::NotRelevant
    }
}

/// Expected number of emitted copies per candidate copy, given each
/// instance's count of mentions with a non-empty pool.
fn expected_copies(eligible: &[usize], p: f64) -> f64 {
    eligible
        .iter()
        .map(|&e| 1.0 - (1.0 - p).powi(e as i32))
        .sum()
}

/// Replacement probability for the random strategy that yields the same
/// expected number of copies as the semantic strategy at
/// `config.replace_prob` over `instances`. The random pool is a superset of
/// the semantic one, so the answer never exceeds `config.replace_prob`.
pub fn calibrate_random_prob(
    instances: &[LabeledInstance],
    graph: &KnowledgeGraph,
    trie: &MentionTrie,
    config: &AugmentConfig,
) -> Result<f64> {
    config.validate()?;
    if !graph.is_scored() {
        return Err(Error::Config(
            "calibration needs a relevance-scored knowledge graph".into(),
        ));
    }
    let mut random = Vec::with_capacity(instances.len());
    let mut semantic = Vec::with_capacity(instances.len());
    for inst in instances {
        let mentions = extract_mentions(trie, &tokenize(&inst.text));
        let count = |pools: Vec<Pool>| pools.iter().filter(|p| !p.is_empty()).count();
        random.push(count(mention_pools(&mentions, graph, config, None)));
        let required = required_relevance(config, &inst.label);
        semantic.push(count(mention_pools(
            &mentions,
            graph,
            config,
            Some(required),
        )));
    }
    let target = expected_copies(&semantic, config.replace_prob);
    let (mut lo, mut hi) = (0.0, config.replace_prob);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if expected_copies(&random, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Random-relation replacement over every candidate sense.
pub fn augment_random(
    instance: &LabeledInstance,
    graph: &KnowledgeGraph,
    trie: &MentionTrie,
    config: &AugmentConfig,
    rng: &mut Rng,
) -> Vec<LabeledInstance> {
    augment_with(instance, graph, trie, config, rng, None)
}

/// Relevance-gated replacement. Requires a scored graph.
pub fn augment_semantic(
    instance: &LabeledInstance,
    graph: &KnowledgeGraph,
    trie: &MentionTrie,
    config: &AugmentConfig,
    rng: &mut Rng,
) -> Result<Vec<LabeledInstance>> {
    if !graph.is_scored() {
        return Err(Error::Config(
            "semantic augmentation needs a relevance-scored knowledge graph".into(),
        ));
    }
    let required = required_relevance(config, &instance.label);
    Ok(augment_with(
        instance,
        graph,
        trie,
        config,
        rng,
        Some(required),
    ))
}

pub fn augment_instance(
    instance: &LabeledInstance,
    graph: &KnowledgeGraph,
    trie: &MentionTrie,
    config: &AugmentConfig,
    rng: &mut Rng,
) -> Result<Vec<LabeledInstance>> {
    match config.strategy {
        AugmentStrategy::Random => Ok(augment_random(instance, graph, trie, config, rng)),
        AugmentStrategy::Semantic => augment_semantic(instance, graph, trie, config, rng),
    }
}

/// Originals followed by all augmented copies. Instance `i` draws from its
/// own RNG stream derived from `(config.seed, i)`.
pub fn augment_dataset(
    instances: &[LabeledInstance],
    graph: &KnowledgeGraph,
    trie: &MentionTrie,
    config: &AugmentConfig,
) -> Result<Vec<LabeledInstance>> {
    config.validate()?;
    if config.strategy == AugmentStrategy::Semantic && !graph.is_scored() {
        return Err(Error::Config(
            "semantic augmentation needs a relevance-scored knowledge graph".into(),
        ));
    }
    let copies: Vec<Vec<LabeledInstance>> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut rng = stream_rng(config.seed, "augment", i as u64);
            augment_instance(inst, graph, trie, config, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut out = instances.to_vec();
    out.extend(copies.into_iter().flatten());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{ingest_dump, IngestOptions, WordSense};
    use crate::util::rng_from;

    fn dingbat_graph() -> KnowledgeGraph {
        let dump = concat!(
            r#"{"word":"dingbat","pos":"noun","senses":["#,
            r#"{"gloss":"(derogatory) a foolish or stupid person","relations":{"synonyms":["fool"]}},"#,
            r#"{"gloss":"a typographical ornament or symbol","relations":{"synonyms":["ornament"]}}]}"#
        );
        let (g, _) = ingest_dump(dump.as_bytes(), IngestOptions::default()).unwrap();
        g.with_relevance(|s: &WordSense| {
            if s.gloss.contains("derogatory") {
                Relevance::Relevant
            } else {
                Relevance::NotRelevant
            }
        })
    }

    fn cfg(strategy: AugmentStrategy, p: f64) -> AugmentConfig {
        AugmentConfig {
            strategy,
            replace_prob: p,
            deviant_labels: ["hateful".to_string()].into(),
            ..AugmentConfig::default()
        }
    }

    #[test]
    fn zero_probability_emits_nothing() {
        let g = dingbat_graph();
        let trie = MentionTrie::build(&g);
        let inst = LabeledInstance::original("x", "What a dingbat!", "t:hateful", 0);
        let out = augment_random(
            &inst,
            &g,
            &trie,
            &cfg(AugmentStrategy::Random, 0.0),
            &mut rng_from(1),
        );
        assert!(out.is_empty());
    }

    #[test]
    fn single_synonym_replacement() {
        let dump = r#"{"word":"dingbat","pos":"noun","senses":[{"gloss":"A silly person","relations":{"synonyms":["fool"]}}]}"#;
        let (g, _) = ingest_dump(dump.as_bytes(), IngestOptions::default()).unwrap();
        let trie = MentionTrie::build(&g);
        let inst = LabeledInstance::original("x", "What a dingbat!", "t:normal", 3);
        let out = augment_random(
            &inst,
            &g,
            &trie,
            &cfg(AugmentStrategy::Random, 1.0),
            &mut rng_from(0),
        );
        assert_eq!(out.len(), 1);
        let a = &out[0];
        assert_eq!(a.text, "What a fool!");
        assert_eq!((a.label.as_str(), a.task), ("t:normal", 3));
        assert_eq!(a.provenance, Provenance::Augmented);
        assert_eq!(a.source_id.as_deref(), Some("x"));
        assert_eq!(a.replacements.len(), 1);
        assert_eq!((a.replacements[0].start, a.replacements[0].end), (7, 14));
        assert_eq!(a.replacements[0].original, "dingbat");
    }

    #[test]
    fn semantic_gating_picks_the_deviant_sense() {
        let g = dingbat_graph();
        let trie = MentionTrie::build(&g);
        let c = cfg(AugmentStrategy::Semantic, 1.0);
        for seed in 0..20 {
            let inst = LabeledInstance::original("x", "What a dingbat!", "t:hateful", 0);
            let out = augment_semantic(&inst, &g, &trie, &c, &mut rng_from(seed)).unwrap();
            assert_eq!(out[0].text, "What a fool!");
            let inst = LabeledInstance::original("y", "What a dingbat!", "t:normal", 0);
            let out = augment_semantic(&inst, &g, &trie, &c, &mut rng_from(seed)).unwrap();
            assert_eq!(out[0].text, "What a ornament!");
        }
    }

    #[test]
    fn semantic_without_eligible_senses_is_empty() {
        let g = dingbat_graph().with_relevance(|_| Relevance::Relevant);
        let trie = MentionTrie::build(&g);
        let inst = LabeledInstance::original("y", "What a dingbat!", "t:normal", 0);
        let out = augment_semantic(
            &inst,
            &g,
            &trie,
            &cfg(AugmentStrategy::Semantic, 1.0),
            &mut rng_from(0),
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn semantic_on_unscored_graph_is_config_error() {
        let g = dingbat_graph().with_relevance(|_| Relevance::Unscored);
        let trie = MentionTrie::build(&g);
        let inst = LabeledInstance::original("y", "What a dingbat!", "t:normal", 0);
        let err = augment_semantic(
            &inst,
            &g,
            &trie,
            &cfg(AugmentStrategy::Semantic, 1.0),
            &mut rng_from(0),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn dataset_augmentation_identity_cases() {
        let g = dingbat_graph();
        let trie = MentionTrie::build(&g);
        let c = cfg(AugmentStrategy::Random, 0.0);
        assert!(augment_dataset(&[], &g, &trie, &c).unwrap().is_empty());
        let items: Vec<_> = (0..10)
            .map(|i| LabeledInstance::original(format!("i{i}"), "a dingbat", "t:normal", 0))
            .collect();
        assert_eq!(augment_dataset(&items, &g, &trie, &c).unwrap(), items);
    }

    #[test]
    fn deviant_matching_accepts_suffix_or_full_label() {
        let mut c = cfg(AugmentStrategy::Semantic, 0.5);
        assert!(c.is_deviant("religion:hateful"));
        assert!(!c.is_deviant("religion:normal"));
        c.deviant_labels = ["gender:offensive".to_string()].into();
        assert!(c.is_deviant("gender:offensive"));
        assert!(!c.is_deviant("age:offensive"));
    }

    #[test]
    fn invalid_configs() {
        assert!(cfg(AugmentStrategy::Random, 1.5).validate().is_err());
        let mut c = cfg(AugmentStrategy::Semantic, 0.5);
        c.deviant_labels.clear();
        assert!(c.validate().is_err());
    }
}
