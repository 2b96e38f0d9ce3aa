//! Oracles and fixtures shared by the integration tests. The oracles are
//! deliberately naive reimplementations; they never call the code under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use kgreplay::augment::{AugmentConfig, AugmentStrategy, LabeledInstance};
use kgreplay::continual::{ExperimentConfig, KnowledgeBase};
use kgreplay::data::{make_synthetic_stream, SyntheticCorpus, SyntheticSpec};
use kgreplay::eval::auc_task;
use kgreplay::kb::{KnowledgeGraph, KnowledgeTriple, Predicate, Relevance, WordSense};
use kgreplay::learner::{
    encoder_from_descriptor, joint_objective, ClassKey, ClassifierModel, Encoded, SparseVector,
};
use kgreplay::memory::cluster_select;
use kgreplay::mention::{extract_mentions, tokenize, MentionTrie};
use kgreplay::semantics::{score_graph, train_definition_model, DefinitionTrainConfig};
use kgreplay::util::rng_from;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Upper 1% critical values of the chi-square distribution, df = 1..=10.
pub const CHI2_99: [f64; 10] = [
    6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475, 20.090, 21.666, 23.209,
];

pub fn chi_square(observed: &[usize], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum()
}

/// Every dictionary span, then the leftmost start wins and among equal
/// starts the longest span wins; scanning resumes after the chosen span.
pub fn brute_force_mentions(keys: &HashSet<Vec<String>>, tokens: &[String]) -> Vec<(usize, usize)> {
    let mut hits = Vec::new();
    for i in 0..tokens.len() {
        for j in i + 1..=tokens.len() {
            if keys.contains(&tokens[i..j].to_vec()) {
                hits.push((i, j));
            }
        }
    }
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut cursor = 0;
    loop {
        let best = hits
            .iter()
            .filter(|&&(i, _)| i >= cursor)
            .min_by_key(|&&(i, j)| (i, std::cmp::Reverse(j)));
        match best {
            Some(&(i, j)) => {
                out.push((i, j));
                cursor = j;
            }
            None => return out,
        }
    }
}

/// O(P·N) Mann-Whitney count with ties worth one half.
pub fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

pub fn reference_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn random_word<R: Rng>(rng: &mut R, alphabet: &[&str]) -> String {
    alphabet[rng.gen_range(0..alphabet.len())].to_string()
}

fn sense(lemma: &str, gloss: &str) -> WordSense {
    WordSense::new(lemma, "noun", gloss)
}

fn triple(s: &WordSense, predicate: Predicate, object: &str) -> KnowledgeTriple {
    KnowledgeTriple {
        subject: s.sense_id.clone(),
        predicate,
        object: object.to_string(),
    }
}

/// A scored graph whose words carry both derogatory and neutral senses,
/// some carry only one kind, and one sense has an empty gloss (unscored).
pub fn mixed_graph() -> KnowledgeGraph {
    // (word, [(gloss, synonyms)])
    type Spec<'a> = &'a [(&'a str, &'a [(&'a str, &'a [&'a str])])];
    let spec: Spec = &[
        (
            "dingbat",
            &[
                ("(derogatory) a foolish person", &["fool", "nitwit"]),
                ("a typographical ornament", &["ornament"]),
            ],
        ),
        (
            "crank",
            &[
                ("(derogatory) an eccentric person", &["crackpot"]),
                ("a handle for turning a shaft", &["handle", "winch"]),
            ],
        ),
        (
            "snake",
            &[
                ("(derogatory) a treacherous person", &["traitor", "rat"]),
                ("a legless reptile", &["serpent", "viper", "adder"]),
            ],
        ),
        (
            "witch",
            &[
                ("(offensive) an ugly old woman", &["hag", "crone"]),
                ("a practitioner of magic", &["sorceress"]),
            ],
        ),
        (
            "pig",
            &[
                ("(slur) a police officer", &["cop"]),
                ("a farm animal", &["hog", "swine"]),
            ],
        ),
        (
            "bigot",
            &[("(derogatory) an intolerant person", &["zealot", "racist"])],
        ),
        ("scone", &[("a small baked good", &["biscuit", "bun"])]),
        (
            "river",
            &[("a natural stream of water", &["stream", "brook"])],
        ),
        (
            "race traitor",
            &[("(ethnic slur) one who betrays their race", &["turncoat"])],
        ),
        ("mystery", &[("", &["enigma"])]),
    ];
    let mut senses = Vec::new();
    let mut triples = Vec::new();
    for (lemma, entries) in spec {
        for (gloss, synonyms) in *entries {
            let s = sense(lemma, gloss);
            for (k, syn) in synonyms.iter().enumerate() {
                let pred = if k == 2 {
                    Predicate::Hyponym
                } else {
                    Predicate::Synonym
                };
                triples.push(triple(&s, pred, syn));
            }
            senses.push(s);
        }
    }
    let graph = KnowledgeGraph::from_parts(senses, triples).expect("fixture graph");
    graph.with_relevance(|s| {
        let g = &s.gloss;
        if g.is_empty() {
            Relevance::Unscored
        } else if g.starts_with('(') {
            Relevance::Relevant
        } else {
            Relevance::NotRelevant
        }
    })
}

pub const VOCAB: [&str; 14] = [
    "red", "blue", "green", "cat", "dog", "big", "small", "run", "sun", "moon", "tree", "sky",
    "fox", "owl",
];

/// Compares trie extraction with the brute-force scan on `texts` random
/// texts over 50 keys of one to three tokens.
pub fn extraction_matches_oracle(texts: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng_from(seed);
    let mut keys: HashSet<Vec<String>> = HashSet::new();
    while keys.len() < 50 {
        let len = rng.gen_range(1..=3);
        keys.insert((0..len).map(|_| random_word(&mut rng, &VOCAB)).collect());
    }
    let lemmas: Vec<String> = keys.iter().map(|k| k.join(" ")).collect();
    let refs: Vec<&str> = lemmas.iter().map(String::as_str).collect();
    let senses = refs
        .iter()
        .map(|w| WordSense::new(w, "noun", "g"))
        .collect();
    let trie = MentionTrie::build(&KnowledgeGraph::from_parts(senses, Vec::new()).expect("graph"));
    for _ in 0..texts {
        let n = rng.gen_range(0..15);
        let mut text = String::new();
        for _ in 0..n {
            let w = random_word(&mut rng, &VOCAB);
            let w = if rng.gen_bool(0.2) {
                w.to_uppercase()
            } else {
                w
            };
            text.push_str(&w);
            text.push_str([" ", "  ", ", ", " ! "][rng.gen_range(0..4)]);
        }
        let tokens = tokenize(&text);
        let norm: Vec<String> = tokens.iter().map(|t| t.normalized()).collect();
        let got: Vec<(usize, usize)> = extract_mentions(&trie, &tokens)
            .iter()
            .map(|m| (m.first, m.last))
            .collect();
        let want = brute_force_mentions(&keys, &norm);
        if got != want {
            return Err(format!("{text:?}: got {got:?}, oracle {want:?}"));
        }
    }
    Ok(())
}

const MIXED_WORDS: [&str; 10] = [
    "dingbat",
    "crank",
    "snake",
    "witch",
    "pig",
    "bigot",
    "scone",
    "river",
    "race traitor",
    "mystery",
];
const FILLER: [&str; 8] = ["the", "that", "is", "a", "near", "really", "my", "old"];

/// `n` instances over the mixed graph, cycling through hateful, offensive
/// and normal labels, each with `mentions` keyword slots.
pub fn mixed_instances(n: usize, mentions: usize, seed: u64) -> Vec<LabeledInstance> {
    let mut rng = rng_from(seed);
    let labels = ["t:hateful", "t:normal", "t:offensive", "t:normal"];
    (0..n)
        .map(|i| {
            let mut words = Vec::new();
            for _ in 0..mentions {
                words.push(random_word(&mut rng, &FILLER));
                words.push(random_word(&mut rng, &MIXED_WORDS));
            }
            words.push("!".into());
            LabeledInstance::original(
                format!("m{i}"),
                words.join(" "),
                labels[i % labels.len()],
                0,
            )
        })
        .collect()
}

pub fn semantic_config(p: f64, seed: u64) -> AugmentConfig {
    AugmentConfig {
        strategy: AugmentStrategy::Semantic,
        replace_prob: p,
        deviant_labels: ["hateful".to_string(), "offensive".to_string()].into(),
        seed,
        ..AugmentConfig::default()
    }
}

/// Every replacement's subject relevance must agree with the instance's
/// deviance flag. Returns the violations found.
pub fn gating_violations(
    copies: &[LabeledInstance],
    graph: &KnowledgeGraph,
    config: &AugmentConfig,
) -> Vec<String> {
    let mut bad = Vec::new();
    for c in copies.iter().filter(|c| c.is_augmented()) {
        let deviant = config
            .deviant_labels
            .iter()
            .any(|d| c.label == *d || c.label.ends_with(&format!(":{d}")));
        for r in &c.replacements {
            let rel = graph.sense(&r.sense_id).map(|s| s.relevance);
            let ok = match rel {
                Some(Relevance::Relevant) => deviant,
                Some(Relevance::NotRelevant) => !deviant,
                _ => false,
            };
            if !ok {
                bad.push(format!("{} replaced `{}` via {:?}", c.id, r.original, rel));
            }
        }
    }
    bad
}

/// Character-level check that text outside replaced spans is unchanged.
pub fn outside_spans_unchanged(source: &str, copy: &LabeledInstance) -> bool {
    let src: Vec<char> = source.chars().collect();
    let mut rebuilt = String::new();
    let mut cursor = 0;
    for r in &copy.replacements {
        rebuilt.extend(&src[cursor..r.start]);
        if src[r.start..r.end].iter().collect::<String>() != r.original {
            return false;
        }
        rebuilt.push_str(&r.replacement);
        cursor = r.end;
    }
    rebuilt.extend(&src[cursor..]);
    rebuilt == copy.text
}

/// Settings of the directional acceptance sweep.
pub const DATA_SEED: u64 = 7;
pub const RUN_SEEDS: [u64; 3] = [1, 2, 3];
pub const SWEEP_CAPACITY: usize = 50;

pub struct SweepSetup {
    pub corpus: SyntheticCorpus,
    pub kb: KnowledgeBase,
    pub config: ExperimentConfig,
}

/// Synthetic drift stream (5 tasks of 2 classes, 200/50/100 per task), its
/// graph scored by a definition model trained on the generated glosses, and
/// the experiment settings used for the directional checks.
pub fn sweep_setup() -> SweepSetup {
    let corpus =
        make_synthetic_stream(&SyntheticSpec::default(), DATA_SEED).expect("synthetic stream");
    let model = train_definition_model(
        &corpus.definitions,
        &DefinitionTrainConfig::default(),
        DATA_SEED,
    )
    .expect("definition model");
    let kb = KnowledgeBase::new(score_graph(&model, &corpus.graph));
    let mut config = ExperimentConfig {
        buffer_capacity: SWEEP_CAPACITY,
        ..ExperimentConfig::default()
    };
    config.augment.replace_prob = 0.15;
    config.augment.deviant_labels = corpus.deviant_labels.clone();
    config.train.replay_weight = 1.0;
    config.train.learning_rate = 0.7;
    config.train.weight_decay = 0.0;
    config.train.patience = 8;
    SweepSetup { corpus, kb, config }
}

/// Label frequencies, for readable assertion messages.
pub fn label_counts(items: &[LabeledInstance]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for i in items {
        *out.entry(i.label.clone()).or_default() += 1;
    }
    out
}

/// A model with `classes` classes (task 0) over a `dim`-wide hashed encoder
/// and weights drawn uniformly from [-1, 1].
pub fn random_model(classes: usize, dim: usize, seed: u64) -> ClassifierModel {
    let encoder = encoder_from_descriptor(&format!("hashed:{dim}")).expect("encoder");
    let keys: Vec<ClassKey> = (0..classes)
        .map(|c| ClassKey {
            task: 0,
            name: format!("t:c{c}"),
        })
        .collect();
    let mut model = ClassifierModel::new(encoder)
        .extend_classes(&keys)
        .expect("classes");
    let mut rng = rng_from(seed);
    let (w, b) = model.params_mut();
    w.iter_mut()
        .chain(b.iter_mut())
        .for_each(|v| *v = rng.gen_range(-1.0..1.0));
    model
}

pub fn random_text<R: Rng>(rng: &mut R, words: usize) -> String {
    (0..words)
        .map(|_| random_word(rng, &VOCAB))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn random_dense<R: Rng>(rng: &mut R, dim: usize) -> SparseVector {
    let v: Vec<f64> = (0..dim)
        .map(|_| {
            if rng.gen_bool(0.6) {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        })
        .collect();
    SparseVector::from_dense(&v)
}

/// Largest relative error between the analytic gradient of the joint
/// objective and central differences (step 1e-5) on a 3-class, D=16 model.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
pub fn gradient_check(seed: u64) -> f64 {
    let model = random_model(3, 16, seed);
    let mut rng = rng_from(seed ^ 0xfeed);
    let mut encode = |n: usize| -> Vec<Encoded> {
        (0..n)
            .map(|_| Encoded {
                x: random_dense(&mut rng, 16),
                y: rng.gen_range(0..3),
            })
            .collect()
    };
    let current = encode(12);
    let replay = encode(5);
    let lambda = 0.7;
    let (_, grad) = joint_objective(&model, &current, &replay, lambda);
    let analytic: Vec<f64> = grad.weights.iter().chain(&grad.bias).copied().collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let at = |delta: f64| {
            let mut m = model.clone();
            let (w, b) = m.params_mut();
            if i < w.len() {
                w[i] += delta;
            } else {
                b[i - w.len()] += delta;
            }
            joint_objective(&m, &current, &replay, lambda).0
        };
        let numeric = (at(h) - at(-h)) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// Old-class logits must be bit-identical after `extend_classes`, and old
/// probabilities keep their ratios. Checked on `inputs` random texts.
pub fn head_extension_check(inputs: usize, seed: u64) -> Result<(), String> {
    let before = random_model(4, 64, seed);
    let after = before
        .extend_classes(&[
            ClassKey {
                task: 1,
                name: "u:a".into(),
            },
            ClassKey {
                task: 1,
                name: "u:b".into(),
            },
        ])
        .map_err(|e| e.to_string())?;
    let mut rng = rng_from(seed);
    for _ in 0..inputs {
        let n = rng.gen_range(1..8);
        let text = random_text(&mut rng, n);
        let old = before.logits(&text);
        let new = after.logits(&text);
        if new.len() != old.len() + 2 {
            return Err("head did not grow by two rows".into());
        }
        for (c, (a, b)) in old.iter().zip(&new).enumerate() {
            if a.to_bits() != b.to_bits() {
                return Err(format!("{text:?}: logit {c} changed from {a} to {b}"));
            }
        }
        let p_old = before.probabilities_of(&before.embed(&text));
        let p_new = after.probabilities_of(&after.embed(&text));
        let scale = p_new[..4].iter().sum::<f64>();
        for c in 0..4 {
            if (p_new[c] - p_old[c] * scale).abs() > 1e-12 {
                return Err(format!("{text:?}: probability {c} not a renormalization"));
            }
        }
    }
    Ok(())
}

/// Largest |auc_task − pairwise oracle| over random 200-instance, 3-class sets.
pub fn auc_oracle_gap(trials: usize, seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let truths: Vec<usize> = (0..200).map(|_| rng.gen_range(0..3)).collect();
        // Coarse scores on some trials so ties occur.
        let coarse = trial % 2 == 0;
        let scores: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        let s: f64 = rng.gen();
                        if coarse {
                            (s * 10.0).floor() / 10.0
                        } else {
                            s
                        }
                    })
                    .collect()
            })
            .collect();
        let got = auc_task(&scores, &truths, &[0, 1, 2]).expect("auc");
        let per_class: Vec<f64> = (0..3)
            .map(|c| {
                let (pos, neg): (Vec<_>, Vec<_>) =
                    truths.iter().zip(&scores).partition(|(&t, _)| t == c);
                let column =
                    |v: Vec<(&usize, &Vec<f64>)>| v.iter().map(|(_, s)| s[c]).collect::<Vec<f64>>();
                pairwise_auc(&column(pos), &column(neg))
            })
            .collect();
        let want = per_class.iter().sum::<f64>() / 3.0;
        worst = worst.max((got - want).abs());
    }
    worst
}

fn dense_sq_dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Runs cluster selection on 30 random points with n=3 and checks, by a
/// dense exhaustive scan, that each point sits in its nearest cluster and
/// each selected representative is its cluster's closest member.
pub fn kmeans_nearest_check(seed: u64) -> Result<(), String> {
    let mut rng = rng_from(seed);
    let points: Vec<SparseVector> = (0..30).map(|_| random_dense(&mut rng, 8)).collect();
    let sel = cluster_select(&points, 3, seed);
    let km = sel.kmeans.as_ref().ok_or("no clustering for n < points")?;
    if sel.indices.len() != 3 {
        return Err(format!("selected {} points", sel.indices.len()));
    }
    let dense: Vec<Vec<f64>> = points.iter().map(SparseVector::to_dense).collect();
    for (i, x) in dense.iter().enumerate() {
        let d: Vec<f64> = km.centroids.iter().map(|c| dense_sq_dist(x, c)).collect();
        let own = d[km.assignments[i]];
        if d.iter().any(|&o| o < own - 1e-9) {
            return Err(format!("point {i} is closer to another centroid"));
        }
    }
    for (c, rep) in sel.representatives.iter().enumerate() {
        let members: Vec<usize> = (0..30).filter(|&i| km.assignments[i] == c).collect();
        let Some(r) = rep else {
            if members.is_empty() {
                continue;
            }
            return Err(format!("cluster {c} has members but no representative"));
        };
        let best = members
            .iter()
            .map(|&i| dense_sq_dist(&dense[i], &km.centroids[c]))
            .fold(f64::INFINITY, f64::min);
        if dense_sq_dist(&dense[*r], &km.centroids[c]) > best + 1e-9 {
            return Err(format!(
                "representative {r} of cluster {c} is not its nearest member"
            ));
        }
        if !sel.indices.contains(r) {
            return Err(format!("representative {r} missing from the selection"));
        }
    }
    Ok(())
}
