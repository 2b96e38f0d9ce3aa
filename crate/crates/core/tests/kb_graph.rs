mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;

use kgreplay::kb::{
    ingest_dump, IngestOptions, IngestStats, KnowledgeGraph, KnowledgeTriple, Predicate, WordSense,
};
use kgreplay::Error;
use rand::seq::SliceRandom;
use rand::Rng;

fn load_fixture(strict: bool) -> kgreplay::Result<(KnowledgeGraph, IngestStats)> {
    let file = File::open(common::fixture("kb_dump.jsonl")).unwrap();
    ingest_dump(BufReader::new(file), IngestOptions { strict })
}

#[test]
fn fixture_dump_matches_audited_manifest() {
    let (graph, stats) = load_fixture(false).unwrap();
    let manifest: IngestStats =
        serde_json::from_reader(File::open(common::fixture("kb_dump.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(stats, manifest);
    assert_eq!(stats.records_parsed, 43);
    assert_eq!(stats.records_skipped, 7);
    assert_eq!(graph.sense_count(), manifest.senses);
}

#[test]
fn strict_mode_names_the_first_bad_line() {
    match load_fixture(true) {
        Err(Error::Record { line, .. }) => assert_eq!(line, 6),
        other => panic!("expected a record error, got {other:?}"),
    }
}

#[test]
fn ingestion_is_deterministic() {
    let (a, sa) = load_fixture(false).unwrap();
    let (b, sb) = load_fixture(false).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(a.triples(), b.triples());
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}

#[test]
fn empty_stream_gives_empty_graph() {
    let (g, stats) = ingest_dump(&b""[..], IngestOptions::default()).unwrap();
    assert!(g.is_empty());
    assert_eq!(g.triple_count(), 0);
    assert_eq!(stats.records_parsed + stats.records_skipped, 0);
}

#[test]
fn lemma_index_resolves_and_is_bounded() {
    let (g, _) = load_fixture(false).unwrap();
    let indexed: usize = g.lemma_index().values().map(Vec::len).sum();
    assert!(indexed <= g.sense_count());
    for ids in g.lemma_index().values() {
        for id in ids {
            assert!(g.sense(id).is_some());
        }
    }
    for s in g.senses() {
        assert!(g
            .senses_for_lemma(&s.lemma.to_uppercase())
            .contains(&s.sense_id));
    }
}

#[test]
fn graph_json_round_trips() {
    let (g, _) = load_fixture(false).unwrap();
    let back: KnowledgeGraph = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
    assert_eq!(back.triples(), g.triples());
    assert_eq!(back.sense_count(), g.sense_count());
}

#[test]
fn related_terms_match_exhaustive_filter() {
    let (g, _) = load_fixture(false).unwrap();
    let query = [Predicate::Synonym, Predicate::Hyponym];
    let mut checked = 0;
    for s in g.senses() {
        let got = g.related_terms(&s.sense_id, &query).unwrap();
        let mut want: Vec<(Predicate, String)> = g
            .triples()
            .iter()
            .filter(|t| t.subject == s.sense_id && query.contains(&t.predicate))
            .map(|t| (t.predicate, t.object.clone()))
            .collect();
        want.sort();
        assert_eq!(got, want, "sense {}", s.sense_id);
        assert!(g.related_terms(&s.sense_id, &[]).unwrap().is_empty());
        checked += usize::from(got.len() >= 3);
    }
    assert!(
        checked > 0,
        "fixture should contain a sense with three rows"
    );
}

#[test]
fn related_terms_of_two_synonyms_and_a_hyponym() {
    let s = WordSense::new("snake", "noun", "a treacherous person");
    let t = |p, o: &str| KnowledgeTriple {
        subject: s.sense_id.clone(),
        predicate: p,
        object: o.into(),
    };
    let triples = vec![
        t(Predicate::Synonym, "traitor"),
        t(Predicate::Hyponym, "backstabber"),
        t(Predicate::Form, "snakes"),
        t(Predicate::Synonym, "rat"),
    ];
    let g = KnowledgeGraph::from_parts(vec![s.clone()], triples).unwrap();
    let rows = g
        .related_terms(&s.sense_id, &[Predicate::Synonym, Predicate::Hyponym])
        .unwrap();
    assert_eq!(
        rows,
        [
            (Predicate::Synonym, "rat".to_string()),
            (Predicate::Synonym, "traitor".to_string()),
            (Predicate::Hyponym, "backstabber".to_string()),
        ]
    );
    let missing = WordSense::new("nope", "noun", "absent").sense_id;
    assert!(matches!(
        g.related_terms(&missing, &[Predicate::Synonym]),
        Err(Error::SenseNotFound(_))
    ));
}

#[test]
fn surface_forms_match_brute_force_on_100_lemmas() {
    let mut rng = kgreplay::util::rng_from(99);
    let lemmas: Vec<String> = (0..100).map(|i| format!("Lemma{i}")).collect();
    let mut senses = Vec::new();
    let mut triples = Vec::new();
    for (i, lemma) in lemmas.iter().enumerate() {
        for k in 0..rng.gen_range(1..=3) {
            // Case variants of a lemma share an index entry.
            let shown = if k == 1 {
                lemma.to_uppercase()
            } else {
                lemma.clone()
            };
            let s = WordSense::new(&shown, "noun", &format!("gloss {i}/{k}"));
            for _ in 0..rng.gen_range(0..4) {
                let predicate = *Predicate::ALL.choose(&mut rng).unwrap();
                let object = format!(
                    "{}{}",
                    lemma.to_lowercase(),
                    ["s", "ed", "ing", "er"].choose(&mut rng).unwrap()
                );
                triples.push(KnowledgeTriple {
                    subject: s.sense_id.clone(),
                    predicate,
                    object,
                });
            }
            senses.push(s);
        }
    }
    let g = KnowledgeGraph::from_parts(senses.clone(), triples.clone()).unwrap();
    for lemma in &lemmas {
        let key = lemma.to_lowercase();
        let mut want: BTreeSet<String> = BTreeSet::from([key.clone()]);
        for t in &triples {
            let subject_lemma = senses
                .iter()
                .find(|s| s.sense_id == t.subject)
                .unwrap()
                .lemma
                .to_lowercase();
            if t.predicate == Predicate::Form && subject_lemma == key {
                want.insert(t.object.clone());
            }
        }
        assert_eq!(g.surface_forms(lemma), want, "{lemma}");
    }
    assert_eq!(
        g.surface_forms("unknown word"),
        BTreeSet::from(["unknown word".to_string()])
    );
    assert!(g.surface_forms("   ").is_empty());
}

#[test]
fn surface_forms_include_listed_forms() {
    let s = WordSense::new("run", "verb", "move fast");
    let forms = ["runs", "running"].map(|o| KnowledgeTriple {
        subject: s.sense_id.clone(),
        predicate: Predicate::Form,
        object: o.into(),
    });
    let g = KnowledgeGraph::from_parts(vec![s], forms.to_vec()).unwrap();
    let want: BTreeSet<String> = ["run", "runs", "running"].map(String::from).into();
    assert_eq!(g.surface_forms("run"), want);
}

#[test]
fn predicate_counts_partition_triples() {
    let (g, stats) = load_fixture(false).unwrap();
    let counts: BTreeMap<Predicate, usize> = g.predicate_counts();
    assert_eq!(counts.values().sum::<usize>(), g.triple_count());
    assert_eq!(counts, stats.triples_by_predicate);
}
