//! Runs every approach on the synthetic drift stream and prints final metrics.
//!
//! Usage: cargo run --release -p kgreplay --example synthetic_sweep <lr> <weight_decay> <patience>

use kgreplay::continual::{run_experiment, Approach, ExperimentConfig, KnowledgeBase};
use kgreplay::data::{make_synthetic_stream, SyntheticSpec};
use kgreplay::learner::{encoder_from_descriptor, train_task, ClassKey, ClassifierModel};
use kgreplay::semantics::{score_graph, train_definition_model, DefinitionTrainConfig};

fn main() -> kgreplay::Result<()> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|s| s.parse().expect("number"))
        .collect();
    let spec: SyntheticSpec = std::env::var("SPEC")
        .map(|j| serde_json::from_str(&j).unwrap())
        .unwrap_or_default();
    let corpus = make_synthetic_stream(
        &spec,
        std::env::var("DATA_SEED").map_or(7, |v| v.parse().unwrap()),
    )?;
    let model = train_definition_model(&corpus.definitions, &DefinitionTrainConfig::default(), 7)?;
    let kb = KnowledgeBase::new(score_graph(&model, &corpus.graph));
    let mut config = ExperimentConfig {
        buffer_capacity: 50,
        ..ExperimentConfig::default()
    };
    config.train.learning_rate = args[0];
    config.train.weight_decay = args[1];
    config.train.patience = args[2] as usize;
    config.augment.deviant_labels = corpus.deviant_labels.clone();
    let mut separability = f64::INFINITY;
    for task in &corpus.stream.tasks {
        let keys: Vec<ClassKey> = task
            .classes
            .iter()
            .map(|c| ClassKey {
                task: 0,
                name: c.clone(),
            })
            .collect();
        let fresh = ClassifierModel::new(encoder_from_descriptor(&config.encoder)?)
            .extend_classes(&keys)?;
        let (m, _) = train_task(&fresh, &task.train, &[], &task.valid, &config.train)?;
        let hits = task
            .test
            .iter()
            .filter(|i| {
                m.predict(&i.text)
                    .map(|p| p.class == i.label)
                    .unwrap_or(false)
            })
            .count();
        separability = separability.min(hits as f64 / task.test.len() as f64);
    }
    println!("SEP     A {separability:.3}");
    for approach in Approach::ALL {
        let r = run_experiment(&corpus.stream, approach, &config, &[1, 2, 3], Some(&kb))?;
        let a = &r.aggregate;
        println!(
            "{:7} A {:.3}±{:.3}  AUC {:.3}  F_A {:.3}  F_AUC {:.3}",
            approach.as_str(),
            a.accuracy_mean,
            a.accuracy_std,
            a.auc_mean,
            a.forgetting_accuracy_mean.unwrap_or(f64::NAN),
            a.forgetting_auc_mean.unwrap_or(f64::NAN),
        );
    }
    for (name, sel, learn) in [("no-sel", false, true), ("no-learn", true, false)] {
        let cfg = ExperimentConfig {
            pre_selection_augmentation: sel,
            pre_learning_augmentation: learn,
            ..config.clone()
        };
        let r = run_experiment(
            &corpus.stream,
            Approach::KnowledgeSemantic,
            &cfg,
            &[1, 2, 3],
            Some(&kb),
        )?;
        println!("{name:7} A {:.3}", r.aggregate.accuracy_mean);
    }
    Ok(())
}
