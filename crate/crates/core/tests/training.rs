use wsner::corpus::{layer, Dataset, LabelScheme, Sentence, Span};
use wsner::crf::{fit, CrfModel, TrainConfig, TrainingSet};
use wsner::emitter::EmitterConfig;
use wsner::Error;

const NAMES: [&str; 5] = ["ACME", "ZEN", "QUX", "BOLT", "WAVE"];
const FILLER: [&str; 4] = ["said", "met", "sold", "left"];

/// Uppercase runs are entities, everything else is not.
fn separable(n: usize) -> Dataset {
    let mut ds = Dataset::new();
    for k in 0..n {
        let name = NAMES[k % NAMES.len()];
        let filler = FILLER[k % FILLER.len()];
        let text = format!("{filler} {name} ok");
        let start = filler.chars().count() + 1;
        let idx = ds.push(Sentence::new(format!("s{k}"), text)).unwrap();
        ds.set_spans(
            layer::GOLD,
            idx,
            vec![Span::new(start, start + name.len(), "COM")],
        )
        .unwrap();
    }
    ds
}

fn small_config() -> EmitterConfig {
    EmitterConfig {
        window: 1,
        hash_dim: 1 << 12,
        hash_seed: 3,
    }
}

#[test]
fn separable_set_is_learned_exactly() {
    let ds = separable(20);
    let model = CrfModel::new(LabelScheme::default(), small_config(), true).unwrap();
    let set = TrainingSet::from_dataset(&model, &ds, layer::GOLD).unwrap();
    let config = TrainConfig {
        learning_rate: 0.1,
        max_epochs: 50,
        patience: 50,
        ..TrainConfig::default()
    };
    let out = fit(model, &set, &set, &config).unwrap();
    assert_eq!(out.best().unwrap().dev.f1, 1.0);
    assert_eq!(out.model.evaluate_examples(&set).unwrap().f1, 1.0);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let ds = separable(10);
    let model = CrfModel::new(LabelScheme::default(), small_config(), true).unwrap();
    let set = TrainingSet::from_dataset(&model, &ds, layer::GOLD).unwrap();
    let config = TrainConfig {
        learning_rate: 0.0,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let out = fit(model.clone(), &set, &set, &config).unwrap();
    assert_eq!(out.model, model);
}

#[test]
fn training_is_deterministic() {
    let ds = separable(20);
    let run = || {
        let model = CrfModel::new(LabelScheme::default(), small_config(), true).unwrap();
        let set = TrainingSet::from_dataset(&model, &ds, layer::GOLD).unwrap();
        let config = TrainConfig {
            l2: 1e-3,
            max_epochs: 4,
            ..TrainConfig::default()
        };
        fit(model, &set, &set, &config).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.model, b.model);
    assert_eq!(a.dev_f1_history(), b.dev_f1_history());
}

#[test]
fn early_stopping_restores_best_snapshot() {
    let ds = separable(20);
    let model = CrfModel::new(LabelScheme::default(), small_config(), true).unwrap();
    let set = TrainingSet::from_dataset(&model, &ds, layer::GOLD).unwrap();
    let config = TrainConfig {
        learning_rate: 0.1,
        max_epochs: 30,
        patience: 2,
        ..TrainConfig::default()
    };
    let out = fit(model, &set, &set, &config).unwrap();
    let best = out.best().unwrap().dev.f1;
    assert!(out.dev_f1_history().iter().all(|&f| f <= best));
    assert_eq!(out.model.evaluate_examples(&set).unwrap().f1, best);
    if out.stopped_early {
        assert_eq!(out.history.len(), out.best_epoch + 2);
    }
}

#[test]
fn empty_training_set_is_a_data_error() {
    let model = CrfModel::new(LabelScheme::default(), small_config(), true).unwrap();
    let empty = TrainingSet::default();
    let dev = TrainingSet::from_dataset(&model, &separable(2), layer::GOLD).unwrap();
    assert!(matches!(
        fit(model, &empty, &dev, &TrainConfig::default()),
        Err(Error::Data(_))
    ));
}

#[test]
fn masked_gold_is_rejected() {
    let model = CrfModel::new(LabelScheme::default(), small_config(), true).unwrap();
    let mut set = TrainingSet::from_dataset(&model, &separable(3), layer::GOLD).unwrap();
    // O then I-COM at position 1.
    set.examples[0].gold[1] = 2;
    set.examples[0].gold[0] = 0;
    assert!(matches!(
        fit(model, &set.clone(), &set, &TrainConfig::default()),
        Err(Error::InvalidGold { position: 1 })
    ));
}

#[test]
fn non_finite_updates_report_divergence() {
    let model = CrfModel::new(LabelScheme::default(), small_config(), true).unwrap();
    let set = TrainingSet::from_dataset(&model, &separable(10), layer::GOLD).unwrap();
    let config = TrainConfig {
        learning_rate: 1e308,
        ..TrainConfig::default()
    };
    assert!(matches!(
        fit(model, &set, &set, &config),
        Err(Error::Divergence { .. })
    ));
}
