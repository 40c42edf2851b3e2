//! Trains an outline model on dictionary-annotated synthetic data and
//! compares it with dictionary matching alone.
//!
//! `cargo run --release -p wsner --example outline_training`

use wsner::corpus::{layer, LabelScheme};
use wsner::crf::TrainConfig;
use wsner::emitter::EmitterConfig;
use wsner::eval::evaluate_model;
use wsner::pipeline::{gazetteer_metrics, outline_train};
use wsner::synth::{gen_corpus, SynthConfig};

fn main() -> wsner::Result<()> {
    let corpus = gen_corpus(&SynthConfig {
        n_sentences: 4_000,
        n_names: 400,
        n_unlabeled: 0,
        ..SynthConfig::default()
    })?;
    let gazetteer = gazetteer_metrics(&corpus.dictionary, &corpus.test)?;
    let config = TrainConfig {
        max_epochs: 8,
        ..TrainConfig::default()
    };
    let outcome = outline_train(
        &corpus.train,
        &corpus.dev,
        &LabelScheme::default(),
        EmitterConfig::teacher(),
        &config,
    )?;
    println!("dev F1 per epoch: {:?}", outcome.dev_f1_history());
    let outline = evaluate_model(&outcome.model, &corpus.test, layer::GOLD)?;
    println!(
        "test recall: gazetteer {:.2}, outline {:.2}",
        100.0 * gazetteer.recall,
        100.0 * outline.recall
    );
    Ok(())
}
