//! Pseudo-labels unlabeled text with a wide teacher and trains a narrow
//! student, then compares accuracy and decode speed.
//!
//! `cargo run --release -p wsner --example distillation`

use wsner::corpus::{layer, LabelScheme};
use wsner::crf::TrainConfig;
use wsner::emitter::EmitterConfig;
use wsner::eval::{evaluate_model, throughput_bench, BenchConfig};
use wsner::pipeline::{distill, outline_train, train_student, DEFAULT_MAX_LEN};
use wsner::synth::{gen_corpus, SynthConfig};

fn main() -> wsner::Result<()> {
    let corpus = gen_corpus(&SynthConfig {
        n_sentences: 3_000,
        n_names: 300,
        n_unlabeled: 3_000,
        ..SynthConfig::default()
    })?;
    let scheme = LabelScheme::default();
    let config = TrainConfig {
        max_epochs: 6,
        ..TrainConfig::default()
    };
    // Gold stands in for corrected data so the example stays short.
    let mut gold_train = corpus.train.clone();
    gold_train.remove_layer(layer::COARSE);
    gold_train.rename_layer(layer::GOLD, layer::COARSE);
    let teacher = outline_train(
        &gold_train,
        &corpus.dev,
        &scheme,
        EmitterConfig::teacher(),
        &config,
    )?
    .model;

    let pseudo = distill(&teacher, &corpus.unlabeled, DEFAULT_MAX_LEN, 1)?;
    println!("{} pseudo-labelled sentences", pseudo.dataset.len());
    let student = train_student(
        &scheme,
        EmitterConfig::student(),
        &pseudo.dataset,
        &corpus.dev,
        &config,
    )?
    .model;

    let bench = BenchConfig::default();
    for (name, model) in [("teacher", &teacher), ("student", &student)] {
        let f1 = evaluate_model(model, &corpus.test, layer::GOLD)?.f1;
        let speed = throughput_bench(model, name, corpus.test.sentences(), &bench)?;
        println!(
            "{name}: F1 {:.2}, {:.0} sentences/s",
            100.0 * f1,
            speed.sentences_per_second
        );
    }
    Ok(())
}
