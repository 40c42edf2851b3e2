//! Finds sentences where a model and the dictionary disagree, resolves them
//! through the on-disk store and exports the corrected set.
//!
//! `cargo run --release -p wsner --example disagreement_queue`

use wsner::corpus::{layer, LabelScheme};
use wsner::crf::TrainConfig;
use wsner::emitter::EmitterConfig;
use wsner::pipeline::{outline_train, select_disagreements, DisagreementStore};
use wsner::synth::{gen_corpus, SynthConfig};

fn main() -> wsner::Result<()> {
    let corpus = gen_corpus(&SynthConfig {
        n_sentences: 2_000,
        n_names: 200,
        n_unlabeled: 0,
        ..SynthConfig::default()
    })?;
    let config = TrainConfig {
        max_epochs: 4,
        ..TrainConfig::default()
    };
    let model = outline_train(
        &corpus.train,
        &corpus.dev,
        &LabelScheme::default(),
        EmitterConfig::teacher(),
        &config,
    )?
    .model;
    let records = select_disagreements(&model, &corpus.train)?;
    println!(
        "{} of {} sentences disagree",
        records.len(),
        corpus.train.len()
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("records.jsonl");
    let mut store = DisagreementStore::create(&path, &records)?;
    // A reviewer accepts the gold spans for half the queue and skips the rest.
    for (k, r) in records.iter().enumerate() {
        if k % 2 == 0 {
            let gold = corpus
                .train
                .spans_by_id(layer::GOLD, &r.sentence_id)
                .unwrap_or(&[]);
            store.correct(&r.sentence_id, gold.to_vec(), Some("example"))?;
        } else {
            store.skip(&r.sentence_id, Some("example"))?;
        }
    }
    // Reopening replays the append-only log.
    let store = DisagreementStore::open(&path)?;
    println!("{:?}", store.progress());
    let corrected = store.export_corrected()?;
    println!(
        "exported {} sentences with a corrected layer",
        corrected.layer_len(layer::CORRECTED)
    );
    Ok(())
}
