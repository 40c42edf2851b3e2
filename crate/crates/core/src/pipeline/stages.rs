use crate::corpus::{layer, spans_to_tags, Dataset, LabelScheme, Sentence};
use crate::crf::{fit, CrfModel, FitOutcome, TrainConfig, TrainingSet};
use crate::emitter::EmitterConfig;
use crate::error::{Error, Result};

use super::store::{DisagreementRecord, RecordStatus};

/// Default length limit for pseudo-labelling.
pub const DEFAULT_MAX_LEN: usize = 512;

/// First stage: a fresh constrained model trained on the coarse layer.
pub fn outline_train(
    coarse: &Dataset,
    dev: &Dataset,
    scheme: &LabelScheme,
    emitter: EmitterConfig,
    config: &TrainConfig,
) -> Result<FitOutcome> {
    if coarse.layer_len(layer::COARSE) == 0 {
        return Err(Error::Data("no sentences carry a coarse layer".into()));
    }
    let model = CrfModel::new(scheme.clone(), emitter, true)?;
    let train = TrainingSet::from_dataset(&model, coarse, layer::COARSE)?;
    let dev = TrainingSet::from_dataset(&model, dev, layer::GOLD)?;
    fit(model, &train, &dev, config)
}

/// One record per sentence whose decoded tags differ from its coarse tags,
/// most differences first, then by id.
pub fn select_disagreements(model: &CrfModel, coarse: &Dataset) -> Result<Vec<DisagreementRecord>> {
    let mut records = Vec::new();
    for (s, spans) in coarse.annotated(layer::COARSE) {
        let coarse_tags = spans_to_tags(s.len(), spans, model.scheme())?;
        let predicted = model.decode(s)?;
        let diff_positions: Vec<usize> = coarse_tags
            .ids()
            .iter()
            .zip(predicted.ids())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect();
        if diff_positions.is_empty() {
            continue;
        }
        records.push(DisagreementRecord {
            sentence_id: s.id().to_owned(),
            text: s.text().to_owned(),
            coarse_spans: spans.to_vec(),
            predicted_spans: crate::corpus::tags_to_spans(&predicted, model.scheme()),
            diff_positions,
            status: RecordStatus::Pending,
            corrected_spans: None,
            annotator_id: None,
        });
    }
    records.sort_by(|a, b| {
        b.diff_positions
            .len()
            .cmp(&a.diff_positions.len())
            .then_with(|| a.sentence_id.cmp(&b.sentence_id))
    });
    Ok(records)
}

/// Gold-oracle responder: corrects every record with the spans in `gold`.
pub fn oracle_corrections(
    records: &[DisagreementRecord],
    gold: &Dataset,
) -> Result<Vec<DisagreementRecord>> {
    records
        .iter()
        .map(|r| {
            let spans = gold
                .spans_by_id(layer::GOLD, &r.sentence_id)
                .ok_or_else(|| Error::UnknownSentence(r.sentence_id.clone()))?;
            r.corrected(spans.to_vec())
        })
        .collect()
}

/// Dataset of the disputed sentences with a `corrected` layer: corrected
/// spans where a reviewer supplied them, coarse spans for skipped records.
pub fn apply_corrections(coarse: &Dataset, records: &[DisagreementRecord]) -> Result<Dataset> {
    let mut out = Dataset::new();
    for r in records {
        let sentence = coarse
            .get(&r.sentence_id)
            .ok_or_else(|| Error::UnknownSentence(r.sentence_id.clone()))?;
        let spans = match (r.status, &r.corrected_spans) {
            (RecordStatus::Corrected, Some(spans)) => spans.clone(),
            (RecordStatus::Skipped, _) => coarse
                .spans_by_id(layer::COARSE, &r.sentence_id)
                .unwrap_or(&[])
                .to_vec(),
            _ => {
                return Err(Error::Data(format!(
                    "record {} is still pending",
                    r.sentence_id
                )))
            }
        };
        let idx = out.push(sentence.clone())?;
        out.set_spans(layer::CORRECTED, idx, spans)?;
    }
    Ok(out)
}

/// Second stage: continues training `model` on the corrected layer.
/// An empty corrected set returns the model unchanged.
pub fn detail_train(
    model: CrfModel,
    corrected: &Dataset,
    dev: &Dataset,
    config: &TrainConfig,
) -> Result<FitOutcome> {
    if corrected.layer_len(layer::CORRECTED) == 0 {
        log::warn!("corrected set is empty; detail stage leaves the model unchanged");
        return Ok(FitOutcome {
            model,
            history: Vec::new(),
            best_epoch: 0,
            stopped_early: false,
        });
    }
    let train = TrainingSet::from_dataset(&model, corrected, layer::CORRECTED)?;
    let dev = TrainingSet::from_dataset(&model, dev, layer::GOLD)?;
    fit(model, &train, &dev, config)
}

#[derive(Debug, Clone)]
pub struct Distilled {
    /// Decoded sentences with a `pseudo` layer.
    pub dataset: Dataset,
    /// Sentences longer than the limit.
    pub skipped: usize,
}

/// Pseudo-labels `unlabeled` with the teacher's Viterbi output, decoding on
/// up to `threads` threads. Output order follows input order.
pub fn distill(
    teacher: &CrfModel,
    unlabeled: &[Sentence],
    max_len: usize,
    threads: usize,
) -> Result<Distilled> {
    let kept: Vec<&Sentence> = unlabeled.iter().filter(|s| s.len() <= max_len).collect();
    let skipped = unlabeled.len() - kept.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} sentence(s) longer than {max_len} characters");
    }
    let labels = decode_parallel(teacher, &kept, threads)?;
    let mut dataset = Dataset::new();
    for (s, spans) in kept.into_iter().zip(labels) {
        let idx = dataset.push(s.clone())?;
        dataset.set_spans(layer::PSEUDO, idx, spans)?;
    }
    Ok(Distilled { dataset, skipped })
}

/// Order-preserving parallel prediction.
fn decode_parallel(
    model: &CrfModel,
    sentences: &[&Sentence],
    threads: usize,
) -> Result<Vec<Vec<crate::corpus::Span>>> {
    if threads <= 1 || sentences.len() < 64 {
        return sentences.iter().map(|s| model.predict(s)).collect();
    }
    let chunk = sentences.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = sentences
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|s| model.predict(s))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(sentences.len());
        for h in handles {
            out.extend(h.join().expect("decode thread panicked")?);
        }
        Ok(out)
    })
}

/// Fresh student trained on the pseudo layer, early-stopped on gold dev.
pub fn train_student(
    scheme: &LabelScheme,
    emitter: EmitterConfig,
    pseudo: &Dataset,
    dev: &Dataset,
    config: &TrainConfig,
) -> Result<FitOutcome> {
    let model = CrfModel::new(scheme.clone(), emitter, true)?;
    let train = TrainingSet::from_dataset(&model, pseudo, layer::PSEUDO)?;
    if train.is_empty() {
        return Err(Error::Data("pseudo-labelled set is empty".into()));
    }
    let dev = TrainingSet::from_dataset(&model, dev, layer::GOLD)?;
    fit(model, &train, &dev, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Span;

    fn coarse(items: &[(&str, &str, Vec<Span>)]) -> Dataset {
        let mut ds = Dataset::new();
        for (id, text, spans) in items {
            let i = ds.push(Sentence::new(*id, *text)).unwrap();
            ds.set_spans(layer::COARSE, i, spans.clone()).unwrap();
        }
        ds
    }

    /// Model whose emissions strongly prefer `O` everywhere.
    fn all_outside() -> CrfModel {
        let cfg = EmitterConfig {
            window: 0,
            hash_dim: 64,
            hash_seed: 1,
        };
        let mut m = CrfModel::new(LabelScheme::default(), cfg, true).unwrap();
        m.crf_mut().start[0] = 5.0;
        m.crf_mut().transitions[0] = 5.0;
        m
    }

    #[test]
    fn agreement_yields_no_records() {
        let ds = coarse(&[("a", "abcdef", vec![]), ("b", "xyz", vec![])]);
        assert!(select_disagreements(&all_outside(), &ds)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn records_list_diff_positions_and_sort_by_size() {
        let ds = coarse(&[
            ("a", "abcdefgh", vec![Span::new(3, 5, "COM")]),
            ("b", "abcdefgh", vec![Span::new(0, 5, "COM")]),
            ("c", "abcdefgh", vec![Span::new(7, 8, "COM")]),
        ]);
        let records = select_disagreements(&all_outside(), &ds).unwrap();
        let ids: Vec<&str> = records.iter().map(|r| r.sentence_id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert_eq!(records[1].diff_positions, vec![3, 4]);
        assert!(records.iter().all(|r| r.predicted_spans.is_empty()));
    }

    #[test]
    fn corrections_replace_coarse_spans() {
        let ds = coarse(&[
            ("a", "abcdefgh", vec![Span::new(0, 4, "COM")]),
            ("b", "abcdefgh", vec![Span::new(0, 5, "COM")]),
            ("c", "abcdefgh", vec![]),
        ]);
        let records = select_disagreements(&all_outside(), &ds).unwrap();
        let a = records.iter().find(|r| r.sentence_id == "a").unwrap();
        let b = records.iter().find(|r| r.sentence_id == "b").unwrap();
        let resolved = vec![
            a.corrected(vec![Span::new(0, 2, "COM")]).unwrap(),
            b.skipped(),
        ];
        let out = apply_corrections(&ds, &resolved).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(
            out.spans_by_id(layer::CORRECTED, "a").unwrap(),
            &[Span::new(0, 2, "COM")]
        );
        assert_eq!(
            out.spans_by_id(layer::CORRECTED, "b").unwrap(),
            &[Span::new(0, 5, "COM")]
        );
    }

    #[test]
    fn correction_errors() {
        let ds = coarse(&[("a", "abcdefgh", vec![Span::new(0, 4, "COM")])]);
        let mut records = select_disagreements(&all_outside(), &ds).unwrap();
        assert!(matches!(
            apply_corrections(&ds, &records),
            Err(Error::Data(_))
        ));
        records[0] = records[0].skipped();
        records[0].sentence_id = "zzz".into();
        assert!(matches!(
            apply_corrections(&ds, &records),
            Err(Error::UnknownSentence(_))
        ));
    }

    #[test]
    fn empty_corrected_set_keeps_model() {
        let m = all_outside();
        let dev = coarse(&[]);
        let out = detail_train(m.clone(), &Dataset::new(), &dev, &TrainConfig::default()).unwrap();
        assert_eq!(out.model, m);
        assert!(out.best().is_none());
    }

    #[test]
    fn distill_skips_long_sentences() {
        let m = all_outside();
        let sentences = vec![
            Sentence::new("a", "short"),
            Sentence::new("b", "x".repeat(600)),
            Sentence::new("c", "also short"),
        ];
        let out = distill(&m, &sentences, DEFAULT_MAX_LEN, 2).unwrap();
        assert_eq!((out.dataset.len(), out.skipped), (2, 1));
        assert_eq!(out.dataset.layer_len(layer::PSEUDO), 2);
        let empty = distill(&m, &[], DEFAULT_MAX_LEN, 1).unwrap();
        assert!(empty.dataset.is_empty());
    }

    #[test]
    fn distill_output_does_not_depend_on_threads() {
        let mut m = all_outside();
        m.crf_mut().start[1] = 6.0;
        let sentences: Vec<Sentence> = (0..150)
            .map(|k| Sentence::new(format!("u{k}"), format!("{k}号公司")))
            .collect();
        let one = distill(&m, &sentences, DEFAULT_MAX_LEN, 1).unwrap();
        let four = distill(&m, &sentences, DEFAULT_MAX_LEN, 4).unwrap();
        assert_eq!(one.dataset, four.dataset);
        assert_eq!(one.dataset.sentences()[7].id(), "u7");
    }

    #[test]
    fn empty_inputs_are_data_errors() {
        let scheme = LabelScheme::default();
        let cfg = EmitterConfig::student();
        let empty = Dataset::new();
        assert!(matches!(
            outline_train(&empty, &empty, &scheme, cfg, &TrainConfig::default()),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            train_student(&scheme, cfg, &empty, &empty, &TrainConfig::default()),
            Err(Error::Data(_))
        ));
    }
}
