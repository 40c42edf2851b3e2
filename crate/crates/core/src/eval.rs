//! Entity-level scoring, decode throughput and comparison tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Sentence, Span};
use crate::crf::CrfModel;
use crate::error::{Error, Result};

/// Spans of one layer keyed by sentence id.
pub type SpanLayer = BTreeMap<String, Vec<Span>>;

/// Extracts `layer` from `dataset` as a [`SpanLayer`].
pub fn layer_of(dataset: &Dataset, layer: &str) -> SpanLayer {
    dataset
        .annotated(layer)
        .map(|(s, spans)| (s.id().to_owned(), spans.to_vec()))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EntityMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        EntityMetrics {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Sums counts (micro-aggregation) and recomputes the ratios.
    pub fn merge(&self, other: &EntityMetrics) -> Self {
        Self::from_counts(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
        )
    }
}

/// Exact `(start, end, label)` matching within one sentence.
pub fn sentence_counts(predicted: &[Span], gold: &[Span]) -> (usize, usize, usize) {
    let gold_set: HashSet<&Span> = gold.iter().collect();
    let pred_set: HashSet<&Span> = predicted.iter().collect();
    let tp = pred_set.intersection(&gold_set).count();
    (tp, pred_set.len() - tp, gold_set.len() - tp)
}

/// Micro-averaged entity precision/recall/F1 over two layers covering the
/// same sentence ids.
pub fn entity_prf(predicted: &SpanLayer, gold: &SpanLayer) -> Result<EntityMetrics> {
    if predicted.len() != gold.len() || predicted.keys().zip(gold.keys()).any(|(a, b)| a != b) {
        let missing: Vec<&String> = gold
            .keys()
            .filter(|k| !predicted.contains_key(*k))
            .chain(predicted.keys().filter(|k| !gold.contains_key(*k)))
            .take(5)
            .collect();
        return Err(Error::IdMismatch(format!("e.g. {missing:?}")));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (id, p) in predicted {
        let (a, b, c) = sentence_counts(p, &gold[id]);
        tp += a;
        fp += b;
        fn_ += c;
    }
    Ok(EntityMetrics::from_counts(tp, fp, fn_))
}

/// Decodes every sentence of `dataset` and scores it against `gold_layer`.
pub fn evaluate_model(
    model: &CrfModel,
    dataset: &Dataset,
    gold_layer: &str,
) -> Result<EntityMetrics> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (s, gold) in dataset.annotated(gold_layer) {
        let pred = model.predict(s)?;
        let (a, b, c) = sentence_counts(&pred, gold);
        tp += a;
        fp += b;
        fn_ += c;
    }
    Ok(EntityMetrics::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub sentences: usize,
    pub characters: usize,
    pub threads: usize,
    pub wall_time_secs: f64,
    pub sentences_per_second: f64,
    pub characters_per_second: f64,
    /// Hash of all decoded tag sequences, in corpus order.
    pub checksum: u64,
}

fn decode_chunk(model: &CrfModel, chunk: &[Sentence]) -> Result<u64> {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for s in chunk {
        model.decode(s)?.0.hash(&mut h);
    }
    Ok(h.finish())
}

fn decode_all(model: &CrfModel, corpus: &[Sentence], threads: usize) -> Result<u64> {
    if threads <= 1 {
        return decode_chunk(model, corpus);
    }
    let size = corpus.len().div_ceil(threads).max(1);
    let parts: Vec<Result<u64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = corpus
            .chunks(size)
            .map(|chunk| scope.spawn(move || decode_chunk(model, chunk)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("decode thread panicked"))
            .collect()
    });
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for p in parts {
        p?.hash(&mut h);
    }
    Ok(h.finish())
}

/// Decode passes for [`throughput_bench`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Untimed passes before measuring.
    pub warmup: usize,
    /// Timed passes; the fastest one is reported.
    pub repeats: usize,
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            warmup: 1,
            repeats: 5,
            threads: 1,
        }
    }
}

/// Decodes `corpus` `warmup + repeats` times and reports the fastest timed pass.
pub fn throughput_bench(
    model: &CrfModel,
    name: &str,
    corpus: &[Sentence],
    config: &BenchConfig,
) -> Result<BenchReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let threads = config.threads.max(1);
    for _ in 0..config.warmup {
        decode_all(model, corpus, threads)?;
    }
    let mut wall = f64::INFINITY;
    let mut checksum = 0;
    for _ in 0..config.repeats.max(1) {
        let t0 = Instant::now();
        checksum = decode_all(model, corpus, threads)?;
        wall = wall.min(t0.elapsed().as_secs_f64());
    }
    let wall = wall.max(1e-9);
    let characters: usize = corpus.iter().map(Sentence::len).sum();
    Ok(BenchReport {
        model: name.to_owned(),
        sentences: corpus.len(),
        characters,
        threads,
        wall_time_secs: wall,
        sentences_per_second: corpus.len() as f64 / wall,
        characters_per_second: characters as f64 / wall,
        checksum,
    })
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub metrics: EntityMetrics,
    pub bench: Option<BenchReport>,
}

/// A line of the report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub sentences_per_second: Option<f64>,
    pub characters_per_second: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub table: String,
    pub lines: Vec<ReportLine>,
}

impl Report {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for l in &self.lines {
            out.push_str(&serde_json::to_string(l)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Aligned table of P/R/F1 and throughput with point deltas against the first run.
pub fn compare_report(runs: &[RunSummary]) -> Result<Report> {
    let Some(first) = runs.first() else {
        return Err(Error::Config("report needs at least one run".into()));
    };
    let width = runs
        .iter()
        .map(|r| r.name.chars().count())
        .max()
        .unwrap_or(4)
        .max(4);
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<width$}  {:>7} {:>7} {:>7}  {:>7} {:>7} {:>7}  {:>10}",
        "name", "P", "R", "F1", "ΔP", "ΔR", "ΔF1", "sent/s"
    );
    let pts = |x: f64| 100.0 * x;
    let mut lines = Vec::with_capacity(runs.len());
    for r in runs {
        let m = &r.metrics;
        let speed = r.bench.as_ref().map_or_else(
            || "-".to_owned(),
            |b| format!("{:.1}", b.sentences_per_second),
        );
        let _ = writeln!(
            table,
            "{:<width$}  {:>7.2} {:>7.2} {:>7.2}  {:>+7.1} {:>+7.1} {:>+7.1}  {:>10}",
            r.name,
            pts(m.precision),
            pts(m.recall),
            pts(m.f1),
            pts(m.precision - first.metrics.precision),
            pts(m.recall - first.metrics.recall),
            pts(m.f1 - first.metrics.f1),
            speed
        );
        lines.push(ReportLine {
            name: r.name.clone(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            sentences_per_second: r.bench.as_ref().map(|b| b.sentences_per_second),
            characters_per_second: r.bench.as_ref().map(|b| b.characters_per_second),
        });
    }
    Ok(Report { table, lines })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(entries: &[(&str, &[(usize, usize)])]) -> SpanLayer {
        entries
            .iter()
            .map(|(id, spans)| {
                (
                    id.to_string(),
                    spans.iter().map(|&(a, b)| Span::new(a, b, "COM")).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn hand_enumerated_counts() {
        let pred = layer(&[("a", &[(0, 2), (5, 7)])]);
        let gold = layer(&[("a", &[(0, 2), (3, 4), (8, 9)])]);
        let m = entity_prf(&pred, &gold).unwrap();
        assert_eq!(
            (m.true_positives, m.false_positives, m.false_negatives),
            (1, 1, 2)
        );
        assert_eq!(m.precision, 0.5);
        approx::assert_abs_diff_eq!(m.recall, 1.0 / 3.0, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(m.f1, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn identical_and_empty() {
        let gold = layer(&[("a", &[(0, 2)]), ("b", &[(1, 3), (4, 6)])]);
        let m = entity_prf(&gold, &gold).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let empty = layer(&[("a", &[]), ("b", &[])]);
        let m = entity_prf(&empty, &gold).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn label_must_match() {
        let pred: SpanLayer = [("a".to_owned(), vec![Span::new(0, 2, "PER")])].into();
        let gold: SpanLayer = [("a".to_owned(), vec![Span::new(0, 2, "COM")])].into();
        assert_eq!(entity_prf(&pred, &gold).unwrap().true_positives, 0);
    }

    #[test]
    fn id_mismatch() {
        let a = layer(&[("a", &[])]);
        let b = layer(&[("b", &[])]);
        assert!(matches!(entity_prf(&a, &b), Err(Error::IdMismatch(_))));
    }

    #[test]
    fn micro_not_macro() {
        let pred = layer(&[("a", &[(0, 1)]), ("b", &[(0, 1), (2, 3), (4, 5)])]);
        let gold = layer(&[("a", &[(0, 1), (1, 2)]), ("b", &[(0, 1), (2, 3), (4, 5)])]);
        let m = entity_prf(&pred, &gold).unwrap();
        assert_eq!(m.recall, 4.0 / 5.0);
        let merged = entity_prf(
            &layer(&[("a", &[(0, 1)])]),
            &layer(&[("a", &[(0, 1), (1, 2)])]),
        )
        .unwrap()
        .merge(
            &entity_prf(
                &layer(&[("b", &[(0, 1), (2, 3), (4, 5)])]),
                &layer(&[("b", &[(0, 1), (2, 3), (4, 5)])]),
            )
            .unwrap(),
        );
        assert_eq!(merged, m);
    }

    #[test]
    fn report_deltas() {
        let run = |name: &str, tp: usize, fn_: usize| RunSummary {
            name: name.into(),
            metrics: EntityMetrics::from_counts(tp, 0, fn_),
            bench: None,
        };
        let r = compare_report(&[run("only", 3, 2)]).unwrap();
        assert_eq!(r.lines.len(), 1);
        assert!(r.table.lines().nth(1).unwrap().contains("+0.0"));

        let r = compare_report(&[run("outline", 60, 40), run("detail", 80, 20)]).unwrap();
        let row = r.table.lines().nth(2).unwrap();
        assert!(row.contains("+20.0"), "{row}");
        assert!(compare_report(&[]).is_err());
    }
}
