//! Sentences, spans, BIO tag sequences and datasets.
//!
//! Every index in this crate counts Unicode scalar values (`char`s), never
//! bytes, so a span over `华鑫科技` is `(0, 4)` regardless of encoding.

mod io;
mod split;
mod tags;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, load_dataset_with, save_dataset, Format, LoadOptions};
pub use split::{split_sentences, Splitter, DEFAULT_DELIMITERS};
pub use tags::{spans_to_tags, tags_to_spans, TagSequence};

/// Well-known annotation layer names.
pub mod layer {
    pub const GOLD: &str = "gold";
    pub const COARSE: &str = "coarse";
    pub const PREDICTED: &str = "predicted";
    pub const CORRECTED: &str = "corrected";
    pub const PSEUDO: &str = "pseudo";
}

/// The default (and in the synthetic benchmark, only) entity label.
pub const DEFAULT_LABEL: &str = "COM";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    id: String,
    text: String,
    len: usize,
}

impl Sentence {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let len = text.chars().count();
        Sentence {
            id: id.into(),
            text,
            len,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Number of Unicode scalar values.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn chars(&self) -> Vec<char> {
        self.text.chars().collect()
    }

    /// Text covered by a scalar-value interval.
    pub fn slice(&self, start: usize, end: usize) -> String {
        self.text
            .chars()
            .skip(start)
            .take(end.saturating_sub(start))
            .collect()
    }
}

/// Half-open `[start, end)` interval over scalar values, with a label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Span {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Span {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Checks bounds and pairwise non-overlap of one annotation layer.
///
/// Returns the spans sorted by start.
pub fn validate_spans(len: usize, spans: &[Span]) -> Result<Vec<Span>> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    for s in &sorted {
        if s.start >= s.end || s.end > len {
            return Err(Error::Range {
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    for pair in sorted.windows(2) {
        if pair[0].overlaps(&pair[1]) {
            return Err(Error::Overlap {
                first_start: pair[0].start,
                first_end: pair[0].end,
                second_start: pair[1].start,
                second_end: pair[1].end,
            });
        }
    }
    Ok(sorted)
}

/// Drops out-of-range spans and resolves overlaps by keeping the span that
/// starts first (longer one on equal starts).
pub fn repair_spans(len: usize, spans: &[Span]) -> Vec<Span> {
    let mut sorted: Vec<Span> = spans
        .iter()
        .filter(|s| s.start < s.end && s.end <= len)
        .cloned()
        .collect();
    sorted.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
    let mut out: Vec<Span> = Vec::with_capacity(sorted.len());
    for s in sorted {
        if out.last().is_none_or(|last| last.end <= s.start) {
            out.push(s);
        }
    }
    out
}

/// Ordered set of entity labels. Tag ids are `O = 0`, `B-k = 1 + 2k`, `I-k = 2 + 2k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelScheme {
    labels: Vec<String>,
}

impl LabelScheme {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Config(
                "label scheme needs at least one label".into(),
            ));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid label `{l}`")));
            }
            if labels[..i].contains(l) {
                return Err(Error::Config(format!("duplicate label `{l}`")));
            }
        }
        Ok(LabelScheme { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_tags(&self) -> usize {
        2 * self.labels.len() + 1
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn begin_tag(&self, label_idx: usize) -> usize {
        1 + 2 * label_idx
    }

    pub fn inside_tag(&self, label_idx: usize) -> usize {
        2 + 2 * label_idx
    }

    /// `Some((label index, is_begin))` for B/I tags, `None` for O.
    pub fn decompose(&self, tag: usize) -> Option<(usize, bool)> {
        if tag == 0 {
            None
        } else {
            Some(((tag - 1) / 2, tag % 2 == 1))
        }
    }

    pub fn tag_name(&self, tag: usize) -> String {
        match self.decompose(tag) {
            None => "O".to_owned(),
            Some((l, true)) => format!("B-{}", self.labels[l]),
            Some((l, false)) => format!("I-{}", self.labels[l]),
        }
    }

    pub fn tag_index(&self, name: &str) -> Result<usize> {
        if name == "O" {
            return Ok(0);
        }
        let (prefix, label) = name
            .split_once('-')
            .ok_or_else(|| Error::UnknownLabel(name.to_owned()))?;
        let l = self
            .label_index(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_owned()))?;
        match prefix {
            "B" => Ok(self.begin_tag(l)),
            "I" => Ok(self.inside_tag(l)),
            _ => Err(Error::UnknownLabel(name.to_owned())),
        }
    }
}

impl Default for LabelScheme {
    fn default() -> Self {
        LabelScheme {
            labels: vec![DEFAULT_LABEL.to_owned()],
        }
    }
}

impl TryFrom<Vec<String>> for LabelScheme {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        LabelScheme::new(v)
    }
}

impl From<LabelScheme> for Vec<String> {
    fn from(s: LabelScheme) -> Self {
        s.labels
    }
}

/// Sentences plus named annotation layers.
///
/// A layer holds at most one span list per sentence; a sentence may be
/// absent from a layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    sentences: Vec<Sentence>,
    index: HashMap<String, usize>,
    layers: BTreeMap<String, Vec<Option<Vec<Span>>>>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sentences(sentences: impl IntoIterator<Item = Sentence>) -> Result<Self> {
        let mut ds = Dataset::new();
        for s in sentences {
            ds.push(s)?;
        }
        Ok(ds)
    }

    /// Appends a sentence. Fails on duplicate ids.
    pub fn push(&mut self, sentence: Sentence) -> Result<usize> {
        if self.index.contains_key(sentence.id()) {
            return Err(Error::Invariant(format!(
                "duplicate sentence id `{}`",
                sentence.id()
            )));
        }
        let idx = self.sentences.len();
        self.index.insert(sentence.id().to_owned(), idx);
        self.sentences.push(sentence);
        for layer in self.layers.values_mut() {
            layer.push(None);
        }
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Sentence> {
        self.position(id).map(|i| &self.sentences[i])
    }

    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.layers.keys().map(String::as_str)
    }

    pub fn has_layer(&self, name: &str) -> bool {
        self.layers.contains_key(name)
    }

    /// Sets the spans of sentence `idx` in `layer` after validating them.
    pub fn set_spans(&mut self, layer: &str, idx: usize, spans: Vec<Span>) -> Result<()> {
        let sentence = self
            .sentences
            .get(idx)
            .ok_or_else(|| Error::Invariant(format!("sentence index {idx} out of range")))?;
        let spans = validate_spans(sentence.len(), &spans)?;
        let n = self.sentences.len();
        let entry = self
            .layers
            .entry(layer.to_owned())
            .or_insert_with(|| vec![None; n]);
        entry[idx] = Some(spans);
        Ok(())
    }

    pub fn set_spans_by_id(&mut self, layer: &str, id: &str, spans: Vec<Span>) -> Result<()> {
        let idx = self
            .position(id)
            .ok_or_else(|| Error::UnknownSentence(id.to_owned()))?;
        self.set_spans(layer, idx, spans)
    }

    /// Creates an empty layer where every sentence has no spans.
    pub fn add_empty_layer(&mut self, layer: &str) {
        let n = self.sentences.len();
        self.layers
            .entry(layer.to_owned())
            .or_insert_with(|| vec![Some(Vec::new()); n]);
    }

    pub fn spans(&self, layer: &str, idx: usize) -> Option<&[Span]> {
        self.layers
            .get(layer)
            .and_then(|l| l.get(idx))
            .and_then(|s| s.as_deref())
    }

    pub fn spans_by_id(&self, layer: &str, id: &str) -> Option<&[Span]> {
        self.position(id).and_then(|i| self.spans(layer, i))
    }

    pub fn remove_layer(&mut self, layer: &str) -> bool {
        self.layers.remove(layer).is_some()
    }

    /// Renames a layer, replacing any existing layer with the new name.
    pub fn rename_layer(&mut self, from: &str, to: &str) -> bool {
        match self.layers.remove(from) {
            Some(l) => {
                self.layers.insert(to.to_owned(), l);
                true
            }
            None => false,
        }
    }

    /// Iterates `(sentence, spans)` for sentences annotated in `layer`.
    pub fn annotated<'a>(
        &'a self,
        layer: &str,
    ) -> impl Iterator<Item = (&'a Sentence, &'a [Span])> + 'a {
        let spans = self.layers.get(layer);
        self.sentences
            .iter()
            .enumerate()
            .filter_map(move |(i, s)| spans.and_then(|l| l[i].as_deref()).map(|sp| (s, sp)))
    }

    /// Number of sentences annotated in `layer`.
    pub fn layer_len(&self, layer: &str) -> usize {
        self.layers
            .get(layer)
            .map_or(0, |l| l.iter().filter(|s| s.is_some()).count())
    }

    /// New dataset holding the sentences at `indices` (in that order) with all their layers.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut out = Dataset::new();
        for &i in indices {
            out.push(self.sentences[i].clone())?;
        }
        for (name, layer) in &self.layers {
            let spans: Vec<Option<Vec<Span>>> = indices.iter().map(|&i| layer[i].clone()).collect();
            if spans.iter().any(Option::is_some) {
                out.layers.insert(name.clone(), spans);
            }
        }
        Ok(out)
    }

    /// Only the sentences annotated in `layer`, keeping just that layer.
    pub fn restrict_to_layer(&self, layer: &str) -> Result<Dataset> {
        let mut out = Dataset::new();
        for (s, spans) in self.annotated(layer) {
            let idx = out.push(s.clone())?;
            out.set_spans(layer, idx, spans.to_vec())?;
        }
        Ok(out)
    }

    /// Sentence texts without any layer.
    pub fn strip_layers(&self) -> Dataset {
        Dataset {
            sentences: self.sentences.clone(),
            index: self.index.clone(),
            layers: BTreeMap::new(),
        }
    }

    /// Copies one layer from `other` (matched by sentence id).
    pub fn import_layer(&mut self, other: &Dataset, layer: &str) -> Result<()> {
        for (s, spans) in other.annotated(layer) {
            self.set_spans_by_id(layer, s.id(), spans.to_vec())?;
        }
        Ok(())
    }
}
