use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use serde::Deserialize;

use super::Matcher;
use crate::corpus::{layer, repair_spans, Dataset, Sentence, Span};
use crate::error::{Error, Result};
use crate::fsutil;

/// A secondary annotator that proposes spans the dictionary missed.
pub trait ExternalAnnotator {
    fn annotate(&self, sentence: &Sentence) -> Result<Vec<Span>>;
}

/// Proposes nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullAnnotator;

impl ExternalAnnotator for NullAnnotator {
    fn annotate(&self, _sentence: &Sentence) -> Result<Vec<Span>> {
        Ok(Vec::new())
    }
}

/// Replays spans precomputed offline, keyed by sentence id.
#[derive(Debug, Default, Clone)]
pub struct ReplayAnnotator {
    spans: HashMap<String, Vec<Span>>,
}

#[derive(Deserialize)]
struct ReplayLine {
    id: String,
    spans: Vec<Span>,
}

impl ReplayAnnotator {
    pub fn new(spans: HashMap<String, Vec<Span>>) -> Self {
        ReplayAnnotator { spans }
    }

    /// Reads `{"id": ..., "spans": [...]}` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spans = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            spans.insert(rec.id, rec.spans);
        }
        Ok(ReplayAnnotator { spans })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fsutil::read_to_string(path)?)
    }
}

impl ExternalAnnotator for ReplayAnnotator {
    fn annotate(&self, sentence: &Sentence) -> Result<Vec<Span>> {
        Ok(self.spans.get(sentence.id()).cloned().unwrap_or_default())
    }
}

/// Runs an executable once per sentence: the text goes to stdin, a JSON
/// array of spans is expected on stdout.
#[derive(Debug, Clone)]
pub struct CommandAnnotator {
    program: String,
    args: Vec<String>,
}

impl CommandAnnotator {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        CommandAnnotator {
            program: program.into(),
            args,
        }
    }
}

impl ExternalAnnotator for CommandAnnotator {
    fn annotate(&self, sentence: &Sentence) -> Result<Vec<Span>> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Annotator(format!("{}: {e}", self.program)))?;
        if let Some(mut stdin) = child.stdin.take() {
            stdin
                .write_all(sentence.text().as_bytes())
                .map_err(|e| Error::Annotator(e.to_string()))?;
        }
        let out = child
            .wait_with_output()
            .map_err(|e| Error::Annotator(e.to_string()))?;
        if !out.status.success() {
            return Err(Error::Annotator(format!(
                "{} exited with {}",
                self.program, out.status
            )));
        }
        serde_json::from_slice(&out.stdout).map_err(|e| Error::Annotator(e.to_string()))
    }
}

/// Result of machine annotation.
#[derive(Debug)]
pub struct Annotated {
    /// Input sentences with a `coarse` layer.
    pub dataset: Dataset,
    /// One message per sentence whose secondary annotation failed or was invalid.
    pub warnings: Vec<String>,
}

/// Matcher spans plus secondary spans that overlap no matcher span.
pub fn merge_secondary(len: usize, primary: Vec<Span>, secondary: &[Span]) -> (Vec<Span>, usize) {
    let valid = repair_spans(len, secondary);
    let dropped_invalid = secondary.len() - valid.len();
    let mut merged = primary;
    let extra: Vec<Span> = valid
        .into_iter()
        .filter(|s| !merged.iter().any(|p| p.overlaps(s)))
        .collect();
    merged.extend(extra);
    merged.sort();
    (merged, dropped_invalid)
}

/// Builds the coarse layer: dictionary matches, optionally unioned with a
/// secondary annotator's non-overlapping proposals (the matcher wins ties).
pub fn annotate_corpus(
    sentences: &[Sentence],
    matcher: &Matcher,
    secondary: Option<&dyn ExternalAnnotator>,
) -> Result<Annotated> {
    let mut dataset = Dataset::new();
    let mut warnings = Vec::new();
    for sentence in sentences {
        let idx = dataset.push(sentence.clone())?;
        let primary = matcher.find(sentence.text());
        let spans = match secondary {
            None => primary,
            Some(ann) => match ann.annotate(sentence) {
                Ok(extra) => {
                    let (merged, dropped) = merge_secondary(sentence.len(), primary, &extra);
                    if dropped > 0 {
                        warnings.push(format!(
                            "{}: dropped {dropped} invalid secondary span(s)",
                            sentence.id()
                        ));
                    }
                    merged
                }
                Err(e) => {
                    warnings.push(format!("{}: {e}", sentence.id()));
                    primary
                }
            },
        };
        dataset.set_spans(layer::COARSE, idx, spans)?;
    }
    for w in &warnings {
        log::warn!("secondary annotator: {w}");
    }
    Ok(Annotated { dataset, warnings })
}
