//! Append-only JSON Lines store of disagreement records.
//!
//! A later line for the same sentence id supersedes earlier ones. Every
//! append is flushed and synced before it returns. On open, a trailing line
//! cut short by a crash is dropped and truncated away; a malformed line
//! anywhere else is corruption.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{layer, validate_spans, Dataset, Sentence, Span};
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Pending,
    Corrected,
    Skipped,
}

impl std::str::FromStr for RecordStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(RecordStatus::Pending),
            "corrected" => Ok(RecordStatus::Corrected),
            "skipped" => Ok(RecordStatus::Skipped),
            other => Err(Error::Config(format!("unknown status `{other}`"))),
        }
    }
}

/// A sentence where the tagger and the coarse annotation disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisagreementRecord {
    pub sentence_id: String,
    pub text: String,
    pub coarse_spans: Vec<Span>,
    pub predicted_spans: Vec<Span>,
    /// Positions where the coarse and predicted tags differ.
    pub diff_positions: Vec<usize>,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_spans: Option<Vec<Span>>,
    /// Who resolved the record, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
}

impl DisagreementRecord {
    pub fn validate(&self) -> Result<()> {
        if self.diff_positions.is_empty() {
            return Err(Error::Invariant(format!(
                "{}: empty diff_positions",
                self.sentence_id
            )));
        }
        let corrected = self.status == RecordStatus::Corrected;
        if corrected != self.corrected_spans.is_some() {
            return Err(Error::Invariant(format!(
                "{}: corrected_spans must be present iff status is corrected",
                self.sentence_id
            )));
        }
        if let Some(spans) = &self.corrected_spans {
            validate_spans(self.text.chars().count(), spans)?;
        }
        Ok(())
    }

    /// Copy with status `corrected` and the given spans (validated and sorted).
    pub fn corrected(&self, spans: Vec<Span>) -> Result<Self> {
        let spans = validate_spans(self.text.chars().count(), &spans)?;
        Ok(DisagreementRecord {
            status: RecordStatus::Corrected,
            corrected_spans: Some(spans),
            annotator_id: None,
            ..self.clone()
        })
    }

    pub fn skipped(&self) -> Self {
        DisagreementRecord {
            status: RecordStatus::Skipped,
            corrected_spans: None,
            annotator_id: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    pub pending: usize,
    pub corrected: usize,
    pub skipped: usize,
}

/// Latest state of every record, backed by an append-only file.
#[derive(Debug)]
pub struct DisagreementStore {
    path: PathBuf,
    file: File,
    /// Records in first-appearance order.
    records: Vec<DisagreementRecord>,
    index: HashMap<String, usize>,
}

fn parse_line(line: &str, number: usize) -> Result<DisagreementRecord> {
    let record: DisagreementRecord =
        serde_json::from_str(line).map_err(|e| Error::StoreCorruption {
            line: number,
            message: e.to_string(),
        })?;
    record.validate().map_err(|e| Error::StoreCorruption {
        line: number,
        message: e.to_string(),
    })?;
    Ok(record)
}

impl DisagreementStore {
    /// Replaces whatever is at `path` with `records`, all in one atomic write.
    pub fn create(path: &Path, records: &[DisagreementRecord]) -> Result<Self> {
        let mut text = String::new();
        for r in records {
            r.validate()?;
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        fsutil::atomic_write(path, text.as_bytes())?;
        Self::open(path)
    }

    /// Opens an existing store, recovering from a torn final line.
    pub fn open(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
        let complete_len = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let (complete, tail) = bytes.split_at(complete_len);
        let text = std::str::from_utf8(complete).map_err(|e| Error::StoreCorruption {
            line: 0,
            message: e.to_string(),
        })?;
        let mut store_records: Vec<DisagreementRecord> = Vec::new();
        let mut index = HashMap::new();
        let mut keep = |r: DisagreementRecord, records: &mut Vec<DisagreementRecord>| match index
            .get(&r.sentence_id)
        {
            Some(&i) => records[i] = r,
            None => {
                index.insert(r.sentence_id.clone(), records.len());
                records.push(r);
            }
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            keep(parse_line(line, i + 1)?, &mut store_records);
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::file(path, e))?;
        if !tail.is_empty() {
            let line_no = text.lines().count() + 1;
            match std::str::from_utf8(tail)
                .ok()
                .map(|t| parse_line(t, line_no))
            {
                Some(Ok(r)) => {
                    keep(r, &mut store_records);
                    file.write_all(b"\n").map_err(|e| Error::file(path, e))?;
                }
                _ => {
                    log::warn!("{}: dropping torn final line {line_no}", path.display());
                    file.set_len(complete_len as u64)
                        .map_err(|e| Error::file(path, e))?;
                }
            }
            file.sync_all().map_err(|e| Error::file(path, e))?;
        }
        Ok(DisagreementStore {
            path: path.to_owned(),
            file,
            records: store_records,
            index,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[DisagreementRecord] {
        &self.records
    }

    pub fn get(&self, sentence_id: &str) -> Option<&DisagreementRecord> {
        self.index.get(sentence_id).map(|&i| &self.records[i])
    }

    pub fn with_status(&self, status: RecordStatus) -> impl Iterator<Item = &DisagreementRecord> {
        self.records.iter().filter(move |r| r.status == status)
    }

    pub fn progress(&self) -> Progress {
        let mut p = Progress {
            total: self.records.len(),
            ..Progress::default()
        };
        for r in &self.records {
            match r.status {
                RecordStatus::Pending => p.pending += 1,
                RecordStatus::Corrected => p.corrected += 1,
                RecordStatus::Skipped => p.skipped += 1,
            }
        }
        p
    }

    /// Appends a new version of a record and syncs it to disk.
    pub fn append(&mut self, record: DisagreementRecord) -> Result<()> {
        record.validate()?;
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::file(&self.path, e))?;
        match self.index.get(&record.sentence_id) {
            Some(&i) => self.records[i] = record,
            None => {
                self.index
                    .insert(record.sentence_id.clone(), self.records.len());
                self.records.push(record);
            }
        }
        Ok(())
    }

    /// Marks a record corrected. Fails on unknown ids and invalid spans.
    pub fn correct(
        &mut self,
        sentence_id: &str,
        spans: Vec<Span>,
        annotator_id: Option<&str>,
    ) -> Result<DisagreementRecord> {
        let mut record = self
            .get(sentence_id)
            .ok_or_else(|| Error::UnknownSentence(sentence_id.to_owned()))?
            .corrected(spans)?;
        record.annotator_id = annotator_id.map(str::to_owned);
        self.append(record.clone())?;
        Ok(record)
    }

    pub fn skip(
        &mut self,
        sentence_id: &str,
        annotator_id: Option<&str>,
    ) -> Result<DisagreementRecord> {
        let mut record = self
            .get(sentence_id)
            .ok_or_else(|| Error::UnknownSentence(sentence_id.to_owned()))?
            .skipped();
        record.annotator_id = annotator_id.map(str::to_owned);
        self.append(record.clone())?;
        Ok(record)
    }

    /// Records that are corrected or skipped.
    pub fn resolved(&self) -> Vec<DisagreementRecord> {
        self.records
            .iter()
            .filter(|r| r.status != RecordStatus::Pending)
            .cloned()
            .collect()
    }

    /// Resolved records as a dataset with a `corrected` layer: corrected
    /// spans for corrected records, coarse spans for skipped ones.
    pub fn export_corrected(&self) -> Result<Dataset> {
        let mut out = Dataset::new();
        for r in self
            .records
            .iter()
            .filter(|r| r.status != RecordStatus::Pending)
        {
            let spans = r
                .corrected_spans
                .clone()
                .unwrap_or_else(|| r.coarse_spans.clone());
            let idx = out.push(Sentence::new(r.sentence_id.clone(), r.text.clone()))?;
            out.set_spans(layer::CORRECTED, idx, spans)?;
        }
        if out.is_empty() {
            log::warn!(
                "{}: no corrected or skipped records to export",
                self.path.display()
            );
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, diffs: usize) -> DisagreementRecord {
        DisagreementRecord {
            sentence_id: id.into(),
            text: "华鑫科技公司发布公告".into(),
            coarse_spans: vec![Span::new(0, 6, "COM")],
            predicted_spans: vec![Span::new(0, 4, "COM")],
            diff_positions: (4..4 + diffs).collect(),
            status: RecordStatus::Pending,
            corrected_spans: None,
            annotator_id: None,
        }
    }

    #[test]
    fn later_lines_supersede_earlier_ones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut store =
            DisagreementStore::create(&path, &[record("a", 2), record("b", 1)]).unwrap();
        store
            .correct("a", vec![Span::new(0, 4, "COM")], None)
            .unwrap();
        store.skip("b", None).unwrap();
        store.skip("a", None).unwrap();
        let reopened = DisagreementStore::open(&path).unwrap();
        assert_eq!(reopened.records(), store.records());
        assert_eq!(reopened.get("a").unwrap().status, RecordStatus::Skipped);
        assert_eq!(
            reopened.progress(),
            Progress {
                total: 2,
                pending: 0,
                corrected: 0,
                skipped: 2
            }
        );
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 5);
    }

    #[test]
    fn torn_final_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut store = DisagreementStore::create(&path, &[record("a", 2)]).unwrap();
        store
            .correct("a", vec![Span::new(0, 4, "COM")], None)
            .unwrap();
        let full = std::fs::read(&path).unwrap();
        let first_len = full.iter().position(|&b| b == b'\n').unwrap() + 1;
        std::fs::write(&path, &full[..full.len() - 10]).unwrap();
        let store = DisagreementStore::open(&path).unwrap();
        assert_eq!(store.get("a").unwrap().status, RecordStatus::Pending);
        assert_eq!(std::fs::read(&path).unwrap().len(), first_len);
    }

    #[test]
    fn complete_line_without_newline_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let line = serde_json::to_string(&record("a", 1)).unwrap();
        std::fs::write(&path, &line).unwrap();
        let mut store = DisagreementStore::open(&path).unwrap();
        store.skip("a", None).unwrap();
        assert_eq!(DisagreementStore::open(&path).unwrap().records().len(), 1);
    }

    #[test]
    fn malformed_middle_line_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let line = serde_json::to_string(&record("a", 1)).unwrap();
        std::fs::write(&path, format!("{line}\n{{broken\n{line}\n")).unwrap();
        assert!(matches!(
            DisagreementStore::open(&path),
            Err(Error::StoreCorruption { line: 2, .. })
        ));
    }

    #[test]
    fn invalid_corrections_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut store = DisagreementStore::create(&path, &[record("a", 1)]).unwrap();
        let overlap = vec![Span::new(0, 3, "COM"), Span::new(2, 5, "COM")];
        assert!(matches!(
            store.correct("a", overlap, None),
            Err(Error::Overlap { .. })
        ));
        assert!(matches!(
            store.correct("a", vec![Span::new(0, 99, "COM")], None),
            Err(Error::Range { .. })
        ));
        assert!(matches!(
            store.skip("zzz", None),
            Err(Error::UnknownSentence(_))
        ));
        assert_eq!(store.get("a").unwrap().status, RecordStatus::Pending);
    }

    #[test]
    fn record_invariants() {
        let mut r = record("a", 1);
        r.diff_positions.clear();
        assert!(r.validate().is_err());
        let mut r = record("a", 1);
        r.status = RecordStatus::Corrected;
        assert!(r.validate().is_err());
        let mut r = record("a", 1);
        r.corrected_spans = Some(vec![]);
        assert!(r.validate().is_err());
    }

    #[test]
    fn export_matches_apply_corrections_and_keeps_latest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut store =
            DisagreementStore::create(&path, &[record("a", 2), record("b", 1), record("c", 1)])
                .unwrap();
        assert!(store.export_corrected().unwrap().is_empty());
        store
            .correct("a", vec![Span::new(0, 2, "COM")], Some("x"))
            .unwrap();
        store
            .correct("a", vec![Span::new(0, 4, "COM")], Some("y"))
            .unwrap();
        store.skip("b", None).unwrap();
        let exported = DisagreementStore::open(&path)
            .unwrap()
            .export_corrected()
            .unwrap();
        assert_eq!(exported.len(), 2);
        assert_eq!(
            exported.spans_by_id(layer::CORRECTED, "a").unwrap(),
            &[Span::new(0, 4, "COM")]
        );

        let mut coarse = Dataset::new();
        for r in store.records() {
            let i = coarse
                .push(Sentence::new(r.sentence_id.clone(), r.text.clone()))
                .unwrap();
            coarse
                .set_spans(layer::COARSE, i, r.coarse_spans.clone())
                .unwrap();
        }
        let applied = crate::pipeline::apply_corrections(&coarse, &store.resolved()).unwrap();
        assert_eq!(applied, exported);
        assert_eq!(store.get("a").unwrap().annotator_id.as_deref(), Some("y"));
    }
}
