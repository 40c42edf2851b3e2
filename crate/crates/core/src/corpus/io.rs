use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    layer, repair_spans, spans_to_tags, tags_to_spans, validate_spans, Dataset, LabelScheme,
    Sentence, Span, TagSequence,
};
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// One JSON object per sentence.
    Jsonl,
    /// `char<TAB>tag` lines, blank line between sentences.
    Column,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("col") | Some("conll") | Some("bio") => Format::Column,
            _ => Format::Jsonl,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "column" => Ok(Format::Column),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Drop out-of-range spans and resolve overlaps instead of failing.
    pub repair: bool,
    /// Layer name given to column-format annotations.
    pub column_layer: String,
    pub scheme: LabelScheme,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            repair: false,
            column_layer: layer::GOLD.to_owned(),
            scheme: LabelScheme::default(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    text: String,
    #[serde(default)]
    layers: BTreeMap<String, Vec<Span>>,
}

pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset> {
    load_dataset_with(path, format, &LoadOptions::default())
}

pub fn load_dataset_with(path: &Path, format: Format, opts: &LoadOptions) -> Result<Dataset> {
    let text = fsutil::read_to_string(path)?;
    match format {
        Format::Jsonl => parse_jsonl(&text, opts),
        Format::Column => parse_column(&text, opts),
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Jsonl => to_jsonl(dataset)?,
        Format::Column => to_column(dataset, &scheme_of(dataset))?,
    };
    fsutil::atomic_write(path, text.as_bytes())
}

pub(crate) fn parse_jsonl(text: &str, opts: &LoadOptions) -> Result<Dataset> {
    let mut ds = Dataset::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let sentence = Sentence::new(rec.id, rec.text);
        let len = sentence.len();
        let idx = ds.push(sentence).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        for (name, spans) in rec.layers {
            let spans = if opts.repair {
                repair_spans(len, &spans)
            } else {
                validate_spans(len, &spans)
                    .map_err(|e| Error::Invariant(format!("line {line_no}, layer `{name}`: {e}")))?
            };
            ds.set_spans(&name, idx, spans)?;
        }
    }
    Ok(ds)
}

pub(crate) fn to_jsonl(ds: &Dataset) -> Result<String> {
    let mut out = String::new();
    for (i, s) in ds.sentences().iter().enumerate() {
        let mut layers = BTreeMap::new();
        for name in ds.layer_names() {
            if let Some(spans) = ds.spans(name, i) {
                layers.insert(name.to_owned(), spans.to_vec());
            }
        }
        let rec = Record {
            id: s.id().to_owned(),
            text: s.text().to_owned(),
            layers,
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

/// The default scheme, extended with any further labels found in the dataset.
fn scheme_of(ds: &Dataset) -> LabelScheme {
    let mut labels: Vec<String> = LabelScheme::default().labels().to_vec();
    let names: Vec<String> = ds.layer_names().map(str::to_owned).collect();
    for name in &names {
        for (_, spans) in ds.annotated(name) {
            for s in spans {
                if !labels.contains(&s.label) {
                    labels.push(s.label.clone());
                }
            }
        }
    }
    LabelScheme::new(labels).unwrap_or_default()
}

const ID_COMMENT: &str = "# id = ";

fn parse_column(text: &str, opts: &LoadOptions) -> Result<Dataset> {
    let mut ds = Dataset::new();
    let mut pending_id: Option<String> = None;
    let mut chars = String::new();
    let mut tags: Vec<usize> = Vec::new();

    let flush = |ds: &mut Dataset,
                 id: Option<String>,
                 chars: &mut String,
                 tags: &mut Vec<usize>|
     -> Result<()> {
        if tags.is_empty() && id.is_none() {
            return Ok(());
        }
        let id = id.unwrap_or_else(|| format!("s{}", ds.len()));
        let idx = ds.push(Sentence::new(id, std::mem::take(chars)))?;
        let seq = TagSequence(std::mem::take(tags));
        ds.set_spans(&opts.column_layer, idx, tags_to_spans(&seq, &opts.scheme))
    };

    for (n, line) in text.split('\n').enumerate() {
        let line_no = n + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            flush(&mut ds, pending_id.take(), &mut chars, &mut tags)?;
            continue;
        }
        if let Some(id) = line.strip_prefix(ID_COMMENT) {
            if !tags.is_empty() {
                flush(&mut ds, pending_id.take(), &mut chars, &mut tags)?;
            }
            pending_id = Some(id.to_owned());
            continue;
        }
        let (token, tag) = line
            .rsplit_once('\t')
            .or_else(|| line.rsplit_once(' '))
            .ok_or_else(|| Error::Parse {
                line: line_no,
                message: "expected `token<TAB>tag`".into(),
            })?;
        let mut it = token.chars();
        let c = match (it.next(), it.next()) {
            (Some(c), None) => c,
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("token `{token}` is not a single character"),
                })
            }
        };
        let tag = opts.scheme.tag_index(tag).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        chars.push(c);
        tags.push(tag);
    }
    flush(&mut ds, pending_id.take(), &mut chars, &mut tags)?;
    Ok(ds)
}

fn to_column(ds: &Dataset, scheme: &LabelScheme) -> Result<String> {
    let names: Vec<&str> = ds.layer_names().collect();
    let [name] = names.as_slice() else {
        return Err(Error::Invariant(format!(
            "column format needs exactly one layer, dataset has {}",
            names.len()
        )));
    };
    let mut out = String::new();
    for (i, s) in ds.sentences().iter().enumerate() {
        let spans = ds.spans(name, i).ok_or_else(|| {
            Error::Invariant(format!("sentence `{}` lacks layer `{name}`", s.id()))
        })?;
        let tags = spans_to_tags(s.len(), spans, scheme)?;
        let _ = writeln!(out, "{ID_COMMENT}{}", s.id());
        for (c, t) in s.text().chars().zip(tags.ids()) {
            if c == '\n' || c == '\r' || c == '\t' {
                return Err(Error::Invariant(format!(
                    "sentence `{}` contains a control character that column format cannot hold",
                    s.id()
                )));
            }
            let _ = writeln!(out, "{c}\t{}", scheme.tag_name(*t));
        }
        out.push('\n');
    }
    Ok(out)
}
