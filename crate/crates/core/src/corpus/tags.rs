use super::{LabelScheme, Span};
use crate::error::{Error, Result};

/// One tag id per sentence position, interpreted through a [`LabelScheme`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TagSequence(pub Vec<usize>);

impl TagSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    /// Parses tag strings. Any syntactically valid sequence is accepted,
    /// including malformed BIO (those are repaired by [`tags_to_spans`]).
    pub fn parse<S: AsRef<str>>(tags: &[S], scheme: &LabelScheme) -> Result<Self> {
        tags.iter()
            .map(|t| scheme.tag_index(t.as_ref()))
            .collect::<Result<Vec<_>>>()
            .map(TagSequence)
    }

    pub fn to_strings(&self, scheme: &LabelScheme) -> Vec<String> {
        self.0.iter().map(|&t| scheme.tag_name(t)).collect()
    }

    /// True if no `I-x` follows anything other than `B-x`/`I-x`.
    pub fn is_well_formed(&self, scheme: &LabelScheme) -> bool {
        let mut prev: Option<usize> = None;
        for &t in &self.0 {
            if let Some((label, false)) = scheme.decompose(t) {
                match prev.and_then(|p| scheme.decompose(p)) {
                    Some((pl, _)) if pl == label => {}
                    _ => return false,
                }
            }
            prev = Some(t);
        }
        true
    }
}

/// Encodes spans as BIO tags over `length` positions.
pub fn spans_to_tags(length: usize, spans: &[Span], scheme: &LabelScheme) -> Result<TagSequence> {
    let sorted = super::validate_spans(length, spans)?;
    let mut tags = vec![0usize; length];
    for s in &sorted {
        let l = scheme
            .label_index(&s.label)
            .ok_or_else(|| Error::UnknownLabel(s.label.clone()))?;
        tags[s.start] = scheme.begin_tag(l);
        for t in &mut tags[s.start + 1..s.end] {
            *t = scheme.inside_tag(l);
        }
    }
    Ok(TagSequence(tags))
}

/// Decodes maximal B-I runs as spans. A stray `I-x` opens a new span as if
/// it were `B-x`.
pub fn tags_to_spans(tags: &TagSequence, scheme: &LabelScheme) -> Vec<Span> {
    let mut out = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (i, &t) in tags.0.iter().enumerate() {
        match scheme.decompose(t) {
            None => {
                if let Some((start, l)) = open.take() {
                    out.push(Span::new(start, i, scheme.labels()[l].clone()));
                }
            }
            Some((l, is_begin)) => {
                let continues = !is_begin && matches!(open, Some((_, ol)) if ol == l);
                if !continues {
                    if let Some((start, ol)) = open.take() {
                        out.push(Span::new(start, i, scheme.labels()[ol].clone()));
                    }
                    open = Some((i, l));
                }
            }
        }
    }
    if let Some((start, l)) = open {
        out.push(Span::new(start, tags.0.len(), scheme.labels()[l].clone()));
    }
    out
}
