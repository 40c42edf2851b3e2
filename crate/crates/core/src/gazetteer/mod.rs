//! Dictionary ("gazetteer") matching: the machine-annotation stage that
//! produces the coarse training layer.

mod annotate;
mod dictionary;
mod matcher;

pub use annotate::{
    annotate_corpus, merge_secondary, Annotated, CommandAnnotator, ExternalAnnotator,
    NullAnnotator, ReplayAnnotator,
};
pub use dictionary::{
    generate_abbreviations, AbbreviationRule, Entry, Insert, NameDictionary, Provenance, RuleKind,
};
pub use matcher::{Matcher, Occurrence};

/// Compiles `dictionary` into a matcher.
pub fn build_matcher(dictionary: &NameDictionary) -> crate::Result<Matcher> {
    Matcher::build(dictionary)
}
