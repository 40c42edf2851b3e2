//! Dictionary matching: load names, add abbreviations, tag raw text.
//!
//! `cargo run -p wsner --example gazetteer_match`

use wsner::corpus::{layer, split_sentences};
use wsner::gazetteer::{annotate_corpus, AbbreviationRule, Matcher, NameDictionary};

fn main() -> wsner::Result<()> {
    let mut dictionary =
        NameDictionary::parse("华鑫科技股份有限公司\n宏远集团有限公司\n银河控股\n", 2);
    let added = dictionary.expand_abbreviations(&AbbreviationRule::default_rules());
    println!("{} surfaces ({added} abbreviations)", dictionary.len());

    let matcher = Matcher::build(&dictionary)?;
    let text = "华鑫科技发布公告。宏远集团有限公司与银河控股签署协议。";
    for span in matcher.find(text) {
        let surface: String = text.chars().skip(span.start).take(span.len()).collect();
        println!("[{}, {}) {} {surface}", span.start, span.end, span.label);
    }

    // The same matcher over a split document, as a coarse layer.
    let sentences = split_sentences(text);
    let annotated = annotate_corpus(&sentences, &matcher, None)?;
    for (s, spans) in annotated.dataset.annotated(layer::COARSE) {
        println!("{}: {} span(s) in {:?}", s.id(), spans.len(), s.text());
    }
    Ok(())
}
