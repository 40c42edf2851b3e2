//! Constrained linear-chain CRF over hand-written scores: partition function,
//! marginals and the Viterbi path.
//!
//! `cargo run -p wsner --example crf_inference`

use wsner::corpus::{tags_to_spans, LabelScheme, TagSequence};
use wsner::crf::{ChainCrf, ConstraintMask};
use wsner::emitter::EmissionTable;

fn main() -> wsner::Result<()> {
    let scheme = LabelScheme::default();
    let crf = ChainCrf::new(ConstraintMask::bio(&scheme));
    // Columns are O, B-COM, I-COM. Position 1 prefers I-COM, which the mask
    // forbids after O, so the decoder must open the span at position 0.
    let em = EmissionTable::from_rows(
        &[
            vec![0.5, 0.4, 0.0],
            vec![0.0, 0.0, 2.0],
            vec![0.0, 0.0, 1.5],
            vec![1.0, 0.0, 0.0],
        ],
        scheme.num_tags(),
    )?;
    println!("log Z = {:.4}", crf.log_partition(&em)?);
    let m = crf.marginals(&em)?;
    for i in 0..em.len() {
        let row: Vec<String> = (0..scheme.num_tags())
            .map(|y| format!("{}={:.3}", scheme.tag_name(y), m.unary(i, y)))
            .collect();
        println!("position {i}: {}", row.join(" "));
    }
    let path = crf.viterbi(&em)?;
    let names: Vec<String> = path.iter().map(|&t| scheme.tag_name(t)).collect();
    println!("viterbi: {names:?} score {:.2}", crf.score(&em, &path)?);
    println!("spans: {:?}", tags_to_spans(&TagSequence(path), &scheme));
    Ok(())
}
