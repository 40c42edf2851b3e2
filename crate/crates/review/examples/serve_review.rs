//! Serves a small demo queue for manual review in a browser.
//!
//! `cargo run -p wsner-review --example serve_review`, then open
//! <http://127.0.0.1:8787>. Stop with Ctrl-C; the store path is printed.

use wsner::corpus::Span;
use wsner::pipeline::{DisagreementRecord, DisagreementStore, RecordStatus};
use wsner_review::{serve_blocking, ReviewConfig, ReviewError};

fn record(id: &str, text: &str, coarse: Span, predicted: Span) -> DisagreementRecord {
    let diff_positions = (coarse.start.min(predicted.start)..coarse.end.max(predicted.end))
        .filter(|&i| {
            (coarse.start..coarse.end).contains(&i) != (predicted.start..predicted.end).contains(&i)
        })
        .collect();
    DisagreementRecord {
        sentence_id: id.into(),
        text: text.into(),
        coarse_spans: vec![coarse],
        predicted_spans: vec![predicted],
        diff_positions,
        status: RecordStatus::Pending,
        corrected_spans: None,
        annotator_id: None,
    }
}

fn main() -> Result<(), ReviewError> {
    env_logger::init();
    let dir = std::env::temp_dir().join("wsner-review-demo");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("records.jsonl");
    DisagreementStore::create(
        &path,
        &[
            record(
                "d1",
                "华鑫科技股份有限公司发布公告。",
                Span::new(0, 4, "COM"),
                Span::new(0, 10, "COM"),
            ),
            record(
                "d2",
                "宏远集团与银河控股签署协议。",
                Span::new(0, 2, "COM"),
                Span::new(0, 4, "COM"),
            ),
            record(
                "d3",
                "据悉，博瑞医药拟增持股份。",
                Span::new(3, 6, "COM"),
                Span::new(3, 7, "COM"),
            ),
        ],
    )?;
    println!("store: {}", path.display());
    serve_blocking(ReviewConfig::new(path))
}
