//! The whole workflow from one config: synthetic corpus, outline training,
//! disagreement selection, oracle correction, detail training, distillation
//! and the comparison report. Interrupting and rerunning resumes.
//!
//! `cargo run --release -p wsner --example pipeline_run -- [WORK_DIR]`

use std::path::PathBuf;

use wsner::pipeline::{Pipeline, PipelineConfig};

fn main() -> wsner::Result<()> {
    let work_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("wsner-pipeline"));
    let config = PipelineConfig {
        work_dir: work_dir.clone(),
        ..PipelineConfig::default()
    };
    let state = Pipeline::new(config)?.run(None)?;
    println!("stage: {}", state.stage);
    print!("{}", std::fs::read_to_string(work_dir.join("report.txt"))?);
    Ok(())
}
