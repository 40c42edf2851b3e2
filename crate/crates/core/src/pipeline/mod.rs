//! Two-stage weakly-supervised training with human correction of
//! disagreements, followed by teacher-to-student distillation.
//!
//! Every stage reads its inputs from disk and writes its outputs to disk,
//! so a run interrupted after any stage resumes from the state file and
//! produces the same artifacts as an uninterrupted run.

mod stages;
mod state;
mod store;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{layer, load_dataset, save_dataset, Dataset, Format, LabelScheme, Sentence};
use crate::crf::{load_model, save_model, TrainConfig};
use crate::emitter::EmitterConfig;
use crate::error::{Error, Result};
use crate::eval::{
    compare_report, entity_prf, evaluate_model, layer_of, throughput_bench, BenchConfig,
    RunSummary, SpanLayer,
};
use crate::fsutil;
use crate::gazetteer::{Matcher, NameDictionary};
use crate::synth::{files, gen_corpus, write_corpus, SynthConfig};

pub use stages::{
    apply_corrections, detail_train, distill, oracle_corrections, outline_train,
    select_disagreements, train_student, Distilled, DEFAULT_MAX_LEN,
};
pub use state::{PipelineState, Stage};
pub use store::{DisagreementRecord, DisagreementStore, Progress, RecordStatus};

/// Where corrections for disputed sentences come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionSource {
    /// Gold spans of the training corpus stand in for reviewers.
    #[default]
    Oracle,
    /// Reviewers resolve records through the store; the run pauses until
    /// none are pending.
    Review,
}

fn teacher_emitter() -> EmitterConfig {
    EmitterConfig::teacher()
}

fn student_emitter() -> EmitterConfig {
    EmitterConfig::student()
}

/// Declarative description of a full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub work_dir: PathBuf,
    /// Existing corpus directory laid out like `write_corpus` output.
    /// When absent, a corpus is generated from `synth`.
    pub data_dir: Option<PathBuf>,
    pub synth: SynthConfig,
    pub labels: LabelScheme,
    #[serde(default = "teacher_emitter")]
    pub teacher_emitter: EmitterConfig,
    #[serde(default = "student_emitter")]
    pub student_emitter: EmitterConfig,
    pub outline: TrainConfig,
    /// Defaults to the outline settings at a tenth of the learning rate.
    pub detail: Option<TrainConfig>,
    pub student: TrainConfig,
    pub corrections: CorrectionSource,
    pub max_len: usize,
    /// Decode threads for pseudo-labelling.
    pub threads: usize,
    pub bench: BenchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            work_dir: PathBuf::from("run"),
            data_dir: None,
            synth: SynthConfig::default(),
            labels: LabelScheme::default(),
            teacher_emitter: teacher_emitter(),
            student_emitter: student_emitter(),
            outline: TrainConfig::default(),
            detail: None,
            student: TrainConfig::default(),
            corrections: CorrectionSource::Oracle,
            max_len: DEFAULT_MAX_LEN,
            threads: 1,
            bench: BenchConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fsutil::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.teacher_emitter.validate()?;
        self.student_emitter.validate()?;
        self.outline.validate()?;
        self.detail_config().validate()?;
        self.student.validate()?;
        if self.data_dir.is_none() {
            self.synth.validate()?;
        }
        Ok(())
    }

    pub fn detail_config(&self) -> TrainConfig {
        self.detail
            .unwrap_or_else(|| TrainConfig::detail_from(&self.outline))
    }
}

/// Artifact names recorded in the state file.
pub mod artifacts {
    pub const TRAIN: &str = "train";
    pub const DEV: &str = "dev";
    pub const TEST: &str = "test";
    pub const DICTIONARY: &str = "dictionary";
    pub const UNLABELED: &str = "unlabeled";
    pub const OUTLINE_MODEL: &str = "outline_model";
    pub const RECORDS: &str = "records";
    pub const CORRECTED: &str = "corrected";
    pub const TEACHER_MODEL: &str = "teacher_model";
    pub const PSEUDO: &str = "pseudo";
    pub const STUDENT_MODEL: &str = "student_model";
    pub const REPORT: &str = "report";
}

const STATE_FILE: &str = "state.json";

/// Stateful runner over a work directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline { config })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn root(&self) -> &Path {
        &self.config.work_dir
    }

    pub fn state_path(&self) -> PathBuf {
        self.root().join(STATE_FILE)
    }

    /// Loads the state file, or prepares the corpus and creates one.
    pub fn state(&self) -> Result<PipelineState> {
        let path = self.state_path();
        if path.exists() {
            let state = PipelineState::load(&path)?;
            state.verify_artifacts(self.root())?;
            return Ok(state);
        }
        std::fs::create_dir_all(self.root()).map_err(|e| Error::file(self.root(), e))?;
        let data_dir = match &self.config.data_dir {
            Some(d) => d.clone(),
            None => {
                let corpus = gen_corpus(&self.config.synth)?;
                write_corpus(&corpus, &self.root().join("data"))?;
                PathBuf::from("data")
            }
        };
        let mut state = PipelineState::default();
        for (name, file) in [
            (artifacts::TRAIN, files::TRAIN),
            (artifacts::DEV, files::DEV),
            (artifacts::TEST, files::TEST),
            (artifacts::DICTIONARY, files::DICTIONARY),
            (artifacts::UNLABELED, files::UNLABELED),
        ] {
            state.artifacts.insert(name.into(), data_dir.join(file));
        }
        state.verify_artifacts(self.root())?;
        state.save(&path)?;
        Ok(state)
    }

    /// Runs stages until done, paused for reviews, or `stop_after` completes.
    pub fn run(&self, stop_after: Option<Stage>) -> Result<PipelineState> {
        let mut state = self.state()?;
        while state.stage != Stage::Done {
            let stage = state.stage;
            log::info!("stage {stage}");
            if !self.run_stage(&mut state)? {
                log::info!("stage {stage} is waiting for reviews");
                break;
            }
            state.verify_artifacts(self.root())?;
            state.advance(stage)?;
            state.save(&self.state_path())?;
            if stop_after == Some(stage) {
                break;
            }
        }
        Ok(state)
    }

    fn path(&self, state: &PipelineState, name: &str) -> Result<PathBuf> {
        state.artifact(self.root(), name)
    }

    fn dataset(&self, state: &PipelineState, name: &str) -> Result<Dataset> {
        load_dataset(&self.path(state, name)?, Format::Jsonl)
    }

    fn record(&self, state: &mut PipelineState, name: &str, rel: &str) -> PathBuf {
        state.artifacts.insert(name.into(), PathBuf::from(rel));
        self.root().join(rel)
    }

    /// Executes `state.stage`. Returns `false` if the stage cannot finish yet.
    fn run_stage(&self, state: &mut PipelineState) -> Result<bool> {
        let cfg = &self.config;
        match state.stage {
            Stage::Outline => {
                let train = self.dataset(state, artifacts::TRAIN)?;
                let dev = self.dataset(state, artifacts::DEV)?;
                let test = self.dataset(state, artifacts::TEST)?;
                let out =
                    outline_train(&train, &dev, &cfg.labels, cfg.teacher_emitter, &cfg.outline)?;
                std::fs::create_dir_all(self.root().join("models"))
                    .map_err(|e| Error::file(self.root(), e))?;
                save_model(
                    &out.model,
                    &self.record(state, artifacts::OUTLINE_MODEL, "models/outline.bin"),
                )?;
                let dict = NameDictionary::load(&self.path(state, artifacts::DICTIONARY)?, 1)?;
                let gazetteer = gazetteer_metrics(&dict, &test)?;
                state.metrics.insert("gazetteer".into(), gazetteer);
                state.metrics.insert(
                    "outline".into(),
                    evaluate_model(&out.model, &test, layer::GOLD)?,
                );
                state
                    .dev_history
                    .insert("outline".into(), out.dev_f1_history());
            }
            Stage::Selecting => {
                let model = load_model(&self.path(state, artifacts::OUTLINE_MODEL)?)?;
                let train = self.dataset(state, artifacts::TRAIN)?;
                let records = select_disagreements(&model, &train)?;
                state.counts.insert("records".into(), records.len());
                DisagreementStore::create(
                    &self.record(state, artifacts::RECORDS, "records.jsonl"),
                    &records,
                )?;
            }
            Stage::Correcting => {
                let mut store = DisagreementStore::open(&self.path(state, artifacts::RECORDS)?)?;
                let pending: Vec<DisagreementRecord> =
                    store.with_status(RecordStatus::Pending).cloned().collect();
                if !pending.is_empty() {
                    match cfg.corrections {
                        CorrectionSource::Oracle => {
                            let train = self.dataset(state, artifacts::TRAIN)?;
                            for r in oracle_corrections(&pending, &train)? {
                                store.append(r)?;
                            }
                        }
                        CorrectionSource::Review => return Ok(false),
                    }
                }
                let train = self.dataset(state, artifacts::TRAIN)?;
                let corrected = apply_corrections(&train, &store.resolved())?;
                let p = store.progress();
                state.counts.insert("corrected".into(), p.corrected);
                state.counts.insert("skipped".into(), p.skipped);
                save_dataset(
                    &corrected,
                    &self.record(state, artifacts::CORRECTED, "corrected.jsonl"),
                    Format::Jsonl,
                )?;
            }
            Stage::Detail => {
                let model = load_model(&self.path(state, artifacts::OUTLINE_MODEL)?)?;
                let corrected = self.dataset(state, artifacts::CORRECTED)?;
                let dev = self.dataset(state, artifacts::DEV)?;
                let test = self.dataset(state, artifacts::TEST)?;
                let out = detail_train(model, &corrected, &dev, &cfg.detail_config())?;
                save_model(
                    &out.model,
                    &self.record(state, artifacts::TEACHER_MODEL, "models/teacher.bin"),
                )?;
                state.metrics.insert(
                    "detail".into(),
                    evaluate_model(&out.model, &test, layer::GOLD)?,
                );
                state
                    .dev_history
                    .insert("detail".into(), out.dev_f1_history());
            }
            Stage::Distilling => {
                let unlabeled = self
                    .dataset(state, artifacts::UNLABELED)?
                    .sentences()
                    .to_vec();
                let teacher = load_model(&self.path(state, artifacts::TEACHER_MODEL)?)?;
                let pseudo = distill(&teacher, &unlabeled, cfg.max_len, cfg.threads)?;
                drop(teacher);
                state
                    .counts
                    .insert("distill_skipped".into(), pseudo.skipped);
                save_dataset(
                    &pseudo.dataset,
                    &self.record(state, artifacts::PSEUDO, "pseudo.jsonl"),
                    Format::Jsonl,
                )?;
                let dev = self.dataset(state, artifacts::DEV)?;
                let test = self.dataset(state, artifacts::TEST)?;
                let out = train_student(
                    &cfg.labels,
                    cfg.student_emitter,
                    &pseudo.dataset,
                    &dev,
                    &cfg.student,
                )?;
                save_model(
                    &out.model,
                    &self.record(state, artifacts::STUDENT_MODEL, "models/student.bin"),
                )?;
                state.metrics.insert(
                    "student".into(),
                    evaluate_model(&out.model, &test, layer::GOLD)?,
                );
                state
                    .dev_history
                    .insert("student".into(), out.dev_f1_history());
                self.bench(state, &out.model, &unlabeled)?;
                self.write_report(state)?;
            }
            Stage::Done => {}
        }
        Ok(true)
    }

    fn bench(
        &self,
        state: &mut PipelineState,
        student: &crate::crf::CrfModel,
        corpus: &[Sentence],
    ) -> Result<()> {
        let cfg = &self.config;
        let report = throughput_bench(student, "student", corpus, &cfg.bench)?;
        state.benches.insert("student".into(), report);
        let teacher = load_model(&self.path(state, artifacts::TEACHER_MODEL)?)?;
        let report = throughput_bench(&teacher, "teacher", corpus, &cfg.bench)?;
        state.benches.insert("teacher".into(), report);
        Ok(())
    }

    fn write_report(&self, state: &mut PipelineState) -> Result<()> {
        let report = compare_report(&run_summaries(state))?;
        log::info!("\n{}", report.table);
        fsutil::atomic_write(
            &self.record(state, artifacts::REPORT, "report.jsonl"),
            report.to_jsonl()?.as_bytes(),
        )?;
        fsutil::atomic_write(&self.root().join("report.txt"), report.table.as_bytes())
    }
}

/// Systems of a finished run in report order, with their throughput where measured.
pub fn run_summaries(state: &PipelineState) -> Vec<RunSummary> {
    [
        ("gazetteer", None),
        ("outline", None),
        ("detail", Some("teacher")),
        ("student", Some("student")),
    ]
    .into_iter()
    .filter_map(|(name, bench)| {
        state.metrics.get(name).map(|m| RunSummary {
            name: name.to_owned(),
            metrics: *m,
            bench: bench.and_then(|b| state.benches.get(b).cloned()),
        })
    })
    .collect()
}

/// Dictionary matches as predictions.
pub fn gazetteer_layer(matcher: &Matcher, dataset: &Dataset) -> SpanLayer {
    dataset
        .sentences()
        .iter()
        .map(|s| (s.id().to_owned(), matcher.find(s.text())))
        .collect()
}

/// Metrics of dictionary matching alone against the gold layer.
pub fn gazetteer_metrics(
    dictionary: &NameDictionary,
    gold: &Dataset,
) -> Result<crate::eval::EntityMetrics> {
    let gold_layer = layer_of(gold, layer::GOLD);
    if dictionary.is_empty() {
        let empty: SpanLayer = gold_layer.keys().map(|k| (k.clone(), Vec::new())).collect();
        return entity_prf(&empty, &gold_layer);
    }
    let matcher = Matcher::build(dictionary)?;
    let pred: SpanLayer = gazetteer_layer(&matcher, gold)
        .into_iter()
        .filter(|(id, _)| gold_layer.contains_key(id))
        .collect();
    entity_prf(&pred, &gold_layer)
}
