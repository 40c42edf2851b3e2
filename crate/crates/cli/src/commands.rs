use std::path::Path;

use wsner::corpus::{
    layer, load_dataset, save_dataset, split_sentences, Dataset, Format, LabelScheme,
};
use wsner::crf::{load_model, save_model, CrfModel, FitOutcome, TrainConfig};
use wsner::emitter::EmitterConfig;
use wsner::eval::{
    compare_report, entity_prf, evaluate_model, layer_of, throughput_bench, BenchConfig,
    BenchReport, EntityMetrics, RunSummary,
};
use wsner::fsutil;
use wsner::gazetteer::{
    annotate_corpus, AbbreviationRule, CommandAnnotator, ExternalAnnotator, Matcher,
    NameDictionary, ReplayAnnotator,
};
use wsner::pipeline::{self, CorrectionSource, Pipeline, PipelineConfig, PipelineState, Stage};
use wsner::synth::{gen_corpus, write_corpus, SynthConfig};
use wsner_review::ReviewConfig;

use crate::args::*;
use crate::Failure;

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    let global = Global {
        seed: cli.seed,
        threads: cli.threads.max(1),
    };
    match cli.command {
        Command::Synth(a) => synth(&global, a),
        Command::Match(a) => match_dict(a),
        Command::Annotate(a) => annotate(a),
        Command::Train(a) => train(&global, a),
        Command::Select(a) => select(a),
        Command::ServeReview(a) => serve_review(a),
        Command::ExportCorrected(a) => export(a),
        Command::Distill(a) => distill(&global, a),
        Command::TrainStudent(a) => train_student(&global, a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(&global, a),
        Command::Report(a) => report(a),
        Command::Pipeline(PipelineCommand::Run(a)) => pipeline_run(&global, a),
        Command::Pipeline(PipelineCommand::Status(a)) => pipeline_status(a),
    }
}

struct Global {
    seed: Option<u64>,
    threads: usize,
}

fn print_json(value: &impl serde::Serialize) -> Outcome {
    println!(
        "{}",
        serde_json::to_string(value).map_err(wsner::Error::from)?
    );
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(wsner::Error::from)?;
    text.push('\n');
    fsutil::atomic_write(path, text.as_bytes())?;
    Ok(())
}

fn load_input(input: &Input) -> Result<Dataset, Failure> {
    let path = &input.path;
    let is_text = path.extension().is_some_and(|e| e == "txt");
    let format = match input.format {
        Some(FormatArg::Jsonl) => Format::Jsonl,
        Some(FormatArg::Column) => Format::Column,
        Some(FormatArg::Text) => return load_text(path),
        None if is_text => return load_text(path),
        None => Format::from_path(path),
    };
    Ok(load_dataset(path, format)?)
}

fn load_text(path: &Path) -> Result<Dataset, Failure> {
    let text = fsutil::read_to_string(path)?;
    Ok(Dataset::from_sentences(split_sentences(&text))?)
}

/// Output format from the extension; plain text is not a dataset format.
fn save_output(dataset: &Dataset, path: &Path) -> Outcome {
    Ok(save_dataset(dataset, path, Format::from_path(path))?)
}

fn scheme(args: &LabelArgs) -> Result<LabelScheme, Failure> {
    Ok(LabelScheme::new(args.labels.iter().map(|l| l.trim()))?)
}

/// Config file (or `base`) with flags applied on top.
fn train_config(
    flags: &TrainFlags,
    base: TrainConfig,
    seed: Option<u64>,
) -> Result<TrainConfig, Failure> {
    let mut cfg = match &flags.config {
        Some(path) => toml::from_str(&fsutil::read_to_string(path)?)
            .map_err(|e| wsner::Error::Config(format!("{}: {e}", path.display())))?,
        None => base,
    };
    if let Some(v) = flags.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = flags.l2 {
        cfg.l2 = v;
    }
    if let Some(v) = flags.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = flags.patience {
        cfg.patience = v;
    }
    if let Some(v) = flags.decay {
        cfg.decay = v;
    }
    if let Some(v) = seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emitter_config(flags: &EmitterFlags, base: EmitterConfig) -> Result<EmitterConfig, Failure> {
    let cfg = EmitterConfig {
        window: flags.window.unwrap_or(base.window),
        hash_dim: flags.hash_dim.unwrap_or(base.hash_dim),
        hash_seed: flags.hash_seed.unwrap_or(base.hash_seed),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn emitter_flags_given(flags: &EmitterFlags) -> bool {
    flags.window.is_some() || flags.hash_dim.is_some() || flags.hash_seed.is_some()
}

/// Moves layer `from` to `to`, replacing any existing `to` layer.
fn use_layer(dataset: &mut Dataset, from: &str, to: &str) -> Outcome {
    if from == to {
        return Ok(());
    }
    if !dataset.has_layer(from) {
        return Err(wsner::Error::Data(format!("dataset has no `{from}` layer")).into());
    }
    dataset.remove_layer(to);
    dataset.rename_layer(from, to);
    Ok(())
}

#[derive(serde::Serialize)]
struct TrainSummary {
    best_epoch: usize,
    stopped_early: bool,
    dev_f1: Vec<f64>,
}

fn finish_training(outcome: FitOutcome, out: &Path) -> Outcome {
    save_model(&outcome.model, out)?;
    print_json(&TrainSummary {
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        dev_f1: outcome.dev_f1_history(),
    })
}

fn synth(global: &Global, a: SynthArgs) -> Outcome {
    let mut cfg = match &a.config {
        Some(path) => SynthConfig::load(path)?,
        None => SynthConfig::default(),
    };
    if let Some(v) = a.sentences {
        cfg.n_sentences = v;
    }
    if let Some(v) = a.names {
        cfg.n_names = v;
    }
    if let Some(v) = a.coverage {
        cfg.dict_coverage = v;
    }
    if let Some(v) = a.noise {
        cfg.boundary_noise = v;
    }
    if let Some(v) = a.unlabeled {
        cfg.n_unlabeled = v;
    }
    if let Some(v) = global.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let corpus = gen_corpus(&cfg)?;
    for (name, digest) in write_corpus(&corpus, &a.out)? {
        println!("{digest}  {name}");
    }
    Ok(())
}

fn build_matcher(a: &MatchArgs) -> Result<Matcher, Failure> {
    let mut dictionary = NameDictionary::load(&a.dict, a.min_len)?;
    if a.abbreviations {
        let added = dictionary.expand_abbreviations(&AbbreviationRule::default_rules());
        log::info!("added {added} abbreviation(s)");
    }
    Ok(Matcher::build(&dictionary)?)
}

/// Replaces the coarse layer of the input and keeps every other layer.
fn coarse_layer(a: &MatchArgs, secondary: Option<&dyn ExternalAnnotator>) -> Outcome {
    let matcher = build_matcher(a)?;
    let mut dataset = load_input(&a.input)?;
    let annotated = annotate_corpus(dataset.sentences(), &matcher, secondary)?;
    dataset.remove_layer(layer::COARSE);
    dataset.import_layer(&annotated.dataset, layer::COARSE)?;
    save_output(&dataset, &a.out)
}

fn match_dict(a: MatchArgs) -> Outcome {
    coarse_layer(&a, None)
}

fn annotate(a: AnnotateArgs) -> Outcome {
    let secondary: Option<Box<dyn ExternalAnnotator>> =
        match (&a.secondary_replay, &a.secondary_cmd) {
            (Some(path), _) => Some(Box::new(ReplayAnnotator::load(path)?)),
            (None, Some(program)) => Some(Box::new(CommandAnnotator::new(
                program.clone(),
                a.secondary_args.clone(),
            ))),
            (None, None) => None,
        };
    coarse_layer(&a.matching, secondary.as_deref())
}

fn train(global: &Global, a: TrainArgs) -> Outcome {
    let mut train = load_dataset(&a.train, Format::from_path(&a.train))?;
    let dev = load_dataset(&a.dev, Format::from_path(&a.dev))?;
    match a.stage {
        StageArg::Outline => {
            if a.model.is_some() {
                return Err(Failure::Usage(
                    "--model applies to the detail stage only".into(),
                ));
            }
            use_layer(
                &mut train,
                a.layer.as_deref().unwrap_or(layer::COARSE),
                layer::COARSE,
            )?;
            let cfg = train_config(&a.train_flags, TrainConfig::default(), global.seed)?;
            let emitter = emitter_config(&a.emitter, EmitterConfig::teacher())?;
            let outcome =
                pipeline::outline_train(&train, &dev, &scheme(&a.labels)?, emitter, &cfg)?;
            finish_training(outcome, &a.out)
        }
        StageArg::Detail => {
            let Some(model_path) = &a.model else {
                return Err(Failure::Usage("--stage detail needs --model".into()));
            };
            if emitter_flags_given(&a.emitter) {
                return Err(Failure::Usage(
                    "emitter flags apply to fresh models only; detail keeps the outline emitter"
                        .into(),
                ));
            }
            use_layer(
                &mut train,
                a.layer.as_deref().unwrap_or(layer::CORRECTED),
                layer::CORRECTED,
            )?;
            let base = TrainConfig::detail_from(&TrainConfig::default());
            let cfg = train_config(&a.train_flags, base, global.seed)?;
            let model = load_model(model_path)?;
            let outcome = pipeline::detail_train(model, &train, &dev, &cfg)?;
            finish_training(outcome, &a.out)
        }
    }
}

fn select(a: SelectArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let coarse = load_input(&a.input)?;
    let records = pipeline::select_disagreements(&model, &coarse)?;
    pipeline::DisagreementStore::create(&a.out, &records)?;
    println!(
        "{} disagreement(s) of {} sentence(s)",
        records.len(),
        coarse.len()
    );
    Ok(())
}

fn serve_review(a: ServeArgs) -> Outcome {
    let mut config = ReviewConfig::new(&a.store);
    config.bind = a.bind;
    config.dataset = a.dataset;
    config.ui_dir = a.ui_dir;
    config.labels = scheme(&a.labels)?;
    Ok(wsner_review::serve_blocking(config)?)
}

fn export(a: ExportArgs) -> Outcome {
    let dataset = wsner_review::export_corrected(&a.store)?;
    save_output(&dataset, &a.out)?;
    println!("{} resolved record(s)", dataset.len());
    Ok(())
}

fn distill(global: &Global, a: DistillArgs) -> Outcome {
    let teacher = load_model(&a.model)?;
    let unlabeled = load_input(&a.input)?.strip_layers();
    let out = pipeline::distill(&teacher, unlabeled.sentences(), a.max_len, global.threads)?;
    save_output(&out.dataset, &a.out)?;
    println!("{} labelled, {} skipped", out.dataset.len(), out.skipped);
    Ok(())
}

fn train_student(global: &Global, a: StudentArgs) -> Outcome {
    let mut pseudo = load_dataset(&a.train, Format::from_path(&a.train))?;
    let dev = load_dataset(&a.dev, Format::from_path(&a.dev))?;
    use_layer(&mut pseudo, &a.layer, layer::PSEUDO)?;
    let cfg = train_config(&a.train_flags, TrainConfig::default(), global.seed)?;
    let emitter = emitter_config(&a.emitter, EmitterConfig::student())?;
    let outcome = pipeline::train_student(&scheme(&a.labels)?, emitter, &pseudo, &dev, &cfg)?;
    finish_training(outcome, &a.out)
}

fn predict_layer(model: &CrfModel, dataset: &mut Dataset, name: &str) -> Outcome {
    let predictions = dataset
        .sentences()
        .iter()
        .map(|s| model.predict(s))
        .collect::<wsner::Result<Vec<_>>>()?;
    for (idx, spans) in predictions.into_iter().enumerate() {
        dataset.set_spans(name, idx, spans)?;
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let mut dataset = load_input(&a.input)?;
    predict_layer(&model, &mut dataset, &a.layer)?;
    save_output(&dataset, &a.out)
}

fn eval(a: EvalArgs) -> Outcome {
    let dataset = load_input(&a.input)?;
    if !dataset.has_layer(&a.gold_layer) {
        return Err(wsner::Error::Data(format!("dataset has no `{}` layer", a.gold_layer)).into());
    }
    let metrics = match &a.model {
        Some(path) => evaluate_model(&load_model(path)?, &dataset, &a.gold_layer)?,
        None => {
            if !dataset.has_layer(&a.pred_layer) {
                return Err(
                    wsner::Error::Data(format!("dataset has no `{}` layer", a.pred_layer)).into(),
                );
            }
            entity_prf(
                &layer_of(&dataset, &a.pred_layer),
                &layer_of(&dataset, &a.gold_layer),
            )?
        }
    };
    if let Some(out) = &a.out {
        write_json(out, &metrics)?;
    }
    print_json(&metrics)
}

fn bench(global: &Global, a: BenchArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let dataset = load_input(&a.input)?;
    let config = BenchConfig {
        warmup: a.warmup,
        repeats: a.repeats,
        threads: global.threads,
    };
    let name = a.name.unwrap_or_else(|| a.model.display().to_string());
    let report = throughput_bench(&model, &name, dataset.sentences(), &config)?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    print_json(&report)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fsutil::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| wsner::Error::Data(format!("{}: {e}", path.display())).into())
}

/// `NAME=METRICS.json[,BENCH.json]`.
fn parse_run(run: &str) -> Result<RunSummary, Failure> {
    let (name, files) = run
        .split_once('=')
        .ok_or_else(|| Failure::Usage(format!("--run `{run}` is not NAME=METRICS[,BENCH]")))?;
    let mut parts = files.split(',');
    let metrics: EntityMetrics = read_json(Path::new(parts.next().unwrap_or_default()))?;
    let bench: Option<BenchReport> = parts.next().map(|p| read_json(Path::new(p))).transpose()?;
    if parts.next().is_some() {
        return Err(Failure::Usage(format!(
            "--run `{run}` names more than two files"
        )));
    }
    Ok(RunSummary {
        name: name.to_owned(),
        metrics,
        bench,
    })
}

fn report(a: ReportArgs) -> Outcome {
    let runs = match &a.state {
        Some(path) => pipeline::run_summaries(&PipelineState::load(path)?),
        None => a
            .runs
            .iter()
            .map(|s| parse_run(s))
            .collect::<Result<_, _>>()?,
    };
    let report = compare_report(&runs)?;
    if let Some(out) = &a.out {
        fsutil::atomic_write(out, report.to_jsonl()?.as_bytes())?;
    }
    print!("{}", report.table);
    Ok(())
}

fn pipeline_run(global: &Global, a: PipelineRunArgs) -> Outcome {
    let mut cfg = match &a.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = a.work_dir {
        cfg.work_dir = dir;
    }
    if let Some(dir) = a.data_dir {
        cfg.data_dir = Some(dir);
    }
    if let Some(c) = a.corrections {
        cfg.corrections = match c {
            CorrectionArg::Oracle => CorrectionSource::Oracle,
            CorrectionArg::Review => CorrectionSource::Review,
        };
    }
    if let Some(seed) = global.seed {
        cfg.synth.seed = seed;
        cfg.outline.seed = seed;
        cfg.student.seed = seed;
        if let Some(detail) = &mut cfg.detail {
            detail.seed = seed;
        }
    }
    cfg.threads = global.threads;
    cfg.bench.threads = global.threads;
    let stop_after = a
        .stop_after
        .as_deref()
        .map(str::parse::<Stage>)
        .transpose()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let pipeline = Pipeline::new(cfg)?;
    let state = pipeline.run(stop_after)?;
    if state.stage == Stage::Done {
        if let Ok(table) = std::fs::read_to_string(pipeline.root().join("report.txt")) {
            print!("{table}");
        }
    } else {
        println!("stopped before stage `{}`", state.stage);
    }
    Ok(())
}

fn pipeline_status(a: PipelineStatusArgs) -> Outcome {
    let state = PipelineState::load(&a.work_dir.join("state.json"))?;
    print_json(&state)
}
