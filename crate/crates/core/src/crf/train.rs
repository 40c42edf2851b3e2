//! Maximum-likelihood training by per-sentence SGD with early stopping.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CrfModel, EmissionModel, Marginals};
use crate::corpus::{spans_to_tags, tags_to_spans, Dataset, Sentence, Span, TagSequence};
use crate::emitter::EmissionTable;
use crate::error::{Error, Result};
use crate::eval::{sentence_counts, EntityMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    /// Epochs without a dev-F1 improvement before stopping.
    pub patience: usize,
    /// Step size at epoch `k` (1-based) is `learning_rate / (1 + decay · (k - 1))`.
    pub decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.003,
            l2: 0.0,
            max_epochs: 20,
            patience: 2,
            decay: 0.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// Fine-tuning settings: same schedule at a tenth of the step size.
    pub fn detail_from(outline: &TrainConfig) -> Self {
        TrainConfig {
            learning_rate: outline.learning_rate * 0.1,
            ..*outline
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning_rate must be a finite value ≥ 0".into(),
            ));
        }
        if self.l2 < 0.0 {
            return Err(Error::Config("l2 must be ≥ 0".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be ≥ 1".into()));
        }
        Ok(())
    }

    fn step_size(&self, epoch: usize) -> f64 {
        self.learning_rate / (1.0 + self.decay * (epoch.saturating_sub(1)) as f64)
    }
}

/// Tracks the best dev score and decides when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience: patience.max(1),
            best: None,
            stale: 0,
        }
    }

    /// Records the score of `epoch`. Returns `true` if it is a new best.
    pub fn observe(&mut self, epoch: usize, score: f64) -> bool {
        match self.best {
            Some((_, b)) if score <= b => {
                self.stale += 1;
                false
            }
            _ => {
                self.best = Some((epoch, score));
                self.stale = 0;
                true
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }
}

/// A sentence with its gold tags and cached emitter inputs.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub sentence: Sentence,
    pub gold: Vec<usize>,
    pub gold_spans: Vec<Span>,
    feature_ids: Option<Vec<u32>>,
}

/// Examples prepared for one model's emitter.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub examples: Vec<LabeledExample>,
}

impl TrainingSet {
    /// Every sentence annotated in `layer`, encoded with the model's scheme.
    pub fn from_dataset(model: &CrfModel, dataset: &Dataset, layer: &str) -> Result<Self> {
        let mut examples = Vec::new();
        for (s, spans) in dataset.annotated(layer) {
            let tags = spans_to_tags(s.len(), spans, &model.scheme)?;
            let feature_ids = match &model.emitter {
                EmissionModel::Hashed(e) => Some(e.feature_ids(&s.chars())),
                EmissionModel::External(x) => {
                    x.for_sentence(s)?;
                    None
                }
            };
            examples.push(LabeledExample {
                sentence: s.clone(),
                gold: tags.0,
                gold_spans: spans.to_vec(),
                feature_ids,
            });
        }
        Ok(TrainingSet { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

impl CrfModel {
    fn example_emissions(&self, ex: &LabeledExample) -> Result<EmissionTable> {
        match (&self.emitter, &ex.feature_ids) {
            (EmissionModel::Hashed(e), Some(ids)) => Ok(e.emissions_from_ids(ids)),
            _ => self.emissions(&ex.sentence),
        }
    }

    fn example_predict(&self, ex: &LabeledExample) -> Result<Vec<Span>> {
        let em = self.example_emissions(ex)?;
        let tags = TagSequence(self.crf.viterbi(&em)?);
        Ok(tags_to_spans(&tags, &self.scheme))
    }

    /// Entity metrics of this model on prepared examples.
    pub fn evaluate_examples(&self, set: &TrainingSet) -> Result<EntityMetrics> {
        let mut m = EntityMetrics::default();
        for ex in &set.examples {
            let (tp, fp, fn_) = sentence_counts(&self.example_predict(ex)?, &ex.gold_spans);
            m = m.merge(&EntityMetrics::from_counts(tp, fp, fn_));
        }
        Ok(m)
    }
}

/// Gradient of the emitter weights.
#[derive(Debug, Clone, PartialEq)]
pub enum EmitterGradient {
    /// Data term per touched bucket (the L2 term is dense and left implicit).
    Hashed(BTreeMap<u32, Vec<f64>>),
    /// External emissions are not trainable.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    /// Gradient with respect to the emission table itself (marginal − indicator).
    pub emissions: Vec<f64>,
    pub transitions: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub emitter: EmitterGradient,
    pub l2: f64,
}

impl Gradient {
    /// Full gradient of the loss for emitter weight `(feature, tag)`.
    pub fn emitter_weight(&self, model: &CrfModel, feature: usize, tag: usize) -> f64 {
        match (&self.emitter, &model.emitter) {
            (EmitterGradient::Hashed(g), EmissionModel::Hashed(e)) => {
                let data = g.get(&(feature as u32)).map_or(0.0, |row| row[tag]);
                data + self.l2 * e.weight(feature, tag)
            }
            _ => 0.0,
        }
    }
}

/// Data part of the gradient: marginals minus gold indicators.
struct DataGradient {
    loss: f64,
    emissions: Vec<f64>,
    transitions: Vec<f64>,
    start: Vec<f64>,
    end: Vec<f64>,
}

fn data_gradient(model: &CrfModel, em: &EmissionTable, gold: &[usize]) -> Result<DataGradient> {
    let crf = &model.crf;
    let t = crf.num_tags;
    let gold_score = crf.score(em, gold)?;
    let Marginals {
        log_z,
        unary,
        pairwise,
        ..
    } = crf.marginals(em)?;
    let mut emissions = unary;
    let mut transitions = pairwise;
    let mut start = vec![0.0; t];
    let mut end = vec![0.0; t];
    if let (Some(&first), Some(&last)) = (gold.first(), gold.last()) {
        start.copy_from_slice(&emissions[..t]);
        end.copy_from_slice(&emissions[(gold.len() - 1) * t..]);
        start[first] -= 1.0;
        end[last] -= 1.0;
    }
    for (i, &y) in gold.iter().enumerate() {
        emissions[i * t + y] -= 1.0;
        if i > 0 {
            transitions[gold[i - 1] * t + y] -= 1.0;
        }
    }
    Ok(DataGradient {
        loss: log_z - gold_score,
        emissions,
        transitions,
        start,
        end,
    })
}

/// Negative log-likelihood of `gold` (plus `l2/2 · ‖θ‖²`) and its gradient.
pub fn nll_and_gradient(
    model: &CrfModel,
    sentence: &Sentence,
    gold: &TagSequence,
    l2: f64,
) -> Result<Gradient> {
    let em = model.emissions(sentence)?;
    let d = data_gradient(model, &em, gold.ids())?;
    let crf = &model.crf;
    let with_l2 =
        |g: Vec<f64>, p: &[f64]| -> Vec<f64> { g.iter().zip(p).map(|(g, p)| g + l2 * p).collect() };
    let emitter = match &model.emitter {
        EmissionModel::Hashed(e) => {
            let t = crf.num_tags;
            let k = e.config().features_per_position();
            let ids = e.feature_ids(&sentence.chars());
            let mut map: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            for (i, feats) in ids.chunks(k).enumerate() {
                for &f in feats {
                    let row = map.entry(f).or_insert_with(|| vec![0.0; t]);
                    for (r, g) in row.iter_mut().zip(&d.emissions[i * t..(i + 1) * t]) {
                        *r += g;
                    }
                }
            }
            EmitterGradient::Hashed(map)
        }
        EmissionModel::External(_) => EmitterGradient::Fixed,
    };
    Ok(Gradient {
        loss: d.loss + 0.5 * l2 * model.squared_norm(),
        transitions: with_l2(d.transitions, &crf.transitions),
        start: with_l2(d.start, &crf.start),
        end: with_l2(d.end, &crf.end),
        emissions: d.emissions,
        emitter,
        l2,
    })
}

/// One SGD step on a single example. Returns the data loss.
fn sgd_step(model: &mut CrfModel, ex: &LabeledExample, step: f64, l2: f64) -> Result<f64> {
    let em = model.example_emissions(ex)?;
    let d = data_gradient(model, &em, &ex.gold)?;
    let shrink = 1.0 - step * l2;
    let crf = &mut model.crf;
    let update = |p: &mut [f64], g: &[f64]| {
        for (p, g) in p.iter_mut().zip(g) {
            *p = shrink * *p - step * g;
        }
    };
    update(&mut crf.transitions, &d.transitions);
    update(&mut crf.start, &d.start);
    update(&mut crf.end, &d.end);
    if let (EmissionModel::Hashed(e), Some(ids)) = (&mut model.emitter, &ex.feature_ids) {
        if shrink != 1.0 {
            e.shrink(shrink);
        }
        e.sgd_step(ids, &d.emissions, step);
    }
    Ok(d.loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: EntityMetrics,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Snapshot from the epoch with the best dev F1.
    pub model: CrfModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl FitOutcome {
    pub fn dev_f1_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.dev.f1).collect()
    }

    /// Record of the restored epoch; `None` when no training took place.
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch
            .checked_sub(1)
            .and_then(|i| self.history.get(i))
    }
}

/// Minimizes mean NLL on `train` with per-sentence SGD, scoring entity F1 on
/// `dev` after every epoch and keeping the best snapshot.
pub fn fit(
    mut model: CrfModel,
    train: &TrainingSet,
    dev: &TrainingSet,
    config: &TrainConfig,
) -> Result<FitOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if dev.is_empty() {
        return Err(Error::Data("dev set is empty".into()));
    }
    for ex in &train.examples {
        if let Some(position) = model.crf.mask.first_violation(&ex.gold) {
            return Err(Error::InvalidGold { position });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    let mut best = model.clone();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let step = config.step_size(epoch);
        let mut total = 0.0;
        for &i in &order {
            let loss = sgd_step(&mut model, &train.examples[i], step, config.l2)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            total += loss;
        }
        if !model.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let train_loss = total / train.len() as f64 + 0.5 * config.l2 * model.squared_norm();
        let dev_metrics = model.evaluate_examples(dev)?;
        log::info!(
            "epoch {epoch}: loss {train_loss:.4}, dev P {:.4} R {:.4} F1 {:.4}",
            dev_metrics.precision,
            dev_metrics.recall,
            dev_metrics.f1
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            dev: dev_metrics,
        });
        if stopper.observe(epoch, dev_metrics.f1) {
            best.clone_from(&model);
        }
        if stopper.should_stop() {
            stopped_early = true;
            break;
        }
    }
    let best_epoch = stopper.best_epoch().unwrap_or(0);
    if best_epoch == 0 {
        return Err(Error::Config("max_epochs must be ≥ 1".into()));
    }
    Ok(FitOutcome {
        model: best,
        history,
        best_epoch,
        stopped_early,
    })
}
