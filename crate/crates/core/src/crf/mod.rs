//! Linear-chain CRF with a BIO constraint mask.
//!
//! `score(x, y) = s(y₁) + Σᵢ e(i, yᵢ) + Σᵢ T(yᵢ₋₁, yᵢ) + t(y_L)`, where the
//! emissions `e` come from the model's [`EmissionModel`].

mod inference;
mod io;
mod train;

use crate::corpus::{tags_to_spans, LabelScheme, Sentence, Span, TagSequence};
use crate::emitter::{EmissionTable, EmitterConfig, ExternalEmissions, FeatureEmitter};
use crate::error::Result;

pub use inference::{Marginals, FORBIDDEN};
pub use io::{load_model, save_model, FORMAT_VERSION};
pub use train::{
    fit, nll_and_gradient, EarlyStopping, EmitterGradient, EpochRecord, FitOutcome, Gradient,
    LabeledExample, TrainConfig, TrainingSet,
};

/// Which transitions, first tags and last tags are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintMask {
    pub num_tags: usize,
    /// Row-major `[prev * num_tags + cur]`.
    pub transitions: Vec<bool>,
    pub start: Vec<bool>,
    pub end: Vec<bool>,
}

impl ConstraintMask {
    pub fn unconstrained(num_tags: usize) -> Self {
        ConstraintMask {
            num_tags,
            transitions: vec![true; num_tags * num_tags],
            start: vec![true; num_tags],
            end: vec![true; num_tags],
        }
    }

    /// Forbids `O → I-x`, `start → I-x` and `B-x/I-x → I-y` for `y ≠ x`.
    pub fn bio(scheme: &LabelScheme) -> Self {
        let t = scheme.num_tags();
        let mut m = Self::unconstrained(t);
        for cur in 0..t {
            if let Some((label, false)) = scheme.decompose(cur) {
                m.start[cur] = false;
                for prev in 0..t {
                    let ok = matches!(scheme.decompose(prev), Some((pl, _)) if pl == label);
                    m.transitions[prev * t + cur] = ok;
                }
            }
        }
        m
    }

    pub fn allows(&self, prev: usize, cur: usize) -> bool {
        self.transitions[prev * self.num_tags + cur]
    }

    /// Whether `tags` is a sequence this mask permits.
    pub fn admits(&self, tags: &[usize]) -> bool {
        self.first_violation(tags).is_none()
    }

    /// Position of the first forbidden tag in `tags`.
    pub fn first_violation(&self, tags: &[usize]) -> Option<usize> {
        let (&first, &last) = (tags.first()?, tags.last()?);
        if !self.start[first] {
            return Some(0);
        }
        if let Some(i) = tags.windows(2).position(|w| !self.allows(w[0], w[1])) {
            return Some(i + 1);
        }
        (!self.end[last]).then(|| tags.len() - 1)
    }
}

/// Chain parameters independent of any label scheme or emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainCrf {
    pub num_tags: usize,
    /// `T(prev, cur)`, row-major.
    pub transitions: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub mask: ConstraintMask,
}

impl ChainCrf {
    pub fn new(mask: ConstraintMask) -> Self {
        let t = mask.num_tags;
        ChainCrf {
            num_tags: t,
            transitions: vec![0.0; t * t],
            start: vec![0.0; t],
            end: vec![0.0; t],
            mask,
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.transitions
            .iter()
            .chain(&self.start)
            .chain(&self.end)
            .map(|x| x * x)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.transitions
            .iter()
            .chain(&self.start)
            .chain(&self.end)
            .all(|x| x.is_finite())
    }
}

/// Source of emission scores.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionModel {
    /// Trainable hashed-feature scorer.
    Hashed(FeatureEmitter),
    /// Fixed tables computed by an external encoder.
    External(ExternalEmissions),
}

impl EmissionModel {
    pub fn kind(&self) -> &'static str {
        match self {
            EmissionModel::Hashed(_) => "hashed",
            EmissionModel::External(_) => "external",
        }
    }
}

/// A trained (or trainable) tagger: CRF parameters, scheme and emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    pub(crate) scheme: LabelScheme,
    pub(crate) crf: ChainCrf,
    pub(crate) emitter: EmissionModel,
}

impl CrfModel {
    /// Fresh zero-initialized model with a hashed emitter.
    pub fn new(scheme: LabelScheme, emitter: EmitterConfig, constrained: bool) -> Result<Self> {
        let t = scheme.num_tags();
        let emitter = FeatureEmitter::new(emitter, t)?;
        Ok(Self::with_emitter(
            scheme,
            EmissionModel::Hashed(emitter),
            constrained,
        ))
    }

    pub fn with_emitter(scheme: LabelScheme, emitter: EmissionModel, constrained: bool) -> Self {
        let mask = if constrained {
            ConstraintMask::bio(&scheme)
        } else {
            ConstraintMask::unconstrained(scheme.num_tags())
        };
        CrfModel {
            scheme,
            crf: ChainCrf::new(mask),
            emitter,
        }
    }

    pub fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    pub fn crf(&self) -> &ChainCrf {
        &self.crf
    }

    pub fn crf_mut(&mut self) -> &mut ChainCrf {
        &mut self.crf
    }

    pub fn emitter(&self) -> &EmissionModel {
        &self.emitter
    }

    pub fn emitter_mut(&mut self) -> &mut EmissionModel {
        &mut self.emitter
    }

    pub fn is_constrained(&self) -> bool {
        self.crf.mask != ConstraintMask::unconstrained(self.scheme.num_tags())
    }

    pub fn emissions(&self, sentence: &Sentence) -> Result<EmissionTable> {
        match &self.emitter {
            EmissionModel::Hashed(e) => Ok(e.emissions(sentence)),
            EmissionModel::External(x) => x.for_sentence(sentence).cloned(),
        }
    }

    pub fn log_partition(&self, sentence: &Sentence) -> Result<f64> {
        self.crf.log_partition(&self.emissions(sentence)?)
    }

    pub fn decode(&self, sentence: &Sentence) -> Result<TagSequence> {
        Ok(TagSequence(self.crf.viterbi(&self.emissions(sentence)?)?))
    }

    pub fn predict(&self, sentence: &Sentence) -> Result<Vec<Span>> {
        Ok(tags_to_spans(&self.decode(sentence)?, &self.scheme))
    }

    /// Squared L2 norm of every trainable parameter.
    pub fn squared_norm(&self) -> f64 {
        let e = match &self.emitter {
            EmissionModel::Hashed(e) => e.squared_norm(),
            EmissionModel::External(_) => 0.0,
        };
        self.crf.squared_norm() + e
    }

    pub fn is_finite(&self) -> bool {
        self.crf.is_finite()
            && match &self.emitter {
                EmissionModel::Hashed(e) => e.is_finite(),
                EmissionModel::External(_) => true,
            }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bio_mask_forbids_invalid_moves() {
        let s = LabelScheme::new(["COM", "PER"]).unwrap();
        let m = ConstraintMask::bio(&s);
        let (o, bc, ic, bp, ip) = (0, 1, 2, 3, 4);
        assert!(!m.allows(o, ic));
        assert!(!m.start[ic] && !m.start[ip]);
        assert!(!m.allows(bc, ip) && !m.allows(ic, ip) && !m.allows(bp, ic));
        assert!(m.allows(bc, ic) && m.allows(ic, ic) && m.allows(ic, o) && m.allows(o, bp));
        assert!(m.allows(bc, bp));
        assert!(m.end.iter().all(|&e| e));
    }

    #[test]
    fn small_uniform_partitions() {
        let crf = ChainCrf::new(ConstraintMask::unconstrained(2));
        let one = EmissionTable::zeros(1, 2);
        let two = EmissionTable::zeros(2, 2);
        approx::assert_abs_diff_eq!(crf.log_partition(&one).unwrap(), 2f64.ln(), epsilon = 1e-15);
        approx::assert_abs_diff_eq!(crf.log_partition(&two).unwrap(), 4f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn infeasible_mask() {
        let mut mask = ConstraintMask::unconstrained(2);
        mask.start = vec![false, false];
        let crf = ChainCrf::new(mask);
        let em = EmissionTable::zeros(2, 2);
        assert!(matches!(crf.viterbi(&em), Err(crate::Error::Infeasible)));
        assert!(matches!(
            crf.log_partition(&em),
            Err(crate::Error::Infeasible)
        ));
    }

    #[test]
    fn shape_mismatch() {
        let crf = ChainCrf::new(ConstraintMask::unconstrained(3));
        let em = EmissionTable::zeros(2, 2);
        assert!(matches!(
            crf.viterbi(&em),
            Err(crate::Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            crf.log_partition(&em),
            Err(crate::Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn per_position_argmax_without_transitions() {
        let s = LabelScheme::default();
        let crf = ChainCrf::new(ConstraintMask::bio(&s));
        // O, B, I, I, O, B is BIO-valid and the unique argmax at every position.
        let em = EmissionTable::from_rows(
            &[
                vec![2.0, 0.0, -1.0],
                vec![0.0, 3.0, 1.0],
                vec![0.0, 0.5, 1.5],
                vec![0.1, 0.0, 0.7],
                vec![0.9, 0.0, 0.2],
                vec![0.0, 0.3, -5.0],
            ],
            3,
        )
        .unwrap();
        assert_eq!(crf.viterbi(&em).unwrap(), vec![0, 1, 2, 2, 0, 1]);
    }

    #[test]
    fn decode_respects_mask_under_adversarial_emissions() {
        let s = LabelScheme::default();
        let crf = ChainCrf::new(ConstraintMask::bio(&s));
        // I-COM is the per-position favourite everywhere but cannot start a sentence.
        let em = EmissionTable::from_rows(&[vec![0.0, 0.0, 9.0], vec![0.0, 0.0, 9.0]], 3).unwrap();
        let tags = crf.viterbi(&em).unwrap();
        assert!(crf.mask.admits(&tags));
        assert_eq!(tags, vec![1, 2]);
    }

    #[test]
    fn empty_sentence() {
        let crf = ChainCrf::new(ConstraintMask::unconstrained(3));
        let em = EmissionTable::zeros(0, 3);
        assert_eq!(crf.log_partition(&em).unwrap(), 0.0);
        assert!(crf.viterbi(&em).unwrap().is_empty());
        assert!(crf.marginals(&em).unwrap().unary.is_empty());
    }
}
