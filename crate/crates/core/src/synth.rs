//! Reproducible synthetic corpora with known gold entities, a partial
//! dictionary and noisy machine annotation.
//!
//! Names are `core + [industry] + suffix`. Suffixes and industry words are
//! shared across names, so a tagger can recognize names the dictionary does
//! not list. Carrier templates never share a character with any name and
//! always separate slots, so a dictionary match can only ever cover a whole
//! mention.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{layer, save_dataset, Dataset, Format, Sentence, Span, DEFAULT_LABEL};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::gazetteer::{annotate_corpus, Matcher, NameDictionary};

/// Marks an entity slot in a carrier template.
pub const SLOT: &str = "{}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NameGrammar {
    /// Characters drawn (with replacement) for the distinctive part of a name.
    pub core_chars: String,
    pub core_len_min: usize,
    pub core_len_max: usize,
    pub industry_words: Vec<String>,
    /// Probability that a name carries an industry word.
    pub industry_prob: f64,
    /// Legal-form suffixes; every name ends in one.
    pub suffixes: Vec<String>,
}

impl Default for NameGrammar {
    fn default() -> Self {
        NameGrammar {
            core_chars: "华鑫恒泰瑞丰宏远金辉嘉盛永安信达方南山北辰海城兴鼎晟博汇凯旋银河星光联创宇翔德隆昌荣顺鸿运佳宁锦程启明福源广聚新锐峰岳"
                .into(),
            core_len_min: 2,
            core_len_max: 3,
            industry_words: ["科技", "医药", "能源", "地产", "电子", "化工", "传媒", "物流", "材料", "环保"]
                .map(String::from)
                .to_vec(),
            industry_prob: 0.6,
            suffixes: ["股份有限公司", "有限公司", "集团", "控股", "公司"]
                .map(String::from)
                .to_vec(),
        }
    }
}

fn default_templates() -> Vec<String> {
    [
        "{}今日披露年报，营业收入同比增长。",
        "据悉，{}将于下月召开董事会。",
        "{}与{}签署战略合作协议。",
        "市场人士认为{}的估值偏低。",
        "{}发布提示：预计上半年净利润下降。",
        "监管部门对{}出具警示函。",
        "{}拟收购{}旗下部分业务。",
        "截至收盘，{}报价上涨三个百分点。",
        "分析师维持对{}的买入评级。",
        "{}表示，目前经营状况正常。",
        "本周多家机构调研了{}。",
        "{}的主要投资人减持计划已经实施完毕。",
        "受行业政策影响，{}预计业绩承压。",
        "{}中标某市基础设施项目。",
        "投资者关注{}和{}的后续表现。",
        "今天大盘震荡走低，成交量萎缩。",
        "昨日两市成交额超过八千亿元。",
        "{}回复交易所问询函。",
    ]
    .map(String::from)
    .to_vec()
}

/// Generator settings. Every field has a default, so a config file only
/// needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_sentences: usize,
    pub n_names: usize,
    /// Fraction of names listed in the dictionary.
    pub dict_coverage: f64,
    /// Fraction of coarse spans whose start or end is moved by one position.
    pub boundary_noise: f64,
    pub name_grammar: NameGrammar,
    /// Sentence frames; each `{}` is replaced by a name.
    pub carrier_templates: Vec<String>,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    /// Extra sentences without labels, drawn from the same distribution.
    pub n_unlabeled: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_sentences: 10_000,
            n_names: 1_000,
            dict_coverage: 0.6,
            boundary_noise: 0.05,
            name_grammar: NameGrammar::default(),
            carrier_templates: default_templates(),
            dev_fraction: 0.1,
            test_fraction: 0.1,
            n_unlabeled: 5_000,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fsutil::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        let g = &self.name_grammar;
        if !(0.0..=1.0).contains(&self.dict_coverage) {
            return bad("dict_coverage must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.boundary_noise) {
            return bad("boundary_noise must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&g.industry_prob) {
            return bad("industry_prob must be in [0, 1]");
        }
        if !(self.dev_fraction >= 0.0
            && self.test_fraction >= 0.0
            && self.dev_fraction + self.test_fraction < 1.0)
        {
            return bad("dev_fraction and test_fraction must be ≥ 0 and sum to less than 1");
        }
        if g.core_chars.is_empty()
            || g.suffixes.iter().all(|s| s.is_empty())
            || self.carrier_templates.is_empty()
        {
            return bad("character pools, suffixes and templates must be non-empty");
        }
        if g.core_len_min == 0 || g.core_len_min > g.core_len_max {
            return bad("core length range must satisfy 1 ≤ min ≤ max");
        }
        if g.industry_prob > 0.0 && g.industry_words.is_empty() {
            return bad("industry_prob > 0 needs industry words");
        }
        if self.n_names == 0 {
            return bad("n_names must be ≥ 1");
        }
        if !self.carrier_templates.iter().any(|t| t.contains(SLOT)) {
            return bad("at least one template needs an entity slot");
        }
        let name_chars: BTreeSet<char> = g
            .core_chars
            .chars()
            .chain(g.industry_words.iter().flat_map(|w| w.chars()))
            .chain(g.suffixes.iter().flat_map(|w| w.chars()))
            .collect();
        for t in &self.carrier_templates {
            if let Some(c) = t.replace(SLOT, "").chars().find(|c| name_chars.contains(c)) {
                return Err(Error::Config(format!(
                    "template {t:?} uses name character {c:?}"
                )));
            }
            if t.contains("{}{}") {
                return Err(Error::Config(format!("template {t:?} has adjacent slots")));
            }
            if t.chars().any(|c| c == '\n') {
                return Err(Error::Config(format!("template {t:?} contains a newline")));
            }
        }
        Ok(())
    }
}

/// Everything the generator produces.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Training sentences with `gold` and `coarse` layers.
    pub train: Dataset,
    /// Held-out sentences with a `gold` layer.
    pub dev: Dataset,
    pub test: Dataset,
    pub dictionary: NameDictionary,
    /// All generated names; the dictionary is a subset.
    pub names: Vec<String>,
    pub unlabeled: Vec<Sentence>,
}

fn gen_names(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<String>> {
    let g = &config.name_grammar;
    let core: Vec<char> = g.core_chars.chars().collect();
    let suffixes: Vec<&String> = g.suffixes.iter().filter(|s| !s.is_empty()).collect();
    let mut names: Vec<String> = Vec::with_capacity(config.n_names);
    let mut attempts = 0usize;
    while names.len() < config.n_names {
        attempts += 1;
        if attempts > 1000 * config.n_names + 10_000 {
            return Err(Error::Config(format!(
                "could only generate {} distinct names; enlarge the pools",
                names.len()
            )));
        }
        let len = rng.gen_range(g.core_len_min..=g.core_len_max);
        let mut name: String = (0..len)
            .map(|_| core[rng.gen_range(0..core.len())])
            .collect();
        if rng.gen_bool(g.industry_prob) {
            name.push_str(g.industry_words.choose(rng).expect("validated"));
        }
        name.push_str(suffixes.choose(rng).expect("validated"));
        // No name may contain another, so every match covers a whole mention.
        if names
            .iter()
            .any(|n| n.contains(&name) || name.contains(n.as_str()))
        {
            continue;
        }
        names.push(name);
    }
    Ok(names)
}

/// Fills templates, cycling through every name once before sampling freely.
fn gen_sentences(
    config: &SynthConfig,
    names: &[String],
    count: usize,
    id_prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Vec<(Sentence, Vec<Span>)> {
    let mut first_pass: Vec<usize> = (0..names.len()).collect();
    first_pass.shuffle(rng);
    let mut pending = first_pass.into_iter();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let template = config.carrier_templates.choose(rng).expect("validated");
        let mut text = String::new();
        let mut spans = Vec::new();
        let mut pos = 0;
        for (i, part) in template.split(SLOT).enumerate() {
            if i > 0 {
                let name = &names[pending
                    .next()
                    .unwrap_or_else(|| rng.gen_range(0..names.len()))];
                let len = name.chars().count();
                spans.push(Span::new(pos, pos + len, DEFAULT_LABEL));
                text.push_str(name);
                pos += len;
            }
            text.push_str(part);
            pos += part.chars().count();
        }
        out.push((Sentence::new(format!("{id_prefix}{k}"), text), spans));
    }
    out
}

/// Moves one boundary of the span by ±1 if the result stays valid.
fn perturb(spans: &mut [Span], i: usize, len: usize, rng: &mut ChaCha8Rng) {
    let lo = if i == 0 { 0 } else { spans[i - 1].end };
    let hi = spans.get(i + 1).map_or(len, |s| s.start);
    let s = &spans[i];
    let mut options = Vec::new();
    if s.start > lo {
        options.push((s.start - 1, s.end));
    }
    if s.end - s.start > 1 {
        options.push((s.start + 1, s.end));
        options.push((s.start, s.end - 1));
    }
    if s.end < hi {
        options.push((s.start, s.end + 1));
    }
    if let Some(&(a, b)) = options.choose(rng) {
        spans[i].start = a;
        spans[i].end = b;
    }
}

/// Generates a corpus. Identical configs give identical corpora.
pub fn gen_corpus(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let names = gen_names(config, &mut rng)?;

    let mut order: Vec<usize> = (0..names.len()).collect();
    order.shuffle(&mut rng);
    let n_dict = (config.dict_coverage * names.len() as f64).round() as usize;
    let mut dictionary = NameDictionary::new(1);
    for &i in &order[..n_dict] {
        dictionary.add(&names[i]);
    }

    let mut labeled = gen_sentences(config, &names, config.n_sentences, "s", &mut rng);
    labeled.shuffle(&mut rng);
    let n_dev = (config.dev_fraction * config.n_sentences as f64).round() as usize;
    let n_test = (config.test_fraction * config.n_sentences as f64).round() as usize;
    let gold_dataset = |items: &[(Sentence, Vec<Span>)]| -> Result<Dataset> {
        let mut ds = Dataset::new();
        for (s, spans) in items {
            let idx = ds.push(s.clone())?;
            ds.set_spans(layer::GOLD, idx, spans.clone())?;
        }
        Ok(ds)
    };
    let dev = gold_dataset(&labeled[..n_dev])?;
    let test = gold_dataset(&labeled[n_dev..n_dev + n_test])?;
    let mut train = gold_dataset(&labeled[n_dev + n_test..])?;

    let sentences: Vec<Sentence> = train.sentences().to_vec();
    let coarse = if dictionary.is_empty() {
        let mut ds = Dataset::from_sentences(sentences.iter().cloned())?;
        for i in 0..ds.len() {
            ds.set_spans(layer::COARSE, i, Vec::new())?;
        }
        ds
    } else {
        annotate_corpus(&sentences, &Matcher::build(&dictionary)?, None)?.dataset
    };
    for (i, s) in sentences.iter().enumerate() {
        let mut spans = coarse.spans(layer::COARSE, i).unwrap_or(&[]).to_vec();
        for k in 0..spans.len() {
            if rng.gen_bool(config.boundary_noise) {
                perturb(&mut spans, k, s.len(), &mut rng);
            }
        }
        train.set_spans(layer::COARSE, i, spans)?;
    }

    let unlabeled = gen_sentences(config, &names, config.n_unlabeled, "u", &mut rng)
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    Ok(SynthCorpus {
        train,
        dev,
        test,
        dictionary,
        names,
        unlabeled,
    })
}

/// File names used by [`write_corpus`].
pub mod files {
    pub const TRAIN: &str = "train.jsonl";
    pub const DEV: &str = "dev.jsonl";
    pub const TEST: &str = "test.jsonl";
    pub const DICTIONARY: &str = "dictionary.txt";
    pub const UNLABELED: &str = "unlabeled.jsonl";
}

/// Writes the corpus into `dir` and returns `(file name, SHA-256 hex)` pairs.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<Vec<(String, String)>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    save_dataset(&corpus.train, &dir.join(files::TRAIN), Format::Jsonl)?;
    save_dataset(&corpus.dev, &dir.join(files::DEV), Format::Jsonl)?;
    save_dataset(&corpus.test, &dir.join(files::TEST), Format::Jsonl)?;
    corpus.dictionary.save(&dir.join(files::DICTIONARY))?;
    let unlabeled = Dataset::from_sentences(corpus.unlabeled.iter().cloned())?;
    save_dataset(&unlabeled, &dir.join(files::UNLABELED), Format::Jsonl)?;
    [
        files::TRAIN,
        files::DEV,
        files::TEST,
        files::DICTIONARY,
        files::UNLABELED,
    ]
    .iter()
    .map(|name| {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::file(&path, e))?;
        Ok((name.to_string(), format!("{:x}", Sha256::digest(&bytes))))
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{entity_prf, layer_of};

    fn small(p: f64, noise: f64) -> SynthConfig {
        SynthConfig {
            n_sentences: 2_000,
            n_names: 200,
            dict_coverage: p,
            boundary_noise: noise,
            n_unlabeled: 100,
            ..SynthConfig::default()
        }
    }

    fn coarse_vs_gold(c: &SynthCorpus) -> crate::eval::EntityMetrics {
        entity_prf(
            &layer_of(&c.train, layer::COARSE),
            &layer_of(&c.train, layer::GOLD),
        )
        .unwrap()
    }

    #[test]
    fn default_config_is_valid() {
        SynthConfig::default().validate().unwrap();
    }

    #[test]
    fn full_coverage_without_noise_reproduces_gold() {
        let c = gen_corpus(&small(1.0, 0.0)).unwrap();
        for (i, _) in c.train.sentences().iter().enumerate() {
            assert_eq!(
                c.train.spans(layer::COARSE, i),
                c.train.spans(layer::GOLD, i)
            );
        }
    }

    #[test]
    fn zero_coverage_gives_no_spans() {
        let c = gen_corpus(&small(0.0, 0.0)).unwrap();
        assert!(c.dictionary.is_empty());
        assert!(c.train.annotated(layer::COARSE).all(|(_, s)| s.is_empty()));
        assert_eq!(c.train.layer_len(layer::COARSE), c.train.len());
    }

    #[test]
    fn partial_coverage_recall_concentrates_near_p() {
        let config = SynthConfig {
            n_sentences: 6_000,
            n_names: 1_000,
            ..small(0.6, 0.0)
        };
        let c = gen_corpus(&config).unwrap();
        let m = coarse_vs_gold(&c);
        assert!(m.true_positives + m.false_negatives >= 5_000);
        assert!((0.55..=0.65).contains(&m.recall), "recall {}", m.recall);
        assert_eq!(m.precision, 1.0);
    }

    #[test]
    fn dictionary_size_and_coverage() {
        let c = gen_corpus(&small(0.6, 0.05)).unwrap();
        assert_eq!(c.dictionary.len(), 120);
        let all_text: String = c
            .train
            .sentences()
            .iter()
            .chain(c.dev.sentences())
            .chain(c.test.sentences())
            .map(|s| s.text())
            .collect();
        for e in c.dictionary.entries() {
            assert!(all_text.contains(&e.surface), "{} never occurs", e.surface);
            assert!(c.names.contains(&e.surface));
        }
    }

    #[test]
    fn splits_are_disjoint_and_sized() {
        let c = gen_corpus(&small(0.6, 0.05)).unwrap();
        assert_eq!((c.dev.len(), c.test.len(), c.train.len()), (200, 200, 1600));
        let ids = |d: &Dataset| {
            d.sentences()
                .iter()
                .map(|s| s.id().to_owned())
                .collect::<BTreeSet<_>>()
        };
        let (a, b, t) = (ids(&c.train), ids(&c.dev), ids(&c.test));
        assert!(a.is_disjoint(&b) && a.is_disjoint(&t) && b.is_disjoint(&t));
    }

    #[test]
    fn noise_moves_boundaries_by_one() {
        let c = gen_corpus(&small(1.0, 1.0)).unwrap();
        let m = coarse_vs_gold(&c);
        assert!(m.recall < 0.05);
        for (i, s) in c.train.sentences().iter().enumerate() {
            let coarse = c.train.spans(layer::COARSE, i).unwrap();
            let gold = c.train.spans(layer::GOLD, i).unwrap();
            assert!(crate::corpus::validate_spans(s.len(), coarse).is_ok());
            for (a, b) in coarse.iter().zip(gold) {
                assert_eq!(a.start.abs_diff(b.start) + a.end.abs_diff(b.end), 1);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_corpus(
            &gen_corpus(&small(0.6, 0.05)).unwrap(),
            &dir.path().join("a"),
        )
        .unwrap();
        let b = write_corpus(
            &gen_corpus(&small(0.6, 0.05)).unwrap(),
            &dir.path().join("b"),
        )
        .unwrap();
        assert_eq!(a, b);
        let other = SynthConfig {
            seed: 7,
            ..small(0.6, 0.05)
        };
        let c = write_corpus(&gen_corpus(&other).unwrap(), &dir.path().join("c")).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let config = small(0.3, 0.1);
        let text = config.to_toml_string().unwrap();
        assert_eq!(SynthConfig::from_toml_str(&text).unwrap(), config);
        let partial = SynthConfig::from_toml_str("n_names = 50\nseed = 3\n").unwrap();
        assert_eq!(partial.n_names, 50);
        assert_eq!(partial.n_sentences, SynthConfig::default().n_sentences);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cases = [
            "dict_coverage = 1.5",
            "boundary_noise = -0.1",
            "carrier_templates = []",
            "carrier_templates = [\"{}{}\"]",
            "carrier_templates = [\"{}公告\"]",
            "unknown_field = 1",
        ];
        for case in cases {
            assert!(
                matches!(SynthConfig::from_toml_str(case), Err(Error::Config(_))),
                "{case}"
            );
        }
    }
}
