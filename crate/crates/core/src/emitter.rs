//! Per-position emission scores for the CRF.
//!
//! [`FeatureEmitter`] is a linear model over hashed character-window
//! features; [`ExternalEmissions`] holds score tables computed offline by
//! any other encoder and keyed by sentence id.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelScheme, Sentence};
use crate::error::{Error, Result};
use crate::fsutil;

/// Scores `e(i, y)`, row-major `len × num_tags`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTable {
    num_tags: usize,
    scores: Vec<f64>,
}

impl EmissionTable {
    pub fn zeros(len: usize, num_tags: usize) -> Self {
        EmissionTable {
            num_tags,
            scores: vec![0.0; len * num_tags],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], num_tags: usize) -> Result<Self> {
        let mut scores = Vec::with_capacity(rows.len() * num_tags);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != num_tags {
                return Err(Error::ShapeMismatch {
                    id: String::new(),
                    message: format!("row {i} has {} columns, expected {num_tags}", r.len()),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch {
                    id: String::new(),
                    message: format!("row {i} has a non-finite score"),
                });
            }
            scores.extend_from_slice(r);
        }
        Ok(EmissionTable { num_tags, scores })
    }

    pub fn from_flat(scores: Vec<f64>, num_tags: usize) -> Self {
        assert!(num_tags > 0 && scores.len().is_multiple_of(num_tags));
        EmissionTable { num_tags, scores }
    }

    pub fn len(&self) -> usize {
        self.scores.len() / self.num_tags
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    #[inline]
    pub fn get(&self, i: usize, y: usize) -> f64 {
        self.scores[i * self.num_tags + y]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.num_tags..(i + 1) * self.num_tags]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.scores[i * self.num_tags..(i + 1) * self.num_tags]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.scores
            .chunks(self.num_tags)
            .map(<[f64]>::to_vec)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitterConfig {
    /// Half-width of the character window.
    pub window: usize,
    /// Number of hash buckets.
    pub hash_dim: usize,
    pub hash_seed: u64,
}

impl Default for EmitterConfig {
    fn default() -> Self {
        EmitterConfig {
            window: 2,
            hash_dim: 1 << 20,
            hash_seed: 0x5eed,
        }
    }
}

impl EmitterConfig {
    /// Wide window, large table.
    pub fn teacher() -> Self {
        EmitterConfig {
            window: 3,
            hash_dim: 1 << 22,
            ..Default::default()
        }
    }

    /// Narrow window, small table.
    pub fn student() -> Self {
        EmitterConfig {
            window: 1,
            hash_dim: 1 << 18,
            ..Default::default()
        }
    }

    /// Feature ids emitted at each position: unigrams, bigrams, parity.
    pub fn features_per_position(&self) -> usize {
        4 * self.window + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.hash_dim == 0 || self.hash_dim > u32::MAX as usize {
            return Err(Error::Config(format!(
                "hash_dim {} out of range",
                self.hash_dim
            )));
        }
        Ok(())
    }
}

const KIND_UNIGRAM: u64 = 1;
const KIND_BIGRAM: u64 = 2;
const KIND_PARITY: u64 = 3;
const LEFT_PAD: u64 = 0x11_0000;
const RIGHT_PAD: u64 = 0x11_0001;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn mix(h: u64, v: u64) -> u64 {
    splitmix(h ^ v.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

#[inline]
fn symbol(chars: &[char], i: isize) -> u64 {
    if i < 0 {
        LEFT_PAD
    } else if i as usize >= chars.len() {
        RIGHT_PAD
    } else {
        chars[i as usize] as u64
    }
}

/// Hash prefixes per window offset. A feature hash is its prefix mixed
/// with the symbols it covers.
#[derive(Debug, Clone, PartialEq)]
struct Prefixes {
    window: usize,
    unigram: Vec<u64>,
    bigram: Vec<u64>,
    parity: [u64; 2],
}

impl Prefixes {
    fn new(window: usize, seed: u64) -> Self {
        let w = window as isize;
        Prefixes {
            window,
            unigram: (-w..=w)
                .map(|k| mix(mix(seed, KIND_UNIGRAM), k as u64))
                .collect(),
            bigram: (-w..w)
                .map(|k| mix(mix(seed, KIND_BIGRAM), k as u64))
                .collect(),
            parity: [0, 1].map(|r| mix(mix(seed, KIND_PARITY), r)),
        }
    }

    /// Calls `out` with each raw 64-bit feature hash at `position`.
    #[inline]
    fn each(&self, chars: &[char], position: usize, mut out: impl FnMut(u64)) {
        let first = position as isize - self.window as isize;
        for (j, &pre) in self.unigram.iter().enumerate() {
            out(mix(pre, symbol(chars, first + j as isize)));
        }
        for (j, &pre) in self.bigram.iter().enumerate() {
            let i = first + j as isize;
            out(mix(mix(pre, symbol(chars, i)), symbol(chars, i + 1)));
        }
        out(self.parity[position % 2]);
    }
}

/// Hashed feature ids at `position`: one unigram per window offset (padded
/// with boundary sentinels), one bigram per adjacent offset pair, and a
/// position-parity feature.
pub fn extract_features(
    sentence: &Sentence,
    position: usize,
    window: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    let chars = sentence.chars();
    if position >= chars.len() {
        return Err(Error::Range {
            start: position,
            end: position + 1,
            len: chars.len(),
        });
    }
    let mut out = Vec::with_capacity(4 * window + 2);
    Prefixes::new(window, seed).each(&chars, position, |h| out.push(h));
    Ok(out)
}

/// Linear scorer over hashed features: `e(i, y) = Σ_f w[f][y]`.
///
/// Weights are stored as `scale · raw` so L2 shrinkage is O(1) per step.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEmitter {
    config: EmitterConfig,
    num_tags: usize,
    raw: Vec<f64>,
    scale: f64,
    prefixes: Prefixes,
}

impl FeatureEmitter {
    pub fn new(config: EmitterConfig, num_tags: usize) -> Result<Self> {
        config.validate()?;
        Ok(Self::from_parts(
            config,
            num_tags,
            vec![0.0; config.hash_dim * num_tags],
            1.0,
        ))
    }

    pub(crate) fn from_parts(
        config: EmitterConfig,
        num_tags: usize,
        raw: Vec<f64>,
        scale: f64,
    ) -> Self {
        FeatureEmitter {
            config,
            num_tags,
            raw,
            scale,
            prefixes: Prefixes::new(config.window, config.hash_seed),
        }
    }

    #[inline]
    fn bucket(&self, h: u64) -> usize {
        let dim = self.config.hash_dim as u64;
        if dim.is_power_of_two() {
            (h & (dim - 1)) as usize
        } else {
            (h % dim) as usize
        }
    }

    pub(crate) fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub(crate) fn scale(&self) -> f64 {
        self.scale
    }

    pub fn config(&self) -> &EmitterConfig {
        &self.config
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    /// Bucket ids for every position, flattened `len × features_per_position`.
    pub fn feature_ids(&self, chars: &[char]) -> Vec<u32> {
        let mut out = Vec::with_capacity(chars.len() * self.config.features_per_position());
        for pos in 0..chars.len() {
            self.prefixes
                .each(chars, pos, |h| out.push(self.bucket(h) as u32));
        }
        out
    }

    /// Emission table from precomputed bucket ids.
    pub fn emissions_from_ids(&self, ids: &[u32]) -> EmissionTable {
        let t = self.num_tags;
        let k = self.config.features_per_position();
        let len = ids.len() / k;
        let mut scores = vec![0.0; len * t];
        for (row, feats) in scores.chunks_mut(t).zip(ids.chunks(k)) {
            for &f in feats {
                let w = &self.raw[f as usize * t..f as usize * t + t];
                for (r, x) in row.iter_mut().zip(w) {
                    *r += x;
                }
            }
            if self.scale != 1.0 {
                for r in row.iter_mut() {
                    *r *= self.scale;
                }
            }
        }
        EmissionTable {
            num_tags: t,
            scores,
        }
    }

    /// Same sums as [`Self::emissions_from_ids`], without materializing the ids.
    pub fn emissions(&self, sentence: &Sentence) -> EmissionTable {
        let chars = sentence.chars();
        let t = self.num_tags;
        let mut scores = vec![0.0; chars.len() * t];
        for (pos, row) in scores.chunks_mut(t).enumerate() {
            self.prefixes.each(&chars, pos, |h| {
                let f = self.bucket(h);
                for (r, x) in row.iter_mut().zip(&self.raw[f * t..f * t + t]) {
                    *r += x;
                }
            });
            if self.scale != 1.0 {
                for r in row.iter_mut() {
                    *r *= self.scale;
                }
            }
        }
        EmissionTable {
            num_tags: t,
            scores,
        }
    }

    #[inline]
    pub fn weight(&self, feature: usize, tag: usize) -> f64 {
        self.scale * self.raw[feature * self.num_tags + tag]
    }

    pub fn set_weight(&mut self, feature: usize, tag: usize, value: f64) {
        self.raw[feature * self.num_tags + tag] = value / self.scale;
    }

    /// Effective weights of one bucket.
    pub fn weight_row(&self, feature: usize) -> Vec<f64> {
        (0..self.num_tags)
            .map(|y| self.weight(feature, y))
            .collect()
    }

    /// `w[f][y] -= step · grad[i][y]` for every feature `f` active at position `i`.
    pub(crate) fn sgd_step(&mut self, ids: &[u32], grad: &[f64], step: f64) {
        let t = self.num_tags;
        let k = self.config.features_per_position();
        let factor = step / self.scale;
        for (feats, g) in ids.chunks(k).zip(grad.chunks(t)) {
            for &f in feats {
                let w = &mut self.raw[f as usize * t..f as usize * t + t];
                for (x, gy) in w.iter_mut().zip(g) {
                    *x -= factor * gy;
                }
            }
        }
    }

    /// Multiplies every weight by `factor` (L2 shrinkage).
    pub(crate) fn shrink(&mut self, factor: f64) {
        self.scale *= factor;
        if self.scale < 1e-9 {
            let s = self.scale;
            for x in &mut self.raw {
                *x *= s;
            }
            self.scale = 1.0;
        }
    }

    /// Squared L2 norm of the effective weights.
    pub fn squared_norm(&self) -> f64 {
        self.scale * self.scale * self.raw.iter().map(|x| x * x).sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.scale.is_finite() && self.raw.iter().all(|x| x.is_finite())
    }

    /// Buckets with any non-zero weight.
    pub fn active_buckets(&self) -> usize {
        self.raw
            .chunks(self.num_tags)
            .filter(|r| r.iter().any(|&x| x != 0.0))
            .count()
    }
}

/// Emission tables produced offline, keyed by sentence id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalEmissions {
    num_tags: usize,
    tables: BTreeMap<String, EmissionTable>,
}

#[derive(Serialize, Deserialize)]
struct ExternalLine {
    id: String,
    scores: Vec<Vec<f64>>,
}

impl ExternalEmissions {
    pub fn new(num_tags: usize) -> Self {
        ExternalEmissions {
            num_tags,
            tables: BTreeMap::new(),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn insert(&mut self, id: impl Into<String>, table: EmissionTable) -> Result<()> {
        let id = id.into();
        if table.num_tags() != self.num_tags {
            return Err(Error::ShapeMismatch {
                id,
                message: format!(
                    "{} tag columns, expected {}",
                    table.num_tags(),
                    self.num_tags
                ),
            });
        }
        self.tables.insert(id, table);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&EmissionTable> {
        self.tables.get(id)
    }

    pub fn tables(&self) -> &BTreeMap<String, EmissionTable> {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Table for `sentence`, checked against its length.
    pub fn for_sentence(&self, sentence: &Sentence) -> Result<&EmissionTable> {
        let t = self
            .tables
            .get(sentence.id())
            .ok_or_else(|| Error::ShapeMismatch {
                id: sentence.id().to_owned(),
                message: "no emission table for this sentence".into(),
            })?;
        if t.len() != sentence.len() {
            return Err(Error::ShapeMismatch {
                id: sentence.id().to_owned(),
                message: format!(
                    "{} rows for a sentence of length {}",
                    t.len(),
                    sentence.len()
                ),
            });
        }
        Ok(t)
    }

    /// Every sentence of `dataset` must have a table with one row per position.
    pub fn validate_against(&self, dataset: &Dataset) -> Result<()> {
        for s in dataset.sentences() {
            self.for_sentence(s)?;
        }
        Ok(())
    }

    pub fn parse(text: &str, scheme: &LabelScheme) -> Result<Self> {
        let mut out = ExternalEmissions::new(scheme.num_tags());
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ExternalLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            let table =
                EmissionTable::from_rows(&rec.scores, scheme.num_tags()).map_err(|e| match e {
                    Error::ShapeMismatch { message, .. } => Error::ShapeMismatch {
                        id: rec.id.clone(),
                        message,
                    },
                    other => other,
                })?;
            out.tables.insert(rec.id, table);
        }
        Ok(out)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for (id, t) in &self.tables {
            let line = ExternalLine {
                id: id.clone(),
                scores: t.rows(),
            };
            let _ = writeln!(out, "{}", serde_json::to_string(&line)?);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::atomic_write(path, self.to_jsonl()?.as_bytes())
    }
}

/// Reads an external-emissions file (`{"id", "scores": [[..], ..]}` per line).
pub fn load_external_emissions(path: &Path, scheme: &LabelScheme) -> Result<ExternalEmissions> {
    ExternalEmissions::parse(&fsutil::read_to_string(path)?, scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(window: usize) -> FeatureEmitter {
        FeatureEmitter::new(
            EmitterConfig {
                window,
                hash_dim: 97,
                hash_seed: 7,
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn extraction_is_deterministic_and_local() {
        let a = Sentence::new("a", "xx华鑫科技yy");
        let b = Sentence::new("b", "zz华鑫科技ww");
        assert_eq!(
            extract_features(&a, 3, 2, 1).unwrap(),
            extract_features(&a, 3, 2, 1).unwrap()
        );
        // Positions 2..=5 differ only outside a window of 1 around position 3/4.
        assert_eq!(
            extract_features(&a, 3, 1, 1).unwrap(),
            extract_features(&b, 3, 1, 1).unwrap()
        );
        assert_ne!(
            extract_features(&a, 3, 2, 1).unwrap(),
            extract_features(&a, 3, 2, 2).unwrap()
        );
    }

    #[test]
    fn boundary_sentinels() {
        let s = Sentence::new("a", "x");
        let ids = extract_features(&s, 0, 2, 0).unwrap();
        assert_eq!(ids.len(), 4 * 2 + 2);
        // Two padded positions on each side give 2w sentinel unigrams.
        let sentinels: Vec<u64> = [
            (-2i64, LEFT_PAD),
            (-1, LEFT_PAD),
            (1, RIGHT_PAD),
            (2, RIGHT_PAD),
        ]
        .iter()
        .map(|&(k, pad)| mix(mix(mix(0, KIND_UNIGRAM), k as u64), pad))
        .collect();
        for h in sentinels {
            assert!(ids.contains(&h));
        }
        assert!(matches!(
            extract_features(&s, 1, 2, 0),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn zero_weights_give_zero_table() {
        let e = small(2);
        let t = e.emissions(&Sentence::new("a", "abcd"));
        assert_eq!(t.len(), 4);
        assert!(t.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_feature_row_appears_where_active() {
        let mut e = small(0);
        let s = Sentence::new("a", "abab");
        let ids = e.feature_ids(&s.chars());
        // window 0: unigram + parity per position
        let f = ids[0] as usize;
        for (y, v) in [1.0, 0.0, -1.0].into_iter().enumerate() {
            e.set_weight(f, y, v);
        }
        let t = e.emissions(&s);
        for i in 0..4 {
            let active = ids[i * 2..i * 2 + 2]
                .iter()
                .filter(|&&x| x as usize == f)
                .count() as f64;
            assert_eq!(t.row(i), &[active, 0.0, -active]);
        }
        assert!(t.row(0)[0] >= 1.0);
    }

    #[test]
    fn matches_naive_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut e = small(2);
        for f in 0..97 {
            for y in 0..3 {
                e.set_weight(f, y, rng.gen_range(-1.0..1.0));
            }
        }
        e.shrink(0.5);
        let s = Sentence::new("a", "华鑫科技股份有限公司");
        let table = e.emissions(&s);
        for i in 0..s.len() {
            let feats = extract_features(&s, i, 2, 7).unwrap();
            for y in 0..3 {
                let naive: f64 = feats.iter().map(|&h| e.weight((h % 97) as usize, y)).sum();
                approx::assert_abs_diff_eq!(table.get(i, y), naive, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn emissions_are_linear_in_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut a, mut b, mut ab) = (small(1), small(1), small(1));
        for f in 0..97 {
            for y in 0..3 {
                let (x, z): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                a.set_weight(f, y, x);
                b.set_weight(f, y, z);
                ab.set_weight(f, y, x + z);
            }
        }
        let s = Sentence::new("a", "linear scores");
        let (ta, tb, tab) = (a.emissions(&s), b.emissions(&s), ab.emissions(&s));
        for ((x, z), s) in ta.as_slice().iter().zip(tb.as_slice()).zip(tab.as_slice()) {
            approx::assert_abs_diff_eq!(x + z, *s, epsilon = 1e-12);
        }
    }

    #[test]
    fn external_file_shapes() {
        let scheme = LabelScheme::default();
        let good = "{\"id\":\"a\",\"scores\":[[0.5,1,2],[0,0,0],[-1,2.25,3]]}\n";
        let ext = ExternalEmissions::parse(good, &scheme).unwrap();
        let t = ext.get("a").unwrap();
        assert_eq!(
            t.rows(),
            vec![vec![0.5, 1.0, 2.0], vec![0.0; 3], vec![-1.0, 2.25, 3.0]]
        );
        ext.for_sentence(&Sentence::new("a", "abc")).unwrap();

        let short = "{\"id\":\"a\",\"scores\":[[0,0,0],[0,0,0]]}\n";
        let ext = ExternalEmissions::parse(short, &scheme).unwrap();
        match ext.for_sentence(&Sentence::new("a", "abc")) {
            Err(Error::ShapeMismatch { id, .. }) => assert_eq!(id, "a"),
            other => panic!("unexpected {other:?}"),
        }

        let narrow = "{\"id\":\"z\",\"scores\":[[0,0]]}\n";
        match ExternalEmissions::parse(narrow, &scheme) {
            Err(Error::ShapeMismatch { id, .. }) => assert_eq!(id, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
