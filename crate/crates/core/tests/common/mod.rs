//! Reference implementations used as test oracles. Nothing here calls into
//! the inference or matching code paths it is compared against.

#![allow(dead_code)]

use rand::Rng;
use wsner::crf::{ChainCrf, ConstraintMask};
use wsner::emitter::EmissionTable;

/// Every tag sequence of length `len` over `num_tags` tags.
pub fn all_sequences(num_tags: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..num_tags).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn mask_allows(mask: &ConstraintMask, tags: &[usize]) -> bool {
    let t = mask.num_tags;
    if tags.is_empty() {
        return true;
    }
    mask.start[tags[0]]
        && mask.end[tags[tags.len() - 1]]
        && tags.windows(2).all(|w| mask.transitions[w[0] * t + w[1]])
}

pub fn direct_score(crf: &ChainCrf, em: &EmissionTable, tags: &[usize]) -> f64 {
    let t = crf.num_tags;
    let mut s = crf.start[tags[0]] + crf.end[tags[tags.len() - 1]];
    for (i, &y) in tags.iter().enumerate() {
        s += em.as_slice()[i * t + y];
        if i > 0 {
            s += crf.transitions[tags[i - 1] * t + y];
        }
    }
    s
}

pub struct Enumerated {
    pub log_z: f64,
    /// `p(y_i = y)`, row-major.
    pub unary: Vec<f64>,
    /// Summed pairwise marginals, row-major.
    pub pairwise: Vec<f64>,
    /// Highest-scoring valid sequence (first in lexicographic order on ties).
    pub argmax: Option<Vec<usize>>,
}

/// Exhaustive enumeration over all mask-valid sequences.
pub fn enumerate(crf: &ChainCrf, em: &EmissionTable) -> Enumerated {
    let t = crf.num_tags;
    let len = em.as_slice().len() / t;
    let valid: Vec<(Vec<usize>, f64)> = all_sequences(t, len)
        .into_iter()
        .filter(|s| mask_allows(&crf.mask, s))
        .map(|s| {
            let sc = direct_score(crf, em, &s);
            (s, sc)
        })
        .collect();
    if valid.is_empty() {
        return Enumerated {
            log_z: f64::NEG_INFINITY,
            unary: vec![],
            pairwise: vec![],
            argmax: None,
        };
    }
    let max = valid.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = valid.iter().map(|v| (v.1 - max).exp()).sum();
    let log_z = max + z.ln();
    let mut unary = vec![0.0; len * t];
    let mut pairwise = vec![0.0; t * t];
    for (s, sc) in &valid {
        let p = (sc - log_z).exp();
        for (i, &y) in s.iter().enumerate() {
            unary[i * t + y] += p;
            if i > 0 {
                pairwise[s[i - 1] * t + y] += p;
            }
        }
    }
    let argmax = valid
        .iter()
        .fold(None::<&(Vec<usize>, f64)>, |best, v| match best {
            Some(b) if b.1 >= v.1 => Some(b),
            _ => Some(v),
        })
        .map(|v| v.0.clone());
    Enumerated {
        log_z,
        unary,
        pairwise,
        argmax,
    }
}

/// Random chain with a random mask, `num_tags ≤ 3` and `len ≤ 4`.
pub fn random_instance(rng: &mut impl Rng) -> (ChainCrf, EmissionTable) {
    let t = rng.gen_range(1..=3);
    let len = rng.gen_range(1..=4);
    let mut mask = ConstraintMask::unconstrained(t);
    for b in mask
        .transitions
        .iter_mut()
        .chain(mask.start.iter_mut())
        .chain(mask.end.iter_mut())
    {
        *b = rng.gen_bool(0.8);
    }
    let mut crf = ChainCrf::new(mask);
    for x in crf
        .transitions
        .iter_mut()
        .chain(crf.start.iter_mut())
        .chain(crf.end.iter_mut())
    {
        *x = rng.gen_range(-3.0..3.0);
    }
    let scores: Vec<f64> = (0..len * t).map(|_| rng.gen_range(-3.0..3.0)).collect();
    (crf, EmissionTable::from_flat(scores, t))
}

/// Naive leftmost-longest: at each position try every surface and keep
/// the longest one that starts there.
pub fn naive_leftmost_longest(surfaces: &[Vec<char>], text: &[char]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < text.len() {
        let best = surfaces
            .iter()
            .filter(|s| !s.is_empty() && text[pos..].starts_with(s))
            .map(Vec::len)
            .max();
        match best {
            Some(l) => {
                out.push((pos, pos + l));
                pos += l;
            }
            None => pos += 1,
        }
    }
    out
}

/// All `(start, end)` occurrences of every surface.
pub fn naive_all_occurrences(surfaces: &[Vec<char>], text: &[char]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for start in 0..text.len() {
        for s in surfaces {
            if !s.is_empty() && text[start..].starts_with(s) {
                out.push((start, start + s.len()));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Relative error with a floor on the denominator.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Random non-overlapping spans over `len` characters.
pub fn random_spans(rng: &mut impl Rng, len: usize, labels: &[&str]) -> Vec<wsner::corpus::Span> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < len {
        pos += rng.gen_range(0..4);
        if pos >= len {
            break;
        }
        let end = (pos + rng.gen_range(1..5)).min(len);
        let label = labels[rng.gen_range(0..labels.len())];
        out.push(wsner::corpus::Span::new(pos, end, label));
        pos = end;
    }
    out
}
