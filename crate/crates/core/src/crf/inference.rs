//! Forward-backward and Viterbi over a linear chain, in log space.
//!
//! Forbidden moves carry the sentinel score [`FORBIDDEN`] rather than
//! `-inf`, so sums of forbidden terms stay finite and never produce NaN.

use super::ChainCrf;
use crate::emitter::EmissionTable;
use crate::error::{Error, Result};

/// Score of a masked-out move.
pub const FORBIDDEN: f64 = -1e30;

#[inline]
pub(crate) fn is_forbidden(x: f64) -> bool {
    x <= FORBIDDEN / 2.0
}

#[inline]
fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if is_forbidden(max) {
        return FORBIDDEN;
    }
    let sum: f64 = values.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Posterior marginals and the log-partition of one sentence.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub num_tags: usize,
    pub log_z: f64,
    /// `p(y_i = y)`, row-major `len × num_tags`.
    pub unary: Vec<f64>,
    /// `Σ_i p(y_{i-1} = a, y_i = b)`, row-major `num_tags × num_tags`.
    pub pairwise: Vec<f64>,
}

impl Marginals {
    pub fn unary(&self, i: usize, y: usize) -> f64 {
        self.unary[i * self.num_tags + y]
    }

    pub fn pair(&self, a: usize, b: usize) -> f64 {
        self.pairwise[a * self.num_tags + b]
    }
}

impl ChainCrf {
    fn check_shape(&self, em: &EmissionTable) -> Result<()> {
        if em.num_tags() != self.num_tags {
            return Err(Error::ShapeMismatch {
                id: String::new(),
                message: format!(
                    "emission table has {} tag columns, model has {}",
                    em.num_tags(),
                    self.num_tags
                ),
            });
        }
        Ok(())
    }

    /// Transition scores with forbidden moves replaced by the sentinel.
    fn effective(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let pick = |allowed: &[bool], scores: &[f64]| -> Vec<f64> {
            allowed
                .iter()
                .zip(scores)
                .map(|(&ok, &s)| if ok { s } else { FORBIDDEN })
                .collect()
        };
        (
            pick(&self.mask.transitions, &self.transitions),
            pick(&self.mask.start, &self.start),
            pick(&self.mask.end, &self.end),
        )
    }

    fn forward(&self, em: &EmissionTable, trans: &[f64], start: &[f64]) -> Vec<f64> {
        let t = self.num_tags;
        let len = em.len();
        let mut alpha = vec![0.0; len * t];
        for y in 0..t {
            alpha[y] = start[y] + em.get(0, y);
        }
        for i in 1..len {
            let (prev, cur) = alpha.split_at_mut(i * t);
            let prev = &prev[(i - 1) * t..];
            for y in 0..t {
                let lse = log_sum_exp((0..t).map(|a| prev[a] + trans[a * t + y]));
                cur[y] = if is_forbidden(lse) {
                    FORBIDDEN
                } else {
                    lse + em.get(i, y)
                };
            }
        }
        alpha
    }

    /// `log Σ_y exp(score(x, y))` over all mask-valid tag sequences.
    pub fn log_partition(&self, em: &EmissionTable) -> Result<f64> {
        self.check_shape(em)?;
        if em.is_empty() {
            return Ok(0.0);
        }
        let (trans, start, end) = self.effective();
        let alpha = self.forward(em, &trans, &start);
        let t = self.num_tags;
        let last = &alpha[(em.len() - 1) * t..];
        let log_z = log_sum_exp((0..t).map(|y| last[y] + end[y]));
        if is_forbidden(log_z) {
            return Err(Error::Infeasible);
        }
        Ok(log_z)
    }

    /// Forward-backward: log-partition plus unary and summed pairwise marginals.
    pub fn marginals(&self, em: &EmissionTable) -> Result<Marginals> {
        self.check_shape(em)?;
        let t = self.num_tags;
        let len = em.len();
        if len == 0 {
            return Ok(Marginals {
                num_tags: t,
                log_z: 0.0,
                unary: Vec::new(),
                pairwise: vec![0.0; t * t],
            });
        }
        let (trans, start, end) = self.effective();
        let alpha = self.forward(em, &trans, &start);
        let last = &alpha[(len - 1) * t..];
        let log_z = log_sum_exp((0..t).map(|y| last[y] + end[y]));
        if is_forbidden(log_z) {
            return Err(Error::Infeasible);
        }

        let mut beta = vec![0.0; len * t];
        beta[(len - 1) * t..].copy_from_slice(&end);
        for i in (0..len - 1).rev() {
            let (cur, next) = beta.split_at_mut((i + 1) * t);
            let cur = &mut cur[i * t..];
            let next = &next[..t];
            for y in 0..t {
                cur[y] = log_sum_exp((0..t).map(|b| trans[y * t + b] + em.get(i + 1, b) + next[b]));
            }
        }

        let mut unary = vec![0.0; len * t];
        for (k, u) in unary.iter_mut().enumerate() {
            *u = (alpha[k] + beta[k] - log_z).exp();
        }
        let mut pairwise = vec![0.0; t * t];
        for i in 1..len {
            for a in 0..t {
                let fa = alpha[(i - 1) * t + a];
                if is_forbidden(fa) {
                    continue;
                }
                for b in 0..t {
                    let s = fa + trans[a * t + b] + em.get(i, b) + beta[i * t + b] - log_z;
                    pairwise[a * t + b] += s.exp();
                }
            }
        }
        Ok(Marginals {
            num_tags: t,
            log_z,
            unary,
            pairwise,
        })
    }

    /// Unnormalized score of `tags`. Fails if the sequence uses a forbidden move.
    pub fn score(&self, em: &EmissionTable, tags: &[usize]) -> Result<f64> {
        self.check_shape(em)?;
        if tags.len() != em.len() {
            return Err(Error::ShapeMismatch {
                id: String::new(),
                message: format!("{} tags for {} positions", tags.len(), em.len()),
            });
        }
        let t = self.num_tags;
        let Some((&first, _)) = tags.split_first() else {
            return Ok(0.0);
        };
        if tags.iter().any(|&y| y >= t) {
            return Err(Error::InvalidGold {
                position: tags.iter().position(|&y| y >= t).unwrap(),
            });
        }
        if !self.mask.start[first] {
            return Err(Error::InvalidGold { position: 0 });
        }
        let mut s = self.start[first] + em.get(0, first);
        for i in 1..tags.len() {
            let (a, b) = (tags[i - 1], tags[i]);
            if !self.mask.transitions[a * t + b] {
                return Err(Error::InvalidGold { position: i });
            }
            s += self.transitions[a * t + b] + em.get(i, b);
        }
        let last = tags[tags.len() - 1];
        if !self.mask.end[last] {
            return Err(Error::InvalidGold {
                position: tags.len() - 1,
            });
        }
        Ok(s + self.end[last])
    }

    /// Highest-scoring mask-valid sequence. Ties go to the lowest tag index.
    pub fn viterbi(&self, em: &EmissionTable) -> Result<Vec<usize>> {
        self.check_shape(em)?;
        if em.is_empty() {
            return Ok(Vec::new());
        }
        match self.num_tags {
            3 => self.viterbi_fixed::<3>(em),
            5 => self.viterbi_fixed::<5>(em),
            7 => self.viterbi_fixed::<7>(em),
            _ => self.viterbi_dyn(em),
        }
    }

    fn masked_end(&self) -> impl Iterator<Item = f64> + '_ {
        self.end
            .iter()
            .zip(&self.mask.end)
            .map(|(&s, &ok)| if ok { s } else { FORBIDDEN })
    }

    fn viterbi_fixed<const T: usize>(&self, em: &EmissionTable) -> Result<Vec<usize>> {
        let len = em.len();
        let m = &self.mask;
        let mut into = [[0.0; T]; T];
        for (y, col) in into.iter_mut().enumerate() {
            for (a, c) in col.iter_mut().enumerate() {
                let k = a * T + y;
                *c = if m.transitions[k] {
                    self.transitions[k]
                } else {
                    FORBIDDEN
                };
            }
        }
        let scores = em.as_slice();
        let mut delta = [0.0; T];
        for y in 0..T {
            delta[y] = if m.start[y] { self.start[y] } else { FORBIDDEN } + scores[y];
        }
        let mut back = vec![[0u8; T]; len];
        for (row, bp) in scores.chunks_exact(T).zip(back.iter_mut()).skip(1) {
            let mut next = [0.0; T];
            for y in 0..T {
                let col = &into[y];
                let mut best = delta[0] + col[0];
                let mut arg = 0;
                for a in 1..T {
                    let s = delta[a] + col[a];
                    if s > best {
                        best = s;
                        arg = a;
                    }
                }
                next[y] = if is_forbidden(best) {
                    FORBIDDEN
                } else {
                    best + row[y]
                };
                bp[y] = arg as u8;
            }
            delta = next;
        }
        let (best, arg) = self
            .masked_end()
            .zip(delta)
            .map(|(e, d)| d + e)
            .enumerate()
            .fold(
                (f64::NEG_INFINITY, 0),
                |(b, k), (y, s)| if s > b { (s, y) } else { (b, k) },
            );
        if is_forbidden(best) {
            return Err(Error::Infeasible);
        }
        let mut tags = vec![0usize; len];
        tags[len - 1] = arg;
        for i in (1..len).rev() {
            tags[i - 1] = back[i][tags[i]] as usize;
        }
        Ok(tags)
    }

    fn viterbi_dyn(&self, em: &EmissionTable) -> Result<Vec<usize>> {
        let t = self.num_tags;
        let len = em.len();
        let m = &self.mask;
        let masked = |ok: bool, s: f64| if ok { s } else { FORBIDDEN };
        // Column-major so the inner loop over predecessors is contiguous.
        let mut into = Vec::with_capacity(t * t);
        for y in 0..t {
            into.extend(
                (0..t).map(|a| masked(m.transitions[a * t + y], self.transitions[a * t + y])),
            );
        }
        let mut delta: Vec<f64> = (0..t)
            .map(|y| masked(m.start[y], self.start[y]) + em.get(0, y))
            .collect();
        let mut next = vec![0.0; t];
        let mut back = vec![0u32; len * t];
        for (i, back_row) in back.chunks_exact_mut(t).enumerate().skip(1) {
            let row = em.row(i);
            for (((col, n), b), &e) in into
                .chunks_exact(t)
                .zip(next.iter_mut())
                .zip(back_row)
                .zip(row)
            {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for (a, (&d, &tr)) in delta.iter().zip(col).enumerate() {
                    let s = d + tr;
                    if s > best {
                        best = s;
                        arg = a;
                    }
                }
                *n = if is_forbidden(best) {
                    FORBIDDEN
                } else {
                    best + e
                };
                *b = arg as u32;
            }
            std::mem::swap(&mut delta, &mut next);
        }
        let (best, arg) = self
            .masked_end()
            .zip(delta)
            .map(|(e, d)| d + e)
            .enumerate()
            .fold(
                (f64::NEG_INFINITY, 0),
                |(b, k), (y, s)| if s > b { (s, y) } else { (b, k) },
            );
        if is_forbidden(best) {
            return Err(Error::Infeasible);
        }
        let mut tags = vec![0usize; len];
        tags[len - 1] = arg;
        for i in (1..len).rev() {
            tags[i - 1] = back[i * t + tags[i]] as usize;
        }
        Ok(tags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::ConstraintMask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unrolled_viterbi_matches_general_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in [3, 5, 7] {
            for _ in 0..200 {
                let mut mask = ConstraintMask::unconstrained(t);
                for b in mask
                    .transitions
                    .iter_mut()
                    .chain(&mut mask.start)
                    .chain(&mut mask.end)
                {
                    *b = rng.gen_bool(0.85);
                }
                let mut crf = ChainCrf::new(mask);
                // Small integers make ties common.
                for x in crf
                    .transitions
                    .iter_mut()
                    .chain(&mut crf.start)
                    .chain(&mut crf.end)
                {
                    *x = rng.gen_range(-2..=2) as f64;
                }
                let len = rng.gen_range(1..10);
                let scores = (0..len * t).map(|_| rng.gen_range(-2..=2) as f64).collect();
                let em = EmissionTable::from_flat(scores, t);
                let fast = crf.viterbi(&em);
                let slow = crf.viterbi_dyn(&em);
                match (fast, slow) {
                    (Ok(a), Ok(b)) => assert_eq!(a, b),
                    (Err(Error::Infeasible), Err(Error::Infeasible)) => {}
                    other => panic!("{other:?}"),
                }
            }
        }
    }
}
