//! Aho-Corasick automaton over `char`s with leftmost-longest selection.
//!
//! The trie is built breadth-first from the sorted surface list, so every
//! node's children occupy a contiguous, char-sorted range of the edge arrays
//! and node ids are in BFS order (parents before children). Failure links
//! and dictionary-suffix links are filled in by a second pass in id order.

use std::collections::VecDeque;

use super::NameDictionary;
use crate::corpus::Span;
use crate::error::{Error, Result};

const ROOT: u32 = 0;
const NONE: u32 = u32::MAX;

/// One occurrence of a dictionary surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occurrence {
    pub start: usize,
    pub end: usize,
    /// Index into [`Matcher::labels`].
    pub label: u32,
}

#[derive(Debug, Clone)]
pub struct Matcher {
    /// `edge_start[u]..edge_start[u + 1]` are the outgoing edges of node `u`.
    edge_start: Vec<u32>,
    edge_char: Vec<char>,
    edge_target: Vec<u32>,
    fail: Vec<u32>,
    /// Nearest proper suffix state that ends a surface.
    dict_link: Vec<u32>,
    /// Label index if this node ends a surface.
    terminal: Vec<u32>,
    depth: Vec<u32>,
    labels: Vec<String>,
    num_patterns: usize,
}

impl Matcher {
    /// Compiles the automaton. Fails on an empty dictionary.
    pub fn build(dictionary: &NameDictionary) -> Result<Self> {
        let mut patterns: Vec<(Vec<char>, u32)> = Vec::with_capacity(dictionary.len());
        let mut labels: Vec<String> = Vec::new();
        for e in dictionary.entries() {
            let label = match labels.iter().position(|l| *l == e.label) {
                Some(i) => i as u32,
                None => {
                    labels.push(e.label.clone());
                    (labels.len() - 1) as u32
                }
            };
            patterns.push((e.surface.chars().collect(), label));
        }
        Self::from_patterns(patterns, labels)
    }

    fn from_patterns(mut patterns: Vec<(Vec<char>, u32)>, labels: Vec<String>) -> Result<Self> {
        patterns.retain(|(p, _)| !p.is_empty());
        if patterns.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        patterns.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        patterns.dedup_by(|a, b| a.0 == b.0);
        let num_patterns = patterns.len();

        let mut m = Matcher {
            edge_start: Vec::new(),
            edge_char: Vec::new(),
            edge_target: Vec::new(),
            fail: vec![ROOT],
            dict_link: vec![NONE],
            terminal: vec![NONE],
            depth: vec![0],
            labels,
            num_patterns,
        };

        // (node, lo, hi): patterns[lo..hi] share the node's prefix.
        let mut queue: VecDeque<(u32, usize, usize)> = VecDeque::new();
        queue.push_back((ROOT, 0, patterns.len()));
        while let Some((node, mut lo, hi)) = queue.pop_front() {
            debug_assert_eq!(m.edge_start.len(), node as usize);
            m.edge_start.push(m.edge_char.len() as u32);
            let d = m.depth[node as usize] as usize;
            if patterns[lo].0.len() == d {
                m.terminal[node as usize] = patterns[lo].1;
                lo += 1;
            }
            let mut i = lo;
            while i < hi {
                let c = patterns[i].0[d];
                let mut j = i + 1;
                while j < hi && patterns[j].0[d] == c {
                    j += 1;
                }
                let child = m.fail.len() as u32;
                m.edge_char.push(c);
                m.edge_target.push(child);

                m.fail.push(ROOT);
                m.dict_link.push(NONE);
                m.terminal.push(NONE);
                m.depth.push(d as u32 + 1);
                queue.push_back((child, i, j));
                i = j;
            }
        }
        m.edge_start.push(m.edge_char.len() as u32);
        m.link();
        Ok(m)
    }

    /// Fills failure and dictionary links. Node ids are in BFS order, so every
    /// link target is final before it is read.
    fn link(&mut self) {
        for node in 0..self.fail.len() as u32 {
            let (lo, hi) = (
                self.edge_start[node as usize] as usize,
                self.edge_start[node as usize + 1] as usize,
            );
            for e in lo..hi {
                let (c, child) = (self.edge_char[e], self.edge_target[e]);
                let fail = if node == ROOT {
                    ROOT
                } else {
                    let mut f = self.fail[node as usize];
                    loop {
                        if let Some(t) = self.goto(f, c) {
                            break t;
                        }
                        if f == ROOT {
                            break ROOT;
                        }
                        f = self.fail[f as usize];
                    }
                };
                self.fail[child as usize] = fail;
                self.dict_link[child as usize] = if self.terminal[fail as usize] != NONE {
                    fail
                } else {
                    self.dict_link[fail as usize]
                };
            }
        }
    }

    #[inline]
    fn goto(&self, node: u32, c: char) -> Option<u32> {
        let lo = self.edge_start[node as usize] as usize;
        let hi = self.edge_start[node as usize + 1] as usize;
        let chars = &self.edge_char[lo..hi];
        chars
            .binary_search(&c)
            .ok()
            .map(|k| self.edge_target[lo + k])
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_patterns(&self) -> usize {
        self.num_patterns
    }

    pub fn num_states(&self) -> usize {
        self.fail.len()
    }

    /// Approximate heap footprint of the compiled automaton in bytes.
    pub fn heap_bytes(&self) -> usize {
        4 * (self.edge_start.len()
            + self.edge_char.len()
            + self.edge_target.len()
            + self.fail.len()
            + self.dict_link.len()
            + self.terminal.len()
            + self.depth.len())
    }

    /// Calls `f(end, state)` for every terminal state reached, including
    /// through dictionary links.
    fn scan(&self, text: &[char], mut f: impl FnMut(usize, u32)) {
        let mut state = ROOT;
        for (pos, &c) in text.iter().enumerate() {
            loop {
                if let Some(t) = self.goto(state, c) {
                    state = t;
                    break;
                }
                if state == ROOT {
                    break;
                }
                state = self.fail[state as usize];
            }
            let mut s = if self.terminal[state as usize] != NONE {
                state
            } else {
                self.dict_link[state as usize]
            };
            while s != NONE {
                f(pos + 1, s);
                s = self.dict_link[s as usize];
            }
        }
    }

    /// Every (possibly overlapping) occurrence, sorted by `(start, end)`.
    pub fn find_all(&self, text: &str) -> Vec<Occurrence> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        self.scan(&chars, |end, s| {
            out.push(Occurrence {
                start: end - self.depth[s as usize] as usize,
                end,
                label: self.terminal[s as usize],
            })
        });
        out.sort_unstable();
        out
    }

    /// Leftmost-longest non-overlapping matches over a char slice.
    pub fn match_chars(&self, text: &[char]) -> Vec<Occurrence> {
        // longest[start] = (end, label) of the longest surface starting at `start`.
        let mut longest: Vec<(u32, u32)> = vec![(0, NONE); text.len()];
        self.scan(text, |end, s| {
            let start = end - self.depth[s as usize] as usize;
            if end as u32 > longest[start].0 {
                longest[start] = (end as u32, self.terminal[s as usize]);
            }
        });
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let (end, label) = longest[pos];
            if label != NONE {
                out.push(Occurrence {
                    start: pos,
                    end: end as usize,
                    label,
                });
                pos = end as usize;
            } else {
                pos += 1;
            }
        }
        out
    }

    /// Leftmost-longest selection: at each position take the longest surface
    /// starting there and skip past it.
    pub fn find(&self, text: &str) -> Vec<Span> {
        let chars: Vec<char> = text.chars().collect();
        self.match_chars(&chars)
            .into_iter()
            .map(|o| Span::new(o.start, o.end, self.labels[o.label as usize].clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matcher(surfaces: &[&str]) -> Matcher {
        let mut d = NameDictionary::new(1);
        for s in surfaces {
            d.add(s);
        }
        Matcher::build(&d).unwrap()
    }

    #[test]
    fn single_pattern() {
        let m = matcher(&["ACME"]);
        assert_eq!(m.find("xACMEx"), vec![Span::new(1, 5, "COM")]);
    }

    #[test]
    fn empty_dictionary_is_an_error() {
        assert!(matches!(
            Matcher::build(&NameDictionary::default()),
            Err(Error::EmptyDictionary)
        ));
    }

    #[test]
    fn prefers_longest_at_leftmost_start() {
        let m = matcher(&["ACME", "ACME CORP"]);
        assert_eq!(m.find("ACME CORP wins"), vec![Span::new(0, 9, "COM")]);
    }

    #[test]
    fn drops_overlapping_later_match() {
        let m = matcher(&["AB", "BC"]);
        assert_eq!(m.find("ABC"), vec![Span::new(0, 2, "COM")]);
        assert!(m.find("").is_empty());
    }

    #[test]
    fn find_all_reports_overlaps_via_dict_links() {
        let m = matcher(&["he", "she", "his", "hers"]);
        let occ: Vec<(usize, usize)> = m
            .find_all("ushers")
            .iter()
            .map(|o| (o.start, o.end))
            .collect();
        assert_eq!(occ, [(1, 4), (2, 4), (2, 6)]);
    }

    #[test]
    fn multibyte_indices_are_scalar_values() {
        let m = matcher(&["华鑫科技"]);
        assert_eq!(m.find("据悉华鑫科技发布"), vec![Span::new(2, 6, "COM")]);
    }

    #[test]
    fn labels_are_carried() {
        let mut d = NameDictionary::new(1);
        d.insert("Acme", "ORG", super::super::Provenance::Original);
        d.add("Beta");
        let m = Matcher::build(&d).unwrap();
        assert_eq!(
            m.find("Beta Acme"),
            vec![Span::new(0, 4, "COM"), Span::new(5, 9, "ORG")]
        );
    }
}
