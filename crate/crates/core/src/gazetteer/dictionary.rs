use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_LABEL;
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Abbreviation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub surface: String,
    pub provenance: Provenance,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insert {
    Added,
    Duplicate,
    TooShort,
}

/// Gazetteer: unique surface forms with label and provenance.
#[derive(Debug, Clone)]
pub struct NameDictionary {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    min_surface_len: usize,
}

impl Default for NameDictionary {
    fn default() -> Self {
        Self::new(2)
    }
}

impl NameDictionary {
    pub fn new(min_surface_len: usize) -> Self {
        NameDictionary {
            entries: Vec::new(),
            index: HashMap::new(),
            min_surface_len: min_surface_len.max(1),
        }
    }

    pub fn min_surface_len(&self) -> usize {
        self.min_surface_len
    }

    pub fn insert(&mut self, surface: &str, label: &str, provenance: Provenance) -> Insert {
        if surface.chars().count() < self.min_surface_len {
            return Insert::TooShort;
        }
        if self.index.contains_key(surface) {
            return Insert::Duplicate;
        }
        self.index.insert(surface.to_owned(), self.entries.len());
        self.entries.push(Entry {
            surface: surface.to_owned(),
            provenance,
            label: label.to_owned(),
        });
        Insert::Added
    }

    pub fn add(&mut self, surface: &str) -> Insert {
        self.insert(surface, DEFAULT_LABEL, Provenance::Original)
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.index.contains_key(surface)
    }

    pub fn get(&self, surface: &str) -> Option<&Entry> {
        self.index.get(surface).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds abbreviations of every original entry. Returns how many were new.
    pub fn expand_abbreviations(&mut self, rules: &[AbbreviationRule]) -> usize {
        let originals: Vec<(String, String)> = self
            .entries
            .iter()
            .filter(|e| e.provenance == Provenance::Original)
            .map(|e| (e.surface.clone(), e.label.clone()))
            .collect();
        let mut added = 0;
        for (surface, label) in originals {
            for abbr in generate_abbreviations(&surface, rules) {
                if self.insert(&abbr, &label, Provenance::Abbreviation) == Insert::Added {
                    added += 1;
                }
            }
        }
        added
    }

    /// Parses the dictionary text format: one surface per line with an
    /// optional tab-separated label; `#` starts a comment line.
    pub fn parse(text: &str, min_surface_len: usize) -> Self {
        let mut dict = NameDictionary::new(min_surface_len);
        for line in text.lines() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, label) = match line.split_once('\t') {
                Some((s, l)) if !l.trim().is_empty() => (s, l.trim()),
                Some((s, _)) => (s, DEFAULT_LABEL),
                None => (line, DEFAULT_LABEL),
            };
            match dict.insert(surface, label, Provenance::Original) {
                Insert::TooShort => log::debug!("skipping short dictionary surface `{surface}`"),
                Insert::Duplicate => {
                    log::debug!("skipping duplicate dictionary surface `{surface}`")
                }
                Insert::Added => {}
            }
        }
        dict
    }

    pub fn load(path: &Path, min_surface_len: usize) -> Result<Self> {
        Ok(Self::parse(&fsutil::read_to_string(path)?, min_surface_len))
    }

    /// Serializes original entries (labels other than the default are written after a tab).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in self
            .entries
            .iter()
            .filter(|e| e.provenance == Provenance::Original)
        {
            out.push_str(&e.surface);
            if e.label != DEFAULT_LABEL {
                out.push('\t');
                out.push_str(&e.label);
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::atomic_write(path, self.to_text().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    StripSuffix,
    StripPrefix,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbbreviationRule {
    pub kind: RuleKind,
    pub pattern: String,
    #[serde(default = "default_min_remainder")]
    pub min_remainder: usize,
}

fn default_min_remainder() -> usize {
    2
}

impl AbbreviationRule {
    pub fn strip_suffix(pattern: impl Into<String>) -> Self {
        Self::new(RuleKind::StripSuffix, pattern, 2)
    }

    pub fn strip_prefix(pattern: impl Into<String>) -> Self {
        Self::new(RuleKind::StripPrefix, pattern, 2)
    }

    pub fn new(kind: RuleKind, pattern: impl Into<String>, min_remainder: usize) -> Self {
        AbbreviationRule {
            kind,
            pattern: pattern.into(),
            min_remainder: min_remainder.max(2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pattern.is_empty() {
            return Err(Error::Config(
                "abbreviation pattern must be non-empty".into(),
            ));
        }
        Ok(())
    }

    pub fn apply<'a>(&self, name: &'a str) -> Option<&'a str> {
        if self.pattern.is_empty() {
            return None;
        }
        let rest = match self.kind {
            RuleKind::StripSuffix => name.strip_suffix(self.pattern.as_str()),
            RuleKind::StripPrefix => name.strip_prefix(self.pattern.as_str()),
        }?;
        (rest.chars().count() >= self.min_remainder).then_some(rest)
    }

    /// Legal-form suffixes of Chinese and English company names.
    ///
    /// Each rule is applied to the full name independently, so nested forms
    /// (`集团股份有限公司`, `股份有限公司`, `有限公司`) all fire on one name.
    /// The list is illustrative; real deployments supply their own.
    pub fn default_rules() -> Vec<AbbreviationRule> {
        [
            "集团股份有限公司",
            "控股股份有限公司",
            "股份有限公司",
            "有限责任公司",
            "控股有限公司",
            "集团有限公司",
            "有限公司",
            " Co., Ltd.",
            " Corporation",
            " Inc.",
            " Ltd.",
        ]
        .into_iter()
        .map(AbbreviationRule::strip_suffix)
        .collect()
    }
}

/// Applies each rule to `name` once; results are deduplicated in rule order.
pub fn generate_abbreviations(name: &str, rules: &[AbbreviationRule]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for rule in rules {
        if let Some(rest) = rule.apply(name) {
            if rest != name && !out.iter().any(|o| o == rest) {
                out.push(rest.to_owned());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_suffix_rule() {
        let rule = AbbreviationRule::strip_suffix(" Co., Ltd.");
        assert_eq!(
            generate_abbreviations("Acme Heavy Industry Co., Ltd.", std::slice::from_ref(&rule)),
            ["Acme Heavy Industry"]
        );
        assert!(generate_abbreviations("Acme", std::slice::from_ref(&rule)).is_empty());
        assert!(generate_abbreviations("X Co., Ltd.", &[rule]).is_empty());
    }

    #[test]
    fn strip_prefix_and_dedup() {
        let rules = vec![
            AbbreviationRule::strip_prefix("中国"),
            AbbreviationRule::strip_prefix("中国"),
            AbbreviationRule::strip_suffix("有限公司"),
        ];
        assert_eq!(
            generate_abbreviations("中国华鑫有限公司", &rules),
            ["华鑫有限公司", "中国华鑫"]
        );
    }

    #[test]
    fn default_rules_cover_nested_legal_forms() {
        let got = generate_abbreviations(
            "华鑫科技集团股份有限公司",
            &AbbreviationRule::default_rules(),
        );
        assert_eq!(got, ["华鑫科技", "华鑫科技集团", "华鑫科技集团股份"]);
    }

    #[test]
    fn dictionary_invariants() {
        let mut d = NameDictionary::default();
        assert_eq!(d.add("华鑫"), Insert::Added);
        assert_eq!(d.add("华鑫"), Insert::Duplicate);
        assert_eq!(d.add("华"), Insert::TooShort);
        assert_eq!(d.add(""), Insert::TooShort);
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn parses_text_format() {
        let d = NameDictionary::parse("# header\n华鑫科技\nAcme\tORG\nX\n\nBeta\t\n", 2);
        assert_eq!(d.len(), 3);
        assert_eq!(d.get("Acme").unwrap().label, "ORG");
        assert_eq!(d.get("Beta").unwrap().label, "COM");
        assert_eq!(d.to_text(), "华鑫科技\nAcme\tORG\nBeta\n");
    }

    #[test]
    fn expansion_marks_provenance() {
        let mut d = NameDictionary::default();
        d.add("华鑫科技股份有限公司");
        d.add("华鑫科技");
        let added = d.expand_abbreviations(&AbbreviationRule::default_rules());
        assert_eq!(added, 1);
        assert!(d.contains("华鑫科技股份"));
        d.add("恒泰有限公司");
        assert_eq!(
            d.expand_abbreviations(&AbbreviationRule::default_rules()),
            1
        );
        assert_eq!(d.get("恒泰").unwrap().provenance, Provenance::Abbreviation);
    }
}
