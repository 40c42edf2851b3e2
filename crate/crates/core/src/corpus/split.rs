use super::Sentence;

/// Sentence-final punctuation used when no delimiter set is configured.
pub const DEFAULT_DELIMITERS: &[char] = &['。', '！', '？', '；', '\n'];

/// Splits text after every delimiter, keeping the delimiter attached.
#[derive(Debug, Clone)]
pub struct Splitter {
    delimiters: Vec<char>,
    id_prefix: String,
}

impl Default for Splitter {
    fn default() -> Self {
        Splitter {
            delimiters: DEFAULT_DELIMITERS.to_vec(),
            id_prefix: "s".to_owned(),
        }
    }
}

impl Splitter {
    pub fn new(delimiters: impl IntoIterator<Item = char>) -> Self {
        Splitter {
            delimiters: delimiters.into_iter().collect(),
            ..Default::default()
        }
    }

    /// Ids are `<prefix><n>` with `n` counting from 0.
    pub fn with_id_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.id_prefix = prefix.into();
        self
    }

    pub fn split_text<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, c) in text.char_indices() {
            if self.delimiters.contains(&c) {
                let end = i + c.len_utf8();
                out.push(&text[start..end]);
                start = end;
            }
        }
        if start < text.len() {
            out.push(&text[start..]);
        }
        out
    }

    pub fn split(&self, text: &str) -> Vec<Sentence> {
        self.split_text(text)
            .into_iter()
            .enumerate()
            .map(|(n, piece)| Sentence::new(format!("{}{n}", self.id_prefix), piece))
            .collect()
    }
}

/// Splits with the default delimiters and id prefix `s`.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    Splitter::default().split(text)
}
