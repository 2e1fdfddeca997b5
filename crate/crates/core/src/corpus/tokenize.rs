use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use super::{CorpusError, RawReview};

const PINNED_STOPWORDS: &str = include_str!("../../assets/stopwords.txt");
const PINNED_DICTIONARY: &str = include_str!("../../assets/english_words.txt");

/// Which tokens survive preprocessing.
#[derive(Debug, Clone)]
pub struct FilterRules {
    pub stopwords: HashSet<String>,
    /// `None` disables the dictionary filter.
    pub dictionary: Option<HashSet<String>>,
    pub strip_html: bool,
    pub drop_numeric: bool,
    pub drop_punct: bool,
}

/// Words of the shipped dictionary and stopword lists, in file order.
pub(crate) fn pinned_lists() -> (Vec<&'static str>, Vec<&'static str>) {
    let lines = |t: &'static str| t.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    (lines(PINNED_DICTIONARY), lines(PINNED_STOPWORDS))
}

fn word_set(text: &str) -> HashSet<String> {
    text.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty()).collect()
}

impl FilterRules {
    /// Stopword and dictionary lists shipped with the crate.
    pub fn pinned() -> Self {
        Self::from_lists(PINNED_STOPWORDS, Some(PINNED_DICTIONARY))
    }

    /// Rules built from newline-separated word lists.
    pub fn from_lists(stopwords: &str, dictionary: Option<&str>) -> Self {
        Self {
            stopwords: word_set(stopwords),
            dictionary: dictionary.map(word_set),
            strip_html: true,
            drop_numeric: true,
            drop_punct: true,
        }
    }

    /// Load `stopwords.txt` / `english_words.txt` style files.
    pub fn from_files(stopwords: &Path, dictionary: Option<&Path>) -> Result<Self, CorpusError> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|source| CorpusError::Ingest { path: p.to_path_buf(), source });
        let stop = read(stopwords)?;
        let dict = dictionary.map(read).transpose()?;
        Ok(Self::from_lists(&stop, dict.as_deref()))
    }

    /// Rules from a directory holding `stopwords.txt` and `english_words.txt`.
    pub fn from_dir(dir: &Path) -> Result<Self, CorpusError> {
        Self::from_files(&dir.join("stopwords.txt"), Some(&dir.join("english_words.txt")))
    }

    fn keeps(&self, token: &str) -> bool {
        if self.drop_numeric && token.chars().any(|c| c.is_numeric()) {
            return false;
        }
        if self.stopwords.contains(token) {
            return false;
        }
        match &self.dictionary {
            Some(dict) => dict.contains(token),
            None => true,
        }
    }
}

fn html_tag() -> &'static Regex {
    static TAG: OnceLock<Regex> = OnceLock::new();
    TAG.get_or_init(|| Regex::new(r"<[^<>]*>").expect("valid pattern"))
}

/// Lowercase tokens of `text` that pass `rules`, in original order.
///
/// Tags are replaced by a space, then tokens are maximal runs of alphanumeric
/// characters. With `drop_punct` off, runs of other non-space characters are
/// kept as tokens of their own.
pub fn tokenize_text(text: &str, rules: &FilterRules) -> Vec<String> {
    let cleaned = if rules.strip_html { html_tag().replace_all(text, " ") } else { text.into() };
    let lower = cleaned.to_lowercase();
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut punct = String::new();
    let flush = |buf: &mut String, tokens: &mut Vec<String>| {
        if !buf.is_empty() {
            tokens.push(std::mem::take(buf));
        }
    };
    for ch in lower.chars() {
        if ch.is_alphanumeric() {
            if !punct.is_empty() {
                flush(&mut punct, &mut tokens);
            }
            word.push(ch);
        } else {
            flush(&mut word, &mut tokens);
            if ch.is_whitespace() || rules.drop_punct {
                flush(&mut punct, &mut tokens);
            } else {
                punct.push(ch);
            }
        }
    }
    flush(&mut word, &mut tokens);
    flush(&mut punct, &mut tokens);
    tokens.retain(|t| rules.keeps(t));
    tokens
}

pub fn tokenize_and_filter(review: &RawReview, rules: &FilterRules) -> Vec<String> {
    tokenize_text(&review.text, rules)
}
