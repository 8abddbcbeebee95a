//! Word-frequency explanations for clusterings.
//!
//! The texts behind a group of prompts are split into words, lowercased and
//! singularized, stopwords are dropped, and the `z` most frequent words are
//! reported.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Plural-looking words that the suffix rules would mangle.
pub const DEFAULT_EXCEPTIONS: &[&str] = &["glasses", "news", "series", "species"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplainOptions {
    /// Stored normalized.
    stopwords: BTreeSet<String>,
    exceptions: BTreeSet<String>,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self::new(
            DEFAULT_STOPWORDS.lines(),
            DEFAULT_EXCEPTIONS.iter().copied(),
        )
    }
}

impl ExplainOptions {
    /// Stopword entries are split and normalized like the texts, so "don't"
    /// filters both "don" and "t".
    pub fn new<'a>(
        stopwords: impl IntoIterator<Item = &'a str>,
        exceptions: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let exceptions: BTreeSet<String> = exceptions.into_iter().map(str::to_lowercase).collect();
        let stopwords = stopwords
            .into_iter()
            .flat_map(words)
            .map(|w| normalize_with(&w, &exceptions))
            .collect();
        Self {
            stopwords,
            exceptions,
        }
    }

    /// No stopwords, default exceptions.
    pub fn unfiltered() -> Self {
        Self::new([], DEFAULT_EXCEPTIONS.iter().copied())
    }

    /// One stopword per line, UTF-8.
    pub fn with_stopword_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::new(text.lines(), DEFAULT_EXCEPTIONS.iter().copied()))
    }

    pub fn add_stopword(&mut self, word: &str) {
        for w in words(word) {
            let normalized = normalize_with(&w, &self.exceptions);
            self.stopwords.insert(normalized);
        }
    }

    /// Filters every word of the given prompts, so answers that repeat the
    /// question do not dominate the counts.
    pub fn filter_prompt_echo<'a>(&mut self, prompts: impl IntoIterator<Item = &'a str>) {
        for prompt in prompts {
            self.add_stopword(prompt);
        }
    }

    pub fn is_stopword(&self, normalized: &str) -> bool {
        self.stopwords.contains(normalized)
    }

    pub fn normalize(&self, token: &str) -> String {
        normalize_with(token, &self.exceptions)
    }
}

/// Lowercase alphanumeric runs, including single characters.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|run| !run.is_empty())
        .map(str::to_lowercase)
}

/// Lowercases and singularizes with the default exceptions.
pub fn normalize_word(token: &str) -> String {
    let exceptions: BTreeSet<String> = DEFAULT_EXCEPTIONS.iter().map(|s| s.to_string()).collect();
    normalize_with(token, &exceptions)
}

fn normalize_with(token: &str, exceptions: &BTreeSet<String>) -> String {
    let word = token.to_lowercase();
    if exceptions.contains(&word) {
        return word;
    }
    if let Some(stem) = word.strip_suffix("ies") {
        return format!("{stem}y");
    }
    if let Some(stem) = word.strip_suffix("ses") {
        return format!("{stem}s");
    }
    if word.chars().count() > 3 && word.ends_with('s') && !word.ends_with("ss") {
        return word[..word.len() - 1].to_string();
    }
    word
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCount {
    pub word: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub group: usize,
    pub z: usize,
    /// Most frequent first; equal counts in lexicographic order.
    pub words: Vec<WordCount>,
    /// Fewer than `z` distinct words survived filtering.
    pub short: bool,
}

pub fn word_counts(texts: &[String], options: &ExplainOptions) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for text in texts {
        for w in words(text) {
            let normalized = options.normalize(&w);
            if !options.is_stopword(&normalized) {
                *counts.entry(normalized).or_insert(0) += 1;
            }
        }
    }
    counts
}

pub fn explain_group(group: usize, texts: &[String], z: usize, options: &ExplainOptions) -> Explanation {
    let mut ranked: Vec<(String, usize)> = word_counts(texts, options).into_iter().collect();
    // The map is already in lexicographic order and the sort is stable.
    ranked.sort_by_key(|&(_, count)| std::cmp::Reverse(count));
    let short = ranked.len() < z;
    ranked.truncate(z);
    Explanation {
        group,
        z,
        words: ranked
            .into_iter()
            .map(|(word, count)| WordCount { word, count })
            .collect(),
        short,
    }
}
