//! Generating paraphrases of a category's initial question.

use std::collections::HashSet;

use tgaicc::model::question_key;

use crate::backend::{ChatBackend, VqaRequest};
use crate::config::ClientConfig;
use crate::error::{ClientError, Result};

pub const PARAPHRASE_COUNT: usize = 3;

pub fn paraphrase_request(initial_prompt: &str) -> String {
    format!("Generate three diverse paraphrases for the following question: {initial_prompt}")
}

/// One paraphrase per non-empty line. List markers (`1.`, `2)`, `-`, `*`)
/// and surrounding quotes are stripped. If any line carries a marker, only
/// marked lines count, which drops preambles like "Here are three:". Lines
/// equal to the initial question or to an earlier line are dropped.
pub fn parse_paraphrases(raw: &str, initial_prompt: &str) -> Result<Vec<String>> {
    let lines: Vec<(bool, &str)> = raw.lines().map(clean_line).collect();
    let listed = lines.iter().any(|&(marked, _)| marked);
    let mut seen: HashSet<String> = HashSet::from([question_key(initial_prompt)]);
    let mut out = Vec::new();
    for (marked, text) in lines {
        if (marked || !listed) && !text.is_empty() && seen.insert(question_key(text)) {
            out.push(text.to_string());
        }
    }
    if out.len() < PARAPHRASE_COUNT {
        return Err(ClientError::Paraphrase {
            found: out.len(),
            raw: raw.to_string(),
        });
    }
    out.truncate(PARAPHRASE_COUNT);
    Ok(out)
}

/// Returns whether the line had a list marker, and the cleaned text.
fn clean_line(line: &str) -> (bool, &str) {
    let mut s = line.trim();
    let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    let marked = if digits > 0 && s[digits..].starts_with(['.', ')', ':']) {
        s = &s[digits + 1..];
        true
    } else if s.starts_with(['-', '*', '•']) {
        s = &s[s.chars().next().map_or(0, char::len_utf8)..];
        true
    } else {
        false
    };
    (marked, s.trim().trim_matches(|c| c == '"' || c == '“' || c == '”').trim())
}

pub fn paraphrase(initial_prompt: &str, backend: &dyn ChatBackend, config: &ClientConfig) -> Result<Vec<String>> {
    let request = VqaRequest {
        image_ref: None,
        prompt: paraphrase_request(initial_prompt),
        model: config.model.clone(),
    };
    let response = config.retry.run(|| backend.complete(&request))?;
    parse_paraphrases(&response.text, initial_prompt)
}
