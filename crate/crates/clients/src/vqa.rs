//! Filling a corpus with VQA answers, one cell per (item, prompt).

use std::path::Path;

use serde::{Deserialize, Serialize};
use tgaicc::model::{Corpus, Prompt};

use crate::backend::{ChatBackend, VqaRequest};
use crate::config::ClientConfig;
use crate::error::{ClientError, Result};
use crate::pool::run_bounded;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub item_id: String,
    pub prompt_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VqaSummary {
    /// Cells that already had text and were not requested.
    pub skipped: usize,
    pub filled: usize,
    pub failures: Vec<CellFailure>,
}

/// `(item index, prompt index)` of every cell without text, item-major.
pub fn pending_cells(corpus: &Corpus, prompts: &[Prompt]) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for (i, item) in corpus.items.iter().enumerate() {
        for (p, prompt) in prompts.iter().enumerate() {
            if item.texts.get(&prompt.prompt_id).is_none_or(|t| t.trim().is_empty()) {
                cells.push((i, p));
            }
        }
    }
    cells
}

/// Requests every missing cell, `batch_size` cells at a time with at most
/// `max_concurrency` requests in flight. After each batch the corpus is
/// written atomically to `progress`, so an interrupted run resumes where it
/// stopped. Cells that still fail after retries are reported, not fatal.
pub fn vqa_generate(
    corpus: &mut Corpus,
    prompts: &[Prompt],
    backend: &dyn ChatBackend,
    config: &ClientConfig,
    progress: Option<&Path>,
) -> Result<VqaSummary> {
    config.validate()?;
    let pending = pending_cells(corpus, prompts);
    if let Some(&(i, _)) = pending.iter().find(|&&(i, _)| corpus.items[i].image_ref.is_none()) {
        return Err(ClientError::MissingImage(corpus.items[i].item_id.clone()));
    }
    let mut summary = VqaSummary {
        skipped: corpus.items.len() * prompts.len() - pending.len(),
        ..Default::default()
    };

    for batch in pending.chunks(config.batch_size) {
        let requests: Vec<VqaRequest> = batch
            .iter()
            .map(|&(i, p)| VqaRequest {
                image_ref: corpus.items[i].image_ref.clone(),
                prompt: prompts[p].text.clone(),
                model: config.model.clone(),
            })
            .collect();
        let replies = run_bounded(&requests, config.max_concurrency, |request| {
            config.retry.run(|| {
                let response = backend.complete(request)?;
                if response.text.trim().is_empty() {
                    return Err(ClientError::Protocol("empty response text".into()));
                }
                Ok(response.text)
            })
        });
        for (&(i, p), reply) in batch.iter().zip(replies) {
            let item = &mut corpus.items[i];
            match reply {
                Ok(text) => {
                    item.texts.insert(prompts[p].prompt_id.clone(), text);
                    summary.filled += 1;
                }
                Err(e) => summary.failures.push(CellFailure {
                    item_id: item.item_id.clone(),
                    prompt_id: prompts[p].prompt_id.clone(),
                    error: e.to_string(),
                }),
            }
        }
        if let Some(path) = progress {
            corpus.save_jsonl_atomic(path)?;
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RetryPolicy;
    use crate::mock::MockChat;
    use tgaicc::model::{Category, ItemRecord, PromptSpec};

    fn fixture(n: usize) -> (Corpus, Vec<Prompt>) {
        let items = (0..n)
            .map(|i| {
                let mut item = ItemRecord::new(format!("c{i}"));
                item.image_ref = Some(format!("c{i}.png"));
                item
            })
            .collect();
        let spec = PromptSpec::new(vec![Category::new("suit", 4, "Which suit?")]);
        (Corpus::new(items), spec.prompts())
    }

    fn config() -> ClientConfig {
        ClientConfig {
            retry: RetryPolicy::immediate(3),
            batch_size: 3,
            max_concurrency: 2,
            ..Default::default()
        }
    }

    #[test]
    fn fills_every_cell() {
        let (mut corpus, prompts) = fixture(4);
        let mock = MockChat::new(|r| Ok(format!("card: {}", r.image_ref.as_deref().unwrap())));
        let s = vqa_generate(&mut corpus, &prompts, &mock, &config(), None).unwrap();
        assert_eq!((s.filled, s.skipped, s.failures.len()), (8, 0, 0));
        assert_eq!(corpus.items[2].texts["suit.0.concise"], "card: c2.png");
        assert_eq!(corpus.items[2].texts["suit.0"], "card: c2.png");
        assert_eq!(mock.request_count(), 8);
        let concise = mock.requests().into_iter().filter(|r| r.prompt.ends_with("Answer concisely.")).count();
        assert_eq!(concise, 4);
    }

    #[test]
    fn filled_cells_are_skipped() {
        let (mut corpus, prompts) = fixture(3);
        corpus.items[1].texts.insert("suit.0".into(), "hearts".into());
        let mock = MockChat::echo();
        let s = vqa_generate(&mut corpus, &prompts, &mock, &config(), None).unwrap();
        assert_eq!((s.filled, s.skipped), (5, 1));
        assert_eq!(corpus.items[1].texts["suit.0"], "hearts");

        let again = MockChat::echo();
        let s = vqa_generate(&mut corpus, &prompts, &again, &config(), None).unwrap();
        assert_eq!((s.filled, s.skipped), (0, 6));
        assert_eq!(again.request_count(), 0);
    }

    #[test]
    fn transient_failures_are_retried() {
        let (mut corpus, prompts) = fixture(2);
        let mock = MockChat::echo().fail_transiently(Some("c1.png"), "Which suit?", 2);
        let s = vqa_generate(&mut corpus, &prompts, &mock, &config(), None).unwrap();
        assert!(s.failures.is_empty());
        assert_eq!(corpus.items[1].texts["suit.0"], "c1.png | Which suit?");
        assert_eq!(mock.request_count(), 6);

        let (mut corpus, prompts) = fixture(2);
        let mock = MockChat::echo().fail_transiently(Some("c1.png"), "Which suit?", 3);
        let s = vqa_generate(&mut corpus, &prompts, &mock, &config(), None).unwrap();
        assert_eq!(s.failures.len(), 1);
        assert_eq!((s.failures[0].item_id.as_str(), s.failures[0].prompt_id.as_str()), ("c1", "suit.0"));
        assert!(!corpus.items[1].texts.contains_key("suit.0"));
    }

    #[test]
    fn empty_replies_are_failures() {
        let (mut corpus, prompts) = fixture(1);
        let s = vqa_generate(&mut corpus, &prompts, &MockChat::fixed("  "), &config(), None).unwrap();
        assert_eq!(s.failures.len(), 2);
        assert!(corpus.items[0].texts.is_empty());
    }

    #[test]
    fn missing_images_fail_before_any_request() {
        let (mut corpus, prompts) = fixture(2);
        corpus.items[1].image_ref = None;
        let mock = MockChat::echo();
        let err = vqa_generate(&mut corpus, &prompts, &mock, &config(), None).unwrap_err();
        assert!(matches!(err, ClientError::MissingImage(id) if id == "c1"));
        assert_eq!(mock.request_count(), 0);
    }

    #[test]
    fn interrupted_runs_resume_from_the_progress_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let (mut corpus, prompts) = fixture(5);
        let cut = MockChat::echo().with_budget(4);
        let s = vqa_generate(&mut corpus, &prompts, &cut, &ClientConfig { max_concurrency: 1, ..config() }, Some(&path))
            .unwrap();
        assert_eq!(s.filled, 4);

        let mut resumed = Corpus::load_jsonl(&path).unwrap();
        let done: Vec<(Option<String>, String)> = cut.requests().into_iter().take(4).map(|r| (r.image_ref, r.prompt)).collect();
        let mock = MockChat::echo();
        let s = vqa_generate(&mut resumed, &prompts, &mock, &config(), Some(&path)).unwrap();
        assert_eq!((s.filled, s.skipped), (6, 4));
        assert!(mock.requests().iter().all(|r| !done.contains(&(r.image_ref.clone(), r.prompt.clone()))));
        assert!(pending_cells(&Corpus::load_jsonl(&path).unwrap(), &prompts).is_empty());
    }
}
