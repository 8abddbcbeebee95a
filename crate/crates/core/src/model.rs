//! Shared data model: items, prompts, labelings and ensembles.
//!
//! A [`Labeling`] is always canonical: cluster ids are dense integers in
//! `[0, k)` numbered by order of first appearance, so two labelings describing
//! the same partition compare equal.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CONCISE_SUFFIX: &str = "Answer concisely.";

/// Assignment of `n` items to `k` clusters, in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Labeling {
    labels: Vec<usize>,
    k: usize,
}

impl Labeling {
    /// Canonicalizes arbitrary cluster ids.
    pub fn new(labels: &[usize]) -> Result<Self> {
        canonicalize(labels)
    }

    /// Builds a labeling from string cluster names (e.g. ground-truth labels).
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::EmptyLabeling);
        }
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let labels = names
            .iter()
            .map(|name| {
                let next = ids.len();
                *ids.entry(name.as_ref()).or_insert(next)
            })
            .collect();
        Ok(Self { labels, k: ids.len() })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Cluster sizes indexed by cluster id.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &label in &self.labels {
            sizes[label] += 1;
        }
        sizes
    }
}

impl TryFrom<Vec<usize>> for Labeling {
    type Error = Error;

    fn try_from(labels: Vec<usize>) -> Result<Self> {
        canonicalize(&labels)
    }
}

impl From<Labeling> for Vec<usize> {
    fn from(labeling: Labeling) -> Self {
        labeling.labels
    }
}

/// Renumbers cluster ids by order of first appearance.
pub fn canonicalize(labels: &[usize]) -> Result<Labeling> {
    if labels.is_empty() {
        return Err(Error::EmptyLabeling);
    }
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let canonical = labels
        .iter()
        .map(|&label| {
            let next = ids.len();
            *ids.entry(label).or_insert(next)
        })
        .collect();
    Ok(Labeling {
        labels: canonical,
        k: ids.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Tfidf,
    Dense,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Tfidf => "tfidf",
            Representation::Dense => "dense",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tfidf" => Ok(Representation::Tfidf),
            "dense" => Ok(Representation::Dense),
            other => Err(Error::Config(format!("unknown representation `{other}`"))),
        }
    }
}

/// One dataset item with its generated texts and optional ground truths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    #[serde(default)]
    pub image_ref: Option<String>,
    #[serde(default)]
    pub texts: BTreeMap<String, String>,
    #[serde(default)]
    pub truth_labels: Option<BTreeMap<String, String>>,
}

impl ItemRecord {
    pub fn new(item_id: impl Into<String>) -> Self {
        Self {
            item_id: item_id.into(),
            image_ref: None,
            texts: BTreeMap::new(),
            truth_labels: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub items: Vec<ItemRecord>,
}

impl Corpus {
    pub fn new(items: Vec<ItemRecord>) -> Self {
        Self { items }
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }

    /// The generated text of every item for one prompt, in item order.
    /// Missing cells read as empty documents.
    pub fn texts_for(&self, prompt_id: &str) -> Vec<String> {
        self.items
            .iter()
            .map(|item| item.texts.get(prompt_id).cloned().unwrap_or_default())
            .collect()
    }

    /// Ground-truth labeling for one category.
    pub fn truth(&self, category: &str) -> Result<Labeling> {
        let names = self
            .items
            .iter()
            .map(|item| {
                item.truth_labels
                    .as_ref()
                    .and_then(|truths| truths.get(category))
                    .map(String::as_str)
                    .ok_or_else(|| Error::MissingTruth {
                        item: item.item_id.clone(),
                        category: category.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Labeling::from_names(&names)
    }

    pub fn has_truths(&self, categories: &[&str]) -> bool {
        !self.items.is_empty()
            && self.items.iter().all(|item| {
                item.truth_labels
                    .as_ref()
                    .is_some_and(|truths| categories.iter().all(|c| truths.contains_key(*c)))
            })
    }

    /// Reads a JSON Lines corpus; blank lines are skipped.
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = BufReader::new(fs::File::open(path)?);
        let mut items = Vec::new();
        for (index, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let item = serde_json::from_str(&line).map_err(|source| Error::Parse {
                path: path.to_path_buf(),
                line: index + 1,
                source,
            })?;
            items.push(item);
        }
        Ok(Self { items })
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(item)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Writes the corpus through a temporary sibling file and a rename, so a
    /// crash never leaves a half-written corpus behind.
    pub fn save_jsonl_atomic(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_jsonl()?.as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One clustering aspect of the dataset, e.g. "suit" with four clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub target_k: usize,
    pub initial_prompt: String,
    #[serde(default)]
    pub paraphrases: Vec<String>,
    #[serde(default = "default_concise_suffix")]
    pub concise_suffix: String,
}

fn default_concise_suffix() -> String {
    DEFAULT_CONCISE_SUFFIX.to_string()
}

impl Category {
    pub fn new(name: impl Into<String>, target_k: usize, initial_prompt: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            target_k,
            initial_prompt: initial_prompt.into(),
            paraphrases: Vec::new(),
            concise_suffix: default_concise_suffix(),
        }
    }

    /// The initial question followed by its paraphrases, with repeats removed.
    pub fn base_questions(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        std::iter::once(self.initial_prompt.as_str())
            .chain(self.paraphrases.iter().map(String::as_str))
            .filter(|question| !question.trim().is_empty())
            .filter(|question| seen.insert(question_key(question)))
            .collect()
    }

    /// Every base question verbatim, then every base question with the
    /// concise directive appended. Ids are `{name}.{i}` and `{name}.{i}.concise`.
    pub fn prompts(&self) -> Vec<Prompt> {
        let questions = self.base_questions();
        let plain = questions.iter().enumerate().map(|(i, q)| Prompt {
            prompt_id: format!("{}.{i}", self.name),
            category_name: self.name.clone(),
            text: q.trim().to_string(),
            concise: false,
        });
        let concise = questions.iter().enumerate().map(|(i, q)| Prompt {
            prompt_id: format!("{}.{i}.concise", self.name),
            category_name: self.name.clone(),
            text: format!("{} {}", q.trim(), self.concise_suffix.trim()),
            concise: true,
        });
        plain.chain(concise).collect()
    }
}

/// Comparison key for prompt deduplication: case and whitespace are ignored.
pub fn question_key(question: &str) -> String {
    question
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub prompt_id: String,
    pub category_name: String,
    pub text: String,
    pub concise: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub categories: Vec<Category>,
}

impl PromptSpec {
    pub fn new(categories: Vec<Category>) -> Self {
        Self { categories }
    }

    pub fn t(&self) -> usize {
        self.categories.len()
    }

    pub fn prompts(&self) -> Vec<Prompt> {
        self.categories.iter().flat_map(Category::prompts).collect()
    }

    pub fn category(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    /// Index of the category a prompt id belongs to.
    pub fn category_of(&self, prompt_id: &str) -> Option<usize> {
        self.categories
            .iter()
            .position(|c| c.prompts().iter().any(|p| p.prompt_id == prompt_id))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }

    /// Structural problems of the prompt set itself.
    pub fn issues(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        if self.categories.is_empty() {
            issues.push(Issue::NoCategories);
        }
        let mut names = HashSet::new();
        let mut prompt_ids = HashSet::new();
        for category in &self.categories {
            if !names.insert(category.name.as_str()) {
                issues.push(Issue::DuplicateCategory(category.name.clone()));
            }
            if category.target_k < 2 {
                issues.push(Issue::TargetTooSmall {
                    category: category.name.clone(),
                    target_k: category.target_k,
                });
            }
            if category.base_questions().is_empty() {
                issues.push(Issue::NoPrompts(category.name.clone()));
            }
            for prompt in category.prompts() {
                if !prompt_ids.insert(prompt.prompt_id.clone()) {
                    issues.push(Issue::DuplicatePromptId(prompt.prompt_id));
                }
            }
        }
        issues
    }
}

/// One validation finding; issues are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Issue {
    EmptyCorpus,
    NoCategories,
    DuplicateCategory(String),
    TargetTooSmall { category: String, target_k: usize },
    NoPrompts(String),
    DuplicatePromptId(String),
    DuplicateItem(String),
    MissingText { item: String, prompt: String },
    UnknownPrompt { item: String, prompt: String },
    UnknownCategory { item: String, category: String },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::EmptyCorpus => write!(f, "corpus has no items"),
            Issue::NoCategories => write!(f, "prompt specification has no categories"),
            Issue::DuplicateCategory(name) => write!(f, "duplicate category `{name}`"),
            Issue::TargetTooSmall { category, target_k } => {
                write!(f, "category `{category}` has target_k={target_k} (< 2)")
            }
            Issue::NoPrompts(name) => write!(f, "category `{name}` has no prompts"),
            Issue::DuplicatePromptId(id) => write!(f, "duplicate prompt id `{id}`"),
            Issue::DuplicateItem(id) => write!(f, "duplicate item id `{id}`"),
            Issue::MissingText { item, prompt } => {
                write!(f, "item `{item}` has no text for prompt `{prompt}`")
            }
            Issue::UnknownPrompt { item, prompt } => {
                write!(f, "item `{item}` has text for unknown prompt `{prompt}`")
            }
            Issue::UnknownCategory { item, category } => {
                write!(f, "item `{item}` has a truth label for unknown category `{category}`")
            }
        }
    }
}

/// Checks a corpus against a prompt specification; an empty result means the
/// corpus is ready for clustering.
pub fn validate_corpus(corpus: &Corpus, spec: &PromptSpec) -> Vec<Issue> {
    let mut issues = spec.issues();
    if corpus.items.is_empty() {
        issues.push(Issue::EmptyCorpus);
    }
    let prompt_ids: Vec<String> = spec.prompts().into_iter().map(|p| p.prompt_id).collect();
    let known_prompts: HashSet<&str> = prompt_ids.iter().map(String::as_str).collect();
    let known_categories: HashSet<&str> = spec.categories.iter().map(|c| c.name.as_str()).collect();

    let mut seen = HashSet::new();
    for item in &corpus.items {
        if !seen.insert(item.item_id.as_str()) {
            issues.push(Issue::DuplicateItem(item.item_id.clone()));
        }
        for prompt_id in &prompt_ids {
            if !item.texts.contains_key(prompt_id) {
                issues.push(Issue::MissingText {
                    item: item.item_id.clone(),
                    prompt: prompt_id.clone(),
                });
            }
        }
        for prompt_id in item.texts.keys() {
            if !known_prompts.contains(prompt_id.as_str()) {
                issues.push(Issue::UnknownPrompt {
                    item: item.item_id.clone(),
                    prompt: prompt_id.clone(),
                });
            }
        }
        if let Some(truths) = &item.truth_labels {
            for category in truths.keys() {
                if !known_categories.contains(category.as_str()) {
                    issues.push(Issue::UnknownCategory {
                        item: item.item_id.clone(),
                        category: category.clone(),
                    });
                }
            }
        }
    }
    issues
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub prompt_id: String,
    pub representation: Representation,
    pub labeling: Labeling,
}

/// A non-empty list of clusterings over the same items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ensemble {
    members: Vec<EnsembleMember>,
}

impl Ensemble {
    pub fn new(members: Vec<EnsembleMember>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        let n = first.labeling.len();
        if let Some(bad) = members.iter().find(|m| m.labeling.len() != n) {
            return Err(Error::LengthMismatch {
                left: n,
                right: bad.labeling.len(),
            });
        }
        Ok(Self { members })
    }

    /// Wraps bare labelings, e.g. for tests or externally produced clusterings.
    pub fn from_labelings(labelings: impl IntoIterator<Item = Labeling>) -> Result<Self> {
        Self::new(
            labelings
                .into_iter()
                .enumerate()
                .map(|(i, labeling)| EnsembleMember {
                    prompt_id: format!("member.{i}"),
                    representation: Representation::Tfidf,
                    labeling,
                })
                .collect(),
        )
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Number of items every member labels.
    pub fn n(&self) -> usize {
        self.members[0].labeling.len()
    }

    pub fn labelings(&self) -> impl Iterator<Item = &Labeling> {
        self.members.iter().map(|m| &m.labeling)
    }

    /// The sub-ensemble formed by the given member indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.members[i].clone()).collect())
    }
}
