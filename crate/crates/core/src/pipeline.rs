//! End-to-end runs, baselines and evaluation reports.
//!
//! A run clusters each prompt's texts with its category's target count,
//! groups the resulting clusterings by AMI distance, aggregates every group
//! into one output clustering and scores the outputs against the ground
//! truths. Everything is repeated per seed and averaged.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{assign_targets, run_all, select, Method};
use crate::error::{Error, Result};
use crate::explain::{explain_group, ExplainOptions, Explanation};
use crate::featurize::{tfidf, DenseSource, FeatureMatrix};
use crate::grouping::{pairwise_distances, single_linkage, threshold_search, Strategy};
use crate::kmeans::kmeans;
use crate::matching::max_weight_matching;
use crate::metrics::{ami, ari, MetricScore};
use crate::model::{validate_corpus, Corpus, Ensemble, EnsembleMember, Labeling, Prompt, PromptSpec, Representation};

pub const REPORT_SCHEMA: &str = "tgaicc-report/1";
pub const DEFAULT_SEEDS: std::ops::RangeInclusive<u64> = 0..=9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Consensus,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// Only clusterings from the configured representation.
    PerRep,
    /// Clusterings from both representations in one ensemble.
    Mixed,
}

macro_rules! str_enum {
    ($ty:ty, $what:literal, $($variant:path => $name:literal),+) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(concat!("unknown ", $what, " `{}`"), other))),
                }
            }
        }
    };
}

str_enum!(Aggregation, "aggregation", Aggregation::Consensus => "consensus", Aggregation::Concat => "concat");
str_enum!(Scope, "ensemble scope", Scope::PerRep => "per-rep", Scope::Mixed => "mixed");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub representation: Representation,
    pub strategy: Strategy,
    pub aggregation: Aggregation,
    pub seeds: Vec<u64>,
    pub scope: Scope,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            representation: Representation::Tfidf,
            strategy: Strategy::Max,
            aggregation: Aggregation::Consensus,
            seeds: DEFAULT_SEEDS.collect(),
            scope: Scope::PerRep,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }

    fn representations(&self) -> Vec<Representation> {
        match self.scope {
            Scope::PerRep => vec![self.representation],
            Scope::Mixed => vec![Representation::Tfidf, Representation::Dense],
        }
    }
}

/// A score pair on the 0–100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub ari: f64,
    pub ami: f64,
}

impl Scores {
    pub fn between(output: &Labeling, truth: &Labeling) -> Result<Self> {
        Ok(Self {
            ari: ari(output, truth)?.scaled_value,
            ami: ami(output, truth)?.scaled_value,
        })
    }

    fn mean(scores: &[Scores]) -> Option<Scores> {
        if scores.is_empty() {
            return None;
        }
        let len = scores.len() as f64;
        Some(Scores {
            ari: scores.iter().map(|s| s.ari).sum::<f64>() / len,
            ami: scores.iter().map(|s| s.ami).sum::<f64>() / len,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub method: Method,
    pub anmi: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    /// Member clusterings as `{representation}:{prompt_id}`.
    pub members: Vec<String>,
    /// Member count per category name.
    pub votes: BTreeMap<String, usize>,
    /// Category matched by vote; `None` for surplus groups of an approximate grouping.
    pub category: Option<String>,
    pub target_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingRecord {
    pub threshold: f64,
    pub strategy: Strategy,
    pub approximate: bool,
    pub groups: Vec<GroupRecord>,
}

/// One output clustering of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Group index for runs, prompt id for the prompt baseline, category
    /// name for the concatenation baseline.
    pub source: String,
    pub k: usize,
    pub method: Option<Method>,
    pub anmi: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateRecord>,
    pub truth: Option<String>,
    pub scores: Option<Scores>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub grouping: Option<GroupingRecord>,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAverage {
    pub truth: String,
    /// Output source for per-prompt cells; absent for per-truth cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Number of scored outputs averaged.
    pub count: usize,
    pub scores: Scores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportMode {
    Tgaicc,
    AvgPrompt,
    ConcatCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub mode: ReportMode,
    pub config: RunConfig,
    pub n_items: usize,
    pub runs: Vec<SeedRun>,
    /// Per-truth means over every scored output of every seed.
    pub averages: Vec<CellAverage>,
    /// Per-output-source means (prompt baseline only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub source_averages: Vec<CellAverage>,
    /// Mean of the per-truth averages.
    pub overall: Option<Scores>,
}

impl EvalReport {
    fn new(mode: ReportMode, config: &RunConfig, corpus: &Corpus, runs: Vec<SeedRun>) -> Self {
        let mut by_truth: BTreeMap<String, Vec<Scores>> = BTreeMap::new();
        let mut by_source: BTreeMap<(String, String), Vec<Scores>> = BTreeMap::new();
        for run in &runs {
            for output in &run.outputs {
                if let (Some(truth), Some(scores)) = (&output.truth, output.scores) {
                    by_truth.entry(truth.clone()).or_default().push(scores);
                    by_source
                        .entry((truth.clone(), output.source.clone()))
                        .or_default()
                        .push(scores);
                }
            }
        }
        let averages: Vec<CellAverage> = by_truth
            .into_iter()
            .map(|(truth, scores)| CellAverage {
                count: scores.len(),
                scores: Scores::mean(&scores).expect("non-empty"),
                truth,
                source: None,
            })
            .collect();
        let source_averages = if mode == ReportMode::AvgPrompt {
            by_source
                .into_iter()
                .map(|((truth, source), scores)| CellAverage {
                    count: scores.len(),
                    scores: Scores::mean(&scores).expect("non-empty"),
                    truth,
                    source: Some(source),
                })
                .collect()
        } else {
            Vec::new()
        };
        let overall = Scores::mean(&averages.iter().map(|a| a.scores).collect::<Vec<_>>());
        Self {
            schema: REPORT_SCHEMA.to_string(),
            mode,
            config: config.clone(),
            n_items: corpus.n(),
            runs,
            averages,
            source_averages,
            overall,
        }
    }

    pub fn average_for(&self, truth: &str) -> Option<Scores> {
        self.averages.iter().find(|a| a.truth == truth).map(|a| a.scores)
    }

    /// Pretty JSON with a trailing newline; identical inputs give identical bytes.
    pub fn to_json(&self) -> Result<String> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        Ok(json)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Ground-truth labelings in category order; categories without truths are skipped.
pub fn truths(corpus: &Corpus, spec: &PromptSpec) -> Result<Vec<(String, Labeling)>> {
    spec.categories
        .iter()
        .filter(|c| corpus.has_truths(&[c.name.as_str()]))
        .map(|c| Ok((c.name.clone(), corpus.truth(&c.name)?)))
        .collect()
}

/// Pairs outputs with truths one-to-one, maximizing the summed AMI. Ties
/// go to lower truth indices, outputs taken in order.
pub fn match_outputs_to_truths(
    outputs: &[Labeling],
    truths: &[Labeling],
    approximate: bool,
) -> Result<Vec<Option<usize>>> {
    if outputs.len() != truths.len() && !approximate {
        return Err(Error::GroupCountMismatch {
            expected: truths.len(),
            got: outputs.len(),
        });
    }
    let weights = outputs
        .iter()
        .map(|o| truths.iter().map(|t| ami(o, t).map(|s| s.value)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let order: Vec<usize> = (0..outputs.len()).collect();
    max_weight_matching(&weights, &order)
}

fn check_inputs(corpus: &Corpus, spec: &PromptSpec, config: &RunConfig) -> Result<()> {
    config.validate()?;
    let issues = validate_corpus(corpus, spec);
    if !issues.is_empty() {
        return Err(Error::Validation(issues));
    }
    Ok(())
}

fn featurize(
    texts: &[String],
    key: &str,
    representation: Representation,
    dense: Option<&dyn DenseSource>,
) -> Result<FeatureMatrix> {
    match representation {
        Representation::Tfidf => tfidf(texts),
        Representation::Dense => dense
            .ok_or_else(|| Error::MissingEmbeddings(key.to_string()))?
            .dense_features(key, texts),
    }
}

struct PromptFeatures {
    prompt: Prompt,
    representation: Representation,
    target_k: usize,
    features: FeatureMatrix,
}

fn prompt_features(
    corpus: &Corpus,
    spec: &PromptSpec,
    representations: &[Representation],
    dense: Option<&dyn DenseSource>,
) -> Result<Vec<PromptFeatures>> {
    let jobs: Vec<(Representation, Prompt)> = representations
        .iter()
        .flat_map(|&r| spec.prompts().into_iter().map(move |p| (r, p)))
        .collect();
    jobs.into_par_iter()
        .map(|(representation, prompt)| {
            let target_k = spec
                .category(&prompt.category_name)
                .ok_or_else(|| Error::UnknownPrompt(prompt.prompt_id.clone()))?
                .target_k;
            let texts = corpus.texts_for(&prompt.prompt_id);
            let features = featurize(&texts, &prompt.prompt_id, representation, dense)?;
            Ok(PromptFeatures {
                prompt,
                representation,
                target_k,
                features,
            })
        })
        .collect()
}

/// Each item's texts for `prompt_ids`, joined with single spaces in the given order.
pub fn concatenated_texts(corpus: &Corpus, prompt_ids: &[String]) -> Vec<String> {
    corpus
        .items
        .iter()
        .map(|item| {
            prompt_ids
                .iter()
                .map(|p| item.texts.get(p).map_or("", String::as_str))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

fn concat_key(prompt_ids: &[String]) -> String {
    format!("concat.{}", prompt_ids.join("+"))
}

fn score_outputs(
    outputs: &mut [OutputRecord],
    labelings: &[Labeling],
    truths: &[(String, Labeling)],
    approximate: bool,
) -> Result<()> {
    if truths.is_empty() {
        return Ok(());
    }
    let truth_labelings: Vec<Labeling> = truths.iter().map(|(_, l)| l.clone()).collect();
    let matched = match_outputs_to_truths(labelings, &truth_labelings, approximate)?;
    for ((output, labeling), m) in outputs.iter_mut().zip(labelings).zip(matched) {
        if let Some(t) = m {
            output.truth = Some(truths[t].0.clone());
            output.scores = Some(Scores::between(labeling, &truths[t].1)?);
        }
    }
    Ok(())
}

/// The full method: cluster per prompt, group, aggregate, evaluate.
pub fn run_tgaicc(
    corpus: &Corpus,
    spec: &PromptSpec,
    config: &RunConfig,
    dense: Option<&dyn DenseSource>,
) -> Result<EvalReport> {
    check_inputs(corpus, spec, config)?;
    let features = prompt_features(corpus, spec, &config.representations(), dense)?;
    let truths = truths(corpus, spec)?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(corpus, spec, config, dense, &features, &truths, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(ReportMode::Tgaicc, config, corpus, runs))
}

fn run_seed(
    corpus: &Corpus,
    spec: &PromptSpec,
    config: &RunConfig,
    dense: Option<&dyn DenseSource>,
    features: &[PromptFeatures],
    truths: &[(String, Labeling)],
    seed: u64,
) -> Result<SeedRun> {
    let members = features
        .par_iter()
        .map(|f| {
            Ok(EnsembleMember {
                prompt_id: f.prompt.prompt_id.clone(),
                representation: f.representation,
                labeling: kmeans(&f.features.matrix, f.target_k, seed)?.labeling,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ensemble = Ensemble::new(members)?;
    let distances = pairwise_distances(&ensemble)?;
    let tree = single_linkage(&distances);
    let grouping = threshold_search(&tree, spec.t(), config.strategy);
    let targets = assign_targets(&grouping.groups, spec, &ensemble, grouping.approximate)?;

    let group_records: Vec<GroupRecord> = grouping
        .groups
        .iter()
        .enumerate()
        .map(|(g, group)| GroupRecord {
            members: group
                .iter()
                .map(|&m| {
                    let member = &ensemble.members()[m];
                    format!("{}:{}", member.representation, member.prompt_id)
                })
                .collect(),
            votes: spec
                .categories
                .iter()
                .zip(&targets.votes[g])
                .filter(|(_, &v)| v > 0)
                .map(|(c, &v)| (c.name.clone(), v))
                .collect(),
            category: targets.categories[g].map(|c| spec.categories[c].name.clone()),
            target_k: targets.targets[g],
        })
        .collect();

    let aggregated = grouping
        .groups
        .par_iter()
        .enumerate()
        .map(|(g, group)| {
            let k = targets.targets[g];
            let subset = ensemble.subset(group)?;
            match config.aggregation {
                Aggregation::Consensus => {
                    let attempts = run_all(&subset, k, seed);
                    let best = select(&attempts)?;
                    let candidates = attempts
                        .iter()
                        .map(|a| CandidateRecord {
                            method: a.method,
                            anmi: a.outcome.as_ref().ok().map(|c| c.anmi),
                            error: a.outcome.as_ref().err().cloned(),
                        })
                        .collect();
                    Ok((best.labeling, Some(best.method), Some(best.anmi), candidates))
                }
                Aggregation::Concat => {
                    let mut ids: Vec<String> = subset.members().iter().map(|m| m.prompt_id.clone()).collect();
                    ids.sort();
                    ids.dedup();
                    let texts = concatenated_texts(corpus, &ids);
                    let f = featurize(&texts, &concat_key(&ids), config.representation, dense)?;
                    Ok((kmeans(&f.matrix, k, seed)?.labeling, None, None, Vec::new()))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let labelings: Vec<Labeling> = aggregated.iter().map(|a| a.0.clone()).collect();
    let mut outputs: Vec<OutputRecord> = aggregated
        .into_iter()
        .enumerate()
        .map(|(g, (labeling, method, anmi, candidates))| OutputRecord {
            source: format!("group.{g}"),
            k: labeling.k(),
            method,
            anmi,
            candidates,
            truth: None,
            scores: None,
            labels: labeling.labels().to_vec(),
        })
        .collect();
    score_outputs(&mut outputs, &labelings, truths, grouping.approximate)?;

    Ok(SeedRun {
        seed,
        grouping: Some(GroupingRecord {
            threshold: grouping.threshold,
            strategy: grouping.strategy,
            approximate: grouping.approximate,
            groups: group_records,
        }),
        outputs,
    })
}

/// Every prompt clustered alone and scored against its own category's truth.
pub fn baseline_avg_prompt(
    corpus: &Corpus,
    spec: &PromptSpec,
    config: &RunConfig,
    dense: Option<&dyn DenseSource>,
) -> Result<EvalReport> {
    check_inputs(corpus, spec, config)?;
    let features = prompt_features(corpus, spec, &[config.representation], dense)?;
    let truths = truths(corpus, spec)?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let outputs = features
                .par_iter()
                .map(|f| {
                    let labeling = kmeans(&f.features.matrix, f.target_k, seed)?.labeling;
                    let truth = truths.iter().find(|(name, _)| *name == f.prompt.category_name);
                    Ok(OutputRecord {
                        source: f.prompt.prompt_id.clone(),
                        k: labeling.k(),
                        method: None,
                        anmi: None,
                        candidates: Vec::new(),
                        truth: truth.map(|(name, _)| name.clone()),
                        scores: truth.map(|(_, t)| Scores::between(&labeling, t)).transpose()?,
                        labels: labeling.labels().to_vec(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SeedRun {
                seed,
                grouping: None,
                outputs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(ReportMode::AvgPrompt, config, corpus, runs))
}

/// Per category, every item's texts across the category's prompts joined and
/// clustered once.
pub fn baseline_concat_category(
    corpus: &Corpus,
    spec: &PromptSpec,
    config: &RunConfig,
    dense: Option<&dyn DenseSource>,
) -> Result<EvalReport> {
    check_inputs(corpus, spec, config)?;
    let truths = truths(corpus, spec)?;
    let features = spec
        .categories
        .par_iter()
        .map(|category| {
            let mut ids: Vec<String> = category.prompts().into_iter().map(|p| p.prompt_id).collect();
            ids.sort();
            let texts = concatenated_texts(corpus, &ids);
            let f = featurize(&texts, &concat_key(&ids), config.representation, dense)?;
            Ok((category, f))
        })
        .collect::<Result<Vec<_>>>()?;
    let runs = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let outputs = features
                .iter()
                .map(|(category, f)| {
                    let labeling = kmeans(&f.matrix, category.target_k, seed)?.labeling;
                    let truth = truths.iter().find(|(name, _)| *name == category.name);
                    Ok(OutputRecord {
                        source: category.name.clone(),
                        k: labeling.k(),
                        method: None,
                        anmi: None,
                        candidates: Vec::new(),
                        truth: truth.map(|(name, _)| name.clone()),
                        scores: truth.map(|(_, t)| Scores::between(&labeling, t)).transpose()?,
                        labels: labeling.labels().to_vec(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SeedRun {
                seed,
                grouping: None,
                outputs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::new(ReportMode::ConcatCategory, config, corpus, runs))
}

/// Word explanations for the groups of one seed's grouping. Each group's
/// texts are those of its member prompts, and `z` is its target count.
pub fn explain_run(corpus: &Corpus, run: &SeedRun, options: &ExplainOptions) -> Result<Vec<Explanation>> {
    let grouping = run
        .grouping
        .as_ref()
        .ok_or_else(|| Error::Config("this run has no grouping to explain".into()))?;
    Ok(grouping
        .groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let mut ids: Vec<String> = group
                .members
                .iter()
                .map(|m| m.split_once(':').map_or(m.as_str(), |(_, p)| p).to_string())
                .collect();
            ids.sort();
            ids.dedup();
            let texts: Vec<String> = ids.iter().flat_map(|p| corpus.texts_for(p)).collect();
            explain_group(g, &texts, group.target_k, options)
        })
        .collect())
}

/// Scores an externally produced clustering against one truth.
pub fn evaluate_labels(output: &Labeling, truth: &Labeling) -> Result<(MetricScore, MetricScore)> {
    Ok((ari(output, truth)?, ami(output, truth)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{cards, CardsOptions};

    fn small_config(seeds: Vec<u64>) -> RunConfig {
        RunConfig {
            seeds,
            ..Default::default()
        }
    }

    #[test]
    fn config_defaults_and_parsing() {
        let c = RunConfig::default();
        assert_eq!(c.seeds, (0..10).collect::<Vec<u64>>());
        assert_eq!(c.strategy, Strategy::Max);
        assert_eq!("per-rep".parse::<Scope>().unwrap(), Scope::PerRep);
        assert_eq!("concat".parse::<Aggregation>().unwrap(), Aggregation::Concat);
        assert!("both".parse::<Scope>().is_err());
        assert!(small_config(vec![]).validate().is_err());
    }

    #[test]
    fn matching_outputs_to_truths() {
        let a = Labeling::new(&[0, 0, 1, 1, 2, 2]).unwrap();
        let b = Labeling::new(&[0, 1, 0, 1, 0, 1]).unwrap();
        assert_eq!(
            match_outputs_to_truths(&[a.clone(), b.clone()], &[a.clone(), b.clone()], false).unwrap(),
            vec![Some(0), Some(1)]
        );
        assert_eq!(
            match_outputs_to_truths(&[b.clone(), a.clone()], &[a.clone(), b.clone()], false).unwrap(),
            vec![Some(1), Some(0)]
        );
        assert!(match_outputs_to_truths(std::slice::from_ref(&a), &[a.clone(), b.clone()], false).is_err());
        assert_eq!(
            match_outputs_to_truths(std::slice::from_ref(&a), &[a.clone(), b], true).unwrap(),
            vec![Some(0)]
        );
    }

    #[test]
    fn cards_run_recovers_both_categories() {
        let f = cards(CardsOptions::default());
        let report = run_tgaicc(&f.corpus, &f.spec, &small_config(vec![0, 1]), None).unwrap();
        for run in &report.runs {
            let grouping = run.grouping.as_ref().unwrap();
            assert_eq!(grouping.groups.len(), 2);
            assert!(!grouping.approximate);
            for group in &grouping.groups {
                assert_eq!(group.votes.len(), 1, "{group:?}");
            }
        }
        assert!(report.average_for("rank").unwrap().ari >= 95.0);
        assert!(report.average_for("suit").unwrap().ari >= 95.0);
    }

    #[test]
    fn reports_are_deterministic_and_averages_consistent() {
        let f = cards(CardsOptions {
            variants: 2,
            ..Default::default()
        });
        let config = small_config(vec![7]);
        let a = run_tgaicc(&f.corpus, &f.spec, &config, None).unwrap().to_json().unwrap();
        let b = run_tgaicc(&f.corpus, &f.spec, &config, None).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let report = EvalReport::from_json(&a).unwrap();
        assert_eq!(report.schema, REPORT_SCHEMA);
        for cell in &report.averages {
            let scores: Vec<Scores> = report
                .runs
                .iter()
                .flat_map(|r| &r.outputs)
                .filter(|o| o.truth.as_deref() == Some(cell.truth.as_str()))
                .filter_map(|o| o.scores)
                .collect();
            let mean = Scores::mean(&scores).unwrap();
            assert!((mean.ari - cell.scores.ari).abs() <= 1e-12);
            assert!((mean.ami - cell.scores.ami).abs() <= 1e-12);
        }
    }

    #[test]
    fn prompt_baseline_average_lies_within_member_scores() {
        let f = cards(CardsOptions {
            variants: 4,
            ..Default::default()
        });
        let report = baseline_avg_prompt(&f.corpus, &f.spec, &small_config(vec![0, 1, 2]), None).unwrap();
        assert_eq!(report.source_averages.len(), 12);
        for cell in &report.averages {
            let members: Vec<f64> = report
                .source_averages
                .iter()
                .filter(|s| s.truth == cell.truth)
                .map(|s| s.scores.ari)
                .collect();
            let lo = members.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = members.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo - 1e-9 <= cell.scores.ari && cell.scores.ari <= hi + 1e-9);
        }
    }

    #[test]
    fn concat_of_one_distinct_text_matches_the_prompt_baseline() {
        // With one question per category and concise answers equal to the
        // plain ones, concatenation only doubles term counts, which TF-IDF
        // normalization removes.
        let f = cards(CardsOptions {
            variants: 2,
            ..Default::default()
        });
        let mut spec = f.spec.clone();
        for c in &mut spec.categories {
            c.paraphrases.clear();
        }
        let mut corpus = f.corpus.clone();
        for item in &mut corpus.items {
            item.texts.retain(|k, _| k.ends_with(".0"));
            let copies: Vec<(String, String)> =
                item.texts.iter().map(|(k, v)| (format!("{k}.concise"), v.clone())).collect();
            item.texts.extend(copies);
        }
        let config = small_config(vec![0, 1]);
        let avg = baseline_avg_prompt(&corpus, &spec, &config, None).unwrap();
        let concat = baseline_concat_category(&corpus, &spec, &config, None).unwrap();
        for truth in ["rank", "suit"] {
            let a = avg.average_for(truth).unwrap();
            let c = concat.average_for(truth).unwrap();
            assert!((a.ari - c.ari).abs() < 1e-9 && (a.ami - c.ami).abs() < 1e-9, "{truth}");
        }
    }

    #[test]
    fn concat_baseline_recovers_cards() {
        let f = cards(CardsOptions::default());
        let report = baseline_concat_category(&f.corpus, &f.spec, &small_config(vec![0, 1, 2]), None).unwrap();
        assert!(report.average_for("rank").unwrap().ari >= 95.0);
        assert!(report.average_for("suit").unwrap().ari >= 95.0);
    }

    #[test]
    fn dense_runs_need_embeddings() {
        let f = cards(CardsOptions {
            variants: 1,
            ..Default::default()
        });
        let config = RunConfig {
            representation: Representation::Dense,
            ..small_config(vec![0])
        };
        assert!(matches!(
            run_tgaicc(&f.corpus, &f.spec, &config, None),
            Err(Error::MissingEmbeddings(_))
        ));
    }

    #[test]
    fn invalid_corpus_is_rejected() {
        let mut f = cards(CardsOptions {
            variants: 1,
            ..Default::default()
        });
        f.corpus.items[0].texts.clear();
        assert!(matches!(
            run_tgaicc(&f.corpus, &f.spec, &small_config(vec![0]), None),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn suit_group_explanation_names_the_suits() {
        let f = cards(CardsOptions::default());
        let report = run_tgaicc(&f.corpus, &f.spec, &small_config(vec![0]), None).unwrap();
        let explanations = explain_run(&f.corpus, &report.runs[0], &ExplainOptions::default()).unwrap();
        let suit = explanations.iter().find(|e| e.z == 4).unwrap();
        let mut words: Vec<&str> = suit.words.iter().map(|w| w.word.as_str()).collect();
        words.sort();
        assert_eq!(words, vec!["club", "diamond", "heart", "spade"]);
    }
}
