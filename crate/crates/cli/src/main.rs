//! `tgaicc`: generate texts, cluster them, and evaluate alternative clusterings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tgaicc::explain::ExplainOptions;
use tgaicc::featurize::{DenseSource, EmbeddingDir};
use tgaicc::grouping::Strategy;
use tgaicc::model::{Corpus, Labeling, PromptSpec, Representation};
use tgaicc::pipeline::{
    baseline_avg_prompt, baseline_concat_category, concatenated_texts, explain_run, run_tgaicc, Aggregation,
    EvalReport, RunConfig, Scope, Scores,
};
use tgaicc::synthetic::{cards, CardsOptions};
use tgaicc_clients::{
    paraphrase, pending_cells, vqa_generate, ClientConfig, EmbeddingService, HttpBackend, VqaSummary,
};

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "tgaicc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill in three paraphrases for every category that has none.
    Paraphrase {
        #[arg(long)]
        prompts: PathBuf,
        /// Defaults to overwriting the prompts file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        client: ClientArgs,
    },
    /// Generate a VQA answer for every missing (item, prompt) cell.
    Vqa {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        /// Progress and result file; defaults to the corpus file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        client: ClientArgs,
    },
    /// Embed every prompt's texts and every category's joined texts into the cache.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[command(flatten)]
        client: ClientArgs,
    },
    /// Run the full method and write an evaluation report.
    Run(RunArgs),
    /// Run a baseline and write an evaluation report.
    Baseline {
        #[arg(value_enum)]
        kind: BaselineKind,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Most frequent words of each group's texts.
    Explain {
        /// Report written by `run`; without it the method is run first.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Seed whose grouping is explained; defaults to the first run.
        #[arg(long)]
        seed: Option<u64>,
        /// One stopword per line, replacing the bundled list.
        #[arg(long, conflicts_with = "no_stopwords")]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        no_stopwords: bool,
        /// Also drop every word that occurs in the group's prompts.
        #[arg(long)]
        filter_prompts: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write the synthetic playing-card corpus and its prompt file.
    Fixture {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long, default_value_t = 8)]
        variants: usize,
        /// Probability that a token is replaced by a filler word.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score externally produced labelings against the corpus truths.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON object mapping a name to one label (number or string) per item.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    AvgPrompt,
    Concat,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long = "rep", default_value = "tfidf", value_parser = parse_from_str::<Representation>)]
    representation: Representation,
    #[arg(long, default_value = "max", value_parser = parse_from_str::<Strategy>)]
    strategy: Strategy,
    #[arg(long = "agg", default_value = "consensus", value_parser = parse_from_str::<Aggregation>)]
    aggregation: Aggregation,
    #[arg(long, default_value = "per-rep", value_parser = parse_from_str::<Scope>)]
    scope: Scope,
    /// `0..9` (inclusive), `3`, or `1,4,7`.
    #[arg(long, default_value = "0..9", value_parser = parse_seeds)]
    seeds: Seeds,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Precomputed `{key}.aemb` files, one per prompt id.
    #[arg(long, conflicts_with = "embed_cache")]
    embeddings: Option<PathBuf>,
    /// Content-addressed cache written by `embed`; misses go to the endpoint.
    #[arg(long)]
    embed_cache: Option<PathBuf>,
    #[command(flatten)]
    client: ClientArgs,
}

#[derive(Args, Default)]
struct ClientArgs {
    /// JSON client configuration; flags below override its fields.
    #[arg(long)]
    client_config: Option<PathBuf>,
    /// Base URL of a chat-completion style server, e.g. http://localhost:8000/v1.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding a bearer token.
    #[arg(long)]
    token_env: Option<String>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    attempts: Option<u32>,
    #[arg(long)]
    timeout: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    image_root: Option<PathBuf>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
}

impl ClientArgs {
    fn config(&self) -> CliResult<ClientConfig> {
        let mut c = match &self.client_config {
            Some(path) => ClientConfig::load_json(path)?,
            None => ClientConfig::default(),
        };
        if let Some(v) = &self.endpoint {
            c.endpoint = Some(v.clone());
        }
        if let Some(v) = &self.model {
            c.model = v.clone();
        }
        if let Some(v) = &self.token_env {
            c.token_env = Some(v.clone());
        }
        if let Some(v) = self.concurrency {
            c.max_concurrency = v;
        }
        if let Some(v) = self.attempts {
            c.retry.max_attempts = v;
        }
        if let Some(v) = self.timeout {
            c.timeout_secs = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = &self.image_root {
            c.image_root = Some(v.clone());
        }
        if let Some(v) = self.max_tokens {
            c.max_tokens = v;
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let bad = |part: &str| format!("invalid seed `{part}`");
    let seeds = if let Some((a, b)) = s.split_once("..") {
        let lo: u64 = a.trim().parse().map_err(|_| bad(a))?;
        let b = b.trim_start_matches('=');
        let hi: u64 = b.trim().parse().map_err(|_| bad(b))?;
        if lo > hi {
            return Err(format!("empty seed range `{s}`"));
        }
        (lo..=hi).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad(p)))
            .collect::<Result<Vec<u64>, _>>()?
    };
    Ok(Seeds(seeds))
}

fn parse_from_str<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::Paraphrase { prompts, out, client } => {
            let mut spec = PromptSpec::load_json(&prompts)?;
            let config = client.config()?;
            let todo: Vec<usize> = (0..spec.categories.len())
                .filter(|&c| spec.categories[c].paraphrases.is_empty())
                .collect();
            if !todo.is_empty() {
                let backend = HttpBackend::new(&config, "paraphrase")?;
                for c in todo {
                    let category = &mut spec.categories[c];
                    category.paraphrases = paraphrase(&category.initial_prompt, &backend, &config)?;
                    eprintln!("{}: {:?}", category.name, category.paraphrases);
                }
            }
            spec.save_json(out.as_ref().unwrap_or(&prompts))?;
        }
        Command::Vqa { corpus, prompts, out, client } => {
            let spec = PromptSpec::load_json(&prompts)?;
            let config = client.config()?;
            let target = out.unwrap_or_else(|| corpus.clone());
            let mut data = Corpus::load_jsonl(&corpus)?;
            let prompts = spec.prompts();
            let summary = if pending_cells(&data, &prompts).is_empty() {
                if target != corpus {
                    data.save_jsonl_atomic(&target)?;
                }
                VqaSummary {
                    skipped: data.items.len() * prompts.len(),
                    ..Default::default()
                }
            } else {
                let backend = HttpBackend::new(&config, "vqa")?;
                vqa_generate(&mut data, &prompts, &backend, &config, Some(&target))?
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if !summary.failures.is_empty() {
                eprintln!("{} cells failed; rerun to resume", summary.failures.len());
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Embed { corpus, prompts, cache, client } => {
            let spec = PromptSpec::load_json(&prompts)?;
            let data = Corpus::load_jsonl(&corpus)?;
            let config = client.config()?;
            let backend = config.endpoint.is_some().then(|| HttpBackend::new(&config, "embed")).transpose()?;
            let service = EmbeddingService::new(backend.as_ref().map(|b| b as _), config, &cache);
            for (key, texts) in embedding_inputs(&data, &spec) {
                let features = service.embed(&texts)?;
                eprintln!("{key}: {} x {}", features.rows(), features.dims());
            }
        }
        Command::Run(args) => {
            let report = with_inputs(&args, |corpus, spec, config, dense| run_tgaicc(corpus, spec, config, dense))?;
            emit(&report.to_json()?, args.out.as_deref())?;
        }
        Command::Baseline { kind, run } => {
            let report = with_inputs(&run, |corpus, spec, config, dense| match kind {
                BaselineKind::AvgPrompt => baseline_avg_prompt(corpus, spec, config, dense),
                BaselineKind::Concat => baseline_concat_category(corpus, spec, config, dense),
            })?;
            emit(&report.to_json()?, run.out.as_deref())?;
        }
        Command::Explain {
            report,
            seed,
            stopwords,
            no_stopwords,
            filter_prompts,
            run,
        } => {
            let corpus = Corpus::load_jsonl(&run.corpus)?;
            let spec = PromptSpec::load_json(&run.prompts)?;
            let report = match report {
                Some(path) => EvalReport::from_json(&std::fs::read_to_string(path)?)?,
                None => with_inputs(&run, |corpus, spec, config, dense| run_tgaicc(corpus, spec, config, dense))?,
            };
            let seed_run = match seed {
                Some(s) => report.runs.iter().find(|r| r.seed == s).ok_or(format!("no run for seed {s}"))?,
                None => report.runs.first().ok_or("the report has no runs")?,
            };
            let mut options = match (stopwords, no_stopwords) {
                (Some(path), _) => ExplainOptions::with_stopword_file(path)?,
                (None, true) => ExplainOptions::unfiltered(),
                (None, false) => ExplainOptions::default(),
            };
            if filter_prompts {
                let texts: Vec<String> = spec.prompts().into_iter().map(|p| p.text).collect();
                options.filter_prompt_echo(texts.iter().map(String::as_str));
            }
            let explanations = explain_run(&corpus, seed_run, &options)?;
            let groups = seed_run.grouping.as_ref().map(|g| &g.groups[..]).unwrap_or_default();
            let out: Vec<serde_json::Value> = explanations
                .iter()
                .zip(groups)
                .map(|(e, g)| {
                    json!({
                        "group": e.group,
                        "category": g.category,
                        "members": g.members,
                        "z": e.z,
                        "short": e.short,
                        "words": e.words,
                    })
                })
                .collect();
            let doc = json!({ "seed": seed_run.seed, "groups": out });
            emit(&format!("{}\n", serde_json::to_string_pretty(&doc)?), run.out.as_deref())?;
        }
        Command::Fixture {
            corpus,
            prompts,
            variants,
            noise,
            seed,
        } => {
            let fixture = cards(CardsOptions { variants, noise, seed });
            fixture.corpus.save_jsonl_atomic(&corpus)?;
            fixture.spec.save_json(&prompts)?;
        }
        Command::Eval { corpus, labels, out } => {
            let corpus = Corpus::load_jsonl(&corpus)?;
            let doc = eval_labels(&corpus, &std::fs::read_to_string(labels)?)?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&doc)?), out.as_deref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Cache inputs for `embed`: every prompt, and every category's prompts
/// joined in prompt-id order.
fn embedding_inputs(corpus: &Corpus, spec: &PromptSpec) -> Vec<(String, Vec<String>)> {
    let mut inputs = Vec::new();
    for category in &spec.categories {
        let mut ids: Vec<String> = category.prompts().into_iter().map(|p| p.prompt_id).collect();
        for id in &ids {
            inputs.push((id.clone(), corpus.texts_for(id)));
        }
        ids.sort();
        inputs.push((format!("{}.concat", category.name), concatenated_texts(corpus, &ids)));
    }
    inputs
}

fn with_inputs<T>(
    args: &RunArgs,
    f: impl FnOnce(&Corpus, &PromptSpec, &RunConfig, Option<&dyn DenseSource>) -> tgaicc::error::Result<T>,
) -> CliResult<T> {
    let corpus = Corpus::load_jsonl(&args.corpus)?;
    let spec = PromptSpec::load_json(&args.prompts)?;
    let config = RunConfig {
        representation: args.representation,
        strategy: args.strategy,
        aggregation: args.aggregation,
        seeds: args.seeds.0.clone(),
        scope: args.scope,
    };
    let client = args.client.config()?;
    let backend = client.endpoint.is_some().then(|| HttpBackend::new(&client, "embed")).transpose()?;
    let dir = args.embeddings.as_ref().map(EmbeddingDir::new);
    let service = args
        .embed_cache
        .as_ref()
        .map(|cache| EmbeddingService::new(backend.as_ref().map(|b| b as _), client.clone(), cache));
    let dense: Option<&dyn DenseSource> = match (&dir, &service) {
        (Some(d), _) => Some(d),
        (None, Some(s)) => Some(s),
        (None, None) => None,
    };
    Ok(f(&corpus, &spec, &config, dense)?)
}

fn eval_labels(corpus: &Corpus, labels_json: &str) -> CliResult<serde_json::Value> {
    let named: BTreeMap<String, Vec<serde_json::Value>> = serde_json::from_str(labels_json)?;
    let categories: std::collections::BTreeSet<String> = corpus
        .items
        .iter()
        .flat_map(|item| item.truth_labels.iter().flat_map(|t| t.keys().cloned()))
        .collect();
    let truths = categories
        .iter()
        .map(|c| Ok((c.clone(), corpus.truth(c)?)))
        .collect::<tgaicc::error::Result<Vec<_>>>()?;
    let mut out = BTreeMap::new();
    for (name, values) in named {
        let names: Vec<String> = values
            .iter()
            .map(|v| v.as_str().map_or_else(|| v.to_string(), str::to_string))
            .collect();
        let labeling = Labeling::from_names(&names)?;
        let mut scores = BTreeMap::new();
        for (truth, t) in &truths {
            scores.insert(truth.clone(), Scores::between(&labeling, t)?);
        }
        out.insert(name, scores);
    }
    Ok(serde_json::to_value(out)?)
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => tgaicc::model::write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}
