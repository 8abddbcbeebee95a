//! A generated playing-card corpus with two known ground truths.
//!
//! Every item is a card (13 ranks × 4 suits × a number of variants). Each
//! prompt of the "rank" category yields a templated answer naming only the
//! rank, and each "suit" prompt one naming only the suit. Filler words are
//! unique to their template, so within a category the value words are the
//! most frequent. A fraction of tokens is replaced by filler words drawn from
//! all templates.

use std::collections::BTreeMap;

use rand::Rng;

use crate::kmeans::rng_for;
use crate::model::{Category, Corpus, ItemRecord, PromptSpec};

pub const RANKS: [&str; 13] = [
    "ace", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "jack", "queen",
    "king",
];
pub const SUITS: [&str; 4] = ["hearts", "diamonds", "clubs", "spades"];

/// Answer templates per category, in prompt order (plain prompts, then the
/// concise variants). `{}` is replaced by the rank or suit.
const RANK_TEMPLATES: [&str; 6] = [
    "The rank printed here is {}.",
    "I can see a {} in the upper left of the image.",
    "It looks like the value is {}, judging by the numbering.",
    "{}.",
    "A {}, I think.",
    "Probably {}.",
];
const SUIT_TEMPLATES: [&str; 6] = [
    "This suit is {}.",
    "The symbols on the card face are {}.",
    "It appears to belong to the {} family.",
    "{}.",
    "Clearly {}.",
    "{}, I believe.",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardsOptions {
    pub variants: usize,
    /// Probability that a token is replaced by a noise word.
    pub noise: f64,
    pub seed: u64,
}

impl Default for CardsOptions {
    fn default() -> Self {
        Self {
            variants: 8,
            noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CardsFixture {
    pub corpus: Corpus,
    pub spec: PromptSpec,
}

pub fn cards_spec() -> PromptSpec {
    let mut rank = Category::new("rank", RANKS.len(), "Which rank does this playing card have?");
    rank.paraphrases = vec![
        "What value is written on the card in this photo?".into(),
        "Tell me the rank of the card in the image.".into(),
    ];
    let mut suit = Category::new("suit", SUITS.len(), "Which suit does this playing card have?");
    suit.paraphrases = vec![
        "What kind of symbol is printed on the card in this photo?".into(),
        "Tell me the suit of the card in the image.".into(),
    ];
    PromptSpec::new(vec![rank, suit])
}

pub fn cards(options: CardsOptions) -> CardsFixture {
    let lexicon = template_lexicon();
    let lexicon: Vec<&str> = lexicon.iter().map(String::as_str).collect();
    cards_with_lexicon(options, &lexicon)
}

/// Distinct filler words of all templates, lowercased and sorted.
pub fn template_lexicon() -> Vec<String> {
    let set: std::collections::BTreeSet<String> = RANK_TEMPLATES
        .iter()
        .chain(&SUIT_TEMPLATES)
        .flat_map(|t| crate::explain::words(t))
        .collect();
    set.into_iter().collect()
}

pub fn cards_with_lexicon(options: CardsOptions, lexicon: &[&str]) -> CardsFixture {
    let spec = cards_spec();
    let templates: Vec<(String, String, &str)> = spec
        .categories
        .iter()
        .flat_map(|category| {
            let table = if category.name == "rank" {
                RANK_TEMPLATES
            } else {
                SUIT_TEMPLATES
            };
            category
                .prompts()
                .into_iter()
                .zip(table)
                .map(|(p, t)| (p.prompt_id, category.name.clone(), t))
                .collect::<Vec<_>>()
        })
        .collect();

    let mut rng = rng_for(options.seed);
    let mut items = Vec::with_capacity(RANKS.len() * SUITS.len() * options.variants);
    for rank in RANKS {
        for suit in SUITS {
            for variant in 0..options.variants {
                let id = format!("{rank}-of-{suit}-{variant}");
                let mut item = ItemRecord::new(id.clone());
                item.image_ref = Some(format!("cards/{id}.png"));
                for (prompt_id, category, template) in &templates {
                    let value = if category == "rank" { rank } else { suit };
                    let text = add_noise(&template.replace("{}", value), options.noise, lexicon, &mut rng);
                    item.texts.insert(prompt_id.clone(), text);
                }
                item.truth_labels = Some(BTreeMap::from([
                    ("rank".to_string(), rank.to_string()),
                    ("suit".to_string(), suit.to_string()),
                ]));
                items.push(item);
            }
        }
    }
    CardsFixture {
        corpus: Corpus::new(items),
        spec,
    }
}

fn add_noise(text: &str, rate: f64, lexicon: &[&str], rng: &mut impl Rng) -> String {
    text.split(' ')
        .map(|token| {
            if rng.random::<f64>() < rate {
                lexicon[rng.random_range(0..lexicon.len())]
            } else {
                token
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}
