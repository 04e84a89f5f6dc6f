//! Seeded miniature corpus with matching questions and references.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{RawExample, TaskCategory};
use crate::evaluation::{EvalExample, EvalTask, GoldAnswer};
use crate::retrieval::Document;

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ren", "tas", "vo", "dun", "bri", "sel", "thar", "qui", "zen", "mor", "pa", "gal", "ith",
];

const FILLER: [&str; 24] = [
    "farmers",
    "grow",
    "barley",
    "along",
    "the",
    "northern",
    "hills",
    "traders",
    "cross",
    "wide",
    "plains",
    "every",
    "spring",
    "rivers",
    "feed",
    "old",
    "mills",
    "near",
    "stone",
    "walls",
    "festivals",
    "mark",
    "long",
    "winters",
];

/// One toy country: its name, capital, and document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyEntry {
    pub country: String,
    pub capital: String,
    pub document: Document,
}

fn name(rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>) -> String {
    loop {
        let n = rng.random_range(2..=3);
        let mut s: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap_or(&"ka")).collect();
        if let Some(first) = s.get(..1) {
            s = first.to_uppercase() + &s[1..];
        }
        if taken.insert(s.clone()) {
            return s;
        }
    }
}

fn filler_sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(6..=12);
    let words: Vec<&str> = (0..n).map(|_| *FILLER.choose(rng).unwrap_or(&"the")).collect();
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        s = first.to_uppercase() + &s[1..];
    }
    s + "."
}

/// `n` countries, each with a document of roughly `words` words whose
/// first sentence names the capital.
pub fn toy_entries(seed: u64, n: usize, words: usize) -> Vec<ToyEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = BTreeSet::new();
    (0..n)
        .map(|_| {
            let country = name(&mut rng, &mut taken);
            let capital = name(&mut rng, &mut taken);
            let mut text = format!("The capital of {country} is {capital}.");
            while text.split_whitespace().count() < words {
                text.push(' ');
                text.push_str(&filler_sentence(&mut rng));
            }
            ToyEntry {
                document: Document {
                    title: country.clone(),
                    text,
                },
                country,
                capital,
            }
        })
        .collect()
}

impl ToyEntry {
    pub fn question(&self) -> String {
        format!("What is the capital of {}?", self.country)
    }

    pub fn raw_example(&self) -> RawExample {
        RawExample {
            source: Some("toy".into()),
            ..RawExample::new(TaskCategory::OpenQa, self.question(), self.capital.clone())
        }
    }

    pub fn reference(&self) -> EvalExample {
        EvalExample {
            question: self.question(),
            gold_answers: vec![GoldAnswer::One(self.capital.clone())],
            task: EvalTask::PopQa,
            long_form_refs: None,
        }
    }
}
