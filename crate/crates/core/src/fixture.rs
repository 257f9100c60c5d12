//! Seeded generator of human-like text used by tests, examples and the
//! acceptance suite.
//!
//! Each domain gets its own content vocabulary with Zipf-distributed word
//! frequencies and a set of fixed multi-word collocations; function words are
//! shared across domains. Collocations give an n-gram model near-deterministic
//! continuations while the Zipf tail keeps held-out text surprising.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{Corpus, Document, Origin};
use crate::hash;

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "tas", "vo", "pel", "dor", "in", "ul", "se", "ba", "tri", "gon", "fe",
    "ma", "nu", "cor", "dis", "el", "qua", "ri", "sto", "ven", "zu", "ar", "pho", "li", "ne",
    "tem",
];

const FUNCTION_WORDS: &[&str] = &[
    "the", "of", "and", "to", "in", "a", "is", "that", "for", "it", "as", "with", "was", "on",
    "by", "this", "are", "from", "at", "an", "be", "or", "which", "not",
];

/// Vocabulary and phrase inventory for one domain.
#[derive(Debug, Clone)]
pub struct Domain {
    content: Vec<String>,
    zipf: WeightedIndex<f64>,
    collocations: Vec<Vec<String>>,
}

impl Domain {
    pub fn new(domain: u64) -> Self {
        let mut rng = hash::stream(domain, "fixture/domain", b"");
        let mut content = Vec::new();
        let mut seen = std::collections::HashSet::new();
        while content.len() < 600 {
            let n = rng.random_range(2..=3);
            let w: String = (0..n)
                .map(|_| *SYLLABLES.choose(&mut rng).unwrap())
                .collect();
            if seen.insert(w.clone()) {
                content.push(w);
            }
        }
        let zipf =
            WeightedIndex::new((1..=content.len()).map(|r| 1.0 / (r as f64).powf(1.07))).unwrap();
        let collocations = (0..40)
            .map(|_| {
                let len = rng.random_range(2..=4);
                (0..len)
                    .map(|_| content[rng.random_range(0..200)].clone())
                    .collect()
            })
            .collect();
        Domain {
            content,
            zipf,
            collocations,
        }
    }

    fn sentence<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<String>) {
        let chunks = rng.random_range(3..=8);
        for _ in 0..chunks {
            let roll: f64 = rng.random();
            if roll < 0.3 {
                out.extend(self.collocations.choose(rng).unwrap().iter().cloned());
            } else if roll < 0.7 {
                out.push(FUNCTION_WORDS.choose(rng).unwrap().to_string());
                out.push(self.content[self.zipf.sample(rng)].clone());
            } else {
                out.push(self.content[self.zipf.sample(rng)].clone());
            }
        }
        out.push(".".into());
    }

    /// A document of at least `min_words` words, ending on a sentence boundary.
    pub fn document<R: Rng + ?Sized>(&self, rng: &mut R, min_words: usize) -> String {
        let mut words = Vec::new();
        while words.len() < min_words {
            self.sentence(rng, &mut words);
        }
        words.join(" ")
    }
}

/// `n_docs` human-origin documents of roughly `words_per_doc` words each,
/// with ids `<prefix>-<index>`.
pub fn human_corpus(
    domain: u64,
    prefix: &str,
    n_docs: usize,
    words_per_doc: usize,
    seed: u64,
) -> Corpus {
    let dom = Domain::new(domain);
    let docs = (0..n_docs)
        .map(|i| {
            let mut rng = hash::stream(
                seed,
                "fixture/doc",
                format!("{domain}/{prefix}/{i}").as_bytes(),
            );
            let min_words = rng
                .random_range(words_per_doc / 2..=words_per_doc * 3 / 2)
                .max(1);
            Document::new(
                format!("{prefix}-{i:05}"),
                dom.document(&mut rng, min_words),
                Origin::Human,
            )
        })
        .collect();
    Corpus::new(docs, format!("fixture(domain={domain}, seed={seed})"))
        .expect("fixture ids are unique")
}
