//! Documents, corpora and their on-disk JSON-Lines form.

mod tokenizer;

pub use tokenizer::{TokenId, TokenSequence, Tokenizer, TokenizerKind, UNK_TOKEN};

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Human,
    Synthetic,
    Edited,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, origin: Origin) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            origin,
            meta: BTreeMap::new(),
        }
    }
}

/// An ordered collection of documents with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    JsonLines,
    PlainTextPerLine,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate document id {:?}",
                    doc.id
                )));
            }
        }
        Ok(Corpus {
            documents,
            provenance: provenance.into(),
        })
    }

    pub fn empty(provenance: impl Into<String>) -> Self {
        Corpus {
            documents: Vec::new(),
            provenance: provenance.into(),
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Tokenizes every document, in corpus order.
    pub fn tokenize(&self, tok: &Tokenizer) -> Vec<TokenSequence> {
        use rayon::prelude::*;
        self.documents.par_iter().map(|d| tok.tokenize(d)).collect()
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    text: Option<String>,
    #[serde(default)]
    origin: Origin,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// Reads a corpus. Records without an id get `<filename>#<line>`.
///
/// Blank lines in JSON-Lines input are skipped; in plain-text input every
/// line (including blank ones) is a document.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let auto_id = |line: usize| format!("{file_name}#{line}");

    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let doc = match format {
            CorpusFormat::PlainTextPerLine => {
                Document::new(auto_id(line_no), line, Origin::Unknown)
            }
            CorpusFormat::JsonLines => {
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Record {
                    line: line_no,
                    message: e.to_string(),
                })?;
                let text = raw.text.ok_or_else(|| Error::Record {
                    line: line_no,
                    message: "missing field text".into(),
                })?;
                Document {
                    id: raw.id.unwrap_or_else(|| auto_id(line_no)),
                    text,
                    origin: raw.origin,
                    meta: raw.meta,
                }
            }
        };
        if !seen.insert(doc.id.clone()) {
            return Err(Error::Record {
                line: line_no,
                message: format!("duplicate document id {:?}", doc.id),
            });
        }
        documents.push(doc);
    }
    Ok(Corpus {
        documents,
        provenance: path.display().to_string(),
    })
}

/// JSON-Lines text of `c`: one object per document with fields `id`, `text`,
/// `origin`, `meta`, each line newline-terminated.
pub fn to_jsonl(c: &Corpus) -> String {
    let mut out = String::new();
    for doc in &c.documents {
        out.push_str(&serde_json::to_string(doc).expect("documents always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(c: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_jsonl(c)).map_err(|e| Error::io(path, e))
}

/// Number of human documents in an α-mixture of `target_size` documents.
pub fn human_share(alpha: f64, target_size: usize) -> usize {
    // α·n can land a hair above an integer (0.1·30); absorb that before ceil.
    let exact = alpha * target_size as f64;
    ((exact - 1e-9).ceil().max(0.0) as usize).min(target_size)
}

/// Draws `⌈α·target_size⌉` human and the remaining synthetic documents without
/// replacement and shuffles them together.
pub fn mix_corpora(
    human: &Corpus,
    synthetic: &Corpus,
    alpha: f64,
    target_size: usize,
    seed: u64,
) -> Result<Corpus> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    let n_human = human_share(alpha, target_size);
    let n_synth = target_size - n_human;
    if n_human > human.len() {
        return Err(Error::InsufficientDocuments {
            source_name: "human",
            required: n_human,
            available: human.len(),
        });
    }
    if n_synth > synthetic.len() {
        return Err(Error::InsufficientDocuments {
            source_name: "synthetic",
            required: n_synth,
            available: synthetic.len(),
        });
    }

    let mut rng = hash::stream(seed, "mix/human", b"");
    let mut picked: Vec<Document> = index::sample(&mut rng, human.len(), n_human)
        .into_iter()
        .map(|i| human.documents[i].clone())
        .collect();
    let mut rng = hash::stream(seed, "mix/synthetic", b"");
    picked.extend(
        index::sample(&mut rng, synthetic.len(), n_synth)
            .into_iter()
            .map(|i| synthetic.documents[i].clone()),
    );
    let mut rng = hash::stream(seed, "mix/shuffle", b"");
    picked.shuffle(&mut rng);

    Corpus::new(
        picked,
        format!(
            "mix(alpha={alpha}, n={target_size}, seed={seed}; {} + {})",
            human.provenance, synthetic.provenance
        ),
    )
}

/// Splits into `(⌊fraction·n⌋, rest)` documents. Both parts keep the original
/// relative order.
pub fn split_corpus(c: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if c.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot split an empty corpus".into(),
        ));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    let n_first = (fraction * c.len() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.shuffle(&mut hash::stream(seed, "split", b""));
    let mut in_first = vec![false; c.len()];
    for &i in &order[..n_first] {
        in_first[i] = true;
    }
    let (first, second): (Vec<_>, Vec<_>) = c
        .documents
        .iter()
        .cloned()
        .zip(in_first)
        .partition(|(_, first)| *first);
    let strip = |v: Vec<(Document, bool)>| v.into_iter().map(|(d, _)| d).collect();
    Ok((
        Corpus {
            documents: strip(first),
            provenance: format!("{}[split {fraction} seed {seed} part 0]", c.provenance),
        },
        Corpus {
            documents: strip(second),
            provenance: format!("{}[split {fraction} seed {seed} part 1]", c.provenance),
        },
    ))
}
