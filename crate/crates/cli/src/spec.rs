//! Fully resolved commands. These are what manifests record and what replay
//! executes, so every input that affects an output lives here.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use toedit_core::editor::EditPolicy;
use toedit_core::simulator::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Jsonl,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub path: PathBuf,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenizerSpec {
    /// Fitted on the command's input corpora in order.
    Whitespace,
    Byte,
    VocabFile {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    File {
        path: PathBuf,
    },
    Remote {
        endpoint: String,
        timeout_secs: u64,
        tokenizer: TokenizerSpec,
    },
    Uniform {
        tokenizer: TokenizerSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Collapse,
    Edit,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PplEdges {
    pub max: f64,
    pub step: f64,
}

impl PplEdges {
    pub fn edges(&self) -> Vec<f64> {
        let bins = (self.max / self.step).round() as usize;
        (0..=bins)
            .map(|i| {
                if i == bins {
                    self.max
                } else {
                    self.step * i as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramSpec {
    pub n_orders: Vec<usize>,
    pub buckets: usize,
    pub hash_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPrior {
    pub input: Input,
    pub tokenizer: TokenizerSpec,
    pub order: usize,
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub input: Input,
    pub prior: PriorSpec,
    pub generations: usize,
    pub policy: EditPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulate {
    pub mode: SimMode,
    pub sim: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzePpl {
    pub input: Input,
    pub prior: PriorSpec,
    pub edges: PplEdges,
    pub chunk: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeTokens {
    pub input: Input,
    pub prior: PriorSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeNgrams {
    pub input: Input,
    pub tokenizer: TokenizerSpec,
    pub top_order: usize,
    pub top_n: usize,
    pub ngrams: NgramSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeCoverage {
    pub reference: Input,
    pub candidate: Input,
    pub prior: PriorSpec,
    pub edges: PplEdges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectDsir {
    pub raw: Input,
    pub target: Input,
    pub tokenizer: TokenizerSpec,
    pub k: usize,
    pub seed: u64,
    pub ngrams: NgramSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mix {
    pub human: Input,
    pub synthetic: Input,
    pub alpha: f64,
    pub target_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Resolved {
    TrainPrior(TrainPrior),
    Edit(Edit),
    Simulate(Simulate),
    AnalyzePpl(AnalyzePpl),
    AnalyzeTokens(AnalyzeTokens),
    AnalyzeNgrams(AnalyzeNgrams),
    AnalyzeCoverage(AnalyzeCoverage),
    SelectDsir(SelectDsir),
    Mix(Mix),
}

impl Resolved {
    pub fn name(&self) -> &'static str {
        match self {
            Resolved::TrainPrior(_) => "train-prior",
            Resolved::Edit(_) => "edit",
            Resolved::Simulate(_) => "simulate",
            Resolved::AnalyzePpl(_) => "analyze-ppl",
            Resolved::AnalyzeTokens(_) => "analyze-tokens",
            Resolved::AnalyzeNgrams(_) => "analyze-ngrams",
            Resolved::AnalyzeCoverage(_) => "analyze-coverage",
            Resolved::SelectDsir(_) => "select-dsir",
            Resolved::Mix(_) => "mix",
        }
    }
}
