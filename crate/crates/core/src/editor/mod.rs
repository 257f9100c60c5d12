//! Threshold-gated token editing.
//!
//! A position `i` is flagged when `P(x_i | x_<i) >= p` and its token is then
//! replaced by a draw from the prior at that position. Both the flagging
//! probabilities and the sampling contexts come from the original sequence:
//! one scoring pass, no autoregressive regeneration, so an edit at `i` never
//! influences what happens at `j > i`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Origin, TokenId, TokenSequence, Tokenizer};
use crate::error::{Error, Result};
use crate::hash;
use crate::prior::{score_sequence, PriorModel, TopKDistribution};

pub const HIST_BUCKETS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    TopK {
        k: usize,
    },
    TopP {
        nucleus: f64,
    },
    /// Draw from the full distribution, rejecting draws whose own probability
    /// is at least `p`; after `max_rejects` rejections fall back to top-k
    /// with `fallback_k` candidates.
    Rejection {
        max_rejects: usize,
        fallback_k: usize,
    },
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::TopK { k: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditPolicy {
    /// Flag threshold. Values above 1 never flag anything.
    pub p: f64,
    #[serde(flatten)]
    pub strategy: Strategy,
    pub exclude_original: bool,
    pub seed: u64,
}

impl Default for EditPolicy {
    fn default() -> Self {
        EditPolicy {
            p: 0.99,
            strategy: Strategy::default(),
            exclude_original: false,
            seed: 0,
        }
    }
}

impl EditPolicy {
    pub fn top_k(p: f64, k: usize) -> Self {
        EditPolicy {
            p,
            strategy: Strategy::TopK { k },
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn excluding_original(mut self, exclude: bool) -> Self {
        self.exclude_original = exclude;
        self
    }

    /// All violated constraints, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.p >= 0.0 && self.p.is_finite()) {
            out.push(format!("p must be a finite value >= 0, got {}", self.p));
        }
        match self.strategy {
            Strategy::TopK { k: 0 } => out.push("k must be at least 1".into()),
            Strategy::TopP { nucleus } if !(nucleus > 0.0 && nucleus <= 1.0) => {
                out.push(format!("nucleus must lie in (0, 1], got {nucleus}"))
            }
            Strategy::Rejection { fallback_k: 0, .. } => {
                out.push("fallback_k must be at least 1".into())
            }
            _ => {}
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }

    /// How many candidates per flagged position the strategy needs.
    fn candidate_k(&self, vocab_size: usize) -> usize {
        match self.strategy {
            Strategy::TopK { k } => k,
            Strategy::TopP { .. } | Strategy::Rejection { .. } => vocab_size,
        }
    }
}

/// Positions selected for resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditPlan {
    pub doc_id: String,
    pub threshold: f64,
    /// Strictly increasing.
    pub flagged_positions: Vec<usize>,
    /// Original-token probabilities at the flagged positions.
    pub probs: Vec<f64>,
    /// Original-token probability at every position.
    pub token_probs: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditReport {
    pub total_tokens: u64,
    pub flagged: u64,
    pub changed: u64,
    pub edited_fraction: f64,
    /// Original-token probabilities in ten equal buckets over `[0, 1]`.
    pub per_interval_hist: [u64; HIST_BUCKETS],
}

impl EditReport {
    fn from_counts(total: u64, flagged: u64, changed: u64, hist: [u64; HIST_BUCKETS]) -> Self {
        EditReport {
            total_tokens: total,
            flagged,
            changed,
            edited_fraction: if total == 0 {
                0.0
            } else {
                flagged as f64 / total as f64
            },
            per_interval_hist: hist,
        }
    }

    pub fn merge(&mut self, other: &EditReport) {
        let mut hist = self.per_interval_hist;
        for (h, o) in hist.iter_mut().zip(other.per_interval_hist) {
            *h += o;
        }
        *self = Self::from_counts(
            self.total_tokens + other.total_tokens,
            self.flagged + other.flagged,
            self.changed + other.changed,
            hist,
        );
    }
}

/// Bucket of a probability among ten equal intervals; 1.0 joins the last.
pub fn interval_bucket(prob: f64) -> usize {
    ((prob * HIST_BUCKETS as f64).floor().max(0.0) as usize).min(HIST_BUCKETS - 1)
}

pub fn plan_edits(
    seq: &TokenSequence,
    prior: &dyn PriorModel,
    policy: &EditPolicy,
) -> Result<EditPlan> {
    let score = score_sequence(prior, seq)?;
    let (flagged_positions, probs) = score
        .per_token_prob
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= policy.p)
        .map(|(i, &p)| (i, p))
        .unzip();
    Ok(EditPlan {
        doc_id: seq.doc_id.clone(),
        threshold: policy.p,
        flagged_positions,
        probs,
        token_probs: score.per_token_prob,
    })
}

fn draw_renormalized<R: Rng + ?Sized>(
    candidates: &[(TokenId, f64)],
    original: TokenId,
    exclude_original: bool,
    rng: &mut R,
) -> TokenId {
    let pool: Vec<(TokenId, f64)> = candidates
        .iter()
        .copied()
        .filter(|&(t, p)| p > 0.0 && !(exclude_original && t == original))
        .collect();
    if pool.is_empty() {
        return original;
    }
    let pick = WeightedIndex::new(pool.iter().map(|c| c.1)).expect("positive weights");
    pool[pick.sample(rng)].0
}

/// Draws a replacement for `original` from an already ranked candidate list.
///
/// `dist` must hold at least the candidates the strategy needs: the top `k`
/// for top-k, the full ranked vocabulary for top-p and rejection.
pub fn sample_from<R: Rng + ?Sized>(
    dist: &TopKDistribution,
    original: TokenId,
    policy: &EditPolicy,
    rng: &mut R,
) -> TokenId {
    let cands = &dist.candidates;
    match policy.strategy {
        Strategy::TopK { k } => draw_renormalized(
            &cands[..k.min(cands.len())],
            original,
            policy.exclude_original,
            rng,
        ),
        Strategy::TopP { nucleus } => {
            let mut mass = 0.0;
            let mut cut = cands.len();
            for (i, c) in cands.iter().enumerate() {
                mass += c.1;
                if mass >= nucleus {
                    cut = i + 1;
                    break;
                }
            }
            draw_renormalized(&cands[..cut], original, policy.exclude_original, rng)
        }
        Strategy::Rejection {
            max_rejects,
            fallback_k,
        } => {
            let weights: Vec<f64> = cands
                .iter()
                .map(|&(t, p)| {
                    if policy.exclude_original && t == original {
                        0.0
                    } else {
                        p
                    }
                })
                .collect();
            let Ok(full) = WeightedIndex::new(&weights) else {
                return original;
            };
            for _ in 0..max_rejects {
                let (t, p) = cands[full.sample(rng)];
                if p < policy.p {
                    return t;
                }
            }
            draw_renormalized(
                &cands[..fallback_k.min(cands.len())],
                original,
                policy.exclude_original,
                rng,
            )
        }
    }
}

/// Samples a replacement at the end of `context`.
pub fn sample_replacement<R: Rng + ?Sized>(
    prior: &dyn PriorModel,
    context: &[TokenId],
    original: TokenId,
    policy: &EditPolicy,
    rng: &mut R,
) -> Result<TokenId> {
    let dist = prior.next_token_dist(context, policy.candidate_k(prior.vocab_size()))?;
    Ok(sample_from(&dist, original, policy, rng))
}

pub fn apply_edits<R: Rng + ?Sized>(
    seq: &TokenSequence,
    plan: &EditPlan,
    prior: &dyn PriorModel,
    policy: &EditPolicy,
    rng: &mut R,
) -> Result<(TokenSequence, EditReport)> {
    if plan.doc_id != seq.doc_id {
        return Err(Error::PlanMismatch(format!(
            "plan for {:?} applied to {:?}",
            plan.doc_id, seq.doc_id
        )));
    }
    if plan.token_probs.len() != seq.len() || plan.probs.len() != plan.flagged_positions.len() {
        return Err(Error::PlanMismatch(
            "plan length differs from sequence".into(),
        ));
    }
    if plan.flagged_positions.windows(2).any(|w| w[0] >= w[1])
        || plan
            .flagged_positions
            .last()
            .is_some_and(|&i| i >= seq.len())
    {
        return Err(Error::PlanMismatch(
            "flagged positions unsorted or out of range".into(),
        ));
    }

    let k = policy.candidate_k(prior.vocab_size());
    let dists = prior.candidates_at(&seq.tokens, &plan.flagged_positions, k)?;
    let mut tokens = seq.tokens.clone();
    let mut changed = 0;
    for (&i, dist) in plan.flagged_positions.iter().zip(&dists) {
        let original = seq.tokens[i];
        let new = sample_from(dist, original, policy, rng);
        if new != original {
            changed += 1;
        }
        tokens[i] = new;
    }

    let mut hist = [0u64; HIST_BUCKETS];
    for &p in &plan.token_probs {
        hist[interval_bucket(p)] += 1;
    }
    let report = EditReport::from_counts(
        seq.len() as u64,
        plan.flagged_positions.len() as u64,
        changed,
        hist,
    );
    Ok((
        TokenSequence {
            doc_id: seq.doc_id.clone(),
            tokens,
            tokenizer_id: seq.tokenizer_id.clone(),
        },
        report,
    ))
}

/// Random stream for one document in one generation.
fn document_rng(policy: &EditPolicy, generation: u64, doc_id: &str) -> rand_chacha::ChaCha8Rng {
    let mut key = generation.to_le_bytes().to_vec();
    key.extend_from_slice(doc_id.as_bytes());
    hash::stream(policy.seed, "edit", &key)
}

/// Plans and applies edits to one sequence with its per-document stream.
pub fn edit_sequence(
    seq: &TokenSequence,
    prior: &dyn PriorModel,
    policy: &EditPolicy,
    generation: u64,
) -> Result<(TokenSequence, EditReport)> {
    if seq.is_empty() {
        return Ok((seq.clone(), EditReport::default()));
    }
    let plan = plan_edits(seq, prior, policy)?;
    let mut rng = document_rng(policy, generation, &seq.doc_id);
    apply_edits(seq, &plan, prior, policy, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentReport {
    pub doc_id: String,
    #[serde(flatten)]
    pub report: EditReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentFailure {
    pub doc_id: String,
    pub error: String,
    /// The prior broke the transport or scoring protocol.
    pub protocol: bool,
}

/// Result of editing a whole corpus once.
#[derive(Debug, Clone)]
pub struct CorpusEdit {
    pub corpus: Corpus,
    pub report: EditReport,
    pub documents: Vec<DocumentReport>,
    /// Documents that could not be edited; they pass through unchanged.
    pub failures: Vec<DocumentFailure>,
}

pub fn edit_corpus(
    c: &Corpus,
    tok: &Tokenizer,
    prior: &dyn PriorModel,
    policy: &EditPolicy,
) -> Result<CorpusEdit> {
    edit_corpus_generation(c, tok, prior, policy, 0)
}

fn edit_corpus_generation(
    c: &Corpus,
    tok: &Tokenizer,
    prior: &dyn PriorModel,
    policy: &EditPolicy,
    generation: u64,
) -> Result<CorpusEdit> {
    policy.validate()?;
    let results: Vec<(Document, std::result::Result<EditReport, Error>)> = c
        .documents()
        .par_iter()
        .map(|doc| {
            let seq = tok.tokenize(doc);
            match edit_sequence(&seq, prior, policy, generation) {
                Ok((_, report)) if report.flagged == 0 => (doc.clone(), Ok(report)),
                Ok((edited, report)) => {
                    let mut out = doc.clone();
                    out.text = tok.detokenize(&edited.tokens);
                    out.origin = Origin::Edited;
                    out.meta.insert(
                        "edited_fraction".into(),
                        format!("{:.6}", report.edited_fraction),
                    );
                    (out, Ok(report))
                }
                Err(e) => (doc.clone(), Err(e)),
            }
        })
        .collect();

    let mut report = EditReport::default();
    let mut documents = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let mut docs = Vec::with_capacity(results.len());
    for (doc, outcome) in results {
        match outcome {
            Ok(r) => {
                report.merge(&r);
                documents.push(DocumentReport {
                    doc_id: doc.id.clone(),
                    report: r,
                });
            }
            Err(e) => failures.push(DocumentFailure {
                doc_id: doc.id.clone(),
                protocol: matches!(
                    e,
                    Error::Transport { .. } | Error::Conformance { .. } | Error::Model(_)
                ),
                error: e.to_string(),
            }),
        }
        docs.push(doc);
    }
    let corpus = Corpus::new(
        docs,
        format!(
            "edit(p={}, gen={}) of {}",
            policy.p,
            generation + 1,
            c.provenance()
        ),
    )?;
    Ok(CorpusEdit {
        corpus,
        report,
        documents,
        failures,
    })
}

/// Repeatedly edits the previous generation's output. Generation 1 is exactly
/// [`edit_corpus`].
pub fn run_generations(
    c: &Corpus,
    tok: &Tokenizer,
    prior: &dyn PriorModel,
    policy: &EditPolicy,
    generations: usize,
) -> Result<Vec<CorpusEdit>> {
    if generations == 0 {
        return Err(Error::InvalidArgument(
            "generations must be at least 1".into(),
        ));
    }
    let mut out: Vec<CorpusEdit> = Vec::with_capacity(generations);
    for g in 0..generations {
        let input = out.last().map_or(c, |prev| &prev.corpus);
        let next = edit_corpus_generation(input, tok, prior, policy, g as u64)?;
        out.push(next);
    }
    Ok(out)
}
