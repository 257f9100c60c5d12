//! Conditional next-token distributions `P(· | context)`.
//!
//! Everything downstream (editing, diagnostics) talks to a [`PriorModel`], so a
//! locally trained [`NgramPrior`] and a [`RemotePrior`] served over HTTP are
//! interchangeable.

mod ngram;
mod remote;

pub use ngram::{
    load_prior, prior_to_string, save_prior, train_ngram_prior, NgramPrior, PRIOR_MAGIC,
};
pub use remote::{
    check_score_response, open_remote_prior, Candidate, PositionScore, PriorMeta, RemotePrior,
    ScoreRequest, ScoreResponse,
};

use std::cmp::Ordering;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, TokenSequence};
use crate::error::{Error, Result};

/// Slack allowed on the total mass of a candidate list.
pub const MASS_TOLERANCE: f64 = 1e-9;

pub trait PriorModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn tokenizer_id(&self) -> &str;

    /// Dense distribution over the whole vocabulary.
    fn distribution(&self, context: &[TokenId]) -> Result<Vec<f64>>;

    fn token_prob(&self, context: &[TokenId], token: TokenId) -> Result<f64> {
        check_token(token, self.vocab_size())?;
        Ok(self.distribution(context)?[token as usize])
    }

    /// The `k` most likely next tokens, ties broken by ascending id.
    fn next_token_dist(&self, context: &[TokenId], k: usize) -> Result<TopKDistribution> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(TopKDistribution::from_dense(
            &self.distribution(context)?,
            k,
        ))
    }

    /// `P(tokens[i] | tokens[..i])` for every position; position 0 uses the
    /// empty context.
    fn position_probs(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        (0..tokens.len())
            .map(|i| self.token_prob(&tokens[..i], tokens[i]))
            .collect()
    }

    /// Top-`k` candidates for each requested position, each conditioned on
    /// the original prefix `tokens[..i]`.
    fn candidates_at(
        &self,
        tokens: &[TokenId],
        positions: &[usize],
        k: usize,
    ) -> Result<Vec<TopKDistribution>> {
        positions
            .iter()
            .map(|&i| self.next_token_dist(&tokens[..i], k))
            .collect()
    }
}

pub(crate) fn check_token(token: TokenId, vocab_size: usize) -> Result<()> {
    if (token as usize) < vocab_size {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "token {token} outside vocabulary of size {vocab_size}"
        )))
    }
}

/// Candidates sorted by descending probability (ascending id on ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKDistribution {
    pub candidates: Vec<(TokenId, f64)>,
    pub mass: f64,
}

fn rank(a: &(TokenId, f64), b: &(TokenId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl TopKDistribution {
    pub fn from_dense(probs: &[f64], k: usize) -> Self {
        let mut all: Vec<(TokenId, f64)> = probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (i as TokenId, p))
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, rank);
            all.truncate(k);
        }
        all.sort_unstable_by(rank);
        Self::from_sorted(all)
    }

    /// Wraps an already ranked candidate list.
    pub fn from_sorted(candidates: Vec<(TokenId, f64)>) -> Self {
        let mass = candidates.iter().map(|c| c.1).sum();
        TopKDistribution { candidates, mass }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn prob_of(&self, token: TokenId) -> Option<f64> {
        self.candidates.iter().find(|c| c.0 == token).map(|c| c.1)
    }

    /// Checks positivity, ordering and total mass.
    pub fn validate(&self, tolerance: f64) -> Result<()> {
        if let Some(c) = self.candidates.iter().find(|c| !(c.1 > 0.0 && c.1 <= 1.0)) {
            return Err(Error::Conformance {
                rule: "PROB_POSITIVE",
                detail: format!("candidate {} has probability {}", c.0, c.1),
            });
        }
        if self.candidates.windows(2).any(|w| w[0].1 < w[1].1) {
            return Err(Error::Conformance {
                rule: "TOPK_SORTED",
                detail: "candidates not in non-increasing probability order".into(),
            });
        }
        if self.mass > 1.0 + tolerance {
            return Err(Error::Conformance {
                rule: "TOPK_MASS",
                detail: format!("candidate mass {} exceeds 1", self.mass),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub per_token_prob: Vec<f64>,
    /// Natural-log likelihood.
    pub log_likelihood: f64,
    pub ppl: f64,
}

impl SequenceScore {
    pub fn from_probs(per_token_prob: Vec<f64>) -> Result<Self> {
        if per_token_prob.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot score an empty sequence".into(),
            ));
        }
        let log_likelihood: f64 = per_token_prob.iter().map(|p| p.ln()).sum();
        let ppl = (-log_likelihood / per_token_prob.len() as f64).exp();
        Ok(SequenceScore {
            per_token_prob,
            log_likelihood,
            ppl,
        })
    }

    pub fn token_count(&self) -> usize {
        self.per_token_prob.len()
    }
}

pub fn score_tokens(prior: &dyn PriorModel, tokens: &[TokenId]) -> Result<SequenceScore> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot score an empty sequence".into(),
        ));
    }
    SequenceScore::from_probs(prior.position_probs(tokens)?)
}

pub fn score_sequence(prior: &dyn PriorModel, seq: &TokenSequence) -> Result<SequenceScore> {
    score_tokens(prior, &seq.tokens)
}

/// Draws `len` tokens autoregressively from the prior.
pub fn sample_sequence<R: Rng + ?Sized>(
    prior: &dyn PriorModel,
    len: usize,
    rng: &mut R,
) -> Result<Vec<TokenId>> {
    let mut tokens = Vec::with_capacity(len);
    for _ in 0..len {
        let dist = prior.distribution(&tokens)?;
        let pick = WeightedIndex::new(&dist)
            .map_err(|e| Error::Model(format!("cannot sample from distribution: {e}")))?;
        tokens.push(pick.sample(rng) as TokenId);
    }
    Ok(tokens)
}

/// `1/V` for every token regardless of context.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformPrior {
    vocab_size: usize,
    tokenizer_id: String,
}

impl UniformPrior {
    pub fn new(vocab_size: usize, tokenizer_id: impl Into<String>) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::InvalidArgument(
                "vocabulary must be non-empty".into(),
            ));
        }
        Ok(UniformPrior {
            vocab_size,
            tokenizer_id: tokenizer_id.into(),
        })
    }
}

impl PriorModel for UniformPrior {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn tokenizer_id(&self) -> &str {
        &self.tokenizer_id
    }

    fn distribution(&self, _context: &[TokenId]) -> Result<Vec<f64>> {
        Ok(vec![1.0 / self.vocab_size as f64; self.vocab_size])
    }

    fn token_prob(&self, _context: &[TokenId], token: TokenId) -> Result<f64> {
        check_token(token, self.vocab_size)?;
        Ok(1.0 / self.vocab_size as f64)
    }

    fn next_token_dist(&self, _context: &[TokenId], k: usize) -> Result<TopKDistribution> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let p = 1.0 / self.vocab_size as f64;
        Ok(TopKDistribution::from_sorted(
            (0..k.min(self.vocab_size))
                .map(|t| (t as TokenId, p))
                .collect(),
        ))
    }
}
