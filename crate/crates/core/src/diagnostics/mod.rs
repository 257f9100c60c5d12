//! Distributional diagnostics over corpora: per-document perplexity and
//! per-token probability histograms, coverage comparisons, hashed n-gram
//! profiles and importance-weighted selection.

mod features;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tokenizer};
use crate::error::{Error, Result};
use crate::prior::{score_tokens, PriorModel};

pub use features::{
    bucket_of, dsir_select, dsir_weights, hash_ngram_features, load_profile, save_profile,
    top_ngrams, DocWeight, DsirWeights, FeatureProfile, FEATURE_MAGIC,
};

/// Counts over bins `[e_0, e_1), ..., [e_{n-1}, e_n]`. Values above `e_n`
/// land in `overflow`; values below `e_0` join the first bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2
            || edges.iter().any(|e| !e.is_finite())
            || edges.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidArgument(
                "histogram edges must be finite, strictly increasing and at least two".into(),
            ));
        }
        let bins = edges.len() - 1;
        Ok(Histogram {
            edges,
            counts: vec![0; bins],
            total: 0,
            overflow: 0,
        })
    }

    /// `bins` equal-width bins over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("need at least one bin".into()));
        }
        let width = (hi - lo) / bins as f64;
        Self::new(
            (0..=bins)
                .map(|i| if i == bins { hi } else { lo + width * i as f64 })
                .collect(),
        )
    }

    pub fn from_values(edges: Vec<f64>, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut h = Self::new(edges)?;
        for v in values {
            h.add(v);
        }
        Ok(h)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, value: f64) {
        let last = *self.edges.last().unwrap();
        if value > last || value.is_nan() {
            self.overflow += 1;
            return;
        }
        // first edge strictly greater than value, minus one
        let idx = self
            .edges
            .partition_point(|&e| e <= value)
            .saturating_sub(1);
        let last_bin = self.bins() - 1;
        self.counts[idx.min(last_bin)] += 1;
        self.total += 1;
    }

    pub fn observations(&self) -> u64 {
        self.total + self.overflow
    }

    /// Share of all observations per bin, then the overflow share, in percent.
    pub fn percentages(&self) -> (Vec<f64>, f64) {
        let n = self.observations();
        if n == 0 {
            return (vec![0.0; self.bins()], 0.0);
        }
        let pct = |c: u64| 100.0 * c as f64 / n as f64;
        (
            self.counts.iter().map(|&c| pct(c)).collect(),
            pct(self.overflow),
        )
    }

    /// Upper edge of the bin holding the `q`-quantile of all observations;
    /// infinite when it falls in the overflow bucket.
    pub fn quantile_edge(&self, q: f64) -> f64 {
        let n = self.observations();
        if n == 0 {
            return f64::NAN;
        }
        let target = (q * n as f64).ceil().max(1.0) as u64;
        let mut seen = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            seen += c;
            if seen >= target {
                return self.edges[i + 1];
            }
        }
        f64::INFINITY
    }

    fn same_edges(&self, other: &Histogram) -> bool {
        self.edges == other.edges
    }
}

/// Bin edges 0, 2, ..., 100 with everything above 100 in the overflow bucket.
pub fn default_ppl_edges() -> Vec<f64> {
    (0..=50).map(|i| 2.0 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PplScore {
    pub doc_id: String,
    /// Chunk index within the document; 0 when unchunked.
    pub chunk: usize,
    pub tokens: usize,
    pub ppl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PplProfile {
    pub histogram: Histogram,
    pub scores: Vec<PplScore>,
    /// Documents with no tokens, which have no perplexity.
    pub skipped: Vec<String>,
}

/// Perplexity of every document, or of every `chunk`-token piece of it
/// (context restarts at each chunk).
pub fn ppl_scores(
    c: &Corpus,
    tok: &Tokenizer,
    prior: &dyn PriorModel,
    chunk: Option<usize>,
) -> Result<(Vec<PplScore>, Vec<String>)> {
    if chunk == Some(0) {
        return Err(Error::InvalidArgument(
            "chunk size must be at least 1".into(),
        ));
    }
    let per_doc = c
        .documents()
        .par_iter()
        .map(|doc| {
            let tokens = tok.encode(&doc.text);
            let size = chunk.unwrap_or(tokens.len().max(1));
            tokens
                .chunks(size)
                .enumerate()
                .map(|(i, piece)| {
                    Ok(PplScore {
                        doc_id: doc.id.clone(),
                        chunk: i,
                        tokens: piece.len(),
                        ppl: score_tokens(prior, piece)?.ppl,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scores = Vec::new();
    let mut skipped = Vec::new();
    for (doc, s) in c.documents().iter().zip(per_doc) {
        if s.is_empty() {
            skipped.push(doc.id.clone());
        }
        scores.extend(s);
    }
    Ok((scores, skipped))
}

pub fn ppl_profile(
    c: &Corpus,
    tok: &Tokenizer,
    prior: &dyn PriorModel,
    edges: Vec<f64>,
    chunk: Option<usize>,
) -> Result<PplProfile> {
    if c.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot profile an empty corpus".into(),
        ));
    }
    let (scores, skipped) = ppl_scores(c, tok, prior, chunk)?;
    let histogram = Histogram::from_values(edges, scores.iter().map(|s| s.ppl))?;
    Ok(PplProfile {
        histogram,
        scores,
        skipped,
    })
}

/// `P(x_i | x_<i)` at every position of every document, in corpus order.
pub fn token_probabilities(
    c: &Corpus,
    tok: &Tokenizer,
    prior: &dyn PriorModel,
) -> Result<Vec<f64>> {
    let per_doc = c
        .documents()
        .par_iter()
        .map(|doc| {
            let tokens = tok.encode(&doc.text);
            if tokens.is_empty() {
                Ok(Vec::new())
            } else {
                prior.position_probs(&tokens)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}

/// Ten equal bins over `[0, 1]`.
pub fn token_prob_profile(
    c: &Corpus,
    tok: &Tokenizer,
    prior: &dyn PriorModel,
) -> Result<Histogram> {
    Histogram::from_values(
        Histogram::uniform(0.0, 1.0, 10)?.edges,
        token_probabilities(c, tok, prior)?,
    )
}

/// One row of a probability-interval table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
    pub percent: f64,
}

pub fn interval_rows(h: &Histogram) -> Vec<IntervalRow> {
    let (pct, _) = h.percentages();
    h.counts
        .iter()
        .enumerate()
        .map(|(i, &count)| IntervalRow {
            lower: h.edges[i],
            upper: h.edges[i + 1],
            count,
            percent: pct[i],
        })
        .collect()
}

/// Shannon entropy in nats of the in-range bin counts.
pub fn histogram_entropy(h: &Histogram) -> Result<f64> {
    if h.total == 0 {
        return Err(Error::InvalidArgument(
            "entropy of an empty histogram".into(),
        ));
    }
    let n = h.total as f64;
    Ok(-h
        .counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Fraction of in-range bins with at least one observation.
    pub reference_occupied: f64,
    pub candidate_occupied: f64,
    /// Candidate 99th-percentile edge over the reference one.
    pub range_ratio: f64,
    /// `Σ min(p_i, q_i)` over bins and the overflow bucket.
    pub overlap: f64,
}

pub fn coverage_report(reference: &Histogram, candidate: &Histogram) -> Result<CoverageReport> {
    if !reference.same_edges(candidate) {
        return Err(Error::EdgeMismatch);
    }
    if reference.observations() == 0 || candidate.observations() == 0 {
        return Err(Error::InvalidArgument(
            "coverage needs non-empty histograms".into(),
        ));
    }
    let occupied =
        |h: &Histogram| h.counts.iter().filter(|&&c| c > 0).count() as f64 / h.bins() as f64;
    // integer cross-multiplication keeps identical histograms at exactly 1
    let with_overflow = |h: &Histogram| {
        h.counts
            .iter()
            .chain(std::iter::once(&h.overflow))
            .map(|&c| c as u128)
            .collect::<Vec<_>>()
    };
    let (nr, nc) = (
        reference.observations() as u128,
        candidate.observations() as u128,
    );
    let shared: u128 = with_overflow(reference)
        .iter()
        .zip(with_overflow(candidate))
        .map(|(r, c)| (r * nc).min(c * nr))
        .sum();
    let overlap = shared as f64 / (nr * nc) as f64;
    let (r99, c99) = (reference.quantile_edge(0.99), candidate.quantile_edge(0.99));
    let range_ratio = if r99.is_infinite() && c99.is_infinite() {
        1.0
    } else {
        c99 / r99
    };
    Ok(CoverageReport {
        reference_occupied: occupied(reference),
        candidate_occupied: occupied(candidate),
        range_ratio,
        overlap,
    })
}

#[cfg(test)]
mod tests;
