use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_token, PriorModel, TopKDistribution};
use crate::corpus::{Corpus, TokenId, Tokenizer};
use crate::error::{Error, Result};

/// First line of every prior container file.
pub const PRIOR_MAGIC: &str = "TOEDIT-NGRAM-v1";
const MAGIC_STEM: &str = "TOEDIT-NGRAM-";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct ContextStats {
    total: u64,
    /// Sorted by token id.
    followers: Vec<(TokenId, u64)>,
}

impl ContextStats {
    fn count(&self, token: TokenId) -> u64 {
        self.followers
            .binary_search_by_key(&token, |f| f.0)
            .map_or(0, |i| self.followers[i].1)
    }
}

/// Interpolated absolute-discounting n-gram model.
///
/// ```text
/// P_o(t | ctx) = max(c(ctx, t) - D, 0) / c(ctx) + D·N1+(ctx·) / c(ctx) · P_{o-1}(t | ctx')
/// P_0(t)       = (c(t) + 1) / (N + V)
/// ```
///
/// `ctx'` drops the oldest token of `ctx`. Unseen contexts fall through to the
/// lower order unchanged. Contexts are never padded: position `i` of a
/// sequence is modelled with at most `i` preceding tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramPrior {
    order: usize,
    discount: f64,
    tokenizer: Tokenizer,
    unigram_counts: Vec<u64>,
    total_tokens: u64,
    /// `tables[j]` maps contexts of length `j` to their follower counts.
    tables: Vec<HashMap<Vec<TokenId>, ContextStats>>,
}

pub fn train_ngram_prior(
    c: &Corpus,
    tok: &Tokenizer,
    order: usize,
    discount: f64,
) -> Result<NgramPrior> {
    let seqs = c.tokenize(tok);
    NgramPrior::train(
        seqs.iter().map(|s| s.tokens.as_slice()),
        tok.clone(),
        order,
        discount,
    )
}

impl NgramPrior {
    pub fn train<'a, I>(
        sequences: I,
        tokenizer: Tokenizer,
        order: usize,
        discount: f64,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [TokenId]>,
    {
        if order == 0 {
            return Err(Error::InvalidArgument(
                "n-gram order must be at least 1".into(),
            ));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "discount {discount} outside (0, 1)"
            )));
        }
        let vocab_size = tokenizer.vocab_size();
        let mut unigram_counts = vec![0u64; vocab_size];
        let mut raw: Vec<HashMap<Vec<TokenId>, HashMap<TokenId, u64>>> =
            vec![HashMap::new(); order];
        let mut total_tokens = 0u64;

        for tokens in sequences {
            for (i, &t) in tokens.iter().enumerate() {
                check_token(t, vocab_size)?;
                unigram_counts[t as usize] += 1;
                total_tokens += 1;
                for (ctx_len, table) in raw.iter_mut().enumerate().take(i + 1) {
                    let ctx = &tokens[i - ctx_len..i];
                    *table.entry(ctx.to_vec()).or_default().entry(t).or_default() += 1;
                }
            }
        }
        if total_tokens == 0 {
            return Err(Error::InvalidArgument(
                "corpus has no tokens to train on".into(),
            ));
        }

        let tables = raw
            .into_iter()
            .map(|table| {
                table
                    .into_iter()
                    .map(|(ctx, followers)| {
                        let mut followers: Vec<_> = followers.into_iter().collect();
                        followers.sort_unstable();
                        let total = followers.iter().map(|f| f.1).sum();
                        (ctx, ContextStats { total, followers })
                    })
                    .collect()
            })
            .collect();

        Ok(NgramPrior {
            order,
            discount,
            tokenizer,
            unigram_counts,
            total_tokens,
            tables,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    fn base_prob(&self, token: TokenId) -> f64 {
        (self.unigram_counts[token as usize] + 1) as f64
            / (self.total_tokens + self.unigram_counts.len() as u64) as f64
    }

    /// Context statistics from the shortest (empty) context upward, stopping
    /// at the first unseen context.
    fn context_chain<'a>(
        &'a self,
        context: &'a [TokenId],
    ) -> impl Iterator<Item = &'a ContextStats> + 'a {
        let max_len = (self.order - 1).min(context.len());
        (0..=max_len).map_while(move |len| self.tables[len].get(&context[context.len() - len..]))
    }

    fn lambda(&self, stats: &ContextStats) -> f64 {
        self.discount * stats.followers.len() as f64 / stats.total as f64
    }

    fn discounted(&self, count: u64, stats: &ContextStats) -> f64 {
        (count as f64 - self.discount).max(0.0) / stats.total as f64
    }
}

impl PriorModel for NgramPrior {
    fn vocab_size(&self) -> usize {
        self.unigram_counts.len()
    }

    fn tokenizer_id(&self) -> &str {
        self.tokenizer.id()
    }

    fn distribution(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        let mut probs: Vec<f64> = (0..self.vocab_size() as TokenId)
            .map(|t| self.base_prob(t))
            .collect();
        for stats in self.context_chain(context) {
            let lambda = self.lambda(stats);
            probs.iter_mut().for_each(|p| *p *= lambda);
            for &(t, c) in &stats.followers {
                let p = &mut probs[t as usize];
                *p += self.discounted(c, stats);
            }
        }
        Ok(probs)
    }

    fn token_prob(&self, context: &[TokenId], token: TokenId) -> Result<f64> {
        check_token(token, self.vocab_size())?;
        let mut p = self.base_prob(token);
        for stats in self.context_chain(context) {
            let scaled = self.lambda(stats) * p;
            let c = stats.count(token);
            // matches `distribution` bit for bit: unseen tokens keep the scaled value
            p = if c == 0 {
                scaled
            } else {
                scaled + self.discounted(c, stats)
            };
        }
        Ok(p)
    }

    fn next_token_dist(&self, context: &[TokenId], k: usize) -> Result<TopKDistribution> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(TopKDistribution::from_dense(
            &self.distribution(context)?,
            k,
        ))
    }
}

/// `(context, [(token, count)])`.
type TableEntry = (Vec<TokenId>, Vec<(TokenId, u64)>);

#[derive(Serialize, Deserialize)]
struct ContainerBody {
    order: usize,
    discount: f64,
    tokenizer: Tokenizer,
    unigram_counts: Vec<u64>,
    /// One list per context length.
    tables: Vec<Vec<TableEntry>>,
}

/// The magic line followed by a JSON body. Contexts are sorted so the output
/// is byte-stable across runs.
pub fn prior_to_string(prior: &NgramPrior) -> String {
    let tables = prior
        .tables
        .iter()
        .map(|table| {
            let mut entries: Vec<_> = table
                .iter()
                .map(|(ctx, s)| (ctx.clone(), s.followers.clone()))
                .collect();
            entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
            entries
        })
        .collect();
    let body = ContainerBody {
        order: prior.order,
        discount: prior.discount,
        tokenizer: prior.tokenizer.clone(),
        unigram_counts: prior.unigram_counts.clone(),
        tables,
    };
    let mut out = String::from(PRIOR_MAGIC);
    out.push('\n');
    out.push_str(&serde_json::to_string(&body).expect("prior body serializes"));
    out.push('\n');
    out
}

pub fn save_prior(prior: &NgramPrior, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, prior_to_string(prior)).map_err(|e| Error::io(path, e))
}

pub fn load_prior(path: impl AsRef<Path>) -> Result<NgramPrior> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .unwrap_or(bytes.len());
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| Error::UnrecognizedPrior)?;
    if header != PRIOR_MAGIC {
        return Err(match header.strip_prefix(MAGIC_STEM) {
            Some(version) if version.starts_with('v') => Error::PriorVersion {
                found: version.to_string(),
                expected: "v1".into(),
            },
            _ => Error::UnrecognizedPrior,
        });
    }
    let body: ContainerBody = serde_json::from_slice(&bytes[(header_end + 1).min(bytes.len())..])
        .map_err(|e| Error::MalformedPrior(e.to_string()))?;

    if body.order == 0 || body.tables.len() != body.order {
        return Err(Error::MalformedPrior(
            "table count does not match order".into(),
        ));
    }
    if body.unigram_counts.len() != body.tokenizer.vocab_size() {
        return Err(Error::MalformedPrior(
            "unigram table does not match vocabulary".into(),
        ));
    }
    let tables = body
        .tables
        .into_iter()
        .map(|entries| {
            entries
                .into_iter()
                .map(|(ctx, followers)| {
                    let total = followers.iter().map(|f| f.1).sum();
                    (ctx, ContextStats { total, followers })
                })
                .collect()
        })
        .collect();
    Ok(NgramPrior {
        order: body.order,
        discount: body.discount,
        tokenizer: body.tokenizer,
        total_tokens: body.unigram_counts.iter().sum(),
        unigram_counts: body.unigram_counts,
        tables,
    })
}
