use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::Gumbel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenId, Tokenizer};
use crate::error::{Error, Result};
use crate::hash;

pub const FEATURE_MAGIC: &str = "TOEDIT-FEATURES-v1";

/// Hashed n-gram bucket counts over a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureProfile {
    pub buckets: usize,
    pub counts: Vec<u64>,
    pub n_orders: Vec<usize>,
    pub hash_seed: u64,
    pub total_ngrams: u64,
}

impl FeatureProfile {
    fn compatible(&self, other: &FeatureProfile) -> Result<()> {
        if self.buckets != other.buckets {
            return Err(Error::ProfileMismatch(format!(
                "buckets {} vs {}",
                self.buckets, other.buckets
            )));
        }
        if self.n_orders != other.n_orders {
            return Err(Error::ProfileMismatch(format!(
                "n_orders {:?} vs {:?}",
                self.n_orders, other.n_orders
            )));
        }
        if self.hash_seed != other.hash_seed {
            return Err(Error::ProfileMismatch(format!(
                "hash_seed {} vs {}",
                self.hash_seed, other.hash_seed
            )));
        }
        Ok(())
    }

    /// Header line then one count per line.
    pub fn to_text(&self) -> String {
        let orders: Vec<String> = self.n_orders.iter().map(usize::to_string).collect();
        let mut out = format!(
            "{FEATURE_MAGIC} buckets={} n_orders={} hash_seed={} total={}\n",
            self.buckets,
            orders.join(","),
            self.hash_seed,
            self.total_ngrams
        );
        for c in &self.counts {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, m: &str| Error::Record {
            line,
            message: m.to_string(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty profile"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(FEATURE_MAGIC) {
            return Err(bad(1, "not a feature profile"));
        }
        let mut fields = HashMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| bad(1, "malformed header field"))?;
            fields.insert(k, v);
        }
        let field = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| bad(1, &format!("missing header field {k}")))
        };
        let num =
            |k: &str| -> Result<u64> { field(k)?.parse().map_err(|_| bad(1, &format!("bad {k}"))) };
        let buckets = num("buckets")? as usize;
        let hash_seed = num("hash_seed")?;
        let total_ngrams = num("total")?;
        let n_orders = field("n_orders")?
            .split(',')
            .map(|s| s.parse().map_err(|_| bad(1, "bad n_orders")))
            .collect::<Result<Vec<usize>>>()?;
        let counts = lines
            .enumerate()
            .map(|(i, l)| l.trim().parse().map_err(|_| bad(i + 2, "bad count")))
            .collect::<Result<Vec<u64>>>()?;
        if counts.len() != buckets || buckets == 0 {
            return Err(bad(
                1,
                &format!("expected {buckets} counts, found {}", counts.len()),
            ));
        }
        if counts.iter().sum::<u64>() != total_ngrams {
            return Err(bad(1, "counts do not sum to total"));
        }
        Ok(FeatureProfile {
            buckets,
            counts,
            n_orders,
            hash_seed,
            total_ngrams,
        })
    }
}

pub fn save_profile(p: &FeatureProfile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, p.to_text()).map_err(|e| Error::io(path, e))
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<FeatureProfile> {
    let path = path.as_ref();
    FeatureProfile::from_text(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// `(FNV-1a(ngram) XOR hash_seed) mod buckets`.
pub fn bucket_of(ngram: &[TokenId], hash_seed: u64, buckets: usize) -> usize {
    ((hash::ngram_hash(ngram) ^ hash_seed) % buckets as u64) as usize
}

fn for_each_bucket(
    tokens: &[TokenId],
    n_orders: &[usize],
    hash_seed: u64,
    buckets: usize,
    mut f: impl FnMut(usize),
) {
    for &n in n_orders {
        for w in tokens.windows(n) {
            f(bucket_of(w, hash_seed, buckets));
        }
    }
}

fn check_orders(n_orders: &[usize]) -> Result<Vec<usize>> {
    if n_orders.is_empty() || n_orders.contains(&0) {
        return Err(Error::InvalidArgument(
            "n-gram orders must be non-empty and positive".into(),
        ));
    }
    let mut v = n_orders.to_vec();
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

pub fn hash_ngram_features(
    c: &Corpus,
    tok: &Tokenizer,
    n_orders: &[usize],
    buckets: usize,
    hash_seed: u64,
) -> Result<FeatureProfile> {
    if buckets == 0 {
        return Err(Error::InvalidArgument("buckets must be at least 1".into()));
    }
    let n_orders = check_orders(n_orders)?;
    let counts = c
        .documents()
        .par_iter()
        .fold(
            || vec![0u64; buckets],
            |mut acc, doc| {
                for_each_bucket(&tok.encode(&doc.text), &n_orders, hash_seed, buckets, |b| {
                    acc[b] += 1
                });
                acc
            },
        )
        .reduce(
            || vec![0u64; buckets],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(FeatureProfile {
        buckets,
        total_ngrams: counts.iter().sum(),
        counts,
        n_orders,
        hash_seed,
    })
}

/// Exact n-gram counts, most frequent first, ties by token ids.
pub fn top_ngrams(
    c: &Corpus,
    tok: &Tokenizer,
    n: usize,
    top_n: usize,
) -> Result<Vec<(Vec<TokenId>, u64)>> {
    if n == 0 || top_n == 0 {
        return Err(Error::InvalidArgument(
            "n and top_n must be at least 1".into(),
        ));
    }
    let mut counts: HashMap<Vec<TokenId>, u64> = HashMap::new();
    for doc in c.documents() {
        for w in tok.encode(&doc.text).windows(n) {
            *counts.entry(w.to_vec()).or_default() += 1;
        }
    }
    let mut out: Vec<_> = counts.into_iter().collect();
    out.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out.truncate(top_n);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocWeight {
    pub doc_id: String,
    pub log_weight: f64,
}

/// Natural-log importance weights in corpus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsirWeights {
    pub per_doc_log_weight: Vec<DocWeight>,
}

impl DsirWeights {
    pub fn get(&self, doc_id: &str) -> Option<f64> {
        self.per_doc_log_weight
            .iter()
            .find(|w| w.doc_id == doc_id)
            .map(|w| w.log_weight)
    }
}

fn smoothed_log(p: &FeatureProfile) -> Vec<f64> {
    let denom = (p.total_ngrams + p.buckets as u64) as f64;
    p.counts
        .iter()
        .map(|&c| ((c + 1) as f64 / denom).ln())
        .collect()
}

/// Per document, the sum over its n-gram bucket hits of `ln p̂(b) − ln q̂(b)`
/// with add-one smoothed bucket distributions for target `p̂` and raw `q̂`.
pub fn dsir_weights(
    raw: &Corpus,
    target_profile: &FeatureProfile,
    raw_profile: &FeatureProfile,
    tok: &Tokenizer,
) -> Result<DsirWeights> {
    target_profile.compatible(raw_profile)?;
    let lp = smoothed_log(target_profile);
    let lq = smoothed_log(raw_profile);
    let ratio: Vec<f64> = lp.iter().zip(&lq).map(|(p, q)| p - q).collect();
    let per_doc_log_weight = raw
        .documents()
        .par_iter()
        .map(|doc| {
            let mut w = 0.0;
            for_each_bucket(
                &tok.encode(&doc.text),
                &raw_profile.n_orders,
                raw_profile.hash_seed,
                raw_profile.buckets,
                |b| w += ratio[b],
            );
            DocWeight {
                doc_id: doc.id.clone(),
                log_weight: w,
            }
        })
        .collect();
    Ok(DsirWeights { per_doc_log_weight })
}

/// Gumbel-top-k: keeps the `k` documents with the largest
/// `log_weight + G(seed, doc id)`. Output keeps corpus order.
pub fn dsir_select(raw: &Corpus, weights: &DsirWeights, k: usize, seed: u64) -> Result<Corpus> {
    if k > raw.len() {
        return Err(Error::InsufficientDocuments {
            source_name: "raw",
            required: k,
            available: raw.len(),
        });
    }
    let lookup: HashMap<&str, f64> = weights
        .per_doc_log_weight
        .iter()
        .map(|w| (w.doc_id.as_str(), w.log_weight))
        .collect();
    let gumbel = Gumbel::new(0.0, 1.0).expect("standard Gumbel");
    let mut keys = raw
        .documents()
        .iter()
        .enumerate()
        .map(|(i, doc)| {
            let w = lookup.get(doc.id.as_str()).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("no weight for document {:?}", doc.id))
            })?;
            let g: f64 = hash::stream(seed, "dsir", doc.id.as_bytes()).sample(gumbel);
            Ok((w + g, i))
        })
        .collect::<Result<Vec<_>>>()?;
    keys.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = keys[..k].iter().map(|&(_, i)| i).collect();
    chosen.sort_unstable();
    let docs = chosen
        .into_iter()
        .map(|i| raw.documents()[i].clone())
        .collect();
    Corpus::new(
        docs,
        format!("dsir(k={k}, seed={seed}) of {}", raw.provenance()),
    )
}
