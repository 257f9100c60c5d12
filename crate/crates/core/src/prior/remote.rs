//! HTTP client for a remote scorer.
//!
//! Wire protocol (JSON over HTTP/1.1):
//!
//! - `GET  /v1/meta`  → `{"tokenizer_id", "vocab_size", "model_identifier"}`
//! - `POST /v1/score` with `{"tokens": [..], "k": n}` →
//!   `{"per_position": [{"prob": p, "topk": [{"token": t, "prob": q}, ..]}, ..]}`
//!
//! Entry `i` of `per_position` describes `P(· | tokens[..i])`: `prob` is the
//! probability of `tokens[i]` itself and `topk` the `k` most likely tokens at
//! that position. Probabilities are on the natural (not log) scale.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_token, PriorModel, TopKDistribution};
use crate::corpus::TokenId;
use crate::error::{Error, Result};

/// Mass slack tolerated on the wire.
const WIRE_MASS_TOLERANCE: f64 = 1e-6;
const MAX_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorMeta {
    pub tokenizer_id: String,
    pub vocab_size: usize,
    #[serde(default)]
    pub model_identifier: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub tokens: Vec<TokenId>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub token: TokenId,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionScore {
    pub prob: f64,
    pub topk: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub per_position: Vec<PositionScore>,
}

/// Checks a response against the protocol rules. Rule ids: `LENGTH_MATCH`,
/// `PROB_POSITIVE`, `TOPK_SIZE`, `TOKEN_RANGE`, `TOPK_SORTED`, `TOPK_MASS`.
pub fn check_score_response(
    req: &ScoreRequest,
    vocab_size: usize,
    resp: &ScoreResponse,
) -> Result<()> {
    if resp.per_position.len() != req.tokens.len() {
        return Err(Error::Conformance {
            rule: "LENGTH_MATCH",
            detail: format!(
                "{} positions returned for {} tokens",
                resp.per_position.len(),
                req.tokens.len()
            ),
        });
    }
    for (i, pos) in resp.per_position.iter().enumerate() {
        if !(pos.prob > 0.0 && pos.prob <= 1.0) {
            return Err(Error::Conformance {
                rule: "PROB_POSITIVE",
                detail: format!("position {i}: prob {}", pos.prob),
            });
        }
        if pos.topk.len() > req.k {
            return Err(Error::Conformance {
                rule: "TOPK_SIZE",
                detail: format!(
                    "position {i}: {} candidates for k={}",
                    pos.topk.len(),
                    req.k
                ),
            });
        }
        if let Some(c) = pos.topk.iter().find(|c| c.token as usize >= vocab_size) {
            return Err(Error::Conformance {
                rule: "TOKEN_RANGE",
                detail: format!(
                    "position {i}: token {} outside vocabulary {vocab_size}",
                    c.token
                ),
            });
        }
        to_topk(pos)
            .validate(WIRE_MASS_TOLERANCE)
            .map_err(|e| match e {
                Error::Conformance { rule, detail } => Error::Conformance {
                    rule,
                    detail: format!("position {i}: {detail}"),
                },
                other => other,
            })?;
    }
    Ok(())
}

fn to_topk(pos: &PositionScore) -> TopKDistribution {
    TopKDistribution::from_sorted(pos.topk.iter().map(|c| (c.token, c.prob)).collect())
}

/// A prior served over HTTP.
#[derive(Debug)]
pub struct RemotePrior {
    endpoint: String,
    k_default: usize,
    agent: ureq::Agent,
    meta: PriorMeta,
}

/// Connects to `endpoint` and fetches its metadata.
pub fn open_remote_prior(
    endpoint: &str,
    k_default: usize,
    timeout: Duration,
) -> Result<RemotePrior> {
    let parsed = endpoint
        .parse::<ureq::http::Uri>()
        .map_err(|e| Error::InvalidArgument(format!("bad endpoint {endpoint:?}: {e}")))?;
    if parsed.scheme_str() != Some("http") || parsed.host().is_none() {
        return Err(Error::InvalidArgument(format!(
            "endpoint {endpoint:?} must be an http:// URL"
        )));
    }
    if k_default == 0 {
        return Err(Error::InvalidArgument(
            "k_default must be at least 1".into(),
        ));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into();
    let endpoint = endpoint.trim_end_matches('/').to_string();
    let mut remote = RemotePrior {
        endpoint,
        k_default,
        agent,
        meta: PriorMeta {
            tokenizer_id: String::new(),
            vocab_size: 0,
            model_identifier: String::new(),
        },
    };
    let meta: PriorMeta = remote.call(|agent, url| agent.get(format!("{url}/v1/meta")).call())?;
    if meta.vocab_size < 2 {
        return Err(Error::Conformance {
            rule: "META_VOCAB",
            detail: format!("vocab_size {} is below 2", meta.vocab_size),
        });
    }
    remote.meta = meta;
    Ok(remote)
}

impl RemotePrior {
    pub fn meta(&self) -> &PriorMeta {
        &self.meta
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn k_default(&self) -> usize {
        self.k_default
    }

    fn call<T, F>(&self, send: F) -> Result<T>
    where
        T: serde::de::DeserializeOwned,
        F: Fn(
            &ureq::Agent,
            &str,
        ) -> std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    {
        let mut last = None;
        for attempt in 0..MAX_ATTEMPTS {
            match send(&self.agent, &self.endpoint) {
                Ok(mut resp) => {
                    return resp
                        .body_mut()
                        .with_config()
                        .limit(u64::MAX)
                        .read_json()
                        .map_err(|e| Error::Conformance {
                            rule: "JSON_BODY",
                            detail: e.to_string(),
                        });
                }
                Err(ureq::Error::StatusCode(503)) => {
                    last = Some("server busy (503)".to_string());
                    std::thread::sleep(Duration::from_millis(50 << attempt));
                }
                Err(ureq::Error::StatusCode(code)) => {
                    return Err(Error::Model(format!(
                        "{} answered HTTP {code}",
                        self.endpoint
                    )));
                }
                Err(e) => {
                    return Err(Error::Transport {
                        endpoint: self.endpoint.clone(),
                        message: e.to_string(),
                    })
                }
            }
        }
        Err(Error::Transport {
            endpoint: self.endpoint.clone(),
            message: last.unwrap_or_default(),
        })
    }

    /// One scoring round trip, conformance-checked.
    pub fn score(&self, tokens: &[TokenId], k: usize) -> Result<ScoreResponse> {
        for &t in tokens {
            check_token(t, self.meta.vocab_size)?;
        }
        let req = ScoreRequest {
            tokens: tokens.to_vec(),
            k,
        };
        let resp: ScoreResponse =
            self.call(|agent, url| agent.post(format!("{url}/v1/score")).send_json(&req))?;
        check_score_response(&req, self.meta.vocab_size, &resp)?;
        Ok(resp)
    }

    /// Distribution after `context`: scores `context` plus a placeholder token
    /// and reads the last position.
    fn last_position(
        &self,
        context: &[TokenId],
        probe: TokenId,
        k: usize,
    ) -> Result<PositionScore> {
        let mut tokens = context.to_vec();
        tokens.push(probe);
        let mut resp = self.score(&tokens, k)?;
        Ok(resp.per_position.pop().expect("length checked"))
    }
}

impl PriorModel for RemotePrior {
    fn vocab_size(&self) -> usize {
        self.meta.vocab_size
    }

    fn tokenizer_id(&self) -> &str {
        &self.meta.tokenizer_id
    }

    fn distribution(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        let pos = self.last_position(context, 0, self.meta.vocab_size)?;
        let mut dense = vec![0.0; self.meta.vocab_size];
        for c in pos.topk {
            dense[c.token as usize] = c.prob;
        }
        Ok(dense)
    }

    fn token_prob(&self, context: &[TokenId], token: TokenId) -> Result<f64> {
        check_token(token, self.meta.vocab_size)?;
        Ok(self.last_position(context, token, 1)?.prob)
    }

    fn next_token_dist(&self, context: &[TokenId], k: usize) -> Result<TopKDistribution> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(to_topk(&self.last_position(context, 0, k)?))
    }

    fn position_probs(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self
            .score(tokens, 1)?
            .per_position
            .into_iter()
            .map(|p| p.prob)
            .collect())
    }

    fn candidates_at(
        &self,
        tokens: &[TokenId],
        positions: &[usize],
        k: usize,
    ) -> Result<Vec<TopKDistribution>> {
        if positions.is_empty() {
            return Ok(Vec::new());
        }
        let resp = self.score(tokens, k)?;
        positions
            .iter()
            .map(|&i| {
                resp.per_position
                    .get(i)
                    .map(to_topk)
                    .ok_or_else(|| Error::InvalidArgument(format!("position {i} out of range")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(prob: f64, topk: &[(u32, f64)]) -> PositionScore {
        PositionScore {
            prob,
            topk: topk
                .iter()
                .map(|&(token, prob)| Candidate { token, prob })
                .collect(),
        }
    }

    fn req(n: usize, k: usize) -> ScoreRequest {
        ScoreRequest {
            tokens: vec![0; n],
            k,
        }
    }

    fn rule_of(r: Result<()>) -> &'static str {
        match r {
            Err(Error::Conformance { rule, .. }) => rule,
            other => panic!("expected conformance error, got {other:?}"),
        }
    }

    #[test]
    fn accepts_well_formed() {
        let resp = ScoreResponse {
            per_position: vec![pos(0.5, &[(0, 0.5), (1, 0.5)])],
        };
        check_score_response(&req(1, 2), 2, &resp).unwrap();
    }

    #[test]
    fn flags_each_rule() {
        let r = req(1, 2);
        let one = |p| ScoreResponse {
            per_position: vec![p],
        };
        assert_eq!(
            rule_of(check_score_response(&req(2, 2), 4, &one(pos(0.5, &[])))),
            "LENGTH_MATCH"
        );
        assert_eq!(
            rule_of(check_score_response(&r, 4, &one(pos(0.0, &[])))),
            "PROB_POSITIVE"
        );
        assert_eq!(
            rule_of(check_score_response(
                &r,
                4,
                &one(pos(0.5, &[(0, 0.5), (1, 0.0)]))
            )),
            "PROB_POSITIVE"
        );
        assert_eq!(
            rule_of(check_score_response(
                &r,
                4,
                &one(pos(0.5, &[(0, 0.2), (1, 0.5)]))
            )),
            "TOPK_SORTED"
        );
        assert_eq!(
            rule_of(check_score_response(
                &r,
                4,
                &one(pos(0.5, &[(0, 0.7), (1, 0.5)]))
            )),
            "TOPK_MASS"
        );
        assert_eq!(
            rule_of(check_score_response(
                &r,
                4,
                &one(pos(0.5, &[(0, 0.5), (1, 0.2), (2, 0.1)]))
            )),
            "TOPK_SIZE"
        );
        assert_eq!(
            rule_of(check_score_response(&r, 4, &one(pos(0.5, &[(9, 0.5)])))),
            "TOKEN_RANGE"
        );
    }

    #[test]
    fn rejects_non_http_endpoints() {
        assert!(matches!(
            open_remote_prior("ftp://x", 8, Duration::from_secs(1)),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            open_remote_prior("not a url", 8, Duration::from_secs(1)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn unreachable_is_transport_error() {
        // bind then drop to get a port nobody is listening on
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        drop(listener);
        let err = open_remote_prior(
            &format!("http://127.0.0.1:{port}"),
            8,
            Duration::from_secs(2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Transport { .. }), "{err:?}");
    }
}
