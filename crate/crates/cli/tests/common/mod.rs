#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::Value;
use tiny_http::{Header, Response, Server};
use toedit_core::corpus::write_corpus;
use toedit_core::prior::{Candidate, PositionScore, PriorMeta, ScoreRequest, ScoreResponse};
use toedit_core::{Corpus, PriorModel};

pub const BIN: &str = env!("CARGO_BIN_EXE_toedit");

pub fn toedit(args: &[&str]) -> Output {
    toedit_env(args, &[])
}

pub fn toedit_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("TOEDIT_PROVIDER_URL");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("toedit runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

/// Runs and asserts success.
pub fn ok(args: &[&str]) -> Output {
    let out = toedit(args);
    assert_eq!(
        code(&out),
        0,
        "toedit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not json ({e}): {text}"))
}

pub fn write(dir: &Path, name: &str, c: &Corpus) -> PathBuf {
    let path = dir.join(name);
    write_corpus(c, &path).unwrap();
    path
}

pub fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Response rewriting applied by a [`MockProvider`] after scoring.
pub type Tamper = dyn Fn(&mut ScoreResponse) + Send + Sync;

/// HTTP scorer answering from a local prior, optionally corrupting replies.
pub struct MockProvider {
    server: Arc<Server>,
    handle: Option<JoinHandle<()>>,
    pub url: String,
}

impl MockProvider {
    pub fn serve(prior: Arc<dyn PriorModel>, tamper: Option<Arc<Tamper>>) -> Self {
        Self::serve_with_meta(
            PriorMeta {
                tokenizer_id: prior.tokenizer_id().to_string(),
                vocab_size: prior.vocab_size(),
                model_identifier: "mock".into(),
            },
            prior,
            tamper,
        )
    }

    pub fn serve_with_meta(
        meta: PriorMeta,
        prior: Arc<dyn PriorModel>,
        tamper: Option<Arc<Tamper>>,
    ) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind mock"));
        let url = format!("http://{}", server.server_addr());
        let srv = Arc::clone(&server);
        let handle = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let body = match req.url() {
                    "/v1/meta" => serde_json::to_string(&meta).unwrap(),
                    "/v1/score" => {
                        let mut text = String::new();
                        req.as_reader().read_to_string(&mut text).unwrap();
                        let sreq: ScoreRequest = serde_json::from_str(&text).unwrap();
                        let mut resp = score(prior.as_ref(), &sreq);
                        if let Some(t) = &tamper {
                            t(&mut resp);
                        }
                        serde_json::to_string(&resp).unwrap()
                    }
                    _ => {
                        let _ = req.respond(Response::empty(404));
                        continue;
                    }
                };
                let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = req.respond(Response::from_string(body).with_header(header));
            }
        });
        MockProvider {
            server,
            handle: Some(handle),
            url,
        }
    }
}

impl Drop for MockProvider {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn score(prior: &dyn PriorModel, req: &ScoreRequest) -> ScoreResponse {
    let per_position = (0..req.tokens.len())
        .map(|i| {
            let ctx = &req.tokens[..i];
            let topk = prior.next_token_dist(ctx, req.k).unwrap();
            PositionScore {
                prob: prior.token_prob(ctx, req.tokens[i]).unwrap(),
                topk: topk
                    .candidates
                    .iter()
                    .map(|&(token, prob)| Candidate { token, prob })
                    .collect(),
            }
        })
        .collect();
    ScoreResponse { per_position }
}
