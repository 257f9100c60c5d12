//! Executes resolved commands into named output files.

use std::time::Duration;

use serde_json::{json, Value};
use toedit_core::corpus::{self, CorpusFormat};
use toedit_core::diagnostics::{
    coverage_report, dsir_select, dsir_weights, hash_ngram_features, histogram_entropy,
    interval_rows, ppl_profile, token_prob_profile, top_ngrams, Histogram,
};
use toedit_core::editor::{run_generations, Strategy};
use toedit_core::prior::{self, load_prior, open_remote_prior, train_ngram_prior};
use toedit_core::simulator::{self, linear_fit, SimTrajectory};
use toedit_core::{Corpus, Error as CoreError, PriorModel, Tokenizer, UniformPrior};

use crate::error::{CliError, CliResult};
use crate::spec::*;

/// One output file: name relative to the output directory and its bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// What a command produced. `failure` is set when outputs were written but
/// some documents could not be processed.
pub struct Outcome {
    pub outputs: Vec<Output>,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(outputs: Vec<Output>) -> Self {
        Outcome {
            outputs,
            failure: None,
        }
    }
}

fn out(name: &str, bytes: Vec<u8>) -> Output {
    Output {
        name: name.to_string(),
        bytes,
    }
}

fn json_out(name: &str, v: &Value) -> Output {
    let mut bytes = serde_json::to_vec_pretty(v).expect("json values serialize");
    bytes.push(b'\n');
    out(name, bytes)
}

fn csv_out(name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Output {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    out(name, w.into_inner().expect("flushing to memory"))
}

fn load(input: &Input) -> CliResult<Corpus> {
    let format = match input.format {
        Format::Jsonl => CorpusFormat::JsonLines,
        Format::Text => CorpusFormat::PlainTextPerLine,
    };
    Ok(corpus::load_corpus(&input.path, format)?)
}

/// Whitespace vocabularies are fitted on `fit` in order.
fn tokenizer(spec: &TokenizerSpec, fit: &[&Corpus]) -> CliResult<Tokenizer> {
    Ok(match spec {
        TokenizerSpec::Whitespace => Tokenizer::fit_whitespace(
            fit.iter()
                .flat_map(|c| c.documents().iter().map(|d| d.text.as_str())),
        ),
        TokenizerSpec::Byte => Tokenizer::byte(),
        TokenizerSpec::VocabFile { path } => Tokenizer::from_vocab_file(path)?,
    })
}

struct LoadedPrior {
    model: Box<dyn PriorModel>,
    tokenizer: Tokenizer,
    describe: Value,
}

fn open_prior(spec: &PriorSpec, fit: &[&Corpus], k_default: usize) -> CliResult<LoadedPrior> {
    match spec {
        PriorSpec::File { path } => {
            let p = load_prior(path)?;
            let describe = json!({
                "kind": "ngram",
                "order": p.order(),
                "discount": p.discount(),
                "tokenizer_id": p.tokenizer_id(),
                "vocab_size": p.vocab_size(),
            });
            Ok(LoadedPrior {
                tokenizer: p.tokenizer().clone(),
                model: Box::new(p),
                describe,
            })
        }
        PriorSpec::Uniform { tokenizer: t } => {
            let tok = tokenizer(t, fit)?;
            let model = UniformPrior::new(tok.vocab_size(), tok.id())?;
            Ok(LoadedPrior {
                describe: json!({
                    "kind": "uniform",
                    "tokenizer_id": tok.id(),
                    "vocab_size": tok.vocab_size(),
                }),
                model: Box::new(model),
                tokenizer: tok,
            })
        }
        PriorSpec::Remote {
            endpoint,
            timeout_secs,
            tokenizer: t,
        } => {
            let tok = tokenizer(t, fit)?;
            let remote =
                open_remote_prior(endpoint, k_default, Duration::from_secs(*timeout_secs))?;
            let meta = remote.meta().clone();
            if meta.tokenizer_id != tok.id() {
                return Err(CoreError::Conformance {
                    rule: "META_TOKENIZER",
                    detail: format!(
                        "server tokenizer {:?} differs from local {:?}",
                        meta.tokenizer_id,
                        tok.id()
                    ),
                }
                .into());
            }
            if meta.vocab_size != tok.vocab_size() {
                return Err(CoreError::Conformance {
                    rule: "META_VOCAB",
                    detail: format!(
                        "server vocab_size {} differs from local {}",
                        meta.vocab_size,
                        tok.vocab_size()
                    ),
                }
                .into());
            }
            Ok(LoadedPrior {
                describe: json!({
                    "kind": "remote",
                    "endpoint": endpoint,
                    "tokenizer_id": meta.tokenizer_id,
                    "vocab_size": meta.vocab_size,
                    "model_identifier": meta.model_identifier,
                }),
                model: Box::new(remote),
                tokenizer: tok,
            })
        }
    }
}

fn histogram_rows(h: &Histogram) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = interval_rows(h)
        .into_iter()
        .map(|r| {
            vec![
                r.lower.to_string(),
                r.upper.to_string(),
                r.count.to_string(),
                r.percent.to_string(),
            ]
        })
        .collect();
    let (_, overflow_pct) = h.percentages();
    rows.push(vec![
        h.edges[h.bins()].to_string(),
        "inf".to_string(),
        h.overflow.to_string(),
        overflow_pct.to_string(),
    ]);
    rows
}

const HIST_HEADER: [&str; 4] = ["lower", "upper", "count", "percent"];

fn finite_or_inf(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("inf")
    }
}

pub fn execute(cmd: &Resolved) -> CliResult<Outcome> {
    match cmd {
        Resolved::TrainPrior(c) => train(c),
        Resolved::Edit(c) => edit(c),
        Resolved::Simulate(c) => simulate(c),
        Resolved::AnalyzePpl(c) => analyze_ppl(c),
        Resolved::AnalyzeTokens(c) => analyze_tokens(c),
        Resolved::AnalyzeNgrams(c) => analyze_ngrams(c),
        Resolved::AnalyzeCoverage(c) => analyze_coverage(c),
        Resolved::SelectDsir(c) => select(c),
        Resolved::Mix(c) => mix(c),
    }
}

fn train(c: &TrainPrior) -> CliResult<Outcome> {
    let corpus = load(&c.input)?;
    let tok = tokenizer(&c.tokenizer, &[&corpus])?;
    let p = train_ngram_prior(&corpus, &tok, c.order, c.discount)?;
    let tokens: usize = corpus.tokenize(&tok).iter().map(|s| s.len()).sum();
    Ok(Outcome::ok(vec![
        out("prior.ngram", prior::prior_to_string(&p).into_bytes()),
        json_out(
            "summary.json",
            &json!({
                "order": c.order,
                "discount": c.discount,
                "tokenizer_id": tok.id(),
                "vocab_size": tok.vocab_size(),
                "documents": corpus.len(),
                "tokens": tokens,
            }),
        ),
    ]))
}

fn edit(c: &Edit) -> CliResult<Outcome> {
    let corpus = load(&c.input)?;
    let k_default = match c.policy.strategy {
        Strategy::TopK { k } => k,
        Strategy::Rejection { fallback_k, .. } => fallback_k,
        Strategy::TopP { .. } => 8,
    };
    let prior = open_prior(&c.prior, &[&corpus], k_default)?;
    let gens = run_generations(
        &corpus,
        &prior.tokenizer,
        prior.model.as_ref(),
        &c.policy,
        c.generations,
    )?;

    let mut rows = Vec::new();
    let mut per_gen = Vec::new();
    let mut failures = Vec::new();
    for (g, e) in gens.iter().enumerate() {
        for d in &e.documents {
            rows.push(vec![
                (g + 1).to_string(),
                d.doc_id.clone(),
                d.report.total_tokens.to_string(),
                d.report.flagged.to_string(),
                d.report.changed.to_string(),
                d.report.edited_fraction.to_string(),
            ]);
        }
        per_gen.push(json!({
            "generation": g + 1,
            "report": e.report,
            "failures": e.failures,
        }));
        failures.extend(e.failures.iter().cloned());
    }
    let last = gens.last().expect("at least one generation");
    let outputs = vec![
        render_like_input(&c.input, &corpus, &last.corpus)?,
        json_out(
            "report.json",
            &json!({
                "prior": prior.describe,
                "documents": corpus.len(),
                "generations": per_gen,
            }),
        ),
        csv_out(
            "documents.csv",
            &[
                "generation",
                "doc_id",
                "total",
                "flagged",
                "changed",
                "fraction",
            ],
            rows,
        ),
    ];
    Ok(Outcome {
        outputs,
        failure: (!failures.is_empty()).then_some(CliError::Documents(failures)),
    })
}

/// Writes `edited` in the input's format. Documents the editor left alone
/// keep their original input line byte for byte.
fn render_like_input(input: &Input, original: &Corpus, edited: &Corpus) -> CliResult<Output> {
    let mut bytes = Vec::new();
    match input.format {
        Format::Text => {
            for d in edited.documents() {
                bytes.extend_from_slice(d.text.as_bytes());
                bytes.push(b'\n');
            }
            Ok(out("edited.txt", bytes))
        }
        Format::Jsonl => {
            let text =
                std::fs::read_to_string(&input.path).map_err(|e| CliError::io(&input.path, e))?;
            let raw_lines = text.lines().filter(|l| !l.trim().is_empty());
            for ((before, after), line) in original
                .documents()
                .iter()
                .zip(edited.documents())
                .zip(raw_lines)
            {
                if before == after {
                    bytes.extend_from_slice(line.as_bytes());
                    bytes.push(b'\n');
                } else {
                    let line = serde_json::to_string(after).expect("documents serialize");
                    bytes.extend_from_slice(line.as_bytes());
                    bytes.push(b'\n');
                }
            }
            Ok(out("edited.jsonl", bytes))
        }
    }
}

fn trajectory_csv(name: &str, t: &SimTrajectory) -> Output {
    let geometric = t
        .bound_geometric
        .map_or_else(String::new, |b| b.to_string());
    let rows = (0..t.per_generation_test_error.len()).map(|g| {
        vec![
            (g + 1).to_string(),
            t.per_generation_test_error[g].to_string(),
            t.stderr[g].to_string(),
            t.collapse_line[g].to_string(),
            t.bound_relaxed.to_string(),
            geometric.clone(),
        ]
    });
    csv_out(
        name,
        &[
            "generation",
            "mean_error",
            "stderr",
            "collapse_line",
            "bound_relaxed",
            "bound_geometric",
        ],
        rows,
    )
}

fn trajectory_summary(t: &SimTrajectory) -> CliResult<Value> {
    let gens: Vec<f64> = (1..=t.per_generation_test_error.len())
        .map(|g| g as f64)
        .collect();
    let fit = if gens.len() >= 2 {
        let f = linear_fit(&gens, &t.per_generation_test_error)?;
        json!({"slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared})
    } else {
        Value::Null
    };
    let (argmax, _) = t.per_generation_test_error.iter().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
    );
    Ok(json!({
        "fit": fit,
        "max_mean_error": t.max_mean_error(),
        "stderr_at_max": t.stderr[argmax],
        "bound_relaxed": t.bound_relaxed,
        "bound_geometric": t.bound_geometric,
    }))
}

fn simulate(c: &Simulate) -> CliResult<Outcome> {
    let mut outputs = Vec::new();
    let mut summary = json!({ "config": c.sim, "unit_error": c.sim.unit_error() });
    if matches!(c.mode, SimMode::Collapse | SimMode::Both) {
        let t = simulator::run_collapse_process(&c.sim)?;
        outputs.push(trajectory_csv("collapse.csv", &t));
        summary["collapse"] = trajectory_summary(&t)?;
    }
    if matches!(c.mode, SimMode::Edit | SimMode::Both) {
        let t = simulator::run_editing_process(&c.sim)?;
        outputs.push(trajectory_csv("edit.csv", &t));
        summary["edit"] = trajectory_summary(&t)?;
        summary["edit"]["mask_sizes"] = json!(simulator::mask_sizes(
            c.sim.m1_size,
            c.sim.eta,
            c.sim.generations
        ));
    }
    outputs.push(json_out("summary.json", &summary));
    Ok(Outcome::ok(outputs))
}

fn analyze_ppl(c: &AnalyzePpl) -> CliResult<Outcome> {
    let corpus = load(&c.input)?;
    let prior = open_prior(&c.prior, &[&corpus], 1)?;
    let profile = ppl_profile(
        &corpus,
        &prior.tokenizer,
        prior.model.as_ref(),
        c.edges.edges(),
        c.chunk,
    )?;
    let h = &profile.histogram;
    let entropy = histogram_entropy(h).ok();
    let scores = profile.scores.iter().map(|s| {
        vec![
            s.doc_id.clone(),
            s.chunk.to_string(),
            s.tokens.to_string(),
            s.ppl.to_string(),
        ]
    });
    Ok(Outcome::ok(vec![
        csv_out("ppl_histogram.csv", &HIST_HEADER, histogram_rows(h)),
        csv_out(
            "ppl_scores.csv",
            &["doc_id", "chunk", "tokens", "ppl"],
            scores,
        ),
        json_out(
            "summary.json",
            &json!({
                "prior": prior.describe,
                "observations": h.observations(),
                "overflow": h.overflow,
                "p50_edge": finite_or_inf(h.quantile_edge(0.5)),
                "p99_edge": finite_or_inf(h.quantile_edge(0.99)),
                "entropy": entropy,
                "skipped": profile.skipped,
            }),
        ),
    ]))
}

fn analyze_tokens(c: &AnalyzeTokens) -> CliResult<Outcome> {
    let corpus = load(&c.input)?;
    let prior = open_prior(&c.prior, &[&corpus], 1)?;
    let h = token_prob_profile(&corpus, &prior.tokenizer, prior.model.as_ref())?;
    let rows = interval_rows(&h).into_iter().map(|r| {
        vec![
            r.lower.to_string(),
            r.upper.to_string(),
            r.count.to_string(),
            r.percent.to_string(),
        ]
    });
    Ok(Outcome::ok(vec![
        csv_out("token_intervals.csv", &HIST_HEADER, rows),
        json_out(
            "summary.json",
            &json!({
                "prior": prior.describe,
                "tokens": h.observations(),
                "entropy": histogram_entropy(&h).ok(),
            }),
        ),
    ]))
}

fn analyze_ngrams(c: &AnalyzeNgrams) -> CliResult<Outcome> {
    let corpus = load(&c.input)?;
    let tok = tokenizer(&c.tokenizer, &[&corpus])?;
    let profile = hash_ngram_features(
        &corpus,
        &tok,
        &c.ngrams.n_orders,
        c.ngrams.buckets,
        c.ngrams.hash_seed,
    )?;
    let top = top_ngrams(&corpus, &tok, c.top_order, c.top_n)?;
    let rows = top.iter().enumerate().map(|(i, (ids, count))| {
        let text: Vec<&str> = ids
            .iter()
            .map(|&t| tok.token_str(t).unwrap_or(""))
            .collect();
        let ids: Vec<String> = ids.iter().map(u32::to_string).collect();
        vec![
            (i + 1).to_string(),
            count.to_string(),
            text.join(" "),
            ids.join(" "),
        ]
    });
    let occupied = profile.counts.iter().filter(|&&c| c > 0).count();
    Ok(Outcome::ok(vec![
        out("features.txt", profile.to_text().into_bytes()),
        csv_out(
            "top_ngrams.csv",
            &["rank", "count", "ngram", "token_ids"],
            rows,
        ),
        json_out(
            "summary.json",
            &json!({
                "tokenizer_id": tok.id(),
                "total_ngrams": profile.total_ngrams,
                "occupied_buckets": occupied,
                "buckets": profile.buckets,
            }),
        ),
    ]))
}

fn analyze_coverage(c: &AnalyzeCoverage) -> CliResult<Outcome> {
    let reference = load(&c.reference)?;
    let candidate = load(&c.candidate)?;
    let prior = open_prior(&c.prior, &[&reference, &candidate], 1)?;
    let profile = |corpus: &Corpus| {
        ppl_profile(
            corpus,
            &prior.tokenizer,
            prior.model.as_ref(),
            c.edges.edges(),
            None,
        )
    };
    let r = profile(&reference)?;
    let k = profile(&candidate)?;
    let report = coverage_report(&r.histogram, &k.histogram)?;
    Ok(Outcome::ok(vec![
        json_out(
            "coverage.json",
            &json!({
                "prior": prior.describe,
                "reference_occupied": report.reference_occupied,
                "candidate_occupied": report.candidate_occupied,
                "range_ratio": finite_or_inf(report.range_ratio),
                "overlap": report.overlap,
                "reference_p99_edge": finite_or_inf(r.histogram.quantile_edge(0.99)),
                "candidate_p99_edge": finite_or_inf(k.histogram.quantile_edge(0.99)),
            }),
        ),
        csv_out(
            "reference_histogram.csv",
            &HIST_HEADER,
            histogram_rows(&r.histogram),
        ),
        csv_out(
            "candidate_histogram.csv",
            &HIST_HEADER,
            histogram_rows(&k.histogram),
        ),
    ]))
}

fn select(c: &SelectDsir) -> CliResult<Outcome> {
    let raw = load(&c.raw)?;
    let target = load(&c.target)?;
    let tok = tokenizer(&c.tokenizer, &[&target, &raw])?;
    let features = |corpus: &Corpus| {
        hash_ngram_features(
            corpus,
            &tok,
            &c.ngrams.n_orders,
            c.ngrams.buckets,
            c.ngrams.hash_seed,
        )
    };
    let target_profile = features(&target)?;
    let raw_profile = features(&raw)?;
    let weights = dsir_weights(&raw, &target_profile, &raw_profile, &tok)?;
    let selected = dsir_select(&raw, &weights, c.k, c.seed)?;
    let rows = weights.per_doc_log_weight.iter().map(|w| {
        vec![
            w.doc_id.clone(),
            w.log_weight.to_string(),
            selected.get(&w.doc_id).is_some().to_string(),
        ]
    });
    Ok(Outcome::ok(vec![
        out("selected.jsonl", corpus::to_jsonl(&selected).into_bytes()),
        csv_out("weights.csv", &["doc_id", "log_weight", "selected"], rows),
        json_out(
            "summary.json",
            &json!({
                "raw_documents": raw.len(),
                "target_documents": target.len(),
                "selected": selected.len(),
                "tokenizer_id": tok.id(),
            }),
        ),
    ]))
}

fn mix(c: &Mix) -> CliResult<Outcome> {
    let human = load(&c.human)?;
    let synthetic = load(&c.synthetic)?;
    let mixed = corpus::mix_corpora(&human, &synthetic, c.alpha, c.target_size, c.seed)?;
    let n_human = corpus::human_share(c.alpha, c.target_size);
    Ok(Outcome::ok(vec![
        out("mixed.jsonl", corpus::to_jsonl(&mixed).into_bytes()),
        json_out(
            "summary.json",
            &json!({
                "alpha": c.alpha,
                "target_size": c.target_size,
                "human": n_human,
                "synthetic": c.target_size - n_human,
            }),
        ),
    ]))
}
