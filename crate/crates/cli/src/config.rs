//! Config file schema and resolution of flags + file + defaults into a
//! [`Resolved`] command. Every violation is collected before failing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toedit_core::editor::{EditPolicy, Strategy};
use toedit_core::simulator::{SimConfig, WStarMode};

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::spec::*;

pub const PROVIDER_ENV: &str = "TOEDIT_PROVIDER_URL";

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub inputs: InputsSection,
    pub tokenizer: TokenizerSection,
    pub prior: PriorSection,
    pub policy: PolicySection,
    pub sim: SimSection,
    pub diagnostics: DiagnosticsSection,
    pub select: SelectSection,
    pub mix: MixSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputsSection {
    pub format: Option<Format>,
    pub corpus: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub candidate: Option<PathBuf>,
    pub raw: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub human: Option<PathBuf>,
    pub synthetic: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    /// `whitespace`, `byte` or `vocab_file`.
    pub kind: Option<String>,
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub path: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub uniform: Option<bool>,
    pub timeout_secs: Option<u64>,
    pub order: Option<usize>,
    pub discount: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub p: Option<f64>,
    pub strategy: Option<String>,
    pub k: Option<usize>,
    pub nucleus: Option<f64>,
    pub max_rejects: Option<usize>,
    pub fallback_k: Option<usize>,
    pub exclude_original: Option<bool>,
    pub generations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub mode: Option<String>,
    pub d: Option<usize>,
    #[serde(rename = "T")]
    pub t: Option<usize>,
    pub sigma2: Option<f64>,
    pub w_star_mode: Option<String>,
    pub m1_size: Option<usize>,
    pub eta: Option<f64>,
    pub generations: Option<usize>,
    pub trials: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub n_orders: Option<Vec<usize>>,
    pub buckets: Option<usize>,
    pub hash_seed: Option<u64>,
    pub top_order: Option<usize>,
    pub top_n: Option<usize>,
    pub ppl_max: Option<f64>,
    pub ppl_step: Option<f64>,
    pub chunk: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    pub k: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixSection {
    pub alpha: Option<f64>,
    pub target_size: Option<usize>,
}

pub fn load_file_config(path: &Path) -> CliResult<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Relative paths become absolute against the working directory so
/// manifests replay from anywhere.
fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Collects violations while resolving.
#[derive(Default)]
struct Resolver {
    violations: Vec<String>,
}

impl Resolver {
    fn require<T>(&mut self, value: Option<T>, what: &str) -> Option<T> {
        if value.is_none() {
            self.violations.push(format!("missing {what}"));
        }
        value
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(msg());
        }
    }

    fn format(&self, flag: Option<FormatArg>, file: &FileConfig) -> Format {
        match flag {
            Some(FormatArg::Jsonl) => Format::Jsonl,
            Some(FormatArg::Text) => Format::Text,
            None => file.inputs.format.unwrap_or(Format::Jsonl),
        }
    }

    fn input(
        &mut self,
        flag: Option<&PathBuf>,
        file: Option<&PathBuf>,
        format: Format,
        what: &str,
    ) -> Option<Input> {
        let path = self.require(flag.or(file), what)?;
        Some(Input {
            path: absolute(path),
            format,
        })
    }

    fn tokenizer(&mut self, args: &TokenizerArgs, file: &FileConfig) -> TokenizerSpec {
        if let Some(v) = args.vocab.as_ref() {
            return TokenizerSpec::VocabFile { path: absolute(v) };
        }
        match args.tokenizer {
            Some(TokenizerArg::Byte) => return TokenizerSpec::Byte,
            Some(TokenizerArg::Whitespace) => return TokenizerSpec::Whitespace,
            None => {}
        }
        match file.tokenizer.kind.as_deref() {
            None | Some("whitespace") => match &file.tokenizer.vocab {
                Some(v) if file.tokenizer.kind.is_none() => {
                    TokenizerSpec::VocabFile { path: absolute(v) }
                }
                _ => TokenizerSpec::Whitespace,
            },
            Some("byte") => TokenizerSpec::Byte,
            Some("vocab_file") => match &file.tokenizer.vocab {
                Some(v) => TokenizerSpec::VocabFile { path: absolute(v) },
                None => {
                    self.violations
                        .push("tokenizer kind vocab_file needs tokenizer.vocab".into());
                    TokenizerSpec::Whitespace
                }
            },
            Some(other) => {
                self.violations.push(format!(
                    "unknown tokenizer kind {other:?} (whitespace, byte or vocab_file)"
                ));
                TokenizerSpec::Whitespace
            }
        }
    }

    /// Precedence: `--prior`, `--remote`, `--uniform`, then the config file,
    /// then the provider environment variable.
    fn prior(
        &mut self,
        args: &PriorArgs,
        file: &FileConfig,
        env_url: Option<&str>,
    ) -> Option<PriorSpec> {
        let timeout_secs = args.timeout_secs.or(file.prior.timeout_secs).unwrap_or(30);
        let tokenizer = self.tokenizer(&args.tokenizer, file);
        let remote = |endpoint: String, r: &mut Resolver| {
            r.check(tokenizer != TokenizerSpec::Whitespace, || {
                "a remote prior needs --tokenizer byte or --vocab matching the server".into()
            });
            PriorSpec::Remote {
                endpoint,
                timeout_secs,
                tokenizer: tokenizer.clone(),
            }
        };
        let chosen = [args.prior.is_some(), args.remote.is_some(), args.uniform]
            .iter()
            .filter(|&&b| b)
            .count();
        self.check(chosen <= 1, || {
            "choose at most one of --prior, --remote, --uniform".into()
        });
        if let Some(p) = &args.prior {
            return Some(PriorSpec::File { path: absolute(p) });
        }
        if let Some(url) = &args.remote {
            return Some(remote(url.clone(), self));
        }
        if args.uniform || file.prior.uniform == Some(true) {
            return Some(PriorSpec::Uniform {
                tokenizer: tokenizer.clone(),
            });
        }
        if let Some(p) = &file.prior.path {
            return Some(PriorSpec::File { path: absolute(p) });
        }
        if let Some(url) = file.prior.endpoint.clone().or(env_url.map(str::to_string)) {
            return Some(remote(url, self));
        }
        self.violations.push(format!(
            "missing prior: pass --prior, --remote or --uniform, set [prior] in the config, or set {PROVIDER_ENV}"
        ));
        None
    }

    fn edges(&mut self, args: &PplEdgeArgs, file: &FileConfig) -> PplEdges {
        let max = args.ppl_max.or(file.diagnostics.ppl_max).unwrap_or(100.0);
        let step = args.ppl_step.or(file.diagnostics.ppl_step).unwrap_or(2.0);
        self.check(
            max > 0.0 && step > 0.0 && step <= max && max.is_finite(),
            || format!("ppl histogram needs 0 < step <= max, got step {step}, max {max}"),
        );
        PplEdges { max, step }
    }

    fn ngrams(&mut self, args: &NgramArgs, file: &FileConfig) -> NgramSpec {
        let n_orders = args
            .n_orders
            .clone()
            .or(file.diagnostics.n_orders.clone())
            .unwrap_or_else(|| vec![1, 2]);
        let buckets = args.buckets.or(file.diagnostics.buckets).unwrap_or(10_000);
        let hash_seed = args.hash_seed.or(file.diagnostics.hash_seed).unwrap_or(0);
        self.check(!n_orders.is_empty() && !n_orders.contains(&0), || {
            "n_orders must be non-empty and positive".into()
        });
        self.check(buckets >= 1, || "buckets must be at least 1".into());
        NgramSpec {
            n_orders,
            buckets,
            hash_seed,
        }
    }

    fn finish(self, cmd: Option<Resolved>) -> CliResult<Resolved> {
        match cmd {
            Some(c) if self.violations.is_empty() => Ok(c),
            _ => Err(CliError::Config(self.violations)),
        }
    }
}

fn policy(args: &EditArgs, file: &PolicySection, seed: u64, r: &mut Resolver) -> EditPolicy {
    let k = args.k.or(file.k).unwrap_or(8);
    let strategy_name = match args.strategy {
        Some(StrategyArg::TopK) => "top_k".to_string(),
        Some(StrategyArg::TopP) => "top_p".to_string(),
        Some(StrategyArg::Rejection) => "rejection".to_string(),
        None => file.strategy.clone().unwrap_or_else(|| "top_k".into()),
    };
    let strategy = match strategy_name.as_str() {
        "top_k" => Strategy::TopK { k },
        "top_p" => Strategy::TopP {
            nucleus: args.nucleus.or(file.nucleus).unwrap_or(0.99),
        },
        "rejection" => Strategy::Rejection {
            max_rejects: args.max_rejects.or(file.max_rejects).unwrap_or(16),
            fallback_k: args.fallback_k.or(file.fallback_k).unwrap_or(k),
        },
        other => {
            r.violations.push(format!(
                "unknown strategy {other:?} (top_k, top_p or rejection)"
            ));
            Strategy::TopK { k }
        }
    };
    let policy = EditPolicy {
        p: args.p.or(file.p).unwrap_or(0.99),
        strategy,
        exclude_original: args.exclude_original || file.exclude_original.unwrap_or(false),
        seed,
    };
    r.violations.extend(policy.violations());
    policy
}

fn sim_config(args: &SimulateArgs, file: &SimSection, seed: u64, r: &mut Resolver) -> SimConfig {
    let def = SimConfig::default();
    let w_star_mode = match args.w_star_mode.as_deref().or(file.w_star_mode.as_deref()) {
        None | Some("unit_first_axis") => WStarMode::UnitFirstAxis,
        Some("random_unit") => WStarMode::RandomUnit,
        Some(other) => {
            r.violations.push(format!(
                "unknown w_star_mode {other:?} (unit_first_axis or random_unit)"
            ));
            WStarMode::UnitFirstAxis
        }
    };
    let cfg = SimConfig {
        d: args.d.or(file.d).unwrap_or(def.d),
        t: args.t.or(file.t).unwrap_or(def.t),
        sigma2: args.sigma2.or(file.sigma2).unwrap_or(def.sigma2),
        w_star_mode,
        m1_size: args.m1_size.or(file.m1_size).unwrap_or(def.m1_size),
        eta: args.eta.or(file.eta).unwrap_or(def.eta),
        generations: args
            .generations
            .or(file.generations)
            .unwrap_or(def.generations),
        trials: args.trials.or(file.trials).unwrap_or(def.trials),
        seed,
    };
    r.violations.extend(cfg.violations());
    cfg
}

/// Resolves a non-replay command.
pub fn resolve(
    cmd: &Command,
    seed: u64,
    file: &FileConfig,
    env_url: Option<&str>,
) -> CliResult<Resolved> {
    let mut r = Resolver::default();
    let f = &file.inputs;
    let resolved = match cmd {
        Command::TrainPrior(a) => {
            let format = r.format(a.input.format, file);
            let input = r.input(
                a.input.corpus.as_ref(),
                f.corpus.as_ref(),
                format,
                "corpus (--corpus)",
            );
            let tokenizer = r.tokenizer(&a.tokenizer, file);
            let order = a.order.or(file.prior.order).unwrap_or(3);
            let discount = a.discount.or(file.prior.discount).unwrap_or(0.75);
            r.check(order >= 1, || "order must be at least 1".into());
            r.check(discount > 0.0 && discount < 1.0, || {
                format!("discount must lie in (0, 1), got {discount}")
            });
            input.map(|input| {
                Resolved::TrainPrior(TrainPrior {
                    input,
                    tokenizer,
                    order,
                    discount,
                })
            })
        }
        Command::Edit(a) => {
            let format = r.format(a.input.format, file);
            let input = r.input(
                a.input.corpus.as_ref(),
                f.corpus.as_ref(),
                format,
                "corpus (--corpus)",
            );
            let prior = r.prior(&a.prior, file, env_url);
            let generations = a.generations.or(file.policy.generations).unwrap_or(1);
            r.check(generations >= 1, || "generations must be at least 1".into());
            let policy = policy(a, &file.policy, seed, &mut r);
            match (input, prior) {
                (Some(input), Some(prior)) => Some(Resolved::Edit(Edit {
                    input,
                    prior,
                    generations,
                    policy,
                })),
                _ => None,
            }
        }
        Command::Simulate(a) => {
            let mode = match a.mode {
                Some(ModeArg::Collapse) => SimMode::Collapse,
                Some(ModeArg::Edit) => SimMode::Edit,
                Some(ModeArg::Both) => SimMode::Both,
                None => match file.sim.mode.as_deref() {
                    None | Some("both") => SimMode::Both,
                    Some("collapse") => SimMode::Collapse,
                    Some("edit") => SimMode::Edit,
                    Some(other) => {
                        r.violations
                            .push(format!("unknown mode {other:?} (collapse, edit or both)"));
                        SimMode::Both
                    }
                },
            };
            let sim = sim_config(a, &file.sim, seed, &mut r);
            Some(Resolved::Simulate(Simulate { mode, sim }))
        }
        Command::Analyze(AnalyzeCommand::Ppl(a)) => {
            let format = r.format(a.input.format, file);
            let input = r.input(
                a.input.corpus.as_ref(),
                f.corpus.as_ref(),
                format,
                "corpus (--corpus)",
            );
            let prior = r.prior(&a.prior, file, env_url);
            let edges = r.edges(&a.edges, file);
            let chunk = a.chunk.or(file.diagnostics.chunk);
            r.check(chunk != Some(0), || "chunk must be at least 1".into());
            match (input, prior) {
                (Some(input), Some(prior)) => Some(Resolved::AnalyzePpl(AnalyzePpl {
                    input,
                    prior,
                    edges,
                    chunk,
                })),
                _ => None,
            }
        }
        Command::Analyze(AnalyzeCommand::Tokens(a)) => {
            let format = r.format(a.input.format, file);
            let input = r.input(
                a.input.corpus.as_ref(),
                f.corpus.as_ref(),
                format,
                "corpus (--corpus)",
            );
            let prior = r.prior(&a.prior, file, env_url);
            match (input, prior) {
                (Some(input), Some(prior)) => {
                    Some(Resolved::AnalyzeTokens(AnalyzeTokens { input, prior }))
                }
                _ => None,
            }
        }
        Command::Analyze(AnalyzeCommand::Ngrams(a)) => {
            let format = r.format(a.input.format, file);
            let input = r.input(
                a.input.corpus.as_ref(),
                f.corpus.as_ref(),
                format,
                "corpus (--corpus)",
            );
            let tokenizer = r.tokenizer(&a.tokenizer, file);
            let ngrams = r.ngrams(&a.ngrams, file);
            let top_order = a.top_order.or(file.diagnostics.top_order).unwrap_or(2);
            let top_n = a.top_n.or(file.diagnostics.top_n).unwrap_or(40);
            r.check(top_order >= 1 && top_n >= 1, || {
                "top_order and top_n must be at least 1".into()
            });
            input.map(|input| {
                Resolved::AnalyzeNgrams(AnalyzeNgrams {
                    input,
                    tokenizer,
                    top_order,
                    top_n,
                    ngrams,
                })
            })
        }
        Command::Analyze(AnalyzeCommand::Coverage(a)) => {
            let format = r.format(a.format, file);
            let reference = r.input(
                a.reference.as_ref(),
                f.reference.as_ref(),
                format,
                "reference corpus (--reference)",
            );
            let candidate = r.input(
                a.candidate.as_ref(),
                f.candidate.as_ref(),
                format,
                "candidate corpus (--candidate)",
            );
            let prior = r.prior(&a.prior, file, env_url);
            let edges = r.edges(&a.edges, file);
            match (reference, candidate, prior) {
                (Some(reference), Some(candidate), Some(prior)) => {
                    Some(Resolved::AnalyzeCoverage(AnalyzeCoverage {
                        reference,
                        candidate,
                        prior,
                        edges,
                    }))
                }
                _ => None,
            }
        }
        Command::SelectDsir(a) => {
            let format = r.format(a.format, file);
            let raw = r.input(a.raw.as_ref(), f.raw.as_ref(), format, "raw corpus (--raw)");
            let target = r.input(
                a.target.as_ref(),
                f.target.as_ref(),
                format,
                "target corpus (--target)",
            );
            let tokenizer = r.tokenizer(&a.tokenizer, file);
            let ngrams = r.ngrams(&a.ngrams, file);
            let k = r.require(a.k.or(file.select.k), "selection size (--k)");
            match (raw, target, k) {
                (Some(raw), Some(target), Some(k)) => Some(Resolved::SelectDsir(SelectDsir {
                    raw,
                    target,
                    tokenizer,
                    k,
                    seed,
                    ngrams,
                })),
                _ => None,
            }
        }
        Command::Mix(a) => {
            let format = r.format(a.format, file);
            let human = r.input(
                a.human.as_ref(),
                f.human.as_ref(),
                format,
                "human corpus (--human)",
            );
            let synthetic = r.input(
                a.synthetic.as_ref(),
                f.synthetic.as_ref(),
                format,
                "synthetic corpus (--synthetic)",
            );
            let alpha = r.require(a.alpha.or(file.mix.alpha), "mixing ratio (--alpha)");
            let target_size = r.require(
                a.target_size.or(file.mix.target_size),
                "mixture size (--target-size)",
            );
            if let Some(alpha) = alpha {
                r.check((0.0..=1.0).contains(&alpha), || {
                    format!("alpha must lie in [0, 1], got {alpha}")
                });
            }
            match (human, synthetic, alpha, target_size) {
                (Some(human), Some(synthetic), Some(alpha), Some(target_size)) => {
                    Some(Resolved::Mix(Mix {
                        human,
                        synthetic,
                        alpha,
                        target_size,
                        seed,
                    }))
                }
                _ => None,
            }
        }
        Command::Replay(_) => unreachable!("replay is resolved from its manifest"),
    };
    r.finish(resolved)
}
