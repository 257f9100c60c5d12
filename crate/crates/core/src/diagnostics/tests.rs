use super::*;
use crate::corpus::{Document, Origin};
use crate::editor::{edit_corpus, EditPolicy};
use crate::fixture;
use crate::prior::{sample_sequence, train_ngram_prior, UniformPrior};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus(texts: &[&str]) -> Corpus {
    let docs = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Document::new(format!("d{i}"), *t, Origin::Human))
        .collect();
    Corpus::new(docs, "test").unwrap()
}

fn iqr(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let q = |f: f64| v[((v.len() - 1) as f64 * f).round() as usize];
    q(0.75) - q(0.25)
}

#[test]
fn histogram_binning() {
    let h = Histogram::from_values(vec![0.0, 1.0, 2.0], [0.0, 0.5, 1.0, 2.0, 2.5, -1.0]).unwrap();
    assert_eq!(h.counts, [3, 2]);
    assert_eq!(h.overflow, 1);
    assert_eq!(h.total + h.overflow, 6);
    assert!(Histogram::new(vec![1.0, 1.0]).is_err());
    assert!(Histogram::new(vec![1.0]).is_err());
}

#[test]
fn uniform_edges_end_exactly() {
    let h = Histogram::uniform(0.0, 1.0, 10).unwrap();
    assert_eq!(h.edges.len(), 11);
    assert_eq!(*h.edges.last().unwrap(), 1.0);
    assert_eq!(default_ppl_edges().len(), 51);
    assert_eq!(*default_ppl_edges().last().unwrap(), 100.0);
}

#[test]
fn uniform_prior_ppl_is_vocab_size() {
    let c = corpus(&["a b c d e f"]);
    let tok = Tokenizer::fit_whitespace(["a b c d e f"]);
    let prior = UniformPrior::new(100, tok.id()).unwrap();
    let profile = ppl_profile(&c, &tok, &prior, default_ppl_edges(), None).unwrap();
    assert_eq!(profile.scores.len(), 1);
    assert!((profile.scores[0].ppl / 100.0 - 1.0).abs() < 1e-12);
    assert_eq!(profile.histogram.total + profile.histogram.overflow, 1);
}

#[test]
fn empty_documents_are_skipped_and_reported() {
    let c = corpus(&["a b", "", "b a"]);
    let tok = Tokenizer::fit_whitespace(["a b"]);
    let prior = UniformPrior::new(tok.vocab_size(), tok.id()).unwrap();
    let p = ppl_profile(&c, &tok, &prior, default_ppl_edges(), None).unwrap();
    assert_eq!(p.skipped, ["d1"]);
    assert_eq!(p.histogram.observations(), 2);
    let chunked = ppl_profile(&c, &tok, &prior, default_ppl_edges(), Some(1)).unwrap();
    assert_eq!(chunked.histogram.observations(), 4);
    assert!(ppl_profile(&Corpus::empty("x"), &tok, &prior, default_ppl_edges(), None).is_err());
}

#[test]
fn sampled_text_has_narrower_ppl_spread() {
    let human = fixture::human_corpus(5, "h", 300, 60, 1);
    let (train, held_out) = crate::corpus::split_corpus(&human, 0.7, 3).unwrap();
    let tok = Tokenizer::fit_whitespace(human.documents().iter().map(|d| d.text.as_str()));
    let prior = train_ngram_prior(&train, &tok, 3, 0.75).unwrap();
    let docs = (0..held_out.len())
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let toks = sample_sequence(&prior, 60, &mut rng).unwrap();
            Document::new(format!("s{i}"), tok.detokenize(&toks), Origin::Synthetic)
        })
        .collect();
    let synth = Corpus::new(docs, "sampled").unwrap();
    let h = ppl_profile(&held_out, &tok, &prior, default_ppl_edges(), None).unwrap();
    let s = ppl_profile(&synth, &tok, &prior, default_ppl_edges(), None).unwrap();
    let h_iqr = iqr(h.scores.iter().map(|x| x.ppl).collect());
    let s_iqr = iqr(s.scores.iter().map(|x| x.ppl).collect());
    assert!(s_iqr < h_iqr, "{s_iqr} vs {h_iqr}");
}

#[test]
fn token_profile_percentages_sum_to_hundred() {
    let c = fixture::human_corpus(1, "t", 40, 50, 2);
    let tok = Tokenizer::fit_whitespace(c.documents().iter().map(|d| d.text.as_str()));
    let prior = train_ngram_prior(&c, &tok, 3, 0.75).unwrap();
    let h = token_prob_profile(&c, &tok, &prior).unwrap();
    let (pct, over) = h.percentages();
    assert!((pct.iter().sum::<f64>() + over - 100.0).abs() < 0.01);
    assert_eq!(over, 0.0);
    let rows = interval_rows(&h);
    assert_eq!(rows.len(), 10);
    assert_eq!(
        rows.iter().map(|r| r.count).sum::<u64>(),
        token_probabilities(&c, &tok, &prior).unwrap().len() as u64
    );
}

#[test]
fn editing_removes_near_certain_tokens() {
    let c = fixture::human_corpus(1, "t", 80, 60, 4);
    let tok = Tokenizer::fit_whitespace(c.documents().iter().map(|d| d.text.as_str()));
    let prior = train_ngram_prior(&c, &tok, 3, 0.75).unwrap();
    let count = |c: &Corpus| {
        token_probabilities(c, &tok, &prior)
            .unwrap()
            .iter()
            .filter(|&&p| p >= 0.99)
            .count()
    };
    let before = count(&c);
    let policy = EditPolicy::top_k(0.99, 8)
        .excluding_original(true)
        .with_seed(1);
    let after = count(&edit_corpus(&c, &tok, &prior, &policy).unwrap().corpus);
    assert!(before > 0);
    assert!(after < before, "{after} vs {before}");
}

#[test]
fn entropy_examples() {
    let uniform = Histogram::from_values(
        (0..=10).map(f64::from).collect(),
        (0..10).map(|i| i as f64 + 0.5),
    )
    .unwrap();
    assert!((histogram_entropy(&uniform).unwrap() - 10f64.ln()).abs() < 1e-12);
    let point = Histogram::from_values(vec![0.0, 1.0, 2.0], [0.5, 0.5]).unwrap();
    assert_eq!(histogram_entropy(&point).unwrap(), 0.0);
    assert!(histogram_entropy(&Histogram::new(vec![0.0, 1.0]).unwrap()).is_err());
}

#[test]
fn coverage_examples() {
    let edges: Vec<f64> = (0..=10).map(f64::from).collect();
    let reference = Histogram::from_values(edges.clone(), (0..10).map(|i| i as f64 + 0.5)).unwrap();
    let same = coverage_report(&reference, &reference).unwrap();
    assert_eq!(same.overlap, 1.0);
    assert_eq!(same.range_ratio, 1.0);
    assert_eq!(same.reference_occupied, 1.0);
    let narrow = Histogram::from_values(edges, [0.5; 10]).unwrap();
    let r = coverage_report(&reference, &narrow).unwrap();
    assert!((r.overlap - 0.1).abs() < 1e-12);
    assert_eq!(r.range_ratio, 0.1);
    assert_eq!(r.candidate_occupied, 0.1);
    let other = Histogram::new(vec![0.0, 2.0]).unwrap();
    assert!(matches!(
        coverage_report(&reference, &other),
        Err(Error::EdgeMismatch)
    ));
}

#[test]
fn feature_counts_match_ngram_identity() {
    let c = corpus(&["a b c d", "a", "", "b c"]);
    let tok = Tokenizer::fit_whitespace(["a b c d"]);
    let p = hash_ngram_features(&c, &tok, &[1, 2], 16, 9).unwrap();
    // unigrams 4+1+0+2, bigrams 3+0+0+1
    assert_eq!(p.total_ngrams, 11);
    assert_eq!(p.counts.iter().sum::<u64>(), 11);
    let one = hash_ngram_features(&c, &tok, &[1, 2], 1, 9).unwrap();
    assert_eq!(one.counts, [11]);
    assert!(hash_ngram_features(&c, &tok, &[1], 0, 0).is_err());
    assert!(hash_ngram_features(&c, &tok, &[], 4, 0).is_err());
}

#[test]
fn bucket_hash_is_fnv_over_le_bytes() {
    let bytes: Vec<u8> = [3u32, 5].iter().flat_map(|t| t.to_le_bytes()).collect();
    let expected = (crate::hash::fnv1a64(&bytes) ^ 77) % 1000;
    assert_eq!(bucket_of(&[3, 5], 77, 1000) as u64, expected);
}

#[test]
fn profile_text_round_trip() {
    let c = fixture::human_corpus(2, "f", 10, 30, 1);
    let tok = Tokenizer::fit_whitespace(c.documents().iter().map(|d| d.text.as_str()));
    let p = hash_ngram_features(&c, &tok, &[2, 1], 50, 3).unwrap();
    assert_eq!(p.n_orders, [1, 2]);
    let text = p.to_text();
    assert!(text.starts_with("TOEDIT-FEATURES-v1 buckets=50 n_orders=1,2 hash_seed=3 "));
    assert_eq!(FeatureProfile::from_text(&text).unwrap(), p);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.txt");
    save_profile(&p, &path).unwrap();
    assert_eq!(load_profile(&path).unwrap(), p);
    assert!(FeatureProfile::from_text("garbage\n1\n").is_err());
}

#[test]
fn top_ngram_examples() {
    let tok = Tokenizer::whitespace(["a", "b"]).unwrap();
    let c = corpus(&["a b a b a"]);
    assert_eq!(
        top_ngrams(&c, &tok, 2, 10).unwrap(),
        [(vec![0, 1], 2), (vec![1, 0], 2)]
    );
    assert_eq!(
        top_ngrams(&corpus(&["a a b"]), &tok, 1, 5).unwrap(),
        [(vec![0], 2), (vec![1], 1)]
    );
    assert_eq!(top_ngrams(&c, &tok, 2, 1).unwrap().len(), 1);
    assert!(top_ngrams(&c, &tok, 2, 0).is_err());
}

#[test]
fn identical_profiles_give_zero_weights() {
    let c = fixture::human_corpus(2, "f", 20, 30, 1);
    let tok = Tokenizer::fit_whitespace(c.documents().iter().map(|d| d.text.as_str()));
    let p = hash_ngram_features(&c, &tok, &[1, 2], 1000, 0).unwrap();
    let w = dsir_weights(&c, &p, &p, &tok).unwrap();
    assert!(w.per_doc_log_weight.iter().all(|d| d.log_weight == 0.0));
}

#[test]
fn two_bucket_weight_matches_hand_arithmetic() {
    let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
    let tok = Tokenizer::whitespace(words.clone()).unwrap();
    let in_bucket = |b: usize| {
        words
            .iter()
            .find(|w| bucket_of(&[tok.token_id(w).unwrap()], 0, 2) == b)
            .unwrap()
            .clone()
    };
    let (zero, one) = (in_bucket(0), in_bucket(1));
    let profile = |counts: Vec<u64>| FeatureProfile {
        buckets: 2,
        total_ngrams: counts.iter().sum(),
        counts,
        n_orders: vec![1],
        hash_seed: 0,
    };
    let target = profile(vec![3, 1]);
    let raw = profile(vec![1, 3]);
    let c = corpus(&[&format!("{zero} {zero} {one}")]);
    let w = dsir_weights(&c, &target, &raw, &tok).unwrap();
    // p̂ = (4/6, 2/6), q̂ = (2/6, 4/6): 2·ln 2 + ln(1/2) = ln 2
    assert!((w.per_doc_log_weight[0].log_weight - 2f64.ln()).abs() < 1e-12);
    let favored = corpus(&[&format!("{zero} {zero}")]);
    assert!(
        dsir_weights(&favored, &target, &raw, &tok)
            .unwrap()
            .per_doc_log_weight[0]
            .log_weight
            > 0.0
    );
}

#[test]
fn mismatched_profiles_are_rejected() {
    let c = corpus(&["a"]);
    let tok = Tokenizer::fit_whitespace(["a"]);
    let a = hash_ngram_features(&c, &tok, &[1], 4, 0).unwrap();
    let b = hash_ngram_features(&c, &tok, &[1], 4, 1).unwrap();
    let e = hash_ngram_features(&c, &tok, &[1, 2], 4, 0).unwrap();
    assert!(matches!(
        dsir_weights(&c, &a, &b, &tok),
        Err(Error::ProfileMismatch(_))
    ));
    assert!(matches!(
        dsir_weights(&c, &a, &e, &tok),
        Err(Error::ProfileMismatch(_))
    ));
}

fn flat_weights(c: &Corpus, w: f64) -> DsirWeights {
    DsirWeights {
        per_doc_log_weight: c
            .documents()
            .iter()
            .map(|d| DocWeight {
                doc_id: d.id.clone(),
                log_weight: w,
            })
            .collect(),
    }
}

#[test]
fn select_everything_returns_corpus() {
    let c = corpus(&["a", "b", "c"]);
    let s = dsir_select(&c, &flat_weights(&c, 0.0), 3, 5).unwrap();
    assert_eq!(s.documents(), c.documents());
    assert!(dsir_select(&c, &flat_weights(&c, 0.0), 4, 5).is_err());
}

#[test]
fn heavy_weight_is_selected() {
    let c = corpus(&["a", "b", "c", "d", "e"]);
    let mut w = flat_weights(&c, 0.0);
    w.per_doc_log_weight[3].log_weight = 1000.0;
    let hits = (0..1000)
        .filter(|&seed| dsir_select(&c, &w, 1, seed).unwrap().documents()[0].id == "d3")
        .count();
    assert!(hits >= 999);
}

#[test]
fn flat_weights_select_uniformly() {
    let texts: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
    let c = corpus(&texts.iter().map(String::as_str).collect::<Vec<_>>());
    let w = flat_weights(&c, 0.0);
    let mut freq = [0usize; 10];
    let seeds = 10_000;
    for seed in 0..seeds {
        let id = dsir_select(&c, &w, 1, seed).unwrap().documents()[0]
            .id
            .clone();
        freq[id[1..].parse::<usize>().unwrap()] += 1;
    }
    let mean = seeds as f64 / 10.0;
    let sd = (seeds as f64 * 0.1 * 0.9).sqrt();
    for f in freq {
        assert!((f as f64 - mean).abs() <= 3.0 * sd, "{freq:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn profiles_ignore_document_order(n_docs in 1usize..20, seed in any::<u64>(), buckets in 1usize..500) {
        let c = fixture::human_corpus(3, "o", n_docs, 20, seed);
        let tok = Tokenizer::fit_whitespace(c.documents().iter().map(|d| d.text.as_str()));
        let mut docs = c.documents().to_vec();
        docs.reverse();
        docs.rotate_left(n_docs / 2);
        let shuffled = Corpus::new(docs, "shuffled").unwrap();
        let a = hash_ngram_features(&c, &tok, &[1, 2], buckets, seed).unwrap();
        let b = hash_ngram_features(&shuffled, &tok, &[1, 2], buckets, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let exact: usize = c.documents().iter().map(|d| {
            let n = tok.encode(&d.text).len();
            n + n.saturating_sub(1)
        }).sum();
        prop_assert_eq!(a.total_ngrams as usize, exact);
    }

    #[test]
    fn entropy_is_bounded(counts in proptest::collection::vec(0u64..50, 1..30)) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let bins = counts.len();
        let mut h = Histogram::uniform(0.0, 1.0, bins).unwrap();
        h.total = counts.iter().sum();
        h.counts = counts;
        prop_assert!(histogram_entropy(&h).unwrap() <= (bins as f64).ln() + 1e-12);
    }

    #[test]
    fn histogram_totals_reconcile(values in proptest::collection::vec(-5.0f64..150.0, 0..200)) {
        let h = Histogram::from_values(default_ppl_edges(), values.iter().copied()).unwrap();
        prop_assert_eq!(h.total + h.overflow, values.len() as u64);
        prop_assert_eq!(h.counts.iter().sum::<u64>(), h.total);
    }
}
