//! Brute-force reference implementations and the criterion checks built on them.
//!
//! Shared by the core integration tests and the CLI acceptance suite, so every
//! check reports an [`Outcome`] instead of panicking.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::time::Instant;

use focusmeter::corpus::{aggregate_gold, rater_zscores, Label, Variant};
use focusmeter::eval_stats::{fleiss_kappa, ols_standardized, pearson, spearman, Control, Stars};
use focusmeter::forwards_range::{ForwardsRangeModel, TfIdfModel};
use focusmeter::phrase_miner::PhraseModel;
use focusmeter::synth::{self, Style, SynthConfig};
use focusmeter::textprep::{preprocess_reply, preprocess_teacher, LexiconTagger, TokenSeq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

impl Outcome {
    pub fn is_fail(&self) -> bool {
        matches!(self, Outcome::Fail(_))
    }

    fn from_result(r: Result<String, String>) -> Outcome {
        match r {
            Ok(s) => Outcome::Pass(s),
            Err(s) => Outcome::Fail(s),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Pass(d) => write!(f, "PASS  {d}"),
            Outcome::Fail(d) => write!(f, "FAIL  {d}"),
            Outcome::Skip(d) => write!(f, "SKIP  {d}"),
        }
    }
}

#[track_caller]
pub fn assert_pass(outcome: Outcome) {
    assert!(matches!(outcome, Outcome::Pass(_)), "{outcome}");
}

// ---- rank correlation -------------------------------------------------------

/// Rank of each value as 1 + (#smaller) + (#equal − 1) / 2.
pub fn ranks_by_counting(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Two-pass Pearson; NaN when either side is constant.
pub fn pearson_two_pass(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return f64::NAN;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    pearson_two_pass(&ranks_by_counting(x), &ranks_by_counting(y))
}

/// A vector of length `n` with plenty of ties: integers from a small pool,
/// occasionally continuous.
pub fn tied_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if rng.random_bool(0.2) {
        (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()
    } else {
        let pool = rng.random_range(2..=n.max(2));
        (0..n).map(|_| rng.random_range(0..pool) as f64).collect()
    }
}

pub fn check_spearman(seed: u64, pairs: usize) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut undefined = 0;
    for i in 0..pairs {
        let n = rng.random_range(3..=50);
        let x = tied_vector(&mut rng, n);
        let y = tied_vector(&mut rng, n);
        let expect = spearman_oracle(&x, &y);
        match spearman(&x, &y) {
            Ok(r) if expect.is_finite() => worst = worst.max((r.rho - expect).abs()),
            Err(_) if expect.is_nan() => undefined += 1,
            got => {
                return Outcome::Fail(format!("pair {i} (n={n}): module {got:?}, oracle {expect}"))
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::from_result(if worst > 1e-12 {
        Err(format!("max |rho - oracle| = {worst:e} > 1e-12"))
    } else if secs >= 5.0 {
        Err(format!("took {secs:.2} s, budget 5 s"))
    } else {
        Ok(format!(
            "{pairs} pairs, max |rho - oracle| = {worst:e}, {undefined} constant pairs agreed undefined, {secs:.3} s"
        ))
    })
}

// ---- forwards range ---------------------------------------------------------

/// Dense smoothed TF-IDF: returns the sorted vocabulary and one L2-normalized
/// row per document (all zeros for a document with no tokens).
pub fn dense_tfidf(docs: &[Vec<String>]) -> (Vec<String>, Vec<Vec<f64>>) {
    let vocab: Vec<String> = docs
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let d = docs.len() as f64;
    let idf: Vec<f64> = vocab
        .iter()
        .map(|t| {
            let df = docs.iter().filter(|doc| doc.contains(t)).count() as f64;
            ((1.0 + d) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    let rows = docs
        .iter()
        .map(|doc| {
            let raw: Vec<f64> = vocab
                .iter()
                .zip(&idf)
                .map(|(t, w)| doc.iter().filter(|x| *x == t).count() as f64 * w)
                .collect();
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                raw
            } else {
                raw.iter().map(|x| x / norm).collect()
            }
        })
        .collect();
    (vocab, rows)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// term → (frequency, range) over pairs whose reply row is nonzero.
pub fn term_ranges_oracle(
    teachers: &[Vec<String>],
    replies: &[Vec<f64>],
    min_freq: u64,
) -> BTreeMap<String, (u64, f64)> {
    let answered: Vec<usize> = (0..teachers.len())
        .filter(|&i| replies[i].iter().any(|x| *x != 0.0))
        .collect();
    let terms: BTreeSet<&String> = answered.iter().flat_map(|&i| &teachers[i]).collect();
    let mut out = BTreeMap::new();
    for term in terms {
        let idxs: Vec<usize> = answered
            .iter()
            .copied()
            .filter(|&i| teachers[i].contains(term))
            .collect();
        if (idxs.len() as u64) < min_freq {
            continue;
        }
        let dim = replies[idxs[0]].len();
        let mut centroid = vec![0.0; dim];
        for &i in &idxs {
            for (c, x) in centroid.iter_mut().zip(&replies[i]) {
                *c += x / idxs.len() as f64;
            }
        }
        let range = idxs
            .iter()
            .map(|&i| 1.0 - cosine(&replies[i], &centroid).clamp(0.0, 1.0))
            .sum::<f64>()
            / idxs.len() as f64;
        out.insert(term.clone(), (idxs.len() as u64, range));
    }
    out
}

/// Fits the library model on (teacher, reply) token pairs and compares every
/// term with the dense oracle. Returns the number of terms compared and the
/// worst absolute difference.
pub fn compare_ranges(
    teachers: &[TokenSeq],
    replies: &[TokenSeq],
    min_freq: u64,
) -> Result<(usize, f64), String> {
    let tfidf = TfIdfModel::fit(replies).map_err(|e| e.to_string())?;
    let pairs: Vec<_> = teachers
        .iter()
        .cloned()
        .zip(replies.iter().map(|r| tfidf.vectorize(r)))
        .collect();
    let model = ForwardsRangeModel::fit(&pairs, min_freq).map_err(|e| e.to_string())?;

    let t: Vec<Vec<String>> = teachers.iter().map(|s| s.as_slice().to_vec()).collect();
    let r: Vec<Vec<String>> = replies.iter().map(|s| s.as_slice().to_vec()).collect();
    let (_, rows) = dense_tfidf(&r);
    let expect = term_ranges_oracle(&t, &rows, min_freq);

    let got: BTreeSet<&str> = model.terms().map(|(k, _)| k).collect();
    let want: BTreeSet<&str> = expect.keys().map(String::as_str).collect();
    if got != want {
        return Err(format!("term sets differ: module {got:?}, oracle {want:?}"));
    }
    let mut worst = 0.0f64;
    for (term, &(freq, range)) in &expect {
        let stat = model.term(term).expect("term present");
        if stat.frequency != freq {
            return Err(format!(
                "{term}: frequency {} vs oracle {freq}",
                stat.frequency
            ));
        }
        worst = worst.max((stat.range - range).abs());
    }
    Ok((expect.len(), worst))
}

pub fn check_forwards_range(seed: u64) -> Outcome {
    let data = synth::generate(&SynthConfig {
        n_exchanges: 50,
        exchanges_per_transcript: 10,
        seed,
        ..SynthConfig::default()
    })
    .expect("synthetic corpus");
    let corpus = data.corpus().expect("synthetic corpus loads");
    let tagger = LexiconTagger::default();
    let adj = corpus.teacher_replies();
    let teachers: Vec<TokenSeq> = adj
        .iter()
        .map(|(t, _)| preprocess_teacher(&t.text, &tagger, None))
        .collect();
    let replies: Vec<TokenSeq> = adj
        .iter()
        .map(|(_, r)| preprocess_reply(&r.text, &tagger))
        .collect();
    Outcome::from_result(
        compare_ranges(&teachers, &replies, 1).and_then(|(n, worst)| {
            if worst <= 1e-10 {
                Ok(format!(
                    "{} adjacencies, {n} terms, max |range - oracle| = {worst:e}",
                    adj.len()
                ))
            } else {
                Err(format!("max |range - oracle| = {worst:e} > 1e-10"))
            }
        }),
    )
}

// ---- directional validity ---------------------------------------------------

/// Utterance scores and binary truth (focusing = 1) for a synthetic corpus,
/// fitted the same way the pipeline fits.
pub fn synthetic_scores(n_exchanges: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let data = synth::generate(&SynthConfig {
        n_exchanges,
        seed,
        ..SynthConfig::default()
    })
    .expect("synthetic corpus");
    let corpus = data.corpus().expect("synthetic corpus loads");
    let tagger = LexiconTagger::default();
    let exchanges = corpus.extract_exchanges();
    let raw: Vec<TokenSeq> = exchanges
        .iter()
        .map(|e| preprocess_teacher(&e.teacher_utt.text, &tagger, None))
        .collect();
    let phrases = PhraseModel::fit(&raw, 500, 1.0).expect("phrase model");
    let adj = corpus.teacher_replies();
    let replies: Vec<TokenSeq> = adj
        .iter()
        .map(|(_, r)| preprocess_reply(&r.text, &tagger))
        .collect();
    let tfidf = TfIdfModel::fit(&replies).expect("tfidf");
    let pairs: Vec<_> = adj
        .iter()
        .zip(&replies)
        .map(|((t, _), r)| {
            (
                preprocess_teacher(&t.text, &tagger, Some(&phrases)),
                tfidf.vectorize(r),
            )
        })
        .collect();
    let model = ForwardsRangeModel::fit(&pairs, 25).expect("range model");
    exchanges
        .iter()
        .map(|e| {
            let toks = preprocess_teacher(&e.teacher_utt.text, &tagger, Some(&phrases));
            let truth = match data.truth[&e.exchange_id] {
                Style::Focusing => 1.0,
                Style::Funneling => 0.0,
            };
            (model.score_utterance(&toks).score, truth)
        })
        .unzip()
}

pub fn check_directional(seed: u64) -> Outcome {
    let (scores, truth) = synthetic_scores(2000, seed);
    let rho = match spearman(&scores, &truth) {
        Ok(r) => r.rho,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let mean_of = |want: f64| {
        let v: Vec<f64> = scores
            .iter()
            .zip(&truth)
            .filter(|(_, t)| **t == want)
            .map(|(s, _)| *s)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (foc, fun) = (mean_of(1.0), mean_of(0.0));
    let detail = format!(
        "{} exchanges, rho = {rho:.4}, mean range focusing {foc:.4} vs funneling {fun:.4}",
        scores.len()
    );
    Outcome::from_result(if rho > 0.9 && foc > fun {
        Ok(detail)
    } else {
        Err(detail)
    })
}

// ---- phrase mining ----------------------------------------------------------

pub struct PhraseCounts {
    pub unigrams: HashMap<String, u64>,
    pub bigrams: HashMap<(String, String), u64>,
}

pub fn recount(corpus: &[Vec<String>]) -> PhraseCounts {
    let mut unigrams = HashMap::new();
    let mut bigrams = HashMap::new();
    for seq in corpus {
        for (i, t) in seq.iter().enumerate() {
            *unigrams.entry(t.clone()).or_insert(0) += 1;
            if i + 1 < seq.len() {
                *bigrams.entry((t.clone(), seq[i + 1].clone())).or_insert(0) += 1;
            }
        }
    }
    PhraseCounts { unigrams, bigrams }
}

pub fn accept_oracle(c: &PhraseCounts, a: &str, b: &str, min_count: u64, threshold: f64) -> bool {
    let ab = c
        .bigrams
        .get(&(a.to_string(), b.to_string()))
        .copied()
        .unwrap_or(0);
    if ab == 0 {
        return false;
    }
    let n = c.unigrams.len() as f64;
    let score = (ab as f64 - min_count as f64) * n / (c.unigrams[a] as f64 * c.unigrams[b] as f64);
    score > threshold
}

pub fn random_token_corpus(rng: &mut ChaCha8Rng, max_tokens: usize) -> Vec<Vec<String>> {
    let vocab = rng.random_range(2..=600);
    let planted = rng.random_range(0..=6);
    let budget = rng.random_range(1..=max_tokens);
    let mut out = Vec::new();
    let mut used = 0;
    while used < budget {
        let len = rng.random_range(0..=(budget - used).min(60));
        let mut seq: Vec<String> = Vec::with_capacity(len + 1);
        while seq.len() < len {
            if planted > 0 && rng.random_bool(0.1) {
                let k = rng.random_range(0..planted);
                seq.push(format!("p{k}"));
                seq.push(format!("q{k}"));
            } else {
                seq.push(format!("w{}", rng.random_range(0..vocab)));
            }
        }
        used += seq.len().max(1);
        out.push(seq);
    }
    out
}

/// Compares counts and accept decisions on one corpus; returns the number of
/// accepted pairs.
pub fn compare_phrases(
    corpus: &[Vec<String>],
    min_count: u64,
    threshold: f64,
) -> Result<usize, String> {
    let seqs: Vec<TokenSeq> = corpus
        .iter()
        .map(|s| TokenSeq::new(s.clone()).expect("valid tokens"))
        .collect();
    let model = PhraseModel::fit(&seqs, min_count, threshold).map_err(|e| e.to_string())?;
    let c = recount(corpus);
    if model.vocab_size() != c.unigrams.len() {
        return Err(format!(
            "vocab size {} vs {}",
            model.vocab_size(),
            c.unigrams.len()
        ));
    }
    let unigrams: HashMap<String, u64> =
        model.unigrams().map(|(t, n)| (t.to_string(), n)).collect();
    if unigrams != c.unigrams {
        return Err("unigram tables differ".into());
    }
    let bigrams: HashMap<(String, String), u64> = model
        .bigrams()
        .map(|(a, b, n)| ((a.to_string(), b.to_string()), n))
        .collect();
    if bigrams != c.bigrams {
        return Err("bigram tables differ".into());
    }
    let mut accepted = 0;
    for (a, b) in c.bigrams.keys() {
        let acc = accept_oracle(&c, a, b, min_count, threshold);
        if model.accepts(a, b) != acc {
            return Err(format!("accept({a},{b}) {} vs {acc}", model.accepts(a, b)));
        }
        accepted += usize::from(acc);
    }
    let (a, b) = ("never-seen", "w0");
    if model.bigram_count(a, b) != 0 || model.accepts(a, b) {
        return Err("unseen pair reported as observed".into());
    }
    Ok(accepted)
}

/// Sequences with exactly count(a,b) = 600, count(a) = 1000, count(b) = 800
/// and 5000 distinct tokens.
pub fn worked_example_corpus() -> Vec<TokenSeq> {
    let tok = |s: &str| TokenSeq::new(vec![s.to_string()]).unwrap();
    let mut seqs = Vec::new();
    seqs.extend((0..600).map(|_| TokenSeq::new(vec!["a".into(), "b".into()]).unwrap()));
    seqs.extend((0..400).map(|_| tok("a")));
    seqs.extend((0..200).map(|_| tok("b")));
    seqs.extend((0..4998).map(|i| tok(&format!("filler{i}"))));
    seqs
}

pub fn check_phrases(seed: u64, corpora: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0;
    for i in 0..corpora {
        let corpus = random_token_corpus(&mut rng, 10_000);
        let min_count = rng.random_range(1..=10);
        let threshold = rng.random_range(0.05..3.0);
        match compare_phrases(&corpus, min_count, threshold) {
            Ok(n) => accepted += n,
            Err(e) => return Outcome::Fail(format!("corpus {i}: {e}")),
        }
    }
    let model = PhraseModel::fit(&worked_example_corpus(), 500, 1.0).expect("fit");
    let score = model.score("a", "b");
    let detail = format!(
        "{corpora} random corpora exact ({accepted} accepted pairs); worked example score {score:?}, accepted {}",
        model.accepts("a", "b")
    );
    Outcome::from_result(
        if model.vocab_size() == 5000 && score == Some(0.625) && !model.accepts("a", "b") {
            Ok(detail)
        } else {
            Err(detail)
        },
    )
}

// ---- label aggregation ------------------------------------------------------

/// exchange → mean over raters of that rater's z-score, computed from raw
/// (rater, exchange, label) triples.
pub fn gold_oracle(
    triples: &[(String, String, Label)],
    variant: Variant,
) -> BTreeMap<String, (f64, usize)> {
    let value = |l: Label| match (variant, l) {
        (Variant::Unfiltered, Label::NotApplicable) => Some(0.0),
        (Variant::Unfiltered, Label::Funneling) => Some(1.0),
        (Variant::Unfiltered, Label::Focusing) => Some(2.0),
        (Variant::Filtered, Label::NotApplicable) => None,
        (Variant::Filtered, Label::Funneling) => Some(0.0),
        (Variant::Filtered, Label::Focusing) => Some(1.0),
    };
    let raters: BTreeSet<&String> = triples.iter().map(|t| &t.0).collect();
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for rater in raters {
        let mine: Vec<(&String, f64)> = triples
            .iter()
            .filter(|t| &t.0 == rater)
            .filter_map(|t| value(t.2).map(|v| (&t.1, v)))
            .collect();
        if mine.is_empty() {
            continue;
        }
        let n = mine.len() as f64;
        let mean = mine.iter().map(|m| m.1).sum::<f64>() / n;
        let sd = if mine.len() > 1 {
            (mine.iter().map(|m| (m.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let constant = mine.iter().all(|m| m.1 == mine[0].1);
        for (ex, v) in mine {
            let z = if constant { 0.0 } else { (v - mean) / sd };
            let e = sums.entry(ex.clone()).or_insert((0.0, 0));
            e.0 += z;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, (s / n as f64, n)))
        .collect()
}

pub fn check_label_aggregation(seed: u64) -> Outcome {
    let data = synth::generate(&SynthConfig {
        n_exchanges: 50,
        exchanges_per_transcript: 10,
        n_raters: 3,
        rater_accuracy: 0.6,
        seed,
        ..SynthConfig::default()
    })
    .expect("synthetic corpus");
    let set = data.judgment_set().expect("judgments");
    let triples: Vec<(String, String, Label)> = data
        .judgments
        .iter()
        .map(|j| (j.rater_id.clone(), j.exchange_id.clone(), j.label))
        .collect();
    let exchanges: BTreeSet<&str> = data
        .judgments
        .iter()
        .map(|j| j.exchange_id.as_str())
        .collect();
    let raters: BTreeSet<&str> = data.judgments.iter().map(|j| j.rater_id.as_str()).collect();
    if exchanges.len() != 50 || raters.len() != 3 {
        return Outcome::Fail(format!(
            "fixture has {} exchanges, {} raters",
            exchanges.len(),
            raters.len()
        ));
    }
    let mut worst_gold = 0.0f64;
    let mut worst_moment = 0.0f64;
    let mut counts = Vec::new();
    for variant in Variant::ALL {
        let want = gold_oracle(&triples, variant);
        let got = aggregate_gold(&set, variant);
        if got.len() != want.len() {
            return Outcome::Fail(format!(
                "{variant}: {} gold labels vs oracle {}",
                got.len(),
                want.len()
            ));
        }
        for g in &got {
            let Some(&(score, n)) = want.get(&g.exchange_id) else {
                return Outcome::Fail(format!("{variant}: unexpected exchange {}", g.exchange_id));
            };
            if n != g.n_raters {
                return Outcome::Fail(format!("{}: {} raters vs {n}", g.exchange_id, g.n_raters));
            }
            worst_gold = worst_gold.max((g.score - score).abs());
        }
        for z in rater_zscores(&set, variant).values() {
            let v: Vec<f64> = z.values().copied().collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            worst_moment = worst_moment.max(mean.abs()).max((sd - 1.0).abs());
        }
        counts.push(format!("{variant} {}", got.len()));
    }
    let detail = format!(
        "gold max |diff| = {worst_gold:e}, z moments max error = {worst_moment:e} ({})",
        counts.join(", ")
    );
    Outcome::from_result(if worst_gold <= 1e-12 && worst_moment <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    })
}

// ---- regression -------------------------------------------------------------

fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    v.iter().map(|x| (x - mean) / sd).collect()
}

/// Solves (XᵀX) b = Xᵀy by Gauss-Jordan elimination with partial pivoting.
pub fn normal_equations(y: &[f64], columns: &[Vec<f64>]) -> Vec<f64> {
    let k = columns.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = columns[i].iter().zip(&columns[j]).map(|(p, q)| p * q).sum();
        }
        a[i][k] = columns[i].iter().zip(y).map(|(p, q)| p * q).sum();
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        for x in a[col].iter_mut() {
            *x /= p;
        }
        for r in 0..k {
            if r != col {
                let f = a[r][col];
                let pivot_row = a[col].clone();
                for (x, q) in a[r].iter_mut().zip(&pivot_row) {
                    *x -= f * q;
                }
            }
        }
    }
    a.iter().map(|row| row[k]).collect()
}

/// Standardized coefficient of `x` in y ~ 1 + x + controls.
pub fn standardized_beta_oracle(y: &[f64], x: &[f64], controls: &[Vec<f64>]) -> f64 {
    let mut cols = vec![vec![1.0; y.len()], standardize(x)];
    cols.extend(controls.iter().map(|c| standardize(c)));
    normal_equations(&standardize(y), &cols)[1]
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn check_ols(seed: u64, systems: usize) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_ne, mut worst_r) = (0.0f64, 0.0f64);
    for i in 0..systems {
        let n = rng.random_range(8..200);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let mix = rng.random_range(-0.9..0.9);
        let x: Vec<f64> = (0..n).map(|_| gaussian(&mut rng) * scale + 5.0).collect();
        let c: Vec<f64> = x
            .iter()
            .map(|v| mix * v + gaussian(&mut rng) * scale)
            .collect();
        let (b1, b2) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let y: Vec<f64> = x
            .iter()
            .zip(&c)
            .map(|(a, b)| b1 * a + b2 * b + gaussian(&mut rng) * scale)
            .collect();

        let got = match ols_standardized(&y, &x, &[Control::new("c", c.clone())]) {
            Ok(r) => r.beta,
            Err(e) => return Outcome::Fail(format!("system {i}: {e}")),
        };
        worst_ne = worst_ne.max((got - standardized_beta_oracle(&y, &x, &[c])).abs());
        let alone = ols_standardized(&y, &x, &[]).map(|r| r.beta);
        let r = pearson(&x, &y);
        match (alone, r) {
            (Ok(b), Some(r)) => worst_r = worst_r.max((b - r).abs()),
            other => return Outcome::Fail(format!("system {i}: {other:?}")),
        }
    }
    let table = [
        (0.2, Stars::None, ""),
        (0.1, Stars::None, ""),
        (0.0999, Stars::Dagger, "†"),
        (0.05, Stars::Dagger, "†"),
        (0.0499, Stars::One, "*"),
        (0.01, Stars::One, "*"),
        (0.0099, Stars::Two, "**"),
        (0.001, Stars::Two, "**"),
        (0.00099, Stars::Three, "***"),
        (0.0, Stars::Three, "***"),
    ];
    let star_misses: Vec<f64> = table
        .iter()
        .filter(|(p, s, sym)| Stars::from_p(*p) != *s || s.symbol() != *sym)
        .map(|t| t.0)
        .collect();
    let detail = format!(
        "{systems} systems, max |beta - normal equations| = {worst_ne:e}, max |beta - r| = {worst_r:e}, star mismatches at {star_misses:?}"
    );
    Outcome::from_result(
        if worst_ne <= 1e-9 && worst_r <= 1e-9 && star_misses.is_empty() {
            Ok(detail)
        } else {
            Err(detail)
        },
    )
}

// ---- Fleiss kappa -----------------------------------------------------------

pub fn check_fleiss(seed: u64) -> Outcome {
    let perfect: Vec<Vec<u8>> = (0..30).map(|i| vec![(i % 3) as u8; 3]).collect();
    let hand = vec![vec!['a', 'a'], vec!['a', 'b']];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random: Vec<Vec<u8>> = (0..1000)
        .map(|_| (0..3).map(|_| rng.random_range(0..3u8)).collect())
        .collect();
    let k = |r: Result<f64, String>| r.unwrap_or(f64::NAN);
    let kp = k(fleiss_kappa(&perfect)
        .map(|f| f.kappa)
        .map_err(|e| e.to_string()));
    let kh = k(fleiss_kappa(&hand)
        .map(|f| f.kappa)
        .map_err(|e| e.to_string()));
    let kr = k(fleiss_kappa(&random)
        .map(|f| f.kappa)
        .map_err(|e| e.to_string()));
    let detail = format!("perfect {kp}, hand example {kh:.6}, uniform random {kr:.4}");
    Outcome::from_result(
        if kp == 1.0 && (kh + 1.0 / 3.0).abs() < 1e-4 && kr.abs() < 0.05 {
            Ok(detail)
        } else {
            Err(detail)
        },
    )
}
