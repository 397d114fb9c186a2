//! The subcommands as library functions. Every output is written atomically
//! into the configured output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use focusmeter::corpus::{
    aggregate_gold, rater_zscores, read_gold_csv, write_exchanges_jsonl, write_gold_csv, Corpus,
    JudgmentSet, Variant,
};
use focusmeter::eval_stats::{
    agreement_rows, evaluate, fleiss_kappa, leave_out_irr, load_predictions, write_predictions,
    EvaluationReport, Grouping, PValueMethod, ScoreSeries,
};
use focusmeter::forwards_range::{ForwardsRangeModel, LatentProjection, ReplyVector, TfIdfModel};
use focusmeter::lexical_features::{featurize, Lexicon};
use focusmeter::phrase_miner::PhraseModel;
use focusmeter::synth;
use focusmeter::textprep::{preprocess_reply, preprocess_teacher, LexiconTagger, TokenSeq};
use focusmeter::{Error, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const EXCHANGES_FILE: &str = "exchanges.jsonl";
pub const GOLD_SUMMARY_FILE: &str = "gold_summary.csv";
pub const PHRASE_MODEL_FILE: &str = "phrase_model.csv";
pub const TFIDF_MODEL_FILE: &str = "tfidf_model.csv";
pub const RANGE_MODEL_FILE: &str = "range_model.csv";
pub const FIT_MANIFEST_FILE: &str = "fit_manifest.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const RANGE_MEASURE: &str = "forwards_range";
pub const LENGTH_MEASURE: &str = "length";
const MANIFEST_SCHEMA: &str = "fit_manifest/1";

pub fn gold_file(variant: Variant) -> String {
    format!("gold_{}.csv", variant.as_str().to_ascii_lowercase())
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush().map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let p = p
        .as_deref()
        .ok_or_else(|| Error::Invalid(format!("no {what} path configured (paths.{what})")))?;
    if !p.exists() {
        return Err(Error::Invalid(format!(
            "{what} file {} does not exist",
            p.display()
        )));
    }
    Ok(p)
}

fn tagger(cfg: &RunConfig) -> Result<LexiconTagger> {
    let p = &cfg.paths;
    LexiconTagger::from_files(
        p.nouns.as_deref(),
        p.number_words.as_deref(),
        p.function_words.as_deref(),
    )
}

fn lexicon(cfg: &RunConfig) -> Result<Lexicon> {
    match &cfg.paths.question_lexicon {
        Some(p) => Lexicon::load(p),
        None => Ok(Lexicon::default()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldSummary {
    pub counts: BTreeMap<Variant, usize>,
    pub n_judgments: usize,
    /// Judged exchange ids that do not occur in the transcripts.
    pub unknown_exchanges: usize,
}

/// Gold scores for both variants, a count summary, and the exchange dump used
/// by external model trainers.
pub fn cmd_gold(cfg: &RunConfig) -> Result<GoldSummary> {
    let corpus = Corpus::load(required(&cfg.paths.transcripts, "transcripts")?)?;
    let judgments = JudgmentSet::load(required(&cfg.paths.judgments, "judgments")?)?;
    let exchanges = corpus.extract_exchanges();
    let known: std::collections::BTreeSet<&str> =
        exchanges.iter().map(|e| e.exchange_id.as_str()).collect();
    let unknown: std::collections::BTreeSet<&str> = judgments
        .judgments()
        .iter()
        .map(|j| j.exchange_id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    if !unknown.is_empty() {
        warn!(
            "{} judged exchanges do not occur in the transcripts",
            unknown.len()
        );
    }

    let out = &cfg.paths.out;
    let mut counts = BTreeMap::new();
    for variant in Variant::ALL {
        let gold = aggregate_gold(&judgments, variant);
        counts.insert(variant, gold.len());
        write_atomic(&out.join(gold_file(variant)), |w| write_gold_csv(w, &gold))?;
    }
    let summary_path = out.join(GOLD_SUMMARY_FILE);
    write_atomic(&summary_path, |w| {
        writeln!(w, "variant,n_examples").map_err(io_err(&summary_path))?;
        for (v, n) in &counts {
            writeln!(w, "{v},{n}").map_err(io_err(&summary_path))?;
        }
        Ok(())
    })?;
    let ex_path = out.join(EXCHANGES_FILE);
    write_atomic(&ex_path, |w| {
        write_exchanges_jsonl(w, &exchanges).map_err(io_err(&ex_path))
    })?;
    Ok(GoldSummary {
        counts,
        n_judgments: judgments.judgments().len(),
        unknown_exchanges: unknown.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub schema: String,
    pub params: BTreeMap<String, serde_json::Value>,
    /// Input name → sha256 of the file contents.
    pub inputs: BTreeMap<String, String>,
    /// Model file name → sha256.
    pub outputs: BTreeMap<String, String>,
    pub n_exchanges: usize,
    pub n_replies: usize,
    pub n_range_terms: usize,
}

fn input_digests(cfg: &RunConfig) -> Result<BTreeMap<String, String>> {
    let mut d = BTreeMap::new();
    d.insert(
        "transcripts".to_string(),
        sha256_file(required(&cfg.paths.transcripts, "transcripts")?)?,
    );
    let p = &cfg.paths;
    for (name, path) in [
        ("nouns", &p.nouns),
        ("number_words", &p.number_words),
        ("function_words", &p.function_words),
    ] {
        if let Some(path) = path {
            d.insert(name.to_string(), sha256_file(path)?);
        }
    }
    Ok(d)
}

/// Fits the phrase, TF-IDF and forwards-range models.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitManifest> {
    cfg.validate()?;
    let corpus = Corpus::load(required(&cfg.paths.transcripts, "transcripts")?)?;
    let exchanges = corpus.extract_exchanges();
    if exchanges.is_empty() {
        return Err(Error::Invalid(
            "empty corpus: no student→teacher exchanges".into(),
        ));
    }
    let tagger = tagger(cfg)?;

    let teacher_seqs: Vec<TokenSeq> = exchanges
        .iter()
        .map(|e| preprocess_teacher(&e.teacher_utt.text, &tagger, None))
        .collect();
    let phrases = PhraseModel::fit(&teacher_seqs, cfg.phrases.min_count, cfg.phrases.threshold)?;

    let adjacencies = corpus.teacher_replies();
    let replies: Vec<TokenSeq> = adjacencies
        .iter()
        .map(|(_, r)| preprocess_reply(&r.text, &tagger))
        .collect();
    let tfidf = TfIdfModel::fit(&replies)?;
    let pairs: Vec<(TokenSeq, ReplyVector)> = adjacencies
        .iter()
        .zip(&replies)
        .map(|((t, _), r)| {
            (
                preprocess_teacher(&t.text, &tagger, Some(&phrases)),
                tfidf.vectorize(r),
            )
        })
        .collect();
    let ranges = match cfg.ranges.svd_dim {
        None => ForwardsRangeModel::fit(&pairs, cfg.ranges.min_term_freq)?,
        Some(dim) => {
            let vectors: Vec<ReplyVector> = pairs.iter().map(|(_, v)| v.clone()).collect();
            let proj = LatentProjection::fit(&vectors, tfidf.dim(), dim, cfg.seed)?;
            ForwardsRangeModel::fit_latent(&pairs, &proj, cfg.ranges.min_term_freq)?
        }
    };
    info!(
        "fitted {} phrase unigrams, {} reply terms, {} range terms",
        phrases.vocab_size(),
        tfidf.dim(),
        ranges.len()
    );

    let out = &cfg.paths.out;
    write_atomic(&out.join(PHRASE_MODEL_FILE), |w| phrases.write_csv(w))?;
    write_atomic(&out.join(TFIDF_MODEL_FILE), |w| tfidf.write_csv(w))?;
    write_atomic(&out.join(RANGE_MODEL_FILE), |w| ranges.write_csv(w))?;

    let mut outputs = BTreeMap::new();
    for f in [PHRASE_MODEL_FILE, TFIDF_MODEL_FILE, RANGE_MODEL_FILE] {
        outputs.insert(f.to_string(), sha256_file(&out.join(f))?);
    }
    let mut params = BTreeMap::new();
    params.insert("min_count".to_string(), cfg.phrases.min_count.into());
    params.insert("threshold".to_string(), cfg.phrases.threshold.into());
    params.insert("min_term_freq".to_string(), cfg.ranges.min_term_freq.into());
    params.insert("svd_dim".to_string(), cfg.ranges.svd_dim.into());
    params.insert("seed".to_string(), cfg.seed.into());
    let manifest = FitManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        params,
        inputs: input_digests(cfg)?,
        outputs,
        n_exchanges: exchanges.len(),
        n_replies: replies.len(),
        n_range_terms: ranges.len(),
    };
    let path = out.join(FIT_MANIFEST_FILE);
    write_atomic(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        writeln!(w).map_err(io_err(&path))
    })?;
    Ok(manifest)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(io_err(path))?))
}

/// Loads the fit manifest and checks that inputs and models are unchanged.
pub fn check_fit(cfg: &RunConfig) -> Result<FitManifest> {
    let out = &cfg.paths.out;
    let path = out.join(FIT_MANIFEST_FILE);
    if !path.exists() {
        return Err(Error::Invalid(format!(
            "{} not found; run `fit` first",
            path.display()
        )));
    }
    let manifest: FitManifest = serde_json::from_reader(open(&path)?)
        .map_err(|e| Error::Invalid(format!("{}: bad manifest: {e}", path.display())))?;
    if manifest.schema != MANIFEST_SCHEMA {
        return Err(Error::Invalid(format!(
            "{}: unsupported schema {:?}",
            path.display(),
            manifest.schema
        )));
    }
    let now = input_digests(cfg)?;
    if now != manifest.inputs {
        let changed: Vec<&str> = now
            .keys()
            .chain(manifest.inputs.keys())
            .filter(|k| now.get(*k) != manifest.inputs.get(*k))
            .map(String::as_str)
            .collect();
        return Err(Error::Invalid(format!(
            "input digest mismatch for {}; the models were fitted on different inputs, rerun `fit`",
            changed.join(", ")
        )));
    }
    for (file, digest) in &manifest.outputs {
        if &sha256_file(&out.join(file))? != digest {
            return Err(Error::Invalid(format!(
                "{file} changed since it was fitted; rerun `fit`"
            )));
        }
    }
    Ok(manifest)
}

/// Per-exchange forwards-range and lexical scores.
pub fn cmd_score(cfg: &RunConfig) -> Result<usize> {
    check_fit(cfg)?;
    let out = &cfg.paths.out;
    let corpus = Corpus::load(required(&cfg.paths.transcripts, "transcripts")?)?;
    let tagger = tagger(cfg)?;
    let lexicon = lexicon(cfg)?;
    let phrase_path = out.join(PHRASE_MODEL_FILE);
    let phrases = PhraseModel::read_csv(open(&phrase_path)?, &phrase_path.display().to_string())?;
    let range_path = out.join(RANGE_MODEL_FILE);
    let ranges =
        ForwardsRangeModel::read_csv(open(&range_path)?, &range_path.display().to_string())?;

    let exchanges = corpus.extract_exchanges();
    let path = out.join(SCORES_FILE);
    write_atomic(&path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Invalid(format!("writing scores: {e}"));
        let mut header = vec![
            "exchange_id".to_string(),
            "transcript_id".to_string(),
            RANGE_MEASURE.to_string(),
            "covered".to_string(),
            LENGTH_MEASURE.to_string(),
        ];
        header.extend(lexicon.feature_names());
        csv.write_record(&header).map_err(err)?;
        for ex in &exchanges {
            let tokens = preprocess_teacher(&ex.teacher_utt.text, &tagger, Some(&phrases));
            let range = ranges.score_utterance(&tokens);
            let feats = featurize(&ex.exchange_id, &ex.teacher_utt.text, &lexicon);
            let mut row = vec![
                ex.exchange_id.clone(),
                ex.transcript_id.clone(),
                range.score.to_string(),
                range.covered.to_string(),
                feats.length.to_string(),
            ];
            row.extend(feats.counts.values().map(usize::to_string));
            csv.write_record(&row).map_err(err)?;
        }
        csv.flush().map_err(io_err(&path))
    })?;
    Ok(exchanges.len())
}

/// Reads `scores.csv` into one series per measure column, in column order.
pub fn read_scores(path: &Path) -> Result<Vec<ScoreSeries>> {
    let source = path.display().to_string();
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Invalid(format!("{source}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 4 || header[0] != "exchange_id" || header[3] != "covered" {
        return Err(Error::Invalid(format!("{source}: unexpected header")));
    }
    let measures: Vec<usize> = (2..header.len()).filter(|&i| i != 3).collect();
    let mut values: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); measures.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Invalid(format!("{source}: {e}")))?;
        for (slot, &col) in measures.iter().enumerate() {
            let v: f64 = rec[col].parse().map_err(|_| {
                Error::Invalid(format!(
                    "{source}: bad value {:?} in column {}",
                    &rec[col], header[col]
                ))
            })?;
            values[slot].insert(rec[0].to_string(), v);
        }
    }
    measures
        .iter()
        .zip(values)
        .map(|(&col, v)| ScoreSeries::new(header[col].clone(), v))
        .collect()
}

fn read_gold_series(cfg: &RunConfig) -> Result<ScoreSeries> {
    let path = cfg.paths.out.join(gold_file(cfg.variant));
    if !path.exists() {
        return Err(Error::Invalid(format!(
            "{} not found; run `gold` first",
            path.display()
        )));
    }
    let gold = read_gold_csv(open(&path)?, &path.display().to_string())?;
    ScoreSeries::new(
        "gold",
        gold.into_iter().map(|g| (g.exchange_id, g.score)).collect(),
    )
}

/// Rater agreement, correlations with gold and outcome regressions.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluationReport> {
    let out = &cfg.paths.out;
    let gold = read_gold_series(cfg)?;
    let scores_path = out.join(SCORES_FILE);
    if !scores_path.exists() {
        return Err(Error::Invalid(format!(
            "{} not found; run `score` first",
            scores_path.display()
        )));
    }
    let mut measures = read_scores(&scores_path)?;
    for p in &cfg.paths.predictions {
        measures.push(load_predictions(p)?);
    }
    let corpus = Corpus::load(required(&cfg.paths.transcripts, "transcripts")?)?;
    let grouping = Grouping::from_corpus(&corpus);
    let method = if cfg.spearman_exact {
        PValueMethod::ExactSmallN
    } else {
        PValueMethod::TApprox
    };

    let mut rows = Vec::new();
    if let Some(path) = cfg.paths.judgments.as_deref().filter(|p| p.exists()) {
        let judgments = JudgmentSet::load(path)?;
        let irr = leave_out_irr(&rater_zscores(&judgments, cfg.variant))
            .inspect_err(|e| warn!("rater agreement unavailable: {e}"))
            .ok();
        let items: Vec<Vec<_>> = judgments.by_exchange().into_values().collect();
        let kappa = fleiss_kappa(&items)
            .inspect_err(|e| warn!("Fleiss kappa unavailable: {e}"))
            .ok();
        rows.extend(agreement_rows(
            cfg.variant.as_str(),
            irr.as_ref(),
            kappa.as_ref(),
        ));
    }
    rows.extend(evaluate(&gold, &measures, &grouping, method).rows);
    let report = EvaluationReport { rows };

    write_atomic(&out.join(REPORT_CSV_FILE), |w| report.write_csv(w))?;
    let text_path = out.join(REPORT_TEXT_FILE);
    write_atomic(&text_path, |w| {
        w.write_all(report.to_text().as_bytes())
            .map_err(io_err(&text_path))
    })?;
    Ok(report)
}

/// gold → fit → score → evaluate.
pub fn cmd_report(cfg: &RunConfig) -> Result<EvaluationReport> {
    let summary = cmd_gold(cfg)?;
    info!("gold: {:?}", summary.counts);
    cmd_fit(cfg)?;
    cmd_score(cfg)?;
    cmd_evaluate(cfg)
}

pub const SYNTH_TRANSCRIPTS: &str = "transcripts.jsonl";
pub const SYNTH_JUDGMENTS: &str = "judgments.csv";
pub const SYNTH_TRUTH: &str = "truth.csv";
pub const SYNTH_PREDICTIONS: &str = "predictions.jsonl";
pub const SYNTH_CONFIG: &str = "config.toml";

/// Writes a synthetic corpus plus a config file that points at it. Returns
/// the config path.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf> {
    let data = synth::generate(&cfg.synth_config())?;
    let dir = &cfg.paths.out;
    let p = dir.join(SYNTH_TRANSCRIPTS);
    write_atomic(&p, |w| data.write_transcripts(w).map_err(io_err(&p)))?;
    write_atomic(&dir.join(SYNTH_JUDGMENTS), |w| data.write_judgments(w))?;
    let p = dir.join(SYNTH_TRUTH);
    write_atomic(&p, |w| data.write_truth(w).map_err(io_err(&p)))?;
    write_atomic(&dir.join(SYNTH_PREDICTIONS), |w| {
        write_predictions(w, &data.predictions)
    })?;

    let mut run = cfg.clone();
    run.paths = crate::config::Paths {
        transcripts: Some(SYNTH_TRANSCRIPTS.into()),
        judgments: Some(SYNTH_JUDGMENTS.into()),
        predictions: vec![SYNTH_PREDICTIONS.into()],
        out: "out".into(),
        ..Default::default()
    };
    let cfg_path = dir.join(SYNTH_CONFIG);
    write_atomic(&cfg_path, |w| {
        w.write_all(run.to_toml().as_bytes())
            .map_err(io_err(&cfg_path))
    })?;
    Ok(cfg_path)
}
