//! Transcript ingestion, exchange extraction and gold-label aggregation.
//!
//! Transcripts arrive as JSON Lines with one utterance per line, optionally
//! interleaved with per-transcript metadata lines. Expert judgments arrive as a
//! CSV of `rater_id,exchange_id,label`. Judgments are mapped to numbers
//! according to a [`Variant`], z-scored per rater and averaged per exchange.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerRole {
    Teacher,
    Student,
    Other,
}

impl FromStr for SpeakerRole {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "teacher" => Ok(SpeakerRole::Teacher),
            "student" => Ok(SpeakerRole::Student),
            "other" => Ok(SpeakerRole::Other),
            _ => Err(format!("unknown speaker_role {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub transcript_id: String,
    pub turn_index: u32,
    pub speaker_role: SpeakerRole,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub transcript_id: String,
    pub teacher_id: Option<String>,
    pub n_exchanges: usize,
    /// Overall mathematical quality of instruction, 1..=5.
    pub mqi5: Option<u8>,
    /// Student participation in meaning-making and reasoning, 1..=4.
    pub participation: Option<u8>,
    /// Students provide explanations, 1..=4.
    pub explanations: Option<u8>,
    /// Teacher value-added score (standardized units).
    pub value_added: Option<f64>,
    pub lesson_topic: Option<String>,
}

impl TranscriptMeta {
    fn empty(transcript_id: &str) -> Self {
        TranscriptMeta {
            transcript_id: transcript_id.to_string(),
            teacher_id: None,
            n_exchanges: 0,
            mqi5: None,
            participation: None,
            explanations: None,
            value_added: None,
            lesson_topic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub meta: TranscriptMeta,
    /// Sorted by `turn_index`.
    utterances: Vec<Utterance>,
}

impl Transcript {
    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }
}

/// An immutable collection of transcripts keyed by transcript id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    transcripts: BTreeMap<String, Transcript>,
}

/// A student utterance `S` followed directly by a teacher utterance `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub exchange_id: String,
    pub transcript_id: String,
    pub student_utt: Utterance,
    pub teacher_utt: Utterance,
    /// Up to two utterances immediately preceding `student_utt`, in turn order.
    pub context: Vec<Utterance>,
    pub lesson_topic: Option<String>,
}

/// Exchange ids are derived from the transcript and the teacher turn so that
/// externally produced predictions can be joined back deterministically.
pub fn exchange_id(transcript_id: &str, teacher_turn: u32) -> String {
    format!("{transcript_id}:{teacher_turn}")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceRecord {
    transcript_id: String,
    turn_index: u32,
    speaker_role: String,
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaRecord {
    transcript_id: String,
    teacher_id: Option<String>,
    mqi5: Option<u8>,
    participation: Option<u8>,
    explanations: Option<u8>,
    value_added: Option<f64>,
    lesson_topic: Option<String>,
}

fn check_ordinal(name: &str, value: Option<u8>, max: u8) -> std::result::Result<(), String> {
    match value {
        Some(v) if !(1..=max).contains(&v) => Err(format!("{name} = {v} outside 1..={max}")),
        _ => Ok(()),
    }
}

impl Corpus {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), &path.display().to_string())
    }

    /// Parses the transcript JSONL format. `source_name` is used in error messages.
    pub fn from_reader<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut utterances: BTreeMap<String, BTreeMap<u32, Utterance>> = BTreeMap::new();
        let mut metas: BTreeMap<String, TranscriptMeta> = BTreeMap::new();

        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(&line)
                .map_err(|e| Error::parse(source_name, lineno, format!("malformed JSON: {e}")))?;
            let is_utterance =
                value.get("speaker_role").is_some() || value.get("turn_index").is_some();

            if is_utterance {
                let rec: UtteranceRecord = serde_json::from_value(value).map_err(|e| {
                    Error::parse(source_name, lineno, format!("bad utterance record: {e}"))
                })?;
                let role: SpeakerRole = rec
                    .speaker_role
                    .parse()
                    .map_err(|e: String| Error::parse(source_name, lineno, e))?;
                if rec.text.trim().is_empty() && role != SpeakerRole::Other {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        format!("empty text for a {} utterance", role_name(role)),
                    ));
                }
                let turns = utterances.entry(rec.transcript_id.clone()).or_default();
                if turns.contains_key(&rec.turn_index) {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        format!(
                            "duplicate turn_index {} in transcript {:?}",
                            rec.turn_index, rec.transcript_id
                        ),
                    ));
                }
                turns.insert(
                    rec.turn_index,
                    Utterance {
                        transcript_id: rec.transcript_id,
                        turn_index: rec.turn_index,
                        speaker_role: role,
                        text: rec.text,
                    },
                );
            } else {
                let rec: MetaRecord = serde_json::from_value(value).map_err(|e| {
                    Error::parse(source_name, lineno, format!("bad metadata record: {e}"))
                })?;
                check_ordinal("mqi5", rec.mqi5, 5)
                    .and_then(|_| check_ordinal("participation", rec.participation, 4))
                    .and_then(|_| check_ordinal("explanations", rec.explanations, 4))
                    .map_err(|e| Error::parse(source_name, lineno, e))?;
                if let Some(va) = rec.value_added {
                    if !va.is_finite() {
                        return Err(Error::parse(
                            source_name,
                            lineno,
                            "value_added is not finite",
                        ));
                    }
                }
                if metas.contains_key(&rec.transcript_id) {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        format!("duplicate metadata for transcript {:?}", rec.transcript_id),
                    ));
                }
                metas.insert(
                    rec.transcript_id.clone(),
                    TranscriptMeta {
                        transcript_id: rec.transcript_id,
                        teacher_id: rec.teacher_id,
                        n_exchanges: 0,
                        mqi5: rec.mqi5,
                        participation: rec.participation,
                        explanations: rec.explanations,
                        value_added: rec.value_added,
                        lesson_topic: rec.lesson_topic,
                    },
                );
            }
        }

        let ids: BTreeSet<String> = utterances.keys().chain(metas.keys()).cloned().collect();
        let mut transcripts = BTreeMap::new();
        for id in ids {
            let utts: Vec<Utterance> = utterances
                .remove(&id)
                .unwrap_or_default()
                .into_values()
                .collect();
            let mut meta = metas
                .remove(&id)
                .unwrap_or_else(|| TranscriptMeta::empty(&id));
            meta.n_exchanges = utts
                .windows(2)
                .filter(|w| {
                    w[0].speaker_role == SpeakerRole::Student
                        && w[1].speaker_role == SpeakerRole::Teacher
                })
                .count();
            transcripts.insert(
                id,
                Transcript {
                    meta,
                    utterances: utts,
                },
            );
        }
        Ok(Corpus { transcripts })
    }

    pub fn is_empty(&self) -> bool {
        self.transcripts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.transcripts.len()
    }

    pub fn transcripts(&self) -> impl Iterator<Item = &Transcript> {
        self.transcripts.values()
    }

    pub fn transcript(&self, id: &str) -> Option<&Transcript> {
        self.transcripts.get(id)
    }

    pub fn metas(&self) -> impl Iterator<Item = &TranscriptMeta> {
        self.transcripts.values().map(|t| &t.meta)
    }

    /// One exchange per adjacent student→teacher pair, in transcript then turn order.
    pub fn extract_exchanges(&self) -> Vec<Exchange> {
        let mut out = Vec::new();
        for t in self.transcripts.values() {
            let utts = &t.utterances;
            for i in 1..utts.len() {
                let (s, tu) = (&utts[i - 1], &utts[i]);
                if s.speaker_role != SpeakerRole::Student || tu.speaker_role != SpeakerRole::Teacher
                {
                    continue;
                }
                let ctx_start = (i - 1).saturating_sub(2);
                out.push(Exchange {
                    exchange_id: exchange_id(&t.meta.transcript_id, tu.turn_index),
                    transcript_id: t.meta.transcript_id.clone(),
                    student_utt: s.clone(),
                    teacher_utt: tu.clone(),
                    context: utts[ctx_start..i - 1].to_vec(),
                    lesson_topic: t.meta.lesson_topic.clone(),
                });
            }
        }
        out
    }

    /// Every teacher utterance that is directly answered by a student,
    /// paired with that student reply.
    pub fn teacher_replies(&self) -> Vec<(&Utterance, &Utterance)> {
        self.transcripts
            .values()
            .flat_map(|t| t.utterances.windows(2))
            .filter(|w| {
                w[0].speaker_role == SpeakerRole::Teacher
                    && w[1].speaker_role == SpeakerRole::Student
            })
            .map(|w| (&w[0], &w[1]))
            .collect()
    }
}

fn role_name(role: SpeakerRole) -> &'static str {
    match role {
        SpeakerRole::Teacher => "teacher",
        SpeakerRole::Student => "student",
        SpeakerRole::Other => "other",
    }
}

/// Writes exchanges as JSON Lines, the format consumed by external model trainers.
pub fn write_exchanges_jsonl<W: Write>(mut w: W, exchanges: &[Exchange]) -> std::io::Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        exchange_id: &'a str,
        transcript_id: &'a str,
        student_text: &'a str,
        teacher_text: &'a str,
        context: Vec<&'a str>,
        lesson_topic: Option<&'a str>,
    }
    for ex in exchanges {
        let row = Row {
            exchange_id: &ex.exchange_id,
            transcript_id: &ex.transcript_id,
            student_text: &ex.student_utt.text,
            teacher_text: &ex.teacher_utt.text,
            context: ex.context.iter().map(|u| u.text.as_str()).collect(),
            lesson_topic: ex.lesson_topic.as_deref(),
        };
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Judgments and gold labels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NotApplicable,
    Funneling,
    Focusing,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::NotApplicable => "not_applicable",
            Label::Funneling => "funneling",
            Label::Focusing => "focusing",
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "not_applicable" => Ok(Label::NotApplicable),
            "funneling" => Ok(Label::Funneling),
            "focusing" => Ok(Label::Focusing),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dataset variant. `Unfiltered` keeps every exchange; `Filtered` keeps only
/// exchanges judged applicable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "UNFILTERED")]
    Unfiltered,
    #[serde(rename = "FILTERED")]
    Filtered,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Unfiltered, Variant::Filtered];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Unfiltered => "UNFILTERED",
            Variant::Filtered => "FILTERED",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unfiltered" => Ok(Variant::Unfiltered),
            "filtered" => Ok(Variant::Filtered),
            _ => Err(format!(
                "unknown variant {s:?} (expected unfiltered or filtered)"
            )),
        }
    }
}

/// Numeric value of a label under a variant; `None` means missing.
pub fn map_label(label: Label, variant: Variant) -> Option<f64> {
    match (variant, label) {
        (Variant::Unfiltered, Label::NotApplicable) => Some(0.0),
        (Variant::Unfiltered, Label::Funneling) => Some(1.0),
        (Variant::Unfiltered, Label::Focusing) => Some(2.0),
        (Variant::Filtered, Label::NotApplicable) => None,
        (Variant::Filtered, Label::Funneling) => Some(0.0),
        (Variant::Filtered, Label::Focusing) => Some(1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterJudgment {
    pub rater_id: String,
    pub exchange_id: String,
    pub label: Label,
}

/// Judgments with at most one entry per (rater, exchange).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JudgmentSet {
    judgments: Vec<RaterJudgment>,
}

impl JudgmentSet {
    pub fn new(judgments: Vec<RaterJudgment>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for j in &judgments {
            if !seen.insert((j.rater_id.as_str(), j.exchange_id.as_str())) {
                return Err(Error::Invalid(format!(
                    "rater {:?} judged exchange {:?} more than once",
                    j.rater_id, j.exchange_id
                )));
            }
        }
        Ok(JudgmentSet { judgments })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// Parses `rater_id,exchange_id,label` CSV (header required).
    pub fn from_reader<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(source_name, 1, e.to_string()))?
            .clone();
        if headers.is_empty() {
            return Ok(JudgmentSet::default());
        }
        if headers.iter().collect::<Vec<_>>() != ["rater_id", "exchange_id", "label"] {
            return Err(Error::parse(
                source_name,
                1,
                "expected header rater_id,exchange_id,label",
            ));
        }
        let mut judgments = Vec::new();
        let mut seen = BTreeSet::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                Error::parse(source_name, line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let label: Label = rec[2]
                .trim()
                .parse()
                .map_err(|e: String| Error::parse(source_name, line, e))?;
            let (rater_id, exchange_id) = (rec[0].trim().to_string(), rec[1].trim().to_string());
            if rater_id.is_empty() || exchange_id.is_empty() {
                return Err(Error::parse(
                    source_name,
                    line,
                    "empty rater_id or exchange_id",
                ));
            }
            if !seen.insert((rater_id.clone(), exchange_id.clone())) {
                return Err(Error::parse(
                    source_name,
                    line,
                    format!(
                        "duplicate judgment by rater {rater_id:?} for exchange {exchange_id:?}"
                    ),
                ));
            }
            judgments.push(RaterJudgment {
                rater_id,
                exchange_id,
                label,
            });
        }
        Ok(JudgmentSet { judgments })
    }

    pub fn judgments(&self) -> &[RaterJudgment] {
        &self.judgments
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    /// Judgments grouped by rater, each group sorted by exchange id.
    pub fn by_rater(&self) -> BTreeMap<&str, Vec<(&str, Label)>> {
        let mut out: BTreeMap<&str, Vec<(&str, Label)>> = BTreeMap::new();
        for j in &self.judgments {
            out.entry(j.rater_id.as_str())
                .or_default()
                .push((j.exchange_id.as_str(), j.label));
        }
        for v in out.values_mut() {
            v.sort_by(|a, b| a.0.cmp(b.0));
        }
        out
    }

    /// Labels per exchange, ordered by rater id.
    pub fn by_exchange(&self) -> BTreeMap<&str, Vec<Label>> {
        let mut tmp: BTreeMap<&str, BTreeMap<&str, Label>> = BTreeMap::new();
        for j in &self.judgments {
            tmp.entry(j.exchange_id.as_str())
                .or_default()
                .insert(j.rater_id.as_str(), j.label);
        }
        tmp.into_iter()
            .map(|(k, v)| (k, v.into_values().collect()))
            .collect()
    }
}

/// Z-scores with the sample standard deviation. Fewer than two values, or
/// zero variance, give z = 0 everywhere.
pub fn zscore_values(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    if values.len() < 2 || values.iter().all(|v| *v == values[0]) {
        return vec![0.0; values.len()];
    }
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    values
        .iter()
        .map(|v| if std > 0.0 { (v - mean) / std } else { 0.0 })
        .collect()
}

/// Z-scores one rater's judgments under `variant`, keyed by exchange id.
pub fn zscore_rater(judgments: &[(&str, Label)], variant: Variant) -> BTreeMap<String, f64> {
    let mut mapped: Vec<(&str, f64)> = judgments
        .iter()
        .filter_map(|&(id, label)| map_label(label, variant).map(|v| (id, v)))
        .collect();
    mapped.sort_by(|a, b| a.0.cmp(b.0));
    let values: Vec<f64> = mapped.iter().map(|&(_, v)| v).collect();
    mapped
        .iter()
        .zip(zscore_values(&values))
        .map(|(&(id, _), z)| (id.to_string(), z))
        .collect()
}

/// z-scores for every rater: rater id → exchange id → z.
pub fn rater_zscores(
    judgments: &JudgmentSet,
    variant: Variant,
) -> BTreeMap<String, BTreeMap<String, f64>> {
    judgments
        .by_rater()
        .into_iter()
        .map(|(rater, js)| (rater.to_string(), zscore_rater(&js, variant)))
        .filter(|(_, z)| !z.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub exchange_id: String,
    pub variant: Variant,
    pub score: f64,
    pub n_raters: usize,
}

/// Mean rater z-score per exchange. Exchanges without any non-missing
/// judgment under `variant` are dropped. Output is sorted by exchange id.
pub fn aggregate_gold(judgments: &JudgmentSet, variant: Variant) -> Vec<GoldLabel> {
    let mut per_exchange: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for z in rater_zscores(judgments, variant).into_values() {
        for (ex, v) in z {
            per_exchange.entry(ex).or_default().push(v);
        }
    }
    per_exchange
        .into_iter()
        .map(|(exchange_id, zs)| GoldLabel {
            exchange_id,
            variant,
            score: zs.iter().sum::<f64>() / zs.len() as f64,
            n_raters: zs.len(),
        })
        .collect()
}

pub fn write_gold_csv<W: Write>(w: W, gold: &[GoldLabel]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Invalid(format!("writing gold CSV: {e}"));
    wtr.write_record(["exchange_id", "variant", "score", "n_raters"])
        .map_err(err)?;
    for g in gold {
        wtr.write_record([
            g.exchange_id.as_str(),
            g.variant.as_str(),
            &g.score.to_string(),
            &g.n_raters.to_string(),
        ])
        .map_err(err)?;
    }
    wtr.flush()
        .map_err(|e| Error::Invalid(format!("writing gold CSV: {e}")))?;
    Ok(())
}

pub fn read_gold_csv<R: Read>(r: R, source_name: &str) -> Result<Vec<GoldLabel>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source_name, 1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["exchange_id", "variant", "score", "n_raters"] {
        return Err(Error::parse(
            source_name,
            1,
            "expected header exchange_id,variant,score,n_raters",
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(source_name, 0, e.to_string()))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |m: String| Error::parse(source_name, line, m);
        let variant: Variant = rec[1].parse().map_err(bad)?;
        let score: f64 = rec[2]
            .parse()
            .map_err(|_| bad(format!("bad score {:?}", &rec[2])))?;
        let n_raters: usize = rec[3]
            .parse()
            .map_err(|_| bad(format!("bad n_raters {:?}", &rec[3])))?;
        if !score.is_finite() || n_raters == 0 {
            return Err(bad("score must be finite and n_raters positive".into()));
        }
        out.push(GoldLabel {
            exchange_id: rec[0].to_string(),
            variant,
            score,
            n_raters,
        });
    }
    Ok(out)
}
