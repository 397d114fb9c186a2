//! Seeded synthetic classroom corpus with known funneling/focusing labels.
//!
//! Funneling-style teacher utterances draw on one vocabulary and are always
//! answered with the same short reply. Focusing-style utterances draw on a
//! disjoint vocabulary and are answered with one of eight replies that share
//! no words. Per-transcript focusing rates drive the outcome metadata, and
//! noisy raters label every exchange.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::corpus::{
    exchange_id, Corpus, JudgmentSet, Label, RaterJudgment, SpeakerRole, Utterance,
};
use crate::error::{Error, Result};
use crate::eval_stats::ScoreSeries;

pub const FUNNELING_TEACHER_WORDS: [&str; 12] = [
    "okay", "so", "just", "carry", "over", "put", "write", "down", "now", "quickly", "tell", "me",
];

pub const FOCUSING_TEACHER_WORDS: [&str; 12] = [
    "why", "do", "you", "think", "notice", "explain", "wonder", "how", "could", "convince",
    "might", "happen",
];

pub const FUNNELING_REPLY: &str = "yeah";

pub const FOCUSING_REPLIES: [&str; 8] = [
    "because it keeps growing",
    "maybe they cancel out",
    "we tried going backwards",
    "i guessed and checked",
    "mine looked kind of weird",
    "both ways give matching results",
    "hmm not sure honestly",
    "flipping everything works too",
];

const OPENER: &str = "can i share something";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Style {
    Funneling,
    Focusing,
}

impl Style {
    pub fn as_str(self) -> &'static str {
        match self {
            Style::Funneling => "funneling",
            Style::Focusing => "focusing",
        }
    }

    fn label(self) -> Label {
        match self {
            Style::Funneling => Label::Funneling,
            Style::Focusing => Label::Focusing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_exchanges: usize,
    pub exchanges_per_transcript: usize,
    pub transcripts_per_teacher: usize,
    /// Mean share of focusing exchanges; each transcript varies around it.
    pub focusing_fraction: f64,
    pub n_raters: usize,
    /// Probability that a rater reports the true style; otherwise a label is
    /// drawn uniformly from all three.
    pub rater_accuracy: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_exchanges: 2000,
            exchanges_per_transcript: 20,
            transcripts_per_teacher: 2,
            focusing_fraction: 0.5,
            n_raters: 3,
            rater_accuracy: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub utterances: Vec<Utterance>,
    pub metas: Vec<serde_json::Value>,
    pub judgments: Vec<RaterJudgment>,
    pub truth: BTreeMap<String, Style>,
    /// A noisy stand-in for supervised model output.
    pub predictions: ScoreSeries,
}

fn sentence(words: &[&str]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(0..1) {
        let upper = first.to_uppercase();
        s.replace_range(0..1, &upper);
    }
    s.push('?');
    s
}

fn ordinal(value: f64, max: u8) -> u8 {
    value.round().clamp(1.0, f64::from(max)) as u8
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    if config.exchanges_per_transcript == 0
        || config.transcripts_per_teacher == 0
        || config.n_raters == 0
    {
        return Err(Error::Invalid(
            "exchanges_per_transcript, transcripts_per_teacher and n_raters must be positive"
                .into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.focusing_fraction)
        || !(0.0..=1.0).contains(&config.rater_accuracy)
    {
        return Err(Error::Invalid(
            "focusing_fraction and rater_accuracy must lie in [0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, 0.5).expect("valid normal");
    let labels = [Label::NotApplicable, Label::Funneling, Label::Focusing];

    // Transcript lengths vary by up to half the mean either way.
    let per = config.exchanges_per_transcript;
    let mut lengths = Vec::new();
    let mut remaining = config.n_exchanges;
    while remaining > 0 {
        let n = rng
            .random_range(per.div_ceil(2)..=per + per / 2)
            .min(remaining);
        lengths.push(n);
        remaining -= n;
    }
    let n_transcripts = lengths.len();
    let mut utterances = Vec::new();
    let mut truth = BTreeMap::new();
    let mut rates = Vec::with_capacity(n_transcripts);
    for (t, &n) in lengths.iter().enumerate() {
        let tid = format!("t{t:05}");
        let rate = (config.focusing_fraction + rng.random_range(-0.3..=0.3)).clamp(0.05, 0.95);
        rates.push(rate);
        let mut turn = 0u32;
        let mut push = |role: SpeakerRole, text: String, turn: &mut u32| {
            utterances.push(Utterance {
                transcript_id: tid.clone(),
                turn_index: *turn,
                speaker_role: role,
                text,
            });
            *turn += 1;
        };
        push(SpeakerRole::Student, OPENER.to_string(), &mut turn);
        for _ in 0..n {
            let style = if rng.random_bool(rate) {
                Style::Focusing
            } else {
                Style::Funneling
            };
            let vocab: &[&str] = match style {
                Style::Funneling => &FUNNELING_TEACHER_WORDS,
                Style::Focusing => &FOCUSING_TEACHER_WORDS,
            };
            let k = rng.random_range(3..=5);
            let words: Vec<&str> = vocab.choose_multiple(&mut rng, k).copied().collect();
            truth.insert(exchange_id(&tid, turn), style);
            push(SpeakerRole::Teacher, sentence(&words), &mut turn);
            let reply = match style {
                Style::Funneling => FUNNELING_REPLY,
                Style::Focusing => FOCUSING_REPLIES.choose(&mut rng).expect("non-empty"),
            };
            push(SpeakerRole::Student, reply.to_string(), &mut turn);
        }
    }

    let n_teachers = n_transcripts.div_ceil(config.transcripts_per_teacher);
    let mut metas = Vec::with_capacity(n_transcripts);
    let mut value_added = Vec::with_capacity(n_teachers);
    for teacher in 0..n_teachers {
        let own = &rates[teacher * config.transcripts_per_teacher
            ..((teacher + 1) * config.transcripts_per_teacher).min(n_transcripts)];
        let mean = own.iter().sum::<f64>() / own.len() as f64;
        value_added.push(2.0 * (mean - 0.5) + 0.6 * noise.sample(&mut rng));
    }
    for (t, &rate) in rates.iter().enumerate() {
        let teacher = t / config.transcripts_per_teacher;
        metas.push(json!({
            "transcript_id": format!("t{t:05}"),
            "teacher_id": format!("teacher{teacher:04}"),
            "mqi5": ordinal(1.0 + 4.0 * rate + noise.sample(&mut rng), 5),
            "participation": ordinal(1.0 + 3.0 * rate + noise.sample(&mut rng), 4),
            "explanations": ordinal(1.0 + 3.0 * rate + noise.sample(&mut rng), 4),
            "value_added": value_added[teacher],
        }));
    }

    let mut judgments = Vec::new();
    let mut predictions = BTreeMap::new();
    for (ex, &style) in &truth {
        for r in 0..config.n_raters {
            let label = if rng.random_bool(config.rater_accuracy) {
                style.label()
            } else {
                *labels.choose(&mut rng).expect("non-empty")
            };
            judgments.push(RaterJudgment {
                rater_id: format!("rater{}", r + 1),
                exchange_id: ex.clone(),
                label,
            });
        }
        let base = if style == Style::Focusing { 1.0 } else { 0.0 };
        predictions.insert(ex.clone(), base + noise.sample(&mut rng));
    }

    Ok(SynthCorpus {
        utterances,
        metas,
        judgments,
        truth,
        predictions: ScoreSeries::new("synthetic_model", predictions)?,
    })
}

impl SynthCorpus {
    /// Transcript JSONL: metadata lines first, then utterances in order.
    pub fn write_transcripts<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for m in &self.metas {
            writeln!(w, "{m}")?;
        }
        for u in &self.utterances {
            writeln!(
                w,
                "{}",
                serde_json::to_string(u).expect("utterance serializes")
            )?;
        }
        Ok(())
    }

    pub fn write_judgments<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Invalid(format!("writing judgments: {e}"));
        out.write_record(["rater_id", "exchange_id", "label"])
            .map_err(err)?;
        for j in &self.judgments {
            out.write_record([
                j.rater_id.as_str(),
                j.exchange_id.as_str(),
                j.label.as_str(),
            ])
            .map_err(err)?;
        }
        out.flush()
            .map_err(|e| Error::Invalid(format!("writing judgments: {e}")))
    }

    /// `exchange_id,style,focusing` with `focusing` as 0/1.
    pub fn write_truth<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "exchange_id,style,focusing")?;
        for (ex, style) in &self.truth {
            writeln!(
                w,
                "{ex},{},{}",
                style.as_str(),
                u8::from(*style == Style::Focusing)
            )?;
        }
        Ok(())
    }

    pub fn corpus(&self) -> Result<Corpus> {
        let mut buf = Vec::new();
        self.write_transcripts(&mut buf).expect("writing to memory");
        Corpus::from_reader(buf.as_slice(), "synthetic corpus")
    }

    pub fn judgment_set(&self) -> Result<JudgmentSet> {
        JudgmentSet::new(self.judgments.clone())
    }
}
