//! Run configuration, read from a TOML file.
//!
//! ```toml
//! seed = 0
//! variant = "unfiltered"
//! spearman_exact = false
//!
//! [paths]
//! transcripts = "transcripts.jsonl"
//! judgments = "judgments.csv"
//! predictions = ["roberta.jsonl"]
//! out = "out"
//!
//! [phrases]
//! min_count = 500
//! threshold = 1.0
//!
//! [ranges]
//! min_term_freq = 25
//! svd_dim = 100
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use focusmeter::corpus::Variant;
use focusmeter::synth::SynthConfig;
use focusmeter::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub transcripts: Option<PathBuf>,
    pub judgments: Option<PathBuf>,
    pub predictions: Vec<PathBuf>,
    pub out: PathBuf,
    pub nouns: Option<PathBuf>,
    pub number_words: Option<PathBuf>,
    pub function_words: Option<PathBuf>,
    /// Question words and cognitive verbs for the lexical features.
    pub question_lexicon: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            transcripts: None,
            judgments: None,
            predictions: Vec::new(),
            out: PathBuf::from("out"),
            nouns: None,
            number_words: None,
            function_words: None,
            question_lexicon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhraseParams {
    pub min_count: u64,
    pub threshold: f64,
}

impl Default for PhraseParams {
    fn default() -> Self {
        PhraseParams {
            min_count: 500,
            threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RangeParams {
    pub min_term_freq: u64,
    pub svd_dim: Option<usize>,
}

impl Default for RangeParams {
    fn default() -> Self {
        RangeParams {
            min_term_freq: 25,
            svd_dim: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub n_exchanges: usize,
    pub exchanges_per_transcript: usize,
    pub transcripts_per_teacher: usize,
    pub focusing_fraction: f64,
    pub n_raters: usize,
    pub rater_accuracy: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthParams {
            n_exchanges: d.n_exchanges,
            exchanges_per_transcript: d.exchanges_per_transcript,
            transcripts_per_teacher: d.transcripts_per_teacher,
            focusing_fraction: d.focusing_fraction,
            n_raters: d.n_raters,
            rater_accuracy: d.rater_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(with = "variant_name")]
    pub variant: Variant,
    /// Permutation p-values for correlations over at most 10 pairs.
    pub spearman_exact: bool,
    pub paths: Paths,
    pub phrases: PhraseParams,
    pub ranges: RangeParams,
    pub synth: SynthParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            variant: Variant::Unfiltered,
            spearman_exact: false,
            paths: Paths::default(),
            phrases: PhraseParams::default(),
            ranges: RangeParams::default(),
            synth: SynthParams::default(),
        }
    }
}

mod variant_name {
    use focusmeter::corpus::Variant;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Variant, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.as_str().to_ascii_lowercase())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Variant, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg = RunConfig::parse(&text, &path.display().to_string())?;
        cfg.resolve_relative_to(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                source_name: source_name.to_string(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.transcripts,
            &mut paths.judgments,
            &mut paths.nouns,
            &mut paths.number_words,
            &mut paths.function_words,
            &mut paths.question_lexicon,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        paths.predictions.iter_mut().for_each(fix);
        fix(&mut paths.out);
    }

    /// Checks numeric ranges.
    pub fn validate(&self) -> Result<()> {
        if self.phrases.min_count < 1 {
            return Err(Error::Invalid("phrases.min_count must be >= 1".into()));
        }
        if !(self.phrases.threshold > 0.0 && self.phrases.threshold.is_finite()) {
            return Err(Error::Invalid(
                "phrases.threshold must be a positive number".into(),
            ));
        }
        if self.ranges.min_term_freq < 1 {
            return Err(Error::Invalid("ranges.min_term_freq must be >= 1".into()));
        }
        if self.ranges.svd_dim == Some(0) {
            return Err(Error::Invalid(
                "ranges.svd_dim must be >= 1 when set".into(),
            ));
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            n_exchanges: s.n_exchanges,
            exchanges_per_transcript: s.exchanges_per_transcript,
            transcripts_per_teacher: s.transcripts_per_teacher,
            focusing_fraction: s.focusing_fraction,
            n_raters: s.n_raters,
            rater_accuracy: s.rater_accuracy,
            seed: self.seed,
        }
    }
}
