//! Count-based features of raw teacher utterances: length, question words,
//! question phrases and cognitive verbs.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

pub const COGNITIVE_VERBS: &str = "cognitive_verbs";

const DEFAULT_LEXICON: &str = "\
[cognitive_verbs]
understand
think
know
believe
figure out
find out
deduce
remember
imagine
realize
discover

[question_unigrams]
who
what
when
where
how
why
which

[question_bigrams]
how many
how do
what is
what's
what else
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub cognitive_verbs: Vec<String>,
    pub question_unigrams: Vec<String>,
    pub question_bigrams: Vec<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon::parse(DEFAULT_LEXICON, "default lexicon").expect("built-in lexicon parses")
    }
}

impl Lexicon {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::parse(&text, &path.display().to_string())
    }

    /// Sectioned word list: `[cognitive_verbs]`, `[question_unigrams]`,
    /// `[question_bigrams]`, one entry per line, `#` comments.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut lex = Lexicon {
            cognitive_verbs: Vec::new(),
            question_unigrams: Vec::new(),
            question_bigrams: Vec::new(),
        };
        let mut section: Option<&mut Vec<String>> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name.trim() {
                    "cognitive_verbs" => &mut lex.cognitive_verbs,
                    "question_unigrams" => &mut lex.question_unigrams,
                    "question_bigrams" => &mut lex.question_bigrams,
                    other => {
                        return Err(Error::parse(
                            source_name,
                            i + 1,
                            format!("unknown section [{other}]"),
                        ));
                    }
                });
                continue;
            }
            let Some(target) = section.as_deref_mut() else {
                return Err(Error::parse(
                    source_name,
                    i + 1,
                    "entry before any section header",
                ));
            };
            let entry = words(line).join(" ");
            if entry.is_empty() {
                return Err(Error::parse(
                    source_name,
                    i + 1,
                    format!("entry {line:?} has no words"),
                ));
            }
            if !target.contains(&entry) {
                target.push(entry);
            }
        }
        Ok(lex)
    }

    /// Feature names in output order: unigrams, bigrams, then cognitive verbs.
    pub fn feature_names(&self) -> Vec<String> {
        self.question_unigrams
            .iter()
            .chain(&self.question_bigrams)
            .map(|e| feature_name(e))
            .chain(std::iter::once(COGNITIVE_VERBS.to_string()))
            .collect()
    }
}

/// `"how many"` → `how_many`, `"what's"` → `whats`.
pub fn feature_name(entry: &str) -> String {
    entry.replace(' ', "_").replace('\'', "")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    pub exchange_id: String,
    pub length: usize,
    pub counts: IndexMap<String, usize>,
}

/// Whitespace token count of the raw text.
pub fn length(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercased words: whitespace tokens with surrounding punctuation removed.
/// Apostrophes inside a word are kept and typographic apostrophes folded.
fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.chars()
                .map(|c| {
                    if matches!(c, '\u{2019}' | '\u{2018}' | '`') {
                        '\''
                    } else {
                        c
                    }
                })
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

fn count_words(words: &[String], entry: &[String]) -> usize {
    if entry.is_empty() || entry.len() > words.len() {
        return 0;
    }
    let mut n = 0;
    let mut i = 0;
    while i + entry.len() <= words.len() {
        if words[i..i + entry.len()] == *entry {
            n += 1;
            i += entry.len();
        } else {
            i += 1;
        }
    }
    n
}

/// Non-overlapping, word-aligned occurrences of `entry` in `text`.
pub fn count_entry(text: &str, entry: &str) -> usize {
    count_words(&words(text), &words(entry))
}

pub fn featurize(exchange_id: &str, teacher_text: &str, lexicon: &Lexicon) -> FeatureVector {
    let ws = words(teacher_text);
    let mut counts = IndexMap::new();
    for entry in lexicon
        .question_unigrams
        .iter()
        .chain(&lexicon.question_bigrams)
    {
        counts.insert(feature_name(entry), count_words(&ws, &words(entry)));
    }
    let cognitive = lexicon
        .cognitive_verbs
        .iter()
        .map(|e| count_words(&ws, &words(e)))
        .sum();
    counts.insert(COGNITIVE_VERBS.to_string(), cognitive);
    FeatureVector {
        exchange_id: exchange_id.to_string(),
        length: length(teacher_text),
        counts,
    }
}
