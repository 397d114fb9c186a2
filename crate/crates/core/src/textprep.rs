//! Preprocessing for the forwards-range measure.
//!
//! Teacher utterances go through delexicalize → truncate_tail → clean →
//! tokenize → (optional) bigram merge. Student replies skip truncation and
//! merging.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::phrase_miner::PhraseModel;

pub const NOUN_TOKEN: &str = "[NOUN]";
pub const NUMBER_TOKEN: &str = "[NUMBER]";

const DEFAULT_NOUNS: &str = include_str!("../lexicons/nouns.txt");
const DEFAULT_NUMBER_WORDS: &str = include_str!("../lexicons/number_words.txt");
const DEFAULT_FUNCTION_WORDS: &str = include_str!("../lexicons/function_words.txt");

/// Max whitespace tokens kept by the token-based tail cut.
pub const TAIL_TOKENS: usize = 20;
/// Sentences kept by the sentence-based tail cut.
pub const TAIL_SENTENCES: usize = 2;

/// A sequence of non-empty tokens without whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::Invalid(format!("invalid token {bad:?}")));
        }
        Ok(TokenSeq(tokens))
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenClass {
    Number,
    Noun,
    Other,
}

/// Decides which tokens are replaced by placeholders.
///
/// `word` is the token lowercased with every non-alphanumeric character
/// removed; `prev` is the same normalization of the closest preceding token
/// whose normalization is non-empty.
pub trait Tagger {
    fn classify(&self, word: &str, prev: Option<&str>) -> TokenClass;
}

static NUMERIC: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[0-9]+(?:st|nd|rd|th|s)?$").unwrap());

/// Lexicon-and-rules tagger.
///
/// Rules, in order: numeric literal, spelled number, noun lexicon (with plural
/// stripping), then "follows a/an/the and is not a function word".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconTagger {
    nouns: HashSet<String>,
    number_words: HashSet<String>,
    function_words: HashSet<String>,
}

impl Default for LexiconTagger {
    fn default() -> Self {
        LexiconTagger::new(
            parse_word_list(DEFAULT_NOUNS),
            parse_word_list(DEFAULT_NUMBER_WORDS),
            parse_word_list(DEFAULT_FUNCTION_WORDS),
        )
    }
}

impl LexiconTagger {
    pub fn new<I, J, K>(nouns: I, number_words: J, function_words: K) -> Self
    where
        I: IntoIterator<Item = String>,
        J: IntoIterator<Item = String>,
        K: IntoIterator<Item = String>,
    {
        LexiconTagger {
            nouns: nouns.into_iter().map(|w| normalize(&w)).collect(),
            number_words: number_words.into_iter().map(|w| normalize(&w)).collect(),
            function_words: function_words.into_iter().map(|w| normalize(&w)).collect(),
        }
    }

    /// Default tagger with any of the three word lists replaced from files.
    pub fn from_files(
        nouns: Option<&Path>,
        number_words: Option<&Path>,
        function_words: Option<&Path>,
    ) -> Result<Self> {
        let load = |p: Option<&Path>, default: &str| -> Result<Vec<String>> {
            match p {
                Some(p) => load_word_list(p),
                None => Ok(parse_word_list(default)),
            }
        };
        Ok(LexiconTagger::new(
            load(nouns, DEFAULT_NOUNS)?,
            load(number_words, DEFAULT_NUMBER_WORDS)?,
            load(function_words, DEFAULT_FUNCTION_WORDS)?,
        ))
    }

    fn is_lexicon_noun(&self, word: &str) -> bool {
        if self.nouns.contains(word) {
            return true;
        }
        let stems = [
            word.strip_suffix("ies").map(|s| format!("{s}y")),
            word.strip_suffix("es").map(str::to_string),
            word.strip_suffix('s').map(str::to_string),
        ];
        stems
            .into_iter()
            .flatten()
            .any(|s| !s.is_empty() && self.nouns.contains(&s))
    }
}

impl Tagger for LexiconTagger {
    fn classify(&self, word: &str, prev: Option<&str>) -> TokenClass {
        if NUMERIC.is_match(word) || self.number_words.contains(word) {
            return TokenClass::Number;
        }
        if self.is_lexicon_noun(word) {
            return TokenClass::Noun;
        }
        let after_article = matches!(prev, Some("a" | "an" | "the"));
        if after_article
            && !self.function_words.contains(word)
            && word.chars().all(char::is_alphabetic)
        {
            return TokenClass::Noun;
        }
        TokenClass::Other
    }
}

/// Parses a word list: one entry per line, `#` starts a comment.
pub fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn load_word_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

fn normalize(token: &str) -> String {
    token
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

fn is_placeholder_bearing(token: &str) -> bool {
    token.contains(NOUN_TOKEN) || token.contains(NUMBER_TOKEN)
}

/// Splits after `.`, `!` or `?` when followed by whitespace or end of text.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let boundary = match chars.peek() {
            None => true,
            Some(&(_, next)) => next.is_whitespace(),
        };
        if boundary {
            let end = i + c.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            start = end;
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    out
}

pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(text.split_whitespace().map(str::to_string).collect())
}

/// Replaces numbers with `[NUMBER]` and nouns with `[NOUN]`, keeping any
/// punctuation attached to the token. Length is preserved.
pub fn delexicalize(tokens: &TokenSeq, tagger: &dyn Tagger) -> TokenSeq {
    let mut prev: Option<String> = None;
    let mut out = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let word = normalize(tok);
        if word.is_empty() {
            out.push(tok.clone());
            continue;
        }
        let replaced = if is_placeholder_bearing(tok) || tok.contains('_') {
            None
        } else {
            match tagger.classify(&word, prev.as_deref()) {
                TokenClass::Number => Some(NUMBER_TOKEN),
                TokenClass::Noun => Some(NOUN_TOKEN),
                TokenClass::Other => None,
            }
        };
        out.push(match replaced {
            Some(placeholder) => replace_core(tok, placeholder),
            None => tok.clone(),
        });
        prev = Some(word);
    }
    TokenSeq(out)
}

fn replace_core(token: &str, placeholder: &str) -> String {
    let start = token.find(|c: char| c.is_alphanumeric()).unwrap_or(0);
    let end = token
        .rfind(|c: char| c.is_alphanumeric())
        .map(|i| i + token[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(token.len());
    format!("{}{}{}", &token[..start], placeholder, &token[end..])
}

/// Keeps the last two sentences or the last twenty tokens, whichever has more
/// tokens (ties go to the sentences). Short texts are returned unchanged.
pub fn truncate_tail(text: &str) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let sentences = split_sentences(text);
    if tokens.len() <= TAIL_TOKENS && sentences.len() <= TAIL_SENTENCES {
        return text.to_string();
    }
    let tail_sentences = &sentences[sentences.len().saturating_sub(TAIL_SENTENCES)..];
    let sentence_tokens: usize = tail_sentences
        .iter()
        .map(|s| s.split_whitespace().count())
        .sum();
    let token_cut = &tokens[tokens.len().saturating_sub(TAIL_TOKENS)..];
    if sentence_tokens >= token_cut.len() {
        tail_sentences.join(" ")
    } else {
        token_cut.join(" ")
    }
}

/// Lowercases and strips punctuation, keeping placeholders and underscores.
pub fn clean(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if let Some(p) = [NOUN_TOKEN, NUMBER_TOKEN]
            .into_iter()
            .find(|p| rest.starts_with(p))
        {
            out.push_str(p);
            rest = &rest[p.len()..];
            continue;
        }
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if c.is_whitespace() {
            out.push(' ');
        } else if c == '_' {
            out.push('_');
        }
        rest = &rest[c.len_utf8()..];
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn preprocess_teacher(
    text: &str,
    tagger: &dyn Tagger,
    phrases: Option<&PhraseModel>,
) -> TokenSeq {
    let delex = delexicalize(&tokenize(text), tagger);
    let tail = truncate_tail(&delex.join(" "));
    let tokens = tokenize(&clean(&tail));
    match phrases {
        Some(model) => model.merge(&tokens),
        None => tokens,
    }
}

pub fn preprocess_reply(text: &str, tagger: &dyn Tagger) -> TokenSeq {
    let delex = delexicalize(&tokenize(text), tagger);
    tokenize(&clean(&delex.join(" ")))
}
