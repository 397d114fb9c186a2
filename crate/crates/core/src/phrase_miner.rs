//! Bigram collocation mining.
//!
//! Adjacent token pairs are scored with
//! `(count(a,b) - min_count) * vocab_size / (count(a) * count(b))` and pairs
//! scoring strictly above the threshold are joined with an underscore.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::textprep::TokenSeq;

const FORMAT_TAG: &str = "phrase_model/1";

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseModel {
    unigram_counts: BTreeMap<String, u64>,
    bigram_counts: BTreeMap<String, BTreeMap<String, u64>>,
    vocab_size: usize,
    min_count: u64,
    threshold: f64,
}

impl PhraseModel {
    /// Counts unigrams and within-sequence adjacent bigrams.
    pub fn fit<'a, I>(sequences: I, min_count: u64, threshold: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TokenSeq>,
    {
        if min_count < 1 {
            return Err(Error::Invalid("phrase min_count must be >= 1".into()));
        }
        if !threshold.is_finite() {
            return Err(Error::Invalid("phrase threshold must be finite".into()));
        }
        let mut unigram_counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut bigram_counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for seq in sequences {
            let toks = seq.as_slice();
            for t in toks {
                *unigram_counts.entry(t.clone()).or_default() += 1;
            }
            for w in toks.windows(2) {
                *bigram_counts
                    .entry(w[0].clone())
                    .or_default()
                    .entry(w[1].clone())
                    .or_default() += 1;
            }
        }
        Ok(PhraseModel {
            vocab_size: unigram_counts.len(),
            unigram_counts,
            bigram_counts,
            min_count,
            threshold,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn unigram_count(&self, token: &str) -> u64 {
        self.unigram_counts.get(token).copied().unwrap_or(0)
    }

    pub fn bigram_count(&self, a: &str, b: &str) -> u64 {
        self.bigram_counts
            .get(a)
            .and_then(|m| m.get(b))
            .copied()
            .unwrap_or(0)
    }

    pub fn unigrams(&self) -> impl Iterator<Item = (&str, u64)> {
        self.unigram_counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn bigrams(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.bigram_counts
            .iter()
            .flat_map(|(a, m)| m.iter().map(move |(b, &c)| (a.as_str(), b.as_str(), c)))
    }

    /// Collocation score, or `None` if the pair was never observed.
    pub fn score(&self, a: &str, b: &str) -> Option<f64> {
        let ab = self.bigram_count(a, b);
        if ab == 0 {
            return None;
        }
        let (ca, cb) = (self.unigram_count(a), self.unigram_count(b));
        Some(score_formula(ab, ca, cb, self.vocab_size, self.min_count))
    }

    pub fn accepts(&self, a: &str, b: &str) -> bool {
        self.score(a, b).is_some_and(|s| s > self.threshold)
    }

    /// Single greedy left-to-right pass; merged tokens are not merged again.
    pub fn merge(&self, tokens: &TokenSeq) -> TokenSeq {
        let toks = tokens.as_slice();
        let mut out = Vec::with_capacity(toks.len());
        let mut i = 0;
        while i < toks.len() {
            if i + 1 < toks.len() && self.accepts(&toks[i], &toks[i + 1]) {
                out.push(format!("{}_{}", toks[i], toks[i + 1]));
                i += 2;
            } else {
                out.push(toks[i].clone());
                i += 1;
            }
        }
        TokenSeq::new(out).expect("merging valid tokens yields valid tokens")
    }

    /// Writes the header block followed by `token_a,token_b,count` rows.
    /// Unigram counts are stored as rows with an empty `token_b`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Invalid(format!("writing phrase model: {e}"));
        writeln!(w, "# {FORMAT_TAG}").map_err(io)?;
        writeln!(w, "# vocab_size={}", self.vocab_size).map_err(io)?;
        writeln!(w, "# min_count={}", self.min_count).map_err(io)?;
        writeln!(w, "# threshold={}", self.threshold).map_err(io)?;
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Invalid(format!("writing phrase model: {e}"));
        wtr.write_record(["token_a", "token_b", "count"])
            .map_err(err)?;
        for (t, c) in self.unigrams() {
            wtr.write_record([t, "", &c.to_string()]).map_err(err)?;
        }
        for (a, b, c) in self.bigrams() {
            wtr.write_record([a, b, &c.to_string()]).map_err(err)?;
        }
        wtr.flush().map_err(io)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut r: R, source_name: &str) -> Result<Self> {
        let header = read_header_block(&mut r, source_name, FORMAT_TAG)?;
        let get = |key: &str| {
            header
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::parse(source_name, 0, format!("missing header field {key}")))
        };
        let bad = |key: &str| Error::parse(source_name, 0, format!("bad header field {key}"));
        let vocab_size: usize = get("vocab_size")?.parse().map_err(|_| bad("vocab_size"))?;
        let min_count: u64 = get("min_count")?.parse().map_err(|_| bad("min_count"))?;
        let threshold: f64 = get("threshold")?.parse().map_err(|_| bad("threshold"))?;

        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let cols = rdr
            .headers()
            .map_err(|e| Error::parse(source_name, 0, e.to_string()))?;
        if cols.iter().collect::<Vec<_>>() != ["token_a", "token_b", "count"] {
            return Err(Error::parse(
                source_name,
                0,
                "expected columns token_a,token_b,count",
            ));
        }
        let mut unigram_counts = BTreeMap::new();
        let mut bigram_counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::parse(source_name, 0, e.to_string()))?;
            let count: u64 = rec[2]
                .parse()
                .map_err(|_| Error::parse(source_name, 0, format!("bad count {:?}", &rec[2])))?;
            if rec[1].is_empty() {
                unigram_counts.insert(rec[0].to_string(), count);
            } else {
                bigram_counts
                    .entry(rec[0].to_string())
                    .or_default()
                    .insert(rec[1].to_string(), count);
            }
        }
        if unigram_counts.len() != vocab_size {
            return Err(Error::parse(
                source_name,
                0,
                "vocab_size does not match unigram rows",
            ));
        }
        let dangling = bigram_counts
            .iter()
            .flat_map(|(a, m)| m.keys().map(move |b| (a, b)))
            .find(|(a, b)| !unigram_counts.contains_key(*a) || !unigram_counts.contains_key(*b));
        if let Some((a, b)) = dangling {
            return Err(Error::parse(
                source_name,
                0,
                format!("bigram ({a}, {b}) has no unigram count"),
            ));
        }
        Ok(PhraseModel {
            unigram_counts,
            bigram_counts,
            vocab_size,
            min_count,
            threshold,
        })
    }
}

pub(crate) fn score_formula(ab: u64, a: u64, b: u64, vocab_size: usize, min_count: u64) -> f64 {
    (ab as f64 - min_count as f64) * vocab_size as f64 / (a as f64 * b as f64)
}

/// Reads leading `# key=value` lines. The first must be `# <tag>`.
pub(crate) fn read_header_block<R: BufRead>(
    r: &mut R,
    source_name: &str,
    tag: &str,
) -> Result<Vec<(String, String)>> {
    let mut fields = Vec::new();
    let mut line = String::new();
    let mut first = true;
    loop {
        let mut peek_hash = false;
        {
            let buf = r
                .fill_buf()
                .map_err(|e| Error::parse(source_name, 0, e.to_string()))?;
            if buf.first() == Some(&b'#') {
                peek_hash = true;
            }
        }
        if !peek_hash {
            break;
        }
        line.clear();
        r.read_line(&mut line)
            .map_err(|e| Error::parse(source_name, 0, e.to_string()))?;
        let body = line.trim_start_matches('#').trim();
        if first {
            if body != tag {
                return Err(Error::parse(
                    source_name,
                    1,
                    format!("expected format tag {tag:?}, found {body:?}"),
                ));
            }
            first = false;
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| Error::parse(source_name, 0, format!("bad header line {body:?}")))?;
        fields.push((k.trim().to_string(), v.trim().to_string()));
    }
    if first {
        return Err(Error::parse(
            source_name,
            1,
            format!("missing format tag {tag:?}"),
        ));
    }
    Ok(fields)
}
