//! Forwards-range: how spread out the replies to a teacher term are.
//!
//! Replies are embedded as L2-normalized TF-IDF vectors. For every teacher-side
//! term, the central point is the mean of the vectors of replies to utterances
//! containing the term, and the term's range is the mean cosine distance of
//! those replies from the central point. An utterance is scored by averaging
//! the ranges of its known terms.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::phrase_miner::read_header_block;
use crate::textprep::TokenSeq;

const TFIDF_TAG: &str = "tfidf_model/1";
const RANGE_TAG: &str = "range_model/1";

/// Smoothed inverse document frequency: `ln((1 + D) / (1 + df)) + 1`.
pub fn smoothed_idf(doc_count: usize, doc_freq: u64) -> f64 {
    ((1.0 + doc_count as f64) / (1.0 + doc_freq as f64)).ln() + 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfModel {
    /// term → column, assigned in lexicographic order.
    vocabulary: BTreeMap<String, usize>,
    doc_freq: Vec<u64>,
    idf: Vec<f64>,
    doc_count: usize,
}

impl TfIdfModel {
    pub fn fit<'a, I>(replies: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TokenSeq>,
    {
        let mut df: BTreeMap<&str, u64> = BTreeMap::new();
        let mut doc_count = 0usize;
        for reply in replies {
            doc_count += 1;
            let distinct: BTreeSet<&str> = reply.iter().map(String::as_str).collect();
            for t in distinct {
                *df.entry(t).or_default() += 1;
            }
        }
        if df.is_empty() {
            return Err(Error::Invalid(
                "cannot fit TF-IDF: every reply is empty".into(),
            ));
        }
        Ok(Self::from_doc_freqs(
            df.into_iter().map(|(t, c)| (t.to_string(), c)).collect(),
            doc_count,
        ))
    }

    fn from_doc_freqs(df: BTreeMap<String, u64>, doc_count: usize) -> Self {
        let mut vocabulary = BTreeMap::new();
        let mut doc_freq = Vec::with_capacity(df.len());
        let mut idf = Vec::with_capacity(df.len());
        for (col, (term, c)) in df.into_iter().enumerate() {
            vocabulary.insert(term, col);
            doc_freq.push(c);
            idf.push(smoothed_idf(doc_count, c));
        }
        TfIdfModel {
            vocabulary,
            doc_freq,
            idf,
            doc_count,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.vocabulary.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.column(term).map(|c| self.idf[c])
    }

    /// `count · idf` per known term, then L2-normalized. Unknown terms are ignored.
    pub fn vectorize(&self, tokens: &TokenSeq) -> ReplyVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(c) = self.column(t) {
                *counts.entry(c).or_default() += 1.0;
            }
        }
        let entries: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(c, n)| (c, n * self.idf[c]))
            .collect();
        ReplyVector::normalized(entries)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Invalid(format!("writing TF-IDF model: {e}"));
        writeln!(w, "# {TFIDF_TAG}").map_err(io)?;
        writeln!(w, "# doc_count={}", self.doc_count).map_err(io)?;
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Invalid(format!("writing TF-IDF model: {e}"));
        wtr.write_record(["term", "df", "idf"]).map_err(err)?;
        for (term, &col) in &self.vocabulary {
            wtr.write_record([
                term.as_str(),
                &self.doc_freq[col].to_string(),
                &self.idf[col].to_string(),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(io)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut r: R, source_name: &str) -> Result<Self> {
        let header = read_header_block(&mut r, source_name, TFIDF_TAG)?;
        let doc_count: usize = header
            .iter()
            .find(|(k, _)| k == "doc_count")
            .and_then(|(_, v)| v.parse().ok())
            .ok_or_else(|| Error::parse(source_name, 0, "missing or bad doc_count"))?;
        let mut rdr = csv::Reader::from_reader(r);
        let mut df = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::parse(source_name, 0, e.to_string()))?;
            let c: u64 = rec[1]
                .parse()
                .map_err(|_| Error::parse(source_name, 0, format!("bad df {:?}", &rec[1])))?;
            df.insert(rec[0].to_string(), c);
        }
        if df.is_empty() {
            return Err(Error::parse(source_name, 0, "empty TF-IDF vocabulary"));
        }
        Ok(Self::from_doc_freqs(df, doc_count))
    }
}

/// Sparse non-negative vector with unit L2 norm, or empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplyVector {
    /// Sorted by column.
    entries: Vec<(usize, f64)>,
}

impl ReplyVector {
    fn normalized(mut entries: Vec<(usize, f64)>) -> Self {
        entries.retain(|&(_, w)| w > 0.0);
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut entries {
                *w /= norm;
            }
        }
        ReplyVector { entries }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}

/// Truncated SVD basis of the reply TF-IDF matrix.
#[derive(Debug, Clone)]
pub struct LatentProjection {
    /// vocabulary dim × latent dim.
    components: DMatrix<f64>,
}

impl LatentProjection {
    /// Randomized subspace iteration, seeded for reproducibility.
    pub fn fit(replies: &[ReplyVector], vocab_dim: usize, dim: usize, seed: u64) -> Result<Self> {
        let rows: Vec<&ReplyVector> = replies.iter().filter(|v| !v.is_empty()).collect();
        let max_dim = vocab_dim.min(rows.len());
        if dim == 0 || dim > max_dim {
            return Err(Error::Invalid(format!(
                "latent dimension {dim} must be in 1..={max_dim} for this corpus"
            )));
        }
        let k = (dim + 10).min(max_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut basis = DMatrix::from_fn(vocab_dim, k, |_, _| StandardNormal.sample(&mut rng));
        basis = basis.qr().q();

        // A · Q, with A given as sparse rows.
        let apply = |q: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(rows.len(), q.ncols());
            for (r, v) in rows.iter().enumerate() {
                for &(c, w) in v.entries() {
                    for j in 0..q.ncols() {
                        out[(r, j)] += w * q[(c, j)];
                    }
                }
            }
            out
        };
        // Aᵀ · X
        let apply_t = |x: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(vocab_dim, x.ncols());
            for (r, v) in rows.iter().enumerate() {
                for &(c, w) in v.entries() {
                    for j in 0..x.ncols() {
                        out[(c, j)] += w * x[(r, j)];
                    }
                }
            }
            out
        };
        for _ in 0..4 {
            basis = apply_t(&apply(&basis)).qr().q();
        }
        let b = apply(&basis);
        let gram = b.transpose() * &b;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let top = DMatrix::from_fn(k, dim, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(LatentProjection {
            components: basis * top,
        })
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    /// Projects and L2-normalizes. Returns dense (index, value) pairs; empty
    /// if the projection vanishes.
    fn project(&self, v: &ReplyVector) -> Vec<(usize, f64)> {
        let mut out = vec![0.0; self.dim()];
        for &(c, w) in v.entries() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += w * self.components[(c, j)];
            }
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            return Vec::new();
        }
        out.into_iter()
            .enumerate()
            .map(|(j, x)| (j, x / norm))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermStat {
    /// Number of answered exchanges whose teacher utterance contains the term.
    pub frequency: u64,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardsRangeModel {
    terms: BTreeMap<String, TermStat>,
    min_term_freq: u64,
    fallback: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtteranceScore {
    pub score: f64,
    /// False when no term of the utterance is in the model and `score` is the fallback.
    pub covered: bool,
}

impl ForwardsRangeModel {
    /// Fits term ranges from (teacher tokens, reply vector) pairs. Pairs with
    /// an empty reply vector are ignored.
    pub fn fit(pairs: &[(TokenSeq, ReplyVector)], min_term_freq: u64) -> Result<Self> {
        let dim = pairs
            .iter()
            .flat_map(|(_, v)| v.entries().iter().map(|&(c, _)| c + 1))
            .max()
            .unwrap_or(0);
        let obs: Vec<(&TokenSeq, Vec<(usize, f64)>)> = pairs
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(t, v)| (t, v.entries().to_vec()))
            .collect();
        fit_ranges(&obs, dim, min_term_freq)
    }

    /// Like [`ForwardsRangeModel::fit`], but measures distances after
    /// projecting replies into a latent space. Cosine similarities are floored
    /// at zero so ranges stay in [0, 1].
    pub fn fit_latent(
        pairs: &[(TokenSeq, ReplyVector)],
        projection: &LatentProjection,
        min_term_freq: u64,
    ) -> Result<Self> {
        let obs: Vec<(&TokenSeq, Vec<(usize, f64)>)> = pairs
            .iter()
            .map(|(t, v)| (t, projection.project(v)))
            .filter(|(_, v)| !v.is_empty())
            .collect();
        fit_ranges(&obs, projection.dim(), min_term_freq)
    }

    pub fn min_term_freq(&self) -> u64 {
        self.min_term_freq
    }

    pub fn fallback(&self) -> f64 {
        self.fallback
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, term: &str) -> Option<TermStat> {
        self.terms.get(term).copied()
    }

    pub fn term_range(&self, term: &str) -> Option<f64> {
        self.terms.get(term).map(|s| s.range)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, TermStat)> {
        self.terms.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Mean range over the distinct in-model terms; the fallback when none.
    pub fn score_utterance(&self, tokens: &TokenSeq) -> UtteranceScore {
        let distinct: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
        let ranges: Vec<f64> = distinct
            .into_iter()
            .filter_map(|t| self.term_range(t))
            .collect();
        if ranges.is_empty() {
            UtteranceScore {
                score: self.fallback,
                covered: false,
            }
        } else {
            UtteranceScore {
                score: ranges.iter().sum::<f64>() / ranges.len() as f64,
                covered: true,
            }
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Invalid(format!("writing range model: {e}"));
        writeln!(w, "# {RANGE_TAG}").map_err(io)?;
        writeln!(w, "# min_term_freq={}", self.min_term_freq).map_err(io)?;
        writeln!(w, "# fallback={}", self.fallback).map_err(io)?;
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Invalid(format!("writing range model: {e}"));
        wtr.write_record(["term", "frequency", "range"])
            .map_err(err)?;
        for (term, stat) in &self.terms {
            wtr.write_record([
                term.as_str(),
                &stat.frequency.to_string(),
                &stat.range.to_string(),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(io)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut r: R, source_name: &str) -> Result<Self> {
        let header = read_header_block(&mut r, source_name, RANGE_TAG)?;
        let field = |key: &str| {
            header
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::parse(source_name, 0, format!("missing header field {key}")))
        };
        let min_term_freq: u64 = field("min_term_freq")?
            .parse()
            .map_err(|_| Error::parse(source_name, 0, "bad min_term_freq"))?;
        let fallback: f64 = field("fallback")?
            .parse()
            .map_err(|_| Error::parse(source_name, 0, "bad fallback"))?;
        let mut rdr = csv::Reader::from_reader(r);
        let mut terms = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::parse(source_name, 0, e.to_string()))?;
            let bad = || Error::parse(source_name, 0, format!("bad row for term {:?}", &rec[0]));
            let frequency: u64 = rec[1].parse().map_err(|_| bad())?;
            let range: f64 = rec[2].parse().map_err(|_| bad())?;
            if frequency < min_term_freq || !(0.0..=1.0).contains(&range) {
                return Err(bad());
            }
            terms.insert(rec[0].to_string(), TermStat { frequency, range });
        }
        Ok(ForwardsRangeModel {
            terms,
            min_term_freq,
            fallback,
        })
    }
}

fn fit_ranges(
    obs: &[(&TokenSeq, Vec<(usize, f64)>)],
    dim: usize,
    min_term_freq: u64,
) -> Result<ForwardsRangeModel> {
    if min_term_freq < 1 {
        return Err(Error::Invalid("min_term_freq must be >= 1".into()));
    }
    let mut postings: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (teacher, _)) in obs.iter().enumerate() {
        let distinct: BTreeSet<&str> = teacher.iter().map(String::as_str).collect();
        for t in distinct {
            postings.entry(t).or_default().push(i);
        }
    }

    let mut centroid = vec![0.0; dim];
    let mut touched: Vec<usize> = Vec::new();
    let mut terms = BTreeMap::new();
    for (term, idxs) in postings {
        if (idxs.len() as u64) < min_term_freq {
            continue;
        }
        for &c in &touched {
            centroid[c] = 0.0;
        }
        touched.clear();
        for &i in &idxs {
            for &(c, w) in &obs[i].1 {
                if centroid[c] == 0.0 {
                    touched.push(c);
                }
                centroid[c] += w;
            }
        }
        let n = idxs.len() as f64;
        touched.sort_unstable();
        touched.dedup();
        for &c in &touched {
            centroid[c] /= n;
        }
        let c_norm = touched
            .iter()
            .map(|&c| centroid[c] * centroid[c])
            .sum::<f64>()
            .sqrt();
        let mut dist_sum = 0.0;
        for &i in &idxs {
            let v = &obs[i].1;
            let v_norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            let dot: f64 = v.iter().map(|&(c, w)| w * centroid[c]).sum();
            let cos = if c_norm > 0.0 {
                dot / (v_norm * c_norm)
            } else {
                0.0
            };
            dist_sum += 1.0 - cos.clamp(0.0, 1.0);
        }
        terms.insert(
            term.to_string(),
            TermStat {
                frequency: idxs.len() as u64,
                range: (dist_sum / n).clamp(0.0, 1.0),
            },
        );
    }
    if terms.is_empty() {
        return Err(Error::Invalid(format!(
            "no teacher term occurs in {min_term_freq} or more answered exchanges; use a smaller min_term_freq"
        )));
    }
    let fallback = terms.values().map(|s| s.range).sum::<f64>() / terms.len() as f64;
    Ok(ForwardsRangeModel {
        terms,
        min_term_freq,
        fallback,
    })
}
