use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use super::agreement::{FleissKappa, IrrResult};
use super::correlation::{spearman_series, PValueMethod};
use super::regression::{ols_standardized, Control};
use super::{mean_aggregate, ScoreSeries, Stars};
use crate::corpus::{Corpus, TranscriptMeta};
use crate::error::{Error, Result};

pub const GOLD_TARGET: &str = "gold";
pub const INSUFFICIENT_N: &str = "insufficient n";

/// Transcript-level outcomes, in report column order.
const TRANSCRIPT_OUTCOMES: [&str; 3] = ["mqi5", "participation", "explanations"];
const TEACHER_OUTCOME: &str = "value_added";

/// Maps exchanges to transcripts and transcripts to their metadata.
#[derive(Debug, Clone, Default)]
pub struct Grouping {
    pub exchange_transcript: BTreeMap<String, String>,
    pub metas: BTreeMap<String, TranscriptMeta>,
}

impl Grouping {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Grouping {
            exchange_transcript: corpus
                .extract_exchanges()
                .into_iter()
                .map(|e| (e.exchange_id, e.transcript_id))
                .collect(),
            metas: corpus
                .metas()
                .map(|m| (m.transcript_id.clone(), m.clone()))
                .collect(),
        }
    }

    fn exchange_teacher(&self) -> BTreeMap<String, String> {
        self.exchange_transcript
            .iter()
            .filter_map(|(ex, t)| {
                let teacher = self.metas.get(t)?.teacher_id.clone()?;
                Some((ex.clone(), teacher))
            })
            .collect()
    }

    /// Mean value-added per teacher over the transcripts that report one.
    fn teacher_value_added(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for m in self.metas.values() {
            if let (Some(t), Some(va)) = (&m.teacher_id, m.value_added) {
                let e = acc.entry(t).or_insert((0.0, 0));
                e.0 += va;
                e.1 += 1;
            }
        }
        acc.into_iter()
            .map(|(t, (s, n))| (t.to_string(), s / n as f64))
            .collect()
    }
}

fn outcome(meta: &TranscriptMeta, name: &str) -> Option<f64> {
    match name {
        "mqi5" => meta.mqi5.map(f64::from),
        "participation" => meta.participation.map(f64::from),
        "explanations" => meta.explanations.map(f64::from),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RowStat {
    Spearman,
    Beta,
    IrrMean,
    IrrMin,
    IrrMax,
    FleissKappa,
}

impl RowStat {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStat::Spearman => "spearman",
            RowStat::Beta => "beta",
            RowStat::IrrMean => "irr_mean",
            RowStat::IrrMin => "irr_min",
            RowStat::IrrMax => "irr_max",
            RowStat::FleissKappa => "fleiss_kappa",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub measure: String,
    pub target: String,
    pub stat: RowStat,
    pub value: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
    pub stars: Stars,
    /// Why `value` is missing.
    pub note: Option<String>,
}

impl ReportRow {
    fn missing(measure: &str, target: &str, stat: RowStat, n: usize, note: String) -> Self {
        ReportRow {
            measure: measure.to_string(),
            target: target.to_string(),
            stat,
            value: None,
            p_value: None,
            n,
            stars: Stars::None,
            note: Some(note),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<ReportRow>,
}

fn correlation_row(gold: &ScoreSeries, m: &ScoreSeries, method: PValueMethod) -> ReportRow {
    let n = m.values().keys().filter(|k| gold.get(k).is_some()).count();
    if n < 3 {
        return ReportRow::missing(
            &m.name,
            GOLD_TARGET,
            RowStat::Spearman,
            n,
            INSUFFICIENT_N.into(),
        );
    }
    match spearman_series(m, gold, method) {
        Ok(r) => ReportRow {
            measure: m.name.clone(),
            target: GOLD_TARGET.into(),
            stat: RowStat::Spearman,
            value: Some(r.rho),
            p_value: Some(r.p_value),
            n: r.n,
            stars: r.stars,
            note: None,
        },
        Err(e) => ReportRow::missing(
            &m.name,
            GOLD_TARGET,
            RowStat::Spearman,
            n,
            undefined_note(&e),
        ),
    }
}

fn undefined_note(e: &Error) -> String {
    match e {
        Error::UndefinedCorrelation(_) => "undefined correlation".into(),
        Error::Singular(_) => "singular design".into(),
        _ => "undefined".into(),
    }
}

fn regression_row(
    measure: &str,
    target: &str,
    y: &[f64],
    x: &[f64],
    controls: &[Control],
) -> ReportRow {
    let n = y.len();
    if n <= controls.len() + 2 {
        return ReportRow::missing(measure, target, RowStat::Beta, n, INSUFFICIENT_N.into());
    }
    match ols_standardized(y, x, controls) {
        Ok(r) => ReportRow {
            measure: measure.into(),
            target: target.into(),
            stat: RowStat::Beta,
            value: Some(r.beta),
            p_value: Some(r.p_value),
            n: r.n,
            stars: r.stars,
            note: None,
        },
        Err(e) => ReportRow::missing(measure, target, RowStat::Beta, n, undefined_note(&e)),
    }
}

/// Correlations with gold for every measure, then standardized regressions of
/// each outcome on the measure: transcript-level outcomes with the exchange
/// count as control, and value-added at the teacher level.
///
/// Rows are ordered by section, then by measure in input order, then by target.
pub fn evaluate(
    gold: &ScoreSeries,
    measures: &[ScoreSeries],
    grouping: &Grouping,
    method: PValueMethod,
) -> EvaluationReport {
    let mut rows: Vec<ReportRow> = measures
        .iter()
        .map(|m| correlation_row(gold, m, method))
        .collect();

    let teacher_of = grouping.exchange_teacher();
    let teacher_va = grouping.teacher_value_added();
    for m in measures {
        let by_transcript = mean_aggregate(m, &grouping.exchange_transcript);
        for target in TRANSCRIPT_OUTCOMES {
            let (mut y, mut x, mut count) = (Vec::new(), Vec::new(), Vec::new());
            for (t, &v) in &by_transcript {
                let Some(meta) = grouping.metas.get(t) else {
                    continue;
                };
                if let Some(o) = outcome(meta, target) {
                    y.push(o);
                    x.push(v);
                    count.push(meta.n_exchanges as f64);
                }
            }
            let control = [Control::new("n_exchanges", count)];
            rows.push(regression_row(&m.name, target, &y, &x, &control));
        }

        let by_teacher = mean_aggregate(m, &teacher_of);
        let (y, x): (Vec<f64>, Vec<f64>) = by_teacher
            .iter()
            .filter_map(|(t, &v)| teacher_va.get(t).map(|&va| (va, v)))
            .unzip();
        rows.push(regression_row(&m.name, TEACHER_OUTCOME, &y, &x, &[]));
    }
    EvaluationReport { rows }
}

/// Rows describing rater agreement for one label variant.
pub fn agreement_rows(
    variant: &str,
    irr: Option<&IrrResult>,
    kappa: Option<&FleissKappa>,
) -> Vec<ReportRow> {
    let measure = "raters";
    let mut rows = Vec::new();
    match irr {
        Some(irr) => {
            let n = irr.per_rater.len();
            for (stat, v) in [
                (RowStat::IrrMean, irr.mean_rho),
                (RowStat::IrrMin, irr.lo),
                (RowStat::IrrMax, irr.hi),
            ] {
                rows.push(ReportRow {
                    measure: measure.into(),
                    target: variant.into(),
                    stat,
                    value: Some(v),
                    p_value: None,
                    n,
                    stars: Stars::None,
                    note: None,
                });
            }
        }
        None => rows.push(ReportRow::missing(
            measure,
            variant,
            RowStat::IrrMean,
            0,
            INSUFFICIENT_N.into(),
        )),
    }
    if let Some(k) = kappa {
        rows.push(ReportRow {
            measure: measure.into(),
            target: variant.into(),
            stat: RowStat::FleissKappa,
            value: Some(k.kappa),
            p_value: None,
            n: k.items,
            stars: Stars::None,
            note: None,
        });
    }
    rows
}

fn num(v: f64) -> String {
    // Shortest round-trip representation, with -0 folded to 0.
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

impl EvaluationReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Invalid(format!("writing report: {e}"));
        out.write_record(["measure", "target", "stat", "value", "p", "n", "stars"])
            .map_err(io)?;
        for r in &self.rows {
            let value = match (r.value, &r.note) {
                (Some(v), _) => num(v),
                (None, Some(note)) => note.clone(),
                (None, None) => String::new(),
            };
            let p = r.p_value.map(num).unwrap_or_default();
            out.write_record([
                r.measure.as_str(),
                r.target.as_str(),
                r.stat.as_str(),
                &value,
                &p,
                &r.n.to_string(),
                r.stars.symbol(),
            ])
            .map_err(io)?;
        }
        out.flush()
            .map_err(|e| Error::Invalid(format!("writing report: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("report is UTF-8")
    }

    /// Human-readable tables: agreement, correlation with gold, and
    /// standardized coefficients against outcomes.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let agreement: Vec<&ReportRow> =
            self.rows.iter().filter(|r| r.measure == "raters").collect();
        if !agreement.is_empty() {
            s.push_str("Rater agreement\n");
            let body: Vec<Vec<String>> = agreement
                .iter()
                .map(|r| {
                    vec![
                        r.target.clone(),
                        r.stat.as_str().to_string(),
                        cell(r, false),
                        r.n.to_string(),
                    ]
                })
                .collect();
            s.push_str(&table(&["variant", "stat", "value", "n"], &body));
            s.push('\n');
        }

        let corr: Vec<&ReportRow> = self
            .rows
            .iter()
            .filter(|r| r.stat == RowStat::Spearman)
            .collect();
        if !corr.is_empty() {
            s.push_str("Spearman correlation with gold\n");
            let body: Vec<Vec<String>> = corr
                .iter()
                .map(|r| {
                    vec![
                        r.measure.clone(),
                        cell(r, true),
                        r.p_value.map(|p| format!("{p:.3e}")).unwrap_or_default(),
                        r.n.to_string(),
                    ]
                })
                .collect();
            s.push_str(&table(&["measure", "rho", "p", "n"], &body));
            s.push('\n');
        }

        let betas: Vec<&ReportRow> = self
            .rows
            .iter()
            .filter(|r| r.stat == RowStat::Beta)
            .collect();
        if !betas.is_empty() {
            s.push_str("Standardized coefficients (transcript level with exchange-count control; value_added at teacher level)\n");
            let mut targets: Vec<&str> = TRANSCRIPT_OUTCOMES.to_vec();
            targets.push(TEACHER_OUTCOME);
            let mut order: Vec<&str> = Vec::new();
            let mut cells: BTreeMap<(&str, &str), String> = BTreeMap::new();
            for r in &betas {
                if !order.contains(&r.measure.as_str()) {
                    order.push(&r.measure);
                }
                cells.insert(
                    (&r.measure, &r.target),
                    format!("{} (n={})", cell(r, true), r.n),
                );
            }
            let body: Vec<Vec<String>> = order
                .iter()
                .map(|m| {
                    std::iter::once(m.to_string())
                        .chain(
                            targets
                                .iter()
                                .map(|t| cells.get(&(*m, *t)).cloned().unwrap_or_default()),
                        )
                        .collect()
                })
                .collect();
            let mut header = vec!["measure"];
            header.extend(&targets);
            s.push_str(&table(&header, &body));
        }
        s
    }
}

fn cell(r: &ReportRow, stars: bool) -> String {
    match (r.value, &r.note) {
        (Some(v), _) if stars => format!("{v:.3}{}", r.stars),
        (Some(v), _) => format!("{v:.3}"),
        (None, Some(n)) => n.clone(),
        (None, None) => "-".into(),
    }
}

fn table(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut s = String::new();
    let line = |cells: Vec<&str>, s: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                let pad = w - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec(), &mut s);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(rule.iter().map(String::as_str).collect(), &mut s);
    for row in body {
        line(row.iter().map(String::as_str).collect(), &mut s);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(name: &str, vals: &[(&str, f64)]) -> ScoreSeries {
        ScoreSeries::new(
            name,
            vals.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        )
        .unwrap()
    }

    fn meta(id: &str, teacher: &str, n: usize, mqi: u8, va: f64) -> TranscriptMeta {
        TranscriptMeta {
            transcript_id: id.into(),
            teacher_id: Some(teacher.into()),
            n_exchanges: n,
            mqi5: Some(mqi),
            participation: None,
            explanations: Some(mqi.min(4)),
            value_added: Some(va),
            lesson_topic: None,
        }
    }

    fn grouping() -> Grouping {
        let mut g = Grouping::default();
        for t in 0..6 {
            for e in 0..3 {
                g.exchange_transcript
                    .insert(format!("t{t}:{}", 2 * e + 1), format!("t{t}"));
            }
            let m = meta(
                &format!("t{t}"),
                &format!("teacher{}", t / 2),
                3 + t % 2,
                (t % 5 + 1) as u8,
                t as f64 * 0.1,
            );
            g.metas.insert(m.transcript_id.clone(), m);
        }
        g
    }

    fn gold() -> ScoreSeries {
        let vals: Vec<(String, f64)> = grouping()
            .exchange_transcript
            .keys()
            .enumerate()
            .map(|(i, k)| (k.clone(), ((i * 7) % 11) as f64 - 5.0))
            .collect();
        ScoreSeries::new("gold", vals.into_iter().collect()).unwrap()
    }

    #[test]
    fn self_and_negated_correlation() {
        let g = gold();
        let rep = evaluate(
            &g,
            &[g.clone(), g.negated("neg")],
            &grouping(),
            PValueMethod::TApprox,
        );
        assert_eq!(rep.rows[0].value, Some(1.0));
        assert_eq!(rep.rows[1].value, Some(-1.0));
        assert_eq!(rep.rows[0].n, 18);
    }

    #[test]
    fn row_layout_and_pairwise_deletion() {
        let g = gold();
        let rep = evaluate(
            &g,
            std::slice::from_ref(&g),
            &grouping(),
            PValueMethod::TApprox,
        );
        let targets: Vec<&str> = rep.rows.iter().map(|r| r.target.as_str()).collect();
        assert_eq!(
            targets,
            [
                "gold",
                "mqi5",
                "participation",
                "explanations",
                "value_added"
            ]
        );
        let part = &rep.rows[2];
        assert_eq!(part.n, 0);
        assert_eq!(part.note.as_deref(), Some(INSUFFICIENT_N));
        assert_eq!(rep.rows[1].n, 6);
        assert!(rep.rows[1].value.is_some());
        // 3 teachers, no control: 3 > 2 rows is enough.
        assert_eq!(rep.rows[4].n, 3);
    }

    #[test]
    fn insufficient_overlap() {
        let m = series("tiny", &[("t0:1", 1.0), ("t0:3", 2.0), ("zz:1", 3.0)]);
        let rep = evaluate(&gold(), &[m], &grouping(), PValueMethod::TApprox);
        assert_eq!(rep.rows[0].note.as_deref(), Some(INSUFFICIENT_N));
        assert_eq!(rep.rows[0].n, 2);
    }

    #[test]
    fn constant_measure_is_undefined_not_fatal() {
        let vals: Vec<(&str, f64)> =
            vec![("t0:1", 1.0), ("t0:3", 1.0), ("t1:1", 1.0), ("t1:3", 1.0)];
        let rep = evaluate(
            &gold(),
            &[series("flat", &vals)],
            &grouping(),
            PValueMethod::TApprox,
        );
        assert_eq!(rep.rows[0].note.as_deref(), Some("undefined correlation"));
    }

    #[test]
    fn csv_columns_and_determinism() {
        let g = gold();
        let mut rep = evaluate(
            &g,
            std::slice::from_ref(&g),
            &grouping(),
            PValueMethod::TApprox,
        );
        let irr = IrrResult {
            mean_rho: 0.5,
            per_rater: [("a".to_string(), 0.4), ("b".to_string(), 0.6)]
                .into_iter()
                .collect(),
            lo: 0.4,
            hi: 0.6,
            skipped: vec![],
        };
        rep.rows
            .extend(agreement_rows("UNFILTERED", Some(&irr), None));
        let csv = rep.to_csv_string();
        assert!(csv.starts_with("measure,target,stat,value,p,n,stars\n"));
        assert!(csv.contains("gold,gold,spearman,1,0,18,***\n"));
        assert!(csv.contains("raters,UNFILTERED,irr_max,0.6,,2,\n"));
        assert!(csv.contains("gold,participation,beta,insufficient n,,0,\n"));
        assert_eq!(csv, rep.clone().to_csv_string());
        let text = rep.to_text();
        assert!(text.contains("Spearman correlation with gold"));
        assert!(text.contains("1.000***"));
        assert!(text.contains("Rater agreement"));
    }
}
