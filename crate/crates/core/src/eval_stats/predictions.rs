use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScoreSeries;
use crate::error::{Error, Result};

pub const PREDICTIONS_SCHEMA: &str = "predictions/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    exchange_id: String,
    score: serde_json::Value,
}

pub fn load_predictions(path: &Path) -> Result<ScoreSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(BufReader::new(file), &path.display().to_string())
}

/// Parses a predictions file: a header line, then one row per exchange.
/// Blank lines are ignored.
pub fn read_predictions<R: BufRead>(reader: R, source_name: &str) -> Result<ScoreSeries> {
    let mut name = None;
    let mut values = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        if name.is_none() {
            let h: Header = serde_json::from_str(&line).map_err(|e| {
                Error::parse(source_name, lineno, format!("bad predictions header: {e}"))
            })?;
            if h.schema != PREDICTIONS_SCHEMA {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!(
                        "unsupported schema {:?}, expected {PREDICTIONS_SCHEMA:?}",
                        h.schema
                    ),
                ));
            }
            name = Some(h.name);
            continue;
        }
        let row: Row = serde_json::from_str(&line)
            .map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        let score = row
            .score
            .as_f64()
            .filter(|s| s.is_finite())
            .ok_or_else(|| {
                Error::parse(
                    source_name,
                    lineno,
                    format!("non-numeric score {}", row.score),
                )
            })?;
        if values.insert(row.exchange_id.clone(), score).is_some() {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("duplicate exchange_id {:?}", row.exchange_id),
            ));
        }
    }
    let name = name.ok_or_else(|| Error::parse(source_name, 1, "missing predictions header"))?;
    ScoreSeries::new(name, values)
}

pub fn write_predictions<W: Write>(mut w: W, series: &ScoreSeries) -> Result<()> {
    let header = Header {
        schema: PREDICTIONS_SCHEMA.to_string(),
        name: series.name.clone(),
    };
    let io = |e: std::io::Error| Error::Invalid(format!("writing predictions: {e}"));
    writeln!(
        w,
        "{}",
        serde_json::to_string(&header).expect("header serializes")
    )
    .map_err(io)?;
    for (id, &score) in series.values() {
        let row = Row {
            exchange_id: id.clone(),
            score: serde_json::Value::from(score),
        };
        writeln!(
            w,
            "{}",
            serde_json::to_string(&row).expect("row serializes")
        )
        .map_err(io)?;
    }
    Ok(())
}
