//! Statistical evaluation: rank correlation, rater agreement, aggregation,
//! standardized regression and report assembly.

mod agreement;
mod correlation;
mod predictions;
mod regression;
mod report;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use agreement::{fleiss_kappa, leave_out_irr, FleissKappa, IrrResult};
pub use correlation::{
    pearson, rank_average, spearman, spearman_series, spearman_with, CorrelationResult,
    PValueMethod,
};
pub use predictions::{load_predictions, read_predictions, write_predictions, PREDICTIONS_SCHEMA};
pub use regression::{ols_standardized, Control, RegressionResult};
pub use report::{agreement_rows, evaluate, EvaluationReport, Grouping, ReportRow, RowStat};

/// Significance marker: † < 0.1, * < 0.05, ** < 0.01, *** < 0.001.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stars {
    None,
    Dagger,
    One,
    Two,
    Three,
}

impl Stars {
    pub fn from_p(p: f64) -> Stars {
        if p < 0.001 {
            Stars::Three
        } else if p < 0.01 {
            Stars::Two
        } else if p < 0.05 {
            Stars::One
        } else if p < 0.1 {
            Stars::Dagger
        } else {
            Stars::None
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Stars::None => "",
            Stars::Dagger => "†",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        }
    }
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Named per-exchange scores; a missing value is an absent key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSeries {
    pub name: String,
    values: BTreeMap<String, f64>,
}

impl ScoreSeries {
    pub fn new(name: impl Into<String>, values: BTreeMap<String, f64>) -> Result<Self> {
        let name = name.into();
        if let Some((k, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "series {name:?}: non-finite value {v} for {k:?}"
            )));
        }
        Ok(ScoreSeries { name, values })
    }

    pub fn values(&self) -> &BTreeMap<String, f64> {
        &self.values
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.values.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn negated(&self, name: impl Into<String>) -> ScoreSeries {
        ScoreSeries {
            name: name.into(),
            values: self.values.iter().map(|(k, v)| (k.clone(), -v)).collect(),
        }
    }
}

/// Mean of the present values per group. Ids without a group are ignored.
pub fn mean_aggregate(
    series: &ScoreSeries,
    group: &BTreeMap<String, String>,
) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (id, &v) in series.values() {
        if let Some(g) = group.get(id) {
            let e = acc.entry(g.as_str()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(g, (sum, n))| (g.to_string(), sum / n as f64))
        .collect()
}
