use std::collections::BTreeMap;

use log::warn;

use super::correlation::spearman;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IrrResult {
    pub mean_rho: f64,
    pub per_rater: BTreeMap<String, f64>,
    pub lo: f64,
    pub hi: f64,
    /// Raters left out because they had fewer than 3 overlapping items or a
    /// degenerate correlation.
    pub skipped: Vec<String>,
}

/// Leave-one-rater-out agreement.
///
/// For each rater, Spearman between their z-scores and the mean z-score of
/// the other raters, over the items they share with at least one other rater.
/// `zscores` maps rater → item → z.
pub fn leave_out_irr(zscores: &BTreeMap<String, BTreeMap<String, f64>>) -> Result<IrrResult> {
    if zscores.len() < 2 {
        return Err(Error::Invalid(
            "leave-out agreement needs at least 2 raters".into(),
        ));
    }
    let mut per_rater = BTreeMap::new();
    let mut skipped = Vec::new();
    for (rater, own) in zscores {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (item, &z) in own {
            let others: Vec<f64> = zscores
                .iter()
                .filter(|(r, _)| *r != rater)
                .filter_map(|(_, m)| m.get(item).copied())
                .collect();
            if others.is_empty() {
                continue;
            }
            x.push(z);
            y.push(others.iter().sum::<f64>() / others.len() as f64);
        }
        if x.len() < 3 {
            warn!(
                "rater {rater}: only {} overlapping items, skipped in leave-out agreement",
                x.len()
            );
            skipped.push(rater.clone());
            continue;
        }
        match spearman(&x, &y) {
            Ok(r) => {
                per_rater.insert(rater.clone(), r.rho);
            }
            Err(e) => {
                warn!("rater {rater}: {e}, skipped in leave-out agreement");
                skipped.push(rater.clone());
            }
        }
    }
    if per_rater.is_empty() {
        return Err(Error::Invalid(
            "no rater has enough overlapping items for leave-out agreement".into(),
        ));
    }
    let vals: Vec<f64> = per_rater.values().copied().collect();
    Ok(IrrResult {
        mean_rho: vals.iter().sum::<f64>() / vals.len() as f64,
        lo: vals.iter().copied().fold(f64::INFINITY, f64::min),
        hi: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        per_rater,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleissKappa {
    pub kappa: f64,
    /// Ratings per included item.
    pub raters_per_item: usize,
    pub items: usize,
    pub excluded_items: usize,
}

/// Fleiss' kappa over items rated by the modal number of raters.
///
/// Each inner slice holds the category assigned by each rater to one item.
/// Items with a different number of ratings are excluded (ties in the mode
/// resolve to the larger count).
pub fn fleiss_kappa<C: Ord + Clone>(ratings: &[Vec<C>]) -> Result<FleissKappa> {
    let mut size_freq: BTreeMap<usize, usize> = BTreeMap::new();
    for r in ratings.iter().filter(|r| r.len() >= 2) {
        *size_freq.entry(r.len()).or_default() += 1;
    }
    let m = size_freq
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
        .map(|(&m, _)| m)
        .ok_or_else(|| Error::Invalid("Fleiss kappa needs items with at least 2 ratings".into()))?;

    let items: Vec<&Vec<C>> = ratings.iter().filter(|r| r.len() == m).collect();
    let excluded = ratings.len() - items.len();
    if excluded > 0 {
        warn!("Fleiss kappa: {excluded} items without exactly {m} ratings excluded");
    }

    let mut category_totals: BTreeMap<&C, f64> = BTreeMap::new();
    let mut p_bar = 0.0;
    let mf = m as f64;
    for item in &items {
        let mut counts: BTreeMap<&C, f64> = BTreeMap::new();
        for c in item.iter() {
            *counts.entry(c).or_default() += 1.0;
            *category_totals.entry(c).or_default() += 1.0;
        }
        let sq: f64 = counts.values().map(|n| n * n).sum();
        p_bar += (sq - mf) / (mf * (mf - 1.0));
    }
    let n_items = items.len() as f64;
    p_bar /= n_items;
    let p_e: f64 = category_totals
        .values()
        .map(|t| {
            let p = t / (n_items * mf);
            p * p
        })
        .sum();

    let kappa = if (1.0 - p_e).abs() < 1e-12 {
        if (1.0 - p_bar).abs() < 1e-12 {
            1.0
        } else {
            return Err(Error::Invalid(
                "Fleiss kappa undefined: chance agreement is 1".into(),
            ));
        }
    } else {
        (p_bar - p_e) / (1.0 - p_e)
    };
    Ok(FleissKappa {
        kappa,
        raters_per_item: m,
        items: items.len(),
        excluded_items: excluded,
    })
}
